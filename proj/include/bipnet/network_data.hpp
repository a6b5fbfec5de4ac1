#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bipnet {

enum class WeightKind { binary, count };

/// Dense m x n edge-weight matrix between actors (rows) and events (columns).
class BipartiteGraph {
public:
    BipartiteGraph(Eigen::MatrixXd weights, std::vector<std::string> actor_labels,
                   std::vector<std::string> event_labels, WeightKind kind);

    /// Unlabelled graph; labels default to "a1".."am" and "e1".."en".
    BipartiteGraph(Eigen::MatrixXd weights, WeightKind kind);

    Eigen::Index actors() const noexcept { return weights_.rows(); }
    Eigen::Index events() const noexcept { return weights_.cols(); }
    const Eigen::MatrixXd& weights() const noexcept { return weights_; }
    double weight(Eigen::Index i, Eigen::Index j) const { return weights_(i, j); }
    const std::vector<std::string>& actor_labels() const noexcept { return actor_labels_; }
    const std::vector<std::string>& event_labels() const noexcept { return event_labels_; }
    WeightKind kind() const noexcept { return kind_; }
    double total_weight() const { return weights_.sum(); }

    bool operator==(const BipartiteGraph& other) const;

private:
    Eigen::MatrixXd weights_;
    std::vector<std::string> actor_labels_;
    std::vector<std::string> event_labels_;
    WeightKind kind_;
};

struct DegreeVector {
    Eigen::VectorXd actor;  // d_i = sum_j x_ij
    Eigen::VectorXd event;  // b_j = sum_i x_ij
};

DegreeVector degrees(const BipartiteGraph& graph);

/// Per-edge covariates z_ij in R^p, stored as p dense m x n layers.
/// Every entry satisfies |z_ijl| <= bound.
class CovariateTensor {
public:
    CovariateTensor(Eigen::Index m, Eigen::Index n, std::vector<Eigen::MatrixXd> layers, double bound);

    /// p = 0: the plain bipartite beta-model.
    static CovariateTensor none(Eigen::Index m, Eigen::Index n);

    Eigen::Index actors() const noexcept { return m_; }
    Eigen::Index events() const noexcept { return n_; }
    Eigen::Index dim() const noexcept { return static_cast<Eigen::Index>(layers_.size()); }
    double bound() const noexcept { return bound_; }
    const Eigen::MatrixXd& layer(Eigen::Index l) const { return layers_.at(static_cast<std::size_t>(l)); }
    const std::vector<Eigen::MatrixXd>& layers() const noexcept { return layers_; }
    Eigen::VectorXd at(Eigen::Index i, Eigen::Index j) const;

    /// sum_l gamma_l * Z_l as an m x n matrix.
    Eigen::MatrixXd contract(const Eigen::VectorXd& gamma) const;

private:
    Eigen::Index m_;
    Eigen::Index n_;
    std::vector<Eigen::MatrixXd> layers_;
    double bound_;
};

/// Categorical attributes keyed by node id, read from a delimited table with a
/// header row. The first column holds the id.
class NodeAttributeTable {
public:
    NodeAttributeTable() = default;
    NodeAttributeTable(std::vector<std::string> columns, std::map<std::string, std::vector<std::string>> rows);

    const std::vector<std::string>& columns() const noexcept { return columns_; }
    bool contains(const std::string& id) const { return rows_.count(id) != 0; }
    std::size_t size() const noexcept { return rows_.size(); }
    const std::string& value(const std::string& id, const std::string& column) const;

    /// ValidationError unless every label has a row.
    void require_covers(const std::vector<std::string>& labels, const std::string& side) const;

private:
    std::vector<std::string> columns_;
    std::map<std::string, std::vector<std::string>> rows_;
};

NodeAttributeTable parse_attribute_table(std::istream& in, char delimiter = '\t');
NodeAttributeTable load_attribute_table(const std::filesystem::path& path, char delimiter = '\t');

enum class DuplicatePolicy { error, sum };

struct EdgeListOptions {
    char delimiter = '\t';
    WeightKind kind = WeightKind::binary;
    // Column holding the weight; absent means every row is an edge of weight 1.
    std::optional<std::size_t> weight_column = 2;
    // Treat every row as an edge of weight 1 whatever the weight column says
    // (ratings files such as MovieLens u.data).
    bool binarize = false;
    DuplicatePolicy duplicates = DuplicatePolicy::error;
    // Strict: any malformed row is fatal. Permissive: malformed rows are skipped.
    bool strict = true;
};

BipartiteGraph parse_edge_list(std::istream& in, const EdgeListOptions& options);
BipartiteGraph load_edge_list(const std::filesystem::path& path, const EdgeListOptions& options);

/// Writes (actor, event, weight) rows such that parsing them back with
/// weight_column = 2 reproduces the graph, label order included. Zero-weight
/// rows are emitted only where needed to pin first-appearance order.
void write_edge_list(const BipartiteGraph& graph, std::ostream& out, char delimiter = '\t');

enum class FilterMode { once, iterate };

/// Keeps actors with d_i > min_degree and events with b_j > min_degree.
/// `once` evaluates both thresholds on the input graph's degrees and takes
/// the induced subgraph, so survivors may end up with degree <= min_degree.
/// `iterate` repeats until every remaining degree exceeds min_degree.
BipartiteGraph filter_by_degree(const BipartiteGraph& graph, double min_degree, FilterMode mode = FilterMode::once);

/// One attribute-match covariate: z_ij = 1 when some value of event j's
/// attribute maps to the group named by actor i's class.
struct MatchMapping {
    std::string name;
    std::string actor_attribute;
    std::string event_attribute;
    std::map<std::string, std::string> event_value_groups;
    // Optional numeric binning of the actor attribute: value <= edges[k]
    // gets labels[k], above the last edge gets labels.back().
    std::vector<double> actor_bin_edges;
    std::vector<std::string> actor_bin_labels;
    char value_separator = '|';
};

struct MappingSpec {
    std::vector<MatchMapping> mappings;
};

MappingSpec parse_mapping_spec(const std::string& json_text);
MappingSpec load_mapping_spec(const std::filesystem::path& path);

CovariateTensor build_match_covariates(const BipartiteGraph& graph, const NodeAttributeTable& actor_attrs,
                                       const NodeAttributeTable& event_attrs, const MappingSpec& spec);

} // namespace bipnet
