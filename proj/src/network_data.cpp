#include "bipnet/network_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "bipnet/errors.hpp"

namespace bipnet {

namespace {

std::vector<std::string> default_labels(Eigen::Index count, const char* prefix) {
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(count));
    for (Eigen::Index k = 0; k < count; ++k) labels.push_back(prefix + std::to_string(k + 1));
    return labels;
}

void require_unique(const std::vector<std::string>& labels, const char* side) {
    std::set<std::string> seen;
    for (const auto& label : labels) {
        if (!seen.insert(label).second) {
            throw ValidationError(std::string("duplicate ") + side + " label '" + label + "'");
        }
    }
}

std::vector<std::string> split(const std::string& line, char delimiter) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream stream(line);
    while (std::getline(stream, field, delimiter)) fields.push_back(field);
    if (!line.empty() && line.back() == delimiter) fields.emplace_back();
    return fields;
}

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::optional<double> parse_number(const std::string& text) {
    const std::string t = trim(text);
    if (t.empty()) return std::nullopt;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
    if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
    return value;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return in;
}

} // namespace

BipartiteGraph::BipartiteGraph(Eigen::MatrixXd weights, std::vector<std::string> actor_labels,
                               std::vector<std::string> event_labels, WeightKind kind)
    : weights_(std::move(weights)),
      actor_labels_(std::move(actor_labels)),
      event_labels_(std::move(event_labels)),
      kind_(kind) {
    if (weights_.rows() < 1 || weights_.cols() < 1) {
        throw ValidationError("graph needs at least one actor and one event");
    }
    if (static_cast<Eigen::Index>(actor_labels_.size()) != weights_.rows() ||
        static_cast<Eigen::Index>(event_labels_.size()) != weights_.cols()) {
        throw ValidationError("label count does not match weight matrix shape");
    }
    require_unique(actor_labels_, "actor");
    require_unique(event_labels_, "event");
    for (Eigen::Index j = 0; j < weights_.cols(); ++j) {
        for (Eigen::Index i = 0; i < weights_.rows(); ++i) {
            const double x = weights_(i, j);
            if (!std::isfinite(x) || x < 0.0) {
                throw ValidationError("edge weights must be finite and nonnegative");
            }
            if (kind_ == WeightKind::binary && x != 0.0 && x != 1.0) {
                throw ValidationError("binary graph contains weight " + std::to_string(x));
            }
            if (kind_ == WeightKind::count && std::floor(x) != x) {
                throw ValidationError("count graph contains non-integer weight " + std::to_string(x));
            }
        }
    }
}

BipartiteGraph::BipartiteGraph(Eigen::MatrixXd weights, WeightKind kind)
    : BipartiteGraph(weights, default_labels(weights.rows(), "a"), default_labels(weights.cols(), "e"), kind) {}

bool BipartiteGraph::operator==(const BipartiteGraph& other) const {
    return kind_ == other.kind_ && actor_labels_ == other.actor_labels_ && event_labels_ == other.event_labels_ &&
           weights_.rows() == other.weights_.rows() && weights_.cols() == other.weights_.cols() &&
           weights_ == other.weights_;
}

DegreeVector degrees(const BipartiteGraph& graph) {
    return {graph.weights().rowwise().sum(), graph.weights().colwise().sum().transpose()};
}

CovariateTensor::CovariateTensor(Eigen::Index m, Eigen::Index n, std::vector<Eigen::MatrixXd> layers, double bound)
    : m_(m), n_(n), layers_(std::move(layers)), bound_(bound) {
    if (m_ < 1 || n_ < 1) throw ValidationError("covariate tensor needs positive dimensions");
    if (!(bound_ >= 0.0) || !std::isfinite(bound_)) throw ValidationError("covariate bound must be finite");
    for (const auto& layer : layers_) {
        if (layer.rows() != m_ || layer.cols() != n_) {
            throw ValidationError("covariate layer shape does not match graph");
        }
        if (!layer.allFinite()) throw ValidationError("covariates must be finite");
        if (layer.size() > 0 && layer.cwiseAbs().maxCoeff() > bound_) {
            throw ValidationError("covariate exceeds declared bound " + std::to_string(bound_));
        }
    }
}

CovariateTensor CovariateTensor::none(Eigen::Index m, Eigen::Index n) { return CovariateTensor(m, n, {}, 0.0); }

Eigen::VectorXd CovariateTensor::at(Eigen::Index i, Eigen::Index j) const {
    Eigen::VectorXd z(dim());
    for (Eigen::Index l = 0; l < dim(); ++l) z(l) = layers_[static_cast<std::size_t>(l)](i, j);
    return z;
}

Eigen::MatrixXd CovariateTensor::contract(const Eigen::VectorXd& gamma) const {
    if (gamma.size() != dim()) throw ValidationError("gamma dimension does not match covariates");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m_, n_);
    for (Eigen::Index l = 0; l < dim(); ++l) out.noalias() += gamma(l) * layers_[static_cast<std::size_t>(l)];
    return out;
}

NodeAttributeTable::NodeAttributeTable(std::vector<std::string> columns,
                                       std::map<std::string, std::vector<std::string>> rows)
    : columns_(std::move(columns)), rows_(std::move(rows)) {}

const std::string& NodeAttributeTable::value(const std::string& id, const std::string& column) const {
    const auto row = rows_.find(id);
    if (row == rows_.end()) throw ValidationError("no attributes for node '" + id + "'");
    const auto col = std::find(columns_.begin(), columns_.end(), column);
    if (col == columns_.end() || col == columns_.begin()) {
        throw ConfigError("attribute table has no column '" + column + "'");
    }
    return row->second.at(static_cast<std::size_t>(col - columns_.begin() - 1));
}

void NodeAttributeTable::require_covers(const std::vector<std::string>& labels, const std::string& side) const {
    for (const auto& label : labels) {
        if (!contains(label)) throw ValidationError(side + " '" + label + "' missing from attribute table");
    }
}

NodeAttributeTable parse_attribute_table(std::istream& in, char delimiter) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        header = split(line, delimiter);
        for (auto& h : header) h = trim(h);
    }
    if (header.size() < 2) throw ParseError("attribute table needs a header with an id and one attribute", line_no);

    std::map<std::string, std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split(line, delimiter);
        if (fields.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        for (auto& f : fields) f = trim(f);
        const std::string id = fields.front();
        fields.erase(fields.begin());
        if (!rows.emplace(id, std::move(fields)).second) {
            throw ParseError("node '" + id + "' listed twice", line_no);
        }
    }
    return NodeAttributeTable(std::move(header), std::move(rows));
}

NodeAttributeTable load_attribute_table(const std::filesystem::path& path, char delimiter) {
    auto in = open_input(path);
    return parse_attribute_table(in, delimiter);
}

BipartiteGraph parse_edge_list(std::istream& in, const EdgeListOptions& options) {
    struct Row {
        std::size_t actor;
        std::size_t event;
        double weight;
    };
    std::vector<std::string> actors;
    std::vector<std::string> events;
    std::unordered_map<std::string, std::size_t> actor_index;
    std::unordered_map<std::string, std::size_t> event_index;
    std::vector<Row> rows;

    const std::size_t max_fields =
        options.binarize ? std::numeric_limits<std::size_t>::max()
                         : (options.weight_column ? std::max<std::size_t>(*options.weight_column + 1, 2) : 2);

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string trimmed = trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;

        auto fields = split(line, options.delimiter);
        for (auto& f : fields) f = trim(f);
        const auto malformed = [&](const std::string& why) {
            if (options.strict) throw ParseError(why, line_no);
        };
        if (fields.size() < 2 || fields[0].empty() || fields[1].empty()) {
            malformed("expected actor and event ids");
            continue;
        }
        if (fields.size() > max_fields) {
            malformed("too many fields (" + std::to_string(fields.size()) + ")");
            continue;
        }

        double weight = 1.0;
        if (!options.binarize && options.weight_column && *options.weight_column < fields.size()) {
            const auto parsed = parse_number(fields[*options.weight_column]);
            if (!parsed || !std::isfinite(*parsed) || *parsed < 0.0) {
                malformed("weight '" + fields[*options.weight_column] + "' is not a nonnegative number");
                continue;
            }
            weight = *parsed;
            if (options.kind == WeightKind::binary && weight != 0.0 && weight != 1.0) {
                malformed("binary edge weight must be 0 or 1");
                continue;
            }
            if (options.kind == WeightKind::count && std::floor(weight) != weight) {
                malformed("count edge weight must be an integer");
                continue;
            }
        }

        const auto intern = [](const std::string& id, std::vector<std::string>& labels,
                               std::unordered_map<std::string, std::size_t>& index) {
            const auto [it, inserted] = index.emplace(id, labels.size());
            if (inserted) labels.push_back(id);
            return it->second;
        };
        const std::size_t a = intern(fields[0], actors, actor_index);
        const std::size_t e = intern(fields[1], events, event_index);
        rows.push_back({a, e, weight});
    }
    if (rows.empty()) throw ParseError("no edges");

    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(actors.size()),
                                                    static_cast<Eigen::Index>(events.size()));
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> seen =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(weights.rows(), weights.cols(), false);
    for (const auto& row : rows) {
        const auto i = static_cast<Eigen::Index>(row.actor);
        const auto j = static_cast<Eigen::Index>(row.event);
        if (seen(i, j)) {
            if (options.kind == WeightKind::binary || options.duplicates == DuplicatePolicy::error) {
                throw ValidationError("duplicate edge (" + actors[row.actor] + ", " + events[row.event] + ")");
            }
        }
        seen(i, j) = true;
        weights(i, j) += row.weight;
    }
    return BipartiteGraph(std::move(weights), std::move(actors), std::move(events), options.kind);
}

BipartiteGraph load_edge_list(const std::filesystem::path& path, const EdgeListOptions& options) {
    auto in = open_input(path);
    return parse_edge_list(in, options);
}

void write_edge_list(const BipartiteGraph& graph, std::ostream& out, char delimiter) {
    const Eigen::Index m = graph.actors();
    const Eigen::Index n = graph.events();
    const auto& x = graph.weights();
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> written =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(m, n, false);
    const auto emit = [&](Eigen::Index i, Eigen::Index j) {
        out << graph.actor_labels()[static_cast<std::size_t>(i)] << delimiter
            << graph.event_labels()[static_cast<std::size_t>(j)] << delimiter << static_cast<long long>(x(i, j))
            << '\n';
        written(i, j) = true;
    };

    // Introduce actors in index order; each first row may only reference an
    // event that has already appeared or is the next one due.
    Eigen::Index next_event = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
        Eigen::Index pick = -1;
        const Eigen::Index limit = std::min(next_event, n - 1);
        for (Eigen::Index j = 0; j <= limit; ++j) {
            if (x(i, j) != 0.0) {
                pick = j;
                break;
            }
        }
        if (pick < 0) pick = limit;  // zero-weight placeholder
        emit(i, pick);
        if (pick == next_event) ++next_event;
    }
    for (Eigen::Index j = next_event; j < n; ++j) {
        Eigen::Index pick = 0;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (x(i, j) != 0.0) {
                pick = i;
                break;
            }
        }
        emit(pick, j);
    }
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (x(i, j) != 0.0 && !written(i, j)) emit(i, j);
        }
    }
}

BipartiteGraph filter_by_degree(const BipartiteGraph& graph, double min_degree, FilterMode mode) {
    if (!(min_degree >= 0.0)) throw ValidationError("min_degree must be nonnegative");

    std::vector<Eigen::Index> keep_actors(static_cast<std::size_t>(graph.actors()));
    std::vector<Eigen::Index> keep_events(static_cast<std::size_t>(graph.events()));
    for (std::size_t k = 0; k < keep_actors.size(); ++k) keep_actors[k] = static_cast<Eigen::Index>(k);
    for (std::size_t k = 0; k < keep_events.size(); ++k) keep_events[k] = static_cast<Eigen::Index>(k);

    for (;;) {
        std::vector<Eigen::Index> next_actors;
        std::vector<Eigen::Index> next_events;
        for (const auto i : keep_actors) {
            double d = 0.0;
            for (const auto j : keep_events) d += graph.weight(i, j);
            if (d > min_degree) next_actors.push_back(i);
        }
        for (const auto j : keep_events) {
            double b = 0.0;
            for (const auto i : keep_actors) b += graph.weight(i, j);
            if (b > min_degree) next_events.push_back(j);
        }
        const bool stable = next_actors.size() == keep_actors.size() && next_events.size() == keep_events.size();
        keep_actors = std::move(next_actors);
        keep_events = std::move(next_events);
        if (keep_actors.empty() || keep_events.empty()) throw ValidationError("filter removed all nodes");
        if (mode == FilterMode::once || stable) break;
    }

    Eigen::MatrixXd sub(static_cast<Eigen::Index>(keep_actors.size()), static_cast<Eigen::Index>(keep_events.size()));
    std::vector<std::string> actor_labels;
    std::vector<std::string> event_labels;
    for (std::size_t a = 0; a < keep_actors.size(); ++a) {
        actor_labels.push_back(graph.actor_labels()[static_cast<std::size_t>(keep_actors[a])]);
        for (std::size_t e = 0; e < keep_events.size(); ++e) {
            sub(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(e)) =
                graph.weight(keep_actors[a], keep_events[e]);
        }
    }
    for (const auto j : keep_events) event_labels.push_back(graph.event_labels()[static_cast<std::size_t>(j)]);
    return BipartiteGraph(std::move(sub), std::move(actor_labels), std::move(event_labels), graph.kind());
}

MappingSpec parse_mapping_spec(const std::string& json_text) {
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("mapping spec is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("mappings") || !doc["mappings"].is_array()) {
        throw ConfigError("mapping spec needs a 'mappings' array");
    }
    MappingSpec spec;
    try {
        for (const auto& entry : doc["mappings"]) {
            MatchMapping mapping;
            mapping.name = entry.value("name", "z" + std::to_string(spec.mappings.size() + 1));
            mapping.actor_attribute = entry.at("actor_attribute").get<std::string>();
            mapping.event_attribute = entry.at("event_attribute").get<std::string>();
            mapping.event_value_groups = entry.at("event_value_groups").get<std::map<std::string, std::string>>();
            if (entry.contains("actor_bins")) {
                const auto& bins = entry["actor_bins"];
                mapping.actor_bin_edges = bins.at("edges").get<std::vector<double>>();
                mapping.actor_bin_labels = bins.at("labels").get<std::vector<std::string>>();
                if (mapping.actor_bin_labels.size() != mapping.actor_bin_edges.size() + 1) {
                    throw ConfigError("mapping '" + mapping.name + "': actor_bins needs one more label than edges");
                }
                if (!std::is_sorted(mapping.actor_bin_edges.begin(), mapping.actor_bin_edges.end())) {
                    throw ConfigError("mapping '" + mapping.name + "': bin edges must be increasing");
                }
            }
            if (entry.contains("value_separator")) {
                const auto sep = entry["value_separator"].get<std::string>();
                if (sep.size() != 1) throw ConfigError("value_separator must be a single character");
                mapping.value_separator = sep.front();
            }
            spec.mappings.push_back(std::move(mapping));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed mapping spec: ") + e.what());
    }
    return spec;
}

MappingSpec load_mapping_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mapping spec " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_mapping_spec(buffer.str());
}

namespace {

std::string actor_class(const MatchMapping& mapping, const std::string& raw) {
    if (mapping.actor_bin_edges.empty()) return raw;
    const auto value = parse_number(raw);
    if (!value) {
        throw ConfigError("mapping '" + mapping.name + "': actor value '" + raw + "' is not numeric");
    }
    for (std::size_t k = 0; k < mapping.actor_bin_edges.size(); ++k) {
        if (*value <= mapping.actor_bin_edges[k]) return mapping.actor_bin_labels[k];
    }
    return mapping.actor_bin_labels.back();
}

} // namespace

CovariateTensor build_match_covariates(const BipartiteGraph& graph, const NodeAttributeTable& actor_attrs,
                                       const NodeAttributeTable& event_attrs, const MappingSpec& spec) {
    actor_attrs.require_covers(graph.actor_labels(), "actor");
    event_attrs.require_covers(graph.event_labels(), "event");

    const Eigen::Index m = graph.actors();
    const Eigen::Index n = graph.events();
    std::vector<Eigen::MatrixXd> layers;
    for (const auto& mapping : spec.mappings) {
        std::vector<std::set<std::string>> event_groups(static_cast<std::size_t>(n));
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& label = graph.event_labels()[static_cast<std::size_t>(j)];
            const auto values = split(event_attrs.value(label, mapping.event_attribute), mapping.value_separator);
            for (const auto& raw : values) {
                const std::string value = trim(raw);
                if (value.empty()) continue;
                const auto group = mapping.event_value_groups.find(value);
                if (group == mapping.event_value_groups.end()) {
                    throw ConfigError("mapping '" + mapping.name + "' has no group for event value '" + value + "'");
                }
                event_groups[static_cast<std::size_t>(j)].insert(group->second);
            }
        }
        Eigen::MatrixXd z = Eigen::MatrixXd::Zero(m, n);
        for (Eigen::Index i = 0; i < m; ++i) {
            const auto& label = graph.actor_labels()[static_cast<std::size_t>(i)];
            const std::string cls = actor_class(mapping, actor_attrs.value(label, mapping.actor_attribute));
            for (Eigen::Index j = 0; j < n; ++j) {
                if (event_groups[static_cast<std::size_t>(j)].count(cls)) z(i, j) = 1.0;
            }
        }
        layers.push_back(std::move(z));
    }
    return CovariateTensor(m, n, std::move(layers), 1.0);
}

} // namespace bipnet
