#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace bipnet {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,       // bad flags, config, parse or validation failures
    kExitNonexistence = 3, // no finite root, or the iteration cap was hit
    kExitIllPosed = 4,     // H singular or indefinite
    kExitInternal = 5,
};

/// Runs the command line `args` (args[0] is the program name). Options not
/// given on the command line fall back to BIPNET_<FLAG> environment variables.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

} // namespace bipnet
