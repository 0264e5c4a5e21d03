#ifndef MAWSD_CLI_HPP
#define MAWSD_CLI_HPP

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace mawsd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Every config key with its default: architecture, training and data paths.
nlohmann::json default_config();

/// Layers the config file (may be empty) and `key=value` overrides over the
/// defaults. Values are typed by the default's JSON type. Throws ConfigError
/// naming the unknown key, bad value or file.
nlohmann::json resolve_config(const std::string& config_path, const std::vector<std::string>& overrides);

/// Entry point behind the `mawsd` binary; args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace mawsd::cli

#endif // MAWSD_CLI_HPP
