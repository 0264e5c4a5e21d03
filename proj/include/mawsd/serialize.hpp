#ifndef MAWSD_SERIALIZE_HPP
#define MAWSD_SERIALIZE_HPP

#include "mawsd/grad_check.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace mawsd {

inline constexpr int kParamFormatVersion = 1;

/// {"format_version": 1, "tensors": {name: {"shape": [...], "data": [...]}}}
/// Doubles are written in shortest round-trip form, so save -> load is exact.
nlohmann::json params_to_json(const NamedTensors& params);
/// Loaded tensors are leaves with requires_grad set.
NamedTensors params_from_json(const nlohmann::json& doc);

void save_params(const std::filesystem::path& path, const NamedTensors& params);
NamedTensors load_params(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);
nlohmann::json read_json(const std::filesystem::path& path);

} // namespace mawsd

#endif // MAWSD_SERIALIZE_HPP
