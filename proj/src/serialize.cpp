#include "mawsd/serialize.hpp"

#include "mawsd/errors.hpp"

#include <fstream>
#include <sstream>

namespace mawsd {

nlohmann::json params_to_json(const NamedTensors& params)
{
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, t] : params) {
        const Array& v = t.value();
        tensors[name] = {{"shape", t.shape()}, {"data", std::vector<double>(v.data(), v.data() + v.size())}};
    }
    return {{"format_version", kParamFormatVersion}, {"tensors", std::move(tensors)}};
}

NamedTensors params_from_json(const nlohmann::json& doc)
{
    if (!doc.is_object() || !doc.contains("format_version"))
        throw DataError("parameter file lacks a format_version field");
    const int version = doc.at("format_version").get<int>();
    if (version != kParamFormatVersion)
        throw DataError("unsupported parameter format_version " + std::to_string(version));
    NamedTensors out;
    try {
        for (const auto& [name, entry] : doc.at("tensors").items()) {
            Shape shape = entry.at("shape").get<Shape>();
            auto data = entry.at("data").get<std::vector<double>>();
            if (shape_size(shape) != static_cast<Index>(data.size()))
                throw DataError("parameter '" + name + "': shape " + shape_string(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
            Array a = Eigen::Map<const Array>(data.data(), static_cast<Index>(data.size()));
            out.emplace_back(name, Tensor::from(std::move(shape), std::move(a), true));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed parameter file: ") + e.what());
    }
    return out;
}

void save_params(const std::filesystem::path& path, const NamedTensors& params)
{
    write_file_atomic(path, params_to_json(params).dump());
}

NamedTensors load_params(const std::filesystem::path& path) { return params_from_json(read_json(path)); }

void write_file_atomic(const std::filesystem::path& path, const std::string& contents)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot write " + tmp.string());
        os << contents;
        if (!os) throw DataError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const std::filesystem::path& path)
{
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

} // namespace mawsd
