#include "mdlab/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace mdlab {

namespace {

nlohmann::json to_json(const std::map<std::string, std::string>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

std::map<std::string, std::string> from_json(const nlohmann::json& j, const char* section) {
    std::map<std::string, std::string> m;
    if (!j.contains(section)) return m;
    for (const auto& [k, v] : j.at(section).items()) {
        std::string path = v.get<std::string>();
        if (!std::filesystem::exists(path))
            throw std::runtime_error(std::string("manifest: missing file for ") + section + "/" + k +
                                     ": " + path);
        m[k] = path;
    }
    return m;
}

}  // namespace

void ExperimentManifest::save(const std::string& path) const {
    // stage tags are map keys, so duplicates cannot arise
    nlohmann::json j;
    j["checkpoints"] = to_json(checkpoints);
    j["datasets"] = to_json(datasets);
    j["templates"] = to_json(templates);
    j["reports"] = to_json(reports);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    out << j.dump(2) << "\n";
}

ExperimentManifest ExperimentManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("manifest: cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    ExperimentManifest m;
    m.checkpoints = from_json(j, "checkpoints");
    m.datasets = from_json(j, "datasets");
    m.templates = from_json(j, "templates");
    m.reports = from_json(j, "reports");
    return m;
}

}  // namespace mdlab
