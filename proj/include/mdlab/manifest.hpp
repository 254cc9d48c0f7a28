#pragma once

#include <map>
#include <string>

namespace mdlab {

// Index of a training run's artifacts: stage-tagged checkpoints plus the
// datasets, templates, and reports involved. Loading validates that every
// referenced file still exists.
struct ExperimentManifest {
    std::map<std::string, std::string> checkpoints;  // stage tag -> path
    std::map<std::string, std::string> datasets;
    std::map<std::string, std::string> templates;
    std::map<std::string, std::string> reports;

    void save(const std::string& path) const;
    static ExperimentManifest load(const std::string& path);
};

}  // namespace mdlab
