#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "chmc/ontology.hpp"

namespace chmc_test {

inline std::string source_dir() {
    const char* env = std::getenv("CHMC_SOURCE_DIR");
    return env ? env : ".";
}

inline std::string data_path(const std::string& rel) {
    return (std::filesystem::path(source_dir()) / "data" / rel).string();
}

inline const chmc::LabelOntology& ontology() {
    static chmc::LabelOntology onto = chmc::LabelOntology::load(data_path("ontology.json"));
    return onto;
}

// scratch directory unique per test binary run
inline std::string temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("chmc_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace chmc_test
