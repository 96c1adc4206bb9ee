#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "rirl/dataset.hpp"

namespace test_support {

/// Fresh empty directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("rirl_" + tag + "_" + std::to_string(rd()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

/// Path of a file under tests/golden. RIRL_GOLDEN_DIR overrides the build-time location.
inline std::string golden(const std::string& name) {
  const char* env = std::getenv("RIRL_GOLDEN_DIR");
  return (std::filesystem::path(env ? env : RIRL_GOLDEN_DIR_DEFAULT) / name).string();
}

inline rirl::data::DagSpec chain_spec(int dim = 2) {
  rirl::data::DagSpec spec;
  spec.nodes = {{"A", dim, 1.0, 1.0}, {"B", dim, 1.0, 1.0}, {"C", dim, 1.0, 1.0}};
  spec.edges = {{"A", "B", 1, 1, 3.0}, {"B", "C", 1, 1, 3.0}};
  return spec;
}

}  // namespace test_support
