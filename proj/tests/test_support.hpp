#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tiltdid/data.hpp"

namespace test_support {

inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "tiltdid_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

inline std::filesystem::path write_text(const std::string& name, const std::string& text) {
  auto path = scratch(name);
  std::ofstream(path, std::ios::binary) << text;
  return path;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Noise-free design: dY = 0.5 D for treated, 0 for untreated; doses spread
// evenly over (0,1]; p covariates uniform on (0,1) but irrelevant.
inline tiltdid::PanelDataset linear_dose_data(std::size_t n, std::size_t p, unsigned seed = 3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  tiltdid::RowMatrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  std::vector<double> y0(n, 0.0), y1(n), a(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = u(rng);
    a[i] = i % 3 == 0 ? 0.0 : (static_cast<double>(i % 97) + 0.5) / 97.0;
    y1[i] = 0.5 * a[i];
  }
  return {y0, y1, a, x};
}

}  // namespace test_support
