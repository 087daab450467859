#pragma once

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>

#include "pgflow/core_problem.hpp"

namespace testing {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline pgflow::Vec vec(double a) {
  pgflow::Vec v(1);
  v[0] = a;
  return v;
}

inline pgflow::Vec vec(double a, double b) {
  pgflow::Vec v(2);
  v << a, b;
  return v;
}

inline pgflow::Mat mat(double a) { return pgflow::Mat::Constant(1, 1, a); }

/// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pgflow_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testing
