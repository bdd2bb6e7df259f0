#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "sake/rng.hpp"
#include "sake/tensor.hpp"

namespace testing {

inline sake::Tensor<double> random_tensor(sake::Shape shape, sake::Rng& rng, double sd = 1.0) {
  sake::Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = rng.normal(0.0, sd);
  return t;
}

// Entries bounded away from zero so relu kinks stay out of finite-difference reach.
inline sake::Tensor<double> random_offzero(sake::Shape shape, sake::Rng& rng) {
  sake::Tensor<double> t(std::move(shape));
  for (double& v : t.values()) {
    const double m = rng.uniform(0.1, 1.5);
    v = rng.bernoulli(0.5) ? m : -m;
  }
  return t;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("sake_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
