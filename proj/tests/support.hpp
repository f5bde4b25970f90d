#pragma once

// Shared fixtures for the test binaries: scratch directories, random image /
// tensor builders, and finite-difference helpers. Test-only code; nothing
// here ships in the library.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "crossview/image.hpp"
#include "crossview/layers.hpp"
#include "crossview/tensor.hpp"

namespace testsupport {

/// Unique scratch directory, recursively removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "crossview_test") {
    auto base = std::filesystem::temp_directory_path();
    std::random_device rd;
    for (int attempt = 0; attempt < 64; ++attempt) {
      std::ostringstream name;
      name << tag << "_" << std::hex << rd() << rd();
      auto candidate = base / name.str();
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("could not create scratch directory");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

/// |a - b| <= tol * max(1, |a|, |b|): relative with an absolute floor.
inline bool close_rel(double a, double b, double tol) {
  double scale = std::max({1.0, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) <= tol * scale;
}

inline crossview::Image random_byte_image(std::mt19937_64& rng, int h, int w, int c = 3) {
  crossview::Image img(h, w, c, crossview::PixelRange::Byte);
  std::uniform_int_distribution<int> dist(0, 255);
  for (auto& v : img.data) v = static_cast<float>(dist(rng));
  return img;
}

inline crossview::SegMap random_seg(std::mt19937_64& rng, int h, int w, int n_classes) {
  crossview::SegMap m(h, w);
  std::uniform_int_distribution<int> dist(0, n_classes - 1);
  for (auto& v : m.labels) v = static_cast<std::uint8_t>(dist(rng));
  return m;
}

/// Random probability matrix: each row positive and normalized to sum 1.
inline crossview::Tensor<double> random_pred_matrix(std::mt19937_64& rng, std::int64_t rows,
                                                    std::int64_t cols, double sharpness = 1.0) {
  crossview::Tensor<double> preds({rows, cols});
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (std::int64_t i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) {
      double v = std::pow(dist(rng) + 1e-9, sharpness);
      preds[i * cols + j] = v;
      sum += v;
    }
    for (std::int64_t j = 0; j < cols; ++j) preds[i * cols + j] /= sum;
  }
  return preds;
}

/// Central finite difference of a scalar function at one coordinate.
inline double fd_slope(const std::function<double()>& loss, double* coord, double h) {
  const double saved = *coord;
  *coord = saved + h;
  const double up = loss();
  *coord = saved - h;
  const double down = loss();
  *coord = saved;
  return (up - down) / (2.0 * h);
}

/// Spread-out sample of flat indices covering both ends of a tensor.
inline std::vector<std::int64_t> spread_indices(std::int64_t numel, int count) {
  std::vector<std::int64_t> out;
  if (numel <= count) {
    for (std::int64_t i = 0; i < numel; ++i) out.push_back(i);
    return out;
  }
  for (int i = 0; i < count; ++i) out.push_back(i * (numel - 1) / (count - 1));
  return out;
}

}  // namespace testsupport
