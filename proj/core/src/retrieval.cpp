#include "crossview/retrieval.hpp"

#include <algorithm>

#include "crossview/errors.hpp"
#include "crossview/metrics.hpp"

namespace crossview {

std::vector<Neighbor> knn_l1(const Image& query, const std::vector<std::string>& ids,
                             const std::vector<Image>& training, int k, int downsample) {
  if (training.empty()) throw EmptySetError("knn_l1: empty training set");
  if (ids.size() != training.size()) {
    throw ShapeError("knn_l1: ids and training images are not parallel");
  }
  if (k < 1 || static_cast<std::size_t>(k) > training.size()) {
    throw ConfigError("knn_l1: k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(training.size()) + "]");
  }
  if (downsample < 1) throw ConfigError("knn_l1: downsample factor must be >= 1");

  const auto shrink = [&](const Image& img) {
    if (downsample == 1) return img;
    return resize_bilinear(img, std::max(1, img.height / downsample),
                           std::max(1, img.width / downsample));
  };
  const Image q = shrink(query);

  std::vector<Neighbor> all;
  all.reserve(training.size());
  for (std::size_t i = 0; i < training.size(); ++i) {
    all.push_back({ids[i], mean_abs_diff(q, shrink(training[i]))});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.id < b.id;
  });
  all.resize(static_cast<std::size_t>(k));
  return all;
}

}  // namespace crossview
