#pragma once

#include <string>
#include <vector>

#include "crossview/image.hpp"

namespace crossview {

struct Neighbor {
  std::string id;
  double distance = 0.0;  ///< mean absolute byte difference
};

/// The k training images closest to `query` under mean-absolute (L1) pixel
/// distance, ascending; ties broken by id. `ids` and `training` are parallel.
/// `downsample` > 1 shrinks both sides bilinearly by that factor before the
/// distance is computed (the reported distance lives in the shrunken space).
/// Throws EmptySetError on an empty training set and ConfigError when
/// k exceeds the training size.
std::vector<Neighbor> knn_l1(const Image& query, const std::vector<std::string>& ids,
                             const std::vector<Image>& training, int k = 3,
                             int downsample = 1);

}  // namespace crossview
