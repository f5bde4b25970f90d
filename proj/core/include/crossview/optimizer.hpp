#pragma once

#include <cstdint>
#include <vector>

#include "crossview/layers.hpp"

namespace crossview {

/// Adam over the trainable subset of the given params (buffers are skipped).
/// First/second moments are kept per parameter and serialized by name.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Param<T>*> params, double lr, double beta1 = 0.5, double beta2 = 0.999,
       double eps = 1e-8);

  void step();
  void zero_grad();

  double lr() const { return lr_; }
  std::int64_t t() const { return t_; }
  void set_t(std::int64_t t) { t_ = t; }

  /// Moment tensors aligned with trainable params; exposed for checkpoints.
  struct Slot {
    const std::string* name;
    Tensor<T>* m;
    Tensor<T>* v;
  };
  std::vector<Slot> slots();

 private:
  std::vector<Param<T>*> params_;
  std::vector<Tensor<T>> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace crossview
