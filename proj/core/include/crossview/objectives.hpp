#pragma once

#include <string>

#include "crossview/tensor.hpp"

namespace crossview {

/// Scores are clamped to [kScoreClamp, 1-kScoreClamp] before any log.
constexpr double kScoreClamp = 1e-7;

/// Per-step loss breakdown; one JSON-lines record in the run log.
/// total_g is the lambda-weighted sum for the active architecture.
struct LossReport {
  double d_loss = 0.0;
  double g_gan = 0.0;
  double g_l1_image = 0.0;
  double g_l1_seg = 0.0;
  double d2_loss = 0.0;
  double g2_gan = 0.0;
  double g2_l1_seg = 0.0;
  double total_g = 0.0;
  double lambda = 100.0;

  std::string to_json() const;
};

/// Binary cross-entropy of one clamped score against a target.
double bce(double score, double target);

/// Scalar forms (batch size 1 convenience).
double gan_loss_discriminator(double real_score, double fake_score, double real_label = 0.9);
double gan_loss_generator(double fake_score, bool non_saturating = true);

/// Batch forms: mean over the batch; optional gradients w.r.t. the raw
/// (unclamped) scores are written when the out pointers are given.
template <typename T>
double gan_loss_discriminator(const Tensor<T>& real_scores, const Tensor<T>& fake_scores,
                              double real_label, Tensor<T>* d_real = nullptr,
                              Tensor<T>* d_fake = nullptr);
template <typename T>
double gan_loss_generator(const Tensor<T>& fake_scores, bool non_saturating = true,
                          Tensor<T>* d_fake = nullptr);

/// Mean absolute difference over all entries; optional gradient w.r.t. a.
template <typename T>
double l1_loss(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>* d_a = nullptr);

/// Raw per-term numbers an architecture's step produced.
struct LossComponents {
  double d_loss = 0.0;
  double g_gan = 0.0;
  double g_l1_image = 0.0;
  double g_l1_seg = 0.0;
  double d2_loss = 0.0;
  double g2_gan = 0.0;
  double g2_l1_seg = 0.0;
};

LossReport objective_baseline(const LossComponents& parts, double lambda = 100.0);
LossReport objective_fork(const LossComponents& parts, double lambda = 100.0);
LossReport objective_xseq(const LossComponents& parts, double lambda = 100.0);

}  // namespace crossview
