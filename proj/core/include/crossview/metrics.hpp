#pragma once

#include <string>
#include <utility>
#include <vector>

#include "crossview/image.hpp"
#include "crossview/tensor.hpp"

namespace crossview {

/// Per-image class distributions, one row per image: shape (n_images, n_classes).
using PredMatrix = Tensor<double>;

/// Validates the classifier-output contract: 2-D, nonnegative entries, every
/// row summing to 1 within 1e-6. Throws ShapeError / RangeError.
void check_pred_matrix(const PredMatrix& preds);

/// exp(mean over rows of KL(row || column-mean marginal)). The mean KL is the
/// mutual information between image and predicted class, so the score is
/// provably in [1, n_classes]; we clamp to that interval to keep the bound
/// exact under floating-point noise. Throws EmptySetError on zero rows.
double inception_score(const PredMatrix& preds);

/// Keeps the k largest entries (ties at the cutoff go to the lowest index) and
/// replaces the rest with epsilon = (1 - sum of kept mass) / (n - k), so the
/// result still sums to 1. Requires 1 <= k < n.
std::vector<double> topk_smooth(const std::vector<double>& p, int k);
PredMatrix topk_smooth(const PredMatrix& preds, int k);

/// Percent of pairs where argmax(real row) appears in the generated row's
/// top-k set (same tie rule as topk_smooth). With confidence_filter, only
/// pairs whose real top-1 exceeds 0.5 are counted; an empty remainder throws
/// EmptySetError.
double topk_accuracy(const PredMatrix& real_preds, const PredMatrix& gen_preds, int k,
                     bool confidence_filter);

/// Mean and population std of KL(generated row || real-set marginal). The
/// marginal is floored at 1e-12 and renormalized so the divergence is finite.
std::pair<double, double> kl_model_data(const PredMatrix& gen_preds,
                                        const PredMatrix& real_preds);

enum class SsimMode {
  kWindowed,  ///< 11x11 Gaussian window (sigma 1.5), valid positions only
  kGlobal,    ///< single whole-image statistic per channel; exists for oracle tests
};

/// Structural similarity of two byte images, averaged over windows and
/// channels; c1=(0.01*255)^2, c2=(0.03*255)^2. Windowed mode needs both sides
/// >= 11 px. Range [-1, 1]; ssim(x, x) == 1.
double ssim(const Image& a, const Image& b, SsimMode mode = SsimMode::kWindowed);

/// 10*log10(255^2 / mse) over all pixels and channels; identical images give
/// +infinity (callers serialize the sentinel as null plus a flag).
double psnr(const Image& a, const Image& b);

/// PSNR-style score over gradient disagreement: for each interior pixel the
/// absolute row and column gradients of each image are summed, and the mean
/// absolute difference of those sums feeds 10*log10(255^2 / grads). Needs
/// height and width >= 2; equal gradients give +infinity.
double sharpness_difference(const Image& a, const Image& b);

/// Mean absolute pixel difference in byte space (the retrieval distance).
double mean_abs_diff(const Image& a, const Image& b);

struct SegScores {
  double per_class_acc = 0.0;  ///< mean over evaluated classes of correct/gt pixels
  double miou = 0.0;           ///< mean intersection-over-union, same classes
};

/// Scores `pred` against `gt` over the listed classes. Classes with no ground
/// truth pixels are excluded from both means; if none of the classes appear in
/// the ground truth at all, throws EmptySetError.
SegScores seg_scores(const SegMap& pred, const SegMap& gt, const std::vector<int>& classes);

/// Everything the evaluation pipeline reports for one generated set.
struct MetricReport {
  int n_images = 0;
  int n_classes = 0;
  double inception_all = 0.0;
  double inception_top1 = 0.0;
  double inception_top5 = 0.0;
  double acc_top1_all = 0.0;
  double acc_top1_conf = 0.0;
  double acc_top5_all = 0.0;
  double acc_top5_conf = 0.0;
  double kl_mean = 0.0;
  double kl_std = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;  ///< mean over finite pairs; +inf when every pair is infinite
  int psnr_inf_count = 0;
  double sharp_diff = 0.0;
  int sharp_inf_count = 0;
  bool has_seg = false;
  double seg_per_class_acc = 0.0;
  double seg_miou = 0.0;

  /// Stable-ordered JSON; infinite psnr/sharp_diff serialize as null next to
  /// their *_inf_count fields.
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
};

}  // namespace crossview
