#include "crossview/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "crossview/errors.hpp"

namespace crossview {

namespace {

constexpr double kRowSumTol = 1e-6;
constexpr double kMarginalFloor = 1e-12;
constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);
constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

void check_same_shape(const Image& a, const Image& b, const char* op) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw ShapeError(std::string(op) + ": image shapes differ (" + std::to_string(a.height) +
                     "x" + std::to_string(a.width) + "x" + std::to_string(a.channels) + " vs " +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + "x" +
                     std::to_string(b.channels) + ")");
  }
}

/// KL(p || q) with 0*log(0/q) = 0; q must be strictly positive where p is.
double kl_divergence(const double* p, const double* q, std::int64_t n) {
  double kl = 0.0;
  for (std::int64_t j = 0; j < n; ++j) {
    if (p[j] > 0.0) kl += p[j] * std::log(p[j] / q[j]);
  }
  return kl;
}

/// Class indices ordered by descending probability, ties by lower index first
/// (std::stable_sort keeps the ascending-index order among equals).
std::vector<int> ranked_classes(const double* p, int n) {
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p[a] > p[b]; });
  return order;
}

std::int64_t rows_of(const PredMatrix& m) { return m.shape()[0]; }
std::int64_t cols_of(const PredMatrix& m) { return m.shape()[1]; }

}  // namespace

void check_pred_matrix(const PredMatrix& preds) {
  if (preds.shape().size() != 2) {
    throw ShapeError("pred matrix: expected 2-D (rows, classes), got " + shape_string(preds));
  }
  const std::int64_t n = rows_of(preds), c = cols_of(preds);
  for (std::int64_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      const double v = preds[i * c + j];
      if (v < 0.0) {
        throw RangeError("pred matrix: negative probability at row " + std::to_string(i));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTol) {
      throw RangeError("pred matrix: row " + std::to_string(i) + " sums to " +
                       std::to_string(sum) + ", not 1");
    }
  }
}

double inception_score(const PredMatrix& preds) {
  check_pred_matrix(preds);
  const std::int64_t n = rows_of(preds), c = cols_of(preds);
  if (n == 0) throw EmptySetError("inception_score: no prediction rows");

  std::vector<double> marginal(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < c; ++j) marginal[static_cast<std::size_t>(j)] += preds[i * c + j];
  }
  for (double& m : marginal) m /= static_cast<double>(n);

  double mean_kl = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    // Each row's KL is nonnegative; clamp individual rounding dips.
    mean_kl += std::max(0.0, kl_divergence(&preds[i * c], marginal.data(), c));
  }
  mean_kl /= static_cast<double>(n);
  // Mean KL equals the image/class mutual information, bounded by the
  // marginal entropy and hence by log(n_classes).
  mean_kl = std::min(mean_kl, std::log(static_cast<double>(c)));
  return std::exp(mean_kl);
}

std::vector<double> topk_smooth(const std::vector<double>& p, int k) {
  const int n = static_cast<int>(p.size());
  if (k < 1 || k >= n) {
    throw ConfigError("topk_smooth: need 1 <= k < n_classes, got k=" + std::to_string(k) +
                      ", n=" + std::to_string(n));
  }
  const std::vector<int> order = ranked_classes(p.data(), n);
  double kept = 0.0;
  for (int r = 0; r < k; ++r) kept += p[static_cast<std::size_t>(order[r])];
  const double epsilon = (1.0 - kept) / static_cast<double>(n - k);

  std::vector<double> out(p.size(), epsilon);
  for (int r = 0; r < k; ++r) {
    const auto j = static_cast<std::size_t>(order[r]);
    out[j] = p[j];
  }
  return out;
}

PredMatrix topk_smooth(const PredMatrix& preds, int k) {
  check_pred_matrix(preds);
  const std::int64_t n = rows_of(preds), c = cols_of(preds);
  PredMatrix out({n, c});
  std::vector<double> row(static_cast<std::size_t>(c));
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy_n(&preds[i * c], c, row.begin());
    const std::vector<double> smoothed = topk_smooth(row, k);
    std::copy(smoothed.begin(), smoothed.end(), &out[i * c]);
  }
  return out;
}

double topk_accuracy(const PredMatrix& real_preds, const PredMatrix& gen_preds, int k,
                     bool confidence_filter) {
  check_pred_matrix(real_preds);
  check_pred_matrix(gen_preds);
  if (rows_of(real_preds) != rows_of(gen_preds) || cols_of(real_preds) != cols_of(gen_preds)) {
    throw ShapeError("topk_accuracy: real " + shape_string(real_preds) + " vs generated " +
                     shape_string(gen_preds));
  }
  const std::int64_t n = rows_of(real_preds), c = cols_of(real_preds);
  if (k < 1 || k > c) throw ConfigError("topk_accuracy: need 1 <= k <= n_classes");

  std::int64_t considered = 0, hits = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double* real_row = &real_preds[i * c];
    const std::vector<int> real_order = ranked_classes(real_row, static_cast<int>(c));
    const int label = real_order[0];
    if (confidence_filter && real_row[label] <= 0.5) continue;
    ++considered;
    const std::vector<int> gen_order =
        ranked_classes(&gen_preds[i * c], static_cast<int>(c));
    for (int r = 0; r < k; ++r) {
      if (gen_order[static_cast<std::size_t>(r)] == label) {
        ++hits;
        break;
      }
    }
  }
  if (considered == 0) {
    throw EmptySetError("topk_accuracy: confidence filter removed every row");
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(considered);
}

std::pair<double, double> kl_model_data(const PredMatrix& gen_preds,
                                        const PredMatrix& real_preds) {
  check_pred_matrix(gen_preds);
  check_pred_matrix(real_preds);
  if (cols_of(gen_preds) != cols_of(real_preds)) {
    throw ShapeError("kl_model_data: class counts differ");
  }
  const std::int64_t ng = rows_of(gen_preds), nr = rows_of(real_preds);
  const std::int64_t c = cols_of(gen_preds);
  if (ng == 0 || nr == 0) throw EmptySetError("kl_model_data: empty prediction matrix");

  std::vector<double> q(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t i = 0; i < nr; ++i) {
    for (std::int64_t j = 0; j < c; ++j) q[static_cast<std::size_t>(j)] += real_preds[i * c + j];
  }
  double qsum = 0.0;
  for (double& v : q) {
    v = std::max(v / static_cast<double>(nr), kMarginalFloor);
    qsum += v;
  }
  for (double& v : q) v /= qsum;

  // Two-pass variance: the E[x^2] - mean^2 form cancels catastrophically when
  // the divergences cluster tightly around a large mean.
  std::vector<double> kls(static_cast<std::size_t>(ng), 0.0);
  double mean = 0.0;
  for (std::int64_t i = 0; i < ng; ++i) {
    kls[static_cast<std::size_t>(i)] = kl_divergence(&gen_preds[i * c], q.data(), c);
    mean += kls[static_cast<std::size_t>(i)];
  }
  mean /= static_cast<double>(ng);
  double var = 0.0;
  for (const double d : kls) var += (d - mean) * (d - mean);
  var /= static_cast<double>(ng);
  return {mean, std::sqrt(std::max(0.0, var))};
}

namespace {

std::vector<double> gaussian_kernel_1d(int size, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(size));
  const double center = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[static_cast<std::size_t>(i)] =
        std::exp(-(i - center) * (i - center) / (2.0 * sigma * sigma));
    sum += k[static_cast<std::size_t>(i)];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable valid-mode filter: (h, w) -> (h - size + 1, w - size + 1).
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::vector<double>& kernel) {
  const int size = static_cast<int>(kernel.size());
  const int ow = w - size + 1, oh = h - size + 1;
  std::vector<double> rows_done(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < size; ++t) {
        acc += kernel[static_cast<std::size_t>(t)] * src[static_cast<std::size_t>(y) * w + x + t];
      }
      rows_done[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int t = 0; t < size; ++t) {
        acc += kernel[static_cast<std::size_t>(t)] *
               rows_done[static_cast<std::size_t>(y + t) * ow + x];
      }
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

double ssim_term(double mu_a, double mu_b, double var_a, double var_b, double cov) {
  // Shared subexpressions keep numerator and denominator bitwise-identical
  // when a == b (so ssim(x, x) == 1 exactly), independent of FMA contraction.
  const double cross = mu_a * mu_b;
  const double sq_sum = mu_a * mu_a + mu_b * mu_b;
  const double var_sum = var_a + var_b;
  return ((2.0 * cross + kC1) * (2.0 * cov + kC2)) / ((sq_sum + kC1) * (var_sum + kC2));
}

}  // namespace

double ssim(const Image& a, const Image& b, SsimMode mode) {
  check_same_shape(a, b, "ssim");
  const int h = a.height, w = a.width, c = a.channels;

  double total = 0.0;
  std::int64_t terms = 0;
  std::vector<double> pa(static_cast<std::size_t>(h) * w), pb(pa.size()), paa(pa.size()),
      pbb(pa.size()), pab(pa.size());

  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double va = a.at(y, x, ch), vb = b.at(y, x, ch);
        const auto i = static_cast<std::size_t>(y) * w + x;
        pa[i] = va;
        pb[i] = vb;
        paa[i] = va * va;
        pbb[i] = vb * vb;
        pab[i] = va * vb;
      }
    }
    if (mode == SsimMode::kGlobal) {
      const double n = static_cast<double>(h) * w;
      const double mu_a = std::accumulate(pa.begin(), pa.end(), 0.0) / n;
      const double mu_b = std::accumulate(pb.begin(), pb.end(), 0.0) / n;
      const double var_a = std::accumulate(paa.begin(), paa.end(), 0.0) / n - mu_a * mu_a;
      const double var_b = std::accumulate(pbb.begin(), pbb.end(), 0.0) / n - mu_b * mu_b;
      const double cov = std::accumulate(pab.begin(), pab.end(), 0.0) / n - mu_a * mu_b;
      total += ssim_term(mu_a, mu_b, var_a, var_b, cov);
      ++terms;
      continue;
    }
    if (h < kSsimWindow || w < kSsimWindow) {
      throw DimensionError("ssim: windowed mode needs at least " +
                           std::to_string(kSsimWindow) + " px on each side, got " +
                           std::to_string(h) + "x" + std::to_string(w));
    }
    static const std::vector<double> kernel = gaussian_kernel_1d(kSsimWindow, kSsimSigma);
    const std::vector<double> mu_a = filter_valid(pa, h, w, kernel);
    const std::vector<double> mu_b = filter_valid(pb, h, w, kernel);
    const std::vector<double> e_aa = filter_valid(paa, h, w, kernel);
    const std::vector<double> e_bb = filter_valid(pbb, h, w, kernel);
    const std::vector<double> e_ab = filter_valid(pab, h, w, kernel);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      total += ssim_term(mu_a[i], mu_b[i], var_a, var_b, cov);
      ++terms;
    }
  }
  return total / static_cast<double>(terms);
}

double psnr(const Image& a, const Image& b) {
  check_same_shape(a, b, "psnr");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double sharpness_difference(const Image& a, const Image& b) {
  check_same_shape(a, b, "sharpness_difference");
  if (a.height < 2 || a.width < 2) {
    throw DimensionError("sharpness_difference: needs height and width >= 2, got " +
                         std::to_string(a.height) + "x" + std::to_string(a.width));
  }
  double acc = 0.0;
  std::int64_t count = 0;
  for (int ch = 0; ch < a.channels; ++ch) {
    for (int y = 1; y < a.height; ++y) {
      for (int x = 1; x < a.width; ++x) {
        const double ga = std::abs(a.at(y, x, ch) - a.at(y - 1, x, ch)) +
                          std::abs(a.at(y, x, ch) - a.at(y, x - 1, ch));
        const double gb = std::abs(b.at(y, x, ch) - b.at(y - 1, x, ch)) +
                          std::abs(b.at(y, x, ch) - b.at(y, x - 1, ch));
        acc += std::abs(ga - gb);
        ++count;
      }
    }
  }
  const double grads = acc / static_cast<double>(count);
  if (grads == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / grads);
}

double mean_abs_diff(const Image& a, const Image& b) {
  check_same_shape(a, b, "mean_abs_diff");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    acc += std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
  }
  return acc / static_cast<double>(a.data.size());
}

SegScores seg_scores(const SegMap& pred, const SegMap& gt, const std::vector<int>& classes) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeError("seg_scores: prediction " + std::to_string(pred.height) + "x" +
                     std::to_string(pred.width) + " vs ground truth " +
                     std::to_string(gt.height) + "x" + std::to_string(gt.width));
  }
  if (classes.empty()) throw ConfigError("seg_scores: empty class list");

  double acc_sum = 0.0, iou_sum = 0.0;
  int evaluated = 0;
  for (int cls : classes) {
    std::int64_t gt_count = 0, pred_count = 0, inter = 0;
    for (std::size_t i = 0; i < gt.labels.size(); ++i) {
      const bool in_gt = gt.labels[i] == cls;
      const bool in_pred = pred.labels[i] == cls;
      gt_count += in_gt;
      pred_count += in_pred;
      inter += in_gt && in_pred;
    }
    if (gt_count == 0) continue;  // class not present; excluded from both means
    const std::int64_t uni = gt_count + pred_count - inter;
    acc_sum += static_cast<double>(inter) / static_cast<double>(gt_count);
    iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++evaluated;
  }
  if (evaluated == 0) {
    throw EmptySetError("seg_scores: none of the evaluated classes appear in the ground truth");
  }
  return {acc_sum / evaluated, iou_sum / evaluated};
}

namespace {

void put_maybe_infinite(nlohmann::ordered_json& j, const char* key, double v) {
  if (std::isfinite(v)) {
    j[key] = v;
  } else {
    j[key] = nullptr;
  }
}

double get_maybe_infinite(const nlohmann::json& j, const char* key) {
  if (j.at(key).is_null()) return std::numeric_limits<double>::infinity();
  return j.at(key).get<double>();
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["n_images"] = n_images;
  j["n_classes"] = n_classes;
  j["inception_all"] = inception_all;
  j["inception_top1"] = inception_top1;
  j["inception_top5"] = inception_top5;
  j["acc_top1_all"] = acc_top1_all;
  j["acc_top1_conf"] = acc_top1_conf;
  j["acc_top5_all"] = acc_top5_all;
  j["acc_top5_conf"] = acc_top5_conf;
  j["kl_mean"] = kl_mean;
  j["kl_std"] = kl_std;
  j["ssim"] = ssim;
  put_maybe_infinite(j, "psnr", psnr);
  j["psnr_inf_count"] = psnr_inf_count;
  put_maybe_infinite(j, "sharp_diff", sharp_diff);
  j["sharp_inf_count"] = sharp_inf_count;
  j["has_seg"] = has_seg;
  if (has_seg) {
    j["seg_per_class_acc"] = seg_per_class_acc;
    j["seg_miou"] = seg_miou;
  }
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("metric report: ") + e.what());
  }
  MetricReport r;
  r.n_images = j.at("n_images").get<int>();
  r.n_classes = j.at("n_classes").get<int>();
  r.inception_all = j.at("inception_all").get<double>();
  r.inception_top1 = j.at("inception_top1").get<double>();
  r.inception_top5 = j.at("inception_top5").get<double>();
  r.acc_top1_all = j.at("acc_top1_all").get<double>();
  r.acc_top1_conf = j.at("acc_top1_conf").get<double>();
  r.acc_top5_all = j.at("acc_top5_all").get<double>();
  r.acc_top5_conf = j.at("acc_top5_conf").get<double>();
  r.kl_mean = j.at("kl_mean").get<double>();
  r.kl_std = j.at("kl_std").get<double>();
  r.ssim = j.at("ssim").get<double>();
  r.psnr = get_maybe_infinite(j, "psnr");
  r.psnr_inf_count = j.at("psnr_inf_count").get<int>();
  r.sharp_diff = get_maybe_infinite(j, "sharp_diff");
  r.sharp_inf_count = j.at("sharp_inf_count").get<int>();
  r.has_seg = j.at("has_seg").get<bool>();
  if (r.has_seg) {
    r.seg_per_class_acc = j.at("seg_per_class_acc").get<double>();
    r.seg_miou = j.at("seg_miou").get<double>();
  }
  return r;
}

}  // namespace crossview
