#include "crossview/objectives.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace crossview {

namespace {

double clamp_score(double s) { return std::clamp(s, kScoreClamp, 1.0 - kScoreClamp); }

}  // namespace

std::string LossReport::to_json() const {
  nlohmann::ordered_json j;
  j["d_loss"] = d_loss;
  j["g_gan"] = g_gan;
  j["g_l1_image"] = g_l1_image;
  j["g_l1_seg"] = g_l1_seg;
  j["d2_loss"] = d2_loss;
  j["g2_gan"] = g2_gan;
  j["g2_l1_seg"] = g2_l1_seg;
  j["total_g"] = total_g;
  j["lambda"] = lambda;
  return j.dump();
}

double bce(double score, double target) {
  const double s = clamp_score(score);
  return -(target * std::log(s) + (1.0 - target) * std::log(1.0 - s));
}

double gan_loss_discriminator(double real_score, double fake_score, double real_label) {
  return bce(real_score, real_label) + bce(fake_score, 0.0);
}

double gan_loss_generator(double fake_score, bool non_saturating) {
  const double s = clamp_score(fake_score);
  return non_saturating ? -std::log(s) : std::log(1.0 - s);
}

template <typename T>
double gan_loss_discriminator(const Tensor<T>& real_scores, const Tensor<T>& fake_scores,
                              double real_label, Tensor<T>* d_real, Tensor<T>* d_fake) {
  if (!real_scores.same_shape(fake_scores)) {
    throw ShapeError("gan_loss_discriminator: score shape mismatch");
  }
  const std::int64_t n = real_scores.numel();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (d_real) *d_real = Tensor<T>(real_scores.shape());
  if (d_fake) *d_fake = Tensor<T>(fake_scores.shape());
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double r = clamp_score(real_scores[i]);
    const double f = clamp_score(fake_scores[i]);
    loss += inv_n * (bce(r, real_label) + bce(f, 0.0));
    // d BCE(s,t)/ds = -t/s + (1-t)/(1-s)
    if (d_real) (*d_real)[i] = static_cast<T>(inv_n * (-real_label / r + (1.0 - real_label) / (1.0 - r)));
    if (d_fake) (*d_fake)[i] = static_cast<T>(inv_n * (1.0 / (1.0 - f)));
  }
  return loss;
}

template <typename T>
double gan_loss_generator(const Tensor<T>& fake_scores, bool non_saturating, Tensor<T>* d_fake) {
  const std::int64_t n = fake_scores.numel();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (d_fake) *d_fake = Tensor<T>(fake_scores.shape());
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double s = clamp_score(fake_scores[i]);
    if (non_saturating) {
      loss += inv_n * -std::log(s);
      if (d_fake) (*d_fake)[i] = static_cast<T>(inv_n * (-1.0 / s));
    } else {
      loss += inv_n * std::log(1.0 - s);
      if (d_fake) (*d_fake)[i] = static_cast<T>(inv_n * (-1.0 / (1.0 - s)));
    }
  }
  return loss;
}

template <typename T>
double l1_loss(const Tensor<T>& a, const Tensor<T>& b, Tensor<T>* d_a) {
  if (!a.same_shape(b)) throw ShapeError("l1_loss: shape mismatch");
  const std::int64_t n = a.numel();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (d_a) *d_a = Tensor<T>(a.shape());
  double loss = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    loss += inv_n * std::abs(d);
    if (d_a) (*d_a)[i] = static_cast<T>(d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0));
  }
  return loss;
}

LossReport objective_baseline(const LossComponents& parts, double lambda) {
  LossReport r;
  r.lambda = lambda;
  r.d_loss = parts.d_loss;
  r.g_gan = parts.g_gan;
  r.g_l1_image = parts.g_l1_image;
  r.total_g = parts.g_gan + lambda * parts.g_l1_image;
  return r;
}

LossReport objective_fork(const LossComponents& parts, double lambda) {
  LossReport r = objective_baseline(parts, lambda);
  r.g_l1_seg = parts.g_l1_seg;
  r.total_g = parts.g_gan + lambda * (parts.g_l1_image + parts.g_l1_seg);
  return r;
}

LossReport objective_xseq(const LossComponents& parts, double lambda) {
  LossReport r = objective_baseline(parts, lambda);
  r.d2_loss = parts.d2_loss;
  r.g2_gan = parts.g2_gan;
  r.g2_l1_seg = parts.g2_l1_seg;
  r.total_g = parts.g_gan + lambda * parts.g_l1_image + parts.g2_gan + lambda * parts.g2_l1_seg;
  return r;
}

template double gan_loss_discriminator<float>(const Tensor<float>&, const Tensor<float>&, double,
                                              Tensor<float>*, Tensor<float>*);
template double gan_loss_discriminator<double>(const Tensor<double>&, const Tensor<double>&,
                                               double, Tensor<double>*, Tensor<double>*);
template double gan_loss_generator<float>(const Tensor<float>&, bool, Tensor<float>*);
template double gan_loss_generator<double>(const Tensor<double>&, bool, Tensor<double>*);
template double l1_loss<float>(const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double l1_loss<double>(const Tensor<double>&, const Tensor<double>&, Tensor<double>*);

}  // namespace crossview
