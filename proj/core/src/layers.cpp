#include "crossview/layers.hpp"

#include <algorithm>
#include <cmath>

#include "crossview/blas.hpp"
#include "crossview/errors.hpp"

namespace crossview {

namespace {

/// Cap on the im2col scratch buffer (elements); batches are processed in
/// sample chunks that stay under it.
constexpr std::int64_t kMaxColElems = 16ll << 20;

std::int64_t conv_out_extent(std::int64_t in, int kernel, int stride, int pad) {
  return (in + 2ll * pad - kernel) / stride + 1;
}

/// Unfolds one NCHW sample into a (C*k*k, oh*ow) block of a wider matrix:
/// destination row stride ld, column origin col0.
template <typename T>
void im2col(const T* img, std::int64_t c_in, std::int64_t h, std::int64_t w, int kernel,
            int stride, int pad, T* col, std::int64_t ld, std::int64_t col0) {
  const std::int64_t oh = conv_out_extent(h, kernel, stride, pad);
  const std::int64_t ow = conv_out_extent(w, kernel, stride, pad);
  for (std::int64_t c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const std::int64_t row = (c * kernel + ky) * kernel + kx;
        T* dst = col + row * ld + col0;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst + y * ow, dst + (y + 1) * ow, T(0));
            continue;
          }
          const T* src_row = img + (c * h + iy) * w;
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t ix = x * stride - pad + kx;
            dst[y * ow + x] = (ix >= 0 && ix < w) ? src_row[ix] : T(0);
          }
        }
      }
    }
  }
}

/// Scatter-add inverse of im2col.
template <typename T>
void col2im(const T* col, std::int64_t ld, std::int64_t col0, std::int64_t c_in, std::int64_t h,
            std::int64_t w, int kernel, int stride, int pad, T* img) {
  const std::int64_t oh = conv_out_extent(h, kernel, stride, pad);
  const std::int64_t ow = conv_out_extent(w, kernel, stride, pad);
  for (std::int64_t c = 0; c < c_in; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const std::int64_t row = (c * kernel + ky) * kernel + kx;
        const T* src = col + row * ld + col0;
        for (std::int64_t y = 0; y < oh; ++y) {
          const std::int64_t iy = y * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          T* dst_row = img + (c * h + iy) * w;
          for (std::int64_t x = 0; x < ow; ++x) {
            const std::int64_t ix = x * stride - pad + kx;
            if (ix >= 0 && ix < w) dst_row[ix] += src[y * ow + x];
          }
        }
      }
    }
  }
}

/// NCHW chunk -> channel-major matrix (C, B*S): out[c][b*S+s] = x[n0+b][c][s].
template <typename T>
void pack_cm(const T* x, std::int64_t n0, std::int64_t b_count, std::int64_t c_count,
             std::int64_t spatial, T* out) {
  for (std::int64_t c = 0; c < c_count; ++c) {
    for (std::int64_t b = 0; b < b_count; ++b) {
      const T* src = x + ((n0 + b) * c_count + c) * spatial;
      std::copy(src, src + spatial, out + (c * b_count + b) * spatial);
    }
  }
}

/// Inverse of pack_cm (assigns).
template <typename T>
void unpack_cm(const T* in, std::int64_t n0, std::int64_t b_count, std::int64_t c_count,
               std::int64_t spatial, T* x) {
  for (std::int64_t c = 0; c < c_count; ++c) {
    for (std::int64_t b = 0; b < b_count; ++b) {
      const T* src = in + (c * b_count + b) * spatial;
      std::copy(src, src + spatial, x + ((n0 + b) * c_count + c) * spatial);
    }
  }
}

template <typename T>
std::int64_t chunk_samples(std::int64_t per_sample_cols, std::int64_t rows, std::int64_t n) {
  const std::int64_t per_sample = per_sample_cols * rows;
  return std::clamp<std::int64_t>(kMaxColElems / std::max<std::int64_t>(per_sample, 1), 1, n);
}

template <typename T>
void check_input(const Tensor<T>& x, std::int64_t channels, const char* who) {
  if (x.rank() != 4 || x.dim(1) != channels) {
    throw ShapeError(std::string(who) + ": expected (N," + std::to_string(channels) +
                     ",H,W), got " + shape_string(x));
  }
}

template <typename T>
Param<T> make_param(std::string name, std::vector<std::int64_t> shape,
                    typename Param<T>::Init init, bool trainable = true) {
  Param<T> p;
  p.name = std::move(name);
  p.value = Tensor<T>(shape);
  p.grad = Tensor<T>(std::move(shape));
  p.init = init;
  p.trainable = trainable;
  // Deterministic defaults apply at construction so a layer is well-formed
  // before (or without) initialize(): BN scale and running variance start
  // at one, everything else at zero.
  if (init == Param<T>::Init::kOne || init == Param<T>::Init::kBnGamma) {
    p.value.fill(T(1));
  }
  return p;
}

}  // namespace

template <typename T>
void initialize(const std::vector<Param<T>*>& params, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 0.02);
  for (Param<T>* p : params) {
    switch (p->init) {
      case Param<T>::Init::kConvWeight:
        for (std::int64_t i = 0; i < p->value.numel(); ++i)
          p->value[i] = static_cast<T>(noise(rng));
        break;
      case Param<T>::Init::kBnGamma:
        for (std::int64_t i = 0; i < p->value.numel(); ++i)
          p->value[i] = static_cast<T>(1.0 + noise(rng));
        break;
      case Param<T>::Init::kZero:
        p->value.zero();
        break;
      case Param<T>::Init::kOne:
        p->value.fill(T(1));
        break;
    }
    p->grad.zero();
  }
}

// ---------------------------------------------------------------- Conv2d --

template <typename T>
Conv2d<T>::Conv2d(std::string name, int in_ch, int out_ch, int kernel, int stride, int pad,
                  bool bias)
    : name_(std::move(name)),
      in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias),
      weight_(make_param<T>(name_ + ".weight", {out_ch, in_ch, kernel, kernel},
                            Param<T>::Init::kConvWeight)),
      bias_(make_param<T>(name_ + ".bias", {out_ch}, Param<T>::Init::kZero)) {}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, const ForwardCtx&) {
  check_input(x, in_ch_, "conv2d");
  x_ = x;
  const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = conv_out_extent(h, kernel_, stride_, pad_);
  const std::int64_t ow = conv_out_extent(w, kernel_, stride_, pad_);
  const std::int64_t rows = static_cast<std::int64_t>(in_ch_) * kernel_ * kernel_;
  const std::int64_t spatial = oh * ow;
  Tensor<T> y({n, out_ch_, oh, ow});

  const std::int64_t chunk = chunk_samples<T>(spatial, rows, n);
  std::vector<T> cols(static_cast<std::size_t>(rows * chunk * spatial));
  std::vector<T> prod(static_cast<std::size_t>(out_ch_ * chunk * spatial));
  for (std::int64_t n0 = 0; n0 < n; n0 += chunk) {
    const std::int64_t b = std::min(chunk, n - n0);
    const std::int64_t ld = b * spatial;
    for (std::int64_t i = 0; i < b; ++i) {
      im2col(x.data() + (n0 + i) * in_ch_ * h * w, in_ch_, h, w, kernel_, stride_, pad_,
             cols.data(), ld, i * spatial);
    }
    gemm(false, false, out_ch_, ld, rows, T(1), weight_.value.data(), rows, cols.data(), ld,
         T(0), prod.data(), ld);
    unpack_cm(prod.data(), n0, b, out_ch_, spatial, y.data());
  }
  if (has_bias_) {
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t c = 0; c < out_ch_; ++c) {
        T* dst = y.data() + (i * out_ch_ + c) * spatial;
        const T bv = bias_.value[c];
        for (std::int64_t s = 0; s < spatial; ++s) dst[s] += bv;
      }
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& dy) {
  const std::int64_t n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  const std::int64_t oh = dy.dim(2), ow = dy.dim(3);
  const std::int64_t rows = static_cast<std::int64_t>(in_ch_) * kernel_ * kernel_;
  const std::int64_t spatial = oh * ow;
  Tensor<T> dx(x_.shape());

  const std::int64_t chunk = chunk_samples<T>(spatial, rows, n);
  std::vector<T> cols(static_cast<std::size_t>(rows * chunk * spatial));
  std::vector<T> dyp(static_cast<std::size_t>(out_ch_ * chunk * spatial));
  std::vector<T> dcols(static_cast<std::size_t>(rows * chunk * spatial));
  for (std::int64_t n0 = 0; n0 < n; n0 += chunk) {
    const std::int64_t b = std::min(chunk, n - n0);
    const std::int64_t ld = b * spatial;
    for (std::int64_t i = 0; i < b; ++i) {
      im2col(x_.data() + (n0 + i) * in_ch_ * h * w, in_ch_, h, w, kernel_, stride_, pad_,
             cols.data(), ld, i * spatial);
    }
    pack_cm(dy.data(), n0, b, out_ch_, spatial, dyp.data());
    // dW += dY * cols^T
    gemm(false, true, out_ch_, rows, ld, T(1), dyp.data(), ld, cols.data(), ld, T(1),
         weight_.grad.data(), rows);
    // dcols = W^T * dY
    gemm(true, false, rows, ld, out_ch_, T(1), weight_.value.data(), rows, dyp.data(), ld, T(0),
         dcols.data(), ld);
    for (std::int64_t i = 0; i < b; ++i) {
      col2im(dcols.data(), ld, i * spatial, in_ch_, h, w, kernel_, stride_, pad_,
             dx.data() + (n0 + i) * in_ch_ * h * w);
    }
  }
  if (has_bias_) {
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t c = 0; c < out_ch_; ++c) {
        const T* src = dy.data() + (i * out_ch_ + c) * spatial;
        T acc = T(0);
        for (std::int64_t s = 0; s < spatial; ++s) acc += src[s];
        bias_.grad[c] += acc;
      }
  }
  return dx;
}

template <typename T>
std::vector<Param<T>*> Conv2d<T>::params() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

template <typename T>
std::string Conv2d<T>::describe() const {
  return "conv " + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) + " k" +
         std::to_string(kernel_) + "s" + std::to_string(stride_) + "p" + std::to_string(pad_);
}

// ------------------------------------------------------- ConvTranspose2d --

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::string name, int in_ch, int out_ch, int kernel,
                                    int stride, int pad, bool bias)
    : name_(std::move(name)),
      in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias),
      weight_(make_param<T>(name_ + ".weight", {in_ch, out_ch, kernel, kernel},
                            Param<T>::Init::kConvWeight)),
      bias_(make_param<T>(name_ + ".bias", {out_ch}, Param<T>::Init::kZero)) {}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, const ForwardCtx&) {
  check_input(x, in_ch_, "conv_transpose2d");
  x_ = x;
  const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::int64_t out_h = (h - 1) * stride_ - 2ll * pad_ + kernel_;
  const std::int64_t out_w = (w - 1) * stride_ - 2ll * pad_ + kernel_;
  const std::int64_t rows = static_cast<std::int64_t>(out_ch_) * kernel_ * kernel_;
  const std::int64_t spatial = h * w;  // im2col over the *output* gives h*w columns
  Tensor<T> y({n, out_ch_, out_h, out_w});

  const std::int64_t chunk = chunk_samples<T>(spatial, rows, n);
  std::vector<T> xp(static_cast<std::size_t>(in_ch_ * chunk * spatial));
  std::vector<T> cols(static_cast<std::size_t>(rows * chunk * spatial));
  for (std::int64_t n0 = 0; n0 < n; n0 += chunk) {
    const std::int64_t b = std::min(chunk, n - n0);
    const std::int64_t ld = b * spatial;
    pack_cm(x.data(), n0, b, in_ch_, spatial, xp.data());
    // cols = W^T (rows x in) * X (in x ld)
    gemm(true, false, rows, ld, in_ch_, T(1), weight_.value.data(), rows, xp.data(), ld, T(0),
         cols.data(), ld);
    for (std::int64_t i = 0; i < b; ++i) {
      col2im(cols.data(), ld, i * spatial, out_ch_, out_h, out_w, kernel_, stride_, pad_,
             y.data() + (n0 + i) * out_ch_ * out_h * out_w);
    }
  }
  if (has_bias_) {
    const std::int64_t out_spatial = out_h * out_w;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t c = 0; c < out_ch_; ++c) {
        T* dst = y.data() + (i * out_ch_ + c) * out_spatial;
        const T bv = bias_.value[c];
        for (std::int64_t s = 0; s < out_spatial; ++s) dst[s] += bv;
      }
  }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& dy) {
  const std::int64_t n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
  const std::int64_t out_h = dy.dim(2), out_w = dy.dim(3);
  const std::int64_t rows = static_cast<std::int64_t>(out_ch_) * kernel_ * kernel_;
  const std::int64_t spatial = h * w;
  Tensor<T> dx(x_.shape());

  const std::int64_t chunk = chunk_samples<T>(spatial, rows, n);
  std::vector<T> dcols(static_cast<std::size_t>(rows * chunk * spatial));
  std::vector<T> xp(static_cast<std::size_t>(in_ch_ * chunk * spatial));
  std::vector<T> dxp(static_cast<std::size_t>(in_ch_ * chunk * spatial));
  for (std::int64_t n0 = 0; n0 < n; n0 += chunk) {
    const std::int64_t b = std::min(chunk, n - n0);
    const std::int64_t ld = b * spatial;
    for (std::int64_t i = 0; i < b; ++i) {
      im2col(dy.data() + (n0 + i) * out_ch_ * out_h * out_w, out_ch_, out_h, out_w, kernel_,
             stride_, pad_, dcols.data(), ld, i * spatial);
    }
    pack_cm(x_.data(), n0, b, in_ch_, spatial, xp.data());
    // dW += X (in x ld) * dcols^T (ld x rows)
    gemm(false, true, in_ch_, rows, ld, T(1), xp.data(), ld, dcols.data(), ld, T(1),
         weight_.grad.data(), rows);
    // dX = W (in x rows) * dcols (rows x ld)
    gemm(false, false, in_ch_, ld, rows, T(1), weight_.value.data(), rows, dcols.data(), ld,
         T(0), dxp.data(), ld);
    unpack_cm(dxp.data(), n0, b, in_ch_, spatial, dx.data());
  }
  if (has_bias_) {
    const std::int64_t out_spatial = out_h * out_w;
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t c = 0; c < out_ch_; ++c) {
        const T* src = dy.data() + (i * out_ch_ + c) * out_spatial;
        T acc = T(0);
        for (std::int64_t s = 0; s < out_spatial; ++s) acc += src[s];
        bias_.grad[c] += acc;
      }
  }
  return dx;
}

template <typename T>
std::vector<Param<T>*> ConvTranspose2d<T>::params() {
  if (has_bias_) return {&weight_, &bias_};
  return {&weight_};
}

template <typename T>
std::string ConvTranspose2d<T>::describe() const {
  return "upconv " + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) + " k" +
         std::to_string(kernel_) + "s" + std::to_string(stride_) + "p" + std::to_string(pad_);
}

// ----------------------------------------------------------- BatchNorm2d --

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, int channels, double momentum, double eps)
    : name_(std::move(name)),
      channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(make_param<T>(name_ + ".gamma", {channels}, Param<T>::Init::kBnGamma)),
      beta_(make_param<T>(name_ + ".beta", {channels}, Param<T>::Init::kZero)),
      running_mean_(make_param<T>(name_ + ".running_mean", {channels}, Param<T>::Init::kZero,
                                  /*trainable=*/false)),
      running_var_(make_param<T>(name_ + ".running_var", {channels}, Param<T>::Init::kOne,
                                 /*trainable=*/false)) {}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, const ForwardCtx& ctx) {
  check_input(x, channels_, "batchnorm2d");
  phase_ = ctx.phase;
  const std::int64_t n = x.dim(0), spatial = x.dim(2) * x.dim(3);
  const std::int64_t m = n * spatial;
  xhat_ = Tensor<T>(x.shape());
  inv_std_.assign(static_cast<std::size_t>(channels_), T(0));
  Tensor<T> y(x.shape());

  for (std::int64_t c = 0; c < channels_; ++c) {
    double mean, var;
    if (phase_ == Phase::kTrain) {
      double sum = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* src = x.data() + (i * channels_ + c) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) sum += src[s];
      }
      mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const T* src = x.data() + (i * channels_ + c) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) {
          const double d = src[s] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(m);  // biased, used for normalization
      const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
      running_mean_.value[c] =
          static_cast<T>((1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean);
      running_var_.value[c] =
          static_cast<T>((1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
    }
    const double is = 1.0 / std::sqrt(var + eps_);
    inv_std_[static_cast<std::size_t>(c)] = static_cast<T>(is);
    const double g = gamma_.value[c], bt = beta_.value[c];
    for (std::int64_t i = 0; i < n; ++i) {
      const T* src = x.data() + (i * channels_ + c) * spatial;
      T* xh = xhat_.data() + (i * channels_ + c) * spatial;
      T* dst = y.data() + (i * channels_ + c) * spatial;
      for (std::int64_t s = 0; s < spatial; ++s) {
        const double v = (src[s] - mean) * is;
        xh[s] = static_cast<T>(v);
        dst[s] = static_cast<T>(g * v + bt);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& dy) {
  const std::int64_t n = dy.dim(0), spatial = dy.dim(2) * dy.dim(3);
  const std::int64_t m = n * spatial;
  Tensor<T> dx(dy.shape());

  for (std::int64_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      const T* dsrc = dy.data() + (i * channels_ + c) * spatial;
      const T* xh = xhat_.data() + (i * channels_ + c) * spatial;
      for (std::int64_t s = 0; s < spatial; ++s) {
        sum_dy += dsrc[s];
        sum_dy_xhat += static_cast<double>(dsrc[s]) * xh[s];
      }
    }
    gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
    beta_.grad[c] += static_cast<T>(sum_dy);

    const double g_is = static_cast<double>(gamma_.value[c]) * inv_std_[static_cast<std::size_t>(c)];
    if (phase_ == Phase::kTrain) {
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* dsrc = dy.data() + (i * channels_ + c) * spatial;
        const T* xh = xhat_.data() + (i * channels_ + c) * spatial;
        T* dst = dx.data() + (i * channels_ + c) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) {
          dst[s] = static_cast<T>(g_is * (dsrc[s] - inv_m * sum_dy - xh[s] * inv_m * sum_dy_xhat));
        }
      }
    } else {
      for (std::int64_t i = 0; i < n; ++i) {
        const T* dsrc = dy.data() + (i * channels_ + c) * spatial;
        T* dst = dx.data() + (i * channels_ + c) * spatial;
        for (std::int64_t s = 0; s < spatial; ++s) dst[s] = static_cast<T>(g_is * dsrc[s]);
      }
    }
  }
  return dx;
}

template <typename T>
std::vector<Param<T>*> BatchNorm2d<T>::params() {
  return {&gamma_, &beta_, &running_mean_, &running_var_};
}

template <typename T>
std::string BatchNorm2d<T>::describe() const {
  return "bn " + std::to_string(channels_);
}

// ------------------------------------------------------------ activations --

template <typename T>
Tensor<T> LeakyReLU<T>::forward(const Tensor<T>& x, const ForwardCtx&) {
  x_ = x;
  Tensor<T> y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : slope_ * x[i];
  return y;
}

template <typename T>
Tensor<T> LeakyReLU<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.shape());
  for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = x_[i] > T(0) ? dy[i] : slope_ * dy[i];
  return dx;
}

template <typename T>
std::string LeakyReLU<T>::describe() const {
  return "lrelu";
}

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x, const ForwardCtx&) {
  x_ = x;
  Tensor<T> y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.shape());
  for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = x_[i] > T(0) ? dy[i] : T(0);
  return dx;
}

template <typename T>
Tensor<T> Tanh<T>::forward(const Tensor<T>& x, const ForwardCtx&) {
  Tensor<T> y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
  y_ = y;
  return y;
}

template <typename T>
Tensor<T> Tanh<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.shape());
  for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * (T(1) - y_[i] * y_[i]);
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x, const ForwardCtx&) {
  Tensor<T> y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) y[i] = T(1) / (T(1) + std::exp(-x[i]));
  y_ = y;
  return y;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& dy) {
  Tensor<T> dx(dy.shape());
  for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * y_[i] * (T(1) - y_[i]);
  return dx;
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, const ForwardCtx& ctx) {
  phase_ = ctx.phase;
  if (phase_ != Phase::kTrain) return x;
  if (ctx.rng == nullptr) throw ConfigError("dropout: train phase requires ForwardCtx.rng");
  mask_ = Tensor<T>(x.shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Tensor<T> y(x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    mask_[i] = u01(*ctx.rng) < p_ ? T(0) : keep_scale;
    y[i] = x[i] * mask_[i];
  }
  return y;
}

template <typename T>
Tensor<T> Dropout<T>::backward(const Tensor<T>& dy) {
  if (phase_ != Phase::kTrain) return dy;
  Tensor<T> dx(dy.shape());
  for (std::int64_t i = 0; i < dy.numel(); ++i) dx[i] = dy[i] * mask_[i];
  return dx;
}

template <typename T>
std::string Dropout<T>::describe() const {
  return "dropout " + std::to_string(p_);
}

// ------------------------------------------------------------------ Linear --

template <typename T>
Linear<T>::Linear(std::string name, int in_features, int out_features)
    : name_(std::move(name)),
      in_(in_features),
      out_(out_features),
      weight_(make_param<T>(name_ + ".weight", {out_features, in_features},
                            Param<T>::Init::kConvWeight)),
      bias_(make_param<T>(name_ + ".bias", {out_features}, Param<T>::Init::kZero)) {}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x, const ForwardCtx&) {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw ShapeError("linear: expected (N," + std::to_string(in_) + "), got " + shape_string(x));
  }
  x_ = x;
  const std::int64_t n = x.dim(0);
  Tensor<T> y({n, out_});
  gemm(false, true, n, out_, in_, T(1), x.data(), in_, weight_.value.data(), in_, T(0), y.data(),
       out_);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < out_; ++o) y[i * out_ + o] += bias_.value[o];
  return y;
}

template <typename T>
Tensor<T> Linear<T>::backward(const Tensor<T>& dy) {
  const std::int64_t n = x_.dim(0);
  gemm(true, false, out_, in_, n, T(1), dy.data(), out_, x_.data(), in_, T(1),
       weight_.grad.data(), in_);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t o = 0; o < out_; ++o) bias_.grad[o] += dy[i * out_ + o];
  Tensor<T> dx({n, in_});
  gemm(false, false, n, in_, out_, T(1), dy.data(), out_, weight_.value.data(), in_, T(0),
       dx.data(), in_);
  return dx;
}

template <typename T>
std::vector<Param<T>*> Linear<T>::params() {
  return {&weight_, &bias_};
}

template <typename T>
std::string Linear<T>::describe() const {
  return "linear " + std::to_string(in_) + "->" + std::to_string(out_);
}

// --------------------------------------------------------- GlobalAvgPool --

template <typename T>
Tensor<T> GlobalAvgPool<T>::forward(const Tensor<T>& x, const ForwardCtx&) {
  if (x.rank() != 4) throw ShapeError("gap: expected rank-4 input");
  in_shape_ = x.shape();
  const std::int64_t n = x.dim(0), c_count = x.dim(1), spatial = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c_count});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < c_count; ++c) {
      const T* src = x.data() + (i * c_count + c) * spatial;
      double acc = 0.0;
      for (std::int64_t s = 0; s < spatial; ++s) acc += src[s];
      y[i * c_count + c] = static_cast<T>(acc / static_cast<double>(spatial));
    }
  return y;
}

template <typename T>
Tensor<T> GlobalAvgPool<T>::backward(const Tensor<T>& dy) {
  const std::int64_t n = in_shape_[0], c_count = in_shape_[1];
  const std::int64_t spatial = in_shape_[2] * in_shape_[3];
  Tensor<T> dx(in_shape_);
  const T inv = static_cast<T>(1.0 / static_cast<double>(spatial));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t c = 0; c < c_count; ++c) {
      T* dst = dx.data() + (i * c_count + c) * spatial;
      const T g = dy[i * c_count + c] * inv;
      for (std::int64_t s = 0; s < spatial; ++s) dst[s] = g;
    }
  return dx;
}

// ------------------------------------------------------------- Sequential --

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, const ForwardCtx& ctx) {
  Tensor<T> cur = x;
  for (auto& layer : layers_) cur = layer->forward(cur, ctx);
  return cur;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& dy) {
  Tensor<T> cur = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  return cur;
}

template <typename T>
std::vector<Param<T>*> Sequential<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& layer : layers_) {
    auto p = layer->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename T>
std::string Sequential<T>::describe() const {
  std::string s;
  for (auto& layer : layers_) {
    if (!s.empty()) s += " | ";
    s += layer->describe();
  }
  return s;
}

// ------------------------------------------------------------ tensor ops --

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
      a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_string(a) + " vs " +
                     shape_string(b));
  }
  const std::int64_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), spatial = a.dim(2) * a.dim(3);
  Tensor<T> y({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy(a.data() + i * ca * spatial, a.data() + (i + 1) * ca * spatial,
              y.data() + i * (ca + cb) * spatial);
    std::copy(b.data() + i * cb * spatial, b.data() + (i + 1) * cb * spatial,
              y.data() + (i * (ca + cb) + ca) * spatial);
  }
  return y;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t c0, std::int64_t c1) {
  if (x.rank() != 4 || c0 < 0 || c1 > x.dim(1) || c0 >= c1) {
    throw ShapeError("slice_channels: bad range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") for " + shape_string(x));
  }
  const std::int64_t n = x.dim(0), c_count = x.dim(1), spatial = x.dim(2) * x.dim(3);
  Tensor<T> y({n, c1 - c0, x.dim(2), x.dim(3)});
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy(x.data() + (i * c_count + c0) * spatial, x.data() + (i * c_count + c1) * spatial,
              y.data() + i * (c1 - c0) * spatial);
  }
  return y;
}

// ------------------------------------------------------ instantiations --

template void initialize<float>(const std::vector<Param<float>*>&, std::mt19937_64&);
template void initialize<double>(const std::vector<Param<double>*>&, std::mt19937_64&);

template class Conv2d<float>;
template class Conv2d<double>;
template class ConvTranspose2d<float>;
template class ConvTranspose2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class LeakyReLU<float>;
template class LeakyReLU<double>;
template class ReLU<float>;
template class ReLU<double>;
template class Tanh<float>;
template class Tanh<double>;
template class Sigmoid<float>;
template class Sigmoid<double>;
template class Dropout<float>;
template class Dropout<double>;
template class Linear<float>;
template class Linear<double>;
template class GlobalAvgPool<float>;
template class GlobalAvgPool<double>;
template class Sequential<float>;
template class Sequential<double>;

template Tensor<float> concat_channels(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> concat_channels(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> slice_channels(const Tensor<float>&, std::int64_t, std::int64_t);
template Tensor<double> slice_channels(const Tensor<double>&, std::int64_t, std::int64_t);

}  // namespace crossview
