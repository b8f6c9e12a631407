#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "radnet/blas.hpp"
#include "radnet/rng.hpp"
#include "radnet/tensor.hpp"

namespace radnet {

enum class Mode { kTrain, kInfer };

struct ActivationConfig {
  double leaky_slope = 0.01;  // alpha in [0,1)
  double dropout_p = 0.0;     // in [0,1)
};

namespace detail {

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

/// Marks a forward cache as consumed; each cache feeds exactly one backward
/// call.
struct CacheGuard {
  bool consumed = false;
  void consume(const char* op) {
    if (consumed) throw std::logic_error(std::string(op) + ": cache already consumed");
    consumed = true;
  }
};

/// Unrolls a padded 3x3 neighborhood into a (C*9) x (H*W) matrix, row index
/// c*9 + dy*3 + dx, matching the flattened kernel layout.
template <typename T>
void im2col_3x3(const T* x, std::size_t c_in, std::size_t h, std::size_t w, T* col) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < c_in; ++ci) {
    const T* src = x + ci * hw;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        T* dst = col + (ci * 9 + static_cast<std::size_t>(dy + 1) * 3 +
                        static_cast<std::size_t>(dx + 1)) *
                           hw;
        for (std::size_t i = 0; i < h; ++i, dst += w) {
          const long si = static_cast<long>(i) + dy;
          if (si < 0 || si >= static_cast<long>(h)) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          // valid output columns j satisfy 0 <= j + dx < w
          const std::size_t j0 = dx < 0 ? 1 : 0;
          const std::size_t j1 = dx > 0 ? w - 1 : w;
          if (j0 > 0) dst[0] = T(0);
          if (j1 < w) dst[w - 1] = T(0);
          std::memcpy(dst + j0, src + static_cast<std::size_t>(si) * w + j0 + dx,
                      (j1 - j0) * sizeof(T));
        }
      }
    }
  }
}

/// Scatters a (C*9) x (H*W) column gradient back onto the padded input.
template <typename T>
void col2im_3x3(const T* col, std::size_t c_in, std::size_t h, std::size_t w, T* x) {
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < c_in; ++ci) {
    T* dst_base = x + ci * hw;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const T* src = col + (ci * 9 + static_cast<std::size_t>(dy + 1) * 3 +
                              static_cast<std::size_t>(dx + 1)) *
                                 hw;
        for (std::size_t i = 0; i < h; ++i, src += w) {
          const long si = static_cast<long>(i) + dy;
          if (si < 0 || si >= static_cast<long>(h)) continue;
          const std::size_t j0 = dx < 0 ? 1 : 0;
          const std::size_t j1 = dx > 0 ? w - 1 : w;
          T* dst = dst_base + static_cast<std::size_t>(si) * w + dx;
          for (std::size_t j = j0; j < j1; ++j) dst[j] += src[j];
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// conv2d: 3x3 cross-correlation, zero padding 1, stride 1 (spatial size kept)
// ---------------------------------------------------------------------------

template <typename T>
struct Conv2dCache {
  Tensor<T> x;  // [N,Cin,H,W]
  Tensor<T> w;  // [Cout,Cin,3,3]
  detail::CacheGuard guard;
};

template <typename T>
struct Conv2dResult {
  Tensor<T> y;
  Conv2dCache<T> cache;
};

template <typename T>
struct Conv2dGrads {
  Tensor<T> x, w, b;
};

template <typename T>
Conv2dResult<T> conv2d(Tensor<T> x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::check(x.rank() == 4, "conv2d: input rank " + std::to_string(x.rank()) + ", expected 4");
  detail::check(w.rank() == 4, "conv2d: kernel rank " + std::to_string(w.rank()) + ", expected 4");
  detail::check(w.dim(2) == 3 && w.dim(3) == 3,
                "conv2d: kernel spatial size " + std::to_string(w.dim(2)) + "x" +
                    std::to_string(w.dim(3)) + ", only 3x3 supported");
  detail::check(x.dim(1) == w.dim(1), "conv2d: input channels " + std::to_string(x.dim(1)) +
                                          " != kernel input channels " + std::to_string(w.dim(1)));
  detail::check(b.rank() == 1 && b.dim(0) == w.dim(0),
                "conv2d: bias length " + std::to_string(b.size()) + " != output channels " +
                    std::to_string(w.dim(0)));

  const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t c_out = w.dim(0);
  const std::size_t hw = h * wd, ck = c_in * 9;

  Tensor<T> y({n, c_out, h, wd});
  std::vector<T> col(ck * hw);
  for (std::size_t img = 0; img < n; ++img) {
    detail::im2col_3x3(x.data() + img * c_in * hw, c_in, h, wd, col.data());
    detail::gemm(false, false, static_cast<int>(c_out), static_cast<int>(hw),
                 static_cast<int>(ck), T(1), w.data(), static_cast<int>(ck), col.data(),
                 static_cast<int>(hw), T(0), y.data() + img * c_out * hw, static_cast<int>(hw));
    T* yp = y.data() + img * c_out * hw;
    for (std::size_t co = 0; co < c_out; ++co) {
      const T bias = b[co];
      for (std::size_t i = 0; i < hw; ++i) yp[co * hw + i] += bias;
    }
  }
  return {std::move(y), Conv2dCache<T>{std::move(x), w, {}}};
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& grad_y, Conv2dCache<T>& cache) {
  cache.guard.consume("conv2d_backward");
  const Tensor<T>& x = cache.x;
  const Tensor<T>& w = cache.w;
  const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t c_out = w.dim(0);
  detail::check(grad_y.shape() == Shape({n, c_out, h, wd}),
                "conv2d_backward: grad shape " + shape_str(grad_y.shape()) + " != output shape " +
                    shape_str({n, c_out, h, wd}));

  const std::size_t hw = h * wd, ck = c_in * 9;
  Conv2dGrads<T> g{Tensor<T>({n, c_in, h, wd}), Tensor<T>(w.shape()), Tensor<T>({c_out})};
  std::vector<T> col(ck * hw);
  std::vector<T> gcol(ck * hw);
  for (std::size_t img = 0; img < n; ++img) {
    const T* gy = grad_y.data() + img * c_out * hw;
    // grad wrt input: w^T * gy, scattered back through the padding
    detail::gemm(true, false, static_cast<int>(ck), static_cast<int>(hw),
                 static_cast<int>(c_out), T(1), w.data(), static_cast<int>(ck), gy,
                 static_cast<int>(hw), T(0), gcol.data(), static_cast<int>(hw));
    detail::col2im_3x3(gcol.data(), c_in, h, wd, g.x.data() + img * c_in * hw);
    // grad wrt kernel: gy * col^T, accumulated over the batch
    detail::im2col_3x3(x.data() + img * c_in * hw, c_in, h, wd, col.data());
    detail::gemm(false, true, static_cast<int>(c_out), static_cast<int>(ck),
                 static_cast<int>(hw), T(1), gy, static_cast<int>(hw), col.data(),
                 static_cast<int>(hw), T(1), g.w.data(), static_cast<int>(ck));
    for (std::size_t co = 0; co < c_out; ++co) {
      T s = 0;
      const T* row = gy + co * hw;
      for (std::size_t i = 0; i < hw; ++i) s += row[i];
      g.b[co] += s;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNormState {
  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  double momentum = 0.9;
  double epsilon = 1e-5;
  long update_count = 0;  // number of train-mode forward passes seen

  static BatchNormState init(std::size_t channels, double momentum = 0.9, double epsilon = 1e-5) {
    detail::check(momentum > 0.0 && momentum < 1.0, "batchnorm: momentum must be in (0,1)");
    detail::check(epsilon > 0.0, "batchnorm: epsilon must be positive");
    BatchNormState s;
    s.gamma = Tensor<T>::full({channels}, T(1));
    s.beta = Tensor<T>({channels});
    s.running_mean = Tensor<T>({channels});
    s.running_var = Tensor<T>::full({channels}, T(1));
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
  }

  std::size_t channels() const { return gamma.size(); }
};

template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;            // normalized pre-affine values
  std::vector<T> inv_std;    // per channel
  Tensor<T> gamma;           // snapshot
  detail::CacheGuard guard;
};

template <typename T>
struct BatchNormResult {
  Tensor<T> y;
  BatchNormCache<T> cache;
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> x, gamma, beta;
};

namespace detail {

// Iterates a [N,C] or [N,C,H,W] tensor channel by channel.
template <typename T, typename Fn>
void per_channel(std::size_t n, std::size_t c, std::size_t hw, T* data, Fn&& fn) {
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t img = 0; img < n; ++img) {
      T* p = data + (img * c + ch) * hw;
      fn(ch, p, hw);
    }
  }
}

}  // namespace detail

template <typename T>
BatchNormResult<T> batchnorm(Tensor<T> x, BatchNormState<T>& state, Mode mode) {
  detail::check(x.rank() == 2 || x.rank() == 4,
                "batchnorm: input rank " + std::to_string(x.rank()) + ", expected 2 or 4");
  const std::size_t n = x.dim(0), c = x.dim(1);
  const std::size_t hw = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  detail::check(c == state.channels(), "batchnorm: input channels " + std::to_string(c) +
                                           " != state channels " +
                                           std::to_string(state.channels()));

  const double eps = state.epsilon;
  Tensor<T> y(x.shape());

  if (mode == Mode::kInfer) {
    if (state.update_count == 0) {
      throw std::logic_error("batchnorm: inference requested but running statistics were never "
                             "updated (no train-mode forward has run)");
    }
    detail::per_channel<const T>(n, c, hw, x.data(), [&](std::size_t ch, const T* p,
                                                         std::size_t len) {
      const double inv = 1.0 / std::sqrt(static_cast<double>(state.running_var[ch]) + eps);
      const double mean = state.running_mean[ch];
      const double g = state.gamma[ch], b = state.beta[ch];
      T* out = y.data() + (p - x.data());
      for (std::size_t i = 0; i < len; ++i) {
        out[i] = static_cast<T>(g * ((static_cast<double>(p[i]) - mean) * inv) + b);
      }
    });
    return {std::move(y), BatchNormCache<T>{}};
  }

  const std::size_t count = n * hw;
  detail::check(count >= 2, "batchnorm: train mode needs at least 2 values per channel, got " +
                                std::to_string(count));

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  detail::per_channel<const T>(n, c, hw, x.data(),
                               [&](std::size_t ch, const T* p, std::size_t len) {
                                 double s = 0.0;
                                 for (std::size_t i = 0; i < len; ++i) s += p[i];
                                 mean[ch] += s;
                               });
  for (std::size_t ch = 0; ch < c; ++ch) mean[ch] /= static_cast<double>(count);
  detail::per_channel<const T>(n, c, hw, x.data(),
                               [&](std::size_t ch, const T* p, std::size_t len) {
                                 double s = 0.0;
                                 for (std::size_t i = 0; i < len; ++i) {
                                   const double d = static_cast<double>(p[i]) - mean[ch];
                                   s += d * d;
                                 }
                                 var[ch] += s;
                               });
  for (std::size_t ch = 0; ch < c; ++ch) var[ch] /= static_cast<double>(count);  // biased

  BatchNormCache<T> cache;
  cache.inv_std.resize(c);
  cache.gamma = state.gamma;
  for (std::size_t ch = 0; ch < c; ++ch) {
    cache.inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + eps));
  }

  // normalize in place of the moved-in input, then apply the affine into y
  detail::per_channel<T>(n, c, hw, x.data(), [&](std::size_t ch, T* p, std::size_t len) {
    const double inv = cache.inv_std[ch];
    const double m = mean[ch];
    const double g = state.gamma[ch], b = state.beta[ch];
    T* out = y.data() + (p - x.data());
    for (std::size_t i = 0; i < len; ++i) {
      const double xh = (static_cast<double>(p[i]) - m) * inv;
      p[i] = static_cast<T>(xh);
      out[i] = static_cast<T>(g * xh + b);
    }
  });
  cache.xhat = std::move(x);

  const double mom = state.momentum;
  for (std::size_t ch = 0; ch < c; ++ch) {
    state.running_mean[ch] =
        static_cast<T>(mom * static_cast<double>(state.running_mean[ch]) + (1.0 - mom) * mean[ch]);
    state.running_var[ch] =
        static_cast<T>(mom * static_cast<double>(state.running_var[ch]) + (1.0 - mom) * var[ch]);
  }
  state.update_count++;
  return {std::move(y), std::move(cache)};
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& grad_y, BatchNormCache<T>& cache) {
  cache.guard.consume("batchnorm_backward");
  detail::check(!cache.xhat.empty(), "batchnorm_backward: cache is from infer mode");
  const Tensor<T>& xhat = cache.xhat;
  detail::check(grad_y.shape() == xhat.shape(), "batchnorm_backward: grad shape " +
                                                    shape_str(grad_y.shape()) + " != input shape " +
                                                    shape_str(xhat.shape()));
  const std::size_t n = xhat.dim(0), c = xhat.dim(1);
  const std::size_t hw = xhat.rank() == 4 ? xhat.dim(2) * xhat.dim(3) : 1;
  const double count = static_cast<double>(n * hw);

  BatchNormGrads<T> g{Tensor<T>(xhat.shape()), Tensor<T>({c}), Tensor<T>({c})};
  std::vector<double> sum_gy(c, 0.0), sum_gy_xhat(c, 0.0);
  detail::per_channel<const T>(n, c, hw, grad_y.data(),
                               [&](std::size_t ch, const T* p, std::size_t len) {
                                 const T* xh = xhat.data() + (p - grad_y.data());
                                 double s = 0.0, sx = 0.0;
                                 for (std::size_t i = 0; i < len; ++i) {
                                   s += p[i];
                                   sx += static_cast<double>(p[i]) * static_cast<double>(xh[i]);
                                 }
                                 sum_gy[ch] += s;
                                 sum_gy_xhat[ch] += sx;
                               });
  for (std::size_t ch = 0; ch < c; ++ch) {
    g.beta[ch] = static_cast<T>(sum_gy[ch]);
    g.gamma[ch] = static_cast<T>(sum_gy_xhat[ch]);
  }
  detail::per_channel<const T>(n, c, hw, grad_y.data(), [&](std::size_t ch, const T* p,
                                                            std::size_t len) {
    const T* xh = xhat.data() + (p - grad_y.data());
    T* out = g.x.data() + (p - grad_y.data());
    const double gm = cache.gamma[ch];
    const double inv = cache.inv_std[ch];
    const double k = gm * inv / count;
    for (std::size_t i = 0; i < len; ++i) {
      out[i] = static_cast<T>(k * (count * static_cast<double>(p[i]) - sum_gy[ch] -
                                   static_cast<double>(xh[i]) * sum_gy_xhat[ch]));
    }
  });
  return g;
}

// ---------------------------------------------------------------------------
// max pooling: 3x3 window, stride 2, no padding
// ---------------------------------------------------------------------------

inline std::size_t pooled_dim(std::size_t d) { return (d - 3) / 2 + 1; }

template <typename T>
struct MaxPoolCache {
  Shape in_shape;
  std::vector<std::uint32_t> argmax;  // linear input index per output element
  detail::CacheGuard guard;
};

template <typename T>
struct MaxPoolResult {
  Tensor<T> y;
  MaxPoolCache<T> cache;
};

template <typename T>
MaxPoolResult<T> maxpool(const Tensor<T>& x) {
  detail::check(x.rank() == 4, "maxpool: input rank " + std::to_string(x.rank()) + ", expected 4");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  detail::check(h >= 3, "maxpool: input height " + std::to_string(h) + " < window 3");
  detail::check(w >= 3, "maxpool: input width " + std::to_string(w) + " < window 3");
  const std::size_t ho = pooled_dim(h), wo = pooled_dim(w);

  Tensor<T> y({n, c, ho, wo});
  MaxPoolCache<T> cache{x.shape(), std::vector<std::uint32_t>(y.size()), {}};
  std::size_t out = 0;
  for (std::size_t img = 0; img < n; ++img) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T* plane = x.data() + (img * c + ch) * h * w;
      const std::size_t base = (img * c + ch) * h * w;
      for (std::size_t i = 0; i < ho; ++i) {
        for (std::size_t j = 0; j < wo; ++j, ++out) {
          const std::size_t i0 = i * 2, j0 = j * 2;
          T best = plane[i0 * w + j0];
          std::size_t best_ix = i0 * w + j0;
          for (std::size_t di = 0; di < 3; ++di) {
            for (std::size_t dj = 0; dj < 3; ++dj) {
              const std::size_t ix = (i0 + di) * w + (j0 + dj);
              if (plane[ix] > best) {  // first occurrence wins ties
                best = plane[ix];
                best_ix = ix;
              }
            }
          }
          y[out] = best;
          cache.argmax[out] = static_cast<std::uint32_t>(base + best_ix);
        }
      }
    }
  }
  return {std::move(y), std::move(cache)};
}

template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& grad_y, MaxPoolCache<T>& cache) {
  cache.guard.consume("maxpool_backward");
  detail::check(grad_y.size() == cache.argmax.size(),
                "maxpool_backward: grad size " + std::to_string(grad_y.size()) +
                    " != cached output size " + std::to_string(cache.argmax.size()));
  Tensor<T> gx(cache.in_shape);
  for (std::size_t i = 0; i < grad_y.size(); ++i) gx[cache.argmax[i]] += grad_y[i];
  return gx;
}

// ---------------------------------------------------------------------------
// leaky ReLU
// ---------------------------------------------------------------------------

template <typename T>
struct LeakyReluCache {
  Tensor<T> x;
  double slope = 0.0;
  detail::CacheGuard guard;
};

template <typename T>
struct LeakyReluResult {
  Tensor<T> y;
  LeakyReluCache<T> cache;
};

template <typename T>
LeakyReluResult<T> leaky_relu(Tensor<T> x, double slope) {
  detail::check(slope >= 0.0 && slope < 1.0,
                "leaky_relu: slope " + std::to_string(slope) + " outside [0,1)");
  Tensor<T> y(x.shape());
  const T a = static_cast<T>(slope);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : a * x[i];
  return {std::move(y), LeakyReluCache<T>{std::move(x), slope, {}}};
}

template <typename T>
Tensor<T> leaky_relu_backward(const Tensor<T>& grad_y, LeakyReluCache<T>& cache) {
  cache.guard.consume("leaky_relu_backward");
  detail::check(grad_y.shape() == cache.x.shape(),
                "leaky_relu_backward: grad shape " + shape_str(grad_y.shape()) +
                    " != input shape " + shape_str(cache.x.shape()));
  Tensor<T> gx(grad_y.shape());
  const T a = static_cast<T>(cache.slope);  // derivative at exactly 0 is the slope
  for (std::size_t i = 0; i < grad_y.size(); ++i) {
    gx[i] = cache.x[i] > T(0) ? grad_y[i] : a * grad_y[i];
  }
  return gx;
}

// ---------------------------------------------------------------------------
// dropout (inverted)
// ---------------------------------------------------------------------------

template <typename T>
struct DropoutCache {
  std::vector<std::uint8_t> keep;  // empty in infer mode
  double p = 0.0;
  detail::CacheGuard guard;
};

template <typename T>
struct DropoutResult {
  Tensor<T> y;
  DropoutCache<T> cache;
};

template <typename T>
DropoutResult<T> dropout(Tensor<T> x, double p, Mode mode, std::uint64_t seed) {
  detail::check(p >= 0.0 && p < 1.0, "dropout: p " + std::to_string(p) + " outside [0,1)");
  if (mode == Mode::kInfer) {
    return {std::move(x), DropoutCache<T>{{}, p, {}}};
  }
  Rng rng(seed);
  DropoutCache<T> cache{std::vector<std::uint8_t>(x.size()), p, {}};
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool keep = !(rng.uniform() < p);
    cache.keep[i] = keep;
    x[i] = keep ? x[i] * scale : T(0);
  }
  return {std::move(x), std::move(cache)};
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_y, DropoutCache<T>& cache) {
  cache.guard.consume("dropout_backward");
  if (cache.keep.empty()) return grad_y;  // infer mode: identity
  detail::check(grad_y.size() == cache.keep.size(),
                "dropout_backward: grad size " + std::to_string(grad_y.size()) +
                    " != mask size " + std::to_string(cache.keep.size()));
  Tensor<T> gx(grad_y.shape());
  const T scale = static_cast<T>(1.0 / (1.0 - cache.p));
  for (std::size_t i = 0; i < grad_y.size(); ++i) {
    gx[i] = cache.keep[i] ? grad_y[i] * scale : T(0);
  }
  return gx;
}

// ---------------------------------------------------------------------------
// dense (fully connected)
// ---------------------------------------------------------------------------

template <typename T>
struct DenseCache {
  Tensor<T> x;  // [N,D]
  Tensor<T> w;  // [D,M]
  detail::CacheGuard guard;
};

template <typename T>
struct DenseResult {
  Tensor<T> y;
  DenseCache<T> cache;
};

template <typename T>
struct DenseGrads {
  Tensor<T> x, w, b;
};

template <typename T>
DenseResult<T> dense(Tensor<T> x, const Tensor<T>& w, const Tensor<T>& b) {
  detail::check(x.rank() == 2, "dense: input rank " + std::to_string(x.rank()) + ", expected 2");
  detail::check(w.rank() == 2, "dense: weight rank " + std::to_string(w.rank()) + ", expected 2");
  detail::check(x.dim(1) == w.dim(0), "dense: input width " + std::to_string(x.dim(1)) +
                                          " != weight rows " + std::to_string(w.dim(0)));
  detail::check(b.rank() == 1 && b.dim(0) == w.dim(1),
                "dense: bias length " + std::to_string(b.size()) + " != weight columns " +
                    std::to_string(w.dim(1)));
  const std::size_t n = x.dim(0), d = x.dim(1), m = w.dim(1);
  Tensor<T> y({n, m});
  detail::gemm(false, false, static_cast<int>(n), static_cast<int>(m), static_cast<int>(d), T(1),
               x.data(), static_cast<int>(d), w.data(), static_cast<int>(m), T(0), y.data(),
               static_cast<int>(m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) y[i * m + j] += b[j];
  }
  return {std::move(y), DenseCache<T>{std::move(x), w, {}}};
}

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& grad_y, DenseCache<T>& cache) {
  cache.guard.consume("dense_backward");
  const std::size_t n = cache.x.dim(0), d = cache.x.dim(1), m = cache.w.dim(1);
  detail::check(grad_y.shape() == Shape({n, m}), "dense_backward: grad shape " +
                                                     shape_str(grad_y.shape()) +
                                                     " != output shape " + shape_str({n, m}));
  DenseGrads<T> g{Tensor<T>({n, d}), Tensor<T>({d, m}), Tensor<T>({m})};
  detail::gemm(false, true, static_cast<int>(n), static_cast<int>(d), static_cast<int>(m), T(1),
               grad_y.data(), static_cast<int>(m), cache.w.data(), static_cast<int>(m), T(0),
               g.x.data(), static_cast<int>(d));
  detail::gemm(true, false, static_cast<int>(d), static_cast<int>(m), static_cast<int>(n), T(1),
               cache.x.data(), static_cast<int>(d), grad_y.data(), static_cast<int>(m), T(0),
               g.w.data(), static_cast<int>(m));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) g.b[j] += grad_y[i * m + j];
  }
  return g;
}

// ---------------------------------------------------------------------------
// softmax + cross entropy
// ---------------------------------------------------------------------------

template <typename T>
struct SoftmaxXentResult {
  double loss = 0.0;          // mean over the batch
  Tensor<T> grad_logits;      // (softmax - onehot) / N
  Tensor<T> probs;            // row softmax, for accuracy bookkeeping
};

template <typename T>
SoftmaxXentResult<T> softmax_cross_entropy(const Tensor<T>& logits,
                                           const std::vector<int>& labels) {
  detail::check(logits.rank() == 2,
                "softmax_cross_entropy: logits rank " + std::to_string(logits.rank()) +
                    ", expected 2");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  detail::check(labels.size() == n, "softmax_cross_entropy: " + std::to_string(labels.size()) +
                                        " labels for batch of " + std::to_string(n));
  detail::check(logits.all_finite(), "softmax_cross_entropy: non-finite logits");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                                  " at row " + std::to_string(i) + " outside [0," +
                                  std::to_string(k) + ")");
    }
  }

  SoftmaxXentResult<T> r;
  r.grad_logits = Tensor<T>({n, k});
  r.probs = Tensor<T>({n, k});
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    const double log_denom = std::log(denom);
    total += log_denom - (static_cast<double>(row[labels[i]]) - mx);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - mx) / denom;
      r.probs[i * k + j] = static_cast<T>(p);
      r.grad_logits[i * k + j] =
          static_cast<T>((p - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0)) /
                         static_cast<double>(n));
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

/// Row argmax; ties resolve to the lowest index.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& scores) {
  detail::check(scores.rank() == 2, "argmax_rows: expected rank-2 tensor");
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (scores[i * k + j] > scores[i * k + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace radnet
