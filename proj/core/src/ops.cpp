#include "icnt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "icnt/threading.hpp"

namespace icnt {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

struct ConvDims {
  int64_t n, cin, h, w;
  int64_t cout, kh, kw;
  int64_t oh, ow;
  int64_t group_in, group_out;  // channels per group
};

ConvDims conv_dims(const std::vector<int64_t>& xs, const std::vector<int64_t>& ws, const Conv2dSpec& s) {
  require(xs.size() == 4, "conv2d input must be NxCxHxW, got " + shape_str(xs));
  require(ws.size() == 4, "conv2d weight must be CoutxCinGxKhxKw, got " + shape_str(ws));
  require(s.stride >= 1, "conv2d stride must be >= 1, got " + std::to_string(s.stride));
  require(s.padding >= 0, "conv2d padding must be >= 0, got " + std::to_string(s.padding));
  require(s.groups >= 1, "conv2d groups must be >= 1, got " + std::to_string(s.groups));
  ConvDims d;
  d.n = xs[0];
  d.cin = xs[1];
  d.h = xs[2];
  d.w = xs[3];
  d.cout = ws[0];
  d.kh = ws[2];
  d.kw = ws[3];
  require(d.cin % s.groups == 0, "conv2d groups " + std::to_string(s.groups) +
                                     " does not divide input channels " + std::to_string(d.cin));
  require(d.cout % s.groups == 0, "conv2d groups " + std::to_string(s.groups) +
                                      " does not divide output channels " + std::to_string(d.cout));
  d.group_in = d.cin / s.groups;
  d.group_out = d.cout / s.groups;
  require(ws[1] == d.group_in, "conv2d weight dim 1 is " + std::to_string(ws[1]) +
                                   " but input channels per group is " + std::to_string(d.group_in));
  d.oh = (d.h + 2 * s.padding - d.kh) / s.stride + 1;
  d.ow = (d.w + 2 * s.padding - d.kw) / s.stride + 1;
  require(d.h + 2 * s.padding >= d.kh && d.w + 2 * s.padding >= d.kw,
          "conv2d kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) +
              " exceeds padded input " + std::to_string(d.h + 2 * s.padding) + "x" +
              std::to_string(d.w + 2 * s.padding));
  return d;
}

// Valid output range [lo, hi) so that o*stride + k - pad lands inside [0, extent).
inline void valid_out_range(int64_t out_extent, int64_t in_extent, int64_t k, int stride, int pad,
                            int64_t* lo, int64_t* hi) {
  int64_t l = 0;
  if (pad > k) l = (pad - k + stride - 1) / stride;
  int64_t top = in_extent - 1 + pad - k;
  int64_t h = top < 0 ? 0 : top / stride + 1;
  *lo = std::min(l, out_extent);
  *hi = std::min(h, out_extent);
}

}  // namespace

template <typename T>
void axpy(int64_t n, T alpha, const T* x, T* y) {
  for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>* bias,
                          const Conv2dSpec& spec) {
  ConvDims d = conv_dims(x.shape, w.shape, spec);
  if (bias)
    require(bias->shape == std::vector<int64_t>{d.cout},
            "conv2d bias must be [" + std::to_string(d.cout) + "], got " + shape_str(bias->shape));
  TensorT<T> y({d.n, d.cout, d.oh, d.ow});

  const int stride = spec.stride, pad = spec.padding;
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  T* yp = y.ptr();

  parallel_for(d.n * d.cout, [&](int64_t begin, int64_t end) {
    for (int64_t plane = begin; plane < end; ++plane) {
      const int64_t n = plane / d.cout;
      const int64_t co = plane % d.cout;
      const int64_t g = co / d.group_out;
      T* out = yp + plane * d.oh * d.ow;
      const T bv = bias ? bias->data[co] : T(0);
      for (int64_t i = 0; i < d.oh * d.ow; ++i) out[i] = bv;
      for (int64_t cil = 0; cil < d.group_in; ++cil) {
        const int64_t ci = g * d.group_in + cil;
        const T* in = xp + (n * d.cin + ci) * d.h * d.w;
        for (int64_t kh = 0; kh < d.kh; ++kh) {
          int64_t oh_lo, oh_hi;
          valid_out_range(d.oh, d.h, kh, stride, pad, &oh_lo, &oh_hi);
          for (int64_t kw = 0; kw < d.kw; ++kw) {
            const T wv = wp[((co * d.group_in + cil) * d.kh + kh) * d.kw + kw];
            if (wv == T(0)) continue;
            int64_t ow_lo, ow_hi;
            valid_out_range(d.ow, d.w, kw, stride, pad, &ow_lo, &ow_hi);
            for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
              const int64_t ih = oh * stride + kh - pad;
              const T* xrow = in + ih * d.w + (kw - pad);
              T* yrow = out + oh * d.ow;
              if (stride == 1) {
                for (int64_t ow = ow_lo; ow < ow_hi; ++ow) yrow[ow] += wv * xrow[ow];
              } else {
                for (int64_t ow = ow_lo; ow < ow_hi; ++ow) yrow[ow] += wv * xrow[ow * stride];
              }
            }
          }
        }
      }
    }
  });
  detail::debug_check_finite(y, "conv2d");
  return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w, const Conv2dSpec& spec,
                     const TensorT<T>& gy, TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb) {
  ConvDims d = conv_dims(x.shape, w.shape, spec);
  require(gy.shape == std::vector<int64_t>({d.n, d.cout, d.oh, d.ow}),
          "conv2d grad shape " + shape_str(gy.shape) + " does not match output " +
              shape_str({d.n, d.cout, d.oh, d.ow}));
  const int stride = spec.stride, pad = spec.padding;
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  const T* gp = gy.ptr();

  if (gx) {
    T* gxp = gx->ptr();
    parallel_for(d.n * d.cin, [&](int64_t begin, int64_t end) {
      for (int64_t plane = begin; plane < end; ++plane) {
        const int64_t n = plane / d.cin;
        const int64_t ci = plane % d.cin;
        const int64_t g = ci / d.group_in;
        const int64_t cil = ci % d.group_in;
        T* gin = gxp + plane * d.h * d.w;
        for (int64_t col = 0; col < d.group_out; ++col) {
          const int64_t co = g * d.group_out + col;
          const T* gout = gp + (n * d.cout + co) * d.oh * d.ow;
          for (int64_t kh = 0; kh < d.kh; ++kh) {
            int64_t oh_lo, oh_hi;
            valid_out_range(d.oh, d.h, kh, stride, pad, &oh_lo, &oh_hi);
            for (int64_t kw = 0; kw < d.kw; ++kw) {
              const T wv = wp[((co * d.group_in + cil) * d.kh + kh) * d.kw + kw];
              if (wv == T(0)) continue;
              int64_t ow_lo, ow_hi;
              valid_out_range(d.ow, d.w, kw, stride, pad, &ow_lo, &ow_hi);
              for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                const int64_t ih = oh * stride + kh - pad;
                T* grow = gin + ih * d.w + (kw - pad);
                const T* gyrow = gout + oh * d.ow;
                if (stride == 1) {
                  for (int64_t ow = ow_lo; ow < ow_hi; ++ow) grow[ow] += wv * gyrow[ow];
                } else {
                  for (int64_t ow = ow_lo; ow < ow_hi; ++ow) grow[ow * stride] += wv * gyrow[ow];
                }
              }
            }
          }
        }
      }
    });
  }

  if (gw || gb) {
    parallel_for(d.cout, [&](int64_t begin, int64_t end) {
      for (int64_t co = begin; co < end; ++co) {
        const int64_t g = co / d.group_out;
        if (gb) {
          T acc = 0;
          for (int64_t n = 0; n < d.n; ++n) {
            const T* gout = gp + (n * d.cout + co) * d.oh * d.ow;
            for (int64_t i = 0; i < d.oh * d.ow; ++i) acc += gout[i];
          }
          gb->data[co] += acc;
        }
        if (!gw) continue;
        for (int64_t cil = 0; cil < d.group_in; ++cil) {
          const int64_t ci = g * d.group_in + cil;
          for (int64_t kh = 0; kh < d.kh; ++kh) {
            int64_t oh_lo, oh_hi;
            valid_out_range(d.oh, d.h, kh, stride, pad, &oh_lo, &oh_hi);
            for (int64_t kw = 0; kw < d.kw; ++kw) {
              int64_t ow_lo, ow_hi;
              valid_out_range(d.ow, d.w, kw, stride, pad, &ow_lo, &ow_hi);
              T acc = 0;
              for (int64_t n = 0; n < d.n; ++n) {
                const T* gout = gp + (n * d.cout + co) * d.oh * d.ow;
                const T* in = xp + (n * d.cin + ci) * d.h * d.w;
                for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
                  const int64_t ih = oh * stride + kh - pad;
                  const T* xrow = in + ih * d.w + (kw - pad);
                  const T* gyrow = gout + oh * d.ow;
                  if (stride == 1) {
                    for (int64_t ow = ow_lo; ow < ow_hi; ++ow) acc += gyrow[ow] * xrow[ow];
                  } else {
                    for (int64_t ow = ow_lo; ow < ow_hi; ++ow) acc += gyrow[ow] * xrow[ow * stride];
                  }
                }
              }
              gw->data[((co * d.group_in + cil) * d.kh + kh) * d.kw + kw] += acc;
            }
          }
        }
      }
    });
  }
}

template <typename T>
TensorT<T> linear_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
  require(x.rank() == 2, "linear input must be NxDin, got " + shape_str(x.shape));
  require(w.rank() == 2, "linear weight must be DoutxDin, got " + shape_str(w.shape));
  const int64_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  require(w.dim(1) == din, "linear weight inner dim " + std::to_string(w.dim(1)) +
                               " does not match input dim " + std::to_string(din));
  require(b.shape == std::vector<int64_t>{dout},
          "linear bias must be [" + std::to_string(dout) + "], got " + shape_str(b.shape));
  TensorT<T> y({n, dout});
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  const T* bp = b.ptr();
  T* yp = y.ptr();
  parallel_for(n, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      const T* xrow = xp + i * din;
      T* yrow = yp + i * dout;
      for (int64_t o = 0; o < dout; ++o) {
        const T* wrow = wp + o * din;
        T acc = bp[o];
        for (int64_t k = 0; k < din; ++k) acc += xrow[k] * wrow[k];
        yrow[o] = acc;
      }
    }
  });
  detail::debug_check_finite(y, "linear");
  return y;
}

template <typename T>
void linear_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                     TensorT<T>* gx, TensorT<T>* gw, TensorT<T>* gb) {
  const int64_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  require(gy.shape == std::vector<int64_t>({n, dout}),
          "linear grad shape " + shape_str(gy.shape) + " does not match output [" +
              std::to_string(n) + "x" + std::to_string(dout) + "]");
  const T* xp = x.ptr();
  const T* wp = w.ptr();
  const T* gp = gy.ptr();
  if (gx) {
    T* gxp = gx->ptr();
    parallel_for(n, [&](int64_t begin, int64_t end) {
      for (int64_t i = begin; i < end; ++i) {
        T* grow = gxp + i * din;
        const T* gyrow = gp + i * dout;
        for (int64_t o = 0; o < dout; ++o) {
          const T g = gyrow[o];
          if (g == T(0)) continue;
          axpy(din, g, wp + o * din, grow);
        }
      }
    });
  }
  if (gw || gb) {
    parallel_for(dout, [&](int64_t begin, int64_t end) {
      for (int64_t o = begin; o < end; ++o) {
        T* gwrow = gw ? gw->ptr() + o * din : nullptr;
        T bacc = 0;
        for (int64_t i = 0; i < n; ++i) {
          const T g = gp[i * dout + o];
          bacc += g;
          if (gwrow && g != T(0)) axpy(din, g, xp + i * din, gwrow);
        }
        if (gb) gb->data[o] += bacc;
      }
    });
  }
}

namespace {

struct NormView {
  int64_t outer, c, inner;
};

template <typename T>
NormView norm_view(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta) {
  require(x.rank() >= 2, "layer_norm input must have a channel dimension, got " + shape_str(x.shape));
  NormView v;
  v.outer = x.dim(0);
  v.c = x.dim(1);
  v.inner = 1;
  for (size_t i = 2; i < x.rank(); ++i) v.inner *= x.dim(i);
  require(gamma.shape == std::vector<int64_t>{v.c},
          "layer_norm gamma must be [" + std::to_string(v.c) + "], got " + shape_str(gamma.shape));
  require(beta.shape == std::vector<int64_t>{v.c},
          "layer_norm beta must be [" + std::to_string(v.c) + "], got " + shape_str(beta.shape));
  return v;
}

}  // namespace

template <typename T>
TensorT<T> layer_norm_forward(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                              double eps, LayerNormStats* stats) {
  require(eps > 0, "layer_norm eps must be > 0");
  NormView v = norm_view(x, gamma, beta);
  TensorT<T> y(x.shape);
  if (stats) {
    stats->mean.assign(static_cast<size_t>(v.outer * v.inner), 0.0);
    stats->rstd.assign(static_cast<size_t>(v.outer * v.inner), 0.0);
  }
  const T* xp = x.ptr();
  const T* gp = gamma.ptr();
  const T* bp = beta.ptr();
  T* yp = y.ptr();
  parallel_for(v.outer, [&](int64_t begin, int64_t end) {
    for (int64_t o = begin; o < end; ++o) {
      for (int64_t in = 0; in < v.inner; ++in) {
        const T* base = xp + (o * v.c) * v.inner + in;
        double mean = 0;
        for (int64_t c = 0; c < v.c; ++c) mean += base[c * v.inner];
        mean /= static_cast<double>(v.c);
        double var = 0;
        for (int64_t c = 0; c < v.c; ++c) {
          double dd = base[c * v.inner] - mean;
          var += dd * dd;
        }
        var /= static_cast<double>(v.c);
        const double rstd = 1.0 / std::sqrt(var + eps);
        if (stats) {
          stats->mean[static_cast<size_t>(o * v.inner + in)] = mean;
          stats->rstd[static_cast<size_t>(o * v.inner + in)] = rstd;
        }
        T* out = yp + (o * v.c) * v.inner + in;
        for (int64_t c = 0; c < v.c; ++c) {
          double xhat = (base[c * v.inner] - mean) * rstd;
          out[c * v.inner] = static_cast<T>(xhat * gp[c] + bp[c]);
        }
      }
    }
  });
  detail::debug_check_finite(y, "layer_norm");
  return y;
}

template <typename T>
void layer_norm_backward(const TensorT<T>& x, const TensorT<T>& gamma, const LayerNormStats& stats,
                         const TensorT<T>& gy, TensorT<T>* gx, TensorT<T>* ggamma, TensorT<T>* gbeta) {
  NormView v{x.dim(0), x.dim(1), 1};
  for (size_t i = 2; i < x.rank(); ++i) v.inner *= x.dim(i);
  require(gy.shape == x.shape, "layer_norm grad shape " + shape_str(gy.shape) +
                                   " does not match input " + shape_str(x.shape));
  const T* xp = x.ptr();
  const T* gp = gamma.ptr();
  const T* gyp = gy.ptr();
  if (gx) {
    T* gxp = gx->ptr();
    parallel_for(v.outer, [&](int64_t begin, int64_t end) {
      for (int64_t o = begin; o < end; ++o) {
        for (int64_t in = 0; in < v.inner; ++in) {
          const size_t pos = static_cast<size_t>(o * v.inner + in);
          const double mean = stats.mean[pos];
          const double rstd = stats.rstd[pos];
          const T* xb = xp + (o * v.c) * v.inner + in;
          const T* gyb = gyp + (o * v.c) * v.inner + in;
          double s1 = 0, s2 = 0;
          for (int64_t c = 0; c < v.c; ++c) {
            const double dyg = static_cast<double>(gyb[c * v.inner]) * gp[c];
            const double xhat = (xb[c * v.inner] - mean) * rstd;
            s1 += dyg;
            s2 += dyg * xhat;
          }
          s1 /= static_cast<double>(v.c);
          s2 /= static_cast<double>(v.c);
          T* gout = gxp + (o * v.c) * v.inner + in;
          for (int64_t c = 0; c < v.c; ++c) {
            const double dyg = static_cast<double>(gyb[c * v.inner]) * gp[c];
            const double xhat = (xb[c * v.inner] - mean) * rstd;
            gout[c * v.inner] += static_cast<T>((dyg - s1 - xhat * s2) * rstd);
          }
        }
      }
    });
  }
  if (ggamma || gbeta) {
    parallel_for(v.c, [&](int64_t begin, int64_t end) {
      for (int64_t c = begin; c < end; ++c) {
        double dg = 0, db = 0;
        for (int64_t o = 0; o < v.outer; ++o) {
          for (int64_t in = 0; in < v.inner; ++in) {
            const size_t pos = static_cast<size_t>(o * v.inner + in);
            const double xhat = (xp[(o * v.c + c) * v.inner + in] - stats.mean[pos]) * stats.rstd[pos];
            const double g = gyp[(o * v.c + c) * v.inner + in];
            dg += g * xhat;
            db += g;
          }
        }
        if (ggamma) ggamma->data[c] += static_cast<T>(dg);
        if (gbeta) gbeta->data[c] += static_cast<T>(db);
      }
    });
  }
}

namespace {

template <typename T>
inline T gelu_value(T x) {
  return static_cast<T>(0.5 * static_cast<double>(x) *
                        (1.0 + std::erf(static_cast<double>(x) * 0.7071067811865475244)));
}

template <typename T>
inline T gelu_grad(T x) {
  const double xd = static_cast<double>(x);
  const double cdf = 0.5 * (1.0 + std::erf(xd * 0.7071067811865475244));
  const double pdf = std::exp(-0.5 * xd * xd) * 0.3989422804014326779;
  return static_cast<T>(cdf + xd * pdf);
}

template <typename T>
inline T sigmoid_value(T x) {
  const double xd = static_cast<double>(x);
  if (xd >= 0) return static_cast<T>(1.0 / (1.0 + std::exp(-xd)));
  const double e = std::exp(xd);
  return static_cast<T>(e / (1.0 + e));
}

}  // namespace

template <typename T>
TensorT<T> activation_forward(const TensorT<T>& x, Activation kind) {
  TensorT<T> y(x.shape);
  const T* xp = x.ptr();
  T* yp = y.ptr();
  const int64_t n = x.numel();
  parallel_for(n, [&](int64_t begin, int64_t end) {
    switch (kind) {
      case Activation::kRelu:
        for (int64_t i = begin; i < end; ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);
        break;
      case Activation::kGelu:
        for (int64_t i = begin; i < end; ++i) yp[i] = gelu_value(xp[i]);
        break;
      case Activation::kSigmoid:
        for (int64_t i = begin; i < end; ++i) yp[i] = sigmoid_value(xp[i]);
        break;
    }
  });
  return y;
}

template <typename T>
void activation_backward(const TensorT<T>& x, Activation kind, const TensorT<T>& gy, TensorT<T>* gx) {
  require(gy.shape == x.shape, "activation grad shape mismatch");
  const T* xp = x.ptr();
  const T* gp = gy.ptr();
  T* out = gx->ptr();
  const int64_t n = x.numel();
  parallel_for(n, [&](int64_t begin, int64_t end) {
    switch (kind) {
      case Activation::kRelu:
        for (int64_t i = begin; i < end; ++i)
          if (xp[i] > T(0)) out[i] += gp[i];
        break;
      case Activation::kGelu:
        for (int64_t i = begin; i < end; ++i) out[i] += gp[i] * gelu_grad(xp[i]);
        break;
      case Activation::kSigmoid:
        for (int64_t i = begin; i < end; ++i) {
          const T s = sigmoid_value(xp[i]);
          out[i] += gp[i] * s * (T(1) - s);
        }
        break;
    }
  });
}

namespace {

template <typename T>
void check_pool_input(const TensorT<T>& x, const char* op) {
  require(x.rank() == 4, std::string(op) + " input must be NxCxHxW, got " + shape_str(x.shape));
  require(x.dim(2) * x.dim(3) >= 1,
          std::string(op) + " requires a nonempty spatial extent, got " + shape_str(x.shape));
}

}  // namespace

template <typename T>
TensorT<T> global_avg_pool_forward(const TensorT<T>& x) {
  check_pool_input(x, "global_avg_pool");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  TensorT<T> y({n, c});
  const T* xp = x.ptr();
  T* yp = y.ptr();
  parallel_for(n * c, [&](int64_t begin, int64_t end) {
    for (int64_t p = begin; p < end; ++p) {
      const T* plane = xp + p * hw;
      T acc = 0;
      for (int64_t i = 0; i < hw; ++i) acc += plane[i];
      yp[p] = acc / static_cast<T>(hw);
    }
  });
  return y;
}

template <typename T>
void global_avg_pool_backward(const std::vector<int64_t>& x_shape, const TensorT<T>& gy, TensorT<T>* gx) {
  const int64_t n = x_shape[0], c = x_shape[1], hw = x_shape[2] * x_shape[3];
  require(gy.shape == std::vector<int64_t>({n, c}), "global_avg_pool grad shape mismatch");
  const T* gp = gy.ptr();
  T* out = gx->ptr();
  parallel_for(n * c, [&](int64_t begin, int64_t end) {
    for (int64_t p = begin; p < end; ++p) {
      const T g = gp[p] / static_cast<T>(hw);
      T* plane = out + p * hw;
      for (int64_t i = 0; i < hw; ++i) plane[i] += g;
    }
  });
}

template <typename T>
TensorT<T> global_max_pool_forward(const TensorT<T>& x, std::vector<int64_t>* argmax) {
  check_pool_input(x, "global_max_pool");
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  TensorT<T> y({n, c});
  if (argmax) argmax->assign(static_cast<size_t>(n * c), 0);
  const T* xp = x.ptr();
  T* yp = y.ptr();
  parallel_for(n * c, [&](int64_t begin, int64_t end) {
    for (int64_t p = begin; p < end; ++p) {
      const T* plane = xp + p * hw;
      T best = plane[0];
      int64_t best_i = 0;
      for (int64_t i = 1; i < hw; ++i) {
        if (plane[i] > best) {
          best = plane[i];
          best_i = i;
        }
      }
      yp[p] = best;
      if (argmax) (*argmax)[static_cast<size_t>(p)] = best_i;
    }
  });
  return y;
}

template <typename T>
void global_max_pool_backward(const std::vector<int64_t>& x_shape, const std::vector<int64_t>& argmax,
                              const TensorT<T>& gy, TensorT<T>* gx) {
  const int64_t n = x_shape[0], c = x_shape[1], hw = x_shape[2] * x_shape[3];
  require(gy.shape == std::vector<int64_t>({n, c}), "global_max_pool grad shape mismatch");
  const T* gp = gy.ptr();
  T* out = gx->ptr();
  for (int64_t p = 0; p < n * c; ++p) out[p * hw + argmax[static_cast<size_t>(p)]] += gp[p];
}

template <typename T>
TensorT<T> max_pool2d_forward(const TensorT<T>& x, int kernel, int stride, std::vector<int64_t>* argmax) {
  check_pool_input(x, "max_pool2d");
  require(kernel >= 1 && stride >= 1, "max_pool2d kernel and stride must be >= 1");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(h >= kernel && w >= kernel, "max_pool2d window " + std::to_string(kernel) +
                                          " exceeds input " + shape_str(x.shape));
  const int64_t oh = (h - kernel) / stride + 1;
  const int64_t ow = (w - kernel) / stride + 1;
  TensorT<T> y({n, c, oh, ow});
  if (argmax) argmax->assign(static_cast<size_t>(y.numel()), 0);
  const T* xp = x.ptr();
  T* yp = y.ptr();
  parallel_for(n * c, [&](int64_t begin, int64_t end) {
    for (int64_t p = begin; p < end; ++p) {
      const T* plane = xp + p * h * w;
      T* out = yp + p * oh * ow;
      for (int64_t i = 0; i < oh; ++i) {
        for (int64_t j = 0; j < ow; ++j) {
          T best = plane[i * stride * w + j * stride];
          int64_t best_idx = i * stride * w + j * stride;
          for (int64_t ki = 0; ki < kernel; ++ki) {
            for (int64_t kj = 0; kj < kernel; ++kj) {
              const int64_t idx = (i * stride + ki) * w + j * stride + kj;
              if (plane[idx] > best) {
                best = plane[idx];
                best_idx = idx;
              }
            }
          }
          out[i * ow + j] = best;
          if (argmax) (*argmax)[static_cast<size_t>(p * oh * ow + i * ow + j)] = best_idx;
        }
      }
    }
  });
  return y;
}

template <typename T>
void max_pool2d_backward(const std::vector<int64_t>& x_shape, const std::vector<int64_t>& argmax,
                         const TensorT<T>& gy, TensorT<T>* gx) {
  const int64_t planes = x_shape[0] * x_shape[1];
  const int64_t hw = x_shape[2] * x_shape[3];
  const int64_t ohw = gy.dim(2) * gy.dim(3);
  const T* gp = gy.ptr();
  T* out = gx->ptr();
  parallel_for(planes, [&](int64_t begin, int64_t end) {
    for (int64_t p = begin; p < end; ++p) {
      T* plane = out + p * hw;
      for (int64_t i = 0; i < ohw; ++i)
        plane[argmax[static_cast<size_t>(p * ohw + i)]] += gp[p * ohw + i];
    }
  });
}

template <typename T>
TensorT<T> concat_cols_forward(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.rank() == 2 && b.rank() == 2, "concat expects rank-2 tensors, got " +
                                              shape_str(a.shape) + " and " + shape_str(b.shape));
  require(a.dim(0) == b.dim(0), "concat batch mismatch: " + std::to_string(a.dim(0)) + " vs " +
                                    std::to_string(b.dim(0)));
  const int64_t n = a.dim(0), c1 = a.dim(1), c2 = b.dim(1);
  TensorT<T> y({n, c1 + c2});
  for (int64_t i = 0; i < n; ++i) {
    std::copy_n(a.ptr() + i * c1, c1, y.ptr() + i * (c1 + c2));
    std::copy_n(b.ptr() + i * c2, c2, y.ptr() + i * (c1 + c2) + c1);
  }
  return y;
}

template <typename T>
void concat_cols_backward(int64_t c1, int64_t c2, const TensorT<T>& gy, TensorT<T>* ga, TensorT<T>* gb) {
  const int64_t n = gy.dim(0);
  for (int64_t i = 0; i < n; ++i) {
    if (ga) axpy(c1, T(1), gy.ptr() + i * (c1 + c2), ga->ptr() + i * c1);
    if (gb) axpy(c2, T(1), gy.ptr() + i * (c1 + c2) + c1, gb->ptr() + i * c2);
  }
}

template <typename T>
std::vector<T> dropout_mask(int64_t n, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout probability must be in [0,1), got " + std::to_string(p));
  std::vector<T> mask(static_cast<size_t>(n));
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (int64_t i = 0; i < n; ++i) mask[static_cast<size_t>(i)] = rng.uniform() < p ? T(0) : keep;
  return mask;
}

template <typename T>
TensorT<T> dropout_apply(const TensorT<T>& x, const std::vector<T>& mask) {
  TensorT<T> y(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i)
    y.data[static_cast<size_t>(i)] = x.data[static_cast<size_t>(i)] * mask[static_cast<size_t>(i)];
  return y;
}

template <typename T>
TensorT<T> add_forward(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.shape == b.shape, "add shape mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  TensorT<T> y(a.shape);
  const int64_t n = a.numel();
  parallel_for(n, [&](int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) y.data[i] = a.data[i] + b.data[i];
  });
  return y;
}

template <typename T>
TensorT<T> mul_forward(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.shape == b.shape, "mul shape mismatch: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  TensorT<T> y(a.shape);
  for (int64_t i = 0; i < a.numel(); ++i) y.data[i] = a.data[i] * b.data[i];
  return y;
}

template <typename T>
TensorT<T> reduce_mean_forward(const TensorT<T>& x) {
  require(x.numel() > 0, "reduce_mean of an empty tensor");
  double acc = 0;
  for (T v : x.data) acc += v;
  return TensorT<T>::scalar(static_cast<T>(acc / static_cast<double>(x.numel())));
}

template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& logits) {
  require(logits.rank() == 2, "softmax expects NxK logits, got " + shape_str(logits.shape));
  const int64_t n = logits.dim(0), k = logits.dim(1);
  TensorT<T> probs({n, k});
  for (int64_t i = 0; i < n; ++i) {
    const T* row = logits.ptr() + i * k;
    T* out = probs.ptr() + i * k;
    T mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0;
    for (int64_t j = 0; j < k; ++j) {
      const double e = std::exp(static_cast<double>(row[j] - mx));
      out[j] = static_cast<T>(e);
      sum += e;
    }
    for (int64_t j = 0; j < k; ++j) out[j] = static_cast<T>(out[j] / sum);
  }
  return probs;
}

template <typename T>
T cross_entropy_forward(const TensorT<T>& logits, const std::vector<int>& labels, TensorT<T>* probs) {
  require(logits.rank() == 2, "cross_entropy expects NxK logits, got " + shape_str(logits.shape));
  const int64_t n = logits.dim(0), k = logits.dim(1);
  require(static_cast<int64_t>(labels.size()) == n, "cross_entropy labels size " +
                                                        std::to_string(labels.size()) +
                                                        " does not match batch " + std::to_string(n));
  for (int64_t i = 0; i < n; ++i)
    require(labels[static_cast<size_t>(i)] >= 0 && labels[static_cast<size_t>(i)] < k,
            "label " + std::to_string(labels[static_cast<size_t>(i)]) + " out of range [0," +
                std::to_string(k) + ") at row " + std::to_string(i));
  if (probs) *probs = softmax_rows(logits);
  double total = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T* row = logits.ptr() + i * k;
    T mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0;
    for (int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
    const double lse = static_cast<double>(mx) + std::log(sum);
    total += lse - static_cast<double>(row[labels[static_cast<size_t>(i)]]);
  }
  return static_cast<T>(total / static_cast<double>(n));
}

template <typename T>
void cross_entropy_backward(const TensorT<T>& probs, const std::vector<int>& labels, T gy,
                            TensorT<T>* glogits) {
  const int64_t n = probs.dim(0), k = probs.dim(1);
  const T scale = gy / static_cast<T>(n);
  for (int64_t i = 0; i < n; ++i) {
    const T* prow = probs.ptr() + i * k;
    T* grow = glogits->ptr() + i * k;
    const int lbl = labels[static_cast<size_t>(i)];
    for (int64_t j = 0; j < k; ++j) grow[j] += scale * (prow[j] - (j == lbl ? T(1) : T(0)));
  }
}

template <typename T>
T feature_smoothing_forward(const TensorT<T>& features, const std::vector<int>& labels,
                            TensorT<T>* grad_unit) {
  require(features.rank() == 2, "feature_smoothing expects NxD features, got " + shape_str(features.shape));
  const int64_t n = features.dim(0), d = features.dim(1);
  require(static_cast<int64_t>(labels.size()) == n,
          "feature_smoothing labels size does not match batch " + std::to_string(n));
  require(n >= 1, "feature_smoothing requires a nonempty batch");

  int max_label = 0;
  for (int l : labels) {
    require(l >= 0, "negative class label " + std::to_string(l));
    max_label = std::max(max_label, l);
  }
  std::vector<int64_t> counts(static_cast<size_t>(max_label) + 1, 0);
  for (int l : labels) ++counts[static_cast<size_t>(l)];
  int64_t present = 0;
  for (int64_t c : counts) present += c > 0 ? 1 : 0;

  // per-class centers (f64 accumulation keeps the f32 path stable)
  std::vector<double> centers(counts.size() * static_cast<size_t>(d), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const T* row = features.ptr() + i * d;
    double* cen = centers.data() + static_cast<size_t>(labels[static_cast<size_t>(i)]) * d;
    for (int64_t j = 0; j < d; ++j) cen[j] += row[j];
  }
  for (size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    double* cen = centers.data() + c * static_cast<size_t>(d);
    for (int64_t j = 0; j < d; ++j) cen[j] /= static_cast<double>(counts[c]);
  }

  if (grad_unit) *grad_unit = TensorT<T>::zeros(features.shape);
  double total = 0;
  for (int64_t i = 0; i < n; ++i) {
    const size_t c = static_cast<size_t>(labels[static_cast<size_t>(i)]);
    const double coeff = 1.0 / (static_cast<double>(present) * static_cast<double>(counts[c]));
    const T* row = features.ptr() + i * d;
    const double* cen = centers.data() + c * static_cast<size_t>(d);
    double dist2 = 0;
    for (int64_t j = 0; j < d; ++j) {
      const double diff = static_cast<double>(row[j]) - cen[j];
      dist2 += diff * diff;
      if (grad_unit) grad_unit->data[static_cast<size_t>(i * d + j)] = static_cast<T>(2.0 * coeff * diff);
    }
    total += coeff * dist2;
  }
  return static_cast<T>(total);
}

// explicit instantiations
#define ICNT_INSTANTIATE_OPS(T)                                                                        \
  template void axpy<T>(int64_t, T, const T*, T*);                                                     \
  template TensorT<T> conv2d_forward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>*,       \
                                        const Conv2dSpec&);                                            \
  template void conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&, const Conv2dSpec&,            \
                                   const TensorT<T>&, TensorT<T>*, TensorT<T>*, TensorT<T>*);          \
  template TensorT<T> linear_forward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);      \
  template void linear_backward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,            \
                                   TensorT<T>*, TensorT<T>*, TensorT<T>*);                             \
  template TensorT<T> layer_norm_forward<T>(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,   \
                                            double, LayerNormStats*);                                  \
  template void layer_norm_backward<T>(const TensorT<T>&, const TensorT<T>&, const LayerNormStats&,    \
                                       const TensorT<T>&, TensorT<T>*, TensorT<T>*, TensorT<T>*);      \
  template TensorT<T> activation_forward<T>(const TensorT<T>&, Activation);                            \
  template void activation_backward<T>(const TensorT<T>&, Activation, const TensorT<T>&, TensorT<T>*); \
  template TensorT<T> global_avg_pool_forward<T>(const TensorT<T>&);                                   \
  template void global_avg_pool_backward<T>(const std::vector<int64_t>&, const TensorT<T>&,            \
                                            TensorT<T>*);                                              \
  template TensorT<T> global_max_pool_forward<T>(const TensorT<T>&, std::vector<int64_t>*);            \
  template void global_max_pool_backward<T>(const std::vector<int64_t>&, const std::vector<int64_t>&,  \
                                            const TensorT<T>&, TensorT<T>*);                           \
  template TensorT<T> max_pool2d_forward<T>(const TensorT<T>&, int, int, std::vector<int64_t>*);       \
  template void max_pool2d_backward<T>(const std::vector<int64_t>&, const std::vector<int64_t>&,       \
                                       const TensorT<T>&, TensorT<T>*);                                \
  template TensorT<T> concat_cols_forward<T>(const TensorT<T>&, const TensorT<T>&);                    \
  template void concat_cols_backward<T>(int64_t, int64_t, const TensorT<T>&, TensorT<T>*,              \
                                        TensorT<T>*);                                                  \
  template std::vector<T> dropout_mask<T>(int64_t, double, Rng&);                                      \
  template TensorT<T> dropout_apply<T>(const TensorT<T>&, const std::vector<T>&);                      \
  template TensorT<T> add_forward<T>(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> mul_forward<T>(const TensorT<T>&, const TensorT<T>&);                            \
  template TensorT<T> reduce_mean_forward<T>(const TensorT<T>&);                                       \
  template TensorT<T> softmax_rows<T>(const TensorT<T>&);                                              \
  template T cross_entropy_forward<T>(const TensorT<T>&, const std::vector<int>&, TensorT<T>*);        \
  template void cross_entropy_backward<T>(const TensorT<T>&, const std::vector<int>&, T, TensorT<T>*); \
  template T feature_smoothing_forward<T>(const TensorT<T>&, const std::vector<int>&, TensorT<T>*);

ICNT_INSTANTIATE_OPS(float)
ICNT_INSTANTIATE_OPS(double)

#undef ICNT_INSTANTIATE_OPS

}  // namespace icnt
