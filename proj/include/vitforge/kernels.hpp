#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>

#include "vitforge/errors.hpp"
#include "vitforge/tensor.hpp"
#include "vitforge/threading.hpp"

namespace vitforge {

// ---------------------------------------------------------------------------
// Elementwise / reduction helpers
// ---------------------------------------------------------------------------

template <class T>
void add_inplace(TensorT<T>& dst, const TensorT<T>& src) {
  if (!dst.same_shape(src)) {
    throw DimensionError("add: shape mismatch " + dst.shape_str() + " vs " +
                         src.shape_str());
  }
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  TensorT<T> out = a;
  add_inplace(out, b);
  return out;
}

// x[r, :] += bias for every row r.
template <class T>
void add_bias_rows(TensorT<T>& x, const TensorT<T>& bias) {
  const int cols = x.dim(x.rank() - 1);
  if (bias.rank() != 1 || bias.dim(0) != cols) {
    throw DimensionError("bias " + bias.shape_str() + " does not match row width " +
                         std::to_string(cols));
  }
  const std::size_t rows = x.size() / static_cast<std::size_t>(cols);
  T* d = x.data();
  const T* b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) d[r * cols + c] += b[c];
  }
}

template <class T>
void scale_inplace(TensorT<T>& t, T s) {
  T* d = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) d[i] *= s;
}

// Copy of columns [col0, col0+width) of a rank-2 tensor.
template <class T>
TensorT<T> slice_cols(const TensorT<T>& x, int col0, int width) {
  const int rows = x.dim(0), cols = x.dim(1);
  if (col0 < 0 || col0 + width > cols) {
    throw DimensionError("slice_cols out of range for " + x.shape_str());
  }
  TensorT<T> out({rows, width});
  for (int r = 0; r < rows; ++r) {
    const T* src = x.data() + static_cast<std::size_t>(r) * cols + col0;
    T* dst = out.data() + static_cast<std::size_t>(r) * width;
    for (int c = 0; c < width; ++c) dst[c] = src[c];
  }
  return out;
}

// Writes src into dst[:, col0 : col0+src.cols].
template <class T>
void set_cols(TensorT<T>& dst, const TensorT<T>& src, int col0) {
  const int rows = dst.dim(0), cols = dst.dim(1), width = src.dim(1);
  if (src.dim(0) != rows || col0 < 0 || col0 + width > cols) {
    throw DimensionError("set_cols: " + src.shape_str() + " does not fit in " +
                         dst.shape_str() + " at column " + std::to_string(col0));
  }
  for (int r = 0; r < rows; ++r) {
    const T* s = src.data() + static_cast<std::size_t>(r) * width;
    T* d = dst.data() + static_cast<std::size_t>(r) * cols + col0;
    for (int c = 0; c < width; ++c) d[c] = s[c];
  }
}

// Column sums of a rank-2 tensor, accumulated top to bottom.
template <class T>
TensorT<T> column_sums(const TensorT<T>& x) {
  const int rows = x.dim(0), cols = x.dim(1);
  TensorT<T> out({cols});
  const T* d = x.data();
  T* o = out.data();
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) o[c] += d[static_cast<std::size_t>(r) * cols + c];
  }
  return out;
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

// C = A * B for rank-2 tensors. Each output element accumulates its k-terms
// in index order, so results are bit-identical across runs and thread counts.
template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul requires rank-2 tensors: " + a.shape_str() +
                         " vs " + b.shape_str());
  }
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ: " + a.shape_str() +
                         " vs " + b.shape_str());
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  TensorT<T> c({m, n});
  const T* pa = a.data();
  const T* pb = b.data();
  T* pc = c.data();
  parallel_for(
      m,
      [&](std::int64_t i) {
        T* crow = pc + i * n;
        const T* arow = pa + i * k;
        for (int kk = 0; kk < k; ++kk) {
          const T aik = arow[kk];
          if (aik == T(0)) continue;
          const T* brow = pb + static_cast<std::size_t>(kk) * n;
          for (int j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
      },
      /*min_per_thread=*/std::max<std::int64_t>(1, 16384 / std::max(1, k * n)));
  return c;
}

template <class T>
struct MatmulGradsT {
  TensorT<T> da;
  TensorT<T> db;
};
using MatmulGrads = MatmulGradsT<float>;

// Gradients of C = A*B: dA = dC * B^T, dB = A^T * dC.
template <class T>
MatmulGradsT<T> matmul_backward(const TensorT<T>& a, const TensorT<T>& b,
                                const TensorT<T>& upstream) {
  if (upstream.rank() != 2 || upstream.dim(0) != a.dim(0) ||
      upstream.dim(1) != b.dim(1)) {
    throw DimensionError("matmul backward: upstream " + upstream.shape_str() +
                         " does not match " + a.shape_str() + " * " + b.shape_str());
  }
  return {matmul(upstream, b.transposed()), matmul(a.transposed(), upstream)};
}

// ---------------------------------------------------------------------------
// softmax (last axis)
// ---------------------------------------------------------------------------

template <class T>
void softmax_rows_inplace(T* x, std::size_t rows, int cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    T* v = x + r * cols;
    T mx = v[0];
    for (int c = 0; c < cols; ++c) {
      if (std::isnan(v[c])) throw NumericError("softmax: NaN in input");
      if (v[c] > mx) mx = v[c];
    }
    T sum = T(0);
    for (int c = 0; c < cols; ++c) {
      v[c] = std::exp(v[c] - mx);
      sum += v[c];
    }
    const T inv = T(1) / sum;
    for (int c = 0; c < cols; ++c) v[c] *= inv;
  }
}

// Softmax along the last axis with max-subtraction, so inputs of any
// magnitude stay in range.
template <class T>
TensorT<T> softmax_lastdim(const TensorT<T>& x) {
  if (x.rank() < 1) throw DimensionError("softmax requires rank >= 1");
  const int cols = x.dim(x.rank() - 1);
  TensorT<T> out = x;
  softmax_rows_inplace(out.data(), out.size() / static_cast<std::size_t>(cols), cols);
  return out;
}

// Gradient through softmax given its output y: dx = y * (dy - sum(dy * y)).
template <class T>
TensorT<T> softmax_backward(const TensorT<T>& y, const TensorT<T>& upstream) {
  if (!y.same_shape(upstream)) {
    throw DimensionError("softmax backward: shape mismatch " + y.shape_str() +
                         " vs " + upstream.shape_str());
  }
  const int cols = y.dim(y.rank() - 1);
  const std::size_t rows = y.size() / static_cast<std::size_t>(cols);
  TensorT<T> dx(y.shape());
  const T* py = y.data();
  const T* pu = upstream.data();
  T* pd = dx.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* yr = py + r * cols;
    const T* ur = pu + r * cols;
    T dot = T(0);
    for (int c = 0; c < cols; ++c) dot += ur[c] * yr[c];
    T* dr = pd + r * cols;
    for (int c = 0; c < cols; ++c) dr[c] = yr[c] * (ur[c] - dot);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// layer norm (last axis, population variance)
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> layer_norm(const TensorT<T>& x, const TensorT<T>& gamma,
                      const TensorT<T>& beta, T eps) {
  const int cols = x.dim(x.rank() - 1);
  if (gamma.rank() != 1 || gamma.dim(0) != cols || beta.rank() != 1 ||
      beta.dim(0) != cols) {
    throw DimensionError("layer_norm: gamma " + gamma.shape_str() + ", beta " +
                         beta.shape_str() + " do not match feature width " +
                         std::to_string(cols));
  }
  const std::size_t rows = x.size() / static_cast<std::size_t>(cols);
  TensorT<T> out(x.shape());
  const T* px = x.data();
  const T* pg = gamma.data();
  const T* pb = beta.data();
  T* po = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = px + r * cols;
    T mean = T(0);
    for (int c = 0; c < cols; ++c) mean += xr[c];
    mean /= T(cols);
    T var = T(0);
    for (int c = 0; c < cols; ++c) {
      const T d = xr[c] - mean;
      var += d * d;
    }
    var /= T(cols);
    const T inv = T(1) / std::sqrt(var + eps);
    T* orow = po + r * cols;
    for (int c = 0; c < cols; ++c) {
      orow[c] = (xr[c] - mean) * inv * pg[c] + pb[c];
    }
  }
  return out;
}

template <class T>
struct LayerNormGradsT {
  TensorT<T> dx;
  TensorT<T> dgamma;
  TensorT<T> dbeta;
};
using LayerNormGrads = LayerNormGradsT<float>;

// Gradients of layer_norm; statistics are recomputed from x.
template <class T>
LayerNormGradsT<T> layer_norm_backward(const TensorT<T>& x, const TensorT<T>& gamma,
                                       T eps, const TensorT<T>& upstream) {
  if (!x.same_shape(upstream)) {
    throw DimensionError("layer_norm backward: shape mismatch " + x.shape_str() +
                         " vs " + upstream.shape_str());
  }
  const int cols = x.dim(x.rank() - 1);
  if (gamma.rank() != 1 || gamma.dim(0) != cols) {
    throw DimensionError("layer_norm backward: gamma " + gamma.shape_str() +
                         " does not match feature width " + std::to_string(cols));
  }
  const std::size_t rows = x.size() / static_cast<std::size_t>(cols);
  LayerNormGradsT<T> grads{TensorT<T>(x.shape()), TensorT<T>({cols}),
                           TensorT<T>({cols})};
  const T* px = x.data();
  const T* pg = gamma.data();
  const T* pu = upstream.data();
  T* pdx = grads.dx.data();
  T* pdg = grads.dgamma.data();
  T* pdb = grads.dbeta.data();
  std::vector<T> xhat(static_cast<std::size_t>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = px + r * cols;
    const T* ur = pu + r * cols;
    T mean = T(0);
    for (int c = 0; c < cols; ++c) mean += xr[c];
    mean /= T(cols);
    T var = T(0);
    for (int c = 0; c < cols; ++c) {
      const T d = xr[c] - mean;
      var += d * d;
    }
    var /= T(cols);
    const T inv = T(1) / std::sqrt(var + eps);

    T g_mean = T(0);
    T gx_mean = T(0);
    for (int c = 0; c < cols; ++c) {
      xhat[static_cast<std::size_t>(c)] = (xr[c] - mean) * inv;
      const T g = ur[c] * pg[c];
      g_mean += g;
      gx_mean += g * xhat[static_cast<std::size_t>(c)];
    }
    g_mean /= T(cols);
    gx_mean /= T(cols);

    T* dxr = pdx + r * cols;
    for (int c = 0; c < cols; ++c) {
      const T g = ur[c] * pg[c];
      dxr[c] = inv * (g - g_mean - xhat[static_cast<std::size_t>(c)] * gx_mean);
      pdg[c] += ur[c] * xhat[static_cast<std::size_t>(c)];
      pdb[c] += ur[c];
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// GELU (exact, erf-based)
// ---------------------------------------------------------------------------

template <class T>
T gelu_scalar(T x) {
  const double xd = static_cast<double>(x);
  const double phi = 0.5 * (1.0 + std::erf(xd / std::numbers::sqrt2));
  return static_cast<T>(xd * phi);
}

template <class T>
T gelu_grad_scalar(T x) {
  const double xd = static_cast<double>(x);
  const double cdf = 0.5 * (1.0 + std::erf(xd / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * std::numbers::pi);
  return static_cast<T>(cdf + xd * pdf);
}

template <class T>
TensorT<T> gelu(const TensorT<T>& x) {
  TensorT<T> out = x;
  T* d = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) d[i] = gelu_scalar(d[i]);
  return out;
}

template <class T>
TensorT<T> gelu_backward(const TensorT<T>& x, const TensorT<T>& upstream) {
  if (!x.same_shape(upstream)) {
    throw DimensionError("gelu backward: shape mismatch " + x.shape_str() + " vs " +
                         upstream.shape_str());
  }
  TensorT<T> dx(x.shape());
  const T* px = x.data();
  const T* pu = upstream.data();
  T* pd = dx.data();
  for (std::size_t i = 0; i < x.size(); ++i) pd[i] = pu[i] * gelu_grad_scalar(px[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// finite-difference gradient check
// ---------------------------------------------------------------------------

// Central-difference check of an analytic gradient. Differencing and the
// comparison always run in 64-bit arithmetic; the effective step is taken
// from the actually representable perturbed values, so the check is valid
// for the float instantiation as well as the double one. Returns the max
// relative error with denominator max(|analytic|, |numeric|, 1e-8).
template <class T, class F>
double finite_difference_check(F&& f, const TensorT<T>& x,
                               const TensorT<T>& analytic_grad, double h = 1e-4) {
  if (!x.same_shape(analytic_grad)) {
    throw DimensionError("finite_difference_check: gradient shape " +
                         analytic_grad.shape_str() + " does not match input " +
                         x.shape_str());
  }
  if (h <= 0.0) throw ConfigError("finite_difference_check: h must be positive");
  double max_rel = 0.0;
  TensorT<T> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T x0 = x[i];
    const T xp = static_cast<T>(static_cast<double>(x0) + h);
    const T xm = static_cast<T>(static_cast<double>(x0) - h);
    probe[i] = xp;
    const double fp = f(probe);
    probe[i] = xm;
    const double fm = f(probe);
    probe[i] = x0;
    const double step = static_cast<double>(xp) - static_cast<double>(xm);
    const double numeric = (fp - fm) / step;
    const double analytic = static_cast<double>(analytic_grad[i]);
    const double denom =
        std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(numeric - analytic) / denom);
  }
  return max_rel;
}

}  // namespace vitforge
