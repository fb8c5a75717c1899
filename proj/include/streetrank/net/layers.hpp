#pragma once

// Batched NHWC convolution and dense kernels over a flat parameter buffer.
// Activations are row-major matrices with one row per (image, y, x) position
// and one column per channel, so a convolution is im2col followed by a GEMM.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace streetrank::net {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

enum class Activation { relu, linear };

struct ConvGeom {
  int in_h = 0, in_w = 0, in_c = 0;
  int out_h = 0, out_w = 0, out_c = 0;
  int kernel = 3, stride = 1, pad = 1;
  Activation act = Activation::relu;
  std::size_t w_off = 0, b_off = 0;

  int patch() const { return kernel * kernel * in_c; }
  std::size_t weight_count() const { return std::size_t(patch()) * out_c; }
  std::size_t in_size() const { return std::size_t(in_h) * in_w * in_c; }
  std::size_t out_size() const { return std::size_t(out_h) * out_w * out_c; }
};

struct DenseGeom {
  int in = 0, out = 0;
  Activation act = Activation::relu;
  std::size_t w_off = 0, b_off = 0;

  std::size_t weight_count() const { return std::size_t(in) * out; }
};

inline ConvGeom make_conv(int in_h, int in_w, int in_c, int filters, int kernel, int stride,
                          Activation act) {
  ConvGeom g;
  g.in_h = in_h;
  g.in_w = in_w;
  g.in_c = in_c;
  g.kernel = kernel;
  g.stride = stride;
  g.pad = kernel / 2;
  g.out_h = (in_h + 2 * g.pad - kernel) / stride + 1;
  g.out_w = (in_w + 2 * g.pad - kernel) / stride + 1;
  g.out_c = filters;
  g.act = act;
  return g;
}

template <typename S>
struct ConvCache {
  Mat<S> cols;  // (n * out_h * out_w) x patch
  Mat<S> out;   // (n * out_h * out_w) x out_c, post-activation
};

template <typename S>
struct DenseCache {
  Mat<S> in;
  Mat<S> out;
};

template <typename S>
void im2col(const S* in, int n, const ConvGeom& g, Mat<S>& cols) {
  const int rows_per_image = g.out_h * g.out_w;
  cols.resize(Eigen::Index(n) * rows_per_image, g.patch());
  for (int b = 0; b < n; ++b) {
    const S* img = in + std::size_t(b) * g.in_size();
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        S* row = cols.data() + (std::size_t(b) * rows_per_image + std::size_t(oy) * g.out_w + ox) * g.patch();
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            S* dst = row + (ky * g.kernel + kx) * g.in_c;
            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) {
              for (int c = 0; c < g.in_c; ++c) dst[c] = S(0);
            } else {
              const S* src = img + (std::size_t(iy) * g.in_w + ix) * g.in_c;
              for (int c = 0; c < g.in_c; ++c) dst[c] = src[c];
            }
          }
        }
      }
    }
  }
}

template <typename S>
void col2im_add(const Mat<S>& dcols, int n, const ConvGeom& g, S* din) {
  const int rows_per_image = g.out_h * g.out_w;
  for (int b = 0; b < n; ++b) {
    S* img = din + std::size_t(b) * g.in_size();
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const S* row = dcols.data() + (std::size_t(b) * rows_per_image + std::size_t(oy) * g.out_w + ox) * g.patch();
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            const S* src = row + (ky * g.kernel + kx) * g.in_c;
            S* dst = img + (std::size_t(iy) * g.in_w + ix) * g.in_c;
            for (int c = 0; c < g.in_c; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

template <typename S>
void apply_activation(Mat<S>& m, Activation act) {
  if (act == Activation::relu) m = m.cwiseMax(S(0));
}

/// dZ = dA * act'(A), in place.
template <typename S>
void activation_backward(Mat<S>& d, const Mat<S>& out, Activation act) {
  if (act == Activation::relu) d = (out.array() > S(0)).select(d, S(0));
}

template <typename S>
void conv_forward(const S* params, const ConvGeom& g, const S* in, int n, ConvCache<S>& cache) {
  im2col(in, n, g, cache.cols);
  Eigen::Map<const Mat<S>> W(params + g.w_off, g.patch(), g.out_c);
  Eigen::Map<const RowVec<S>> bias(params + g.b_off, g.out_c);
  cache.out.noalias() = cache.cols * W;
  cache.out.rowwise() += bias;
  apply_activation(cache.out, g.act);
}

/// `dout` holds dL/d(output) and is consumed. When `din` is non-null the input
/// gradient is accumulated into it.
template <typename S>
void conv_backward(const S* params, S* grad, const ConvGeom& g, int n, const ConvCache<S>& cache,
                   Mat<S>& dout, S* din) {
  activation_backward(dout, cache.out, g.act);
  Eigen::Map<Mat<S>> dW(grad + g.w_off, g.patch(), g.out_c);
  Eigen::Map<RowVec<S>> db(grad + g.b_off, g.out_c);
  dW.noalias() += cache.cols.transpose() * dout;
  db += dout.colwise().sum();
  if (din) {
    Eigen::Map<const Mat<S>> W(params + g.w_off, g.patch(), g.out_c);
    Mat<S> dcols = dout * W.transpose();
    col2im_add(dcols, n, g, din);
  }
}

template <typename S>
void dense_forward(const S* params, const DenseGeom& g, const Mat<S>& in, DenseCache<S>& cache) {
  cache.in = in;
  Eigen::Map<const Mat<S>> W(params + g.w_off, g.in, g.out);
  Eigen::Map<const RowVec<S>> bias(params + g.b_off, g.out);
  cache.out.noalias() = in * W;
  cache.out.rowwise() += bias;
  apply_activation(cache.out, g.act);
}

/// Returns dL/d(input); `dout` is consumed.
template <typename S>
Mat<S> dense_backward(const S* params, S* grad, const DenseGeom& g, const DenseCache<S>& cache,
                      Mat<S>& dout) {
  activation_backward(dout, cache.out, g.act);
  Eigen::Map<Mat<S>> dW(grad + g.w_off, g.in, g.out);
  Eigen::Map<RowVec<S>> db(grad + g.b_off, g.out);
  dW.noalias() += cache.in.transpose() * dout;
  db += dout.colwise().sum();
  Eigen::Map<const Mat<S>> W(params + g.w_off, g.in, g.out);
  return dout * W.transpose();
}

}  // namespace streetrank::net
