#pragma once

// Siamese comparison network.
//
//        left image ──► tower ──┬──────────────► rank head ──► f(left)
//                               │ final conv maps
//                               ├──► [concat channels] ──► fusion convs ──► FC(2) ──► logits
//                               │ final conv maps
//        right image ─► tower ──┴──────────────► rank head ──► f(right)
//
// The tower and the rank head each exist once in the parameter buffer and are
// applied to both images, so tying is structural. Logit 0 means "left wins".

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "streetrank/core.hpp"
#include "streetrank/net/layers.hpp"

namespace streetrank::net {

struct ConvLayerSpec {
  int filters = 16;
  int kernel = 3;
  int stride = 1;
  Activation act = Activation::relu;
};

struct TowerConfig {
  int height = 64;
  int width = 64;
  int channels = 3;
  std::vector<ConvLayerSpec> conv = {{16, 3, 2}, {32, 3, 2}, {32, 3, 2}};
  std::vector<int> fc = {64};
};

/// Convolutions over the channel-concatenated tower maps, then FC(2).
struct FusionConfig {
  std::vector<ConvLayerSpec> conv = {{32, 3, 2}, {32, 3, 2}};
};

/// Fully connected widths; the last must be 1.
struct RankHeadConfig {
  std::vector<int> fc = {32, 1};
};

struct ArchConfig {
  TowerConfig tower;
  FusionConfig fusion;
  RankHeadConfig rank;
  double input_offset = 0.5;  // subtracted from every pixel
};

/// Parameter initialization. Fusion weights use a zero-mean Gaussian with
/// `head_std`. Tower weights use He scaling unless `tower_std` is set, and
/// rank-head weights likewise unless `rank_std` is set. Biases start at zero
/// unless `bias_std` is positive.
struct InitOptions {
  double head_std = 0.01;
  std::optional<double> tower_std;
  std::optional<double> rank_std;
  double bias_std = 0.0;
};

struct Layout {
  std::vector<ConvGeom> tower_conv;
  std::vector<DenseGeom> tower_fc;
  std::vector<ConvGeom> fusion_conv;
  DenseGeom fusion_out;
  std::vector<DenseGeom> rank;
  std::size_t total = 0;
  std::size_t tower_end = 0;  // parameters [0, tower_end) belong to the tower

  const ConvGeom& last_tower_conv() const { return tower_conv.back(); }
  int tower_output_dim() const {
    return tower_fc.empty() ? int(last_tower_conv().out_size()) : tower_fc.back().out;
  }
  int feature_dim() const { return int(last_tower_conv().out_size()); }
};

inline Layout build_layout(const ArchConfig& arch) {
  const auto& t = arch.tower;
  if (t.conv.empty()) throw Error(ErrorKind::InvalidArgument, "tower needs at least one conv layer");
  if (t.height < 8 || t.width < 8 || t.channels < 1) {
    throw Error(ErrorKind::InvalidArgument, "tower input must be at least 8x8");
  }
  if (arch.rank.fc.empty() || arch.rank.fc.back() != 1) {
    throw Error(ErrorKind::InvalidArgument, "rank head must end in a width-1 layer");
  }
  Layout L;
  std::size_t off = 0;
  auto place_conv = [&](ConvGeom g) {
    g.w_off = off;
    off += g.weight_count();
    g.b_off = off;
    off += std::size_t(g.out_c);
    return g;
  };
  auto place_dense = [&](int in, int out, Activation act) {
    DenseGeom g;
    g.in = in;
    g.out = out;
    g.act = act;
    g.w_off = off;
    off += g.weight_count();
    g.b_off = off;
    off += std::size_t(out);
    return g;
  };

  int h = t.height, w = t.width, c = t.channels;
  for (const auto& spec : t.conv) {
    L.tower_conv.push_back(place_conv(make_conv(h, w, c, spec.filters, spec.kernel, spec.stride, spec.act)));
    h = L.tower_conv.back().out_h;
    w = L.tower_conv.back().out_w;
    c = L.tower_conv.back().out_c;
  }
  int dim = h * w * c;
  for (int width : t.fc) {
    L.tower_fc.push_back(place_dense(dim, width, Activation::relu));
    dim = width;
  }
  if (dim < 4) throw Error(ErrorKind::InvalidArgument, "tower output dimension must be at least 4");
  L.tower_end = off;

  int fh = h, fw = w, fc = 2 * c;
  for (const auto& spec : arch.fusion.conv) {
    L.fusion_conv.push_back(place_conv(make_conv(fh, fw, fc, spec.filters, spec.kernel, spec.stride, spec.act)));
    fh = L.fusion_conv.back().out_h;
    fw = L.fusion_conv.back().out_w;
    fc = L.fusion_conv.back().out_c;
  }
  L.fusion_out = place_dense(fh * fw * fc, 2, Activation::linear);

  int rin = dim;
  for (std::size_t i = 0; i < arch.rank.fc.size(); ++i) {
    const bool last = i + 1 == arch.rank.fc.size();
    L.rank.push_back(place_dense(rin, arch.rank.fc[i], last ? Activation::linear : Activation::relu));
    rin = arch.rank.fc[i];
  }
  L.total = off;
  return L;
}

template <typename S>
struct NetworkParams {
  ArchConfig arch;
  Layout layout;
  std::vector<S> values;
  std::uint64_t seed = 0;

  std::size_t size() const { return values.size(); }
  const S* data() const { return values.data(); }

  bool all_finite() const {
    for (S v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

template <typename S>
NetworkParams<S> init_params(const ArchConfig& arch, std::uint64_t seed, const InitOptions& opt = {}) {
  NetworkParams<S> p;
  p.arch = arch;
  p.layout = build_layout(arch);
  p.values.assign(p.layout.total, S(0));
  p.seed = seed;
  std::mt19937_64 rng(seed);

  auto fill = [&](std::size_t off, std::size_t count, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (std::size_t i = 0; i < count; ++i) p.values[off + i] = S(dist(rng));
  };
  auto fill_bias = [&](std::size_t off, std::size_t count) {
    if (opt.bias_std > 0) fill(off, count, opt.bias_std);
  };
  for (const auto& g : p.layout.tower_conv) {
    fill(g.w_off, g.weight_count(), opt.tower_std.value_or(std::sqrt(2.0 / g.patch())));
    fill_bias(g.b_off, std::size_t(g.out_c));
  }
  for (const auto& g : p.layout.tower_fc) {
    fill(g.w_off, g.weight_count(), opt.tower_std.value_or(std::sqrt(2.0 / g.in)));
    fill_bias(g.b_off, std::size_t(g.out));
  }
  for (const auto& g : p.layout.fusion_conv) {
    fill(g.w_off, g.weight_count(), opt.head_std);
    fill_bias(g.b_off, std::size_t(g.out_c));
  }
  fill(p.layout.fusion_out.w_off, p.layout.fusion_out.weight_count(), opt.head_std);
  fill_bias(p.layout.fusion_out.b_off, 2);
  for (const auto& g : p.layout.rank) {
    fill(g.w_off, g.weight_count(), opt.rank_std.value_or(std::sqrt(2.0 / g.in)));
    fill_bias(g.b_off, std::size_t(g.out));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Softmax cross-entropy over (left-wins, right-wins) logits. y = +1 when the
/// left image won.
inline double loss_classification(double z_left, double z_right, int y) {
  const double m = std::max(z_left, z_right);
  const double lse = m + std::log(std::exp(z_left - m) + std::exp(z_right - m));
  return lse - (y > 0 ? z_left : z_right);
}

/// Squared hinge on the rank scores; zero when y * (f_i - f_j) >= 0.
inline double loss_ranking(double f_i, double f_j, int y) {
  const double r = std::max(0.0, double(y) * (f_j - f_i));
  return r * r;
}

struct LossParts {
  double classification = 0.0;
  double ranking = 0.0;
  double total = 0.0;
};

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

template <typename S>
void check_image(const ArchConfig& arch, const Image& img) {
  const auto& t = arch.tower;
  if (img.height != t.height || img.width != t.width || img.channels != t.channels) {
    throw Error(ErrorKind::ShapeMismatch,
                "image is " + std::to_string(img.height) + "x" + std::to_string(img.width) + "x" +
                    std::to_string(img.channels) + ", network expects " + std::to_string(t.height) +
                    "x" + std::to_string(t.width) + "x" + std::to_string(t.channels));
  }
}

/// Copies images into one NHWC block with the input offset removed.
template <typename S>
void load_images(const ArchConfig& arch, std::span<const Image* const> images, Mat<S>& out) {
  const auto& t = arch.tower;
  const std::size_t per = std::size_t(t.height) * t.width;
  out.resize(Eigen::Index(images.size() * per), t.channels);
  S* dst = out.data();
  const float offset = float(arch.input_offset);
  for (const Image* img : images) {
    check_image<S>(arch, *img);
    for (float v : img->data) *dst++ = S(v - offset);
  }
}

template <typename S>
struct TowerPass {
  std::vector<ConvCache<S>> conv;
  std::vector<DenseCache<S>> fc;
  Mat<S> output;  // n x tower_output_dim

  const Mat<S>& maps() const { return conv.back().out; }  // (n*h*w) x c
};

template <typename S>
void tower_forward(const NetworkParams<S>& p, const Mat<S>& input, int n, TowerPass<S>& pass) {
  const auto& L = p.layout;
  pass.conv.resize(L.tower_conv.size());
  const S* in = input.data();
  for (std::size_t l = 0; l < L.tower_conv.size(); ++l) {
    conv_forward(p.data(), L.tower_conv[l], in, n, pass.conv[l]);
    in = pass.conv[l].out.data();
  }
  Mat<S> cur = Eigen::Map<const Mat<S>>(in, n, L.feature_dim());
  pass.fc.resize(L.tower_fc.size());
  for (std::size_t l = 0; l < L.tower_fc.size(); ++l) {
    dense_forward(p.data(), L.tower_fc[l], cur, pass.fc[l]);
    cur = pass.fc[l].out;
  }
  pass.output = std::move(cur);
}

template <typename S>
Mat<S> rank_forward(const NetworkParams<S>& p, const Mat<S>& tower_out, std::vector<DenseCache<S>>& caches) {
  caches.resize(p.layout.rank.size());
  Mat<S> cur = tower_out;
  for (std::size_t l = 0; l < p.layout.rank.size(); ++l) {
    dense_forward(p.data(), p.layout.rank[l], cur, caches[l]);
    cur = caches[l].out;
  }
  return cur;
}

/// Interleaves left and right tower maps channel-wise, one pair per block.
template <typename S>
Mat<S> concat_maps(const Layout& L, const S* left_maps, const S* right_maps, int pairs,
                   std::span<const std::pair<std::size_t, std::size_t>> index = {}) {
  const auto& g = L.last_tower_conv();
  const int hw = g.out_h * g.out_w, c = g.out_c;
  Mat<S> out(Eigen::Index(pairs) * hw, 2 * c);
  for (int p = 0; p < pairs; ++p) {
    const std::size_t li = index.empty() ? std::size_t(p) : index[p].first;
    const std::size_t ri = index.empty() ? std::size_t(p) : index[p].second;
    for (int s = 0; s < hw; ++s) {
      S* row = out.data() + (std::size_t(p) * hw + s) * 2 * c;
      const S* l = left_maps + (li * hw + s) * c;
      const S* r = right_maps + (ri * hw + s) * c;
      std::copy(l, l + c, row);
      std::copy(r, r + c, row + c);
    }
  }
  return out;
}

template <typename S>
struct FusionPass {
  std::vector<ConvCache<S>> conv;
  DenseCache<S> out;
};

template <typename S>
Mat<S> fusion_forward(const NetworkParams<S>& p, const Mat<S>& fused_in, int pairs, FusionPass<S>& pass) {
  const auto& L = p.layout;
  pass.conv.resize(L.fusion_conv.size());
  const S* in = fused_in.data();
  for (std::size_t l = 0; l < L.fusion_conv.size(); ++l) {
    conv_forward(p.data(), L.fusion_conv[l], in, pairs, pass.conv[l]);
    in = pass.conv[l].out.data();
  }
  Mat<S> flat = Eigen::Map<const Mat<S>>(in, pairs, L.fusion_out.in);
  dense_forward(p.data(), L.fusion_out, flat, pass.out);
  return pass.out.out;
}

/// Everything a training step needs to run backward.
template <typename S>
struct PairBatchPass {
  int pairs = 0;
  Mat<S> input;
  TowerPass<S> tower;           // 2*pairs images: lefts then rights
  Mat<S> fused_in;
  FusionPass<S> fusion;
  std::vector<DenseCache<S>> rank;
  Mat<S> logits;                // pairs x 2
  Mat<S> f;                     // 2*pairs x 1

  S f_left(int p) const { return f(p, 0); }
  S f_right(int p) const { return f(pairs + p, 0); }
};

template <typename S>
void forward_batch(const NetworkParams<S>& p, std::span<const Image* const> left,
                   std::span<const Image* const> right, PairBatchPass<S>& pass) {
  if (left.size() != right.size()) throw Error(ErrorKind::ShapeMismatch, "unbalanced pair batch");
  const int B = int(left.size());
  pass.pairs = B;
  std::vector<const Image*> all(left.begin(), left.end());
  all.insert(all.end(), right.begin(), right.end());
  load_images<S>(p.arch, all, pass.input);
  tower_forward(p, pass.input, 2 * B, pass.tower);

  const auto& g = p.layout.last_tower_conv();
  const S* maps = pass.tower.maps().data();
  const std::size_t image_stride = std::size_t(g.out_h) * g.out_w * g.out_c;
  pass.fused_in = concat_maps<S>(p.layout, maps, maps + image_stride * B, B);
  pass.logits = fusion_forward(p, pass.fused_in, B, pass.fusion);
  pass.f = rank_forward(p, pass.tower.output, pass.rank);
}

/// Accumulates dL/dparams into `grad` given output gradients.
template <typename S>
void backward_batch(const NetworkParams<S>& p, const PairBatchPass<S>& pass, const Mat<S>& dlogits,
                    const Mat<S>& df, std::vector<S>& grad) {
  const auto& L = p.layout;
  const int B = pass.pairs;
  S* G = grad.data();

  // Fusion branch back to the concatenated maps.
  Mat<S> d = dlogits;
  Mat<S> dflat = dense_backward(p.data(), G, L.fusion_out, pass.fusion.out, d);
  const int fusion_c = L.fusion_conv.empty() ? 2 * L.last_tower_conv().out_c : L.fusion_conv.back().out_c;
  Mat<S> dcur = Eigen::Map<const Mat<S>>(dflat.data(), dflat.size() / fusion_c, fusion_c);
  for (std::size_t l = L.fusion_conv.size(); l-- > 0;) {
    const auto& g = L.fusion_conv[l];
    Mat<S> dprev = Mat<S>::Zero(Eigen::Index(B) * g.in_h * g.in_w, g.in_c);
    conv_backward(p.data(), G, g, B, pass.fusion.conv[l], dcur, dprev.data());
    dcur = std::move(dprev);
  }

  // Rank head and tower FC back to the flattened maps.
  Mat<S> dr = df;
  for (std::size_t l = L.rank.size(); l-- > 0;) dr = dense_backward(p.data(), G, L.rank[l], pass.rank[l], dr);
  for (std::size_t l = L.tower_fc.size(); l-- > 0;) dr = dense_backward(p.data(), G, L.tower_fc[l], pass.tower.fc[l], dr);

  const auto& last = L.last_tower_conv();
  const Eigen::Index hw = Eigen::Index(last.out_h) * last.out_w;
  const int c = last.out_c;
  Mat<S> dmaps = Eigen::Map<const Mat<S>>(dr.data(), Eigen::Index(2 * B) * hw, c);
  // Split the fusion gradient back onto the left and right images.
  for (int pidx = 0; pidx < B; ++pidx) {
    for (Eigen::Index s = 0; s < hw; ++s) {
      const Eigen::Index row = Eigen::Index(pidx) * hw + s;
      dmaps.row(row) += dcur.row(row).leftCols(c);
      dmaps.row(Eigen::Index(B + pidx) * hw + s) += dcur.row(row).rightCols(c);
    }
  }

  Mat<S> dt = std::move(dmaps);
  for (std::size_t l = L.tower_conv.size(); l-- > 0;) {
    const auto& g = L.tower_conv[l];
    if (l == 0) {
      conv_backward<S>(p.data(), G, g, 2 * B, pass.tower.conv[l], dt, nullptr);
    } else {
      Mat<S> dprev = Mat<S>::Zero(Eigen::Index(2 * B) * g.in_h * g.in_w, g.in_c);
      conv_backward(p.data(), G, g, 2 * B, pass.tower.conv[l], dt, dprev.data());
      dt = std::move(dprev);
    }
  }
}

/// One labelled pair of images.
struct LabeledPair {
  const Image* left = nullptr;
  const Image* right = nullptr;
  int y = 1;
};

/// Summed loss w_c * L_c + w_r * L_r over the batch, with its gradient written
/// to `grad` (resized and zeroed) when non-null.
template <typename S>
LossParts weighted_loss_and_gradient(const NetworkParams<S>& p, std::span<const LabeledPair> batch,
                                     double w_c, double w_r, std::vector<S>* grad,
                                     PairBatchPass<S>* scratch = nullptr) {
  PairBatchPass<S> local;
  PairBatchPass<S>& pass = scratch ? *scratch : local;
  std::vector<const Image*> left, right;
  left.reserve(batch.size());
  right.reserve(batch.size());
  for (const auto& lp : batch) {
    left.push_back(lp.left);
    right.push_back(lp.right);
  }
  forward_batch(p, std::span<const Image* const>(left), std::span<const Image* const>(right), pass);

  const int B = int(batch.size());
  LossParts parts;
  Mat<S> dlogits(B, 2), df(2 * B, 1);
  for (int i = 0; i < B; ++i) {
    const int y = batch[i].y;
    const double z0 = double(pass.logits(i, 0)), z1 = double(pass.logits(i, 1));
    parts.classification += loss_classification(z0, z1, y);
    const double m = std::max(z0, z1);
    const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
    const double p0 = e0 / (e0 + e1);
    dlogits(i, 0) = S(w_c * (p0 - (y > 0 ? 1.0 : 0.0)));
    dlogits(i, 1) = S(w_c * ((1.0 - p0) - (y > 0 ? 0.0 : 1.0)));

    const double fi = double(pass.f_left(i)), fj = double(pass.f_right(i));
    parts.ranking += loss_ranking(fi, fj, y);
    const double r = std::max(0.0, double(y) * (fj - fi));
    df(i, 0) = S(-2.0 * w_r * r * y);
    df(B + i, 0) = S(2.0 * w_r * r * y);
  }
  parts.total = w_c * parts.classification + w_r * parts.ranking;

  if (grad) {
    grad->assign(p.size(), S(0));
    backward_batch(p, pass, dlogits, df, *grad);
    for (S v : *grad) {
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteGradient, "gradient has non-finite entries");
    }
  }
  return parts;
}

/// Summed joint loss L = L_c + lambda * L_r and its gradient.
template <typename S>
LossParts loss_and_gradient(const NetworkParams<S>& p, std::span<const LabeledPair> batch, double lambda,
                            std::vector<S>* grad, PairBatchPass<S>* scratch = nullptr) {
  return weighted_loss_and_gradient<S>(p, batch, 1.0, lambda, grad, scratch);
}

template <typename S>
LossParts loss_joint(const NetworkParams<S>& p, std::span<const LabeledPair> batch, double lambda) {
  return loss_and_gradient<S>(p, batch, lambda, nullptr);
}

template <typename S>
std::vector<S> backward(const NetworkParams<S>& p, std::span<const LabeledPair> batch, double lambda) {
  std::vector<S> grad;
  loss_and_gradient<S>(p, batch, lambda, &grad);
  return grad;
}

struct PairOutput {
  double logit_left = 0.0;
  double logit_right = 0.0;
  double f_i = 0.0;
  double f_j = 0.0;
};

template <typename S>
PairOutput forward_pair(const NetworkParams<S>& p, const Image& x_i, const Image& x_j) {
  PairBatchPass<S> pass;
  const Image* l[1] = {&x_i};
  const Image* r[1] = {&x_j};
  forward_batch(p, std::span<const Image* const>(l), std::span<const Image* const>(r), pass);
  return {double(pass.logits(0, 0)), double(pass.logits(0, 1)), double(pass.f_left(0)), double(pass.f_right(0))};
}

// ---------------------------------------------------------------------------
// Inference over image sets
// ---------------------------------------------------------------------------

/// Per-image tower results, reused across many pair predictions.
template <typename S>
struct Embedding {
  Mat<S> maps;    // n x feature_dim (final tower conv, flattened)
  Mat<S> tower;   // n x tower_output_dim
  std::vector<double> f;

  std::size_t size() const { return f.size(); }
};

template <typename S>
Embedding<S> embed(const NetworkParams<S>& p, std::span<const Image* const> images, int chunk = 64) {
  Embedding<S> e;
  const int n = int(images.size());
  e.maps.resize(n, p.layout.feature_dim());
  e.tower.resize(n, p.layout.tower_output_dim());
  e.f.resize(std::size_t(n));
  Mat<S> input;
  TowerPass<S> pass;
  std::vector<DenseCache<S>> rank;
  for (int start = 0; start < n; start += chunk) {
    const int m = std::min(chunk, n - start);
    load_images<S>(p.arch, images.subspan(std::size_t(start), std::size_t(m)), input);
    tower_forward(p, input, m, pass);
    e.maps.middleRows(start, m) = Eigen::Map<const Mat<S>>(pass.maps().data(), m, p.layout.feature_dim());
    e.tower.middleRows(start, m) = pass.output;
    Mat<S> f = rank_forward(p, pass.output, rank);
    for (int i = 0; i < m; ++i) e.f[std::size_t(start + i)] = double(f(i, 0));
  }
  return e;
}

/// Logits for (left, right) index pairs into an embedding.
template <typename S>
Mat<S> pair_logits(const NetworkParams<S>& p, const Embedding<S>& e,
                   std::span<const std::pair<std::size_t, std::size_t>> pairs, int chunk = 256) {
  Mat<S> logits(Eigen::Index(pairs.size()), 2);
  FusionPass<S> pass;
  for (std::size_t start = 0; start < pairs.size(); start += std::size_t(chunk)) {
    const int m = int(std::min<std::size_t>(std::size_t(chunk), pairs.size() - start));
    auto sub = pairs.subspan(start, std::size_t(m));
    Mat<S> fused = concat_maps<S>(p.layout, e.maps.data(), e.maps.data(), m, sub);
    logits.middleRows(Eigen::Index(start), m) = fusion_forward(p, fused, m, pass);
  }
  return logits;
}

enum class PredictMethod { softmax, ranking };

/// +1 when the left image is predicted to win. Exact ties go to the left.
inline int decide(double left_score, double right_score) { return left_score >= right_score ? 1 : -1; }

template <typename S>
int predict_comparison(const NetworkParams<S>& p, const Image& x_i, const Image& x_j, PredictMethod method) {
  const auto out = forward_pair(p, x_i, x_j);
  return method == PredictMethod::softmax ? decide(out.logit_left, out.logit_right) : decide(out.f_i, out.f_j);
}

/// Final tower convolution activations, flattened in (y, x, channel) order.
template <typename S>
std::vector<S> extract_features(const NetworkParams<S>& p, const Image& x) {
  const Image* one[1] = {&x};
  auto e = embed(p, std::span<const Image* const>(one));
  return std::vector<S>(e.maps.data(), e.maps.data() + e.maps.size());
}

}  // namespace streetrank::net
