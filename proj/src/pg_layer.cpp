// SPDX-License-Identifier: Apache-2.0
#include "pg/pg_layer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pg {

void PGLayerConfig::validate() const {
  if (bits < 2)
    throw std::invalid_argument("PG bitwidth B must be >= 2");
  if (msb_bits < 1 || msb_bits >= bits)
    throw std::invalid_argument("PG needs 1 <= B_hb < B (B=" +
                                std::to_string(bits) + ", B_hb=" +
                                std::to_string(msb_bits) + ")");
  if (!(alpha > 0.0f))
    throw std::invalid_argument("surrogate slope alpha must be > 0");
  if (!(sigma >= 0.0f))
    throw std::invalid_argument("penalty factor sigma must be >= 0");
}

std::size_t GateMask::active() const {
  std::size_t n = 0;
  for (std::int32_t v : mask.data())
    n += v != 0;
  return n;
}

double GateMask::sparsity() const {
  return 1.0 - static_cast<double>(active()) / static_cast<double>(mask.numel());
}

PGCounters &PGCounters::operator+=(const PGCounters &o) {
  msb_forward += o.msb_forward;
  lsb_forward += o.lsb_forward;
  msb_backward += o.msb_backward;
  lsb_backward += o.lsb_backward;
  input_backward += o.input_backward;
  return *this;
}

std::vector<float> effective_thresholds(const GateThresholds &thresholds,
                                        const PGLayerConfig &cfg,
                                        std::size_t channels) {
  if (cfg.mode == ThresholdMode::fixed)
    return std::vector<float>(channels, cfg.fixed_threshold);
  if (thresholds.delta.size() != channels)
    throw ShapeError("threshold vector has " +
                     std::to_string(thresholds.delta.size()) +
                     " entries for a layer with " + std::to_string(channels) +
                     " output channels");
  for (float d : thresholds.delta)
    if (!std::isfinite(d))
      throw std::invalid_argument("gating thresholds must be finite");
  return thresholds.delta;
}

double surrogate_grad(double o_hb, double delta, double alpha) {
  const double s = 1.0 / (1.0 + std::exp(-alpha * (o_hb - delta)));
  return -alpha * s * (1.0 - s);
}

double threshold_grad_term(double upstream, double o_hb, double o_lb,
                           bool gated, double delta, double alpha,
                           LsbGradient mode) {
  const double ds = surrogate_grad(o_hb, delta, alpha);
  if (mode == LsbGradient::sparse)
    return gated ? upstream * 2.0 * o_lb * ds : 0.0;
  return upstream * o_lb * ds;
}

PenaltyResult threshold_penalty(const GateThresholds &thresholds,
                                const PGLayerConfig &cfg) {
  if (cfg.mode != ThresholdMode::learnable)
    throw std::logic_error("threshold penalty applies to learnable thresholds");
  PenaltyResult r{0.0, std::vector<float>(thresholds.delta.size())};
  for (std::size_t c = 0; c < thresholds.delta.size(); ++c) {
    const double d = static_cast<double>(thresholds.delta[c]) - cfg.delta_target;
    r.loss += d * d;
    r.grad[c] = static_cast<float>(2.0 * cfg.sigma * d);
  }
  r.loss *= cfg.sigma;
  return r;
}

namespace {

void check_split(const SplitActivation &split, const PGLayerConfig &cfg) {
  cfg.validate();
  if (split.params.bits() != cfg.bits || split.msb_bits != cfg.msb_bits)
    throw std::invalid_argument(
        "split activation (B=" + std::to_string(split.params.bits()) +
        ", B_hb=" + std::to_string(split.msb_bits) +
        ") does not match layer config (B=" + std::to_string(cfg.bits) +
        ", B_hb=" + std::to_string(cfg.msb_bits) + ")");
}

void check_bias(std::span<const float> bias, std::size_t channels) {
  if (!bias.empty() && bias.size() != channels)
    throw ShapeError("bias of length " + std::to_string(bias.size()) +
                     " for " + std::to_string(channels) + " channels");
}

/// Fills hb (msb << lsb_bits) and lb planes as floats, over [begin, end).
void planes_as_float(const SplitActivation &s, std::size_t begin,
                     std::size_t end, float *hb, float *lb) {
  for (std::size_t i = begin; i < end; ++i) {
    hb[i - begin] = static_cast<float>(s.msb[i] << s.lsb_bits);
    lb[i - begin] = static_cast<float>(s.lsb[i]);
  }
}

/// One gated product out(M x N) = lhs(M x K) * rhs_t(N x K)^T where either
/// the rows (convolution) or the columns (dense) index output channels.
struct Block {
  std::size_t m, n, k;
  bool channel_is_row;
  std::size_t channel(std::size_t i, std::size_t j) const {
    return channel_is_row ? i : j;
  }
};

struct Scratch {
  std::vector<double> acc_hb, acc_lb;
};

void forward_block(const Block &b, const float *lhs_hb, const float *rhs_hb,
                   const float *lhs_lb, const float *rhs_lb, double scale,
                   std::span<const float> bias, std::span<const float> thr,
                   const PGOptions &opts, float *out, float *out_hb,
                   float *out_lb, std::int32_t *mask, PGCounters &cnt,
                   Scratch &s) {
  const std::size_t mn = b.m * b.n;
  s.acc_hb.resize(mn);
  s.acc_lb.assign(mn, 0.0);

  // Prediction phase: dense product with the MSB plane.
  kernels::gemm_nt(lhs_hb, rhs_hb, b.m, b.n, b.k, s.acc_hb.data());
  cnt.msb_forward += mn * b.k;

  for (std::size_t i = 0; i < b.m; ++i)
    for (std::size_t j = 0; j < b.n; ++j) {
      const std::size_t c = b.channel(i, j);
      const std::size_t idx = i * b.n + j;
      const double bc = bias.empty() ? 0.0 : bias[c];
      out_hb[idx] = static_cast<float>(scale * s.acc_hb[idx] + bc);
      mask[idx] = out_hb[idx] > thr[c] ? 1 : 0;
    }

  // Update phase: LSB plane only where the gate fired.
  if (opts.dense_lsb) {
    kernels::gemm_nt(lhs_lb, rhs_lb, b.m, b.n, b.k, s.acc_lb.data());
    cnt.lsb_forward += mn * b.k;
  } else {
    const MaskCoords coords =
        MaskCoords::from_mask(std::span<const std::int32_t>(mask, mn), b.m, b.n);
    kernels::sddmm(lhs_lb, rhs_lb, b.k, coords, s.acc_lb.data());
    cnt.lsb_forward += coords.nnz() * b.k;
  }

  for (std::size_t i = 0; i < b.m; ++i)
    for (std::size_t j = 0; j < b.n; ++j) {
      const std::size_t idx = i * b.n + j;
      const double bc = bias.empty() ? 0.0 : bias[b.channel(i, j)];
      const double m = mask[idx];
      const double gate = opts.mask_power == 2 ? m * m : m;
      out[idx] = static_cast<float>(scale * (s.acc_hb[idx] + gate * s.acc_lb[idx]) + bc);
      out_lb[idx] = static_cast<float>(scale * s.acc_lb[idx]);
    }
}

/// Backward of one block, expressed channel-major: C channels, R activation
/// rows, K reduction. `up_cr`, `hb_cr`, `lb_cr`, `mask_cr` are C x R;
/// `up_rc` is the same upstream as R x C.
struct BackwardBlock {
  std::size_t channels, rows, k;
  const float *weight;  // C x K
  const float *act_hb;  // R x K
  const float *act_lb;  // R x K
  const float *up_cr;
  const float *up_rc;
  const float *hb_cr;
  const float *lb_cr;
  const std::int32_t *mask_cr;
};

void backward_block(const BackwardBlock &b, double scale,
                    std::span<const float> thr, double alpha, LsbGradient mode,
                    std::vector<double> &dW, float *d_act,
                    std::vector<double> &dDelta, std::vector<double> &dBias,
                    PGCounters &cnt) {
  const std::size_t C = b.channels, R = b.rows, K = b.k;
  std::vector<double> tmp(std::max(C * K, R * K));

  // dW through the MSB plane: (C x R) * (R x K), dense.
  kernels::gemm(b.up_cr, b.act_hb, C, R, K, tmp.data());
  for (std::size_t i = 0; i < C * K; ++i)
    dW[i] += scale * tmp[i];
  cnt.msb_backward += C * R * K;

  // dW through the LSB plane, only at gated positions.
  const MaskCoords coords =
      MaskCoords::from_mask(std::span<const std::int32_t>(b.mask_cr, C * R), C, R);
  for (std::size_t c = 0; c < C; ++c) {
    double *row = dW.data() + c * K;
    for (std::uint32_t e = coords.row_ptr[c]; e < coords.row_ptr[c + 1]; ++e) {
      const std::size_t r = coords.col_idx[e];
      const double g = scale * static_cast<double>(b.up_cr[c * R + r]);
      const float *a = b.act_lb + r * K;
#pragma omp simd
      for (std::size_t q = 0; q < K; ++q)
        row[q] += g * static_cast<double>(a[q]);
    }
  }
  cnt.lsb_backward += coords.nnz() * K;

  // Straight-through input gradient: (R x C) * (C x K).
  kernels::gemm(b.up_rc, b.weight, R, C, K, tmp.data());
  for (std::size_t i = 0; i < R * K; ++i)
    d_act[i] = static_cast<float>(tmp[i]);
  cnt.input_backward += C * R * K;

  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t idx = c * R + r;
      dBias[c] += b.up_cr[idx];
      dDelta[c] += threshold_grad_term(b.up_cr[idx], b.hb_cr[idx], b.lb_cr[idx],
                                       b.mask_cr[idx] != 0, thr[c], alpha, mode);
    }
}

void check_forward_record(const PGForward &fwd, const Tensor &upstream,
                          std::span<const float> thr, const Block &layout,
                          std::size_t blocks, LsbGradient mode) {
  check_same_shape(fwd.out_hb.shape(), upstream.shape(), "pg backward upstream");
  check_same_shape(fwd.mask.mask.shape(), upstream.shape(), "pg backward mask");
  check_same_shape(fwd.out_lb.shape(), upstream.shape(), "pg backward O_lb");
  if (mode == LsbGradient::dense && !fwd.dense_lsb)
    throw std::invalid_argument(
        "dense threshold gradient needs a forward pass run with dense_lsb");
  const std::size_t mn = layout.m * layout.n;
  for (std::size_t blk = 0; blk < blocks; ++blk)
    for (std::size_t i = 0; i < layout.m; ++i)
      for (std::size_t j = 0; j < layout.n; ++j) {
        const std::size_t idx = blk * mn + i * layout.n + j;
        const bool expect = fwd.out_hb[idx] > thr[layout.channel(i, j)];
        if ((fwd.mask.mask[idx] != 0) != expect)
          throw std::invalid_argument(
              "stale gate mask: mask disagrees with O_hb > delta at element " +
              std::to_string(idx));
      }
}

struct ConvShape {
  std::size_t batch, cout;
  ConvGeometry geom;
};

ConvShape conv_shape(const SplitActivation &split, const Tensor &W,
                     const PGOptions &opts) {
  if (split.shape().size() != 4)
    throw ShapeError("PG convolution input must be NCHW, got " +
                     shape_string(split.shape()));
  if (W.rank() != 4)
    throw ShapeError("PG convolution weight must be (Cout, Cin, kh, kw), got " +
                     shape_string(W.shape()));
  const Shape &s = split.shape();
  ConvGeometry g{s[1], s[2], s[3], W.dim(2), W.dim(3), opts.stride, opts.pad};
  g.validate();
  if (W.dim(1) != g.channels)
    throw ShapeError("PG convolution weight " + shape_string(W.shape()) +
                     " does not match input " + shape_string(s));
  return {s[0], W.dim(0), g};
}

std::vector<float> transpose(const float *a, std::size_t r, std::size_t c) {
  std::vector<float> t(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      t[j * r + i] = a[i * c + j];
  return t;
}

std::vector<std::int32_t> transpose(const std::int32_t *a, std::size_t r,
                                    std::size_t c) {
  std::vector<std::int32_t> t(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      t[j * r + i] = a[i * c + j];
  return t;
}

PGLayerGrads make_grads(const Tensor &W, const Shape &input_shape,
                        const std::vector<double> &dW,
                        const std::vector<double> &dDelta,
                        const std::vector<double> &dBias, Tensor dInput) {
  PGLayerGrads g{Tensor(W.shape()), {}, std::move(dInput), {}};
  for (std::size_t i = 0; i < dW.size(); ++i)
    g.dW[i] = static_cast<float>(dW[i]);
  g.dDelta.assign(dDelta.begin(), dDelta.end());
  g.dBias.assign(dBias.begin(), dBias.end());
  check_same_shape(g.dInput.shape(), input_shape, "pg backward dInput");
  return g;
}

} // namespace

PGForward pg_forward(const SplitActivation &split, const Tensor &W,
                     const GateThresholds &thresholds, const PGLayerConfig &cfg,
                     const PGOptions &opts) {
  check_split(split, cfg);
  const ConvShape cs = conv_shape(split, W, opts);
  check_bias(opts.bias, cs.cout);
  const auto thr = effective_thresholds(thresholds, cfg, cs.cout);
  const ConvGeometry &g = cs.geom;
  const std::size_t P = g.positions(), K = g.patch_size();
  const std::size_t image = g.channels * g.height * g.width;
  const Shape out_shape{cs.batch, cs.cout, g.out_h(), g.out_w()};

  PGForward f{Tensor(out_shape), Tensor(out_shape), Tensor(out_shape),
              {IntTensor(out_shape)}, 0.0, opts.dense_lsb};
  PGCounters local;
  Scratch scratch;
  std::vector<float> hb(image), lb(image), rows_hb(P * K), rows_lb(P * K);
  const Block blk{cs.cout, P, K, true};
  for (std::size_t n = 0; n < cs.batch; ++n) {
    planes_as_float(split, n * image, (n + 1) * image, hb.data(), lb.data());
    im2row(hb.data(), g, rows_hb.data());
    im2row(lb.data(), g, rows_lb.data());
    const std::size_t off = n * cs.cout * P;
    forward_block(blk, W.data().data(), rows_hb.data(), W.data().data(),
                  rows_lb.data(), split.params.scale(), opts.bias, thr, opts,
                  f.out.data().data() + off, f.out_hb.data().data() + off,
                  f.out_lb.data().data() + off, f.mask.mask.data().data() + off,
                  local, scratch);
  }
  f.sparsity = f.mask.sparsity();
  if (opts.counters)
    *opts.counters += local;
  return f;
}

PGLayerGrads pg_backward(const SplitActivation &split, const Tensor &W,
                         const GateThresholds &thresholds,
                         const PGLayerConfig &cfg, const PGForward &fwd,
                         const Tensor &upstream, LsbGradient mode,
                         const PGOptions &opts) {
  check_split(split, cfg);
  const ConvShape cs = conv_shape(split, W, opts);
  const auto thr = effective_thresholds(thresholds, cfg, cs.cout);
  const ConvGeometry &g = cs.geom;
  const std::size_t P = g.positions(), K = g.patch_size();
  const std::size_t image = g.channels * g.height * g.width;
  check_forward_record(fwd, upstream, thr, Block{cs.cout, P, K, true}, cs.batch,
                       mode);

  std::vector<double> dW(W.numel(), 0.0), dDelta(cs.cout, 0.0),
      dBias(cs.cout, 0.0);
  Tensor dInput(split.shape());
  PGCounters local;
  std::vector<float> hb(image), lb(image), rows_hb(P * K), rows_lb(P * K),
      d_rows(P * K);
  for (std::size_t n = 0; n < cs.batch; ++n) {
    planes_as_float(split, n * image, (n + 1) * image, hb.data(), lb.data());
    im2row(hb.data(), g, rows_hb.data());
    im2row(lb.data(), g, rows_lb.data());
    const std::size_t off = n * cs.cout * P;
    const auto up_rc = transpose(upstream.data().data() + off, cs.cout, P);
    const BackwardBlock b{cs.cout,
                          P,
                          K,
                          W.data().data(),
                          rows_hb.data(),
                          rows_lb.data(),
                          upstream.data().data() + off,
                          up_rc.data(),
                          fwd.out_hb.data().data() + off,
                          fwd.out_lb.data().data() + off,
                          fwd.mask.mask.data().data() + off};
    backward_block(b, split.params.scale(), thr, cfg.alpha, mode, dW,
                   d_rows.data(), dDelta, dBias, local);
    row2im_add(d_rows.data(), g, dInput.data().data() + n * image);
  }
  if (opts.counters)
    *opts.counters += local;
  return make_grads(W, split.shape(), dW, dDelta, dBias, std::move(dInput));
}

namespace {

void dense_shape(const SplitActivation &split, const Tensor &W) {
  if (split.shape().size() != 2)
    throw ShapeError("PG dense input must be (batch, features), got " +
                     shape_string(split.shape()));
  if (W.rank() != 2 || W.dim(1) != split.shape()[1])
    throw ShapeError("PG dense weight " + shape_string(W.shape()) +
                     " does not match input " + shape_string(split.shape()));
}

} // namespace

PGForward pg_dense_forward(const SplitActivation &split, const Tensor &W,
                           const GateThresholds &thresholds,
                           const PGLayerConfig &cfg, const PGOptions &opts) {
  check_split(split, cfg);
  dense_shape(split, W);
  const std::size_t batch = split.shape()[0], K = split.shape()[1],
                    outs = W.dim(0);
  check_bias(opts.bias, outs);
  const auto thr = effective_thresholds(thresholds, cfg, outs);
  const Shape out_shape{batch, outs};

  PGForward f{Tensor(out_shape), Tensor(out_shape), Tensor(out_shape),
              {IntTensor(out_shape)}, 0.0, opts.dense_lsb};
  std::vector<float> hb(batch * K), lb(batch * K);
  planes_as_float(split, 0, batch * K, hb.data(), lb.data());
  PGCounters local;
  Scratch scratch;
  forward_block(Block{batch, outs, K, false}, hb.data(), W.data().data(),
                lb.data(), W.data().data(), split.params.scale(), opts.bias, thr,
                opts, f.out.data().data(), f.out_hb.data().data(),
                f.out_lb.data().data(), f.mask.mask.data().data(), local,
                scratch);
  f.sparsity = f.mask.sparsity();
  if (opts.counters)
    *opts.counters += local;
  return f;
}

PGLayerGrads pg_dense_backward(const SplitActivation &split, const Tensor &W,
                               const GateThresholds &thresholds,
                               const PGLayerConfig &cfg, const PGForward &fwd,
                               const Tensor &upstream, LsbGradient mode,
                               const PGOptions &opts) {
  check_split(split, cfg);
  dense_shape(split, W);
  const std::size_t batch = split.shape()[0], K = split.shape()[1],
                    outs = W.dim(0);
  const auto thr = effective_thresholds(thresholds, cfg, outs);
  check_forward_record(fwd, upstream, thr, Block{batch, outs, K, false}, 1,
                       mode);

  std::vector<float> hb(batch * K), lb(batch * K);
  planes_as_float(split, 0, batch * K, hb.data(), lb.data());
  const auto up_cr = transpose(upstream.data().data(), batch, outs);
  const auto hb_cr = transpose(fwd.out_hb.data().data(), batch, outs);
  const auto lb_cr = transpose(fwd.out_lb.data().data(), batch, outs);
  const auto mask_cr = transpose(fwd.mask.mask.data().data(), batch, outs);

  std::vector<double> dW(W.numel(), 0.0), dDelta(outs, 0.0), dBias(outs, 0.0);
  Tensor dInput(split.shape());
  PGCounters local;
  const BackwardBlock b{outs,          batch,         K,
                        W.data().data(), hb.data(),   lb.data(),
                        up_cr.data(),  upstream.data().data(),
                        hb_cr.data(),  lb_cr.data(), mask_cr.data()};
  backward_block(b, split.params.scale(), thr, cfg.alpha, mode, dW,
                 dInput.data().data(), dDelta, dBias, local);
  if (opts.counters)
    *opts.counters += local;
  return make_grads(W, split.shape(), dW, dDelta, dBias, std::move(dInput));
}

} // namespace pg
