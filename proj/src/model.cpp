// SPDX-License-Identifier: Apache-2.0
#include "pg/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

namespace pg {

std::string to_string(LayerKind k) {
  switch (k) {
  case LayerKind::conv:
    return "conv";
  case LayerKind::dense:
    return "dense";
  case LayerKind::pg_conv:
    return "pg_conv";
  case LayerKind::pg_dense:
    return "pg_dense";
  case LayerKind::relu:
    return "relu";
  case LayerKind::global_avg_pool:
    return "global_avg_pool";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string &s) {
  for (LayerKind k : {LayerKind::conv, LayerKind::dense, LayerKind::pg_conv,
                      LayerKind::pg_dense, LayerKind::relu,
                      LayerKind::global_avg_pool})
    if (to_string(k) == s)
      return k;
  throw std::invalid_argument("unknown layer kind '" + s + "'");
}

void ModelSpec::validate() const {
  if (layers.empty())
    throw std::invalid_argument("model '" + name + "' has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc &l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
    if (l.has_weights() && (l.in == 0 || l.out == 0))
      throw std::invalid_argument(where + " needs non-zero widths");
    if (l.is_gated()) {
      try {
        l.pg.validate();
      } catch (const std::invalid_argument &e) {
        throw std::invalid_argument(where + ": " + e.what());
      }
      if (!(l.clip_init > 0.0f))
        throw std::invalid_argument(where + ": clip_init must be > 0");
    }
    if ((l.kind == LayerKind::conv || l.kind == LayerKind::pg_conv) &&
        (l.kernel == 0 || l.stride == 0))
      throw std::invalid_argument(where + ": kernel and stride must be >= 1");
  }
  // Width chaining: `width` is the channel count of an NCHW activation or
  // the feature count once the activation is flat.
  std::size_t width = input_shape.empty() ? 0 : input_shape[0];
  bool flat = false, spatial = false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc &l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
    if (l.kind == LayerKind::conv || l.kind == LayerKind::pg_conv) {
      if (flat || l.in != width)
        throw std::invalid_argument(where + " expects " + std::to_string(l.in) +
                                    " input channels, previous layer gives " +
                                    std::to_string(flat ? 0 : width));
      width = l.out;
      spatial = true;
    } else if (l.kind == LayerKind::dense || l.kind == LayerKind::pg_dense) {
      if (spatial)
        throw std::invalid_argument(where + " needs global pooling before it");
      const std::size_t features = flat ? width : shape_numel(input_shape);
      if (l.in != features)
        throw std::invalid_argument(where + " expects " + std::to_string(l.in) +
                                    " input features, previous layer gives " +
                                    std::to_string(features));
      width = l.out;
      flat = true;
    } else if (l.kind == LayerKind::global_avg_pool) {
      if (!spatial)
        throw std::invalid_argument(where + " needs an NCHW input");
      spatial = false;
      flat = true;
    }
  }
}

namespace {

LayerDesc gated(LayerKind kind, std::size_t in, std::size_t out,
                const PGLayerConfig &pg, float clip, std::size_t stride = 1) {
  LayerDesc d;
  d.kind = kind;
  d.in = in;
  d.out = out;
  d.stride = stride;
  d.pg = pg;
  d.clip_init = clip;
  return d;
}

} // namespace

ModelSpec mlp_spec(const PGLayerConfig &pg) {
  ModelSpec s{"mlp", {1, 28, 28}, {}};
  s.layers.push_back(gated(LayerKind::pg_dense, 784, 128, pg, 1.0f));
  s.layers.push_back(gated(LayerKind::pg_dense, 128, 10, pg, 4.0f));
  return s;
}

ModelSpec cnn_spec(const PGLayerConfig &pg, std::size_t in_channels) {
  ModelSpec s{"cnn", {in_channels, 28, 28}, {}};
  LayerDesc stem;
  stem.kind = LayerKind::conv;
  stem.in = in_channels;
  stem.out = 16;
  s.layers.push_back(stem);
  s.layers.push_back(gated(LayerKind::pg_conv, 16, 16, pg, 2.0f, 2));
  s.layers.push_back(gated(LayerKind::pg_conv, 16, 32, pg, 2.0f));
  s.layers.push_back(gated(LayerKind::pg_conv, 32, 32, pg, 2.0f, 2));
  s.layers.push_back(gated(LayerKind::pg_conv, 32, 64, pg, 2.0f));
  s.layers.push_back(gated(LayerKind::pg_conv, 64, 64, pg, 2.0f));
  s.layers.push_back(LayerDesc{LayerKind::relu});
  s.layers.push_back(LayerDesc{LayerKind::global_avg_pool});
  LayerDesc head;
  head.kind = LayerKind::dense;
  head.in = 64;
  head.out = 10;
  s.layers.push_back(head);
  return s;
}

void set_pg_config(ModelSpec &spec, const PGLayerConfig &pg) {
  for (LayerDesc &l : spec.layers)
    if (l.is_gated())
      l.pg = pg;
}

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  for (const LayerDesc &d : spec_.layers) {
    Layer l;
    l.desc = d;
    if (d.has_weights()) {
      const bool conv = d.kind == LayerKind::conv || d.kind == LayerKind::pg_conv;
      const Shape wshape = conv ? Shape{d.out, d.in, d.kernel, d.kernel}
                                : Shape{d.out, d.in};
      const std::size_t fan_in = conv ? d.in * d.kernel * d.kernel : d.in;
      std::normal_distribution<float> normal(
          0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
      l.weight = Tensor(wshape);
      for (float &w : l.weight.data())
        w = normal(rng);
      l.bias = Tensor({d.out});
      l.dweight = Tensor(wshape);
      l.dbias = Tensor({d.out});
    }
    if (d.is_gated()) {
      l.clip = d.clip_init;
      l.thresholds = GateThresholds::filled(d.out, 0.0f);
      l.dthresholds.assign(d.out, 0.0f);
    }
    layers_.push_back(std::move(l));
  }
}

namespace {

ConvGeometry geometry(const Shape &in, const LayerDesc &d) {
  if (in.size() != 4 || in[1] != d.in)
    throw ShapeError(to_string(d.kind) + " layer expects (N, " +
                     std::to_string(d.in) + ", H, W), got " + shape_string(in));
  ConvGeometry g{in[1], in[2], in[3], d.kernel, d.kernel, d.stride, d.pad};
  g.validate();
  return g;
}

Tensor flatten(const Tensor &x) {
  const std::size_t n = x.dim(0);
  return x.reshaped({n, x.numel() / n});
}

Tensor conv_forward(const Layer &l, const Tensor &x) {
  const ConvGeometry g = geometry(x.shape(), l.desc);
  const std::size_t n = x.dim(0), cout = l.desc.out, P = g.positions(),
                    K = g.patch_size(), image = g.channels * g.height * g.width;
  Tensor out({n, cout, g.out_h(), g.out_w()});
  std::vector<float> rows(P * K);
  std::vector<double> acc(cout * P);
  for (std::size_t b = 0; b < n; ++b) {
    im2row(x.data().data() + b * image, g, rows.data());
    kernels::gemm_nt(l.weight.data().data(), rows.data(), cout, P, K, acc.data());
    float *o = out.data().data() + b * cout * P;
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t p = 0; p < P; ++p)
        o[c * P + p] = static_cast<float>(acc[c * P + p] + l.bias[c]);
  }
  return out;
}

Tensor conv_backward(Layer &l, const Tensor &dout) {
  const Tensor &x = l.input;
  const ConvGeometry g = geometry(x.shape(), l.desc);
  const std::size_t n = x.dim(0), cout = l.desc.out, P = g.positions(),
                    K = g.patch_size(), image = g.channels * g.height * g.width;
  std::vector<float> rows(P * K), up_t(P * cout), drows(P * K);
  std::vector<double> tmp(std::max(cout * K, P * K)), dW(cout * K, 0.0),
      db(cout, 0.0);
  Tensor dx(x.shape());
  for (std::size_t b = 0; b < n; ++b) {
    im2row(x.data().data() + b * image, g, rows.data());
    const float *up = dout.data().data() + b * cout * P;
    kernels::gemm(up, rows.data(), cout, P, K, tmp.data());
    for (std::size_t i = 0; i < cout * K; ++i)
      dW[i] += tmp[i];
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t p = 0; p < P; ++p) {
        db[c] += up[c * P + p];
        up_t[p * cout + c] = up[c * P + p];
      }
    kernels::gemm(up_t.data(), l.weight.data().data(), P, cout, K, tmp.data());
    for (std::size_t i = 0; i < P * K; ++i)
      drows[i] = static_cast<float>(tmp[i]);
    row2im_add(drows.data(), g, dx.data().data() + b * image);
  }
  for (std::size_t i = 0; i < dW.size(); ++i)
    l.dweight[i] = static_cast<float>(dW[i]);
  for (std::size_t c = 0; c < cout; ++c)
    l.dbias[c] = static_cast<float>(db[c]);
  return dx;
}

Tensor dense_forward(const Layer &l, const Tensor &x2) {
  const std::size_t n = x2.dim(0), k = x2.dim(1), outs = l.desc.out;
  if (k != l.desc.in)
    throw ShapeError("dense layer expects " + std::to_string(l.desc.in) +
                     " features, got " + shape_string(x2.shape()));
  std::vector<double> acc(n * outs);
  kernels::gemm_nt(x2.data().data(), l.weight.data().data(), n, outs, k,
                   acc.data());
  Tensor out({n, outs});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < outs; ++j)
      out[i * outs + j] = static_cast<float>(acc[i * outs + j] + l.bias[j]);
  return out;
}

Tensor dense_backward(Layer &l, const Tensor &dout) {
  const Tensor &x2 = l.input;
  const std::size_t n = x2.dim(0), k = x2.dim(1), outs = l.desc.out;
  const Tensor up_t = transpose2d(dout);
  std::vector<double> tmp(std::max(outs * k, n * k));
  kernels::gemm(up_t.data().data(), x2.data().data(), outs, n, k, tmp.data());
  for (std::size_t i = 0; i < outs * k; ++i)
    l.dweight[i] = static_cast<float>(tmp[i]);
  for (std::size_t j = 0; j < outs; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      s += dout[i * outs + j];
    l.dbias[j] = static_cast<float>(s);
  }
  kernels::gemm(dout.data().data(), l.weight.data().data(), n, outs, k,
                tmp.data());
  Tensor dx({n, k});
  for (std::size_t i = 0; i < n * k; ++i)
    dx[i] = static_cast<float>(tmp[i]);
  return dx;
}

PGOptions gated_options(const Layer &l, const ForwardOptions *fo) {
  PGOptions o;
  o.stride = l.desc.stride;
  o.pad = l.desc.pad;
  o.bias = l.bias.data();
  if (fo) {
    o.dense_lsb = fo->dense_lsb;
    o.counters = fo->counters;
  }
  return o;
}

Tensor gated_forward(Layer &l, const Tensor &x, const ForwardOptions &opts,
                     std::size_t index) {
  const bool conv = l.desc.kind == LayerKind::pg_conv;
  const Tensor clipped = pact_clip_forward(x, l.clip);
  const QuantParams params(l.desc.pg.bits, l.clip);
  l.split = split_bits(quantize(clipped, params), l.desc.pg.msb_bits);
  const PGOptions po = gated_options(l, &opts);
  l.gated = conv ? pg_forward(*l.split, l.weight, l.thresholds, l.desc.pg, po)
                 : pg_dense_forward(*l.split, l.weight, l.thresholds,
                                    l.desc.pg, po);
  if (opts.gate_stats) {
    auto &stats = *opts.gate_stats;
    auto it = std::find_if(stats.begin(), stats.end(),
                           [&](const LayerGateStats &s) { return s.layer == index; });
    if (it == stats.end()) {
      stats.push_back({index, 0, 0, l.desc.pg.bits, l.desc.pg.msb_bits});
      it = stats.end() - 1;
    }
    it->active += l.gated->mask.active();
    it->total += l.gated->mask.mask.numel();
  }
  return l.gated->out;
}

Tensor gated_backward(Layer &l, const Tensor &dout, LsbGradient mode,
                      PGCounters *counters) {
  const bool conv = l.desc.kind == LayerKind::pg_conv;
  PGOptions po = gated_options(l, nullptr);
  po.counters = counters;
  const PGLayerGrads g =
      conv ? pg_backward(*l.split, l.weight, l.thresholds, l.desc.pg, *l.gated,
                         dout, mode, po)
           : pg_dense_backward(*l.split, l.weight, l.thresholds, l.desc.pg,
                               *l.gated, dout, mode, po);
  // Copy into the existing buffers; ParamRef spans point at them.
  std::copy(g.dW.data().begin(), g.dW.data().end(), l.dweight.data().begin());
  std::copy(g.dBias.begin(), g.dBias.end(), l.dbias.data().begin());
  std::copy(g.dDelta.begin(), g.dDelta.end(), l.dthresholds.begin());

  const Tensor clipped = pact_clip_forward(l.input, l.clip);
  const QuantParams params(l.desc.pg.bits, l.clip);
  const Tensor dclipped = quantize_ste_backward(clipped, params, g.dInput);
  PactGrad pact = pact_clip_backward(l.input, l.clip, dclipped);
  l.dclip = pact.dclip;
  return std::move(pact.dx);
}

} // namespace

Tensor Model::forward(const Tensor &x, const ForwardOptions &opts) {
  Shape expect{x.dim(0)};
  expect.insert(expect.end(), spec_.input_shape.begin(), spec_.input_shape.end());
  if (x.shape() != expect)
    throw ShapeError("model '" + spec_.name + "' expects input " +
                     shape_string(expect) + ", got " + shape_string(x.shape()));
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer &l = layers_[i];
    switch (l.desc.kind) {
    case LayerKind::conv:
      l.input = h;
      h = conv_forward(l, h);
      break;
    case LayerKind::dense:
      l.input = flatten(h);
      h = dense_forward(l, l.input);
      break;
    case LayerKind::pg_conv:
      l.input = h;
      h = gated_forward(l, h, opts, i);
      break;
    case LayerKind::pg_dense:
      l.input = flatten(h);
      h = gated_forward(l, l.input, opts, i);
      break;
    case LayerKind::relu:
      l.input = h;
      for (float &v : h.data())
        v = std::max(v, 0.0f);
      break;
    case LayerKind::global_avg_pool: {
      if (h.rank() != 4)
        throw ShapeError("global average pooling expects NCHW, got " +
                         shape_string(h.shape()));
      l.input = h;
      const std::size_t n = h.dim(0), c = h.dim(1), hw = h.dim(2) * h.dim(3);
      Tensor pooled({n, c});
      for (std::size_t i2 = 0; i2 < n * c; ++i2) {
        double s = 0.0;
        for (std::size_t p = 0; p < hw; ++p)
          s += h[i2 * hw + p];
        pooled[i2] = static_cast<float>(s / static_cast<double>(hw));
      }
      h = std::move(pooled);
      break;
    }
    }
  }
  return h;
}

void Model::backward(const Tensor &dlogits, LsbGradient mode,
                     PGCounters *counters) {
  Tensor g = dlogits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    Layer &l = layers_[i];
    switch (l.desc.kind) {
    case LayerKind::conv:
      g = conv_backward(l, g);
      break;
    case LayerKind::dense:
      g = dense_backward(l, g);
      break;
    case LayerKind::pg_conv:
    case LayerKind::pg_dense:
      g = gated_backward(l, g.reshaped(l.gated->out.shape()), mode, counters);
      break;
    case LayerKind::relu:
      for (std::size_t k = 0; k < g.numel(); ++k)
        if (!(l.input[k] > 0.0f))
          g[k] = 0.0f;
      break;
    case LayerKind::global_avg_pool: {
      const Tensor &in = l.input;
      const std::size_t nc = in.dim(0) * in.dim(1), hw = in.dim(2) * in.dim(3);
      Tensor dx(in.shape());
      for (std::size_t k = 0; k < nc; ++k)
        for (std::size_t p = 0; p < hw; ++p)
          dx[k * hw + p] = g[k] / static_cast<float>(hw);
      g = std::move(dx);
      break;
    }
    }
    if (g.shape() != l.input.shape())
      g = g.reshaped(l.input.shape());
  }
}

std::vector<ParamRef> Model::parameters() {
  std::vector<ParamRef> params;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer &l = layers_[i];
    if (!l.desc.has_weights())
      continue;
    char prefix[64];
    std::snprintf(prefix, sizeof prefix, "layer%02zu.%s", i,
                  to_string(l.desc.kind).c_str());
    const std::string p(prefix);
    params.push_back({p + ".weight", ParamKind::weight, i, l.weight.shape(),
                      l.weight.data(), l.dweight.data()});
    params.push_back({p + ".bias", ParamKind::bias, i, l.bias.shape(),
                      l.bias.data(), l.dbias.data()});
    if (l.desc.is_gated()) {
      params.push_back({p + ".clip", ParamKind::clip, i, {1},
                        std::span<float>(&l.clip, 1),
                        std::span<float>(&l.dclip, 1)});
      params.push_back({p + ".threshold", ParamKind::threshold, i,
                        {l.thresholds.delta.size()}, l.thresholds.delta,
                        l.dthresholds});
    }
  }
  return params;
}

void Model::set_fixed_threshold(float threshold) {
  for (LayerDesc &d : spec_.layers)
    if (d.is_gated()) {
      d.pg.mode = ThresholdMode::fixed;
      d.pg.fixed_threshold = threshold;
    }
  for (Layer &l : layers_)
    if (l.desc.is_gated()) {
      l.desc.pg.mode = ThresholdMode::fixed;
      l.desc.pg.fixed_threshold = threshold;
    }
}

const GateMask &Model::last_mask(std::size_t layer) const {
  const Layer &l = layers_.at(layer);
  if (!l.desc.is_gated())
    throw std::invalid_argument("layer " + std::to_string(layer) + " (" +
                                to_string(l.desc.kind) + ") is not gated");
  if (!l.gated)
    throw std::logic_error("layer " + std::to_string(layer) +
                           " has not run a forward pass");
  return l.gated->mask;
}

} // namespace pg
