#include "crank/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crank/kernels.hpp"
#include "crank/rng.hpp"

namespace crank {

namespace {

std::string shape_to_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void check_shape(const Tensor& t, const std::vector<int>& expected, const char* what) {
  if (t.shape != expected) {
    throw std::invalid_argument(std::string(what) + ": expected shape " +
                                shape_to_str(expected) + ", got " + shape_to_str(t.shape));
  }
}

kern::ConvShape conv_shape(const Tensor& x, const ConvLayer& layer, int pad_h,
                           int pad_w, int stride) {
  kern::ConvShape s;
  s.in_c = x.dim(0);
  s.in_h = x.dim(1);
  s.in_w = x.dim(2);
  s.out_c = layer.w.dim(0);
  s.kh = layer.w.dim(2);
  s.kw = layer.w.dim(3);
  s.pad_h = pad_h;
  s.pad_w = pad_w;
  s.stride = stride;
  return s;
}

Tensor conv_fwd(const Tensor& x, const ConvLayer& layer, int pad_h, int pad_w,
                int stride) {
  const auto s = conv_shape(x, layer, pad_h, pad_w, stride);
  Tensor y({s.out_c, s.out_h(), s.out_w()});
  kern::active_ops().conv2d_fwd(x.ptr(), layer.w.ptr(), layer.b.ptr(), y.ptr(), s);
  return y;
}

Tensor lrelu(const Tensor& x, double alpha) {
  Tensor y(x.shape);
  kern::active_ops().leaky_relu_fwd(x.ptr(), y.ptr(), x.numel(), alpha);
  return y;
}

// out[c][h][w] = in[c][h*in_h/out_h][w*in_w/out_w]
Tensor nn_resize(const Tensor& in, int out_h, int out_w) {
  Tensor out({in.dim(0), out_h, out_w});
  const int in_h = in.dim(1);
  const int in_w = in.dim(2);
  for (int c = 0; c < in.dim(0); ++c) {
    for (int h = 0; h < out_h; ++h) {
      const int sh = h * in_h / out_h;
      for (int w = 0; w < out_w; ++w) {
        const int sw = w * in_w / out_w;
        out.at(c, h, w) = in.at(c, sh, sw);
      }
    }
  }
  return out;
}

void nn_resize_bwd(const Tensor& d_out, Tensor& d_in) {
  const int out_h = d_out.dim(1);
  const int out_w = d_out.dim(2);
  const int in_h = d_in.dim(1);
  const int in_w = d_in.dim(2);
  for (int c = 0; c < d_out.dim(0); ++c) {
    for (int h = 0; h < out_h; ++h) {
      const int sh = h * in_h / out_h;
      for (int w = 0; w < out_w; ++w) {
        const int sw = w * in_w / out_w;
        d_in.at(c, sh, sw) += d_out.at(c, h, w);
      }
    }
  }
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.numel());
  return out;
}

}  // namespace

void RankerConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw std::invalid_argument(std::string("RankerConfig: ") + name +
                                           " must be positive");
  };
  positive(capacity_n, "capacity_n");
  positive(bpn_channels, "bpn_channels");
  positive(bpn_depth, "bpn_depth");
  positive(interleave, "interleave");
  positive(scales, "scales");
  positive(fpn_channels, "fpn_channels");
  positive(image_size, "image_size");
  if (interleave > bpn_depth) {
    throw std::invalid_argument("RankerConfig: interleave must not exceed bpn_depth");
  }
  if (backbone_channels.empty()) {
    throw std::invalid_argument("RankerConfig: backbone_channels must be non-empty");
  }
  for (int c : backbone_channels) positive(c, "backbone_channels entry");
  if (scales > static_cast<int>(backbone_channels.size())) {
    throw std::invalid_argument("RankerConfig: scales exceeds backbone stage count");
  }
  if (stage_size(static_cast<int>(backbone_channels.size()) - 1) < 1) {
    throw std::invalid_argument("RankerConfig: image_size too small for backbone depth");
  }
}

int RankerConfig::stage_size(int stage) const {
  int s = image_size;
  for (int i = 0; i <= stage; ++i) s = (s - 1) / 2 + 1;
  return s;
}

std::vector<ParamShape> parameter_shapes(const RankerConfig& cfg) {
  cfg.validate();
  std::vector<ParamShape> out;
  auto conv = [&out](const std::string& name, int oc, int ic, int kh, int kw) {
    out.push_back({name + ".w", {oc, ic, kh, kw}});
    out.push_back({name + ".b", {oc}});
  };
  int in_c = 1;
  for (std::size_t i = 0; i < cfg.backbone_channels.size(); ++i) {
    conv("backbone." + std::to_string(i), cfg.backbone_channels[i], in_c, 3, 3);
    in_c = cfg.backbone_channels[i];
  }
  in_c = 1;
  for (int i = 0; i < cfg.bpn_depth; ++i) {
    conv("bpn." + std::to_string(i), cfg.bpn_channels, in_c, 3, 5);
    in_c = cfg.bpn_channels;
  }
  for (int s = 0; s < cfg.scales; ++s) {
    const int img_c = cfg.backbone_channels[cfg.stage_for_scale(s)];
    conv("merge." + std::to_string(s), cfg.fpn_channels, img_c + cfg.bpn_channels, 3, 3);
  }
  for (int s = 0; s < cfg.scales; ++s) {
    conv("conf." + std::to_string(s), cfg.fpn_channels, cfg.fpn_channels, 3, 3);
  }
  for (int s = 0; s < cfg.scales; ++s) {
    out.push_back({"fc." + std::to_string(s) + ".w", {cfg.fpn_channels, cfg.capacity_n}});
    out.push_back({"fc." + std::to_string(s) + ".b", {cfg.capacity_n}});
  }
  return out;
}

std::size_t parameter_count(const RankerConfig& cfg) {
  std::size_t n = 0;
  for (const auto& p : parameter_shapes(cfg)) n += Tensor::numel_of(p.shape);
  return n;
}

namespace {

template <typename Net, typename Ref>
std::vector<Ref> collect_params(Net& net) {
  std::vector<Ref> out;
  auto conv_group = [&out](auto& layers, const char* prefix) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const std::string base = std::string(prefix) + "." + std::to_string(i);
      out.push_back({base + ".w", &layers[i].w});
      out.push_back({base + ".b", &layers[i].b});
    }
  };
  conv_group(net.backbone, "backbone");
  conv_group(net.bpn, "bpn");
  conv_group(net.merge, "merge");
  conv_group(net.conf, "conf");
  for (std::size_t i = 0; i < net.fc.size(); ++i) {
    const std::string base = "fc." + std::to_string(i);
    out.push_back({base + ".w", &net.fc[i].w});
    out.push_back({base + ".b", &net.fc[i].b});
  }
  return out;
}

}  // namespace

std::vector<ParamRef> parameters(RankerNetwork& net) {
  return collect_params<RankerNetwork, ParamRef>(net);
}
std::vector<ConstParamRef> parameters(const RankerNetwork& net) {
  return collect_params<const RankerNetwork, ConstParamRef>(net);
}
std::vector<ParamRef> parameters(Gradients& g, const RankerConfig&) {
  return collect_params<Gradients, ParamRef>(g);
}

namespace {

template <typename T>
void build_containers(T& net, const RankerConfig& cfg) {
  const auto shapes = parameter_shapes(cfg);
  std::size_t i = 0;
  auto take = [&shapes, &i]() { return Tensor(shapes[i++].shape); };
  net.backbone.resize(cfg.backbone_channels.size());
  for (auto& l : net.backbone) { l.w = take(); l.b = take(); }
  net.bpn.resize(cfg.bpn_depth);
  for (auto& l : net.bpn) { l.w = take(); l.b = take(); }
  net.merge.resize(cfg.scales);
  for (auto& l : net.merge) { l.w = take(); l.b = take(); }
  net.conf.resize(cfg.scales);
  for (auto& l : net.conf) { l.w = take(); l.b = take(); }
  net.fc.resize(cfg.scales);
  for (auto& l : net.fc) { l.w = take(); l.b = take(); }
}

}  // namespace

RankerNetwork init_network(const RankerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  RankerNetwork net;
  net.config = cfg;
  net.rng_seed = seed;
  build_containers(net, cfg);

  Rng rng(seed);
  auto he_fill = [&rng](Tensor& w) {
    // fan-in from [out_c][in_c][kh][kw]
    const std::size_t fan_in = w.numel() / static_cast<std::size_t>(w.dim(0));
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.data) v = rng.normal() * sd;
  };
  for (auto& l : net.backbone) he_fill(l.w);
  for (auto& l : net.bpn) he_fill(l.w);
  for (auto& l : net.merge) he_fill(l.w);
  for (auto& l : net.conf) he_fill(l.w);
  // fc layers stay zero: identity at initialization.
  return net;
}

Gradients zero_gradients(const RankerConfig& cfg) {
  Gradients g;
  build_containers(g, cfg);
  g.d_raw_conf.assign(static_cast<std::size_t>(cfg.capacity_n), 0.0);
  return g;
}

namespace {

struct ForwardScratch {
  ForwardTrace trace;
};

void run_backbone(const RankerNetwork& net, const Tensor& image, ForwardTrace& tr) {
  const auto& cfg = net.config;
  check_shape(image, {1, cfg.image_size, cfg.image_size}, "backbone_forward image");
  tr.image = image;
  const Tensor* x = &tr.image;
  for (std::size_t i = 0; i < net.backbone.size(); ++i) {
    tr.bb_pre.push_back(conv_fwd(*x, net.backbone[i], 1, 1, 2));
    tr.bb_act.push_back(lrelu(tr.bb_pre.back(), cfg.leaky_alpha));
    x = &tr.bb_act.back();
  }
}

void run_bpn(const RankerNetwork& net, const Tensor& box_matrix, ForwardTrace& tr) {
  const auto& cfg = net.config;
  check_shape(box_matrix, {1, cfg.capacity_n, 5}, "bpn_forward box matrix");
  tr.boxmat = box_matrix;
  const Tensor* x = &tr.boxmat;
  for (int l = 0; l < cfg.bpn_depth; ++l) {
    tr.bpn_pre.push_back(conv_fwd(*x, net.bpn[l], 1, 2, 1));
    Tensor act = lrelu(tr.bpn_pre.back(), cfg.leaky_alpha);
    if (l > 0) {
      kern::active_ops().add_inplace(act.ptr(), x->ptr(), act.numel());
    }
    tr.bpn_act.push_back(std::move(act));
    if ((l + 1) % cfg.interleave == 0) tr.emission_layers.push_back(l);
    x = &tr.bpn_act.back();
  }
}

std::vector<double> run_fusion(const RankerNetwork& net,
                               std::span<const double> raw_conf, ForwardTrace& tr) {
  const auto& cfg = net.config;
  const auto& ops = kern::active_ops();
  if (static_cast<int>(raw_conf.size()) != cfg.capacity_n) {
    throw std::invalid_argument("fuse_and_score: raw_conf length " +
                                std::to_string(raw_conf.size()) + ", expected " +
                                std::to_string(cfg.capacity_n));
  }
  tr.raw_conf.assign(raw_conf.begin(), raw_conf.end());
  tr.residual.assign(static_cast<std::size_t>(cfg.capacity_n), 0.0);

  for (int s = 0; s < cfg.scales; ++s) {
    const Tensor& img = tr.bb_act[cfg.stage_for_scale(s)];
    const Tensor& emission = tr.bpn_act[tr.emission_layers[cfg.emission_for_scale(s)]];
    tr.interp.push_back(nn_resize(emission, img.dim(1), img.dim(2)));
    tr.concat.push_back(concat_channels(img, tr.interp.back()));
    tr.merge_pre.push_back(conv_fwd(tr.concat.back(), net.merge[s], 1, 1, 1));
    tr.merge_act.push_back(lrelu(tr.merge_pre.back(), cfg.leaky_alpha));
    tr.conf_pre.push_back(conv_fwd(tr.merge_act.back(), net.conf[s], 1, 1, 1));
    tr.conf_act.push_back(lrelu(tr.conf_pre.back(), cfg.leaky_alpha));

    const Tensor& ca = tr.conf_act.back();
    const double inv = 1.0 / static_cast<double>(ca.dim(1) * ca.dim(2));
    std::vector<double> gap(static_cast<std::size_t>(cfg.fpn_channels), 0.0);
    for (int c = 0; c < cfg.fpn_channels; ++c) {
      double acc = 0.0;
      const double* plane = ca.ptr() + static_cast<std::size_t>(c) * ca.dim(1) * ca.dim(2);
      for (int i = 0; i < ca.dim(1) * ca.dim(2); ++i) acc += plane[i];
      gap[static_cast<std::size_t>(c)] = acc * inv;
    }
    tr.gap.push_back(gap);

    std::vector<double> out(static_cast<std::size_t>(cfg.capacity_n), 0.0);
    ops.fc_fwd(gap.data(), net.fc[s].w.ptr(), net.fc[s].b.ptr(), out.data(),
               cfg.fpn_channels, cfg.capacity_n);
    tr.fc_out.push_back(std::move(out));
  }

  const double inv_scales = 1.0 / static_cast<double>(cfg.scales);
  for (int i = 0; i < cfg.capacity_n; ++i) {
    double acc = 0.0;
    for (int s = 0; s < cfg.scales; ++s) acc += tr.fc_out[s][static_cast<std::size_t>(i)];
    tr.residual[static_cast<std::size_t>(i)] = acc * inv_scales;
  }

  tr.pre_clamp.resize(static_cast<std::size_t>(cfg.capacity_n));
  std::vector<double> refined(static_cast<std::size_t>(cfg.capacity_n));
  for (int i = 0; i < cfg.capacity_n; ++i) {
    const double pre = tr.raw_conf[static_cast<std::size_t>(i)] +
                       tr.residual[static_cast<std::size_t>(i)];
    tr.pre_clamp[static_cast<std::size_t>(i)] = pre;
    refined[static_cast<std::size_t>(i)] = std::clamp(pre, 0.0, 1.0);
  }
  return refined;
}

}  // namespace

std::vector<Tensor> bpn_forward(const RankerNetwork& net, const Tensor& box_matrix) {
  ForwardTrace tr;
  run_bpn(net, box_matrix, tr);
  std::vector<Tensor> out;
  for (int l : tr.emission_layers) out.push_back(tr.bpn_act[static_cast<std::size_t>(l)]);
  return out;
}

std::vector<Tensor> backbone_forward(const RankerNetwork& net, const Tensor& image) {
  ForwardTrace tr;
  run_backbone(net, image, tr);
  std::vector<Tensor> out;
  for (int s = 0; s < net.config.scales; ++s) {
    out.push_back(tr.bb_act[net.config.stage_for_scale(s)]);
  }
  return out;
}

std::vector<double> fuse_and_score(const RankerNetwork& net,
                                   const std::vector<Tensor>& image_features,
                                   const std::vector<Tensor>& bpn_features,
                                   std::span<const double> raw_conf) {
  const auto& cfg = net.config;
  if (static_cast<int>(image_features.size()) != cfg.scales) {
    throw std::invalid_argument("fuse_and_score: expected " + std::to_string(cfg.scales) +
                                " image feature scales, got " +
                                std::to_string(image_features.size()));
  }
  if (static_cast<int>(bpn_features.size()) != cfg.emission_count()) {
    throw std::invalid_argument("fuse_and_score: expected " +
                                std::to_string(cfg.emission_count()) +
                                " box features, got " + std::to_string(bpn_features.size()));
  }
  // Rebuild a minimal trace so the shared fusion path can run.
  ForwardTrace tr;
  tr.bb_act.resize(net.backbone.size());
  for (int s = 0; s < cfg.scales; ++s) {
    const int stage = cfg.stage_for_scale(s);
    check_shape(image_features[s],
                {cfg.backbone_channels[stage], cfg.stage_size(stage), cfg.stage_size(stage)},
                "fuse_and_score image feature");
    tr.bb_act[static_cast<std::size_t>(stage)] = image_features[s];
  }
  tr.bpn_act.resize(static_cast<std::size_t>(cfg.bpn_depth));
  for (int e = 0; e < cfg.emission_count(); ++e) {
    const int layer = cfg.interleave * (e + 1) - 1;
    check_shape(bpn_features[static_cast<std::size_t>(e)],
                {cfg.bpn_channels, cfg.capacity_n, 5}, "fuse_and_score box feature");
    tr.bpn_act[static_cast<std::size_t>(layer)] = bpn_features[static_cast<std::size_t>(e)];
    tr.emission_layers.push_back(layer);
  }
  return run_fusion(net, raw_conf, tr);
}

ForwardResult forward(const RankerNetwork& net, const Tensor& image,
                      const Tensor& box_matrix, std::span<const double> raw_conf) {
  ForwardResult res;
  res.trace.version = net.version;
  run_backbone(net, image, res.trace);
  run_bpn(net, box_matrix, res.trace);
  res.refined = run_fusion(net, raw_conf, res.trace);
  return res;
}

Gradients backward(const RankerNetwork& net, const ForwardTrace& trace,
                   std::span<const double> d_refined) {
  const auto& cfg = net.config;
  const auto& ops = kern::active_ops();
  if (trace.version != net.version) {
    throw std::logic_error("backward: stale trace (parameters updated since forward)");
  }
  if (static_cast<int>(d_refined.size()) != cfg.capacity_n) {
    throw std::invalid_argument("backward: d_refined length mismatch");
  }
  Gradients g = zero_gradients(cfg);

  // clamp: zero outside the interior; at an exact boundary the gradient
  // passes only when it points inward.
  std::vector<double> d_pre(static_cast<std::size_t>(cfg.capacity_n), 0.0);
  for (int i = 0; i < cfg.capacity_n; ++i) {
    const double pre = trace.pre_clamp[static_cast<std::size_t>(i)];
    const double gi = d_refined[static_cast<std::size_t>(i)];
    const bool pass = (pre > 0.0 && pre < 1.0) || (pre == 0.0 && gi < 0.0) ||
                      (pre == 1.0 && gi > 0.0);
    d_pre[static_cast<std::size_t>(i)] = pass ? gi : 0.0;
  }
  g.d_raw_conf = d_pre;

  const double inv_scales = 1.0 / static_cast<double>(cfg.scales);
  std::vector<Tensor> d_bb_act(net.backbone.size());
  for (std::size_t i = 0; i < net.backbone.size(); ++i) {
    d_bb_act[i] = Tensor(trace.bb_act[i].shape);
  }
  std::vector<Tensor> d_bpn_act(static_cast<std::size_t>(cfg.bpn_depth));
  for (int l = 0; l < cfg.bpn_depth; ++l) {
    d_bpn_act[static_cast<std::size_t>(l)] =
        Tensor(trace.bpn_act[static_cast<std::size_t>(l)].shape);
  }

  for (int s = 0; s < cfg.scales; ++s) {
    const std::size_t su = static_cast<std::size_t>(s);
    // residual average -> per-scale fc output
    std::vector<double> d_fc_out(static_cast<std::size_t>(cfg.capacity_n));
    for (int i = 0; i < cfg.capacity_n; ++i) {
      d_fc_out[static_cast<std::size_t>(i)] = d_pre[static_cast<std::size_t>(i)] * inv_scales;
    }
    std::vector<double> d_gap(static_cast<std::size_t>(cfg.fpn_channels), 0.0);
    ops.fc_bwd_data(d_fc_out.data(), net.fc[su].w.ptr(), d_gap.data(),
                    cfg.fpn_channels, cfg.capacity_n);
    ops.fc_bwd_weights(trace.gap[su].data(), d_fc_out.data(), g.fc[su].w.ptr(),
                       g.fc[su].b.ptr(), cfg.fpn_channels, cfg.capacity_n);

    const Tensor& conf_act = trace.conf_act[su];
    Tensor d_conf_act(conf_act.shape);
    const int hw = conf_act.dim(1) * conf_act.dim(2);
    const double inv_hw = 1.0 / static_cast<double>(hw);
    for (int c = 0; c < cfg.fpn_channels; ++c) {
      double* plane = d_conf_act.ptr() + static_cast<std::size_t>(c) * hw;
      const double dc = d_gap[static_cast<std::size_t>(c)] * inv_hw;
      for (int i = 0; i < hw; ++i) plane[i] += dc;
    }

    Tensor d_conf_pre(trace.conf_pre[su].shape);
    ops.leaky_relu_bwd(trace.conf_pre[su].ptr(), d_conf_act.ptr(), d_conf_pre.ptr(),
                       d_conf_pre.numel(), cfg.leaky_alpha);
    const auto conf_s = conv_shape(trace.merge_act[su], net.conf[su], 1, 1, 1);
    Tensor d_merge_act(trace.merge_act[su].shape);
    ops.conv2d_bwd_data(d_conf_pre.ptr(), net.conf[su].w.ptr(), d_merge_act.ptr(), conf_s);
    ops.conv2d_bwd_weights(trace.merge_act[su].ptr(), d_conf_pre.ptr(),
                           g.conf[su].w.ptr(), g.conf[su].b.ptr(), conf_s);

    Tensor d_merge_pre(trace.merge_pre[su].shape);
    ops.leaky_relu_bwd(trace.merge_pre[su].ptr(), d_merge_act.ptr(), d_merge_pre.ptr(),
                       d_merge_pre.numel(), cfg.leaky_alpha);
    const auto merge_s = conv_shape(trace.concat[su], net.merge[su], 1, 1, 1);
    Tensor d_concat(trace.concat[su].shape);
    ops.conv2d_bwd_data(d_merge_pre.ptr(), net.merge[su].w.ptr(), d_concat.ptr(), merge_s);
    ops.conv2d_bwd_weights(trace.concat[su].ptr(), d_merge_pre.ptr(),
                           g.merge[su].w.ptr(), g.merge[su].b.ptr(), merge_s);

    // split the concat gradient back into image and box branches
    const int stage = cfg.stage_for_scale(s);
    Tensor& d_img = d_bb_act[static_cast<std::size_t>(stage)];
    const std::size_t img_n = d_img.numel();
    ops.add_inplace(d_img.ptr(), d_concat.ptr(), img_n);
    Tensor d_interp({cfg.bpn_channels, d_img.dim(1), d_img.dim(2)});
    std::copy(d_concat.data.begin() + static_cast<std::ptrdiff_t>(img_n),
              d_concat.data.end(), d_interp.data.begin());
    const int e_layer = trace.emission_layers[cfg.emission_for_scale(s)];
    nn_resize_bwd(d_interp, d_bpn_act[static_cast<std::size_t>(e_layer)]);
  }

  // Box branch, last layer first. act_l = lrelu(pre_l) (+ act_{l-1} for l>0).
  for (int l = cfg.bpn_depth - 1; l >= 0; --l) {
    const std::size_t lu = static_cast<std::size_t>(l);
    Tensor d_pre_l(trace.bpn_pre[lu].shape);
    ops.leaky_relu_bwd(trace.bpn_pre[lu].ptr(), d_bpn_act[lu].ptr(), d_pre_l.ptr(),
                       d_pre_l.numel(), cfg.leaky_alpha);
    const Tensor& input = l == 0 ? trace.boxmat : trace.bpn_act[lu - 1];
    const auto s = conv_shape(input, net.bpn[lu], 1, 2, 1);
    ops.conv2d_bwd_weights(input.ptr(), d_pre_l.ptr(), g.bpn[lu].w.ptr(),
                           g.bpn[lu].b.ptr(), s);
    if (l > 0) {
      ops.conv2d_bwd_data(d_pre_l.ptr(), net.bpn[lu].w.ptr(), d_bpn_act[lu - 1].ptr(), s);
      ops.add_inplace(d_bpn_act[lu - 1].ptr(), d_bpn_act[lu].ptr(),
                      d_bpn_act[lu - 1].numel());
    }
  }

  // Image branch.
  for (int i = static_cast<int>(net.backbone.size()) - 1; i >= 0; --i) {
    const std::size_t iu = static_cast<std::size_t>(i);
    Tensor d_pre_i(trace.bb_pre[iu].shape);
    ops.leaky_relu_bwd(trace.bb_pre[iu].ptr(), d_bb_act[iu].ptr(), d_pre_i.ptr(),
                       d_pre_i.numel(), cfg.leaky_alpha);
    const Tensor& input = i == 0 ? trace.image : trace.bb_act[iu - 1];
    const auto s = conv_shape(input, net.backbone[iu], 1, 1, 2);
    ops.conv2d_bwd_weights(input.ptr(), d_pre_i.ptr(), g.backbone[iu].w.ptr(),
                           g.backbone[iu].b.ptr(), s);
    if (i > 0) {
      ops.conv2d_bwd_data(d_pre_i.ptr(), net.backbone[iu].w.ptr(),
                          d_bb_act[iu - 1].ptr(), s);
    }
  }
  return g;
}

BoxMatrix build_box_matrix(const DetectionSet& ds, int capacity_n) {
  if (capacity_n < 1) throw std::invalid_argument("build_box_matrix: capacity must be positive");
  const DetectionSet norm = normalize_detections(ds);
  const auto order = sorted_indices_desc(norm, ScoreField::kRaw);
  BoxMatrix out;
  out.matrix = Tensor({1, capacity_n, 5});
  out.raw_conf.assign(static_cast<std::size_t>(capacity_n), 0.0);
  out.oracle.assign(static_cast<std::size_t>(capacity_n), 0.0);
  out.count = std::min<int>(capacity_n, static_cast<int>(order.size()));
  for (int r = 0; r < out.count; ++r) {
    const std::size_t src = order[static_cast<std::size_t>(r)];
    const Detection& d = norm.detections[src];
    out.matrix.at(0, r, 0) = d.box.x;
    out.matrix.at(0, r, 1) = d.box.y;
    out.matrix.at(0, r, 2) = d.box.w;
    out.matrix.at(0, r, 3) = d.box.h;
    out.matrix.at(0, r, 4) = d.confidence;
    out.raw_conf[static_cast<std::size_t>(r)] = d.confidence;
    if (d.oracle) out.oracle[static_cast<std::size_t>(r)] = *d.oracle;
    out.row_to_detection.push_back(src);
  }
  return out;
}

}  // namespace crank
