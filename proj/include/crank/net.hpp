#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crank/geometry.hpp"
#include "crank/tensor.hpp"

namespace crank {

// Network size knobs. Defaults are the desk-scale configuration; the numbers
// in comments are the full-scale values the topology was designed around.
struct RankerConfig {
  int capacity_n = 64;        // detections per image (full scale: 5000)
  int bpn_channels = 8;       // box branch width (full scale: 64)
  int bpn_depth = 3;          // box branch convolutions (full scale: 9)
  int interleave = 3;         // emit a box feature every k layers
  int scales = 2;             // pyramid scales consumed (full scale: 3)
  int fpn_channels = 16;      // merge/confidence width (full scale: 256)
  std::vector<int> backbone_channels = {8, 16};
  int image_size = 64;        // square input feature map
  double leaky_alpha = 0.01;

  void validate() const;
  // Number of box-branch features emitted (one every `interleave` layers).
  int emission_count() const { return bpn_depth / interleave; }
  // Spatial side of backbone stage i (each stage halves via stride 2).
  int stage_size(int stage) const;
  // Backbone stage feeding pyramid scale s (the last `scales` stages).
  int stage_for_scale(int s) const {
    return static_cast<int>(backbone_channels.size()) - scales + s;
  }
  int emission_for_scale(int s) const {
    const int n = emission_count();
    return s < n ? s : n - 1;
  }
};

struct ConvLayer {
  Tensor w;  // [out_c][in_c][kh][kw]
  Tensor b;  // [out_c]
};

struct FcLayer {
  Tensor w;  // input-major [in][out]
  Tensor b;  // [out]
};

struct RankerNetwork {
  RankerConfig config;
  std::uint64_t rng_seed = 0;
  // Bumped on every parameter update; traces remember the version they saw.
  std::uint64_t version = 0;

  std::vector<ConvLayer> backbone;  // 3x3 stride-2 stages
  std::vector<ConvLayer> bpn;       // 3x5 stride-1, pad 1x2
  std::vector<ConvLayer> merge;     // per scale, 3x3
  std::vector<ConvLayer> conf;      // per scale, 3x3
  std::vector<FcLayer> fc;          // per scale, fpn_channels -> capacity_n
};

// He-normal convolution weights, zero biases, zero final FC layers (so a
// fresh network is the identity on confidences). Deterministic per seed.
RankerNetwork init_network(const RankerConfig& cfg, std::uint64_t seed);

struct ParamRef {
  std::string name;
  Tensor* tensor;
};
struct ConstParamRef {
  std::string name;
  const Tensor* tensor;
};
// Parameters in a fixed, documented order (backbone, bpn, merge, conf, fc;
// weights before biases). The order defines checkpoint layout and gradient
// reduction order.
std::vector<ParamRef> parameters(RankerNetwork& net);
std::vector<ConstParamRef> parameters(const RankerNetwork& net);
std::size_t parameter_count(const RankerConfig& cfg);

// Shape table derivable from the config alone; init_network must agree.
struct ParamShape {
  std::string name;
  std::vector<int> shape;
};
std::vector<ParamShape> parameter_shapes(const RankerConfig& cfg);

// Cached activations for exact backpropagation. Valid only while the
// network's version is unchanged.
struct ForwardTrace {
  std::uint64_t version = 0;
  Tensor image;
  std::vector<Tensor> bb_pre, bb_act;
  Tensor boxmat;
  std::vector<Tensor> bpn_pre, bpn_act;
  std::vector<int> emission_layers;        // bpn layer index per emission
  std::vector<Tensor> interp, concat;      // per scale
  std::vector<Tensor> merge_pre, merge_act;
  std::vector<Tensor> conf_pre, conf_act;
  std::vector<std::vector<double>> gap;    // per scale, [fpn_channels]
  std::vector<std::vector<double>> fc_out; // per scale, [capacity_n]
  std::vector<double> raw_conf;
  std::vector<double> residual;
  std::vector<double> pre_clamp;
};

struct ForwardResult {
  std::vector<double> refined;  // length capacity_n
  ForwardTrace trace;
};

// Box branch: channel expansion then bpn_depth 3x5 convolutions with leaky
// ReLU, skip connections on every layer except the first, spatial shape
// N x 5 preserved throughout. Returns the running feature at every
// `interleave`-th layer. box_matrix must be [1][capacity_n][5].
std::vector<Tensor> bpn_forward(const RankerNetwork& net, const Tensor& box_matrix);

// Image branch: stride-2 stages; returns the last `scales` feature maps,
// highest resolution first. image must be [1][image_size][image_size].
std::vector<Tensor> backbone_forward(const RankerNetwork& net, const Tensor& image);

// Fusion + confidence module: box features are nearest-neighbor resized to
// each image feature's spatial size, concatenated channel-wise, merged
// (3x3 conv), then 3x3 conv -> global average pooling -> per-scale FC;
// per-scale outputs are averaged into a residual and
// refined = clamp(raw_conf + residual, 0, 1).
std::vector<double> fuse_and_score(const RankerNetwork& net,
                                   const std::vector<Tensor>& image_features,
                                   const std::vector<Tensor>& bpn_features,
                                   std::span<const double> raw_conf);

// Full forward pass with a trace for backward().
ForwardResult forward(const RankerNetwork& net, const Tensor& image,
                      const Tensor& box_matrix, std::span<const double> raw_conf);

struct Gradients {
  std::vector<ConvLayer> backbone, bpn, merge, conf;
  std::vector<FcLayer> fc;
  // Gradient reaching the raw confidences through the residual connection
  // (the +raw_conf path only; box-matrix inputs are leaves).
  std::vector<double> d_raw_conf;
};
Gradients zero_gradients(const RankerConfig& cfg);
std::vector<ParamRef> parameters(Gradients& g, const RankerConfig& cfg);

// Exact reverse-mode pass. Throws std::logic_error on a stale trace (any
// parameter update invalidates it). The clamp backpropagates zero outside
// the open interval and at a boundary pushed outward.
Gradients backward(const RankerNetwork& net, const ForwardTrace& trace,
                   std::span<const double> d_refined);

// Assembles the network input from a detection set: normalize, sort by raw
// confidence descending (stable), truncate to capacity, zero-pad the rest.
struct BoxMatrix {
  Tensor matrix;                           // [1][capacity_n][5]
  std::vector<double> raw_conf;            // length capacity_n
  std::vector<double> oracle;              // length capacity_n (0 where unset)
  std::vector<std::size_t> row_to_detection;  // length count
  int count = 0;                           // real (non-padding) rows
};
BoxMatrix build_box_matrix(const DetectionSet& ds, int capacity_n);

}  // namespace crank
