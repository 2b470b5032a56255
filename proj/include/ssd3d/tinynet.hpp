// Copyright 2026 The ssd3d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SSD3D__TINYNET_HPP_
#define SSD3D__TINYNET_HPP_

#include "ssd3d/anchors.hpp"
#include "ssd3d/error.hpp"
#include "ssd3d/loss.hpp"
#include "ssd3d/numeric.hpp"
#include "ssd3d/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ssd3d
{

/// Dense channel-major feature map.
struct Tensor3
{
  std::size_t channels{0};
  std::size_t rows{0};
  std::size_t cols{0};
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t c, std::size_t r, std::size_t w, double fill = 0.0)
  : channels(c), rows(r), cols(w), data(c * r * w, fill)
  {
  }

  std::size_t plane() const { return rows * cols; }
  double & at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * rows + y) * cols + x]; }
  double at(std::size_t c, std::size_t y, std::size_t x) const
  {
    return data[(c * rows + y) * cols + x];
  }
  bool same_shape(const Tensor3 & o) const
  {
    return channels == o.channels && rows == o.rows && cols == o.cols;
  }
  bool all_finite() const
  {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }
};

enum class LayerKind : std::uint8_t { Conv3x3 = 0, Conv1x1 = 1, Relu = 2, MaxPool2 = 3, Concat = 4 };

inline const char * to_string(LayerKind k)
{
  switch (k) {
    case LayerKind::Conv3x3: return "conv3x3";
    case LayerKind::Conv1x1: return "conv1x1";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2: return "maxpool2";
    case LayerKind::Concat: return "concat";
  }
  return "?";
}

struct LayerSpec
{
  LayerKind kind{LayerKind::Conv3x3};
  std::size_t in_channels{0};
  std::size_t out_channels{0};
  int stride{1};
  /// Zero padding on every side for convolutions; for maxpool2, 1 selects
  /// ceil-mode output (one extra trailing row/column).
  int padding{0};
  std::uint64_t seed{0};

  int kernel() const
  {
    return kind == LayerKind::Conv3x3 ? 3 : kind == LayerKind::MaxPool2 ? 2 : 1;
  }
  bool is_conv() const { return kind == LayerKind::Conv3x3 || kind == LayerKind::Conv1x1; }
  std::size_t weight_count() const
  {
    return is_conv() ? out_channels * in_channels * kernel() * kernel() : 0;
  }
};

/// Convolution parameters: weights [out][in][ky][kx] and one bias per output.
struct ConvLayer
{
  LayerSpec spec;
  std::vector<double> weights;
  std::vector<double> bias;

  double & w(std::size_t o, std::size_t i, int ky, int kx)
  {
    const int k = spec.kernel();
    return weights[((o * spec.in_channels + i) * k + ky) * k + kx];
  }
  double w(std::size_t o, std::size_t i, int ky, int kx) const
  {
    const int k = spec.kernel();
    return weights[((o * spec.in_channels + i) * k + ky) * k + kx];
  }
};

/// Weights drawn uniformly from [-a, a] with a = scale * sqrt(6 / fan_in), from
/// a splitmix64 stream seeded by spec.seed; biases start at zero.
inline ConvLayer make_seeded_conv(const LayerSpec & spec, double scale = 1.0)
{
  if (!spec.is_conv()) {
    throw Error(ErrorCode::InvalidArgument, "not a convolution spec");
  }
  ConvLayer layer{spec, std::vector<double>(spec.weight_count()),
                  std::vector<double>(spec.out_channels, 0.0)};
  const double fan_in = static_cast<double>(spec.in_channels * spec.kernel() * spec.kernel());
  const double a = scale * std::sqrt(6.0 / fan_in);
  SplitMix64 rng(spec.seed);
  for (auto & v : layer.weights) {
    v = rng.uniform(-a, a);
  }
  return layer;
}

inline std::size_t conv_output_size(std::size_t in, int k, int stride, int pad)
{
  const long long span = static_cast<long long>(in) + 2LL * pad - k;
  if (span < 0 || stride <= 0) {
    throw Error(ErrorCode::ShapeMismatch, "convolution window larger than padded input");
  }
  return static_cast<std::size_t>(span / stride + 1);
}

inline std::size_t pool_output_size(std::size_t in, int pad)
{
  if (in + static_cast<std::size_t>(pad) < 2) {
    throw Error(ErrorCode::ShapeMismatch, "pool window larger than input");
  }
  return (in + static_cast<std::size_t>(pad) - 2) / 2 + 1;
}

/// One row per output position of rows [y0, y1) holding its receptive field in
/// weight order (channel, ky, kx); taps that fall in the padding are 0.
inline std::vector<double> im2col(
  const Tensor3 & input, const LayerSpec & s, std::size_t y0, std::size_t y1, std::size_t ow)
{
  const int k = s.kernel();
  const std::size_t span = s.in_channels * static_cast<std::size_t>(k * k);
  std::vector<double> cols((y1 - y0) * ow * span, 0.0);
  const long long ih = static_cast<long long>(input.rows);
  const long long iw = static_cast<long long>(input.cols);
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double * row = cols.data() + ((y - y0) * ow + x) * span;
      for (std::size_t i = 0; i < s.in_channels; ++i) {
        for (int ky = 0; ky < k; ++ky) {
          const long long sy = static_cast<long long>(y) * s.stride + ky - s.padding;
          if (sy < 0 || sy >= ih) {
            continue;
          }
          for (int kx = 0; kx < k; ++kx) {
            const long long sx = static_cast<long long>(x) * s.stride + kx - s.padding;
            if (sx >= 0 && sx < iw) {
              row[(i * k + ky) * k + kx] =
                input.at(i, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
          }
        }
      }
    }
  }
  return cols;
}

/// Cross-correlation with zero padding. Output channels are split across
/// workers; each output value is accumulated in a fixed order.
inline Tensor3 conv_forward(const Tensor3 & input, const ConvLayer & layer, std::size_t threads = 1)
{
  const LayerSpec & s = layer.spec;
  if (!s.is_conv() || input.channels != s.in_channels) {
    throw Error(
      ErrorCode::ShapeMismatch, "conv expects " + std::to_string(s.in_channels) +
                                  " channels, got " + std::to_string(input.channels));
  }
  if (layer.weights.size() != s.weight_count() || layer.bias.size() != s.out_channels) {
    throw Error(ErrorCode::ShapeMismatch, "conv parameter count does not match its spec");
  }
  const std::size_t oh = conv_output_size(input.rows, s.kernel(), s.stride, s.padding);
  const std::size_t ow = conv_output_size(input.cols, s.kernel(), s.stride, s.padding);
  Tensor3 out(s.out_channels, oh, ow);
  const std::size_t span = s.in_channels * static_cast<std::size_t>(s.kernel() * s.kernel());
  // bands of output rows keep the patch buffer to a few MB on large inputs
  const std::size_t band = std::max<std::size_t>(1, (std::size_t{1} << 19) / std::max<std::size_t>(1, span * ow));
  for (std::size_t y0 = 0; y0 < oh; y0 += band) {
    const std::size_t y1 = std::min(oh, y0 + band);
    const std::vector<double> cols = im2col(input, s, y0, y1, ow);
    parallel_for(s.out_channels, threads, [&](std::size_t o) {
      const double * w = layer.weights.data() + o * span;
      double * dst = out.data.data() + o * oh * ow + y0 * ow;
      for (std::size_t p = 0; p < (y1 - y0) * ow; ++p) {
        const double * patch = cols.data() + p * span;
        double acc = layer.bias[o];
        for (std::size_t j = 0; j < span; ++j) {
          acc += w[j] * patch[j];
        }
        dst[p] = acc;
      }
    });
  }
  return out;
}

inline Tensor3 relu(Tensor3 t)
{
  for (auto & v : t.data) {
    v = std::max(v, 0.0);
  }
  return t;
}

/// 2x2 stride-2 max pooling; windows hanging past the edge use only the
/// in-bounds values.
inline Tensor3 maxpool2(const Tensor3 & in, int pad = 0)
{
  const std::size_t oh = pool_output_size(in.rows, pad);
  const std::size_t ow = pool_output_size(in.cols, pad);
  Tensor3 out(in.channels, oh, ow);
  for (std::size_t c = 0; c < in.channels; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double m = -HUGE_VAL;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t sy = 2 * y + dy;
            const std::size_t sx = 2 * x + dx;
            if (sy < in.rows && sx < in.cols) {
              m = std::max(m, in.at(c, sy, sx));
            }
          }
        }
        out.at(c, y, x) = m;
      }
    }
  }
  return out;
}

/// Channel concatenation, rgb channels first.
inline Tensor3 fuse_concat(const Tensor3 & rgb_feat, const Tensor3 & depth_feat)
{
  if (rgb_feat.rows != depth_feat.rows || rgb_feat.cols != depth_feat.cols) {
    throw Error(ErrorCode::ShapeMismatch, "fused feature maps differ in spatial size");
  }
  Tensor3 out(rgb_feat.channels + depth_feat.channels, rgb_feat.rows, rgb_feat.cols);
  std::copy(rgb_feat.data.begin(), rgb_feat.data.end(), out.data.begin());
  std::copy(
    depth_feat.data.begin(), depth_feat.data.end(),
    out.data.begin() + static_cast<std::ptrdiff_t>(rgb_feat.data.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Topology

/// One step of the graph. Inputs name earlier nodes or the graph inputs
/// "rgb" / "depth". Convolutions may carry a trailing ReLU.
struct Node
{
  std::string name;
  LayerSpec spec;
  std::vector<std::string> inputs;
  bool relu_after{false};
};

struct NetworkTopology
{
  std::size_t input_size{75};
  std::size_t rgb_channels{3};
  std::size_t depth_channels{1};
  std::vector<Node> nodes;  ///< topologically ordered
  /// (rgb node, depth node) pairs concatenated by the fusion stages.
  std::vector<std::pair<std::string, std::string>> fusion_points;
  /// Ordered prediction taps.
  std::vector<std::string> taps;
};

struct Shape3
{
  std::size_t channels{0};
  std::size_t rows{0};
  std::size_t cols{0};

  friend bool operator==(const Shape3 &, const Shape3 &) = default;
};

inline constexpr std::size_t kPredictionTaps = 6;

/// Alternative layer names used for the prediction taps.
inline std::string canonical_tap_name(const std::string & name)
{
  static const std::map<std::string, std::string> aliases{
    {"conv7", "conv7-3"},     {"conv7s", "conv7-3"},     {"conv4-3", "conv4-5"},
    {"conv4-3s", "conv4-5"},  {"conv8-2s", "conv8-2"},   {"conv9-2s", "conv9-2"},
    {"conv10-2s", "conv10-2"}, {"conv11-2s", "conv11-2"}};
  const auto it = aliases.find(name);
  return it == aliases.end() ? name : it->second;
}

/// Shape inference over the whole graph. Checks channel agreement, the
/// identical spatial size of every fused pair, and the six taps.
inline std::map<std::string, Shape3> infer_shapes(const NetworkTopology & topo)
{
  std::map<std::string, Shape3> shapes;
  shapes["rgb"] = {topo.rgb_channels, topo.input_size, topo.input_size};
  shapes["depth"] = {topo.depth_channels, topo.input_size, topo.input_size};
  const auto input_shape = [&](const Node & n, std::size_t i) {
    if (i >= n.inputs.size()) {
      throw Error(ErrorCode::ShapeMismatch, n.name + ": missing input");
    }
    const auto it = shapes.find(n.inputs[i]);
    if (it == shapes.end()) {
      throw Error(ErrorCode::ShapeMismatch, n.name + ": unknown input " + n.inputs[i]);
    }
    return it->second;
  };
  for (const Node & n : topo.nodes) {
    if (shapes.count(n.name)) {
      throw Error(ErrorCode::InvalidArgument, "duplicate node " + n.name);
    }
    Shape3 in = input_shape(n, 0);
    Shape3 out;
    switch (n.spec.kind) {
      case LayerKind::Conv3x3:
      case LayerKind::Conv1x1:
        if (in.channels != n.spec.in_channels) {
          throw Error(ErrorCode::ShapeMismatch, n.name + ": channel mismatch");
        }
        out = {
          n.spec.out_channels, conv_output_size(in.rows, n.spec.kernel(), n.spec.stride, n.spec.padding),
          conv_output_size(in.cols, n.spec.kernel(), n.spec.stride, n.spec.padding)};
        break;
      case LayerKind::Relu:
        out = in;
        break;
      case LayerKind::MaxPool2:
        out = {in.channels, pool_output_size(in.rows, n.spec.padding),
               pool_output_size(in.cols, n.spec.padding)};
        break;
      case LayerKind::Concat: {
        const Shape3 other = input_shape(n, 1);
        if (other.rows != in.rows || other.cols != in.cols) {
          throw Error(ErrorCode::ShapeMismatch, n.name + ": concat inputs differ in size");
        }
        out = {in.channels + other.channels, in.rows, in.cols};
        break;
      }
    }
    shapes[n.name] = out;
  }
  for (const auto & [a, b] : topo.fusion_points) {
    if (!shapes.count(a) || !shapes.count(b)) {
      throw Error(ErrorCode::ShapeMismatch, "fusion point references unknown node");
    }
    const Shape3 sa = shapes[a];
    const Shape3 sb = shapes[b];
    if (sa.rows != sb.rows || sa.cols != sb.cols) {
      throw Error(ErrorCode::ShapeMismatch, "fusion pair " + a + "/" + b + " differs in size");
    }
  }
  if (topo.taps.size() != kPredictionTaps) {
    throw Error(ErrorCode::ShapeMismatch, "topology must expose exactly six prediction taps");
  }
  for (const auto & t : topo.taps) {
    if (!shapes.count(t)) {
      throw Error(ErrorCode::ShapeMismatch, "unknown tap " + t);
    }
  }
  return shapes;
}

namespace detail
{

class TopologyBuilder
{
public:
  explicit TopologyBuilder(NetworkTopology & topo) : topo_(topo) {}

  std::string conv(
    const std::string & name, const std::string & input, std::size_t in, std::size_t out, int k,
    int stride, int pad, bool relu = true)
  {
    LayerSpec s{k == 3 ? LayerKind::Conv3x3 : LayerKind::Conv1x1, in, out, stride, pad, 0};
    topo_.nodes.push_back({name, s, {input}, relu});
    return name;
  }

  std::string pool(const std::string & name, const std::string & input, std::size_t ch, int pad)
  {
    topo_.nodes.push_back({name, {LayerKind::MaxPool2, ch, ch, 2, pad, 0}, {input}, false});
    return name;
  }

  std::string concat(
    const std::string & name, const std::string & a, const std::string & b, std::size_t ca,
    std::size_t cb)
  {
    topo_.nodes.push_back({name, {LayerKind::Concat, ca + cb, ca + cb, 1, 0, 0}, {a, b}, false});
    topo_.fusion_points.emplace_back(a, b);
    return name;
  }

private:
  NetworkTopology & topo_;
};

}  // namespace detail

/// Desk-scale graph: 75x75 inputs, two 4-layer towers, fusion after the
/// second and fourth tower layers (each followed by two 1x1 convolutions),
/// four extra stride-2 layers; taps at 19, 10, 5, 3, 2, 1.
inline NetworkTopology make_desk_topology(std::size_t tower_width = 16)
{
  NetworkTopology topo;
  topo.input_size = 75;
  detail::TopologyBuilder b(topo);
  const std::size_t half = tower_width / 2;
  for (const std::string tower : {"rgb", "depth"}) {
    const std::size_t in = tower == "rgb" ? topo.rgb_channels : topo.depth_channels;
    b.conv(tower + "/conv1", tower, in, half, 3, 2, 1);                      // 38
    b.conv(tower + "/conv4-3", tower + "/conv1", half, tower_width, 3, 2, 1);  // 19
    b.conv(tower + "/conv5", tower + "/conv4-3", tower_width, tower_width, 3, 2, 1);  // 10
    b.conv(tower + "/conv7", tower + "/conv5", tower_width, tower_width, 3, 1, 1);    // 10
  }
  const std::size_t fused = 2 * tower_width;
  b.concat("fuse1", "rgb/conv4-3", "depth/conv4-3", tower_width, tower_width);
  b.conv("conv4-4", "fuse1", fused, tower_width, 1, 1, 0);
  b.conv("conv4-5", "conv4-4", tower_width, tower_width, 1, 1, 0);
  b.concat("fuse2", "rgb/conv7", "depth/conv7", tower_width, tower_width);
  b.conv("conv7-2", "fuse2", fused, tower_width, 1, 1, 0);
  b.conv("conv7-3", "conv7-2", tower_width, tower_width, 1, 1, 0);
  b.conv("conv8-2", "conv7-3", tower_width, tower_width, 3, 2, 1);    // 5
  b.conv("conv9-2", "conv8-2", tower_width, tower_width, 3, 2, 1);    // 3
  b.conv("conv10-2", "conv9-2", tower_width, tower_width, 3, 2, 1);   // 2
  b.conv("conv11-2", "conv10-2", tower_width, tower_width, 3, 2, 1);  // 1
  topo.taps = {"conv4-5", "conv7-3", "conv8-2", "conv9-2", "conv10-2", "conv11-2"};
  return topo;
}

/// The full 300x300 graph: VGG-16 towers (fc6/fc7 as convolutions), fusion at
/// conv4-3 and conv7, SSD auxiliary layers; taps at 38, 19, 10, 5, 3, 1.
/// Expressible and shape-checked, but heavy to instantiate with weights.
inline NetworkTopology make_vgg16_topology()
{
  NetworkTopology topo;
  topo.input_size = 300;
  detail::TopologyBuilder b(topo);
  for (const std::string t : {"rgb", "depth"}) {
    const std::size_t in = t == "rgb" ? topo.rgb_channels : topo.depth_channels;
    std::string x = t;
    x = b.conv(t + "/conv1-1", x, in, 64, 3, 1, 1);
    x = b.conv(t + "/conv1-2", x, 64, 64, 3, 1, 1);
    x = b.pool(t + "/pool1", x, 64, 0);  // 150
    x = b.conv(t + "/conv2-1", x, 64, 128, 3, 1, 1);
    x = b.conv(t + "/conv2-2", x, 128, 128, 3, 1, 1);
    x = b.pool(t + "/pool2", x, 128, 0);  // 75
    x = b.conv(t + "/conv3-1", x, 128, 256, 3, 1, 1);
    x = b.conv(t + "/conv3-2", x, 256, 256, 3, 1, 1);
    x = b.conv(t + "/conv3-3", x, 256, 256, 3, 1, 1);
    x = b.pool(t + "/pool3", x, 256, 1);  // 38 (ceil mode)
    x = b.conv(t + "/conv4-1", x, 256, 512, 3, 1, 1);
    x = b.conv(t + "/conv4-2", x, 512, 512, 3, 1, 1);
    x = b.conv(t + "/conv4-3", x, 512, 512, 3, 1, 1);
    x = b.pool(t + "/pool4", x, 512, 0);  // 19
    x = b.conv(t + "/conv5-1", x, 512, 512, 3, 1, 1);
    x = b.conv(t + "/conv5-2", x, 512, 512, 3, 1, 1);
    x = b.conv(t + "/conv5-3", x, 512, 512, 3, 1, 1);
    x = b.conv(t + "/conv6", x, 512, 1024, 3, 1, 1);
    b.conv(t + "/conv7", x, 1024, 1024, 1, 1, 0);
  }
  b.concat("fuse1", "rgb/conv4-3", "depth/conv4-3", 512, 512);
  b.conv("conv4-4", "fuse1", 1024, 512, 1, 1, 0);
  b.conv("conv4-5", "conv4-4", 512, 512, 1, 1, 0);
  b.concat("fuse2", "rgb/conv7", "depth/conv7", 1024, 1024);
  b.conv("conv7-2", "fuse2", 2048, 1024, 1, 1, 0);
  b.conv("conv7-3", "conv7-2", 1024, 1024, 1, 1, 0);
  b.conv("conv8-1", "conv7-3", 1024, 256, 1, 1, 0);
  b.conv("conv8-2", "conv8-1", 256, 512, 3, 2, 1);     // 10
  b.conv("conv9-1", "conv8-2", 512, 128, 1, 1, 0);
  b.conv("conv9-2", "conv9-1", 128, 256, 3, 2, 1);     // 5
  b.conv("conv10-1", "conv9-2", 256, 128, 1, 1, 0);
  b.conv("conv10-2", "conv10-1", 128, 256, 3, 1, 0);   // 3
  b.conv("conv11-1", "conv10-2", 256, 128, 1, 1, 0);
  b.conv("conv11-2", "conv11-1", 128, 256, 3, 1, 0);   // 1
  topo.taps = {"conv4-5", "conv7-3", "conv8-2", "conv9-2", "conv10-2", "conv11-2"};
  return topo;
}

/// Per-location head width: 13 anchors x (c_total scores + 7 offsets).
inline std::size_t head_channels(std::size_t c_total)
{
  return kAnchorsPerLocation * (c_total + kDeltaSize);
}

/// Topology plus weights. `layers` is parallel to topo.nodes (empty
/// parameters for non-convolution nodes); `heads` is parallel to topo.taps.
struct Network
{
  NetworkTopology topo;
  std::size_t c_total{0};
  std::uint64_t seed{0};
  std::vector<ConvLayer> layers;
  std::vector<ConvLayer> heads;
};

inline constexpr double kDefaultHeadScale = 0.01;
/// Initial background probability of every anchor. Starting near "everything is
/// background" keeps the thousands of easy negatives quiet while the heads fit.
inline constexpr double kBackgroundPrior = 0.99;

/// Background logit bias giving probability `prior` when the other c_total - 1
/// logits are zero.
inline double background_prior_bias(std::size_t c_total, double prior = kBackgroundPrior)
{
  return std::log(prior * static_cast<double>(c_total - 1) / (1.0 - prior));
}

/// Instantiates seeded weights: node k uses mix_seed(seed, k), head t uses
/// mix_seed(seed, 1000 + t). Heads are scaled down by head_scale and their
/// background channels start at background_prior_bias.
inline Network make_network(
  NetworkTopology topo, std::size_t c_total, std::uint64_t seed,
  double head_scale = kDefaultHeadScale)
{
  if (c_total < 2) {
    throw Error(ErrorCode::InvalidArgument, "c_total counts background and needs >= 2");
  }
  const auto shapes = infer_shapes(topo);
  Network net;
  net.c_total = c_total;
  net.seed = seed;
  for (std::size_t k = 0; k < topo.nodes.size(); ++k) {
    Node & n = topo.nodes[k];
    n.spec.seed = mix_seed(seed, k);
    if (n.spec.is_conv()) {
      net.layers.push_back(make_seeded_conv(n.spec));
    } else {
      net.layers.push_back(ConvLayer{n.spec, {}, {}});
    }
  }
  for (std::size_t t = 0; t < topo.taps.size(); ++t) {
    LayerSpec s{LayerKind::Conv3x3, shapes.at(topo.taps[t]).channels, head_channels(c_total), 1, 1,
                mix_seed(seed, 1000 + t)};
    ConvLayer head = make_seeded_conv(s, head_scale);
    for (std::size_t a = 0; a < kAnchorsPerLocation; ++a) {
      head.bias[a * (c_total + kDeltaSize)] = background_prior_bias(c_total);
    }
    net.heads.push_back(std::move(head));
  }
  net.topo = std::move(topo);
  return net;
}

/// Feature maps of the six prediction taps.
inline std::vector<Tensor3> forward_features(
  const Network & net, const Tensor3 & rgb, const Tensor3 & depth, std::size_t threads = 1)
{
  const auto & topo = net.topo;
  const auto expect = [&](const Tensor3 & t, std::size_t ch, const char * what) {
    if (t.channels != ch || t.rows != topo.input_size || t.cols != topo.input_size) {
      throw Error(ErrorCode::ShapeMismatch, std::string(what) + " input has the wrong shape");
    }
  };
  expect(rgb, topo.rgb_channels, "rgb");
  expect(depth, topo.depth_channels, "depth");
  std::map<std::string, Tensor3> values;
  values["rgb"] = rgb;
  values["depth"] = depth;
  for (std::size_t k = 0; k < topo.nodes.size(); ++k) {
    const Node & n = topo.nodes[k];
    const Tensor3 & in = values.at(n.inputs.at(0));
    Tensor3 out;
    switch (n.spec.kind) {
      case LayerKind::Conv3x3:
      case LayerKind::Conv1x1:
        out = conv_forward(in, net.layers[k], threads);
        break;
      case LayerKind::Relu:
        out = relu(in);
        break;
      case LayerKind::MaxPool2:
        out = maxpool2(in, n.spec.padding);
        break;
      case LayerKind::Concat:
        out = fuse_concat(in, values.at(n.inputs.at(1)));
        break;
    }
    if (n.relu_after) {
      out = relu(std::move(out));
    }
    if (!out.all_finite()) {
      throw Error(ErrorCode::NonFiniteActivation, "non-finite activation at " + n.name);
    }
    values[n.name] = std::move(out);
  }
  std::vector<Tensor3> taps;
  for (const auto & t : topo.taps) {
    taps.push_back(values.at(t));
  }
  return taps;
}

/// Runs the prediction heads over precomputed tap features.
inline std::vector<Tensor3> apply_heads(
  const Network & net, std::span<const Tensor3> taps, std::size_t threads = 1)
{
  std::vector<Tensor3> out;
  for (std::size_t t = 0; t < taps.size(); ++t) {
    out.push_back(conv_forward(taps[t], net.heads.at(t), threads));
    if (!out.back().all_finite()) {
      throw Error(ErrorCode::NonFiniteActivation, "non-finite head output at " + net.topo.taps[t]);
    }
  }
  return out;
}

/// Full forward pass: one head tensor of head_channels(c_total) channels per tap.
inline std::vector<Tensor3> forward(
  const Network & net, const Tensor3 & rgb, const Tensor3 & depth, std::size_t threads = 1)
{
  const auto taps = forward_features(net, rgb, depth, threads);
  return apply_heads(net, taps, threads);
}

/// Feature-map specs matching the network's tap sizes.
inline std::vector<FeatureMapSpec> tap_feature_maps(const Network & net, int image_w, int image_h)
{
  const auto shapes = infer_shapes(net.topo);
  std::vector<FeatureMapSpec> out;
  for (const auto & t : net.topo.taps) {
    const Shape3 s = shapes.at(t);
    FeatureMapSpec f{static_cast<int>(s.rows), static_cast<int>(s.cols), image_w, image_h, t};
    validate(f);
    out.push_back(f);
  }
  return out;
}

/// Channel of (template t, field f) inside a head; fields 0..c_total-1 are
/// class scores, the next 7 the box offsets.
inline std::size_t head_channel(std::size_t c_total, std::size_t t, std::size_t field)
{
  return t * (c_total + kDeltaSize) + field;
}

/// Splits head outputs into per-anchor score rows and delta rows in
/// (layer, row, col, template) order, matching AnchorSet indexing.
inline std::pair<ScoreMatrix, DeltaMatrix> split_heads(
  std::span<const Tensor3> heads, std::size_t c_total)
{
  std::size_t total = 0;
  for (const auto & h : heads) {
    if (h.channels != head_channels(c_total)) {
      throw Error(ErrorCode::ShapeMismatch, "head width does not equal 13 * (c_total + 7)");
    }
    total += h.plane() * kAnchorsPerLocation;
  }
  ScoreMatrix scores(total, c_total);
  DeltaMatrix deltas(total);
  std::size_t idx = 0;
  for (const auto & h : heads) {
    for (std::size_t y = 0; y < h.rows; ++y) {
      for (std::size_t x = 0; x < h.cols; ++x) {
        for (std::size_t t = 0; t < kAnchorsPerLocation; ++t, ++idx) {
          auto srow = scores.row(idx);
          for (std::size_t c = 0; c < c_total; ++c) {
            srow[c] = h.at(head_channel(c_total, t, c), y, x);
          }
          auto drow = deltas.row(idx);
          for (std::size_t m = 0; m < kDeltaSize; ++m) {
            drow[m] = h.at(head_channel(c_total, t, c_total + m), y, x);
          }
        }
      }
    }
  }
  return {std::move(scores), std::move(deltas)};
}

/// Inverse of split_heads for gradients: scatters per-anchor rows back into
/// tensors shaped like the heads.
inline std::vector<Tensor3> merge_heads(
  const ScoreMatrix & scores, const DeltaMatrix & deltas, std::span<const Tensor3> like,
  std::size_t c_total)
{
  std::vector<Tensor3> out;
  std::size_t idx = 0;
  for (const auto & h : like) {
    Tensor3 g(h.channels, h.rows, h.cols);
    for (std::size_t y = 0; y < h.rows; ++y) {
      for (std::size_t x = 0; x < h.cols; ++x) {
        for (std::size_t t = 0; t < kAnchorsPerLocation; ++t, ++idx) {
          const auto srow = scores.row(idx);
          for (std::size_t c = 0; c < c_total; ++c) {
            g.at(head_channel(c_total, t, c), y, x) = srow[c];
          }
          const auto drow = deltas.row(idx);
          for (std::size_t m = 0; m < kDeltaSize; ++m) {
            g.at(head_channel(c_total, t, c_total + m), y, x) = drow[m];
          }
        }
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

/// Gradient of a convolution's weights and biases given dL/d(output). Output
/// positions whose gradient is zero in every channel are skipped; each weight
/// is accumulated over the remaining positions in raster order.
inline ConvLayer conv_param_gradient(
  const Tensor3 & input, const ConvLayer & layer, const Tensor3 & d_out, std::size_t threads = 1)
{
  const LayerSpec & s = layer.spec;
  ConvLayer g{s, std::vector<double>(layer.weights.size(), 0.0),
              std::vector<double>(layer.bias.size(), 0.0)};
  const std::vector<double> cols = im2col(input, s, 0, d_out.rows, d_out.cols);
  const std::size_t span = s.in_channels * static_cast<std::size_t>(s.kernel() * s.kernel());
  std::vector<std::size_t> active;
  for (std::size_t p = 0; p < d_out.plane(); ++p) {
    for (std::size_t o = 0; o < d_out.channels; ++o) {
      if (d_out.data[o * d_out.plane() + p] != 0.0) {
        active.push_back(p);
        break;
      }
    }
  }
  parallel_for(s.out_channels, threads, [&](std::size_t o) {
    double * w = g.weights.data() + o * span;
    for (const std::size_t p : active) {
      const double go = d_out.data[o * d_out.plane() + p];
      if (go == 0.0) {
        continue;
      }
      g.bias[o] += go;
      const double * patch = cols.data() + p * span;
      for (std::size_t j = 0; j < span; ++j) {
        w[j] += go * patch[j];
      }
    }
  });
  return g;
}

// ---------------------------------------------------------------------------
// Weight file: little-endian, "SSD3DNET" magic, u32 version, then the
// topology and every parameter record. See docs/weights_format.md.

inline constexpr std::array<char, 8> kWeightsMagic{'S', 'S', 'D', '3', 'D', 'N', 'E', 'T'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail
{

class LeWriter
{
public:
  explicit LeWriter(std::ostream & os) : os_(os) {}

  void u8(std::uint8_t v) { os_.put(static_cast<char>(v)); }
  void u32(std::uint32_t v) { uint(v, 4); }
  void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v), 4); }
  void u64(std::uint64_t v) { uint(v, 8); }
  void f64(double v)
  {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void str(const std::string & s)
  {
    u32(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

private:
  void uint(std::uint64_t v, int bytes)
  {
    for (int i = 0; i < bytes; ++i) {
      os_.put(static_cast<char>((v >> (8 * i)) & 0xff));
    }
  }
  std::ostream & os_;
};

class LeReader
{
public:
  explicit LeReader(std::istream & is) : is_(is) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(uint(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(uint(4))); }
  std::uint64_t u64() { return uint(8); }
  double f64()
  {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str()
  {
    const std::uint32_t n = u32();
    if (n > (1u << 20)) {
      throw Error(ErrorCode::ParseError, "weights: implausible string length");
    }
    std::string s(n, '\0');
    is_.read(s.data(), n);
    check();
    return s;
  }
  void bytes(char * out, std::size_t n)
  {
    is_.read(out, static_cast<std::streamsize>(n));
    check();
  }

private:
  void check()
  {
    if (!is_) {
      throw Error(ErrorCode::ParseError, "weights: truncated file");
    }
  }
  std::uint64_t uint(int bytes)
  {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      const int c = is_.get();
      if (c == std::char_traits<char>::eof()) {
        throw Error(ErrorCode::ParseError, "weights: truncated file");
      }
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
  }
  std::istream & is_;
};

inline void write_spec(LeWriter & w, const LayerSpec & s)
{
  w.u8(static_cast<std::uint8_t>(s.kind));
  w.u32(static_cast<std::uint32_t>(s.in_channels));
  w.u32(static_cast<std::uint32_t>(s.out_channels));
  w.i32(s.stride);
  w.i32(s.padding);
  w.u64(s.seed);
}

inline LayerSpec read_spec(LeReader & r)
{
  LayerSpec s;
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(LayerKind::Concat)) {
    throw Error(ErrorCode::ParseError, "weights: unknown layer kind");
  }
  s.kind = static_cast<LayerKind>(kind);
  s.in_channels = r.u32();
  s.out_channels = r.u32();
  s.stride = r.i32();
  s.padding = r.i32();
  s.seed = r.u64();
  return s;
}

inline void write_params(LeWriter & w, const ConvLayer & layer)
{
  w.u64(layer.weights.size());
  for (const double v : layer.weights) {
    w.f64(v);
  }
  w.u64(layer.bias.size());
  for (const double v : layer.bias) {
    w.f64(v);
  }
}

inline void read_params(LeReader & r, ConvLayer & layer)
{
  const std::uint64_t nw = r.u64();
  if (nw != layer.spec.weight_count()) {
    throw Error(ErrorCode::ParseError, "weights: parameter count disagrees with layer spec");
  }
  layer.weights.resize(nw);
  for (auto & v : layer.weights) {
    v = r.f64();
  }
  const std::uint64_t nb = r.u64();
  if (nb != (layer.spec.is_conv() ? layer.spec.out_channels : 0)) {
    throw Error(ErrorCode::ParseError, "weights: bias count disagrees with layer spec");
  }
  layer.bias.resize(nb);
  for (auto & v : layer.bias) {
    v = r.f64();
  }
}

}  // namespace detail

inline void save_network(std::ostream & os, const Network & net)
{
  detail::LeWriter w(os);
  for (const char c : kWeightsMagic) {
    w.u8(static_cast<std::uint8_t>(c));
  }
  w.u32(kWeightsVersion);
  w.u32(static_cast<std::uint32_t>(net.c_total));
  w.u64(net.seed);
  const auto & topo = net.topo;
  w.u32(static_cast<std::uint32_t>(topo.input_size));
  w.u32(static_cast<std::uint32_t>(topo.rgb_channels));
  w.u32(static_cast<std::uint32_t>(topo.depth_channels));
  w.u32(static_cast<std::uint32_t>(topo.nodes.size()));
  for (std::size_t k = 0; k < topo.nodes.size(); ++k) {
    const Node & n = topo.nodes[k];
    w.str(n.name);
    detail::write_spec(w, n.spec);
    w.u8(n.relu_after ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(n.inputs.size()));
    for (const auto & in : n.inputs) {
      w.str(in);
    }
    detail::write_params(w, net.layers[k]);
  }
  w.u32(static_cast<std::uint32_t>(topo.fusion_points.size()));
  for (const auto & [a, b] : topo.fusion_points) {
    w.str(a);
    w.str(b);
  }
  w.u32(static_cast<std::uint32_t>(topo.taps.size()));
  for (std::size_t t = 0; t < topo.taps.size(); ++t) {
    w.str(topo.taps[t]);
    detail::write_spec(w, net.heads[t].spec);
    detail::write_params(w, net.heads[t]);
  }
  if (!os) {
    throw Error(ErrorCode::IoError, "failed writing weights");
  }
}

inline Network load_network(std::istream & is)
{
  detail::LeReader r(is);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kWeightsMagic) {
    throw Error(ErrorCode::ParseError, "weights: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kWeightsVersion) {
    throw Error(ErrorCode::ParseError, "weights: unsupported version " + std::to_string(version));
  }
  Network net;
  net.c_total = r.u32();
  net.seed = r.u64();
  auto & topo = net.topo;
  topo.input_size = r.u32();
  topo.rgb_channels = r.u32();
  topo.depth_channels = r.u32();
  const std::uint32_t nodes = r.u32();
  for (std::uint32_t k = 0; k < nodes; ++k) {
    Node n;
    n.name = r.str();
    n.spec = detail::read_spec(r);
    n.relu_after = r.u8() != 0;
    const std::uint32_t ninputs = r.u32();
    if (ninputs > 2) {
      throw Error(ErrorCode::ParseError, "weights: node with more than two inputs");
    }
    for (std::uint32_t i = 0; i < ninputs; ++i) {
      n.inputs.push_back(r.str());
    }
    ConvLayer layer{n.spec, {}, {}};
    detail::read_params(r, layer);
    topo.nodes.push_back(std::move(n));
    net.layers.push_back(std::move(layer));
  }
  const std::uint32_t fusions = r.u32();
  for (std::uint32_t f = 0; f < fusions; ++f) {
    std::string a = r.str();
    std::string b = r.str();
    topo.fusion_points.emplace_back(std::move(a), std::move(b));
  }
  const std::uint32_t taps = r.u32();
  for (std::uint32_t t = 0; t < taps; ++t) {
    topo.taps.push_back(r.str());
    ConvLayer head{detail::read_spec(r), {}, {}};
    detail::read_params(r, head);
    if (head.spec.out_channels != head_channels(net.c_total)) {
      throw Error(ErrorCode::ParseError, "weights: head width disagrees with c_total");
    }
    net.heads.push_back(std::move(head));
  }
  infer_shapes(topo);
  return net;
}

}  // namespace ssd3d

#endif  // SSD3D__TINYNET_HPP_
