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

#ifndef SSD3D__FIT_HPP_
#define SSD3D__FIT_HPP_

#include "ssd3d/anchors.hpp"
#include "ssd3d/error.hpp"
#include "ssd3d/loss.hpp"
#include "ssd3d/matching.hpp"
#include "ssd3d/scene.hpp"
#include "ssd3d/tinynet.hpp"

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace ssd3d
{

/// Depth channel scale: meters are divided by this before entering the network.
inline constexpr double kDepthInputScale = 10.0;

/// RGB scaled to [0, 1] and depth (meters / 10, 0 = missing) as network inputs.
inline std::pair<Tensor3, Tensor3> make_network_inputs(const SceneRecord & s, std::size_t input_size)
{
  const auto w = static_cast<std::size_t>(s.width());
  const auto h = static_cast<std::size_t>(s.height());
  if (w != input_size || h != input_size || s.rgb.width != s.width() ||
      s.rgb.height != s.height()) {
    throw Error(
      ErrorCode::SizeMismatch, "scene is " + std::to_string(w) + "x" + std::to_string(h) +
                                 ", network expects " + std::to_string(input_size));
  }
  Tensor3 rgb(3, h, w);
  Tensor3 depth(1, h, w);
  for (std::size_t v = 0; v < h; ++v) {
    for (std::size_t u = 0; u < w; ++u) {
      for (std::size_t c = 0; c < 3; ++c) {
        rgb.at(c, v, u) = s.rgb.at(static_cast<int>(u), static_cast<int>(v), static_cast<int>(c)) / 255.0;
      }
      depth.at(0, v, u) =
        s.depth_mm.at(static_cast<int>(u), static_cast<int>(v)) / 1000.0 / kDepthInputScale;
    }
  }
  return {std::move(rgb), std::move(depth)};
}

/// Everything about a scene that stays fixed while the heads are fitted.
struct PreparedScene
{
  std::vector<Tensor3> taps;
  AnchorSet anchors;
  std::vector<DefaultBox2D> defaults;
  std::vector<GroundTruthObject> gts;
};

inline PreparedScene prepare_scene(
  const Network & net, const SceneRecord & scene, std::span<const SizeTemplate> templates,
  std::size_t threads = 1)
{
  PreparedScene p;
  const auto [rgb, depth] = make_network_inputs(scene, net.topo.input_size);
  p.taps = forward_features(net, rgb, depth, threads);
  const auto specs = tap_feature_maps(net, scene.width(), scene.height());
  p.anchors = generate_anchor_set(specs, depth_to_meters(scene.depth_mm), scene.camera, templates);
  p.defaults = make_default_boxes(specs);
  p.gts = scene.objects;
  return p;
}

struct FitOptions
{
  std::size_t steps{500};
  double learning_rate{0.07};
  std::size_t threads{1};
  MatchConfig match{};
};

struct FitResult
{
  std::vector<ConvLayer> heads;
  /// Total loss before the first update and after every step (steps + 1 values).
  std::vector<LossBreakdown> trace;
  MatchResult match;
};

inline constexpr std::size_t kMaxToyObjects = 5;

/// Heads-only gradient descent on a single scene with the towers frozen.
inline FitResult fit_toy(
  const Network & net, const SceneRecord & scene, std::span<const SizeTemplate> templates,
  const FitOptions & opt = {})
{
  if (scene.objects.size() > kMaxToyObjects) {
    throw Error(ErrorCode::InvalidArgument, "toy fitting supports at most 5 objects");
  }
  const PreparedScene prep = prepare_scene(net, scene, templates, opt.threads);
  FitResult result;
  result.heads = net.heads;
  result.match = build_match(prep.anchors, prep.defaults, prep.gts, opt.match);
  Network work = net;
  for (std::size_t step = 0;; ++step) {
    work.heads = result.heads;
    const auto outs = apply_heads(work, prep.taps, opt.threads);
    const auto [scores, deltas] = split_heads(outs, net.c_total);
    result.match.negatives = mine_hard_negatives(
      background_losses(scores), result.match.positives, prep.anchors.anchors,
      opt.match.negative_ratio);
    const LossBreakdown loss =
      total_loss(scores, deltas, result.match, prep.gts, prep.anchors.anchors);
    if (!std::isfinite(loss.total)) {
      throw Error(ErrorCode::DivergenceDetected, "loss became non-finite at step " + std::to_string(step));
    }
    result.trace.push_back(loss);
    if (step == opt.steps) {
      break;
    }
    const auto grads = loss_gradients(scores, deltas, result.match, prep.gts, prep.anchors.anchors);
    const auto d_outs = merge_heads(grads.d_logits, grads.d_deltas, outs, net.c_total);
    for (std::size_t t = 0; t < result.heads.size(); ++t) {
      const ConvLayer g = conv_param_gradient(prep.taps[t], result.heads[t], d_outs[t], opt.threads);
      auto & head = result.heads[t];
      for (std::size_t i = 0; i < head.weights.size(); ++i) {
        head.weights[i] -= opt.learning_rate * g.weights[i];
      }
      for (std::size_t i = 0; i < head.bias.size(); ++i) {
        head.bias[i] -= opt.learning_rate * g.bias[i];
      }
    }
  }
  return result;
}

}  // namespace ssd3d

#endif  // SSD3D__FIT_HPP_
