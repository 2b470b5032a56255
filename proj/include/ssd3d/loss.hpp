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

#ifndef SSD3D__LOSS_HPP_
#define SSD3D__LOSS_HPP_

#include "ssd3d/anchors.hpp"
#include "ssd3d/error.hpp"
#include "ssd3d/geom3d.hpp"
#include "ssd3d/matching.hpp"
#include "ssd3d/numeric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace ssd3d
{

inline constexpr std::size_t kDeltaSize = 7;

/// Regression target relative to an anchor. Center offsets are normalized by the
/// anchor extents (x by w, y by l, z by h) and sizes become log ratios; yaw is absolute.
struct BoxDelta
{
  double dx0{0.0};
  double dy0{0.0};
  double dz0{0.0};
  double dw{0.0};
  double dl{0.0};
  double dh{0.0};
  double dtheta{0.0};

  std::array<double, kDeltaSize> to_array() const { return {dx0, dy0, dz0, dw, dl, dh, dtheta}; }
  static BoxDelta from_array(std::span<const double> v)
  {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
  }
  friend bool operator==(const BoxDelta &, const BoxDelta &) = default;
};

/// Index of the yaw component inside the 7-vector.
inline constexpr std::size_t kThetaIndex = 6;

inline BoxDelta encode_targets(const Box3D & g, const Box3D & d)
{
  return {
    (g.cx - d.cx) / d.w, (g.cy - d.cy) / d.l, (g.cz - d.cz) / d.h,
    std::log(g.w / d.w),  std::log(g.l / d.l),  std::log(g.h / d.h),
    g.theta};
}

inline BoxDelta encode_targets(const Box3D & g, const Anchor & d) { return encode_targets(g, d.box); }

/// Largest accepted log-size offset; anything above signals a divergent head.
inline constexpr double kMaxLogSize = 50.0;

inline Box3D decode_box(const BoxDelta & r, const Box3D & d)
{
  if (r.dw > kMaxLogSize || r.dl > kMaxLogSize || r.dh > kMaxLogSize) {
    throw Error(ErrorCode::Overflow, "log-size offset exceeds 50");
  }
  return {
    r.dx0 * d.w + d.cx,      r.dy0 * d.l + d.cy,      r.dz0 * d.h + d.cz,
    d.w * std::exp(r.dw),    d.l * std::exp(r.dl),    d.h * std::exp(r.dh),
    normalize_angle(r.dtheta)};
}

inline Box3D decode_box(const BoxDelta & r, const Anchor & d) { return decode_box(r, d.box); }

inline double smooth_l1(double x)
{
  const double ax = std::abs(x);
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

inline double smooth_l1_grad(double x) { return std::clamp(x, -1.0, 1.0); }

/// Per-component residual r - target; the yaw residual is wrapped to [-pi, pi).
inline std::array<double, kDeltaSize> delta_residual(const BoxDelta & r, const BoxDelta & target)
{
  auto a = r.to_array();
  const auto b = target.to_array();
  for (std::size_t m = 0; m < kDeltaSize; ++m) {
    a[m] -= b[m];
  }
  a[kThetaIndex] = normalize_angle(a[kThetaIndex]);
  return a;
}

/// Raw class scores, one row of c_total logits per anchor; column 0 is background.
struct ScoreMatrix
{
  std::size_t rows{0};
  std::size_t cols{0};
  std::vector<double> logits;

  ScoreMatrix() = default;
  ScoreMatrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), logits(r * c, fill)
  {
  }

  std::span<double> row(std::size_t i) { return {logits.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {logits.data() + i * cols, cols}; }
};

/// Predicted 7-vectors, one row per anchor.
struct DeltaMatrix
{
  std::size_t rows{0};
  std::vector<double> values;

  DeltaMatrix() = default;
  explicit DeltaMatrix(std::size_t r, double fill = 0.0) : rows(r), values(r * kDeltaSize, fill) {}

  std::span<double> row(std::size_t i) { return {values.data() + i * kDeltaSize, kDeltaSize}; }
  std::span<const double> row(std::size_t i) const
  {
    return {values.data() + i * kDeltaSize, kDeltaSize};
  }
  BoxDelta delta(std::size_t i) const { return BoxDelta::from_array(row(i)); }
  void set(std::size_t i, const BoxDelta & d)
  {
    const auto a = d.to_array();
    std::copy(a.begin(), a.end(), row(i).begin());
  }
};

inline std::vector<double> log_softmax(std::span<const double> z)
{
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (const double v : z) {
    s += std::exp(v - mx);
  }
  const double lse = mx + std::log(s);
  std::vector<double> out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = z[k] - lse;
  }
  return out;
}

inline std::vector<double> softmax(std::span<const double> z)
{
  auto out = log_softmax(z);
  for (auto & v : out) {
    v = std::exp(v);
  }
  return out;
}

/// Probabilities are floored here before the log.
inline constexpr double kProbabilityFloor = 1e-12;

/// -ln max(p, floor) for class k of a logit row.
inline double cross_entropy(std::span<const double> z, std::size_t k)
{
  const double lp = log_softmax(z)[k];
  return -std::max(lp, std::log(kProbabilityFloor));
}

/// -ln p^0 for every anchor; the ranking key for hard negative mining.
inline std::vector<double> background_losses(const ScoreMatrix & scores)
{
  std::vector<double> out(scores.rows);
  for (std::size_t i = 0; i < scores.rows; ++i) {
    out[i] = cross_entropy(scores.row(i), 0);
  }
  return out;
}

/// Sum over positives and components of smooth_l1(r - target).
inline double regression_loss(
  const DeltaMatrix & preds, const MatchResult & match, std::span<const GroundTruthObject> gts,
  std::span<const Anchor> anchors)
{
  CompensatedSum acc;
  for (const auto & p : match.positives) {
    const BoxDelta target = encode_targets(gts[p.gt].box3d, anchors[p.anchor]);
    for (const double x : delta_residual(preds.delta(p.anchor), target)) {
      acc += smooth_l1(x);
    }
  }
  return acc.value();
}

inline double classification_loss(const ScoreMatrix & scores, const MatchResult & match)
{
  CompensatedSum acc;
  for (const auto & p : match.positives) {
    acc += cross_entropy(scores.row(p.anchor), static_cast<std::size_t>(p.class_id));
  }
  for (const std::size_t i : match.negatives) {
    acc += cross_entropy(scores.row(i), 0);
  }
  return acc.value();
}

struct LossBreakdown
{
  double total{0.0};
  double cls{0.0};
  double reg{0.0};
  std::size_t num_positives{0};
};

/// (L_cls + L_reg) / N, or exactly zero when there are no positives.
inline LossBreakdown total_loss(
  const ScoreMatrix & scores, const DeltaMatrix & preds, const MatchResult & match,
  std::span<const GroundTruthObject> gts, std::span<const Anchor> anchors)
{
  LossBreakdown out;
  out.num_positives = match.num_positives();
  if (out.num_positives == 0) {
    return out;
  }
  out.cls = classification_loss(scores, match);
  out.reg = regression_loss(preds, match, gts, anchors);
  out.total = (out.cls + out.reg) / static_cast<double>(out.num_positives);
  return out;
}

struct LossGradients
{
  ScoreMatrix d_logits;
  DeltaMatrix d_deltas;
};

/// Analytic gradient of total_loss with respect to every logit and every
/// predicted delta component. Anchors outside the positives and mined negatives
/// get zero.
inline LossGradients loss_gradients(
  const ScoreMatrix & scores, const DeltaMatrix & preds, const MatchResult & match,
  std::span<const GroundTruthObject> gts, std::span<const Anchor> anchors)
{
  LossGradients g{ScoreMatrix(scores.rows, scores.cols), DeltaMatrix(preds.rows)};
  const std::size_t n = match.num_positives();
  if (n == 0) {
    return g;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const double log_floor = std::log(kProbabilityFloor);
  const auto add_ce = [&](std::size_t i, std::size_t k) {
    const auto lp = log_softmax(scores.row(i));
    if (lp[k] < log_floor) {
      return;  // floored term is constant
    }
    auto out = g.d_logits.row(i);
    for (std::size_t c = 0; c < lp.size(); ++c) {
      out[c] += (std::exp(lp[c]) - (c == k ? 1.0 : 0.0)) * inv_n;
    }
  };
  for (const auto & p : match.positives) {
    add_ce(p.anchor, static_cast<std::size_t>(p.class_id));
    const BoxDelta target = encode_targets(gts[p.gt].box3d, anchors[p.anchor]);
    const auto res = delta_residual(preds.delta(p.anchor), target);
    auto out = g.d_deltas.row(p.anchor);
    for (std::size_t m = 0; m < kDeltaSize; ++m) {
      out[m] += smooth_l1_grad(res[m]) * inv_n;
    }
  }
  for (const std::size_t i : match.negatives) {
    add_ce(i, 0);
  }
  return g;
}

}  // namespace ssd3d

#endif  // SSD3D__LOSS_HPP_
