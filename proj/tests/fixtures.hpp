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

// Random problem generators shared by the unit tests and the acceptance binary.

#ifndef TESTS__FIXTURES_HPP_
#define TESTS__FIXTURES_HPP_

#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace fixture
{

using namespace ssd3d;

struct LossInstance
{
  std::vector<Anchor> anchors;
  std::vector<GroundTruthObject> gts;
  MatchResult match;
  ScoreMatrix scores;
  DeltaMatrix deltas;
};

/// Random anchors, objects, a random disjoint positive / negative split and
/// random head outputs. Delta predictions sit within a few units of their
/// targets so both smooth-L1 regimes occur.
inline LossInstance make_loss_instance(SplitMix64 & rng, std::size_t c_total = 6, std::size_t n = 40)
{
  LossInstance li;
  for (std::size_t i = 0; i < n; ++i) {
    Anchor a;
    a.box = oracle::random_box(rng, 0.3, 2.5, 2.0);
    a.box.theta = 0.0;
    a.valid = true;
    a.template_id = static_cast<int>(i % 13);
    li.anchors.push_back(a);
  }
  const std::size_t n_gt = 1 + rng.below(3);
  for (std::size_t j = 0; j < n_gt; ++j) {
    GroundTruthObject g;
    g.class_id = 1 + static_cast<int>(rng.below(c_total - 1));
    g.box3d = oracle::random_box(rng, 0.3, 2.5, 2.0);
    g.id = j;
    li.gts.push_back(g);
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = i;
  }
  for (std::size_t i = n; i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.below(i)]);
  }
  const std::size_t n_pos = 1 + rng.below(5);
  for (std::size_t k = 0; k < n_pos; ++k) {
    const std::size_t j = rng.below(n_gt);
    li.match.positives.push_back({idx[k], j, li.gts[j].class_id});
  }
  std::sort(li.match.positives.begin(), li.match.positives.end(), [](auto & a, auto & b) {
    return a.anchor < b.anchor;
  });
  for (std::size_t k = n_pos; k < std::min(n, n_pos + 3 * n_pos); ++k) {
    li.match.negatives.push_back(idx[k]);
  }
  li.scores = ScoreMatrix(n, c_total);
  for (auto & v : li.scores.logits) {
    v = rng.uniform(-3.0, 3.0);
  }
  li.deltas = DeltaMatrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto & v : li.deltas.row(i)) {
      v = rng.uniform(-3.0, 3.0);
    }
  }
  for (const auto & p : li.match.positives) {
    const auto t = encode_targets(li.gts[p.gt].box3d, li.anchors[p.anchor]).to_array();
    auto row = li.deltas.row(p.anchor);
    for (std::size_t m = 0; m < kDeltaSize; ++m) {
      row[m] = t[m] + rng.uniform(-2.5, 2.5);
    }
  }
  return li;
}

inline double loss_of(const LossInstance & li)
{
  return total_loss(li.scores, li.deltas, li.match, li.gts, li.anchors).total;
}

/// True when a delta coordinate sits within `margin` of a smooth-L1 kink or
/// of the yaw wrap point.
inline bool near_kink(const LossInstance & li, std::size_t anchor, std::size_t m, double margin = 1e-4)
{
  for (const auto & p : li.match.positives) {
    if (p.anchor != anchor) {
      continue;
    }
    const auto t = encode_targets(li.gts[p.gt].box3d, li.anchors[p.anchor]);
    const double raw = li.deltas.row(anchor)[m] - t.to_array()[m];
    const double r = delta_residual(li.deltas.delta(anchor), t)[m];
    if (std::abs(std::abs(r) - 1.0) < margin) {
      return true;
    }
    if (m == kThetaIndex && std::abs(normalize_angle(raw + oracle::kPi)) < margin) {
      return true;
    }
  }
  return false;
}

struct GradCheck
{
  double max_rel_error{0.0};
  std::size_t checked{0};
  std::size_t skipped{0};
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) at `count` random
/// coordinates of the rows that carry loss terms; central differences, step h.
inline GradCheck gradient_check(LossInstance & li, SplitMix64 & rng, std::size_t count, double h = 1e-6)
{
  GradCheck out;
  const auto g = loss_gradients(li.scores, li.deltas, li.match, li.gts, li.anchors);
  std::vector<std::size_t> rows;
  for (const auto & p : li.match.positives) {
    rows.push_back(p.anchor);
  }
  rows.insert(rows.end(), li.match.negatives.begin(), li.match.negatives.end());
  while (out.checked < count) {
    const std::size_t i = rows[rng.below(rows.size())];
    const bool logit = rng.uniform() < 0.5;
    double * x = nullptr;
    double analytic = 0.0;
    if (logit) {
      const std::size_t c = rng.below(li.scores.cols);
      x = &li.scores.row(i)[c];
      analytic = g.d_logits.row(i)[c];
    } else {
      const std::size_t m = rng.below(kDeltaSize);
      if (near_kink(li, i, m)) {
        ++out.skipped;
        continue;
      }
      x = &li.deltas.row(i)[m];
      analytic = g.d_deltas.row(i)[m];
    }
    const double keep = *x;
    *x = keep + h;
    const double up = loss_of(li);
    *x = keep - h;
    const double down = loss_of(li);
    *x = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
    ++out.checked;
  }
  return out;
}

/// Anchors at one location built directly from sizes.
inline std::vector<Anchor> location_anchors(const std::vector<SizeTemplate> & t, Vec3 c = {0.1, 2.0, -0.3})
{
  std::vector<Anchor> out;
  for (std::size_t i = 0; i < t.size(); ++i) {
    Anchor a;
    a.box = {c.x, c.y, c.z, t[i].w, t[i].l, t[i].h, 0.0};
    a.template_id = static_cast<int>(i);
    a.valid = true;
    out.push_back(a);
  }
  return out;
}

inline std::vector<SizeTemplate> filler(SizeTemplate special, std::size_t at)
{
  std::vector<SizeTemplate> t;
  for (int i = 0; i < 13; ++i) {
    t.push_back({0.1 + 0.01 * i, 0.1, 0.1});
  }
  t[at] = special;
  return t;
}

inline GroundTruthObject gt_with_size(double w, double l, double h, double theta = 0.0)
{
  GroundTruthObject g;
  g.class_id = 3;
  g.box2d = {10, 10, 20, 20};
  g.box3d = {1.3, 2.7, 0.4, w, l, h, theta};
  return g;
}

/// Two-object scene after the bed / night stand example. A 4x4 and an 8x8 map
/// cover a 300x300 image with four default boxes per location; exactly one
/// template is close to each object.
struct TwoObjectFixture
{
  std::vector<FeatureMapSpec> layers;
  std::vector<DefaultBox2D> defaults;
  AnchorSet anchors;
  std::vector<GroundTruthObject> gts;
  CameraModel cam{300, 300, 150, 150};
  DepthImage depth{300, 300, 3.0};
  std::vector<SizeTemplate> templates;

  TwoObjectFixture()
  {
    layers = {{8, 8, 300, 300, "fine"}, {4, 4, 300, 300, "coarse"}};
    DefaultBoxConfig cfg;
    cfg.min_scale = 0.1;
    cfg.max_scale = 0.25;
    cfg.aspect_ratios = {1.0, 2.0, 0.5};
    defaults = make_default_boxes(layers, cfg);
    for (int i = 0; i < 13; ++i) {
      const double s = 0.15 + 0.08 * i;
      templates.push_back({s, s, s});
    }
    templates[4] = {2.0, 1.5, 0.5};    // bed-like
    templates[9] = {0.5, 0.45, 0.55};  // night-stand-like
    anchors = generate_anchor_set(layers, depth, cam, templates);

    const auto rect_of = [&](std::size_t layer, int row, int col, int ratio) {
      for (const auto & d : defaults) {
        if (d.layer == layer && d.row == row && d.col == col && d.ratio_id == ratio) {
          return d.rect;
        }
      }
      return Rect2D{};
    };
    GroundTruthObject bed;
    bed.class_id = 1;
    bed.box2d = rect_of(1, 2, 1, 1);  // third row, second column of the 4x4 map
    bed.box3d = {-0.4, 0.3, 3.2, 2.0, 1.6, 0.55, 0.0};
    bed.id = 0;
    GroundTruthObject stand;
    stand.class_id = 2;
    stand.box2d = rect_of(0, 4, 4, 0);  // fifth row, fifth column of the 8x8 map
    stand.box3d = {0.1, 0.1, 3.0, 0.5, 0.5, 0.6, 0.0};
    stand.id = 1;
    gts = {bed, stand};
  }
};

}  // namespace fixture

#endif  // TESTS__FIXTURES_HPP_
