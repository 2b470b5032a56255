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

#ifndef SSD3D__MATCHING_HPP_
#define SSD3D__MATCHING_HPP_

#include "ssd3d/anchors.hpp"
#include "ssd3d/geom3d.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

namespace ssd3d
{

/// Axis-aligned image rectangle: top-left corner plus size, in pixels.
struct Rect2D
{
  double x{0.0};
  double y{0.0};
  double w{0.0};
  double h{0.0};

  double area() const { return std::max(0.0, w) * std::max(0.0, h); }
  friend bool operator==(const Rect2D &, const Rect2D &) = default;
};

inline double jaccard2d(const Rect2D & a, const Rect2D & b)
{
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) {
    return 0.0;
  }
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// One annotated object: a unique 2D box paired with its amodal 3D box.
struct GroundTruthObject
{
  int class_id{1};
  Rect2D box2d;
  Box3D box3d;
  std::size_t id{0};
};

/// 2D prior rectangle attached to a feature-map location. Only used to decide
/// which locations should produce 3D positives.
struct DefaultBox2D
{
  std::size_t layer{0};
  int row{0};
  int col{0};
  int ratio_id{0};
  Rect2D rect;
};

struct DefaultBoxConfig
{
  double min_scale{0.2};
  double max_scale{0.9};
  std::vector<double> aspect_ratios{1.0, 2.0, 0.5, 3.0, 1.0 / 3.0};
  bool extra_unit_ratio{true};
};

/// SSD300-style priors: per layer k of m a scale s_k linearly spaced in
/// [min_scale, max_scale], one box per aspect ratio, plus an extra square of
/// scale sqrt(s_k s_{k+1}). Boxes are centered on their location's cell.
inline std::vector<DefaultBox2D> make_default_boxes(
  std::span<const FeatureMapSpec> layers, const DefaultBoxConfig & cfg = {})
{
  std::vector<DefaultBox2D> out;
  const std::size_t m = layers.size();
  const auto scale = [&](std::size_t k) {
    if (k >= m) {
      return 1.0;
    }
    if (m == 1) {
      return cfg.min_scale;
    }
    return cfg.min_scale + (cfg.max_scale - cfg.min_scale) * static_cast<double>(k) / (m - 1);
  };
  for (std::size_t k = 0; k < m; ++k) {
    const auto & spec = layers[k];
    const double s = scale(k);
    std::vector<std::pair<double, double>> shapes;  // (width, height) in pixels
    for (const double a : cfg.aspect_ratios) {
      shapes.emplace_back(s * std::sqrt(a) * spec.image_w, s / std::sqrt(a) * spec.image_h);
    }
    if (cfg.extra_unit_ratio) {
      const double s2 = std::sqrt(s * scale(k + 1));
      shapes.emplace_back(s2 * spec.image_w, s2 * spec.image_h);
    }
    for (int row = 0; row < spec.rows; ++row) {
      for (int col = 0; col < spec.cols; ++col) {
        const PixelRect cell = cell_for_location(spec, row, col);
        const double cu = cell.center_u();
        const double cv = cell.center_v();
        for (std::size_t r = 0; r < shapes.size(); ++r) {
          const auto [w, h] = shapes[r];
          out.push_back({k, row, col, static_cast<int>(r), {cu - 0.5 * w, cv - 0.5 * h, w, h}});
        }
      }
    }
  }
  return out;
}

struct LocationMatch
{
  std::size_t layer{0};
  int row{0};
  int col{0};
  std::size_t gt{0};

  friend auto operator<=>(const LocationMatch &, const LocationMatch &) = default;
};

inline constexpr double kDefaultJaccardThreshold = 0.5;
inline constexpr double kPositiveIouThreshold = 0.72;
inline constexpr double kNegativeRatio = 3.0;

/// Flags (location, gt) pairs: a location is flagged for gt j when any of its
/// default boxes has jaccard >= threshold with box2d_j, and the single best
/// default box of every gt (lowest index on ties, overlap > 0) flags its
/// location regardless of threshold. Sorted by (layer, row, col, gt), unique.
inline std::vector<LocationMatch> match_default_boxes(
  std::span<const DefaultBox2D> defaults, std::span<const GroundTruthObject> gts,
  double jaccard_threshold = kDefaultJaccardThreshold)
{
  std::vector<LocationMatch> out;
  std::vector<double> best(gts.size(), 0.0);
  std::vector<std::size_t> best_idx(gts.size(), defaults.size());
  for (std::size_t d = 0; d < defaults.size(); ++d) {
    const auto & db = defaults[d];
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const double jac = jaccard2d(db.rect, gts[j].box2d);
      if (jac >= jaccard_threshold) {
        out.push_back({db.layer, db.row, db.col, j});
      }
      if (jac > best[j]) {
        best[j] = jac;
        best_idx[j] = d;
      }
    }
  }
  for (std::size_t j = 0; j < gts.size(); ++j) {
    if (best_idx[j] < defaults.size()) {
      const auto & db = defaults[best_idx[j]];
      out.push_back({db.layer, db.row, db.col, j});
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct PositiveChoice
{
  std::size_t offset{0};  ///< index within the location's anchors
  int template_id{0};
  double iou{0.0};        ///< center-aligned IoU with the ground truth
};

/// Aligns every anchor at the location to the ground-truth center, scores it
/// by 3D IoU, and returns the best one iff its IoU is strictly above the
/// threshold. The anchors themselves are not modified.
inline std::optional<PositiveChoice> select_positive_anchor(
  std::span<const Anchor> anchors_at_loc, const GroundTruthObject & gt,
  double iou_threshold = kPositiveIouThreshold)
{
  std::optional<PositiveChoice> best;
  for (std::size_t t = 0; t < anchors_at_loc.size(); ++t) {
    const Anchor & a = anchors_at_loc[t];
    if (!a.valid) {
      continue;
    }
    Box3D aligned = a.box;
    aligned.cx = gt.box3d.cx;
    aligned.cy = gt.box3d.cy;
    aligned.cz = gt.box3d.cz;
    const double iou = iou3d(aligned, gt.box3d);
    if (!best || iou > best->iou) {
      best = PositiveChoice{t, a.template_id, iou};
    }
  }
  if (best && best->iou > iou_threshold) {
    return best;
  }
  return std::nullopt;
}

struct Positive
{
  std::size_t anchor{0};
  std::size_t gt{0};
  int class_id{0};

  friend bool operator==(const Positive &, const Positive &) = default;
};

/// Realized assignment indicator: positive (anchor, gt, class) triples sorted by
/// anchor index, and the mined negative anchors.
struct MatchResult
{
  std::vector<Positive> positives;
  std::vector<std::size_t> negatives;

  std::size_t num_positives() const { return positives.size(); }
};

struct MatchConfig
{
  double jaccard_threshold{kDefaultJaccardThreshold};
  double iou_threshold{kPositiveIouThreshold};
  double negative_ratio{kNegativeRatio};
};

/// Positive search guided by the 2D annotations. Every flagged location
/// contributes at most one positive; a location flagged for several objects
/// keeps the object whose selected anchor has the highest center-aligned IoU
/// (lowest gt index on ties). Negatives are left empty for mine_hard_negatives.
inline MatchResult build_match(
  const AnchorSet & anchors, std::span<const DefaultBox2D> defaults,
  std::span<const GroundTruthObject> gts, const MatchConfig & cfg = {})
{
  MatchResult result;
  const auto flagged = match_default_boxes(defaults, gts, cfg.jaccard_threshold);
  std::size_t i = 0;
  while (i < flagged.size()) {
    const LocationMatch & loc = flagged[i];
    std::optional<Positive> winner;
    double winner_iou = -1.0;
    const std::size_t base = anchors.location_begin(loc.layer, loc.row, loc.col);
    const auto at_loc = anchors.at_location(loc.layer, loc.row, loc.col);
    for (; i < flagged.size() && flagged[i].layer == loc.layer && flagged[i].row == loc.row &&
           flagged[i].col == loc.col;
         ++i) {
      const std::size_t j = flagged[i].gt;
      const auto choice = select_positive_anchor(at_loc, gts[j], cfg.iou_threshold);
      // gts arrive in ascending order, so strict > keeps the lowest index on ties
      if (choice && choice->iou > winner_iou) {
        winner_iou = choice->iou;
        winner = Positive{base + choice->offset, j, gts[j].class_id};
      }
    }
    if (winner) {
      result.positives.push_back(*winner);
    }
  }
  std::sort(result.positives.begin(), result.positives.end(), [](const auto & a, const auto & b) {
    return a.anchor < b.anchor;
  });
  return result;
}

/// Keeps the floor(ratio * N) valid non-positive anchors with the largest
/// background loss, ordered by loss descending then anchor index ascending.
inline std::vector<std::size_t> mine_hard_negatives(
  std::span<const double> background_losses, std::span<const Positive> positives,
  std::span<const Anchor> anchors, double ratio = kNegativeRatio)
{
  if (positives.empty() || ratio <= 0.0) {
    return {};
  }
  std::vector<char> is_positive(anchors.size(), 0);
  for (const auto & p : positives) {
    is_positive[p.anchor] = 1;
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (anchors[i].valid && !is_positive[i]) {
      candidates.push_back(i);
    }
  }
  const auto limit = std::min(
    candidates.size(),
    static_cast<std::size_t>(std::floor(ratio * static_cast<double>(positives.size()))));
  const auto by_loss = [&](std::size_t a, std::size_t b) {
    if (background_losses[a] != background_losses[b]) {
      return background_losses[a] > background_losses[b];
    }
    return a < b;
  };
  std::partial_sort(
    candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(limit), candidates.end(),
    by_loss);
  candidates.resize(limit);
  return candidates;
}

}  // namespace ssd3d

#endif  // SSD3D__MATCHING_HPP_
