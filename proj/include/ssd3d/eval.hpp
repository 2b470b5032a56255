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

#ifndef SSD3D__EVAL_HPP_
#define SSD3D__EVAL_HPP_

#include "ssd3d/geom3d.hpp"
#include "ssd3d/matching.hpp"

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

namespace ssd3d
{

/// A detection counts as a true positive when its IoU is strictly above this.
inline constexpr double kTruePositiveIou = 0.25;

enum class Outcome : std::uint8_t { FalsePositive = 0, TruePositive = 1 };

/// Visiting order for evaluation: score descending, then input index.
inline std::vector<std::size_t> score_order(std::span<const double> scores)
{
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  return order;
}

/// Greedy TP/FP assignment within one image. Detections are visited by
/// descending score; each takes the not-yet-matched ground truth of its class
/// with the highest IoU and is a TP iff that IoU exceeds iou_min. Returned
/// labels are aligned with the input order.
inline std::vector<Outcome> assign_tp_fp(
  std::span<const Detection> dets, std::span<const GroundTruthObject> gts,
  double iou_min = kTruePositiveIou)
{
  std::vector<double> scores(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    scores[i] = dets[i].score;
  }
  std::vector<Outcome> labels(dets.size(), Outcome::FalsePositive);
  std::vector<bool> used(gts.size(), false);
  for (const std::size_t i : score_order(scores)) {
    double best = -1.0;
    std::size_t best_j = gts.size();
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (used[j] || gts[j].class_id != dets[i].class_id) {
        continue;
      }
      const double iou = iou3d(dets[i].box, gts[j].box3d);
      if (iou > best) {
        best = iou;
        best_j = j;
      }
    }
    if (best_j < gts.size() && best > iou_min) {
      used[best_j] = true;
      labels[i] = Outcome::TruePositive;
    }
  }
  return labels;
}

struct PRPoint
{
  double precision{0.0};
  double recall{0.0};
  double threshold{0.0};
};

struct APResult
{
  int class_id{0};
  double ap{0.0};
  std::size_t tp{0};
  std::size_t fp{0};
  std::size_t gt_count{0};
  std::vector<PRPoint> curve;

  /// AP is undefined (and excluded from the mean) for classes without ground truth.
  bool defined() const { return gt_count > 0; }
};

/// Area under the precision-recall curve with all-point interpolation: each
/// recall step is weighted by the highest precision reached at that recall or
/// beyond.
inline APResult average_precision(
  std::span<const Outcome> labels, std::span<const double> scores, std::size_t gt_count,
  int class_id = 0)
{
  APResult r;
  r.class_id = class_id;
  r.gt_count = gt_count;
  const auto order = score_order(scores);
  std::size_t tp = 0;
  std::size_t fp = 0;
  for (const std::size_t i : order) {
    labels[i] == Outcome::TruePositive ? ++tp : ++fp;
    const double recall = gt_count > 0 ? static_cast<double>(tp) / gt_count : 0.0;
    r.curve.push_back({static_cast<double>(tp) / static_cast<double>(tp + fp), recall, scores[i]});
  }
  r.tp = tp;
  r.fp = fp;
  if (gt_count == 0) {
    return r;
  }
  std::vector<double> envelope(r.curve.size());
  double running = 0.0;
  for (std::size_t k = r.curve.size(); k-- > 0;) {
    running = std::max(running, r.curve[k].precision);
    envelope[k] = running;
  }
  double prev_recall = 0.0;
  double ap = 0.0;
  for (std::size_t k = 0; k < r.curve.size(); ++k) {
    ap += (r.curve[k].recall - prev_recall) * envelope[k];
    prev_recall = r.curve[k].recall;
  }
  r.ap = std::clamp(ap, 0.0, 1.0);
  return r;
}

/// Unweighted mean over classes with ground truth; 0 when there are none.
inline double mean_ap(std::span<const APResult> per_class)
{
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto & r : per_class) {
    if (r.defined()) {
      sum += r.ap;
      ++n;
    }
  }
  return n > 0 ? sum / static_cast<double>(n) : 0.0;
}

/// Per-class AP over a set of images. Classes 1..c_total-1 are reported.
inline std::vector<APResult> evaluate_detections(
  std::span<const std::vector<Detection>> dets_per_image,
  std::span<const std::vector<GroundTruthObject>> gts_per_image, std::size_t c_total,
  double iou_min = kTruePositiveIou)
{
  std::vector<std::vector<Outcome>> labels(c_total);
  std::vector<std::vector<double>> scores(c_total);
  std::vector<std::size_t> gt_counts(c_total, 0);
  for (std::size_t img = 0; img < dets_per_image.size(); ++img) {
    const auto & dets = dets_per_image[img];
    const auto & gts = gts_per_image[img];
    const auto l = assign_tp_fp(dets, gts, iou_min);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const auto c = static_cast<std::size_t>(dets[i].class_id);
      if (c < c_total) {
        labels[c].push_back(l[i]);
        scores[c].push_back(dets[i].score);
      }
    }
    for (const auto & g : gts) {
      const auto c = static_cast<std::size_t>(g.class_id);
      if (c < c_total) {
        ++gt_counts[c];
      }
    }
  }
  std::vector<APResult> out;
  for (std::size_t c = 1; c < c_total; ++c) {
    out.push_back(average_precision(labels[c], scores[c], gt_counts[c], static_cast<int>(c)));
  }
  return out;
}

}  // namespace ssd3d

#endif  // SSD3D__EVAL_HPP_
