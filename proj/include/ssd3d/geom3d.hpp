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

#ifndef SSD3D__GEOM3D_HPP_
#define SSD3D__GEOM3D_HPP_

#include "ssd3d/numeric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <tuple>
#include <vector>

namespace ssd3d
{

/// Upright oriented box in the gravity-aligned world frame. (cx, cy, cz) is the
/// geometric center; w, l, h are extents along the box's local x, y, z axes;
/// theta is the yaw about world z, kept in [-pi, pi).
struct Box3D
{
  double cx{0.0};
  double cy{0.0};
  double cz{0.0};
  double w{1.0};
  double l{1.0};
  double h{1.0};
  double theta{0.0};

  friend bool operator==(const Box3D &, const Box3D &) = default;
};

inline bool is_valid(const Box3D & b)
{
  const bool finite = std::isfinite(b.cx) && std::isfinite(b.cy) && std::isfinite(b.cz) &&
                      std::isfinite(b.w) && std::isfinite(b.l) && std::isfinite(b.h) &&
                      std::isfinite(b.theta);
  return finite && b.w > 0.0 && b.l > 0.0 && b.h > 0.0;
}

inline double volume(const Box3D & b) { return b.w * b.l * b.h; }

/// Background is class 0; detections always carry a foreground class.
inline constexpr int kBackgroundClass = 0;

struct Detection
{
  Box3D box;
  int class_id{1};
  double score{0.0};
};

inline bool is_valid(const Detection & d)
{
  return is_valid(d.box) && d.class_id != kBackgroundClass && d.class_id > 0 &&
         d.score >= 0.0 && d.score <= 1.0;
}

struct Vec2
{
  double x{0.0};
  double y{0.0};
};

namespace detail
{

inline double cross(const Vec2 & o, const Vec2 & a, const Vec2 & b)
{
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

}  // namespace detail

/// Corners of the xy footprint, counter-clockwise.
inline std::array<Vec2, 4> footprint(const Box3D & b)
{
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double hw = 0.5 * b.w;
  const double hl = 0.5 * b.l;
  const std::array<Vec2, 4> local{{{-hw, -hl}, {hw, -hl}, {hw, hl}, {-hw, hl}}};
  std::array<Vec2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {b.cx + c * local[i].x - s * local[i].y, b.cy + s * local[i].x + c * local[i].y};
  }
  return out;
}

/// Shoelace area of a simple polygon (absolute value).
inline double polygon_area(std::span<const Vec2> poly)
{
  if (poly.size() < 3) {
    return 0.0;
  }
  double twice = 0.0;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    twice += poly[j].x * poly[i].y - poly[i].x * poly[j].y;
  }
  return 0.5 * std::abs(twice);
}

/// Sutherland-Hodgman: clips `subject` against every edge of the convex,
/// counter-clockwise polygon `clip`.
inline std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip)
{
  std::vector<Vec2> output(subject.begin(), subject.end());
  std::vector<Vec2> input;
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Vec2 & a = clip[e];
    const Vec2 & b = clip[(e + 1) % clip.size()];
    input.swap(output);
    output.clear();
    for (std::size_t i = 0; i < input.size(); ++i) {
      const Vec2 & cur = input[i];
      const Vec2 & prev = input[(i + input.size() - 1) % input.size()];
      const double d_cur = detail::cross(a, b, cur);
      const double d_prev = detail::cross(a, b, prev);
      const bool in_cur = d_cur >= 0.0;
      const bool in_prev = d_prev >= 0.0;
      if (in_cur != in_prev) {
        const double t = d_prev / (d_prev - d_cur);
        output.push_back({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
      if (in_cur) {
        output.push_back(cur);
      }
    }
  }
  return output;
}

/// Overlaps below this many square meters are reported as zero.
inline constexpr double kMinOverlapArea = 1e-12;

/// Area of the intersection of the two xy footprints.
inline double footprint_overlap_area(const Box3D & a, const Box3D & b)
{
  // Circumcircle rejection.
  const double ra = 0.5 * std::hypot(a.w, a.l);
  const double rb = 0.5 * std::hypot(b.w, b.l);
  const double dx = a.cx - b.cx;
  const double dy = a.cy - b.cy;
  if (dx * dx + dy * dy > (ra + rb) * (ra + rb)) {
    return 0.0;
  }
  // Fixed operand order makes the result exactly symmetric in (a, b).
  const auto key = [](const Box3D & x) {
    return std::tie(x.cx, x.cy, x.cz, x.w, x.l, x.h, x.theta);
  };
  const bool swap = key(b) < key(a);
  const auto pa = footprint(swap ? b : a);
  const auto pb = footprint(swap ? a : b);
  const auto poly = clip_convex(pa, pb);
  const double area = polygon_area(poly);
  return area < kMinOverlapArea ? 0.0 : area;
}

/// Length of the overlap of the two vertical extents.
inline double z_overlap(const Box3D & a, const Box3D & b)
{
  const double top = std::min(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h);
  const double bottom = std::max(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h);
  return std::max(0.0, top - bottom);
}

/// Exact volumetric IoU of two upright boxes.
inline double iou3d(const Box3D & a, const Box3D & b)
{
  const double dz = z_overlap(a, b);
  if (dz <= 0.0) {
    return 0.0;
  }
  const double area = footprint_overlap_area(a, b);
  if (area <= 0.0) {
    return 0.0;
  }
  const double inter = area * dz;
  const double uni = volume(a) + volume(b) - inter;
  if (uni <= 0.0) {
    return 0.0;
  }
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Point-in-footprint test in the box's local frame; used by the voxel oracle.
inline bool footprint_contains(const Box3D & b, double x, double y)
{
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  const double dx = x - b.cx;
  const double dy = y - b.cy;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.w && std::abs(ly) <= 0.5 * b.l;
}

/// Brute-force IoU by counting cell centers of a resolution^3 grid laid over the
/// axis-aligned bounding volume of both boxes. Upright boxes factor into an xy
/// membership and a z membership, so the count is taken over a resolution^2
/// xy grid times a resolution-cell z column; the totals are identical to the
/// full 3D enumeration.
inline double iou3d_oracle(const Box3D & a, const Box3D & b, int resolution)
{
  resolution = std::max(resolution, 1);
  const auto half_extent = [](const Box3D & x) {
    const double c = std::abs(std::cos(x.theta));
    const double s = std::abs(std::sin(x.theta));
    return Vec2{c * 0.5 * x.w + s * 0.5 * x.l, s * 0.5 * x.w + c * 0.5 * x.l};
  };
  const Vec2 ea = half_extent(a);
  const Vec2 eb = half_extent(b);
  const double x0 = std::min(a.cx - ea.x, b.cx - eb.x);
  const double x1 = std::max(a.cx + ea.x, b.cx + eb.x);
  const double y0 = std::min(a.cy - ea.y, b.cy - eb.y);
  const double y1 = std::max(a.cy + ea.y, b.cy + eb.y);
  const double z0 = std::min(a.cz - 0.5 * a.h, b.cz - 0.5 * b.h);
  const double z1 = std::max(a.cz + 0.5 * a.h, b.cz + 0.5 * b.h);
  const double sx = (x1 - x0) / resolution;
  const double sy = (y1 - y0) / resolution;
  const double sz = (z1 - z0) / resolution;

  long long za = 0, zb = 0, zab = 0;
  for (int k = 0; k < resolution; ++k) {
    const double z = z0 + (k + 0.5) * sz;
    const bool ia = std::abs(z - a.cz) <= 0.5 * a.h;
    const bool ib = std::abs(z - b.cz) <= 0.5 * b.h;
    za += ia;
    zb += ib;
    zab += ia && ib;
  }
  long long xa = 0, xb = 0, xab = 0;
  for (int j = 0; j < resolution; ++j) {
    const double y = y0 + (j + 0.5) * sy;
    for (int i = 0; i < resolution; ++i) {
      const double x = x0 + (i + 0.5) * sx;
      const bool ia = footprint_contains(a, x, y);
      const bool ib = footprint_contains(b, x, y);
      xa += ia;
      xb += ib;
      xab += ia && ib;
    }
  }
  const long long inter = xab * zab;
  const long long uni = xa * za + xb * zb - inter;
  if (uni <= 0) {
    return 0.0;
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline constexpr double kDefaultNmsThreshold = 0.25;

/// Greedy 3D non-maximum suppression. Candidates are visited by descending
/// score (ties: lower class_id, then lower input index); a candidate is kept iff
/// its IoU with every kept detection (of the same class when per_class) is
/// <= iou_threshold. Output is in visiting order.
inline std::vector<Detection> nms3d(
  std::span<const Detection> dets, double iou_threshold = kDefaultNmsThreshold,
  bool per_class = true)
{
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (dets[i].score != dets[j].score) {
      return dets[i].score > dets[j].score;
    }
    return dets[i].class_id < dets[j].class_id;
  });
  std::vector<Detection> kept;
  for (const std::size_t idx : order) {
    const Detection & cand = dets[idx];
    bool keep = true;
    for (const Detection & k : kept) {
      if (per_class && k.class_id != cand.class_id) {
        continue;
      }
      if (iou3d(k.box, cand.box) > iou_threshold) {
        keep = false;
        break;
      }
    }
    if (keep) {
      kept.push_back(cand);
    }
  }
  return kept;
}

}  // namespace ssd3d

#endif  // SSD3D__GEOM3D_HPP_
