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

#ifndef SSD3D__SYNTH_HPP_
#define SSD3D__SYNTH_HPP_

#include "ssd3d/camera.hpp"
#include "ssd3d/geom3d.hpp"
#include "ssd3d/numeric.hpp"
#include "ssd3d/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ssd3d
{

struct ClassPrior
{
  const char * name;
  double w;
  double l;
  double h;
  std::array<std::uint8_t, 3> color;
};

/// Nineteen indoor categories with typical extents (meters). Class id = index + 1.
inline constexpr std::array<ClassPrior, 19> kIndoorClasses{{
  {"bathtub", 1.60, 0.75, 0.55, {200, 200, 230}},
  {"bed", 2.00, 1.60, 0.80, {180, 60, 60}},
  {"bookshelf", 1.00, 0.35, 1.80, {120, 80, 40}},
  {"box", 0.40, 0.35, 0.30, {210, 170, 110}},
  {"chair", 0.55, 0.55, 0.90, {60, 120, 180}},
  {"counter", 1.80, 0.60, 0.90, {150, 150, 150}},
  {"desk", 1.20, 0.65, 0.75, {140, 100, 60}},
  {"door", 0.90, 0.10, 2.00, {100, 70, 40}},
  {"dresser", 1.00, 0.50, 1.00, {160, 110, 70}},
  {"garbage_bin", 0.35, 0.35, 0.50, {70, 70, 70}},
  {"lamp", 0.35, 0.35, 0.60, {240, 220, 120}},
  {"monitor", 0.55, 0.20, 0.45, {30, 30, 30}},
  {"night_stand", 0.50, 0.45, 0.60, {60, 160, 80}},
  {"pillow", 0.60, 0.40, 0.20, {230, 230, 210}},
  {"sink", 0.55, 0.45, 0.25, {220, 220, 220}},
  {"sofa", 2.00, 0.90, 0.85, {100, 60, 140}},
  {"table", 1.40, 0.80, 0.75, {170, 120, 80}},
  {"tv", 1.00, 0.15, 0.60, {20, 20, 40}},
  {"toilet", 0.40, 0.70, 0.75, {250, 250, 250}},
}};

/// Background plus the nineteen indoor classes.
inline constexpr std::size_t kIndoorClassTotal = kIndoorClasses.size() + 1;

/// Synthetic room: camera at the world origin, floor at z = -camera_height,
/// back wall at y = wall_distance.
struct RoomConfig
{
  int image_size{75};
  double focal{60.0};
  double pitch{0.15};
  double camera_height{1.2};
  double wall_distance{6.0};
  double dropout{0.02};
};

inline CameraModel room_camera(const RoomConfig & cfg)
{
  const double c = 0.5 * cfg.image_size;
  return CameraModel(cfg.focal, cfg.focal, c, c, tilt_rotation(cfg.pitch));
}

struct PlacedObject
{
  int class_id{1};
  Box3D box;
};

namespace detail
{

/// Ray (origin 0, direction d) against an upright box; returns the entry parameter.
inline std::optional<double> ray_box(const Vec3 & d, const Box3D & b)
{
  const double c = std::cos(b.theta);
  const double s = std::sin(b.theta);
  // origin and direction in box-local coordinates
  const Vec3 o{c * -b.cx + s * -b.cy, -s * -b.cx + c * -b.cy, -b.cz};
  const Vec3 dl{c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  const std::array<std::pair<double, double>, 3> axes{
    {{o.x, dl.x}, {o.y, dl.y}, {o.z, dl.z}}};
  const std::array<double, 3> half{0.5 * b.w, 0.5 * b.l, 0.5 * b.h};
  for (std::size_t k = 0; k < 3; ++k) {
    const auto [ok, dk] = axes[k];
    if (std::abs(dk) < 1e-15) {
      if (std::abs(ok) > half[k]) {
        return std::nullopt;
      }
      continue;
    }
    double ta = (-half[k] - ok) / dk;
    double tb = (half[k] - ok) / dk;
    if (ta > tb) {
      std::swap(ta, tb);
    }
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) {
      return std::nullopt;
    }
  }
  return t0 > 0.0 ? std::optional<double>(t0) : std::nullopt;
}

inline std::array<Vec3, 8> box_corners(const Box3D & b)
{
  std::array<Vec3, 8> out{};
  const auto fp = footprint(b);
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = {fp[i].x, fp[i].y, b.cz - 0.5 * b.h};
    out[i + 4] = {fp[i].x, fp[i].y, b.cz + 0.5 * b.h};
  }
  return out;
}

}  // namespace detail

/// Image-plane bounding rectangle of the box's projected corners, clipped to
/// the image. Empty (w = h = 0) when any corner lies behind the camera.
inline Rect2D project_box(const CameraModel & cam, const Box3D & b, int width, int height)
{
  double u0 = 1e300, v0 = 1e300, u1 = -1e300, v1 = -1e300;
  for (const Vec3 & p : detail::box_corners(b)) {
    const Vec3 c = mul_transposed(cam.r_tilt(), p);
    if (c.z <= 0.05) {
      return {};
    }
    const PixelDepth px = world_to_pixel(cam, p);
    u0 = std::min(u0, px.u);
    v0 = std::min(v0, px.v);
    u1 = std::max(u1, px.u);
    v1 = std::max(v1, px.v);
  }
  u0 = std::clamp(u0, 0.0, static_cast<double>(width));
  u1 = std::clamp(u1, 0.0, static_cast<double>(width));
  v0 = std::clamp(v0, 0.0, static_cast<double>(height));
  v1 = std::clamp(v1, 0.0, static_cast<double>(height));
  return {u0, v0, std::max(0.0, u1 - u0), std::max(0.0, v1 - v0)};
}

/// Ray-casts the room and objects into a millimeter depth map and a flat-shaded
/// RGB image; fills in annotations from the projected boxes.
inline SceneRecord render_scene(
  const RoomConfig & cfg, std::span<const PlacedObject> objects, std::uint64_t seed,
  std::string name = "scene")
{
  SceneRecord s;
  s.name = std::move(name);
  s.camera = room_camera(cfg);
  const int n = cfg.image_size;
  s.depth_mm = GrayImage16{n, n, std::vector<std::uint16_t>(static_cast<std::size_t>(n) * n, 0)};
  s.rgb = RgbImage8{n, n, std::vector<std::uint8_t>(static_cast<std::size_t>(n) * n * 3, 0)};
  SplitMix64 rng(seed);
  for (int v = 0; v < n; ++v) {
    for (int u = 0; u < n; ++u) {
      // direction whose camera-frame depth component is 1
      const Vec3 d = pixel_to_world(s.camera, u + 0.5, v + 0.5, 1.0);
      double best = std::numeric_limits<double>::infinity();
      std::array<std::uint8_t, 3> color{0, 0, 0};
      if (d.z < 0.0) {
        const double t = -cfg.camera_height / d.z;
        if (t < best) {
          best = t;
          color = {150, 140, 120};
        }
      }
      if (d.y > 0.0) {
        const double t = cfg.wall_distance / d.y;
        if (t < best) {
          best = t;
          color = {210, 200, 180};
        }
      }
      for (const auto & o : objects) {
        if (const auto t = detail::ray_box(d, o.box); t && *t < best) {
          best = *t;
          color = kIndoorClasses[static_cast<std::size_t>(o.class_id - 1) % kIndoorClasses.size()]
                    .color;
        }
      }
      const bool drop = rng.uniform() < cfg.dropout;
      const double mm = std::round(best * 1000.0);
      s.depth_mm.at(u, v) =
        (!drop && std::isfinite(best) && mm < 65535.0) ? static_cast<std::uint16_t>(mm) : 0;
      const double shade = std::clamp(1.0 - 0.06 * (std::isfinite(best) ? best : 10.0), 0.3, 1.0);
      for (int c = 0; c < 3; ++c) {
        s.rgb.at(u, v, c) = static_cast<std::uint8_t>(std::lround(color[c] * shade));
      }
    }
  }
  std::size_t id = 0;
  for (const auto & o : objects) {
    GroundTruthObject g;
    g.class_id = o.class_id;
    g.box3d = o.box;
    g.box2d = project_box(s.camera, o.box, n, n);
    g.id = id++;
    s.objects.push_back(g);
  }
  return s;
}

/// Object of class `class_id` with its prior size jittered by +-jitter,
/// standing on the floor.
inline PlacedObject sample_object(
  SplitMix64 & rng, const RoomConfig & cfg, int class_id, double jitter = 0.1)
{
  const auto & p = kIndoorClasses.at(static_cast<std::size_t>(class_id - 1));
  PlacedObject o;
  o.class_id = class_id;
  o.box.w = p.w * rng.uniform(1.0 - jitter, 1.0 + jitter);
  o.box.l = p.l * rng.uniform(1.0 - jitter, 1.0 + jitter);
  o.box.h = p.h * rng.uniform(1.0 - jitter, 1.0 + jitter);
  o.box.theta = rng.uniform(-0.6, 0.6);
  o.box.cx = rng.uniform(-1.2, 1.2);
  o.box.cy = rng.uniform(2.4, 4.6);
  o.box.cz = -cfg.camera_height + 0.5 * o.box.h;
  return o;
}

/// Random scene with up to `num_objects` non-overlapping, visible objects.
inline SceneRecord make_random_scene(
  std::uint64_t seed, std::size_t num_objects, const RoomConfig & cfg = {},
  std::string name = "scene")
{
  SplitMix64 rng(seed);
  const CameraModel cam = room_camera(cfg);
  std::vector<PlacedObject> objects;
  for (int attempt = 0; attempt < 200 && objects.size() < num_objects; ++attempt) {
    const int cls = 1 + static_cast<int>(rng.below(kIndoorClasses.size()));
    const PlacedObject o = sample_object(rng, cfg, cls);
    const Rect2D r = project_box(cam, o.box, cfg.image_size, cfg.image_size);
    if (r.w < 4.0 || r.h < 4.0) {
      continue;
    }
    const bool overlaps = std::any_of(objects.begin(), objects.end(), [&](const PlacedObject & q) {
      return footprint_overlap_area(q.box, o.box) > 0.0;
    });
    if (!overlaps) {
      objects.push_back(o);
    }
  }
  return render_scene(cfg, objects, mix_seed(seed, 77), std::move(name));
}

/// Jittered ground-truth extents drawn uniformly over the class table; the
/// stand-in training set behind the default size templates.
inline std::vector<std::array<double, 3>> sample_training_sizes(std::size_t n, std::uint64_t seed)
{
  SplitMix64 rng(seed);
  std::vector<std::array<double, 3>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto & p = kIndoorClasses[rng.below(kIndoorClasses.size())];
    out.push_back(
      {p.w * rng.uniform(0.85, 1.15), p.l * rng.uniform(0.85, 1.15), p.h * rng.uniform(0.85, 1.15)});
  }
  return out;
}

}  // namespace ssd3d

#endif  // SSD3D__SYNTH_HPP_
