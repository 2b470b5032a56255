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

#ifndef SSD3D__ANCHORS_HPP_
#define SSD3D__ANCHORS_HPP_

#include "ssd3d/camera.hpp"
#include "ssd3d/error.hpp"
#include "ssd3d/geom3d.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ssd3d
{

inline constexpr std::size_t kAnchorsPerLocation = 13;

/// Half-open integer pixel rectangle [x0, x1) x [y0, y1). Pixel (u, v) covers
/// the continuous square [u, u + 1) x [v, v + 1).
struct PixelRect
{
  int x0{0};
  int y0{0};
  int x1{0};
  int y1{0};

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  bool contains(const PixelRect & o) const
  {
    return o.x0 >= x0 && o.y0 >= y0 && o.x1 <= x1 && o.y1 <= y1;
  }
  /// Continuous-coordinate center.
  double center_u() const { return 0.5 * (x0 + x1); }
  double center_v() const { return 0.5 * (y0 + y1); }

  friend bool operator==(const PixelRect &, const PixelRect &) = default;
};

/// An m x n prediction layer laid over a W x H input image.
struct FeatureMapSpec
{
  int rows{1};
  int cols{1};
  int image_w{1};
  int image_h{1};
  std::string layer_name;

  int locations() const { return rows * cols; }
};

inline void validate(const FeatureMapSpec & spec)
{
  if (spec.rows <= 0 || spec.cols <= 0 || spec.image_w <= 0 || spec.image_h <= 0) {
    throw Error(ErrorCode::InvalidArgument, "feature map sizes must be positive");
  }
  if (spec.rows > spec.image_h || spec.cols > spec.image_w) {
    throw Error(ErrorCode::InvalidArgument, "feature map larger than the image");
  }
}

/// Grid sizes of the six prediction layers for a 300x300 input.
inline constexpr std::array<int, 6> kSsd300Grid{38, 19, 10, 5, 3, 1};
/// Grid sizes of the six prediction layers of the 75x75 desk-scale network.
inline constexpr std::array<int, 6> kDeskGrid{19, 10, 5, 3, 2, 1};

inline constexpr std::array<const char *, 6> kPredictionTapNames{
  "conv4-5", "conv7-3", "conv8-2", "conv9-2", "conv10-2", "conv11-2"};

/// Square feature maps named after the six prediction taps.
inline std::vector<FeatureMapSpec> make_feature_maps(
  std::span<const int> grid, int image_w, int image_h)
{
  std::vector<FeatureMapSpec> out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    FeatureMapSpec s{grid[i], grid[i], image_w, image_h,
                     i < kPredictionTapNames.size() ? kPredictionTapNames[i]
                                                    : "tap" + std::to_string(i)};
    validate(s);
    out.push_back(std::move(s));
  }
  return out;
}

inline void check_location(const FeatureMapSpec & spec, int row, int col)
{
  if (row < 0 || row >= spec.rows || col < 0 || col >= spec.cols) {
    throw Error(
      ErrorCode::OutOfRange, "location (" + std::to_string(row) + ", " + std::to_string(col) +
                               ") outside " + std::to_string(spec.rows) + "x" +
                               std::to_string(spec.cols) + " map");
  }
}

/// The image grid cell owned by (row, col): x in [col W / n, (col + 1) W / n),
/// y likewise, with boundaries floored to whole pixels so cells tile the image.
inline PixelRect cell_for_location(const FeatureMapSpec & spec, int row, int col)
{
  check_location(spec, row, col);
  const auto edge = [](int i, int extent, int count) {
    return static_cast<int>((static_cast<long long>(i) * extent) / count);
  };
  return {
    edge(col, spec.image_w, spec.cols), edge(row, spec.image_h, spec.rows),
    edge(col + 1, spec.image_w, spec.cols), edge(row + 1, spec.image_h, spec.rows)};
}

/// The 3x3-cell neighborhood around (row, col), clipped at the image border.
inline PixelRect block_for_location(const FeatureMapSpec & spec, int row, int col)
{
  check_location(spec, row, col);
  const PixelRect lo =
    cell_for_location(spec, std::max(row - 1, 0), std::max(col - 1, 0));
  const PixelRect hi =
    cell_for_location(spec, std::min(row + 1, spec.rows - 1), std::min(col + 1, spec.cols - 1));
  return {lo.x0, lo.y0, hi.x1, hi.y1};
}

/// Metric depth image; 0 marks a missing return.
struct DepthImage
{
  int width{0};
  int height{0};
  std::vector<double> meters;

  DepthImage() = default;
  DepthImage(int w, int h, double fill = 0.0)
  : width(w), height(h), meters(static_cast<std::size_t>(w) * h, fill)
  {
  }

  double & at(int u, int v) { return meters[static_cast<std::size_t>(v) * width + u]; }
  double at(int u, int v) const { return meters[static_cast<std::size_t>(v) * width + u]; }
};

/// Median of the strictly positive depths inside `block`. An even count takes
/// the lower middle value. Returns nullopt when the block has no valid pixel.
inline std::optional<double> block_median_depth(const DepthImage & depth, const PixelRect & block)
{
  if (block.x0 < 0 || block.y0 < 0 || block.x1 > depth.width || block.y1 > depth.height) {
    throw Error(ErrorCode::OutOfRange, "block exceeds depth image bounds");
  }
  std::vector<double> valid;
  valid.reserve(static_cast<std::size_t>(std::max(0, block.width() * block.height())));
  for (int v = block.y0; v < block.y1; ++v) {
    for (int u = block.x0; u < block.x1; ++u) {
      const double z = depth.at(u, v);
      if (z > 0.0 && std::isfinite(z)) {
        valid.push_back(z);
      }
    }
  }
  if (valid.empty()) {
    return std::nullopt;
  }
  const auto mid = valid.begin() + static_cast<std::ptrdiff_t>((valid.size() - 1) / 2);
  std::nth_element(valid.begin(), mid, valid.end());
  return *mid;
}

struct SizeTemplate
{
  double w{1.0};
  double l{1.0};
  double h{1.0};

  friend bool operator==(const SizeTemplate &, const SizeTemplate &) = default;
};

struct Anchor
{
  Box3D box;
  std::size_t layer{0};
  int row{0};
  int col{0};
  int template_id{0};
  bool valid{false};
};

/// Anchors for one layer, ordered by (row, col, template). Every location
/// contributes kAnchorsPerLocation anchors sharing one center; locations
/// without valid depth produce anchors flagged invalid.
inline std::vector<Anchor> generate_anchors(
  const FeatureMapSpec & spec, const DepthImage & depth, const CameraModel & cam,
  std::span<const SizeTemplate> templates, std::size_t layer_index = 0)
{
  validate(spec);
  if (templates.size() != kAnchorsPerLocation) {
    throw Error(
      ErrorCode::TemplateCountMismatch,
      "expected 13 size templates, got " + std::to_string(templates.size()));
  }
  if (depth.width != spec.image_w || depth.height != spec.image_h) {
    throw Error(ErrorCode::SizeMismatch, "depth image not registered to the input size");
  }
  std::vector<Anchor> out;
  out.reserve(static_cast<std::size_t>(spec.locations()) * kAnchorsPerLocation);
  for (int row = 0; row < spec.rows; ++row) {
    for (int col = 0; col < spec.cols; ++col) {
      const PixelRect block = block_for_location(spec, row, col);
      const auto z_med = block_median_depth(depth, block);
      Vec3 center{};
      if (z_med) {
        center = pixel_to_world(cam, block.center_u(), block.center_v(), *z_med);
      }
      for (std::size_t t = 0; t < templates.size(); ++t) {
        Anchor a;
        a.box = {center.x, center.y, center.z, templates[t].w, templates[t].l, templates[t].h, 0.0};
        a.layer = layer_index;
        a.row = row;
        a.col = col;
        a.template_id = static_cast<int>(t);
        a.valid = z_med.has_value();
        out.push_back(a);
      }
    }
  }
  return out;
}

/// All anchors of a multi-layer network in (layer, row, col, template) order.
struct AnchorSet
{
  std::vector<FeatureMapSpec> layers;
  std::vector<Anchor> anchors;
  std::vector<std::size_t> layer_offsets;

  std::size_t size() const { return anchors.size(); }

  /// Global index of the first anchor at (layer, row, col).
  std::size_t location_begin(std::size_t layer, int row, int col) const
  {
    const auto & s = layers.at(layer);
    check_location(s, row, col);
    return layer_offsets[layer] +
           (static_cast<std::size_t>(row) * s.cols + col) * kAnchorsPerLocation;
  }

  std::span<const Anchor> at_location(std::size_t layer, int row, int col) const
  {
    return std::span<const Anchor>(anchors).subspan(
      location_begin(layer, row, col), kAnchorsPerLocation);
  }
};

inline AnchorSet generate_anchor_set(
  std::span<const FeatureMapSpec> layers, const DepthImage & depth, const CameraModel & cam,
  std::span<const SizeTemplate> templates)
{
  AnchorSet set;
  set.layers.assign(layers.begin(), layers.end());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    set.layer_offsets.push_back(set.anchors.size());
    auto layer = generate_anchors(layers[i], depth, cam, templates, i);
    set.anchors.insert(set.anchors.end(), layer.begin(), layer.end());
  }
  return set;
}

}  // namespace ssd3d

#endif  // SSD3D__ANCHORS_HPP_
