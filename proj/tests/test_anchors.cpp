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

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

using namespace ssd3d;

namespace
{

std::vector<SizeTemplate> templates13()
{
  std::vector<SizeTemplate> t;
  for (int i = 0; i < 13; ++i) {
    t.push_back({0.3 + 0.1 * i, 0.5 + 0.05 * i, 0.4 + 0.07 * i});
  }
  return t;
}

FeatureMapSpec square(int n, int image)
{
  return {n, n, image, image, "test"};
}

}  // namespace

TEST(Cells, SingleCellIsWholeImage)
{
  EXPECT_EQ(cell_for_location(square(1, 300), 0, 0), (PixelRect{0, 0, 300, 300}));
}

TEST(Cells, ThirdRowSecondColumnOfFourByFour)
{
  const PixelRect r = cell_for_location(square(4, 300), 2, 1);
  EXPECT_EQ(r, (PixelRect{75, 150, 150, 225}));
}

TEST(Cells, OutOfRange)
{
  for (auto [r, c] : {std::pair{-1, 0}, {0, -1}, {4, 0}, {0, 4}}) {
    try {
      cell_for_location(square(4, 300), r, c);
      FAIL();
    } catch (const Error & e) {
      EXPECT_EQ(e.code(), ErrorCode::OutOfRange);
    }
  }
  EXPECT_THROW(block_for_location(square(4, 300), 4, 4), Error);
}

TEST(Cells, TileDefaultMapsExactly)
{
  const auto check = [](const std::vector<FeatureMapSpec> & maps) {
    for (const auto & spec : maps) {
      std::vector<int> hits(static_cast<std::size_t>(spec.image_w * spec.image_h), 0);
      for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
          const PixelRect cell = cell_for_location(spec, r, c);
          ASSERT_FALSE(cell.empty());
          for (int v = cell.y0; v < cell.y1; ++v) {
            for (int u = cell.x0; u < cell.x1; ++u) {
              ++hits[static_cast<std::size_t>(v * spec.image_w + u)];
            }
          }
        }
      }
      ASSERT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }))
        << spec.layer_name << " " << spec.rows;
    }
  };
  check(make_feature_maps(kSsd300Grid, 300, 300));
  check(make_feature_maps(kDeskGrid, 75, 75));
  check(make_feature_maps(kDeskGrid, 80, 61));
}

TEST(Blocks, InteriorIsThreeByThreeCells)
{
  const auto spec = square(4, 300);
  EXPECT_EQ(block_for_location(spec, 1, 2), (PixelRect{75, 0, 300, 225}));
  const auto big = square(10, 100);
  const PixelRect b = block_for_location(big, 5, 5);
  EXPECT_EQ(b.width(), 30);
  EXPECT_EQ(b.height(), 30);
}

TEST(Blocks, CornerClipsToTwoByTwo)
{
  const auto spec = square(10, 100);
  EXPECT_EQ(block_for_location(spec, 0, 0), (PixelRect{0, 0, 20, 20}));
  EXPECT_EQ(block_for_location(spec, 9, 9), (PixelRect{80, 80, 100, 100}));
  EXPECT_EQ(block_for_location(square(1, 50), 0, 0), (PixelRect{0, 0, 50, 50}));
}

TEST(Blocks, AlwaysContainCell)
{
  for (const auto & spec : make_feature_maps(kSsd300Grid, 300, 300)) {
    for (int r = 0; r < spec.rows; ++r) {
      for (int c = 0; c < spec.cols; ++c) {
        ASSERT_TRUE(block_for_location(spec, r, c).contains(cell_for_location(spec, r, c)));
      }
    }
  }
}

TEST(MedianDepth, Examples)
{
  DepthImage d(2, 2, 2.0);
  EXPECT_EQ(block_median_depth(d, {0, 0, 2, 2}), 2.0);
  d.meters = {0.0, 1.0, 3.0, 2.0};
  EXPECT_EQ(block_median_depth(d, {0, 0, 2, 2}), 2.0);
  d.meters = {0.0, 4.0, 1.0, 0.0};
  EXPECT_EQ(block_median_depth(d, {0, 0, 2, 2}), 1.0);  // lower middle of two
  d.meters = {0.0, 0.0, 0.0, 0.0};
  EXPECT_FALSE(block_median_depth(d, {0, 0, 2, 2}).has_value());
}

TEST(MedianDepth, PermutationInvariant)
{
  SplitMix64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    DepthImage d(6, 5);
    for (auto & z : d.meters) {
      z = rng.uniform() < 0.2 ? 0.0 : std::round(rng.uniform(0.5, 4.0) * 10) / 10;
    }
    const auto ref = block_median_depth(d, {0, 0, 6, 5});
    for (std::size_t i = d.meters.size(); i > 1; --i) {
      std::swap(d.meters[i - 1], d.meters[rng.below(i)]);
    }
    ASSERT_EQ(block_median_depth(d, {0, 0, 6, 5}), ref);
  }
}

TEST(MedianDepth, BlockOutsideImage)
{
  const DepthImage d(4, 4, 1.0);
  EXPECT_THROW(block_median_depth(d, {0, 0, 5, 4}), Error);
}

TEST(GenerateAnchors, SingleLocationOnImageCenter)
{
  const CameraModel cam(50, 50, 10, 10);
  const DepthImage d(20, 20, 3.0);
  const auto anchors = generate_anchors(square(1, 20), d, cam, templates13());
  ASSERT_EQ(anchors.size(), 13u);
  const Vec3 c = pixel_to_world(cam, 10, 10, 3.0);
  for (std::size_t t = 0; t < anchors.size(); ++t) {
    const auto & a = anchors[t];
    EXPECT_TRUE(a.valid);
    EXPECT_EQ(a.box.cx, c.x);
    EXPECT_EQ(a.box.cy, c.y);
    EXPECT_EQ(a.box.cz, c.z);
    EXPECT_EQ(a.box.theta, 0.0);
    EXPECT_EQ(a.template_id, static_cast<int>(t));
    EXPECT_EQ(a.box.w, templates13()[t].w);
  }
}

TEST(GenerateAnchors, CountAndSharedCenters)
{
  const CameraModel cam(60, 60, 37.5, 37.5, tilt_rotation(0.2));
  DepthImage d(75, 75, 2.5);
  for (const auto & spec : make_feature_maps(kDeskGrid, 75, 75)) {
    const auto anchors = generate_anchors(spec, d, cam, templates13());
    ASSERT_EQ(anchors.size(), static_cast<std::size_t>(spec.rows * spec.cols) * 13);
    for (std::size_t i = 0; i < anchors.size(); i += 13) {
      for (std::size_t t = 1; t < 13; ++t) {
        ASSERT_EQ(anchors[i + t].box.cx, anchors[i].box.cx);
        ASSERT_EQ(anchors[i + t].box.cy, anchors[i].box.cy);
        ASSERT_EQ(anchors[i + t].box.cz, anchors[i].box.cz);
        ASSERT_EQ(anchors[i + t].box.theta, 0.0);
      }
    }
  }
}

TEST(GenerateAnchors, PlaneAtTwoMeters)
{
  const CameraModel cam(300, 300, 150, 150);
  const DepthImage d(300, 300, 2.0);
  for (const auto & spec : make_feature_maps(kSsd300Grid, 300, 300)) {
    for (const auto & a : generate_anchors(spec, d, cam, templates13())) {
      ASSERT_NEAR(a.box.cz, 2.0, 1e-9);
    }
  }
}

TEST(GenerateAnchors, MissingDepthGivesInvalidAnchors)
{
  const CameraModel cam(50, 50, 10, 10);
  DepthImage d(20, 20, 1.5);
  for (int v = 0; v < 10; ++v) {
    for (int u = 0; u < 10; ++u) {
      d.at(u, v) = 0.0;
    }
  }
  // 4x4 map over 20 px: cells are 5 px, so (0, 0)'s block covers [0, 10)^2
  const auto anchors = generate_anchors(square(4, 20), d, cam, templates13());
  EXPECT_FALSE(anchors[0].valid);
  EXPECT_TRUE(anchors[13].valid);
}

TEST(GenerateAnchors, TemplateCountMismatch)
{
  const CameraModel cam(50, 50, 10, 10);
  const DepthImage d(20, 20, 1.0);
  auto t = templates13();
  t.pop_back();
  try {
    generate_anchors(square(2, 20), d, cam, t);
    FAIL();
  } catch (const Error & e) {
    EXPECT_EQ(e.code(), ErrorCode::TemplateCountMismatch);
  }
}

TEST(GenerateAnchors, CentersIgnoreTemplateOrder)
{
  const CameraModel cam(60, 60, 37.5, 37.5, tilt_rotation(0.1));
  SplitMix64 rng(32);
  DepthImage d(75, 75);
  for (auto & z : d.meters) {
    z = rng.uniform(1.0, 5.0);
  }
  auto t = templates13();
  const auto a = generate_anchors(square(10, 75), d, cam, t);
  std::reverse(t.begin(), t.end());
  const auto b = generate_anchors(square(10, 75), d, cam, t);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].box.cx, b[i].box.cx);
    ASSERT_EQ(a[i].box.cy, b[i].box.cy);
    ASSERT_EQ(a[i].box.cz, b[i].box.cz);
    ASSERT_EQ(b[i].box.w, t[i % 13].w);
  }
}

TEST(AnchorSet, OffsetsAndLocationLookup)
{
  const CameraModel cam(60, 60, 37.5, 37.5);
  const DepthImage d(75, 75, 2.0);
  const auto specs = make_feature_maps(kDeskGrid, 75, 75);
  const AnchorSet set = generate_anchor_set(specs, d, cam, templates13());
  std::size_t total = 0;
  for (const auto & s : specs) {
    total += static_cast<std::size_t>(s.rows * s.cols) * 13;
  }
  EXPECT_EQ(set.size(), total);
  const auto loc = set.at_location(2, 3, 4);
  EXPECT_EQ(loc[0].layer, 2u);
  EXPECT_EQ(loc[0].row, 3);
  EXPECT_EQ(loc[0].col, 4);
  EXPECT_EQ(loc[12].template_id, 12);
}
