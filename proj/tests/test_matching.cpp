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

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

using namespace ssd3d;

namespace
{

using fixture::filler;
using fixture::gt_with_size;
using fixture::location_anchors;
using fixture::TwoObjectFixture;

}  // namespace

TEST(Jaccard2d, Basics)
{
  const Rect2D a{0, 0, 10, 10};
  EXPECT_EQ(jaccard2d(a, a), 1.0);
  EXPECT_EQ(jaccard2d(a, {20, 0, 5, 5}), 0.0);
  EXPECT_NEAR(jaccard2d(a, {5, 0, 10, 10}), 50.0 / 150.0, 1e-15);
}

TEST(DefaultBoxes, CentersInsideTheirCell)
{
  const auto layers = make_feature_maps(kSsd300Grid, 300, 300);
  const auto boxes = make_default_boxes(layers);
  std::size_t expected = 0;
  for (const auto & l : layers) {
    expected += static_cast<std::size_t>(l.rows * l.cols) * 6;
  }
  ASSERT_EQ(boxes.size(), expected);
  for (const auto & b : boxes) {
    const PixelRect cell = cell_for_location(layers[b.layer], b.row, b.col);
    const double cu = b.rect.x + 0.5 * b.rect.w;
    const double cv = b.rect.y + 0.5 * b.rect.h;
    ASSERT_GE(cu, cell.x0);
    ASSERT_LT(cu, cell.x1);
    ASSERT_GE(cv, cell.y0);
    ASSERT_LT(cv, cell.y1);
  }
}

TEST(MatchDefaultBoxes, IdenticalBoxMatches)
{
  const std::vector<FeatureMapSpec> layers{{3, 3, 90, 90, "l"}};
  const auto defaults = make_default_boxes(layers);
  GroundTruthObject g;
  g.box2d = defaults[4 * 6 + 2].rect;  // location (1, 1), third shape
  const auto m = match_default_boxes(defaults, std::vector{g});
  ASSERT_FALSE(m.empty());
  EXPECT_TRUE(std::find(m.begin(), m.end(), LocationMatch{0, 1, 1, 0}) != m.end());
}

TEST(MatchDefaultBoxes, NoGtsGivesNothing)
{
  const auto defaults = make_default_boxes(make_feature_maps(kDeskGrid, 75, 75));
  EXPECT_TRUE(match_default_boxes(defaults, {}).empty());
}

TEST(MatchDefaultBoxes, BestBoxAlwaysFlagged)
{
  const std::vector<FeatureMapSpec> layers{{2, 2, 100, 100, "l"}};
  const auto defaults = make_default_boxes(layers);
  GroundTruthObject g;
  g.box2d = {70, 70, 4, 4};  // far too small for 0.5 with any prior
  const auto m = match_default_boxes(defaults, std::vector{g});
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0], (LocationMatch{0, 1, 1, 0}));
}

TEST(MatchDefaultBoxes, EqualsBruteForce)
{
  SplitMix64 rng(41);
  const auto layers = make_feature_maps(kDeskGrid, 75, 75);
  const auto defaults = make_default_boxes(layers);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<GroundTruthObject> gts(1 + rng.below(4));
    for (auto & g : gts) {
      const double w = rng.uniform(3, 60);
      const double h = rng.uniform(3, 60);
      g.box2d = {rng.uniform(-5, 75 - w + 5), rng.uniform(-5, 75 - h + 5), w, h};
    }
    ASSERT_EQ(match_default_boxes(defaults, gts), oracle::flags(defaults, gts, 0.5));
  }
}

TEST(SelectPositive, ExactTemplateWins)
{
  const auto t = filler({1.2, 0.8, 0.6}, 7);
  const auto got = select_positive_anchor(location_anchors(t), gt_with_size(1.2, 0.8, 0.6));
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(got->template_id, 7);
  EXPECT_NEAR(got->iou, 1.0, 1e-12);
}

TEST(SelectPositive, TinyTemplatesRejected)
{
  const auto t = filler({0.2, 0.2, 0.2}, 0);
  EXPECT_FALSE(select_positive_anchor(location_anchors(t), gt_with_size(3, 3, 2)).has_value());
}

TEST(SelectPositive, NestedVolumeRatio)
{
  const auto t = filler({2.0, 1.0, 0.5}, 5);
  const auto got = select_positive_anchor(location_anchors(t), gt_with_size(1.9, 0.9, 0.5));
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(got->template_id, 5);
  EXPECT_NEAR(got->iou, 1.9 * 0.9 * 0.5 / (2.0 * 1.0 * 0.5), 1e-12);
}

TEST(SelectPositive, ThresholdIsStrict)
{
  const auto t = filler({5.0, 5.0, 1.0}, 2);
  const auto at = gt_with_size(4.5, 4.0, 1.0);
  const auto anchors = location_anchors(t);
  Box3D aligned = anchors[2].box;
  aligned.cx = at.box3d.cx;
  aligned.cy = at.box3d.cy;
  aligned.cz = at.box3d.cz;
  ASSERT_EQ(iou3d(aligned, at.box3d), 0.72);
  EXPECT_FALSE(select_positive_anchor(anchors, at).has_value());
  const auto above = gt_with_size(4.5, 4.0 * (0.720001 / 0.72), 1.0);
  const auto got = select_positive_anchor(anchors, above);
  ASSERT_TRUE(got.has_value());
  EXPECT_EQ(got->template_id, 2);
}

TEST(SelectPositive, SkipsInvalidAnchors)
{
  auto anchors = location_anchors(filler({1.2, 0.8, 0.6}, 7));
  anchors[7].valid = false;
  EXPECT_FALSE(select_positive_anchor(anchors, gt_with_size(1.2, 0.8, 0.6)).has_value());
}

TEST(HardNegatives, CountBoundAndOrder)
{
  std::vector<Anchor> anchors(20);
  for (auto & a : anchors) {
    a.valid = true;
  }
  std::vector<double> loss(20);
  for (std::size_t i = 0; i < loss.size(); ++i) {
    loss[i] = static_cast<double>((i * 7) % 20);
  }
  const std::vector<Positive> pos{{3, 0, 1}, {11, 0, 1}};
  const auto neg = mine_hard_negatives(loss, pos, anchors, 3.0);
  ASSERT_EQ(neg.size(), 6u);
  for (std::size_t k = 1; k < neg.size(); ++k) {
    EXPECT_GT(loss[neg[k - 1]], loss[neg[k]]);
  }
  for (const auto i : neg) {
    EXPECT_NE(i, 3u);
    EXPECT_NE(i, 11u);
  }
}

TEST(HardNegatives, TiesByIndex)
{
  std::vector<Anchor> anchors(30);
  for (auto & a : anchors) {
    a.valid = true;
  }
  anchors[1].valid = false;
  const std::vector<double> loss(30, 0.5);
  const std::vector<Positive> pos{{0, 0, 1}, {4, 0, 1}};
  const auto neg = mine_hard_negatives(loss, pos, anchors, 3.0);
  EXPECT_EQ(neg, (std::vector<std::size_t>{2, 3, 5, 6, 7, 8}));
}

TEST(HardNegatives, NoPositivesNoNegatives)
{
  std::vector<Anchor> anchors(5);
  EXPECT_TRUE(mine_hard_negatives(std::vector<double>(5, 1.0), {}, anchors).empty());
}

TEST(HardNegatives, EqualsFullSort)
{
  SplitMix64 rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 500 + rng.below(9500);
    std::vector<Anchor> anchors(n);
    std::vector<double> loss(n);
    for (std::size_t i = 0; i < n; ++i) {
      anchors[i].valid = rng.uniform() > 0.1;
      loss[i] = std::round(rng.uniform() * 50) / 10;  // plenty of ties
    }
    std::vector<Positive> pos;
    for (std::size_t k = 0, m = 1 + rng.below(20); k < m; ++k) {
      const std::size_t i = rng.below(n);
      if (anchors[i].valid &&
          std::none_of(pos.begin(), pos.end(), [&](const Positive & p) { return p.anchor == i; })) {
        pos.push_back({i, 0, 1});
      }
    }
    std::sort(pos.begin(), pos.end(), [](auto & a, auto & b) { return a.anchor < b.anchor; });
    const double ratio = trial % 3 == 0 ? 2.5 : 3.0;
    ASSERT_EQ(mine_hard_negatives(loss, pos, anchors, ratio), oracle::negatives(loss, pos, anchors, ratio));
  }
}

TEST(BuildMatch, EmptyGts)
{
  TwoObjectFixture f;
  const auto m = build_match(f.anchors, f.defaults, {});
  EXPECT_EQ(m.num_positives(), 0u);
  EXPECT_TRUE(m.negatives.empty());
}

TEST(BuildMatch, TwoObjectScene)
{
  TwoObjectFixture f;
  const auto flagged = match_default_boxes(f.defaults, f.gts);
  ASSERT_EQ(flagged.size(), 2u);
  EXPECT_EQ(flagged[0], (LocationMatch{0, 4, 4, 1}));
  EXPECT_EQ(flagged[1], (LocationMatch{1, 2, 1, 0}));

  const AnchorSet before = f.anchors;
  const auto m = build_match(f.anchors, f.defaults, f.gts);
  ASSERT_EQ(m.num_positives(), 2u);
  const auto & stand = f.anchors.anchors[m.positives[0].anchor];
  const auto & bed = f.anchors.anchors[m.positives[1].anchor];
  EXPECT_EQ(m.positives[0].gt, 1u);
  EXPECT_EQ(m.positives[0].class_id, 2);
  EXPECT_EQ(stand.layer, 0u);
  EXPECT_EQ(stand.row, 4);
  EXPECT_EQ(stand.col, 4);
  EXPECT_EQ(stand.template_id, 9);
  EXPECT_EQ(m.positives[1].gt, 0u);
  EXPECT_EQ(bed.layer, 1u);
  EXPECT_EQ(bed.row, 2);
  EXPECT_EQ(bed.col, 1);
  EXPECT_EQ(bed.template_id, 4);

  // stored centers stay where the depth put them
  for (const auto & p : m.positives) {
    const Anchor & a = f.anchors.anchors[p.anchor];
    const PixelRect block = block_for_location(f.layers[a.layer], a.row, a.col);
    const Vec3 c = pixel_to_world(f.cam, block.center_u(), block.center_v(), 3.0);
    EXPECT_EQ(a.box.cx, c.x);
    EXPECT_EQ(a.box.cy, c.y);
    EXPECT_EQ(a.box.cz, c.z);
    EXPECT_EQ(a.box, before.anchors[p.anchor].box);
  }
}

TEST(BuildMatch, ConflictPrefersBestIouThenLowestIndex)
{
  TwoObjectFixture f;
  // both objects claim the bed location; the night stand fits its template better
  auto gts = f.gts;
  gts[1].box2d = gts[0].box2d;
  gts[1].box3d = {0, 0, 3, 0.5, 0.45, 0.55, 0};
  auto m = build_match(f.anchors, f.defaults, gts);
  ASSERT_EQ(m.num_positives(), 1u);
  EXPECT_EQ(m.positives[0].gt, 1u);
  // identical objects: lower index wins
  gts[1] = gts[0];
  gts[1].class_id = 7;
  m = build_match(f.anchors, f.defaults, gts);
  ASSERT_EQ(m.num_positives(), 1u);
  EXPECT_EQ(m.positives[0].gt, 0u);
}

TEST(BuildMatch, EqualsTripleEnumeration)
{
  SplitMix64 rng(43);
  const auto layers = make_feature_maps(kDeskGrid, 75, 75);
  const auto defaults = make_default_boxes(layers);
  const CameraModel cam(60, 60, 37.5, 37.5, tilt_rotation(0.15));
  std::vector<SizeTemplate> templates;
  for (int i = 0; i < 13; ++i) {
    templates.push_back({rng.uniform(0.3, 2.0), rng.uniform(0.3, 2.0), rng.uniform(0.3, 1.5)});
  }
  for (int trial = 0; trial < 40; ++trial) {
    DepthImage depth(75, 75);
    for (auto & z : depth.meters) {
      z = rng.uniform() < 0.1 ? 0.0 : rng.uniform(1.0, 6.0);
    }
    const AnchorSet set = generate_anchor_set(layers, depth, cam, templates);
    std::vector<GroundTruthObject> gts(1 + rng.below(5));
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const auto & t = templates[rng.below(13)];
      gts[j].class_id = 1 + static_cast<int>(rng.below(5));
      gts[j].box3d = {rng.uniform(-2, 2), rng.uniform(1, 5), rng.uniform(-1, 1),
                      t.w * rng.uniform(0.85, 1.1), t.l * rng.uniform(0.85, 1.1),
                      t.h * rng.uniform(0.85, 1.1), rng.uniform(-0.3, 0.3)};
      const double w = rng.uniform(5, 50);
      const double h = rng.uniform(5, 50);
      gts[j].box2d = {rng.uniform(0, 75 - w), rng.uniform(0, 75 - h), w, h};
      gts[j].id = j;
    }
    const auto m = build_match(set, defaults, gts);
    ASSERT_EQ(m.positives, oracle::positives(set, defaults, gts));
    for (const auto & p : m.positives) {
      ASSERT_TRUE(set.anchors[p.anchor].valid);
    }
  }
}

TEST(BuildMatch, TranslationInvariantSelection)
{
  TwoObjectFixture f;
  const auto m = build_match(f.anchors, f.defaults, f.gts);
  AnchorSet moved = f.anchors;
  auto gts = f.gts;
  for (auto & a : moved.anchors) {
    a.box.cx += 3.5;
    a.box.cy -= 1.25;
    a.box.cz += 0.5;
  }
  for (auto & g : gts) {
    g.box3d.cx += 3.5;
    g.box3d.cy -= 1.25;
    g.box3d.cz += 0.5;
  }
  EXPECT_EQ(build_match(moved, f.defaults, gts).positives, m.positives);
}
