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

#include <cmath>
#include <vector>

using namespace ssd3d;

namespace
{

constexpr double kPi = oracle::kPi;

Box3D cube(double x = 0.0, double y = 0.0, double z = 0.0, double theta = 0.0)
{
  return {x, y, z, 1.0, 1.0, 1.0, theta};
}

}  // namespace

TEST(Volume, Products)
{
  EXPECT_DOUBLE_EQ(volume(cube()), 1.0);
  EXPECT_DOUBLE_EQ(volume(Box3D{0, 0, 0, 2, 3, 4, 0}), 24.0);
  EXPECT_DOUBLE_EQ(volume(Box3D{0, 0, 0, 0.5, 0.5, 2, 0}), 0.5);
}

TEST(Box, Validity)
{
  EXPECT_TRUE(is_valid(cube()));
  EXPECT_FALSE(is_valid(Box3D{0, 0, 0, 0, 1, 1, 0}));
  EXPECT_FALSE(is_valid(Box3D{0, 0, 0, 1, -1, 1, 0}));
  EXPECT_FALSE(is_valid(Box3D{0, 0, 0, 1, 1, std::nan(""), 0}));
}

TEST(Iou3d, IdenticalIsOne)
{
  const Box3D b{0.3, -1.2, 0.4, 1.7, 0.6, 2.2, 0.9};
  EXPECT_NEAR(iou3d(b, b), 1.0, 1e-9);
}

TEST(Iou3d, DisjointIsZero)
{
  EXPECT_EQ(iou3d(cube(), cube(10.0)), 0.0);
  // same footprint, separated in z
  EXPECT_EQ(iou3d(cube(), cube(0, 0, 1.5)), 0.0);
}

TEST(Iou3d, HalfOffsetCubes)
{
  const double v = iou3d(cube(), cube(0.5));
  EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(iou3d_oracle(cube(), cube(0.5), 200), 1.0 / 3.0, 1e-2);
}

TEST(Iou3d, RotatedSquare)
{
  const double v = iou3d(cube(), cube(0, 0, 0, kPi / 4));
  const double inter = 2.0 * (std::sqrt(2.0) - 1.0);
  EXPECT_NEAR(v, inter / (2.0 - inter), 1e-12);
  EXPECT_NEAR(v, 0.7071, 3e-3);
  EXPECT_NEAR(oracle::mc_iou(cube(), cube(0, 0, 0, kPi / 4)), v, 3e-3);
}

TEST(Iou3d, TouchingFacesGiveZero)
{
  EXPECT_EQ(iou3d(cube(), cube(1.0)), 0.0);
  EXPECT_EQ(iou3d(cube(), cube(0, 0, 1.0)), 0.0);
}

TEST(Iou3d, SymmetricExactly)
{
  SplitMix64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    const Box3D a = oracle::random_box(rng);
    const Box3D b = oracle::random_box(rng);
    ASSERT_EQ(iou3d(a, b), iou3d(b, a));
  }
}

TEST(Iou3d, RangeAndTranslationInvariance)
{
  SplitMix64 rng(12);
  for (int i = 0; i < 1000; ++i) {
    Box3D a = oracle::random_box(rng);
    Box3D b = oracle::random_box(rng);
    const double v = iou3d(a, b);
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
    const double tx = rng.uniform(-5, 5);
    const double ty = rng.uniform(-5, 5);
    const double tz = rng.uniform(-5, 5);
    for (Box3D * p : {&a, &b}) {
      p->cx += tx;
      p->cy += ty;
      p->cz += tz;
    }
    ASSERT_NEAR(iou3d(a, b), v, 1e-9);
  }
}

TEST(Iou3d, YawInvariance)
{
  SplitMix64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    Box3D a = oracle::random_box(rng);
    Box3D b = oracle::random_box(rng);
    const double v = iou3d(a, b);
    const double phi = rng.uniform(-kPi, kPi);
    const double px = rng.uniform(-2, 2);
    const double py = rng.uniform(-2, 2);
    for (Box3D * p : {&a, &b}) {
      const double dx = p->cx - px;
      const double dy = p->cy - py;
      p->cx = px + std::cos(phi) * dx - std::sin(phi) * dy;
      p->cy = py + std::sin(phi) * dx + std::cos(phi) * dy;
      p->theta = normalize_angle(p->theta + phi);
    }
    ASSERT_NEAR(iou3d(a, b), v, 1e-6);
  }
}

TEST(Iou3dOracle, IdenticalAndDisjoint)
{
  const Box3D b{0.1, 0.2, 0.3, 1.3, 0.7, 0.4, 0.5};
  EXPECT_EQ(iou3d_oracle(b, b, 64), 1.0);
  EXPECT_EQ(iou3d_oracle(cube(), cube(5.0), 64), 0.0);
}

TEST(Iou3dOracle, AgreesWithinTwoCells)
{
  SplitMix64 rng(14);
  for (int res : {64, 128, 256}) {
    for (int i = 0; i < 1000; ++i) {
      const Box3D a = oracle::random_box(rng);
      const Box3D b = oracle::random_box(rng);
      ASSERT_LE(std::abs(iou3d(a, b) - iou3d_oracle(a, b, res)), 2.0 / res) << "res " << res;
    }
  }
}

TEST(Iou3d, MonteCarloAgreement)
{
  SplitMix64 rng(15);
  for (int i = 0; i < 40; ++i) {
    const Box3D a = oracle::random_box(rng);
    const Box3D b = oracle::random_box(rng);
    ASSERT_NEAR(iou3d(a, b), oracle::mc_iou(a, b, 60, 100 + i), 3e-3);
  }
}

TEST(Clip, SquareAgainstItself)
{
  const auto f = footprint(cube());
  const auto poly = clip_convex(f, f);
  EXPECT_NEAR(polygon_area(poly), 1.0, 1e-12);
}

TEST(Nms3d, EmptyAndSingle)
{
  EXPECT_TRUE(nms3d({}, 0.25, true).empty());
  const std::vector<Detection> one{{cube(), 3, 0.7}};
  const auto out = nms3d(one, 0.25, true);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].box, one[0].box);
}

TEST(Nms3d, DuplicateSuppressed)
{
  const std::vector<Detection> d{{cube(), 1, 0.8}, {cube(), 1, 0.9}};
  const auto out = nms3d(d, kDefaultNmsThreshold, true);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].score, 0.9);
}

TEST(Nms3d, PerClassKeepsOtherClasses)
{
  const std::vector<Detection> d{{cube(), 1, 0.9}, {cube(), 2, 0.8}};
  EXPECT_EQ(nms3d(d, 0.25, true).size(), 2u);
  EXPECT_EQ(nms3d(d, 0.25, false).size(), 1u);
}

TEST(Nms3d, ThresholdIsInclusiveForKeep)
{
  // IoU exactly 1/3 survives a 1/3 threshold ("<= threshold" keeps)
  const std::vector<Detection> d{{cube(), 1, 0.9}, {cube(0.5), 1, 0.8}};
  EXPECT_EQ(nms3d(d, iou3d(cube(), cube(0.5)), true).size(), 2u);
  EXPECT_EQ(nms3d(d, 0.3, true).size(), 1u);
}

TEST(Nms3d, ThreeBoxesMatchGreedyReference)
{
  SplitMix64 rng(16);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Detection> d;
    for (int i = 0; i < 3; ++i) {
      Box3D b = cube(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), 0.0, rng.uniform(-kPi, kPi));
      d.push_back({b, 1, std::round(rng.uniform() * 4) / 4});
    }
    const auto got = nms3d(d, 0.25, true);
    const auto want = oracle::nms(d, 0.25, true);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      ASSERT_EQ(got[i].box, want[i].box);
    }
  }
}

TEST(Nms3d, RandomSetsMatchReferenceAndInvariants)
{
  SplitMix64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> d;
    const int n = 1 + static_cast<int>(rng.below(25));
    for (int i = 0; i < n; ++i) {
      d.push_back({oracle::random_box(rng, 0.3, 1.5, 1.0), 1 + static_cast<int>(rng.below(3)),
                   std::round(rng.uniform() * 10) / 10});
    }
    const bool per_class = trial % 2 == 0;
    const auto got = nms3d(d, 0.25, per_class);
    const auto want = oracle::nms(d, 0.25, per_class);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      ASSERT_EQ(got[i].box, want[i].box);
      ASSERT_EQ(got[i].class_id, want[i].class_id);
      if (i > 0) {
        ASSERT_GE(got[i - 1].score, got[i].score);
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (!per_class || got[i].class_id == got[j].class_id) {
          ASSERT_LE(iou3d(got[i].box, got[j].box), 0.25);
        }
      }
    }
  }
}
