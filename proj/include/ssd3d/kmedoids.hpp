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

#ifndef SSD3D__KMEDOIDS_HPP_
#define SSD3D__KMEDOIDS_HPP_

#include "ssd3d/error.hpp"
#include "ssd3d/numeric.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace ssd3d
{

using Point3 = std::array<double, 3>;

inline double euclidean(const Point3 & a, const Point3 & b)
{
  return std::sqrt(
    (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

/// Sum over points of the distance to the nearest medoid.
inline double kmedoids_cost(std::span<const Point3> points, std::span<const Point3> medoids)
{
  double cost = 0.0;
  for (const auto & p : points) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto & m : medoids) {
      best = std::min(best, euclidean(p, m));
    }
    cost += best;
  }
  return cost;
}

struct KMedoidsResult
{
  std::vector<Point3> medoids;  ///< sorted by product of coordinates, then lexicographically
  double cost{0.0};
};

/// k-medoids under Euclidean distance: seeded k-medoids++ initialization on the
/// lexicographically sorted input, then PAM swaps (best improving swap per
/// pass) until no swap lowers the cost. Sorting first makes the result
/// independent of input order. Requires at least k distinct points.
inline KMedoidsResult kmedoids(std::span<const Point3> input, std::size_t k, std::uint64_t seed)
{
  std::vector<Point3> pts(input.begin(), input.end());
  std::sort(pts.begin(), pts.end());
  std::vector<Point3> distinct = pts;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (k == 0 || distinct.size() < k) {
    throw Error(
      ErrorCode::InsufficientData, "need at least " + std::to_string(k) + " distinct sizes, have " +
                                     std::to_string(distinct.size()));
  }
  const std::size_t n = pts.size();
  SplitMix64 rng(seed);

  std::vector<std::size_t> med;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  const auto absorb = [&](std::size_t m) {
    med.push_back(m);
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], euclidean(pts[i], pts[m]));
    }
  };
  absorb(static_cast<std::size_t>(rng.below(n)));
  while (med.size() < k) {
    double total = 0.0;
    for (const double d : nearest) {
      total += d * d;
    }
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (nearest[i] <= 0.0) {
        continue;
      }
      acc += nearest[i] * nearest[i];
      pick = i;
      if (acc > target) {
        break;
      }
    }
    absorb(pick);
  }

  const auto assign = [&](std::vector<double> & d1, std::vector<double> & d2,
                          std::vector<std::size_t> & owner) {
    for (std::size_t i = 0; i < n; ++i) {
      d1[i] = d2[i] = std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < med.size(); ++m) {
        const double d = euclidean(pts[i], pts[med[m]]);
        if (d < d1[i]) {
          d2[i] = d1[i];
          d1[i] = d;
          owner[i] = m;
        } else if (d < d2[i]) {
          d2[i] = d;
        }
      }
    }
  };
  std::vector<double> d1(n), d2(n);
  std::vector<std::size_t> owner(n, 0);
  for (;;) {
    assign(d1, d2, owner);
    double cost = 0.0;
    for (const double d : d1) {
      cost += d;
    }
    double best_delta = 0.0;
    std::size_t best_m = k;
    std::size_t best_o = n;
    for (std::size_t o = 0; o < n; ++o) {
      const bool duplicate = std::any_of(med.begin(), med.end(), [&](std::size_t m) {
        return pts[m] == pts[o];
      });
      if (duplicate) {
        continue;
      }
      for (std::size_t m = 0; m < med.size(); ++m) {
        double delta = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double dio = euclidean(pts[i], pts[o]);
          const double now = owner[i] == m ? std::min(d2[i], dio) : std::min(d1[i], dio);
          delta += now - d1[i];
        }
        if (delta < best_delta - 1e-12 * std::max(1.0, cost)) {
          best_delta = delta;
          best_m = m;
          best_o = o;
        }
      }
    }
    if (best_o == n) {
      break;
    }
    med[best_m] = best_o;
  }

  KMedoidsResult r;
  for (const std::size_t m : med) {
    r.medoids.push_back(pts[m]);
  }
  std::sort(r.medoids.begin(), r.medoids.end(), [](const Point3 & a, const Point3 & b) {
    const double va = a[0] * a[1] * a[2];
    const double vb = b[0] * b[1] * b[2];
    return va != vb ? va < vb : a < b;
  });
  r.cost = kmedoids_cost(pts, r.medoids);
  return r;
}

}  // namespace ssd3d

#endif  // SSD3D__KMEDOIDS_HPP_
