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

#ifndef SSD3D__NUMERIC_HPP_
#define SSD3D__NUMERIC_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ssd3d
{

/// Wraps an angle into [-pi, pi).
inline double normalize_angle(double a)
{
  constexpr double two_pi = 2.0 * std::numbers::pi;
  if (a >= -std::numbers::pi && a < std::numbers::pi) {
    return a;
  }
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r < 0.0) {
    r += two_pi;
  }
  r -= std::numbers::pi;
  // fmod rounding can land exactly on +pi
  if (r >= std::numbers::pi) {
    r -= two_pi;
  }
  return r;
}

/// Neumaier compensated accumulator. Sums agree to ~1 ulp regardless of order.
class CompensatedSum
{
public:
  void add(double x)
  {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }

  CompensatedSum & operator+=(double x)
  {
    add(x);
    return *this;
  }

  double value() const { return sum_ + comp_; }

private:
  double sum_{0.0};
  double comp_{0.0};
};

/// splitmix64, a portable bit-reproducible generator used for all seeded data.
class SplitMix64
{
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next()
  {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }

private:
  std::uint64_t state_;
};

/// Derives an independent stream seed from a base seed and a salt.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt)
{
  SplitMix64 g(base ^ (salt * 0xd1b54a32d192ed03ULL));
  return g.next();
}

}  // namespace ssd3d

#endif  // SSD3D__NUMERIC_HPP_
