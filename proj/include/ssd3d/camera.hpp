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

#ifndef SSD3D__CAMERA_HPP_
#define SSD3D__CAMERA_HPP_

#include "ssd3d/error.hpp"

#include <array>
#include <cmath>
#include <string>

namespace ssd3d
{

struct Vec3
{
  double x{0.0};
  double y{0.0};
  double z{0.0};

  friend bool operator==(const Vec3 &, const Vec3 &) = default;
};

/// Row-major 3x3 matrix.
using Mat3 = std::array<double, 9>;

inline constexpr Mat3 kIdentity3{1, 0, 0, 0, 1, 0, 0, 0, 1};

inline Vec3 mul(const Mat3 & m, const Vec3 & v)
{
  return {
    m[0] * v.x + m[1] * v.y + m[2] * v.z,
    m[3] * v.x + m[4] * v.y + m[5] * v.z,
    m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

/// m^T v
inline Vec3 mul_transposed(const Mat3 & m, const Vec3 & v)
{
  return {
    m[0] * v.x + m[3] * v.y + m[6] * v.z,
    m[1] * v.x + m[4] * v.y + m[7] * v.z,
    m[2] * v.x + m[5] * v.y + m[8] * v.z};
}

inline double determinant(const Mat3 & m)
{
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

inline constexpr double kRotationTolerance = 1e-6;

/// True when m is a proper rotation: max |m m^T - I| and |det - 1| within tolerance.
inline bool is_rotation(const Mat3 & m, double tol = kRotationTolerance)
{
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (int k = 0; k < 3; ++k) {
        dot += m[3 * i + k] * m[3 * j + k];
      }
      const double expected = i == j ? 1.0 : 0.0;
      if (!(std::abs(dot - expected) <= tol)) {
        return false;
      }
    }
  }
  return std::abs(determinant(m) - 1.0) <= tol;
}

/// Pinhole intrinsics plus the camera-to-world tilt rotation. Validated on
/// construction and immutable afterwards.
class CameraModel
{
public:
  CameraModel(double fx, double fy, double ox, double oy, const Mat3 & r_tilt = kIdentity3)
  : fx_(fx), fy_(fy), ox_(ox), oy_(oy), r_tilt_(r_tilt)
  {
    if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
      throw Error(ErrorCode::CalibrationInvalid, "focal lengths must be positive");
    }
    if (!std::isfinite(ox) || !std::isfinite(oy)) {
      throw Error(ErrorCode::CalibrationInvalid, "principal point must be finite");
    }
    if (!is_rotation(r_tilt)) {
      throw Error(ErrorCode::CalibrationInvalid, "r_tilt is not an orthonormal rotation");
    }
  }

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double ox() const { return ox_; }
  double oy() const { return oy_; }
  const Mat3 & r_tilt() const { return r_tilt_; }

  friend bool operator==(const CameraModel &, const CameraModel &) = default;

private:
  double fx_;
  double fy_;
  double ox_;
  double oy_;
  Mat3 r_tilt_;
};

struct PixelDepth
{
  double u{0.0};  ///< column
  double v{0.0};  ///< row
  double z{0.0};  ///< camera-frame depth (meters)
};

/// Back-projects pixel (u, v) at depth z: R_tilt * (z (u - ox) / fx, z (v - oy) / fy, z).
inline Vec3 pixel_to_world(const CameraModel & cam, double u, double v, double z)
{
  if (!(z > 0.0)) {
    throw Error(ErrorCode::NonPositiveDepth, "depth must be > 0, got " + std::to_string(z));
  }
  const Vec3 cam_pt{z * (u - cam.ox()) / cam.fx(), z * (v - cam.oy()) / cam.fy(), z};
  return mul(cam.r_tilt(), cam_pt);
}

/// Inverse of pixel_to_world.
inline PixelDepth world_to_pixel(const CameraModel & cam, const Vec3 & p)
{
  const Vec3 c = mul_transposed(cam.r_tilt(), p);
  if (!(c.z > 0.0)) {
    throw Error(ErrorCode::BehindCamera, "point is not in front of the camera");
  }
  return {c.x * cam.fx() / c.z + cam.ox(), c.y * cam.fy() / c.z + cam.oy(), c.z};
}

/// Rotation taking the conventional camera frame (x right, y down, z forward)
/// into a z-up world frame, with the camera pitched down by `pitch` radians and
/// rolled by `roll` radians.
inline Mat3 tilt_rotation(double pitch, double roll = 0.0)
{
  // camera -> level camera: undo pitch about x, roll about z
  const double cp = std::cos(pitch), sp = std::sin(pitch);
  const double cr = std::cos(roll), sr = std::sin(roll);
  const Mat3 rx{1, 0, 0, 0, cp, sp, 0, -sp, cp};
  const Mat3 rz{cr, -sr, 0, sr, cr, 0, 0, 0, 1};
  // level camera -> world: x -> x, z(forward) -> y, y(down) -> -z
  const Mat3 axes{1, 0, 0, 0, 0, 1, 0, -1, 0};
  const auto matmul = [](const Mat3 & a, const Mat3 & b) {
    Mat3 out{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        for (int k = 0; k < 3; ++k) {
          out[3 * i + j] += a[3 * i + k] * b[3 * k + j];
        }
      }
    }
    return out;
  };
  return matmul(axes, matmul(rx, rz));
}

}  // namespace ssd3d

#endif  // SSD3D__CAMERA_HPP_
