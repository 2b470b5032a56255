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

#ifndef SSD3D__SCENE_HPP_
#define SSD3D__SCENE_HPP_

#include "ssd3d/anchors.hpp"
#include "ssd3d/camera.hpp"
#include "ssd3d/error.hpp"
#include "ssd3d/image_io.hpp"
#include "ssd3d/matching.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace ssd3d
{

namespace fs = std::filesystem;
using json = nlohmann::json;

/// One registered RGB-D sample with calibration and (optional) annotations.
struct SceneRecord
{
  std::string name;
  RgbImage8 rgb;
  GrayImage16 depth_mm;
  CameraModel camera{1.0, 1.0, 0.0, 0.0};
  std::vector<GroundTruthObject> objects;
  std::string rgb_file{"rgb.ppm"};
  std::string depth_file{"depth.pgm"};

  int width() const { return depth_mm.width; }
  int height() const { return depth_mm.height; }
};

/// Millimeter depth to meters; 0 stays 0 (missing).
inline DepthImage depth_to_meters(const GrayImage16 & mm)
{
  DepthImage d(mm.width, mm.height);
  for (std::size_t i = 0; i < mm.pixels.size(); ++i) {
    d.meters[i] = static_cast<double>(mm.pixels[i]) / 1000.0;
  }
  return d;
}

inline json camera_to_json(const CameraModel & cam)
{
  return {
    {"fx", cam.fx()}, {"fy", cam.fy()}, {"ox", cam.ox()}, {"oy", cam.oy()},
    {"r_tilt", cam.r_tilt()}};
}

inline CameraModel camera_from_json(const json & j)
{
  try {
    const auto & r = j.at("r_tilt");
    if (!r.is_array() || r.size() != 9) {
      throw Error(ErrorCode::CalibrationInvalid, "r_tilt must hold 9 numbers");
    }
    Mat3 m{};
    for (std::size_t i = 0; i < 9; ++i) {
      if (!r[i].is_number()) {
        throw Error(ErrorCode::CalibrationInvalid, "r_tilt must hold 9 numbers");
      }
      m[i] = r[i].get<double>();
    }
    return CameraModel(
      j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("ox").get<double>(),
      j.at("oy").get<double>(), m);
  } catch (const json::exception & e) {
    throw Error(ErrorCode::ParseError, std::string("camera: ") + e.what());
  }
}

inline json box3d_to_json(const Box3D & b)
{
  return {{"c", {b.cx, b.cy, b.cz}}, {"s", {b.w, b.l, b.h}}, {"theta", b.theta}};
}

inline Box3D box3d_from_json(const json & j)
{
  const auto & c = j.at("c");
  const auto & s = j.at("s");
  if (c.size() != 3 || s.size() != 3) {
    throw Error(ErrorCode::ParseError, "box3d needs 3-element c and s");
  }
  Box3D b{c[0].get<double>(), c[1].get<double>(), c[2].get<double>(), s[0].get<double>(),
          s[1].get<double>(), s[2].get<double>(), j.at("theta").get<double>()};
  if (!is_valid(b)) {
    throw Error(ErrorCode::ParseError, "box3d extents must be positive and finite");
  }
  return b;
}

inline json object_to_json(const GroundTruthObject & o)
{
  return {
    {"class", o.class_id},
    {"box2d", {o.box2d.x, o.box2d.y, o.box2d.w, o.box2d.h}},
    {"box3d", box3d_to_json(o.box3d)}};
}

inline GroundTruthObject object_from_json(const json & j, std::size_t id)
{
  GroundTruthObject o;
  o.id = id;
  o.class_id = j.at("class").get<int>();
  if (o.class_id <= kBackgroundClass) {
    throw Error(ErrorCode::ParseError, "object class must be a foreground index (>= 1)");
  }
  const auto & r = j.at("box2d");
  if (r.size() != 4) {
    throw Error(ErrorCode::ParseError, "box2d needs [x, y, w, h]");
  }
  o.box2d = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>(), r[3].get<double>()};
  if (!(o.box2d.w > 0.0) || !(o.box2d.h > 0.0)) {
    throw Error(ErrorCode::ParseError, "box2d must be non-empty");
  }
  o.box3d = box3d_from_json(j.at("box3d"));
  return o;
}

inline json scene_to_json(const SceneRecord & s)
{
  json objects = json::array();
  for (const auto & o : s.objects) {
    objects.push_back(object_to_json(o));
  }
  return {
    {"camera", camera_to_json(s.camera)},
    {"objects", objects},
    {"rgb", s.rgb_file},
    {"depth", s.depth_file}};
}

inline json read_json_file(const fs::path & path)
{
  std::ifstream is(path);
  if (!is) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  try {
    return json::parse(is);
  } catch (const json::exception & e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

/// Loads `dir/scene.json` (or a scene JSON path directly) and the images it names.
inline SceneRecord load_scene(const fs::path & where)
{
  const fs::path json_path = fs::is_directory(where) ? where / "scene.json" : where;
  const fs::path dir = json_path.parent_path();
  const json j = read_json_file(json_path);
  SceneRecord s;
  s.name = fs::is_directory(where) ? where.filename().string() : json_path.stem().string();
  try {
    s.camera = camera_from_json(j.at("camera"));
    s.rgb_file = j.value("rgb", std::string("rgb.ppm"));
    s.depth_file = j.value("depth", std::string("depth.pgm"));
    if (j.contains("objects")) {
      std::size_t id = 0;
      for (const auto & o : j.at("objects")) {
        s.objects.push_back(object_from_json(o, id++));
      }
    }
  } catch (const json::exception & e) {
    throw Error(ErrorCode::ParseError, json_path.string() + ": " + e.what());
  }
  s.depth_mm = read_pgm(dir / s.depth_file);
  s.rgb = read_rgb(dir / s.rgb_file);
  if (s.rgb.width != s.depth_mm.width || s.rgb.height != s.depth_mm.height) {
    throw Error(ErrorCode::SizeMismatch, "rgb and depth images differ in size");
  }
  return s;
}

inline void write_text_file(const fs::path & path, const std::string & text)
{
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << text)) {
    throw Error(ErrorCode::IoError, "cannot write " + path.string());
  }
}

/// Writes scene.json plus the two images into `dir` (created if needed).
inline void save_scene(const SceneRecord & s, const fs::path & dir)
{
  fs::create_directories(dir);
  write_text_file(dir / "scene.json", scene_to_json(s).dump(2) + "\n");
  write_pgm(dir / s.depth_file, s.depth_mm);
  write_rgb(dir / s.rgb_file, s.rgb);
}

/// Manifest: {"scenes": [dir, ...]} with paths relative to the manifest.
inline std::vector<fs::path> load_manifest(const fs::path & path)
{
  const json j = read_json_file(path);
  std::vector<fs::path> out;
  try {
    for (const auto & e : j.at("scenes")) {
      const fs::path p = e.get<std::string>();
      out.push_back(p.is_absolute() ? p : path.parent_path() / p);
    }
  } catch (const json::exception & e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return out;
}

inline void save_manifest(const fs::path & path, const std::vector<std::string> & scene_dirs)
{
  write_text_file(path, json{{"scenes", scene_dirs}}.dump(2) + "\n");
}

}  // namespace ssd3d

#endif  // SSD3D__SCENE_HPP_
