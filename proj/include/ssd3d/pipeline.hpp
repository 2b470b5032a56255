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

#ifndef SSD3D__PIPELINE_HPP_
#define SSD3D__PIPELINE_HPP_

#include "ssd3d/anchors.hpp"
#include "ssd3d/error.hpp"
#include "ssd3d/eval.hpp"
#include "ssd3d/fit.hpp"
#include "ssd3d/kmedoids.hpp"
#include "ssd3d/loss.hpp"
#include "ssd3d/parallel.hpp"
#include "ssd3d/scene.hpp"
#include "ssd3d/synth.hpp"
#include "ssd3d/tinynet.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

namespace ssd3d
{

/// Default anchor sizes (w, l, h in meters): 13 k-medoids of the synthetic
/// indoor training extents, as written to data/templates_default.txt by
/// `ssd3d derive-templates`.
inline const std::vector<SizeTemplate> & default_templates()
{
  static const std::vector<SizeTemplate> t{
    {0.5389529062191715, 0.19992117577943758, 0.4232276280316001},
    {0.5166108129468312, 0.4003324175031339, 0.24115437017983923},
    {0.3824278147662446, 0.369673553008364, 0.54432849311205},
    {0.9742465601901668, 0.14889144276177524, 0.6160776059581705},
    {0.8914452350245302, 0.10193804956878164, 2.222867274835526},
    {0.4970433337370557, 0.5941166195344577, 0.8440989087355755},
    {0.9433451426032432, 0.5182176534583383, 1.0252175656064502},
    {0.9637334371227301, 0.3094738433734422, 1.8267779535678688},
    {1.1827194039077908, 0.6598731619102299, 0.7463938234608776},
    {1.5583032901100324, 0.74085517852132, 0.6296542107134903},
    {1.8165572946065465, 0.5830602629003176, 0.8747019650849047},
    {1.8758137106014448, 0.9153576547157695, 0.8580757948453536},
    {1.998475320933083, 1.6309465979125333, 0.7560907256609409},
  };
  return t;
}

/// One chair standing in the synthetic room, sized close to a default
/// template so a single anchor can match it. The toy overfitting target.
inline SceneRecord make_toy_scene()
{
  const RoomConfig cfg;
  const auto & t = default_templates()[5];
  PlacedObject o;
  o.class_id = 5;
  o.box = {0.2, 3.0, 0.0, t.w * 0.95, t.l * 0.95, t.h * 0.95, 0.0};
  o.box.cz = -cfg.camera_height + 0.5 * o.box.h;
  const std::vector<PlacedObject> objects{o};
  return render_scene(cfg, objects, 1, "chair");
}

/// Shortest round-trip decimal form of a double.
inline std::string format_double(double v)
{
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

/// Template file: one "w l h" line per template, '#' starts a comment.
inline std::vector<SizeTemplate> parse_templates(std::istream & is)
{
  std::vector<SizeTemplate> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream ls(line);
    SizeTemplate t;
    if (!(ls >> t.w)) {
      continue;  // blank line
    }
    std::string extra;
    if (!(ls >> t.l >> t.h) || (ls >> extra)) {
      throw Error(ErrorCode::ParseError, "templates line " + std::to_string(lineno) + ": expected 'w l h'");
    }
    if (!(t.w > 0.0 && t.l > 0.0 && t.h > 0.0)) {
      throw Error(ErrorCode::ParseError, "templates line " + std::to_string(lineno) + ": extents must be positive");
    }
    out.push_back(t);
  }
  if (out.size() != kAnchorsPerLocation) {
    throw Error(
      ErrorCode::TemplateCountMismatch, "template file holds " + std::to_string(out.size()) +
                                          " entries, expected 13");
  }
  return out;
}

inline std::vector<SizeTemplate> load_templates(const fs::path & path)
{
  std::ifstream is(path);
  if (!is) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  return parse_templates(is);
}

inline std::string format_templates(std::span<const SizeTemplate> t, const std::string & comment = "")
{
  std::string out = "# anchor size templates: w l h (meters)\n";
  if (!comment.empty()) {
    out += "# " + comment + "\n";
  }
  for (const auto & s : t) {
    out += format_double(s.w) + " " + format_double(s.l) + " " + format_double(s.h) + "\n";
  }
  return out;
}

inline constexpr double kDefaultScoreThreshold = 0.55;

struct RunConfig
{
  fs::path templates_path;  ///< empty: built-in defaults
  std::size_t c_total{kIndoorClassTotal};
  double nms_threshold{kDefaultNmsThreshold};
  double score_threshold{kDefaultScoreThreshold};
  bool per_class_nms{true};
  std::string topology{"desk"};
  std::uint64_t seed{7};
  std::size_t threads{1};
};

inline void validate(const RunConfig & c)
{
  const auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(c.nms_threshold) || !in_unit(c.score_threshold)) {
    throw Error(ErrorCode::InvalidArgument, "thresholds must lie in (0, 1)");
  }
  if (c.c_total < 2) {
    throw Error(ErrorCode::InvalidArgument, "c_total must count background plus >= 1 class");
  }
  if (c.topology != "desk" && c.topology != "vgg16") {
    throw Error(ErrorCode::InvalidArgument, "topology must be 'desk' or 'vgg16'");
  }
}

inline RunConfig load_config(const fs::path & path)
{
  const json j = read_json_file(path);
  RunConfig c;
  try {
    if (j.contains("templates")) {
      const fs::path t = j.at("templates").get<std::string>();
      c.templates_path = t.is_absolute() ? t : path.parent_path() / t;
    }
    c.c_total = j.value("c_total", c.c_total);
    c.nms_threshold = j.value("nms_threshold", c.nms_threshold);
    c.score_threshold = j.value("score_threshold", c.score_threshold);
    c.per_class_nms = j.value("per_class_nms", c.per_class_nms);
    c.topology = j.value("topology", c.topology);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception & e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  validate(c);
  return c;
}

inline std::vector<SizeTemplate> resolve_templates(const RunConfig & c)
{
  return c.templates_path.empty() ? default_templates() : load_templates(c.templates_path);
}

inline NetworkTopology make_topology(const RunConfig & c)
{
  return c.topology == "vgg16" ? make_vgg16_topology() : make_desk_topology();
}

inline Network make_network(const RunConfig & c)
{
  validate(c);
  return make_network(make_topology(c), c.c_total, c.seed);
}

inline void save_network_file(const fs::path & path, const Network & net)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw Error(ErrorCode::IoError, "cannot write " + path.string());
  }
  save_network(os, net);
}

inline Network load_network_file(const fs::path & path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  return load_network(is);
}

/// Forward pass, per-anchor decode (valid anchors only), score threshold, then
/// 3D NMS. Every foreground class whose probability reaches the threshold
/// yields a candidate.
inline std::vector<Detection> detect(
  const SceneRecord & scene, const RunConfig & config, const Network & net,
  std::span<const SizeTemplate> templates)
{
  if (config.c_total != net.c_total) {
    throw Error(ErrorCode::InvalidArgument, "config c_total disagrees with the weights");
  }
  const auto [rgb, depth] = make_network_inputs(scene, net.topo.input_size);
  const auto heads = forward(net, rgb, depth, config.threads);
  const auto [scores, deltas] = split_heads(heads, net.c_total);
  const auto specs = tap_feature_maps(net, scene.width(), scene.height());
  const AnchorSet anchors =
    generate_anchor_set(specs, depth_to_meters(scene.depth_mm), scene.camera, templates);
  std::vector<Detection> candidates;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Anchor & a = anchors.anchors[i];
    if (!a.valid) {
      continue;
    }
    const auto p = softmax(scores.row(i));
    std::optional<Box3D> box;
    for (std::size_t c = 1; c < p.size(); ++c) {
      if (p[c] < config.score_threshold) {
        continue;
      }
      if (!box) {
        box = decode_box(deltas.delta(i), a);
      }
      if (is_valid(*box)) {
        candidates.push_back({*box, static_cast<int>(c), p[c]});
      }
    }
  }
  return nms3d(candidates, config.nms_threshold, config.per_class_nms);
}

inline json detection_to_json(const Detection & d)
{
  return {{"class", d.class_id}, {"score", d.score}, {"box3d", box3d_to_json(d.box)}};
}

/// One JSON object per line.
inline std::string format_detections_jsonl(std::span<const Detection> dets)
{
  std::string out;
  for (const auto & d : dets) {
    out += detection_to_json(d).dump() + "\n";
  }
  return out;
}

inline std::vector<Detection> parse_detections_jsonl(std::istream & is)
{
  std::vector<Detection> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    try {
      const json j = json::parse(line);
      out.push_back({box3d_from_json(j.at("box3d")), j.at("class").get<int>(), j.at("score").get<double>()});
    } catch (const json::exception & e) {
      throw Error(ErrorCode::ParseError, std::string("detections: ") + e.what());
    }
  }
  return out;
}

struct EvalReport
{
  std::vector<APResult> per_class;
  double map{0.0};
  std::vector<std::string> scene_names;
  std::vector<double> seconds_per_image;
};

using DetectorFn = std::function<std::vector<Detection>(const SceneRecord &)>;

/// Loads and runs every scene on a worker pool, then reduces in manifest order.
inline EvalReport evaluate_with(
  std::span<const fs::path> scenes, std::size_t c_total, const DetectorFn & detector,
  std::size_t threads = 1)
{
  if (scenes.empty()) {
    throw Error(ErrorCode::EmptyDataset, "manifest lists no scenes");
  }
  std::vector<std::vector<Detection>> dets(scenes.size());
  std::vector<std::vector<GroundTruthObject>> gts(scenes.size());
  EvalReport report;
  report.scene_names.resize(scenes.size());
  report.seconds_per_image.resize(scenes.size());
  parallel_for(scenes.size(), threads, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    const SceneRecord s = load_scene(scenes[i]);
    dets[i] = detector(s);
    const auto stop = std::chrono::steady_clock::now();
    gts[i] = s.objects;
    report.scene_names[i] = s.name;
    report.seconds_per_image[i] = std::chrono::duration<double>(stop - start).count();
  });
  report.per_class = evaluate_detections(dets, gts, c_total);
  report.map = mean_ap(report.per_class);
  return report;
}

inline EvalReport evaluate(
  std::span<const fs::path> scenes, const RunConfig & config, const Network & net,
  std::span<const SizeTemplate> templates)
{
  RunConfig inner = config;
  inner.threads = 1;
  return evaluate_with(
    scenes, config.c_total,
    [&](const SceneRecord & s) { return detect(s, inner, net, templates); }, config.threads);
}

inline std::string class_name(int class_id)
{
  if (class_id >= 1 && static_cast<std::size_t>(class_id) <= kIndoorClasses.size()) {
    return kIndoorClasses[static_cast<std::size_t>(class_id - 1)].name;
  }
  return "class" + std::to_string(class_id);
}

namespace detail
{

inline std::string fixed(double v, int digits = 6)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

/// Tab-separated AP table; classes without ground truth print "-".
inline std::string format_ap_report(const EvalReport & r)
{
  std::string out = "class_id\tname\tap\ttp\tfp\tgt\n";
  for (const auto & c : r.per_class) {
    out += std::to_string(c.class_id) + "\t" + class_name(c.class_id) + "\t" +
           (c.defined() ? detail::fixed(c.ap) : std::string("-")) + "\t" + std::to_string(c.tp) +
           "\t" + std::to_string(c.fp) + "\t" + std::to_string(c.gt_count) + "\n";
  }
  out += "mAP\t\t" + detail::fixed(r.map) + "\n";
  return out;
}

/// Tab-separated precision-recall points per class.
inline std::string format_pr_curves(const EvalReport & r)
{
  std::string out = "class_id\trank\tthreshold\tprecision\trecall\n";
  for (const auto & c : r.per_class) {
    for (std::size_t k = 0; k < c.curve.size(); ++k) {
      const auto & p = c.curve[k];
      out += std::to_string(c.class_id) + "\t" + std::to_string(k + 1) + "\t" +
             detail::fixed(p.threshold) + "\t" + detail::fixed(p.precision) + "\t" +
             detail::fixed(p.recall) + "\n";
    }
  }
  return out;
}

/// Wall-clock seconds per scene (load + detect). Kept apart from the AP report,
/// which is byte-reproducible.
inline std::string format_timings(const EvalReport & r)
{
  std::string out = "scene\tseconds\n";
  double total = 0.0;
  for (std::size_t i = 0; i < r.scene_names.size(); ++i) {
    out += r.scene_names[i] + "\t" + detail::fixed(r.seconds_per_image[i]) + "\n";
    total += r.seconds_per_image[i];
  }
  if (!r.scene_names.empty()) {
    out += "mean\t" + detail::fixed(total / static_cast<double>(r.scene_names.size())) + "\n";
  }
  return out;
}

inline constexpr std::size_t kTemplateCount = kAnchorsPerLocation;

/// k-medoids over the (w, l, h) of every ground-truth box.
inline std::vector<SizeTemplate> derive_templates(
  std::span<const Point3> sizes, std::size_t k = kTemplateCount, std::uint64_t seed = 7)
{
  if (sizes.size() < k) {
    throw Error(
      ErrorCode::InsufficientData,
      "need at least " + std::to_string(k) + " ground-truth boxes, have " + std::to_string(sizes.size()));
  }
  const auto r = kmedoids(sizes, k, seed);
  std::vector<SizeTemplate> out;
  for (const auto & m : r.medoids) {
    out.push_back({m[0], m[1], m[2]});
  }
  return out;
}

inline std::vector<Point3> collect_gt_sizes(std::span<const fs::path> scenes)
{
  std::vector<Point3> sizes;
  for (const auto & p : scenes) {
    for (const auto & o : load_scene(p).objects) {
      sizes.push_back({o.box3d.w, o.box3d.l, o.box3d.h});
    }
  }
  return sizes;
}

}  // namespace ssd3d

#endif  // SSD3D__PIPELINE_HPP_
