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

#include "ssd3d/ssd3d.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace ssd3d;

namespace
{

RunConfig config_or_default(const std::string & path)
{
  return path.empty() ? RunConfig{} : load_config(path);
}

void write_or_print(const std::string & path, const std::string & text)
{
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_text_file(path, text);
  }
}

Network weights_or_init(const std::string & path, const RunConfig & config)
{
  if (path.empty()) {
    std::cerr << "note: no --weights given, using seeded initial weights (seed " << config.seed << ")\n";
    return make_network(config);
  }
  Network net = load_network_file(path);
  if (net.c_total != config.c_total) {
    throw Error(
      ErrorCode::InvalidArgument, "weights hold " + std::to_string(net.c_total) +
                                    " classes, config says " + std::to_string(config.c_total));
  }
  return net;
}

int run_detect(
  const std::string & scene_dir, const std::string & config_path, const std::string & weights,
  const std::string & out, std::size_t threads)
{
  RunConfig config = config_or_default(config_path);
  if (threads > 0) {
    config.threads = threads;
  }
  const Network net = weights_or_init(weights, config);
  const SceneRecord scene = load_scene(scene_dir);
  const auto dets = detect(scene, config, net, resolve_templates(config));
  write_or_print(out, format_detections_jsonl(dets));
  std::cerr << dets.size() << " detections\n";
  return 0;
}

struct EvaluateArgs
{
  std::string manifest;
  std::string config;
  std::string weights;
  std::string out;
  std::string pr_out;
  std::string timing_out;
  std::size_t threads{0};
};

int run_evaluate(const EvaluateArgs & a)
{
  RunConfig config = config_or_default(a.config);
  if (a.threads > 0) {
    config.threads = a.threads;
  }
  const Network net = weights_or_init(a.weights, config);
  const auto scenes = load_manifest(a.manifest);
  const EvalReport r = evaluate(scenes, config, net, resolve_templates(config));
  write_or_print(a.out, format_ap_report(r));
  if (!a.pr_out.empty()) {
    write_text_file(a.pr_out, format_pr_curves(r));
  }
  if (!a.timing_out.empty()) {
    write_text_file(a.timing_out, format_timings(r));
  }
  return 0;
}

int run_derive_templates(
  const std::string & manifest, std::size_t synthetic, const std::string & out, std::size_t k,
  std::uint64_t seed)
{
  std::vector<Point3> sizes;
  std::string comment;
  if (!manifest.empty()) {
    sizes = collect_gt_sizes(load_manifest(manifest));
    comment = "k-medoids over " + std::to_string(sizes.size()) + " ground-truth boxes";
  } else {
    // sizes drawn from the built-in class table; seed 2026 with 600 samples
    // reproduces the compiled-in defaults
    sizes = sample_training_sizes(synthetic, 2026);
    comment = "k-medoids over " + std::to_string(synthetic) + " synthetic indoor extents";
  }
  const auto t = derive_templates(sizes, k, seed);
  write_or_print(out, format_templates(t, comment));
  return 0;
}

int run_synth(
  const std::string & out, std::size_t scenes, std::size_t objects, std::uint64_t seed, bool toy)
{
  std::vector<std::string> names;
  if (toy) {
    save_scene(make_toy_scene(), fs::path(out) / "chair");
    names.push_back("chair");
  } else {
    for (std::size_t i = 0; i < scenes; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "scene%03zu", i);
      save_scene(make_random_scene(mix_seed(seed, i), objects, {}, name), fs::path(out) / name);
      names.push_back(name);
    }
  }
  save_manifest(fs::path(out) / "manifest.json", names);
  std::cerr << "wrote " << names.size() << " scene(s) and manifest.json to " << out << "\n";
  return 0;
}

int run_init_weights(const std::string & config_path, const std::string & out)
{
  const RunConfig config = config_or_default(config_path);
  save_network_file(out, make_network(config));
  return 0;
}

struct FitArgs
{
  std::string scene;
  std::string config;
  std::string weights;
  std::string out;
  std::string trace_out;
  std::size_t steps{500};
  double lr{0.07};
  std::size_t threads{0};
};

int run_fit(const FitArgs & a)
{
  RunConfig config = config_or_default(a.config);
  if (a.threads > 0) {
    config.threads = a.threads;
  }
  Network net = weights_or_init(a.weights, config);
  const SceneRecord scene = a.scene.empty() ? make_toy_scene() : load_scene(a.scene);
  FitOptions opt;
  opt.steps = a.steps;
  opt.learning_rate = a.lr;
  opt.threads = config.threads;
  const auto start = std::chrono::steady_clock::now();
  const FitResult r = fit_toy(net, scene, resolve_templates(config), opt);
  const double seconds =
    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  net.heads = r.heads;
  save_network_file(a.out, net);
  if (!a.trace_out.empty()) {
    std::string text = "step\ttotal\tcls\treg\n";
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
      const auto & l = r.trace[i];
      text += std::to_string(i) + "\t" + format_double(l.total) + "\t" + format_double(l.cls) +
              "\t" + format_double(l.reg) + "\n";
    }
    write_text_file(a.trace_out, text);
  }
  std::fprintf(
    stderr, "%zu positives; loss %.6f -> %.6f (ratio %.4f) in %zu steps, %.1f s\n",
    r.match.num_positives(), r.trace.front().total, r.trace.back().total,
    r.trace.back().total / r.trace.front().total, a.steps, seconds);
  return 0;
}

/// Quick in-binary sanity checks of the core numerics. The full oracle suites
/// live in the test tree.
int run_selftest()
{
  int failures = 0;
  const auto report = [&](const char * name, bool ok, const std::string & detail) {
    std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
    failures += ok ? 0 : 1;
  };
  SplitMix64 rng(2718);
  const auto random_box = [&] {
    return Box3D{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.5, 0.5), rng.uniform(0.2, 2),
                 rng.uniform(0.2, 2), rng.uniform(0.2, 2), rng.uniform(-std::numbers::pi, std::numbers::pi)};
  };

  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const Box3D a = random_box();
    const Box3D b = random_box();
    worst = std::max(worst, std::abs(iou3d(a, b) - iou3d_oracle(a, b, 128)));
  }
  report("iou3d vs voxel oracle", worst <= 2e-2, "max error " + format_double(worst));

  const Box3D sq{0, 0, 0, 1, 1, 1, 0};
  const Box3D turned{0, 0, 0, 1, 1, 1, std::numbers::pi / 4};
  const double rot = iou3d(sq, turned);
  report("rotated square", std::abs(rot - 0.7071) <= 3e-3, "IoU " + format_double(rot));

  worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Box3D g = random_box();
    const Box3D d = random_box();
    const Box3D back = decode_box(encode_targets(g, d), d);
    worst = std::max({worst, std::abs(back.cx - g.cx), std::abs(back.w - g.w),
                      std::abs(normalize_angle(back.theta - g.theta))});
  }
  report("encode/decode round trip", worst <= 1e-9, "max error " + format_double(worst));

  worst = 0.0;
  const CameraModel cam(520, 530, 320, 240, tilt_rotation(0.2, -0.05));
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(0, 640);
    const double v = rng.uniform(0, 480);
    const double z = rng.uniform(0.1, 20);
    const PixelDepth p = world_to_pixel(cam, pixel_to_world(cam, u, v, z));
    worst = std::max({worst, std::abs(p.u - u), std::abs(p.v - v), std::abs(p.z - z)});
  }
  report("pixel/world round trip", worst <= 1e-9, "max error " + format_double(worst));

  const std::vector<Outcome> labels{Outcome::TruePositive, Outcome::FalsePositive, Outcome::TruePositive};
  const std::vector<double> scores{0.9, 0.8, 0.7};
  const double ap = average_precision(labels, scores, 2).ap;
  report("average precision", std::abs(ap - 5.0 / 6.0) <= 1e-12, "AP " + format_double(ap));

  const Network net = make_network(make_desk_topology(), 20, 1);
  bool widths = net.heads.size() == 6;
  for (const auto & h : net.heads) {
    widths = widths && h.spec.out_channels == 351;
  }
  report("head widths", widths, std::to_string(net.heads.size()) + " taps");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"ssd3d: amodal 3D object detection from a single RGB-D image"};
  app.require_subcommand(1);

  std::string scene, config, weights, out;
  std::size_t threads = 0;
  auto * det = app.add_subcommand("detect", "run the detector on one scene and write JSONL detections");
  det->add_option("--scene", scene, "scene directory or scene JSON")->required();
  det->add_option("--config", config, "run configuration JSON");
  det->add_option("--weights", weights, "network weights file");
  det->add_option("--out", out, "output JSONL (default stdout)");
  det->add_option("--threads", threads, "worker threads (overrides config)");

  EvaluateArgs ev;
  auto * eva = app.add_subcommand("evaluate", "detect over a manifest and report per-class AP and mAP");
  eva->add_option("--manifest", ev.manifest, "manifest JSON")->required();
  eva->add_option("--config", ev.config, "run configuration JSON");
  eva->add_option("--weights", ev.weights, "network weights file");
  eva->add_option("--out", ev.out, "AP table (default stdout)");
  eva->add_option("--pr-out", ev.pr_out, "precision-recall points per class");
  eva->add_option("--timing-out", ev.timing_out, "per-image wall-clock seconds");
  eva->add_option("--threads", ev.threads, "worker threads (overrides config)");

  std::string manifest;
  std::size_t synthetic = 600;
  std::size_t k = kTemplateCount;
  std::uint64_t seed = 7;
  auto * der = app.add_subcommand("derive-templates", "k-medoids anchor sizes from ground truth");
  der->add_option("--manifest", manifest, "manifest JSON (default: synthetic class table)");
  der->add_option("--synthetic", synthetic, "sample count when no manifest is given");
  der->add_option("--out", out, "template file (default stdout)");
  der->add_option("--k", k, "number of templates")->check(CLI::PositiveNumber);
  der->add_option("--seed", seed, "initialization seed");

  auto * self = app.add_subcommand("selftest", "quick numeric self checks");

  std::size_t scenes = 10, objects = 3;
  std::uint64_t synth_seed = 1;
  bool toy = false;
  auto * syn = app.add_subcommand("synth", "render a synthetic RGB-D dataset");
  syn->add_option("--out", out, "output directory")->required();
  syn->add_option("--scenes", scenes, "number of scenes");
  syn->add_option("--objects", objects, "objects per scene (upper bound)");
  syn->add_option("--seed", synth_seed, "dataset seed");
  syn->add_flag("--toy", toy, "write only the single-chair overfitting scene");

  auto * init = app.add_subcommand("init-weights", "write seeded initial weights");
  init->add_option("--config", config, "run configuration JSON");
  init->add_option("--out", out, "weights file")->required();

  FitArgs fa;
  auto * fit = app.add_subcommand("fit", "fit the prediction heads to one scene");
  fit->add_option("--scene", fa.scene, "scene directory (default: built-in toy scene)");
  fit->add_option("--config", fa.config, "run configuration JSON");
  fit->add_option("--weights", fa.weights, "starting weights (default: seeded init)");
  fit->add_option("--out", fa.out, "fitted weights file")->required();
  fit->add_option("--trace-out", fa.trace_out, "per-step loss trace (TSV)");
  fit->add_option("--steps", fa.steps, "gradient steps");
  fit->add_option("--lr", fa.lr, "learning rate")->check(CLI::PositiveNumber);
  fit->add_option("--threads", fa.threads, "worker threads (overrides config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (det->parsed()) {
      return run_detect(scene, config, weights, out, threads);
    }
    if (eva->parsed()) {
      return run_evaluate(ev);
    }
    if (der->parsed()) {
      return run_derive_templates(manifest, synthetic, out, k, seed);
    }
    if (self->parsed()) {
      return run_selftest();
    }
    if (syn->parsed()) {
      return run_synth(out, scenes, objects, synth_seed, toy);
    }
    if (init->parsed()) {
      return run_init_weights(config, out);
    }
    if (fit->parsed()) {
      return run_fit(fa);
    }
  } catch (const Error & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
