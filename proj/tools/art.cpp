// Copyright 2026 The artrecon Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// art: dataset generation, training, rendering, evaluation and URDF export.
//
// Exit codes: 0 success, 2 usage or configuration, 3 data, 4 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "art/checkpoint.hpp"
#include "art/datagen.hpp"
#include "art/evalx.hpp"
#include "art/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

struct GenConfig {
  std::string templ = "all";  // one template name, or "all" to cycle
  int scenes = 8;
  int res = 32;
  int views = 4;
  int states = 2;
  int parts = 3;  // slot budget including the base
  double radius = 0.5;
};

struct EvalConfig {
  int novel_views = 8;
  int n_samples = 64;
  int mesh_res = 32;
  int surface_points = 10000;
  double tau_fraction = 0.05;
};

struct RunConfig {
  std::uint64_t seed = 0;
  GenConfig gen;
  art::ModelConfig model;
  art::TrainConfig train;
  EvalConfig eval;
};

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& what) {
  if (!j.is_object()) throw art::ConfigError(what + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw art::ConfigError(what + ": unknown key '" + it.key() + "'");
  }
}

template <typename V>
void get(const json& j, const char* key, V& v, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(v);
  } catch (const json::exception& e) {
    throw art::ConfigError(what + ": bad value for '" + key + "': " + e.what());
  }
}

json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"gen",
           {{"template", c.gen.templ},
            {"scenes", c.gen.scenes},
            {"res", c.gen.res},
            {"views", c.gen.views},
            {"states", c.gen.states},
            {"parts", c.gen.parts},
            {"radius", c.gen.radius}}},
          {"model", c.model},
          {"train", c.train},
          {"eval",
           {{"novel_views", c.eval.novel_views},
            {"n_samples", c.eval.n_samples},
            {"mesh_res", c.eval.mesh_res},
            {"surface_points", c.eval.surface_points},
            {"tau_fraction", c.eval.tau_fraction}}}};
}

RunConfig load_config(const std::string& path) {
  RunConfig c;
  if (path.empty()) return c;
  std::ifstream f(path);
  if (!f) throw art::DataError("cannot read config " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw art::ConfigError("config " + path + ": " + e.what());
  }
  reject_unknown(j, {"seed", "gen", "model", "train", "eval"}, "config");
  get(j, "seed", c.seed, "config");
  if (j.contains("gen")) {
    const json& g = j["gen"];
    reject_unknown(g, {"template", "scenes", "res", "views", "states", "parts", "radius"}, "gen config");
    get(g, "template", c.gen.templ, "gen config");
    get(g, "scenes", c.gen.scenes, "gen config");
    get(g, "res", c.gen.res, "gen config");
    get(g, "views", c.gen.views, "gen config");
    get(g, "states", c.gen.states, "gen config");
    get(g, "parts", c.gen.parts, "gen config");
    get(g, "radius", c.gen.radius, "gen config");
  }
  if (j.contains("model")) c.model = j["model"].get<art::ModelConfig>();
  if (j.contains("train")) c.train = j["train"].get<art::TrainConfig>();
  if (j.contains("eval")) {
    const json& e = j["eval"];
    reject_unknown(e, {"novel_views", "n_samples", "mesh_res", "surface_points", "tau_fraction"}, "eval config");
    get(e, "novel_views", c.eval.novel_views, "eval config");
    get(e, "n_samples", c.eval.n_samples, "eval config");
    get(e, "mesh_res", c.eval.mesh_res, "eval config");
    get(e, "surface_points", c.eval.surface_points, "eval config");
    get(e, "tau_fraction", c.eval.tau_fraction, "eval config");
  }
  return c;
}

// Flags that override the config file. Unset flags leave file values alone.
struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> scenes, steps, res, views, states, parts;
  std::optional<std::string> templ;
  std::string out, data, checkpoint;
  bool truth = false;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON run config; flags override its values")->check(CLI::ExistingFile);
  app->add_option("--seed", f.seed, "Random seed");
  app->add_option("--out", f.out, "Output directory")->required();
}

RunConfig resolve(const Flags& f) {
  RunConfig c = load_config(f.config);
  if (f.seed) {
    c.seed = *f.seed;
    c.train.seed = *f.seed;
  }
  if (f.templ) c.gen.templ = *f.templ;
  if (f.scenes) c.gen.scenes = *f.scenes;
  if (f.views) c.gen.views = *f.views;
  if (f.states) c.gen.states = *f.states;
  if (f.parts) c.gen.parts = *f.parts;
  if (f.steps) c.train.steps = *f.steps;
  if (f.res) {
    c.gen.res = *f.res;
    c.train.res_high = *f.res;
    c.train.res_low = std::min(c.train.res_low, *f.res);
  }
  return c;
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path);
  f << j.dump(2) << "\n";
  if (!f) throw art::DataError("cannot write " + path.string());
}

void write_resolved(const fs::path& out, const RunConfig& c) { write_json(out / "config.json", to_json(c)); }

// Scene directories under `data`, or `data` itself when it is one scene.
std::vector<fs::path> scene_dirs(const std::string& data) {
  if (data.empty()) throw art::ConfigError("--data is required");
  if (fs::exists(fs::path(data) / "manifest.json")) return {fs::path(data)};
  std::vector<fs::path> dirs = art::list_scenes(data);
  if (dirs.empty()) throw art::DataError("no scenes under " + data);
  return dirs;
}

// ---------------------------------------------------------------------------

int cmd_gen(const Flags& f) {
  RunConfig c = resolve(f);
  const GenConfig& g = c.gen;
  if (g.scenes < 1) throw art::ConfigError("--scenes must be >= 1");
  std::vector<std::string> templates;
  if (g.templ == "all")
    templates = art::template_names();
  else
    templates = {g.templ};
  art::RigConfig rig;
  rig.views = g.views;
  rig.resolution = g.res;
  const fs::path out(f.out);
  fs::create_directories(out);
  for (int i = 0; i < g.scenes; ++i) {
    const std::string& t = templates[i % templates.size()];
    art::SceneTruth s = art::sample_scene(t, art::mix_seed(c.seed, static_cast<std::uint64_t>(i)), g.parts,
                                          g.radius, g.states, rig);
    art::render_truth(s);
    std::ostringstream name;
    name << "scene_" << std::setw(4) << std::setfill('0') << i;
    art::write_scene(s, out / name.str());
  }
  write_resolved(out, c);
  std::cout << "generated " << g.scenes << " scenes (seed " << c.seed << ") in " << out.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_train(const Flags& f) {
  RunConfig c = resolve(f);
  const std::vector<fs::path> dirs = scene_dirs(f.data);
  std::vector<art::SceneTruth> scenes;
  scenes.reserve(dirs.size());
  int max_parts = 1;
  for (const auto& d : dirs) {
    scenes.push_back(art::read_scene(d));
    max_parts = std::max(max_parts, scenes.back().frame.part_count);
  }
  c.model.state_count = scenes.front().frame.state_count;
  if (f.parts) c.model.slot_count = *f.parts;
  c.model.slot_count = std::max(c.model.slot_count, max_parts);
  c.model.validate();
  c.train.validate();
  const fs::path out(f.out);
  fs::create_directories(out);
  write_resolved(out, c);

  std::vector<art::TrainScene> ts;
  for (const auto& s : scenes) ts.push_back(art::prepare_scene(s, c.model, {c.train.res_low, c.train.res_high}));
  art::ArtModel<float> model(c.model, c.seed);
  art::Trainer<float> trainer(model, std::move(ts), c.train);
  std::ofstream log(out / "log.jsonl");
  double last_psnr = -1.0;
  try {
    trainer.run(
        &log, [&](const art::StepRecord& r) { if (r.psnr >= 0.0) last_psnr = r.psnr; },
        [&](const json& diag) { write_json(out / "diagnostic.json", diag); });
  } catch (const art::NumericError&) {
    art::save_checkpoint(model, out / "checkpoint_failed", {{"step", trainer.step()}});
    throw;
  }
  const double inv_beta = 1.0 / art::anneal_beta(c.train.beta_schedule(), c.train.steps);
  if (last_psnr < 0.0) {
    last_psnr = trainer.mean_training_psnr(inv_beta);
    log << json{{"step", trainer.step()}, {"psnr", last_psnr}, {"final", true}}.dump() << "\n";
  }
  json extra{{"step", trainer.step()},
             {"eval_inv_beta", inv_beta},
             {"eval_samples", c.train.eval_samples},
             {"scenes", dirs.size()}};
  extra["training_psnr"] = last_psnr;
  art::save_checkpoint(model, out / "checkpoint", extra);
  std::cout << "trained " << trainer.step() << " steps on " << dirs.size() << " scenes, training-view PSNR "
            << std::fixed << std::setprecision(2) << last_psnr << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct Loaded {
  art::ArtModel<float> model;
  json extra;
};

Loaded load_model(const std::string& dir) {
  if (dir.empty()) throw art::ConfigError("--checkpoint is required");
  json m = art::read_checkpoint_manifest(dir);
  return {art::load_checkpoint<float>(dir), m.value("extra", json::object())};
}

// Part boxes at `state` projected into `cam`, as SVG polylines over the image.
std::string box_overlay(const std::vector<art::ArticulationParams>& parts, int state, const art::Camera& cam,
                        double radius, const std::string& image) {
  static const char* colors[] = {"#e41a1c", "#377eb8", "#4daf4a", "#984ea3", "#ff7f00", "#a65628"};
  static const int edges[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3},
                                   {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
  std::ostringstream s;
  s << std::setprecision(6);
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" width=\""
    << cam.width << "\" height=\"" << cam.height << "\" viewBox=\"0 0 " << cam.width << " " << cam.height
    << "\">\n";
  if (!image.empty())
    s << "  <image xlink:href=\"" << image << "\" width=\"" << cam.width << "\" height=\"" << cam.height
      << "\"/>\n";
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const art::AABB box = art::part_box(parts[p]);
    const art::RigidPose pose = art::part_pose(parts[p], state, radius);
    std::optional<std::pair<double, double>> px[8];
    for (int c = 0; c < 8; ++c) {
      const art::Vec3 corner(c & 1 ? box.hi().x() : box.lo().x(), c & 2 ? box.hi().y() : box.lo().y(),
                             c & 4 ? box.hi().z() : box.lo().z());
      px[c] = cam.project(pose.apply(corner));
    }
    s << "  <g stroke=\"" << colors[p % 6] << "\" stroke-width=\"0.4\" fill=\"none\">\n";
    for (const auto& e : edges) {
      if (!px[e[0]] || !px[e[1]]) continue;
      s << "    <line x1=\"" << px[e[0]]->first << "\" y1=\"" << px[e[0]]->second << "\" x2=\""
        << px[e[1]]->first << "\" y2=\"" << px[e[1]]->second << "\"/>\n";
    }
    s << "  </g>\n";
  }
  s << "</svg>\n";
  return s.str();
}

int cmd_render(const Flags& f) {
  RunConfig c = resolve(f);
  Loaded l = load_model(f.checkpoint);
  const fs::path out(f.out);
  fs::create_directories(out);
  write_resolved(out, c);
  const double inv_beta = l.extra.value("eval_inv_beta", c.train.inv_beta_end);
  const int samples = l.extra.value("eval_samples", c.train.eval_samples);
  art::RenderOptions ro;
  ro.inv_beta = inv_beta;
  ro.n_samples = samples;
  json report = json::array();
  for (const auto& dir : scene_dirs(f.data)) {
    const art::SceneTruth s = art::read_scene(dir);
    const art::TrainScene ts = art::prepare_scene(s, l.model.config(), {s.resolution()});
    const auto pred = art::predict(l.model, ts.inputs, s.frame.part_count, s.frame.radius);
    const fs::path od = out / dir.filename();
    fs::create_directories(od);
    for (int v = 0; v < s.views(); ++v)
      for (int t = 0; t < s.frame.state_count; ++t) {
        const std::string tag = "_v" + std::to_string(v) + "_s" + std::to_string(t);
        const art::Camera& cam = s.cameras[v][t];
        const art::RenderOutput comp = art::render_predicted(pred, t, cam, s.frame.radius, ro);
        art::write_pnm(od / ("composite" + tag + ".ppm"), comp.rgb);
        art::write_pnm(od / ("composite" + tag + ".pgm"), comp.mask);
        for (int p = 0; p < s.frame.part_count; ++p) {
          const art::RenderOutput o = art::render_predicted_part(pred, p, t, cam, s.frame.radius, ro);
          art::write_pnm(od / ("part" + std::to_string(p) + tag + ".ppm"), o.rgb);
        }
        std::ofstream(od / ("boxes" + tag + ".svg"))
            << box_overlay(pred.params, t, cam, s.frame.radius, "composite" + tag + ".ppm");
      }
    const double psnr = art::training_view_psnr(l.model, ts, inv_beta, samples);
    report.push_back({{"scene", dir.filename().string()}, {"training_view_psnr", psnr}});
    std::cout << dir.filename().string() << ": training-view PSNR " << std::fixed << std::setprecision(2) << psnr
              << "\n";
  }
  write_json(out / "render.json", report);
  return kOk;
}

// ---------------------------------------------------------------------------

art::EvalOptions eval_options(const RunConfig& c, double inv_beta) {
  art::EvalOptions o;
  o.novel_views = c.eval.novel_views;
  o.n_samples = c.eval.n_samples;
  o.inv_beta = inv_beta;
  o.mesh_res = c.eval.mesh_res;
  o.surface_points = c.eval.surface_points;
  o.tau_fraction = c.eval.tau_fraction;
  o.seed = c.seed;
  return o;
}

art::RigConfig scene_rig(const art::SceneTruth& s) {
  art::RigConfig rig;
  rig.views = s.views();
  rig.resolution = s.resolution();
  return rig;
}

int cmd_eval(const Flags& f) {
  RunConfig c = resolve(f);
  const fs::path out(f.out);
  fs::create_directories(out);
  write_resolved(out, c);
  std::optional<Loaded> l;
  if (!f.truth) l = load_model(f.checkpoint);
  std::ofstream lines(out / "metrics.jsonl");
  std::vector<art::SceneMetrics> all;
  for (const auto& dir : scene_dirs(f.data)) {
    const art::SceneTruth s = art::read_scene(dir);
    art::SceneMetrics m;
    if (f.truth) {
      std::vector<art::AnalyticField> fields;
      for (const auto& p : s.parts) fields.emplace_back(p);
      art::ObjectView v;
      for (std::size_t p = 0; p < s.parts.size(); ++p) {
        v.fields.push_back(&fields[p]);
        v.params.push_back(s.parts[p].articulation);
      }
      art::EvalOptions o = eval_options(c, s.render.inv_beta);
      o.n_samples = s.render.n_samples;
      m = art::evaluate_object(v, s, scene_rig(s), o);
    } else {
      const double inv_beta = l->extra.value("eval_inv_beta", c.train.inv_beta_end);
      const art::TrainScene ts = art::prepare_scene(s, l->model.config(), {s.resolution()});
      const auto pred = art::predict(l->model, ts.inputs, s.frame.part_count, s.frame.radius);
      m = art::evaluate_prediction(pred, s, scene_rig(s), eval_options(c, inv_beta));
    }
    m.scene = dir.filename().string();
    lines << art::metrics_json(m).dump() << "\n";
    all.push_back(m);
  }
  const art::MetricSummary sum = art::summarize(all);
  write_json(out / "summary.json", art::summary_json(sum));
  std::cout << std::fixed << std::setprecision(4) << "scenes " << sum.scenes << "  psnr " << sum.psnr
            << "  chamfer " << sum.chamfer << "  fscore " << sum.fscore << "  d_giou " << sum.d_giou
            << "  type_acc " << sum.type_accuracy << "  axis_deg " << sum.axis_error_deg << "  pivot "
            << sum.pivot_error << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_export(const Flags& f) {
  RunConfig c = resolve(f);
  const std::vector<fs::path> dirs = scene_dirs(f.data);
  const art::SceneTruth s = art::read_scene(dirs.front(), !f.truth);
  const fs::path out(f.out);
  fs::create_directories(out);
  write_resolved(out, c);
  std::vector<art::UrdfPart> parts(s.parts.size());
  if (f.truth) {
    for (std::size_t p = 0; p < s.parts.size(); ++p) {
      parts[p].name = s.parts[p].name + std::to_string(p);
      parts[p].params = s.parts[p].articulation;
      parts[p].mesh = art::extract_mesh(art::AnalyticField(s.parts[p]), parts[p].params, c.eval.mesh_res);
    }
  } else {
    Loaded l = load_model(f.checkpoint);
    const art::TrainScene ts = art::prepare_scene(s, l.model.config(), {s.resolution()});
    const auto pred = art::predict(l.model, ts.inputs, s.frame.part_count, s.frame.radius);
    for (std::size_t p = 0; p < parts.size(); ++p) {
      parts[p].name = p == 0 ? "base" : "part" + std::to_string(p);
      parts[p].params = pred.params[p];
      parts[p].mesh = art::extract_mesh(pred.slots[p].hexaplane, pred.slots[p].heads, pred.params[p],
                                        s.frame.radius, c.eval.mesh_res);
    }
  }
  const std::string robot = dirs.front().filename().string();
  for (const auto& w : art::export_urdf(out, robot, parts, s.frame.radius)) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << (out / (robot + ".urdf")).string() << " with " << parts.size() << " links\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Articulated object reconstruction: generate, train, render, evaluate, export"};
  app.require_subcommand(1);
  Flags f;
  auto* gen = app.add_subcommand("gen", "Generate a procedural dataset");
  add_common(gen, f);
  gen->add_option("--template", f.templ, "drawer-chest, door-cabinet, laptop, mixed or all");
  gen->add_option("--scenes", f.scenes, "Number of scenes");
  gen->add_option("--res", f.res, "Image resolution");
  gen->add_option("--views", f.views, "Views per state");
  gen->add_option("--states", f.states, "Articulation states");
  gen->add_option("--parts", f.parts, "Maximum parts per scene, base included");

  auto* train = app.add_subcommand("train", "Train a model on a dataset");
  add_common(train, f);
  train->add_option("--data", f.data, "Dataset directory")->required();
  train->add_option("--steps", f.steps, "Optimizer steps");
  train->add_option("--res", f.res, "Final supervision resolution");
  train->add_option("--parts", f.parts, "Part slots");

  auto* render = app.add_subcommand("render", "Render a checkpoint on dataset views");
  add_common(render, f);
  render->add_option("--data", f.data, "Scene or dataset directory")->required();
  render->add_option("--checkpoint", f.checkpoint, "Checkpoint directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against held-out scenes");
  add_common(eval, f);
  eval->add_option("--data", f.data, "Scene or dataset directory")->required();
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint directory");
  eval->add_flag("--truth", f.truth, "Score the ground truth against itself");

  auto* exp = app.add_subcommand("export", "Export a URDF with part meshes");
  add_common(exp, f);
  exp->add_option("--data", f.data, "Scene directory")->required();
  exp->add_option("--checkpoint", f.checkpoint, "Checkpoint directory");
  exp->add_flag("--truth", f.truth, "Export the ground-truth scene");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  try {
    if (*gen) return cmd_gen(f);
    if (*train) return cmd_train(f);
    if (*render) return cmd_render(f);
    if (*eval) {
      if (!f.truth && f.checkpoint.empty()) throw art::ConfigError("eval needs --checkpoint or --truth");
      return cmd_eval(f);
    }
    if (*exp) {
      if (!f.truth && f.checkpoint.empty()) throw art::ConfigError("export needs --checkpoint or --truth");
      return cmd_export(f);
    }
  } catch (const art::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const art::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const art::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const art::ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
