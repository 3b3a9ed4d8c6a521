#include "splatgeo/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "splatgeo/error.hpp"
#include "splatgeo/eval.hpp"
#include "splatgeo/scene_io.hpp"

namespace splatgeo {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

Vec3 parse_background(const std::vector<double>& values) {
  if (values.size() == 1) return Vec3::Constant(values[0]);
  if (values.size() == 3) return Vec3(values[0], values[1], values[2]);
  throw Error(ErrorKind::InvalidArgument, "--bg takes one gray value or three r,g,b values");
}

json pose_error_json(const PoseError& e) {
  json j;
  j["rotation_deg"] = e.rotation_deg;
  j["translation_deg"] = e.degenerate_translation ? json(nullptr) : json(e.translation_deg);
  j["degenerate_translation"] = e.degenerate_translation;
  return j;
}

const char* pose_name(InitSpec::Pose p) { return p == InitSpec::Pose::Identity ? "identity" : "ground_truth"; }
const char* depth_name(InitSpec::Depth d) { return d == InitSpec::Depth::Constant ? "constant" : "ground_truth"; }

}  // namespace

json config_to_json(const OptimizeConfig& cfg) {
  json j;
  j["schema"] = kRunSchema;
  j["steps"] = cfg.steps;
  j["omega"] = cfg.loss.omega;
  j["lambda1"] = cfg.loss.lambda1;
  j["lambda2"] = cfg.loss.lambda2;
  j["gamma1"] = cfg.loss.gamma1;
  j["gamma2"] = cfg.loss.gamma2;
  j["ssim_window"] = cfg.loss.ssim_window;
  j["ssim_sigma"] = cfg.loss.ssim_sigma;
  j["lr_depth"] = cfg.lr_depth;
  j["lr_pose"] = cfg.lr_pose;
  j["lr_attr"] = cfg.lr_attr;
  j["warmup_fraction"] = cfg.warmup_fraction;
  j["adam"] = {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"epsilon", cfg.adam.epsilon},
               {"clip_norm", cfg.adam.clip_norm}};
  j["background"] = {cfg.background[0], cfg.background[1], cfg.background[2]};
  j["divergence_factor"] = cfg.divergence_factor;
  j["divergence_patience"] = cfg.divergence_patience;
  j["render"] = {{"near_plane", cfg.render.near_plane},
                 {"far_plane", cfg.render.far_plane},
                 {"low_pass", cfg.render.low_pass},
                 {"cutoff_sigma", cfg.render.cutoff_sigma},
                 {"min_transmittance", cfg.render.min_transmittance},
                 {"early_stop", cfg.render.early_stop}};
  j["init"] = {{"pose", pose_name(cfg.init.pose)},
               {"depth", depth_name(cfg.init.depth)},
               {"rotation_perturbation_deg", cfg.init.rotation_perturbation_deg},
               {"translation_perturbation", cfg.init.translation_perturbation},
               {"depth_noise", cfg.init.depth_noise},
               {"constant_depth", cfg.init.constant_depth},
               {"seed", cfg.init.seed}};
  return j;
}

void config_from_json(const json& j, OptimizeConfig& cfg) {
  try {
    if (j.contains("schema") && j["schema"].get<std::string>() != kRunSchema) {
      throw Error(ErrorKind::InvalidArgument, "unsupported run config schema " + j["schema"].get<std::string>());
    }
    const auto get = [&j](const char* key, auto& dst) {
      if (j.contains(key)) dst = j[key].get<std::decay_t<decltype(dst)>>();
    };
    get("steps", cfg.steps);
    get("omega", cfg.loss.omega);
    get("lambda1", cfg.loss.lambda1);
    get("lambda2", cfg.loss.lambda2);
    get("gamma1", cfg.loss.gamma1);
    get("gamma2", cfg.loss.gamma2);
    get("ssim_window", cfg.loss.ssim_window);
    get("ssim_sigma", cfg.loss.ssim_sigma);
    get("lr_depth", cfg.lr_depth);
    get("lr_pose", cfg.lr_pose);
    get("lr_attr", cfg.lr_attr);
    get("warmup_fraction", cfg.warmup_fraction);
    get("divergence_factor", cfg.divergence_factor);
    get("divergence_patience", cfg.divergence_patience);
    if (j.contains("background")) cfg.background = parse_background(j["background"].get<std::vector<double>>());
    if (j.contains("adam")) {
      const json& a = j["adam"];
      cfg.adam.beta1 = a.value("beta1", cfg.adam.beta1);
      cfg.adam.beta2 = a.value("beta2", cfg.adam.beta2);
      cfg.adam.epsilon = a.value("epsilon", cfg.adam.epsilon);
      cfg.adam.clip_norm = a.value("clip_norm", cfg.adam.clip_norm);
    }
    if (j.contains("render")) {
      const json& r = j["render"];
      cfg.render.near_plane = r.value("near_plane", cfg.render.near_plane);
      cfg.render.far_plane = r.value("far_plane", cfg.render.far_plane);
      cfg.render.low_pass = r.value("low_pass", cfg.render.low_pass);
      cfg.render.cutoff_sigma = r.value("cutoff_sigma", cfg.render.cutoff_sigma);
      cfg.render.min_transmittance = r.value("min_transmittance", cfg.render.min_transmittance);
      cfg.render.early_stop = r.value("early_stop", cfg.render.early_stop);
    }
    if (j.contains("init")) {
      const json& i = j["init"];
      if (i.contains("pose")) {
        const std::string p = i["pose"].get<std::string>();
        if (p != "identity" && p != "ground_truth") throw Error(ErrorKind::InvalidArgument, "unknown init pose " + p);
        cfg.init.pose = p == "identity" ? InitSpec::Pose::Identity : InitSpec::Pose::GroundTruth;
      }
      if (i.contains("depth")) {
        const std::string d = i["depth"].get<std::string>();
        if (d != "constant" && d != "ground_truth") throw Error(ErrorKind::InvalidArgument, "unknown init depth " + d);
        cfg.init.depth = d == "constant" ? InitSpec::Depth::Constant : InitSpec::Depth::GroundTruth;
      }
      cfg.init.rotation_perturbation_deg = i.value("rotation_perturbation_deg", cfg.init.rotation_perturbation_deg);
      cfg.init.translation_perturbation = i.value("translation_perturbation", cfg.init.translation_perturbation);
      cfg.init.depth_noise = i.value("depth_noise", cfg.init.depth_noise);
      cfg.init.constant_depth = i.value("constant_depth", cfg.init.constant_depth);
      cfg.init.seed = i.value("seed", cfg.init.seed);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("malformed run config: ") + e.what());
  }
}

void write_run_outputs(const SceneBundle& bundle, const OptimizationResult& result, const fs::path& dir) {
  ensure_dir(dir);
  const OptimizationReport& rep = result.report;

  std::string csv = "step,total,reprojection,rendering\n";
  for (size_t i = 0; i < rep.trace.size(); ++i) {
    const LossTraceEntry& e = rep.trace[i];
    csv += std::to_string(i) + "," + number(e.total) + "," + number(e.reprojection) + "," + number(e.rendering) + "\n";
  }
  write_text(dir / "report.csv", csv);

  json r;
  r["steps"] = rep.trace.size();
  r["initial_loss"] = rep.trace.empty() ? json(nullptr) : json(rep.trace.front().total);
  r["final_loss"] = rep.trace.empty() ? json(nullptr) : json(rep.trace.back().total);
  r["initial_target_psnr"] = rep.initial_target_psnr;
  r["target_psnr"] = rep.target_psnr;
  if (rep.pose_errors) {
    r["pose_errors"] = {{"c1", pose_error_json((*rep.pose_errors)[0])}, {"c2", pose_error_json((*rep.pose_errors)[1])}};
  }
  r["gaussian_count"] = result.gaussians.size();
  r["seed"] = bundle.seed;
  write_text(dir / "report.json", r.dump(2) + "\n");

  json poses;
  poses["c1_to_target"] = pose_json(result.poses[0]);
  poses["c2_to_target"] = pose_json(result.poses[1]);
  write_text(dir / "poses.json", poses.dump(2) + "\n");

  write_text(dir / "config.json", config_to_json(rep.config).dump(2) + "\n");
  export_ply(result.gaussians, dir / "gaussians.ply");
  const RenderOutput target =
      render(result.gaussians, bundle.K, RigidTransform::identity(), rep.config.background, rep.config.render);
  write_png_rgb(target.color, dir / "target.png");
}

namespace {

struct OptimizeFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  int steps = 0;
  double omega = 0, lambda1 = 0, lambda2 = 0, gamma1 = 0, gamma2 = 0;
  double lr_depth = 0, lr_pose = 0, lr_attr = 0;
  double init_rotation_deg = 2.0;
  double depth_noise = 0.05;
  std::vector<double> bg;

  std::vector<CLI::Option*> options;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* steps_opt = nullptr;
  CLI::Option* omega_opt = nullptr;
  CLI::Option* lambda1_opt = nullptr;
  CLI::Option* lambda2_opt = nullptr;
  CLI::Option* gamma1_opt = nullptr;
  CLI::Option* gamma2_opt = nullptr;
  CLI::Option* lr_depth_opt = nullptr;
  CLI::Option* lr_pose_opt = nullptr;
  CLI::Option* lr_attr_opt = nullptr;
  CLI::Option* rot_opt = nullptr;
  CLI::Option* noise_opt = nullptr;
  CLI::Option* bg_opt = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "run config JSON (" + std::string(kRunSchema) + ")");
    seed_opt = app->add_option("--seed", seed, "initialization seed");
    steps_opt = app->add_option("--steps", steps, "optimization steps")->check(CLI::NonNegativeNumber);
    omega_opt = app->add_option("--omega", omega, "SSIM share of the photometric error");
    lambda1_opt = app->add_option("--lambda1", lambda1, "reprojection loss weight");
    lambda2_opt = app->add_option("--lambda2", lambda2, "rendering loss weight");
    gamma1_opt = app->add_option("--gamma1", gamma1, "rendering loss SSIM weight");
    gamma2_opt = app->add_option("--gamma2", gamma2, "rendering loss squared-error weight");
    lr_depth_opt = app->add_option("--lr-depth", lr_depth, "depth learning rate");
    lr_pose_opt = app->add_option("--lr-pose", lr_pose, "pose learning rate");
    lr_attr_opt = app->add_option("--lr-attr", lr_attr, "Gaussian attribute learning rate");
    rot_opt = app->add_option("--init-rotation-deg", init_rotation_deg, "initial pose rotation perturbation");
    noise_opt = app->add_option("--depth-noise", depth_noise, "initial relative depth noise");
    bg_opt = app->add_option("--bg", bg, "background gray or r,g,b")->delimiter(',')->expected(1, 3);
  }

  OptimizeConfig resolve() const {
    OptimizeConfig cfg;
    cfg.init.rotation_perturbation_deg = 2.0;
    cfg.init.depth_noise = 0.05;
    if (!config_path.empty()) config_from_json(read_json(config_path), cfg);
    if (*seed_opt) cfg.init.seed = seed;
    if (*steps_opt) cfg.steps = steps;
    if (*omega_opt) cfg.loss.omega = omega;
    if (*lambda1_opt) cfg.loss.lambda1 = lambda1;
    if (*lambda2_opt) cfg.loss.lambda2 = lambda2;
    if (*gamma1_opt) cfg.loss.gamma1 = gamma1;
    if (*gamma2_opt) cfg.loss.gamma2 = gamma2;
    if (*lr_depth_opt) cfg.lr_depth = lr_depth;
    if (*lr_pose_opt) cfg.lr_pose = lr_pose;
    if (*lr_attr_opt) cfg.lr_attr = lr_attr;
    if (*rot_opt) cfg.init.rotation_perturbation_deg = init_rotation_deg;
    if (*noise_opt) cfg.init.depth_noise = depth_noise;
    if (*bg_opt) cfg.background = parse_background(bg);
    cfg.validate();
    return cfg;
  }
};

OptimizeConfig config_for_scene(OptimizeConfig cfg, const SceneBundle& bundle) {
  if (!bundle.gt_poses) cfg.init.pose = InitSpec::Pose::Identity;
  if (!bundle.gt_depths && cfg.init.depth == InitSpec::Depth::GroundTruth) {
    cfg.init.depth = InitSpec::Depth::Constant;
    if (cfg.init.constant_depth <= 0.0) cfg.init.constant_depth = 1.0;
  }
  return cfg;
}

void draw_line(Image& img, const Vec3& line, const Vec3& color) {
  // a u + b v + c = 0 in continuous pixel coordinates.
  const double a = line[0], b = line[1], c = line[2];
  if (std::abs(b) >= std::abs(a)) {
    for (int x = 0; x < img.width; ++x) {
      const double u = x + 0.5;
      const int y = static_cast<int>(std::floor(-(a * u + c) / b));
      if (y >= 0 && y < img.height) {
        for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = color[ch];
      }
    }
  } else {
    for (int y = 0; y < img.height; ++y) {
      const double v = y + 0.5;
      const int x = static_cast<int>(std::floor(-(b * v + c) / a));
      if (x >= 0 && x < img.width) {
        for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = color[ch];
      }
    }
  }
}

int cmd_synth(const SynthSpec& spec, const fs::path& out) {
  const SceneBundle b = generate_synthetic_scene(spec);
  save_scene(b, out);
  std::cout << "wrote scene to " << out.string() << "\n";
  return 0;
}

int cmd_render(const fs::path& scene_dir, const std::string& ply, const std::string& view, const std::string& poses_path,
               const std::vector<double>& bg, const fs::path& out) {
  const SceneBundle b = load_scene(scene_dir);
  GaussianSet g;
  if (!ply.empty()) {
    g = import_ply(ply);
  } else if (b.gt_gaussians) {
    g = *b.gt_gaussians;
  } else {
    throw Error(ErrorKind::InvalidArgument, "scene has no gaussians.ply; pass --ply");
  }
  RigidTransform pose = RigidTransform::identity();
  if (view != "t") {
    const std::string key = view + "_to_target";
    if (!poses_path.empty()) {
      pose = pose_from_json_matrix(read_json(poses_path).at(key));
    } else {
      pose = b.camera_pose(view == "c1" ? View::Context1 : View::Context2);
    }
  }
  const Vec3 background = bg.empty() ? Vec3::Zero() : parse_background(bg);
  const RenderOutput r = render(g, b.K, pose, background);
  ensure_dir(out);
  write_png_rgb(r.color, out / "color.png");
  write_png_gray16(depth_to_millimeters(r.depth), r.depth.width, r.depth.height, out / "depth.png");
  write_png_gray8(r.alpha, out / "alpha.png");
  std::cout << "wrote color.png, depth.png, alpha.png to " << out.string() << "\n";
  return 0;
}

int cmd_optimize(const fs::path& scene_dir, const OptimizeFlags& flags, const fs::path& out) {
  const SceneBundle b = load_scene(scene_dir);
  const OptimizeConfig cfg = config_for_scene(flags.resolve(), b);
  const OptimizationResult result = optimize_scene(b, cfg);
  write_run_outputs(b, result, out);
  std::cout << "steps " << cfg.steps << ", target PSNR " << result.report.target_psnr << " dB";
  if (result.report.pose_errors) {
    const auto& e = *result.report.pose_errors;
    std::cout << ", rotation error " << e[0].rotation_deg << " / " << e[1].rotation_deg << " deg";
  }
  std::cout << ", " << result.report.wall_seconds << " s\n";
  return 0;
}

int cmd_eval(const std::vector<std::string>& scenes, const OptimizeFlags& flags, const fs::path& out) {
  ensure_dir(out);
  std::string csv = "scene,rotation_deg_c1,translation_deg_c1,rotation_deg_c2,translation_deg_c2,ate,target_psnr\n";
  std::vector<double> rot, trans, ates, psnrs;
  for (const std::string& path : scenes) {
    const SceneBundle b = load_scene(path);
    if (!b.gt_poses) throw Error(ErrorKind::InvalidArgument, path + " has no ground-truth poses to evaluate against");
    const OptimizeConfig cfg = config_for_scene(flags.resolve(), b);
    const OptimizationResult result = optimize_scene(b, cfg);
    const auto& e = *result.report.pose_errors;
    const Trajectory est{result.poses[0].translation, Vec3::Zero(), result.poses[1].translation};
    const Trajectory gt{(*b.gt_poses)[0].translation, Vec3::Zero(), (*b.gt_poses)[1].translation};
    const double a = ate(est, gt);
    csv += fs::path(path).filename().string() + "," + number(e[0].rotation_deg) + "," + number(e[0].translation_deg) +
           "," + number(e[1].rotation_deg) + "," + number(e[1].translation_deg) + "," + number(a) + "," +
           number(result.report.target_psnr) + "\n";
    for (int k = 0; k < 2; ++k) {
      rot.push_back(e[k].rotation_deg);
      if (!e[k].degenerate_translation) trans.push_back(e[k].translation_deg);
    }
    ates.push_back(a);
    psnrs.push_back(result.report.target_psnr);
  }
  const auto stats = [](std::vector<double> v) {
    json j;
    if (v.empty()) return json{{"mean", nullptr}, {"median", nullptr}};
    double sum = 0.0;
    for (double x : v) sum += x;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    const double med = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    return json{{"mean", sum / static_cast<double>(n)}, {"median", med}};
  };
  json agg;
  agg["scenes"] = scenes.size();
  agg["rotation_deg"] = stats(rot);
  agg["translation_deg"] = stats(trans);
  agg["ate"] = stats(ates);
  agg["target_psnr"] = stats(psnrs);
  write_text(out / "eval.csv", csv);
  write_text(out / "eval.json", agg.dump(2) + "\n");
  std::cout << csv;
  return 0;
}

int cmd_epipolar(const fs::path& scene_dir, const std::string& poses_path, int lines, const fs::path& out) {
  const SceneBundle b = load_scene(scene_dir);
  RigidTransform pose;
  if (!poses_path.empty()) {
    pose = pose_from_json_matrix(read_json(poses_path).at("c1_to_target"));
  } else {
    pose = b.camera_pose(View::Context1);
  }
  Image canvas = b.image(View::Target);
  json record;
  record["source_to_dest"] = pose_json(pose);
  record["lines"] = json::array();

  // Sample source pixels on a coarse grid of c1.
  const int grid = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(lines)))));
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      const int x = (2 * gx + 1) * b.K.width / (2 * grid);
      const int y = (2 * gy + 1) * b.K.height / (2 * grid);
      const Vec3 ph = b.K.pixel_center(x, y);
      const Vec2 p = ph.head<2>();
      const Vec3 l = epipolar_line(b.K, pose, p);
      const double hue = static_cast<double>(gy * grid + gx) / (grid * grid);
      draw_line(canvas, l, Vec3(1.0, hue, 1.0 - hue));
      json entry;
      entry["source_pixel"] = {p[0], p[1]};
      entry["line"] = {l[0], l[1], l[2]};
      if (b.gt_depths && b.gt_poses) {
        // Ground-truth correspondence of the source pixel in the target view.
        const Vec3 pc = (*b.gt_depths)[0].at(x, y) * b.K.back_project(ph);
        const Vec3 pt = (*b.gt_poses)[0].apply(pc);
        if (pt.z() > 0.0) {
          const Vec2 q = b.K.project(pt);
          entry["gt_point"] = {q[0], q[1]};
          entry["distance_px"] = std::abs(l.dot(Vec3(q[0], q[1], 1.0)));
        }
      }
      record["lines"].push_back(entry);
    }
  }
  const fs::path parent = out.parent_path();
  if (!parent.empty()) ensure_dir(parent);
  write_png_rgb(canvas, out);
  fs::path json_path = out;
  json_path.replace_extension(".json");
  write_text(json_path, record.dump(2) + "\n");
  std::cout << "wrote " << out.string() << " and " << json_path.string() << "\n";
  return 0;
}

int cmd_export_ply(const fs::path& input, const fs::path& out) {
  GaussianSet g;
  if (fs::is_directory(input)) {
    const SceneBundle b = load_scene(input);
    if (!b.gt_gaussians) throw Error(ErrorKind::InvalidArgument, "scene has no Gaussians to export");
    g = *b.gt_gaussians;
  } else {
    g = import_ply(input);
  }
  export_ply(g, out);
  std::cout << "wrote " << g.size() << " Gaussians to " << out.string() << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Pose-free Gaussian splatting from image triplets"};
  app.require_subcommand(1);

  SynthSpec spec;
  std::string synth_out;
  std::vector<double> synth_bg;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic three-view scene");
  synth->add_option("--seed", spec.seed, "scene seed");
  synth->add_option("--gaussians", spec.gaussian_count, "number of Gaussians")->check(CLI::PositiveNumber);
  synth->add_option("--size", spec.width, "image width and height")->check(CLI::PositiveNumber);
  synth->add_option("--baseline", spec.baseline, "context camera offset")->check(CLI::NonNegativeNumber);
  synth->add_option("--rotation-deg", spec.rotation_deg, "context camera yaw");
  synth->add_option("--bg", synth_bg, "background gray or r,g,b")->delimiter(',')->expected(1, 3);
  synth->add_option("--out", synth_out, "output scene directory")->required();

  std::string render_scene, render_ply, render_view = "t", render_poses, render_out;
  std::vector<double> render_bg;
  CLI::App* rend = app.add_subcommand("render", "render Gaussians into one view of a scene");
  rend->add_option("scene", render_scene, "scene directory")->required();
  rend->add_option("--ply", render_ply, "Gaussians to render (default: the scene's own)");
  rend->add_option("--view", render_view, "c1, t or c2")->check(CLI::IsMember({"c1", "t", "c2"}));
  rend->add_option("--pose", render_poses, "poses.json from an optimize run");
  rend->add_option("--bg", render_bg, "background gray or r,g,b")->delimiter(',')->expected(1, 3);
  rend->add_option("--out", render_out, "output directory")->required();

  std::string opt_scene, opt_out;
  OptimizeFlags opt_flags;
  CLI::App* opt = app.add_subcommand("optimize", "jointly optimize depth, Gaussians and poses for a scene");
  opt->add_option("scene", opt_scene, "scene directory")->required();
  opt_flags.attach(opt);
  opt->add_option("--out", opt_out, "output directory")->required();

  std::vector<std::string> eval_scenes;
  std::string eval_out;
  OptimizeFlags eval_flags;
  CLI::App* ev = app.add_subcommand("eval", "optimize several scenes and report pose and image metrics");
  ev->add_option("scenes", eval_scenes, "scene directories")->required();
  eval_flags.attach(ev);
  ev->add_option("--out", eval_out, "output directory")->required();

  std::string epi_scene, epi_poses, epi_out;
  int epi_lines = 16;
  CLI::App* epi = app.add_subcommand("epipolar", "draw epipolar lines of c1 pixels in the target view");
  epi->add_option("scene", epi_scene, "scene directory")->required();
  epi->add_option("--pose", epi_poses, "poses.json (default: ground truth)");
  epi->add_option("--lines", epi_lines, "number of lines")->check(CLI::PositiveNumber);
  epi->add_option("--out", epi_out, "output PNG; a JSON with the same stem is written alongside")->required();

  std::string ply_in, ply_out;
  CLI::App* ply = app.add_subcommand("export-ply", "write Gaussians as a PLY file");
  ply->add_option("input", ply_in, "scene directory or PLY file")->required();
  ply->add_option("--out", ply_out, "output PLY path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    for (CLI::App* sub : app.get_subcommands()) std::cerr << sub->help();
    return 2;
  }

  try {
    if (*synth) {
      spec.height = spec.width;
      spec.focal = static_cast<double>(spec.width);
      if (!synth_bg.empty()) spec.background = parse_background(synth_bg);
      return cmd_synth(spec, synth_out);
    }
    if (*rend) return cmd_render(render_scene, render_ply, render_view, render_poses, render_bg, render_out);
    if (*opt) return cmd_optimize(opt_scene, opt_flags, opt_out);
    if (*ev) return cmd_eval(eval_scenes, eval_flags, eval_out);
    if (*epi) return cmd_epipolar(epi_scene, epi_poses, epi_lines, epi_out);
    if (*ply) return cmd_export_ply(ply_in, ply_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace splatgeo
