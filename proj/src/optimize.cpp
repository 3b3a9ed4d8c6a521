#include "splatgeo/optimize.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include <unsupported/Eigen/AutoDiff>

namespace splatgeo {

void OptimizeConfig::validate() const {
  loss.validate();
  if (steps < 0) throw Error(ErrorKind::InvalidArgument, "steps must be non-negative");
  if (lr_depth < 0.0 || lr_pose < 0.0 || lr_attr < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "learning rates must be non-negative");
  }
  if (!(adam.clip_norm > 0.0)) throw Error(ErrorKind::InvalidArgument, "clip norm must be positive");
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
    throw Error(ErrorKind::InvalidArgument, "warmup fraction must lie in [0,1)");
  }
}

DepthMap SceneParameters::depth(int view) const {
  DepthMap d(width, height);
  for (size_t i = 0; i < d.data.size(); ++i) d.data[i] = std::exp(log_depth[view][i]) + residual_depth[view][i];
  return d;
}

void SceneParameters::clamp_residuals() {
  for (int k = 0; k < 2; ++k) {
    for (size_t i = 0; i < residual_depth[k].size(); ++i) {
      residual_depth[k][i] = std::max(residual_depth[k][i], kMinDepth - std::exp(log_depth[k][i]));
    }
  }
}

size_t SceneParameters::parameter_count() const {
  const size_t n = static_cast<size_t>(width) * height;
  return 4 * n + 12 + 2 * n * RawAttributeField::kChannels;
}

std::vector<double> SceneParameters::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (int k = 0; k < 2; ++k) out.insert(out.end(), log_depth[k].begin(), log_depth[k].end());
  for (int k = 0; k < 2; ++k) out.insert(out.end(), residual_depth[k].begin(), residual_depth[k].end());
  for (int k = 0; k < 2; ++k) {
    const Vec6 x = twists[k].as_vector();
    out.insert(out.end(), x.data(), x.data() + 6);
  }
  for (int k = 0; k < 2; ++k) out.insert(out.end(), raw[k].values.begin(), raw[k].values.end());
  return out;
}

void SceneParameters::unflatten(std::span<const double> values) {
  if (values.size() != parameter_count()) throw Error(ErrorKind::ShapeMismatch, "parameter vector size");
  auto it = values.begin();
  const auto take = [&it](std::vector<double>& dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  for (int k = 0; k < 2; ++k) take(log_depth[k]);
  for (int k = 0; k < 2; ++k) take(residual_depth[k]);
  for (int k = 0; k < 2; ++k) {
    Vec6 x;
    std::copy(it, it + 6, x.data());
    it += 6;
    twists[k] = Twist::from_vector(x);
  }
  for (int k = 0; k < 2; ++k) take(raw[k].values);
}

std::vector<double> learning_rates(const SceneParameters& params, const OptimizeConfig& cfg) {
  const size_t n = static_cast<size_t>(params.width) * params.height;
  std::vector<double> lr;
  lr.reserve(params.parameter_count());
  lr.insert(lr.end(), 4 * n, cfg.lr_depth);
  lr.insert(lr.end(), 12, cfg.lr_pose);
  lr.insert(lr.end(), 2 * n * RawAttributeField::kChannels, cfg.lr_attr);
  return lr;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(normal(rng), normal(rng), normal(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

}  // namespace

SceneParameters init_scene_params(const SceneBundle& bundle, const InitSpec& init) {
  bundle.validate();
  const CameraIntrinsics& K = bundle.K;
  SceneParameters p;
  p.width = K.width;
  p.height = K.height;
  const size_t n = static_cast<size_t>(K.pixel_count());
  std::mt19937_64 rng(init.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  if (init.depth == InitSpec::Depth::GroundTruth && !bundle.gt_depths) {
    throw Error(ErrorKind::BadInit, "ground-truth depth requested but the bundle has none");
  }
  double constant = init.constant_depth;
  if (init.depth == InitSpec::Depth::Constant && constant <= 0.0) {
    if (!bundle.gt_depths) throw Error(ErrorKind::BadInit, "no constant depth given and no depth to take a median of");
    std::vector<double> all((*bundle.gt_depths)[0].data);
    all.insert(all.end(), (*bundle.gt_depths)[1].data.begin(), (*bundle.gt_depths)[1].data.end());
    constant = median(all);
  }

  for (int k = 0; k < 2; ++k) {
    p.log_depth[k].assign(n, 0.0);
    p.residual_depth[k].assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      double d = constant;
      if (init.depth == InitSpec::Depth::GroundTruth) d = (*bundle.gt_depths)[k].data[i];
      if (!(d > 0.0) || !std::isfinite(d)) throw Error(ErrorKind::BadInit, "initial depth must be positive");
      if (init.depth_noise > 0.0) d *= std::max(0.1, 1.0 + init.depth_noise * normal(rng));
      p.log_depth[k][i] = std::log(d);
    }
  }

  for (int k = 0; k < 2; ++k) {
    RigidTransform pose = RigidTransform::identity();
    if (init.pose == InitSpec::Pose::GroundTruth) {
      if (!bundle.gt_poses) throw Error(ErrorKind::BadInit, "ground-truth pose requested but the bundle has none");
      pose = (*bundle.gt_poses)[k];
    }
    if (init.rotation_perturbation_deg != 0.0) {
      const double angle = init.rotation_perturbation_deg * std::numbers::pi / 180.0;
      pose.rotation = rotation_about_axis(random_unit(rng), angle) * pose.rotation;
    }
    if (init.translation_perturbation != 0.0) pose.translation += init.translation_perturbation * random_unit(rng);
    p.twists[k] = se3_log(pose);
  }

  const std::array<const Image*, 2> context{&bundle.image(View::Context1), &bundle.image(View::Context2)};
  for (int k = 0; k < 2; ++k) {
    RawAttributeField& raw = p.raw[k];
    raw = RawAttributeField(K.width, K.height);
    for (size_t i = 0; i < n; ++i) {
      double* r = raw.pixel(i);
      // one-pixel footprint at the initial depth
      const double footprint = std::exp(p.log_depth[k][i]) / K.fx;
      for (int j = 0; j < 3; ++j) r[RawAttributeField::kScale + j] = std::log(footprint);
      r[RawAttributeField::kRotation] = 1.0;
      for (int ch = 0; ch < 3; ++ch) r[RawAttributeField::kSh + ch] = (context[k]->data[i * 3 + ch] - 0.5) / kShY0;
    }
  }
  return p;
}

StepInfo adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                   std::span<const double> lr, const AdamConfig& cfg) {
  if (grads.size() != params.size() || lr.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam_step: parameter, gradient and rate sizes differ");
  }
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  StepInfo info;
  double sq = 0.0;
  for (size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      std::ostringstream msg;
      msg << "gradient " << i << " is " << grads[i] << " at step " << state.step;
      throw Error(ErrorKind::NonFiniteGradient, msg.str());
    }
    sq += grads[i] * grads[i];
  }
  info.gradient_norm = std::sqrt(sq);
  if (info.gradient_norm > cfg.clip_norm) info.clip_scale = cfg.clip_norm / info.gradient_norm;

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] * info.clip_scale;
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr[i] * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  return info;
}

double learning_rate_factor(int step, int total_steps, double warmup_fraction) {
  if (total_steps <= 0) return 0.0;
  const int warmup = static_cast<int>(std::lround(warmup_fraction * total_steps));
  if (step < warmup) return static_cast<double>(step + 1) / static_cast<double>(warmup);
  const int decay_steps = total_steps - warmup;
  if (decay_steps <= 0) return 0.0;
  return std::max(0.0, static_cast<double>(total_steps - step) / static_cast<double>(decay_steps));
}

namespace {

using Dual = Eigen::AutoDiffScalar<Vec6>;

// Chains gradients on (R, t, quaternion of R) back to the twist.
Vec6 twist_gradient(const Twist& twist, const Mat3& d_rotation, const Vec3& d_translation,
                    const Vec4& d_quaternion) {
  Eigen::Matrix<Dual, 3, 1> w, v;
  for (int i = 0; i < 3; ++i) {
    w(i) = Dual(twist.omega[i], 6, i);
    v(i) = Dual(twist.v[i], 6, 3 + i);
  }
  const auto e = detail::se3_exp_generic<Dual>(w, v);
  Vec6 g = Vec6::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) g += d_rotation(i, j) * e.rotation(i, j).derivatives();
    g += d_translation[i] * e.translation(i).derivatives();
  }
  for (int i = 0; i < 4; ++i) g += d_quaternion[i] * e.quaternion(i).derivatives();
  return g;
}

GaussianGradients slice(const GaussianGradients& g, size_t begin, size_t count) {
  GaussianGradients out;
  const auto b = static_cast<std::ptrdiff_t>(begin);
  const auto e = static_cast<std::ptrdiff_t>(begin + count);
  out.d_centers.assign(g.d_centers.begin() + b, g.d_centers.begin() + e);
  out.d_opacity.assign(g.d_opacity.begin() + b, g.d_opacity.begin() + e);
  out.d_scales.assign(g.d_scales.begin() + b, g.d_scales.begin() + e);
  out.d_orientation.assign(g.d_orientation.begin() + b, g.d_orientation.begin() + e);
  out.d_sh.assign(g.d_sh.begin() + b, g.d_sh.begin() + e);
  return out;
}

void accumulate(GaussianGradients& dst, const GaussianGradients& src) {
  for (size_t i = 0; i < dst.size(); ++i) {
    dst.d_centers[i] += src.d_centers[i];
    dst.d_opacity[i] += src.d_opacity[i];
    dst.d_scales[i] += src.d_scales[i];
    dst.d_orientation[i] += src.d_orientation[i];
    dst.d_sh[i] += src.d_sh[i];
  }
}

}  // namespace

GaussianSet assemble_gaussians(const SceneBundle& bundle, const SceneParameters& params) {
  const GaussianSet g1 = build_gaussians(params.raw[0], params.depth(0), bundle.K);
  const GaussianSet g2 = build_gaussians(params.raw[1], params.depth(1), bundle.K);
  return merge_gaussians(transform_gaussians(g1, params.pose(0)), transform_gaussians(g2, params.pose(1)));
}

LossEvaluation evaluate_scene(const SceneBundle& bundle, const SceneParameters& params, const OptimizeConfig& cfg,
                              bool with_gradient) {
  const CameraIntrinsics& K = bundle.K;
  const std::array<DepthMap, 2> depths{params.depth(0), params.depth(1)};
  const std::array<RigidTransform, 2> poses{params.pose(0), params.pose(1)};
  std::array<GaussianSet, 2> local;
  for (int k = 0; k < 2; ++k) local[k] = build_gaussians(params.raw[k], depths[k], K);
  const GaussianSet merged =
      merge_gaussians(transform_gaussians(local[0], poses[0]), transform_gaussians(local[1], poses[1]));

  const std::array<RigidTransform, 3> cameras{poses[0], RigidTransform::identity(), poses[1]};
  LossEvaluation out;
  for (int v = 0; v < 3; ++v) {
    out.renders[v] = render(merged, K, cameras[v], cfg.background, cfg.render, with_gradient);
  }

  const std::array<const Image*, 3> rendered{&out.renders[0].color, &out.renders[1].color, &out.renders[2].color};
  const std::array<const Image*, 3> images{&bundle.images[0], &bundle.images[1], &bundle.images[2]};
  RenderingLossGradients ren;
  if (cfg.loss.lambda2 > 0.0 || !with_gradient) {
    ren = rendering_loss_with_gradients(rendered, images, cfg.loss);
  }
  out.rendering = ren.value;

  // Reprojection uses the rendered target depth, clamped away from zero
  // where nothing was splatted.
  const DepthMap& rendered_depth = out.renders[1].depth;
  DepthMap depth_t = rendered_depth;
  std::vector<std::uint8_t> depth_clamped(depth_t.data.size(), 0);
  for (size_t i = 0; i < depth_t.data.size(); ++i) {
    if (depth_t.data[i] < SceneParameters::kMinDepth) {
      depth_t.data[i] = SceneParameters::kMinDepth;
      depth_clamped[i] = 1;
    }
  }
#ifndef NDEBUG
  for (size_t i = 0; i < depth_t.data.size(); ++i) {
    assert(depth_t.data[i] == std::max(rendered_depth.data[i], SceneParameters::kMinDepth));
  }
#endif
  ReprojectionGradients proj;
  if (with_gradient && cfg.loss.lambda1 > 0.0) {
    proj = reprojection_loss_with_gradients(bundle.image(View::Target), bundle.image(View::Context1),
                                            bundle.image(View::Context2), depth_t, poses[0], poses[1], K, cfg.loss);
  } else {
    proj.loss = reprojection_loss(bundle.image(View::Target), bundle.image(View::Context1),
                                  bundle.image(View::Context2), depth_t, poses[0], poses[1], K, cfg.loss);
  }
  out.reprojection = proj.loss.value;
  out.total = total_loss({out.reprojection, out.rendering}, cfg.loss);
  if (!with_gradient) return out;

  // Backward through the three renders.
  GaussianGradients d_merged = GaussianGradients::zeros(merged.size());
  std::array<Mat3, 2> d_rot{Mat3::Zero(), Mat3::Zero()};
  std::array<Vec3, 2> d_trans{Vec3::Zero(), Vec3::Zero()};
  std::array<Vec4, 2> d_quat{Vec4::Zero(), Vec4::Zero()};
  for (int v = 0; v < 3; ++v) {
    RenderUpstream up;
    if (cfg.loss.lambda2 > 0.0) {
      up.d_color = ren.d_renders[v];
      for (double& x : up.d_color.data) x *= cfg.loss.lambda2;
    }
    if (v == 1 && cfg.loss.lambda1 > 0.0) {
      up.d_depth = proj.d_depth;
      for (size_t i = 0; i < up.d_depth.data.size(); ++i) {
        up.d_depth.data[i] = depth_clamped[i] ? 0.0 : cfg.loss.lambda1 * up.d_depth.data[i];
      }
    }
    if (up.d_color.empty() && up.d_depth.data.empty()) continue;
    const RenderGradients rg = render_backward(merged, K, cameras[v], cfg.background, up, cfg.render, &out.renders[v]);
    accumulate(d_merged, rg.gaussians);
    if (v != 1) {
      const int k = v == 0 ? 0 : 1;
      d_rot[k] += rg.d_rotation;
      d_trans[k] += rg.d_translation;
    }
  }
  for (int k = 0; k < 2; ++k) {
    d_rot[k] += cfg.loss.lambda1 * proj.d_rotation[k];
    d_trans[k] += cfg.loss.lambda1 * proj.d_translation[k];
  }

  SceneParameters grad = params;
  const size_t n1 = local[0].size();
  for (int k = 0; k < 2; ++k) {
    const GaussianGradients part = slice(d_merged, k == 0 ? 0 : n1, local[k].size());
    const TransformGradients tg = transform_gaussians_backward(local[k], poses[k], part);
    d_rot[k] += tg.d_rotation;
    d_trans[k] += tg.d_translation;
    d_quat[k] += tg.d_quaternion;

    const BuildGradients bg = build_gaussians_backward(params.raw[k], depths[k], K, tg.d_input);
    grad.raw[k] = bg.d_raw;
    for (size_t i = 0; i < bg.d_depth.data.size(); ++i) {
      grad.log_depth[k][i] = bg.d_depth.data[i] * std::exp(params.log_depth[k][i]);
      grad.residual_depth[k][i] = bg.d_depth.data[i];
    }
    grad.twists[k] = Twist::from_vector(twist_gradient(params.twists[k], d_rot[k], d_trans[k], d_quat[k]));
  }
  out.gradient = grad.flatten();
  for (RenderOutput& r : out.renders) r.state.reset();
  return out;
}

std::vector<double> ema(std::span<const double> values, int window) {
  std::vector<double> out;
  out.reserve(values.size());
  const double a = 2.0 / (window + 1.0);
  double s = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    s = i == 0 ? values[0] : a * values[i] + (1.0 - a) * s;
    out.push_back(s);
  }
  return out;
}

OptimizationResult optimize_scene(const SceneBundle& bundle, const OptimizeConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  OptimizationResult result;
  result.report.config = cfg;
  SceneParameters params = init_scene_params(bundle, cfg.init);
  params.clamp_residuals();

  const std::vector<double> base_lr = learning_rates(params, cfg);
  std::vector<double> lr(base_lr.size());
  std::vector<double> flat = params.flatten();
  AdamState state;
  double initial_loss = 0.0;
  int above = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    const LossEvaluation eval = evaluate_scene(bundle, params, cfg, true);
    if (step == 0) {
      initial_loss = eval.total;
      result.report.initial_target_psnr = psnr(eval.renders[1].color, bundle.image(View::Target));
    }
    result.report.trace.push_back({eval.total, eval.reprojection, eval.rendering});
    if (!std::isfinite(eval.total)) throw Error(ErrorKind::Diverged, "loss is not finite at step " + std::to_string(step));
    above = eval.total > cfg.divergence_factor * initial_loss ? above + 1 : 0;
    if (above >= cfg.divergence_patience) {
      throw Error(ErrorKind::Diverged, "loss above " + std::to_string(cfg.divergence_factor) +
                                           "x its initial value for " + std::to_string(above) + " steps");
    }

    const double factor = learning_rate_factor(step, cfg.steps, cfg.warmup_fraction);
    for (size_t i = 0; i < lr.size(); ++i) lr[i] = base_lr[i] * factor;
    adam_step(flat, eval.gradient, state, lr, cfg.adam);
    params.unflatten(flat);
    params.clamp_residuals();
    flat = params.flatten();
  }

  result.params = params;
  result.poses = {params.pose(0), params.pose(1)};
  result.gaussians = assemble_gaussians(bundle, params);
  const RenderOutput target = render(result.gaussians, bundle.K, RigidTransform::identity(), cfg.background, cfg.render);
  result.report.target_psnr = psnr(target.color, bundle.image(View::Target));
  if (cfg.steps == 0) result.report.initial_target_psnr = result.report.target_psnr;
  if (bundle.gt_poses) {
    result.report.pose_errors = std::array<PoseError, 2>{pose_error(result.poses[0], (*bundle.gt_poses)[0]),
                                                         pose_error(result.poses[1], (*bundle.gt_poses)[1])};
  }
  result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace splatgeo
