#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splatgeo/eval.hpp"
#include "splatgeo/gaussian.hpp"
#include "splatgeo/photometric.hpp"
#include "splatgeo/rasterizer.hpp"
#include "splatgeo/scene_io.hpp"

namespace splatgeo {

// How the free parameters start out.
struct InitSpec {
  enum class Pose { Identity, GroundTruth };
  enum class Depth { Constant, GroundTruth };

  Pose pose = Pose::GroundTruth;
  Depth depth = Depth::GroundTruth;
  double rotation_perturbation_deg = 0.0;  // about a random axis
  double translation_perturbation = 0.0;   // scene units, random direction
  double depth_noise = 0.0;                // relative per-pixel std
  double constant_depth = 0.0;             // 0 = median ground-truth depth
  std::uint64_t seed = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.5;  // global gradient norm
};

struct OptimizeConfig {
  LossConfig loss;
  AdamConfig adam;
  RenderSettings render;
  InitSpec init;
  int steps = 450;
  double lr_depth = 1e-2;
  double lr_pose = 1e-2;
  double lr_attr = 1e-2;
  // Warmup length as a fraction of the run.
  double warmup_fraction = 0.01;
  Vec3 background = Vec3::Zero();
  double divergence_factor = 10.0;
  int divergence_patience = 100;

  void validate() const;
};

// Free parameters standing in for the depth, refinement and pose networks.
// Index 0 is context view c1, index 1 is c2.
struct SceneParameters {
  int width = 0;
  int height = 0;
  std::array<std::vector<double>, 2> log_depth;
  std::array<std::vector<double>, 2> residual_depth;
  std::array<Twist, 2> twists;  // context-to-target poses
  std::array<RawAttributeField, 2> raw;

  static constexpr double kMinDepth = 1e-3;

  DepthMap depth(int view) const;
  RigidTransform pose(int view) const { return se3_exp(twists[view]); }

  // Enforces exp(log_depth) + residual >= kMinDepth.
  void clamp_residuals();

  size_t parameter_count() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> values);
};

// Per-parameter learning rates (before scheduling) in flatten() order.
std::vector<double> learning_rates(const SceneParameters& params, const OptimizeConfig& cfg);

SceneParameters init_scene_params(const SceneBundle& bundle, const InitSpec& init);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;
};

struct StepInfo {
  double gradient_norm = 0.0;
  double clip_scale = 1.0;
};

// One clipped Adam update. lr holds the scheduled rate per parameter.
StepInfo adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                   std::span<const double> lr, const AdamConfig& cfg);

// Linear warmup then linear decay to zero at total_steps.
double learning_rate_factor(int step, int total_steps, double warmup_fraction);

struct LossEvaluation {
  double total = 0.0;
  double reprojection = 0.0;
  double rendering = 0.0;
  std::vector<double> gradient;  // flatten() order; empty unless requested
  std::array<RenderOutput, 3> renders;  // c1, t, c2
};

// Builds the context Gaussians, merges them in the target frame, renders all
// three views and evaluates lambda1 * L_proj + lambda2 * L_ren with the
// rendered target depth inside L_proj.
LossEvaluation evaluate_scene(const SceneBundle& bundle, const SceneParameters& params, const OptimizeConfig& cfg,
                              bool with_gradient);

GaussianSet assemble_gaussians(const SceneBundle& bundle, const SceneParameters& params);

struct LossTraceEntry {
  double total = 0.0;
  double reprojection = 0.0;
  double rendering = 0.0;
};

struct OptimizationReport {
  std::vector<LossTraceEntry> trace;
  std::optional<std::array<PoseError, 2>> pose_errors;
  double initial_target_psnr = 0.0;
  double target_psnr = 0.0;
  double wall_seconds = 0.0;
  OptimizeConfig config;
};

struct OptimizationResult {
  GaussianSet gaussians;  // target frame
  std::array<RigidTransform, 2> poses;
  SceneParameters params;
  OptimizationReport report;
};

OptimizationResult optimize_scene(const SceneBundle& bundle, const OptimizeConfig& cfg);

// Exponential moving average with the given window (alpha = 2 / (window + 1)).
std::vector<double> ema(std::span<const double> values, int window);

}  // namespace splatgeo
