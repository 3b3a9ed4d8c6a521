#include <random>

#include <gtest/gtest.h>

#include "splatgeo/optimize.hpp"
#include "test_util.hpp"

namespace splatgeo {
namespace {

SceneBundle small_scene(std::uint64_t seed) {
  SynthSpec spec;
  spec.seed = seed;
  spec.width = spec.height = 16;
  spec.focal = 16.0;
  spec.gaussian_count = 60;
  return generate_synthetic_scene(spec);
}

TEST(Adam, FirstStepClosedForm) {
  std::vector<double> x{1.0, -2.0, 0.5};
  const std::vector<double> g{0.1, -0.2, 0.0};
  const std::vector<double> lr{0.01, 0.02, 0.03};
  AdamState state;
  AdamConfig cfg;
  const StepInfo info = adam_step(x, g, state, lr, cfg);
  EXPECT_EQ(info.clip_scale, 1.0);
  EXPECT_NEAR(info.gradient_norm, std::sqrt(0.05), 1e-15);
  // m_hat = g, v_hat = g^2: the step is lr * g / (|g| + eps).
  EXPECT_NEAR(x[0], 1.0 - 0.01 * 0.1 / (0.1 + 1e-8), 1e-15);
  EXPECT_NEAR(x[1], -2.0 + 0.02 * 0.2 / (0.2 + 1e-8), 1e-15);
  EXPECT_EQ(x[2], 0.5);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ClipsGlobalNorm) {
  std::vector<double> x{0.0, 0.0};
  const std::vector<double> g{3.0, 4.0};
  const std::vector<double> lr{1.0, 1.0};
  AdamState state;
  const StepInfo info = adam_step(x, g, state, lr, AdamConfig{});
  EXPECT_NEAR(info.gradient_norm, 5.0, 1e-15);
  EXPECT_NEAR(info.clip_scale, 0.1, 1e-15);
  // First moment holds the clipped gradient, norm 0.5.
  EXPECT_NEAR(state.m[0], 0.1 * 0.3, 1e-15);
  EXPECT_NEAR(state.m[1], 0.1 * 0.4, 1e-15);
  EXPECT_NEAR(std::hypot(state.m[0], state.m[1]) / 0.1, 0.5, 1e-15);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> x{1.0, 2.0, 3.0};
  const std::vector<double> g(3, 0.0), lr(3, 0.1);
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_step(x, g, state, lr, AdamConfig{});
  EXPECT_EQ(x, (std::vector<double>{1.0, 2.0, 3.0}));
}

TEST(Adam, RejectsNonFiniteAndMismatchedSizes) {
  std::vector<double> x{1.0, 2.0};
  AdamState state;
  const std::vector<double> lr(2, 0.1);
  try {
    adam_step(x, std::vector<double>{0.0, std::nan("")}, state, lr, AdamConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonFiniteGradient);
  }
  EXPECT_THROW(adam_step(x, std::vector<double>{0.0}, state, lr, AdamConfig{}), Error);
}

TEST(Schedule, WarmupThenLinearDecay) {
  // 1000 steps, 1% warmup: 10 warmup steps.
  EXPECT_DOUBLE_EQ(learning_rate_factor(0, 1000, 0.01), 0.1);
  EXPECT_DOUBLE_EQ(learning_rate_factor(9, 1000, 0.01), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate_factor(10, 1000, 0.01), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate_factor(505, 1000, 0.01), 0.5);
  EXPECT_DOUBLE_EQ(learning_rate_factor(999, 1000, 0.01), 1.0 / 990.0);
  EXPECT_DOUBLE_EQ(learning_rate_factor(0, 10, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(learning_rate_factor(0, 0, 0.01), 0.0);
  double prev = 2.0;
  for (int s = 10; s < 1000; ++s) {
    const double f = learning_rate_factor(s, 1000, 0.01);
    EXPECT_LT(f, prev);
    prev = f;
  }
}

TEST(Ema, SmoothsAndPreservesMonotonicity) {
  const std::vector<double> v{5.0, 4.0, 4.0, 3.5, 1.0, 0.9, 0.9, 0.2};
  const std::vector<double> s = ema(v, 3);
  ASSERT_EQ(s.size(), v.size());
  EXPECT_EQ(s[0], 5.0);
  EXPECT_DOUBLE_EQ(s[1], 0.5 * 4.0 + 0.5 * 5.0);
  for (size_t i = 1; i < s.size(); ++i) EXPECT_LE(s[i], s[i - 1]);
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> dec(200);
  double x = 10.0;
  for (double& d : dec) d = (x -= u(rng));
  const std::vector<double> sd = ema(dec, 25);
  for (size_t i = 1; i < sd.size(); ++i) EXPECT_LE(sd[i], sd[i - 1]);
}

TEST(Parameters, FlattenRoundTrip) {
  const SceneBundle b = small_scene(1);
  InitSpec init;
  init.rotation_perturbation_deg = 2.0;
  init.depth_noise = 0.05;
  const SceneParameters p = init_scene_params(b, init);
  const std::vector<double> flat = p.flatten();
  ASSERT_EQ(flat.size(), p.parameter_count());
  ASSERT_EQ(flat.size(), 4u * 256 + 12 + 2u * 256 * 22);
  SceneParameters q = p;
  std::vector<double> shifted = flat;
  for (double& v : shifted) v += 0.5;
  q.unflatten(shifted);
  EXPECT_EQ(q.flatten(), shifted);
  EXPECT_THROW(q.unflatten(std::vector<double>(3)), Error);
  const std::vector<double> lr = learning_rates(p, OptimizeConfig{});
  ASSERT_EQ(lr.size(), flat.size());
}

TEST(Parameters, ClampKeepsDepthPositive) {
  const SceneBundle b = small_scene(2);
  SceneParameters p = init_scene_params(b, InitSpec{});
  p.residual_depth[0][7] = -100.0;
  p.clamp_residuals();
  EXPECT_NEAR(p.depth(0).data[7], SceneParameters::kMinDepth, 1e-12);
}

TEST(Init, GroundTruthReproducesPosesAndDepths) {
  const SceneBundle b = small_scene(3);
  const SceneParameters p = init_scene_params(b, InitSpec{});
  for (int k = 0; k < 2; ++k) {
    EXPECT_LT((p.pose(k).rotation - (*b.gt_poses)[k].rotation).norm(), 1e-12);
    EXPECT_LT((p.pose(k).translation - (*b.gt_poses)[k].translation).norm(), 1e-12);
    for (size_t i = 0; i < p.depth(k).data.size(); ++i) {
      EXPECT_NEAR(p.depth(k).data[i], (*b.gt_depths)[k].data[i], 1e-12);
    }
  }
}

TEST(Init, PerturbationHasRequestedMagnitude) {
  const SceneBundle b = small_scene(4);
  InitSpec init;
  init.rotation_perturbation_deg = 2.0;
  init.translation_perturbation = 0.05;
  init.seed = 9;
  const SceneParameters p = init_scene_params(b, init);
  for (int k = 0; k < 2; ++k) {
    const PoseError e = pose_error(p.pose(k), (*b.gt_poses)[k]);
    EXPECT_NEAR(e.rotation_deg, 2.0, 1e-9);
    EXPECT_NEAR((p.pose(k).translation - (*b.gt_poses)[k].translation).norm(), 0.05, 1e-9);
  }
  EXPECT_EQ(init_scene_params(b, init).flatten(), p.flatten());
}

TEST(Init, MissingGroundTruthIsBadInit) {
  SceneBundle b = small_scene(5);
  b.gt_poses.reset();
  try {
    init_scene_params(b, InitSpec{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadInit);
  }
  InitSpec identity;
  identity.pose = InitSpec::Pose::Identity;
  EXPECT_NO_THROW(init_scene_params(b, identity));
}

TEST(Evaluate, GroundTruthInitHasLowReprojection) {
  SynthSpec spec;
  spec.seed = 6;
  const SceneBundle b = generate_synthetic_scene(spec);
  OptimizeConfig cfg;
  const LossEvaluation e = evaluate_scene(b, init_scene_params(b, cfg.init), cfg, false);
  EXPECT_LT(e.reprojection, 1e-3);
  EXPECT_TRUE(e.gradient.empty());
  EXPECT_NEAR(e.total, e.reprojection + e.rendering, 1e-15);
}

TEST(Evaluate, GradientMatchesFiniteDifference) {
  const SceneBundle b = small_scene(7);
  OptimizeConfig cfg;
  cfg.render = testing::smooth_settings();
  cfg.loss.ssim_window = 7;
  cfg.init.rotation_perturbation_deg = 2.0;
  cfg.init.depth_noise = 0.05;
  const SceneParameters p = init_scene_params(b, cfg.init);
  const LossEvaluation e = evaluate_scene(b, p, cfg, true);
  const std::vector<double> flat = p.flatten();
  ASSERT_EQ(e.gradient.size(), flat.size());

  const size_t n = 256;
  std::vector<size_t> probes;
  for (size_t i = 0; i < 12; ++i) probes.push_back(4 * n + i);                       // twists
  for (size_t i : {17u, 100u, 300u, 511u}) probes.push_back(i);                     // log depth
  for (size_t i : {2 * n + 40, 3 * n + 90}) probes.push_back(i);                    // residual depth
  for (size_t i : {0u, 1u, 3u, 5u, 9u, 20u, 21u, 44u + 22u * 70u}) probes.push_back(4 * n + 12 + i);  // raw
  for (size_t i : probes) {
    const auto f = [&](double eps) {
      std::vector<double> x = flat;
      x[i] += eps;
      SceneParameters q = p;
      q.unflatten(x);
      return evaluate_scene(b, q, cfg, false).total;
    };
    // Splats unprojected from both views lie at nearly equal depths, so larger steps cross
    // depth-order swaps where the composite jumps; the loss is only piecewise smooth.
    const double numeric = testing::central_difference(f, 0.0, 1e-7);
    EXPECT_TRUE(testing::gradient_close(e.gradient[i], numeric, 1e-3, 1e-8))
        << "index " << i << " analytic " << e.gradient[i] << " numeric " << numeric;
  }
}

TEST(Optimize, ShortRunReducesLoss) {
  const SceneBundle b = small_scene(8);
  OptimizeConfig cfg;
  cfg.steps = 40;
  cfg.init.rotation_perturbation_deg = 2.0;
  cfg.init.depth_noise = 0.05;
  const OptimizationResult r = optimize_scene(b, cfg);
  ASSERT_EQ(r.report.trace.size(), 40u);
  EXPECT_LT(r.report.trace.back().total, 0.7 * r.report.trace.front().total);
  EXPECT_GT(r.report.target_psnr, r.report.initial_target_psnr);
  ASSERT_TRUE(r.report.pose_errors.has_value());
  EXPECT_EQ(r.gaussians.size(), 2u * 256);
  // Deterministic for a fixed configuration.
  const OptimizationResult again = optimize_scene(b, cfg);
  EXPECT_EQ(again.params.flatten(), r.params.flatten());
}

TEST(Optimize, ZeroStepsAndBadConfig) {
  const SceneBundle b = small_scene(9);
  OptimizeConfig cfg;
  cfg.steps = 0;
  const OptimizationResult r = optimize_scene(b, cfg);
  EXPECT_TRUE(r.report.trace.empty());
  EXPECT_EQ(r.report.initial_target_psnr, r.report.target_psnr);
  cfg.lr_pose = -1.0;
  EXPECT_THROW(optimize_scene(b, cfg), Error);
  cfg = OptimizeConfig{};
  cfg.warmup_fraction = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
}

}  // namespace
}  // namespace splatgeo
