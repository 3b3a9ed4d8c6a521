#include <random>

#include <gtest/gtest.h>

#include "splatgeo/eval.hpp"
#include "test_util.hpp"

namespace splatgeo {
namespace {

Trajectory random_trajectory(size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Trajectory t;
  for (size_t i = 0; i < n; ++i) t.emplace_back(normal(rng), normal(rng), normal(rng));
  return t;
}

double rmse(const Trajectory& a, const Trajectory& b, const SimilarityAlignment& s) {
  double sq = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sq += (s.apply(a[i]) - b[i]).squaredNorm();
  return std::sqrt(sq / a.size());
}

TEST(Psnr, KnownValues) {
  const Image a = constant_image(4, 4, 3, 0.5);
  const Image b = constant_image(4, 4, 3, 0.6);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
  EXPECT_EQ(psnr(a, a), kPsnrIdentical);
  EXPECT_THROW(psnr(a, Image(4, 3, 3)), Error);
}

TEST(PoseError, IdenticalIsZero) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 50; ++i) {
    const RigidTransform T{testing::random_rotation(rng), Vec3(0.3, -0.2, 1.0) * (i + 1)};
    const PoseError e = pose_error(T, T);
    EXPECT_EQ(e.rotation_deg, 0.0);
    EXPECT_EQ(e.translation_deg, 0.0);
    EXPECT_FALSE(e.degenerate_translation);
  }
}

TEST(PoseError, KnownAngles) {
  RigidTransform gt;
  gt.translation = Vec3(1.0, 0.0, 0.0);
  RigidTransform est;
  est.rotation = rotation_about_axis(Vec3(0.0, 0.6, 0.8), 10.0 * M_PI / 180.0);
  est.translation = Vec3(2.0, 2.0, 0.0);  // 45 degrees, scale ignored
  const PoseError e = pose_error(est, gt);
  EXPECT_NEAR(e.rotation_deg, 10.0, 1e-9);
  EXPECT_NEAR(e.translation_deg, 45.0, 1e-9);
}

TEST(PoseError, ZeroTranslationIsDegenerate) {
  const PoseError e = pose_error(RigidTransform::identity(), RigidTransform::identity());
  EXPECT_TRUE(e.degenerate_translation);
  EXPECT_TRUE(std::isnan(e.translation_deg));
  EXPECT_EQ(e.rotation_deg, 0.0);
}

TEST(Ate, SimilarityCopiesAlignExactly) {
  std::mt19937_64 rng(52);
  std::uniform_real_distribution<double> u(0.2, 5.0);
  for (int i = 0; i < 100; ++i) {
    const Trajectory gt = random_trajectory(3 + i % 10, rng);
    SimilarityAlignment s;
    s.scale = u(rng);
    s.rotation = testing::random_rotation(rng);
    s.translation = Vec3(u(rng), -u(rng), u(rng));
    Trajectory est;
    for (const Vec3& p : gt) est.push_back(s.apply(p));
    EXPECT_LT(ate(est, gt), 1e-9);
    const SimilarityAlignment back = align_similarity(est, gt);
    EXPECT_NEAR(back.scale, 1.0 / s.scale, 1e-9);
  }
}

TEST(Ate, AlignmentIsLeastSquaresOptimal) {
  // No random nearby similarity beats the returned alignment.
  std::mt19937_64 rng(53);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory est = random_trajectory(8, rng), gt = random_trajectory(8, rng);
    const SimilarityAlignment best = align_similarity(est, gt);
    EXPECT_NEAR(best.rotation.determinant(), 1.0, 1e-12);
    const double e0 = rmse(est, gt, best);
    EXPECT_NEAR(ate(est, gt), e0, 1e-12);
    for (int k = 0; k < 500; ++k) {
      SimilarityAlignment s = best;
      const double step = k < 250 ? 1e-2 : 1e-4;
      s.scale *= 1.0 + step * normal(rng);
      s.rotation = rotation_about_axis(Vec3(normal(rng), normal(rng), normal(rng)).normalized(), step * normal(rng)) *
                   s.rotation;
      s.translation += step * Vec3(normal(rng), normal(rng), normal(rng));
      EXPECT_GE(rmse(est, gt, s), e0 - 1e-12);
    }
  }
}

TEST(Ate, TwoPointsAlwaysAlign) {
  std::mt19937_64 rng(54);
  for (int i = 0; i < 20; ++i) {
    EXPECT_LT(ate(random_trajectory(2, rng), random_trajectory(2, rng)), 1e-9);
  }
}

TEST(Ate, LengthChecks) {
  std::mt19937_64 rng(55);
  try {
    ate(random_trajectory(3, rng), random_trajectory(4, rng));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LengthMismatch);
  }
  EXPECT_THROW(ate(random_trajectory(1, rng), random_trajectory(1, rng)), Error);
}

}  // namespace
}  // namespace splatgeo
