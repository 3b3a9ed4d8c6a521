#include <random>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "splatgeo/geometry.hpp"
#include "test_util.hpp"

namespace splatgeo {
namespace {

using testing::random_rotation;

Eigen::Matrix4d homogeneous(const RigidTransform& T) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = T.rotation;
  m.topRightCorner<3, 1>() = T.translation;
  return m;
}

Eigen::Matrix4d twist_hat(const Twist& xi) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = skew(xi.omega);
  m.topRightCorner<3, 1>() = xi.v;
  return m;
}

RigidTransform random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return {random_rotation(rng), Vec3(n(rng), n(rng), n(rng))};
}

TEST(Se3, ExpMatchesMatrixExponential) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const double scale = i < 50 ? 1e-6 : 1.0;
    const Twist xi{scale * Vec3(n(rng), n(rng), n(rng)), Vec3(n(rng), n(rng), n(rng))};
    const Eigen::Matrix4d expected = twist_hat(xi).exp();
    EXPECT_LT((homogeneous(se3_exp(xi)) - expected).norm(), 1e-12);
  }
}

TEST(Se3, RotationMatchesRodrigues) {
  const Vec3 axis = Vec3(1.0, -2.0, 0.5).normalized();
  const double angle = 0.7;
  const RigidTransform T = se3_exp({axis * angle, Vec3::Zero()});
  const Mat3 expected = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  EXPECT_LT((T.rotation - expected).norm(), 1e-14);
  EXPECT_LT(T.translation.norm(), 1e-15);
}

TEST(Se3, LogInvertsExp) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
    // Angles from tiny up to just below pi.
    const double angle = i < 100 ? 1e-9 * u(rng) : (i < 150 ? M_PI - 1e-4 * u(rng) : 3.1 * u(rng));
    const Twist xi{axis * angle, Vec3(n(rng), n(rng), n(rng))};
    const Twist back = se3_log(se3_exp(xi));
    EXPECT_LT((back.as_vector() - xi.as_vector()).norm(), 1e-7) << "angle " << angle;
  }
}

TEST(Se3, ComposeIsAssociative) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const RigidTransform a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    const RigidTransform left = se3_compose(se3_compose(a, b), c);
    const RigidTransform right = se3_compose(a, se3_compose(b, c));
    EXPECT_LT((homogeneous(left) - homogeneous(right)).norm(), 1e-12);
  }
}

TEST(Se3, ComposeAppliesRightFirst) {
  std::mt19937_64 rng(4);
  const RigidTransform a = random_pose(rng), b = random_pose(rng);
  const Vec3 p(0.3, -1.2, 2.0);
  EXPECT_LT((se3_compose(a, b).apply(p) - a.apply(b.apply(p))).norm(), 1e-12);
}

TEST(Se3, InverseComposesToIdentity) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const RigidTransform a = random_pose(rng);
    EXPECT_LT((homogeneous(se3_compose(a, se3_inverse(a))) - Eigen::Matrix4d::Identity()).norm(), 1e-12);
  }
}

TEST(Quaternion, MatchesEigen) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 100; ++i) {
    const Vec4 q = testing::random_quaternion(rng);
    const Eigen::Quaterniond e(q[0], q[1], q[2], q[3]);
    EXPECT_LT((quat_to_rotation(q) - e.toRotationMatrix()).norm(), 1e-13);

    const Vec4 back = quat_from_rotation(quat_to_rotation(q));
    EXPECT_LT(std::min((back - q).norm(), (back + q).norm()), 1e-12);

    const Vec4 r = testing::random_quaternion(rng);
    const Eigen::Quaterniond prod = e * Eigen::Quaterniond(r[0], r[1], r[2], r[3]);
    const Vec4 expected(prod.w(), prod.x(), prod.y(), prod.z());
    EXPECT_LT((quat_multiply(q, r) - expected).norm(), 1e-13);
    EXPECT_LT((quat_right_matrix(r) * q - expected).norm(), 1e-13);
  }
}

TEST(Rotation, GradientToTangentMatchesFiniteDifference) {
  std::mt19937_64 rng(7);
  const Mat3 R = random_rotation(rng);
  Mat3 A;
  A << 0.3, -1.0, 0.2, 0.7, 0.1, -0.4, 1.1, 0.5, -0.9;
  // L(R) = sum(A .* R) has dL/dR = A.
  const Vec3 tangent = rotation_gradient_to_tangent(A, R);
  for (int k = 0; k < 3; ++k) {
    const auto f = [&](double e) { return (A.array() * (rotation_about_axis(Vec3::Unit(k), e) * R).array()).sum(); };
    EXPECT_NEAR(tangent[k], testing::central_difference(f, 0.0, 1e-4), 1e-9);
  }
}

TEST(Epipolar, ResidualVanishesOnCorrespondences) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const CameraIntrinsics K = testing::square_camera(64, 60.0);
  for (int trial = 0; trial < 20; ++trial) {
    RigidTransform src_to_dst{random_rotation(rng, 0.2), Vec3(u(rng) - 0.5, u(rng) - 0.5, 0.2 * u(rng))};
    const Mat3 F = fundamental_matrix(K, src_to_dst);
    for (int i = 0; i < 50; ++i) {
      const Vec3 p(64 * u(rng), 64 * u(rng), 1.0);
      const Vec3 X = (2.0 + 3.0 * u(rng)) * K.back_project(p);
      const Vec2 q = K.project(src_to_dst.apply(X));
      EXPECT_LT(std::abs(Vec3(q.x(), q.y(), 1.0).dot(F * p)), 1e-9);
      const Vec3 line = epipolar_line(K, src_to_dst, p.head<2>());
      EXPECT_LT(std::abs(line.dot(Vec3(q.x(), q.y(), 1.0))), 1e-9);
    }
  }
}

TEST(Epipolar, ZeroBaselineThrows) {
  const CameraIntrinsics K = testing::square_camera(32, 30.0);
  try {
    epipolar_line(K, RigidTransform::identity(), Vec2(3.0, 4.0));
    FAIL() << "expected ZeroBaseline";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroBaseline);
  }
}

TEST(Embedding, RaysAndPluckerLines) {
  const CameraIntrinsics K = testing::square_camera(8, 10.0);
  const RayField rays = ray_embedding(K);
  ASSERT_EQ(rays.rays.size(), 64u);
  EXPECT_LT((rays.at(0, 0) - Vec3(-0.35, -0.35, 1.0)).norm(), 1e-15);

  std::mt19937_64 rng(9);
  const RigidTransform T{random_rotation(rng), Vec3(0.5, -1.0, 2.0)};
  const PluckerField lines = plucker_embedding(K, T);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const Vec6& l = lines.at(x, y);
      const Vec3 d = l.head<3>(), m = l.tail<3>();
      EXPECT_NEAR(d.norm(), 1.0, 1e-14);
      EXPECT_NEAR(d.dot(m), 0.0, 1e-12);
      // Every point on the ray has the same moment.
      const Vec3 on_ray = T.apply(3.0 * rays.at(x, y));
      EXPECT_LT((on_ray.cross(d) - m).norm(), 1e-12);
    }
  }
}

TEST(Intrinsics, ValidateRejectsBadCameras) {
  CameraIntrinsics K = testing::square_camera(16, 10.0);
  EXPECT_NO_THROW(K.validate());
  K.fx = 0.0;
  EXPECT_THROW(K.validate(), Error);
  K = testing::square_camera(16, 10.0);
  K.cx = 20.0;
  EXPECT_THROW(K.validate(), Error);
}

}  // namespace
}  // namespace splatgeo
