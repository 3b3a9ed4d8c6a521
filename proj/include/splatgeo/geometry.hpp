#pragma once

#include <cmath>
#include <type_traits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "splatgeo/error.hpp"

namespace splatgeo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// Pinhole camera. Pixel (x, y) covers [x, x+1) x [y, y+1) and samples at its
// center (x + 0.5, y + 0.5).
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;

  // Homogeneous pixel-center coordinate p(x, y).
  Vec3 pixel_center(int x, int y) const { return {x + 0.5, y + 0.5, 1.0}; }

  // K^-1 applied to a homogeneous image point.
  Vec3 back_project(const Vec3& homogeneous) const {
    return {(homogeneous.x() - cx * homogeneous.z()) / fx,
            (homogeneous.y() - cy * homogeneous.z()) / fy, homogeneous.z()};
  }

  Vec2 project(const Vec3& camera_point) const {
    return {fx * camera_point.x() / camera_point.z() + cx,
            fy * camera_point.y() / camera_point.z() + cy};
  }

  int pixel_count() const { return width * height; }

  // Throws InvalidArgument when the invariants fx, fy > 0 and the principal
  // point inside the image do not hold.
  void validate() const;
};

// Rigid motion x -> R x + t. Poses are stored camera-to-world throughout the
// library; a view (world-to-camera) transform is obtained with se3_inverse.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

// Tangent-space pose parameterization: axis-angle omega and translational v.
struct Twist {
  Vec3 omega = Vec3::Zero();
  Vec3 v = Vec3::Zero();

  Vec6 as_vector() const {
    Vec6 x;
    x << omega, v;
    return x;
  }
  static Twist from_vector(const Vec6& x) { return {x.head<3>(), x.tail<3>()}; }
};

inline Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0.0, -w.z(), w.y(), w.z(), 0.0, -w.x(), -w.y(), w.x(), 0.0;
  return m;
}

// Returns a applied after b: x -> a(b(x)).
RigidTransform se3_compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform se3_inverse(const RigidTransform& transform);
RigidTransform se3_exp(const Twist& twist);
Twist se3_log(const RigidTransform& transform);

Mat3 rotation_about_axis(const Vec3& axis, double angle_rad);
Mat3 rotation_z(double angle_rad);

// Quaternions are (w, x, y, z).
Mat3 quat_to_rotation(const Vec4& q);
Vec4 quat_from_rotation(const Mat3& rotation);
Vec4 quat_multiply(const Vec4& a, const Vec4& b);
// Matrices L(a), R(b) with a (x) b = L(a) b = R(b) a.
Eigen::Matrix4d quat_left_matrix(const Vec4& a);
Eigen::Matrix4d quat_right_matrix(const Vec4& b);

// Gradient of a scalar with respect to a rotation matrix G = dL/dR, mapped to
// the left-perturbation tangent R <- exp([delta]x) R.
Vec3 rotation_gradient_to_tangent(const Mat3& grad, const Mat3& rotation);

struct RayField {
  int width = 0;
  int height = 0;
  std::vector<Vec3> rays;  // row-major

  const Vec3& at(int x, int y) const { return rays[static_cast<size_t>(y) * width + x]; }
};

struct PluckerField {
  int width = 0;
  int height = 0;
  std::vector<Vec6> lines;  // (d, o x d), row-major

  const Vec6& at(int x, int y) const { return lines[static_cast<size_t>(y) * width + x]; }
};

RayField ray_embedding(const CameraIntrinsics& K);

// camera_to_target maps camera-frame points into the target frame.
PluckerField plucker_embedding(const CameraIntrinsics& K, const RigidTransform& camera_to_target);

// F such that p_dstᵀ F p_src = 0, where source_to_dest maps source camera
// coordinates into destination camera coordinates and both views share K.
Mat3 fundamental_matrix(const CameraIntrinsics& K, const RigidTransform& source_to_dest);

// Epipolar line in the destination image for a source pixel (continuous
// image coordinates), scaled so that (l0, l1) has unit norm. The signed
// distance of a point p' to the line is then l · (p', 1).
Vec3 epipolar_line(const CameraIntrinsics& K, const RigidTransform& source_to_dest, const Vec2& pixel);

namespace detail {

template <typename S>
double scalar_value(const S& x) {
  if constexpr (std::is_arithmetic_v<S>) {
    return static_cast<double>(x);
  } else {
    return x.value();
  }
}

// Exponential map shared by the double path and the autodiff Jacobians used
// by the optimizer. Produces R, t = V v and the unit quaternion of R.
template <typename S>
struct Se3ExpResult {
  Eigen::Matrix<S, 3, 3> rotation;
  Eigen::Matrix<S, 3, 1> translation;
  Eigen::Matrix<S, 4, 1> quaternion;
};

template <typename S>
Se3ExpResult<S> se3_exp_generic(const Eigen::Matrix<S, 3, 1>& omega, const Eigen::Matrix<S, 3, 1>& v) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  using Mat = Eigen::Matrix<S, 3, 3>;

  Mat W;
  W << S(0), -omega(2), omega(1), omega(2), S(0), -omega(0), -omega(1), omega(0), S(0);
  const Mat W2 = W * W;
  const S theta_sq = omega.squaredNorm();
  const double theta_value = std::sqrt(scalar_value(theta_sq));

  Se3ExpResult<S> out;
  Mat V;
  if (theta_value < 1e-8) {
    out.rotation = Mat::Identity() + W + S(0.5) * W2;
    V = Mat::Identity() + S(0.5) * W + S(1.0 / 6.0) * W2;
    out.quaternion << S(1) - theta_sq / S(8), (S(0.5) - theta_sq / S(48)) * omega;
  } else {
    const S theta = sqrt(theta_sq);
    const S half_sin = sin(theta * S(0.5));
    const S a = sin(theta) / theta;
    const S b = S(2) * half_sin * half_sin / theta_sq;
    S c;
    if (theta_value < 1e-2) {
      c = S(1.0 / 6.0) - theta_sq / S(120) + theta_sq * theta_sq / S(5040);
    } else {
      c = (theta - sin(theta)) / (theta_sq * theta);
    }
    out.rotation = Mat::Identity() + a * W + b * W2;
    V = Mat::Identity() + b * W + c * W2;
    out.quaternion << cos(theta * S(0.5)), (half_sin / theta) * omega;
  }
  out.translation = V * v;
  return out;
}

}  // namespace detail

}  // namespace splatgeo
