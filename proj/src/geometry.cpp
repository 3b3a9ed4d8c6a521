#include "splatgeo/geometry.hpp"

#include <Eigen/SVD>

namespace splatgeo {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroBaseline: return "ZeroBaseline";
    case ErrorKind::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::StateMismatch: return "StateMismatch";
    case ErrorKind::BadInit: return "BadInit";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::EmptyRender: return "EmptyRender";
    case ErrorKind::ManifestMissing: return "ManifestMissing";
    case ErrorKind::CorruptImage: return "CorruptImage";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 CameraIntrinsics::inverse_matrix() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::InvalidArgument, "image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw Error(ErrorKind::InvalidArgument, "principal point outside the image");
  }
}

namespace {

Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 out = svd.matrixU() * svd.matrixV().transpose();
  if (out.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    out = u * svd.matrixV().transpose();
  }
  return out;
}

}  // namespace

RigidTransform se3_compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  const double drift = (out.rotation.transpose() * out.rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (drift > 1e-12) out.rotation = orthonormalize(out.rotation);
  return out;
}

RigidTransform se3_inverse(const RigidTransform& transform) {
  RigidTransform out;
  out.rotation = transform.rotation.transpose();
  out.translation = -(out.rotation * transform.translation);
  return out;
}

RigidTransform se3_exp(const Twist& twist) {
  const auto r = detail::se3_exp_generic<double>(twist.omega, twist.v);
  return {r.rotation, r.translation};
}

Twist se3_log(const RigidTransform& transform) {
  const Eigen::AngleAxisd aa(transform.rotation);
  Twist out;
  out.omega = aa.angle() * aa.axis();
  Mat3 V;
  for (int i = 0; i < 3; ++i) {
    V.col(i) = detail::se3_exp_generic<double>(out.omega, Vec3::Unit(i)).translation;
  }
  out.v = V.partialPivLu().solve(transform.translation);
  return out;
}

Mat3 rotation_about_axis(const Vec3& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

Mat3 rotation_z(double angle_rad) { return rotation_about_axis(Vec3::UnitZ(), angle_rad); }

Mat3 quat_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Vec4 quat_from_rotation(const Mat3& rotation) {
  Eigen::Quaterniond q(rotation);
  q.normalize();
  Vec4 out(q.w(), q.x(), q.y(), q.z());
  if (out[0] < 0.0) out = -out;
  return out;
}

Eigen::Matrix4d quat_left_matrix(const Vec4& a) {
  Eigen::Matrix4d m;
  m << a[0], -a[1], -a[2], -a[3],
       a[1], a[0], -a[3], a[2],
       a[2], a[3], a[0], -a[1],
       a[3], -a[2], a[1], a[0];
  return m;
}

Eigen::Matrix4d quat_right_matrix(const Vec4& b) {
  Eigen::Matrix4d m;
  m << b[0], -b[1], -b[2], -b[3],
       b[1], b[0], b[3], -b[2],
       b[2], -b[3], b[0], b[1],
       b[3], b[2], -b[1], b[0];
  return m;
}

Vec4 quat_multiply(const Vec4& a, const Vec4& b) { return quat_left_matrix(a) * b; }

Vec3 rotation_gradient_to_tangent(const Mat3& grad, const Mat3& rotation) {
  const Mat3 m = grad * rotation.transpose();
  return {m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)};
}

RayField ray_embedding(const CameraIntrinsics& K) {
  K.validate();
  RayField field;
  field.width = K.width;
  field.height = K.height;
  field.rays.reserve(K.pixel_count());
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) field.rays.push_back(K.back_project(K.pixel_center(x, y)));
  }
  return field;
}

PluckerField plucker_embedding(const CameraIntrinsics& K, const RigidTransform& camera_to_target) {
  const RayField rays = ray_embedding(K);
  const Vec3& origin = camera_to_target.translation;
  PluckerField field;
  field.width = rays.width;
  field.height = rays.height;
  field.lines.reserve(rays.rays.size());
  for (const Vec3& ray : rays.rays) {
    const Vec3 d = (camera_to_target.rotation * ray).normalized();
    Vec6 line;
    line << d, origin.cross(d);
    field.lines.push_back(line);
  }
  return field;
}

Mat3 fundamental_matrix(const CameraIntrinsics& K, const RigidTransform& source_to_dest) {
  const Mat3 k_inv = K.inverse_matrix();
  return k_inv.transpose() * skew(source_to_dest.translation) * source_to_dest.rotation * k_inv;
}

Vec3 epipolar_line(const CameraIntrinsics& K, const RigidTransform& source_to_dest, const Vec2& pixel) {
  if (source_to_dest.translation.norm() < 1e-12) {
    throw Error(ErrorKind::ZeroBaseline, "epipolar geometry needs a non-zero baseline");
  }
  const Vec3 line = fundamental_matrix(K, source_to_dest) * Vec3(pixel.x(), pixel.y(), 1.0);
  const double n = line.head<2>().norm();
  if (n == 0.0) {
    throw Error(ErrorKind::ZeroBaseline, "pixel coincides with the epipole");
  }
  return line / n;
}

}  // namespace splatgeo
