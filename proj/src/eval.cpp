#include "splatgeo/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

namespace splatgeo {

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  double sq = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    sq += d * d;
  }
  const double mse = sq / static_cast<double>(a.data.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

double to_degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace

PoseError pose_error(const RigidTransform& estimate, const RigidTransform& ground_truth) {
  PoseError out;
  // Half-angle form: ||R_e - R_g||_F = 2 sqrt(2) sin(theta / 2), tr(R_g^T R_e) + 1 = 4 cos^2(theta / 2).
  // Well conditioned at both ends and exactly zero for identical rotations.
  const double half_sin = (estimate.rotation - ground_truth.rotation).norm() / (2.0 * std::numbers::sqrt2);
  const double trace = (ground_truth.rotation.transpose() * estimate.rotation).trace();
  const double half_cos = std::sqrt(std::max(0.0, trace + 1.0)) / 2.0;
  out.rotation_deg = to_degrees(2.0 * std::atan2(half_sin, half_cos));

  const double ne = estimate.translation.norm();
  const double ng = ground_truth.translation.norm();
  if (ne < 1e-9 || ng < 1e-9) {
    out.degenerate_translation = true;
    out.translation_deg = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.translation_deg = to_degrees(std::atan2(estimate.translation.cross(ground_truth.translation).norm(),
                                              estimate.translation.dot(ground_truth.translation)));
  return out;
}

SimilarityAlignment align_similarity(const Trajectory& estimate, const Trajectory& ground_truth) {
  if (estimate.size() != ground_truth.size()) {
    throw Error(ErrorKind::LengthMismatch, "trajectories differ in length");
  }
  if (estimate.size() < 2) throw Error(ErrorKind::LengthMismatch, "ATE needs at least two poses");
  const auto n = static_cast<Eigen::Index>(estimate.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    src.col(i) = estimate[i];
    dst.col(i) = ground_truth[i];
  }
  const Eigen::Matrix4d m = Eigen::umeyama(src, dst, true);
  SimilarityAlignment out;
  const Mat3 sr = m.topLeftCorner<3, 3>();
  out.scale = std::cbrt(sr.determinant());
  out.rotation = sr / out.scale;
  out.translation = m.topRightCorner<3, 1>();
  return out;
}

double ate(const Trajectory& estimate, const Trajectory& ground_truth) {
  const SimilarityAlignment align = align_similarity(estimate, ground_truth);
  double sq = 0.0;
  for (size_t i = 0; i < estimate.size(); ++i) sq += (align.apply(estimate[i]) - ground_truth[i]).squaredNorm();
  return std::sqrt(sq / static_cast<double>(estimate.size()));
}

}  // namespace splatgeo
