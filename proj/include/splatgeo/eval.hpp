#pragma once

#include <limits>
#include <vector>

#include "splatgeo/geometry.hpp"
#include "splatgeo/image.hpp"

namespace splatgeo {

// Returned for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

double psnr(const Image& a, const Image& b);

struct PoseError {
  double rotation_deg = 0.0;
  double translation_deg = 0.0;
  // Set when either translation is shorter than 1e-9; translation_deg is NaN.
  bool degenerate_translation = false;
};

PoseError pose_error(const RigidTransform& estimate, const RigidTransform& ground_truth);

using Trajectory = std::vector<Vec3>;

struct SimilarityAlignment {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

// Least-squares similarity mapping `estimate` onto `ground_truth`.
SimilarityAlignment align_similarity(const Trajectory& estimate, const Trajectory& ground_truth);

// RMSE of camera positions after similarity alignment.
double ate(const Trajectory& estimate, const Trajectory& ground_truth);

}  // namespace splatgeo
