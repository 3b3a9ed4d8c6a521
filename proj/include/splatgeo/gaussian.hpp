#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "splatgeo/geometry.hpp"
#include "splatgeo/image.hpp"

namespace splatgeo {

// Degree-1 spherical-harmonic color: row 0 is the DC term, rows 1..3 the
// linear block, one column per RGB channel.
using ShCoeffs = Eigen::Matrix<double, 4, 3>;

inline const double kShY0 = std::sqrt(1.0 / (4.0 * std::numbers::pi));
inline const double kShY1 = std::sqrt(3.0 / (4.0 * std::numbers::pi));

// Degree-1 basis ordering: Y1(d) = kShY1 * Pi * d maps (x, y, z) to (y, z, x).
inline Mat3 sh_permutation() {
  Mat3 p;
  p << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  return p;
}

inline Vec3 sh_linear_basis(const Vec3& direction) { return kShY1 * (sh_permutation() * direction); }

// Color before clamping; the +0.5 DC shift is folded in.
Vec3 sh_to_color_unclamped(const ShCoeffs& sh, const Vec3& direction);
Vec3 sh_to_color(const ShCoeffs& sh, const Vec3& direction);

// Rotates the linear block so that the rotated coefficients evaluated at R d
// match the original evaluated at d.
ShCoeffs rotate_sh(const ShCoeffs& sh, const Mat3& rotation);

struct GaussianSet {
  std::vector<Vec3> centers;
  std::vector<double> opacities;  // in (0, 1)
  std::vector<Vec3> scales;       // standard deviations along the local axes
  std::vector<Vec4> orientations; // unit quaternions (w, x, y, z)
  std::vector<ShCoeffs> sh;

  size_t size() const { return centers.size(); }
  bool empty() const { return centers.empty(); }
  void reserve(size_t n);
  void push_back(const Vec3& center, double opacity, const Vec3& scale, const Vec4& orientation,
                 const ShCoeffs& coeffs);

  Mat3 covariance(size_t i) const;

  // Throws InvalidArgument on a broken invariant (opacity range, unit
  // quaternion, positive scale, consistent array lengths).
  void validate() const;
};

// Same layout as GaussianSet, holding dL/d(field).
struct GaussianGradients {
  std::vector<Vec3> d_centers;
  std::vector<double> d_opacity;
  std::vector<Vec3> d_scales;
  std::vector<Vec4> d_orientation;
  std::vector<ShCoeffs> d_sh;

  static GaussianGradients zeros(size_t n);
  size_t size() const { return d_centers.size(); }
};

// Per-pixel network-style outputs before activation.
struct RawAttributeField {
  static constexpr int kOpacity = 0;
  static constexpr int kScale = 1;
  static constexpr int kRotation = 4;
  static constexpr int kSh = 8;  // 12 values, index m * 3 + channel
  static constexpr int kOffset = 20;
  static constexpr int kChannels = 22;

  int width = 0;
  int height = 0;
  std::vector<double> values;

  RawAttributeField() = default;
  RawAttributeField(int w, int h) : width(w), height(h), values(static_cast<size_t>(w) * h * kChannels, 0.0) {}

  double* pixel(size_t i) { return values.data() + i * kChannels; }
  const double* pixel(size_t i) const { return values.data() + i * kChannels; }
};

inline constexpr double kMinScale = 1e-4;
inline constexpr double kMaxScale = 1e2;

// mu = D(x, y) K^-1 (x + 0.5 + dx, y + 0.5 + dy, 1); offsets are clamped to
// [-1, 1] pixels, and an empty offsets vector means zero offsets.
std::vector<Vec3> unproject_pixels(const DepthMap& depth, const std::vector<Vec2>& offsets,
                                   const CameraIntrinsics& K);

// Activations: opacity sigmoid, scale exp of the clamped log, quaternion
// normalization, offsets tanh. SH passes through. Output is in the camera
// frame, one Gaussian per pixel in row-major order.
GaussianSet build_gaussians(const RawAttributeField& raw, const DepthMap& depth, const CameraIntrinsics& K);

struct BuildGradients {
  RawAttributeField d_raw;
  DepthMap d_depth;
};

BuildGradients build_gaussians_backward(const RawAttributeField& raw, const DepthMap& depth,
                                        const CameraIntrinsics& K, const GaussianGradients& upstream);

// Moves a set from its frame into the frame that `transform` maps to.
GaussianSet transform_gaussians(const GaussianSet& gaussians, const RigidTransform& transform);

struct TransformGradients {
  GaussianGradients d_input;
  Mat3 d_rotation = Mat3::Zero();
  Vec3 d_translation = Vec3::Zero();
  Vec4 d_quaternion = Vec4::Zero();  // w.r.t. the quaternion of the transform's rotation
};

TransformGradients transform_gaussians_backward(const GaussianSet& input, const RigidTransform& transform,
                                                const GaussianGradients& upstream);

GaussianSet merge_gaussians(const GaussianSet& a, const GaussianSet& b);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace splatgeo
