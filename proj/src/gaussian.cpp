#include "splatgeo/gaussian.hpp"

#include <algorithm>
#include <string>

namespace splatgeo {

Vec3 sh_to_color_unclamped(const ShCoeffs& sh, const Vec3& direction) {
  const Vec3 basis = sh_linear_basis(direction);
  Vec3 color;
  for (int ch = 0; ch < 3; ++ch) {
    color[ch] = kShY0 * sh(0, ch) + basis.dot(sh.block<3, 1>(1, ch)) + 0.5;
  }
  return color;
}

Vec3 sh_to_color(const ShCoeffs& sh, const Vec3& direction) {
  return sh_to_color_unclamped(sh, direction).cwiseMax(0.0).cwiseMin(1.0);
}

ShCoeffs rotate_sh(const ShCoeffs& sh, const Mat3& rotation) {
  const Mat3 p = sh_permutation();
  ShCoeffs out = sh;
  out.block<3, 3>(1, 0) = p * rotation * p.transpose() * sh.block<3, 3>(1, 0);
  return out;
}

void GaussianSet::reserve(size_t n) {
  centers.reserve(n);
  opacities.reserve(n);
  scales.reserve(n);
  orientations.reserve(n);
  sh.reserve(n);
}

void GaussianSet::push_back(const Vec3& center, double opacity, const Vec3& scale, const Vec4& orientation,
                            const ShCoeffs& coeffs) {
  centers.push_back(center);
  opacities.push_back(opacity);
  scales.push_back(scale);
  orientations.push_back(orientation);
  sh.push_back(coeffs);
}

Mat3 GaussianSet::covariance(size_t i) const {
  const Mat3 r = quat_to_rotation(orientations[i].normalized());
  return r * scales[i].cwiseAbs2().asDiagonal() * r.transpose();
}

void GaussianSet::validate() const {
  const size_t n = centers.size();
  if (opacities.size() != n || scales.size() != n || orientations.size() != n || sh.size() != n) {
    throw Error(ErrorKind::InvalidArgument, "GaussianSet arrays have inconsistent lengths");
  }
  for (size_t i = 0; i < n; ++i) {
    if (!(opacities[i] > 0.0 && opacities[i] < 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "opacity outside (0,1) at " + std::to_string(i));
    }
    if (std::abs(orientations[i].norm() - 1.0) > 1e-9) {
      throw Error(ErrorKind::InvalidArgument, "non-unit quaternion at " + std::to_string(i));
    }
    if (!(scales[i].minCoeff() > 0.0)) {
      throw Error(ErrorKind::InvalidArgument, "non-positive scale at " + std::to_string(i));
    }
    if (!centers[i].allFinite() || !sh[i].allFinite()) {
      throw Error(ErrorKind::InvalidArgument, "non-finite Gaussian at " + std::to_string(i));
    }
  }
}

GaussianGradients GaussianGradients::zeros(size_t n) {
  GaussianGradients g;
  g.d_centers.assign(n, Vec3::Zero());
  g.d_opacity.assign(n, 0.0);
  g.d_scales.assign(n, Vec3::Zero());
  g.d_orientation.assign(n, Vec4::Zero());
  g.d_sh.assign(n, ShCoeffs::Zero());
  return g;
}

std::vector<Vec3> unproject_pixels(const DepthMap& depth, const std::vector<Vec2>& offsets,
                                   const CameraIntrinsics& K) {
  if (depth.width != K.width || depth.height != K.height) {
    throw Error(ErrorKind::ShapeMismatch, "depth map does not match intrinsics");
  }
  if (!offsets.empty() && offsets.size() != depth.data.size()) {
    throw Error(ErrorKind::ShapeMismatch, "offset field does not match depth map");
  }
  std::vector<Vec3> centers;
  centers.reserve(depth.data.size());
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const size_t i = static_cast<size_t>(y) * depth.width + x;
      const double d = depth.data[i];
      if (!(d > 0.0)) {
        throw Error(ErrorKind::NonPositiveDepth,
                    "depth " + std::to_string(d) + " at (" + std::to_string(x) + "," + std::to_string(y) + ")");
      }
      Vec3 p = K.pixel_center(x, y);
      if (!offsets.empty()) {
        p.x() += std::clamp(offsets[i].x(), -1.0, 1.0);
        p.y() += std::clamp(offsets[i].y(), -1.0, 1.0);
      }
      centers.push_back(d * K.back_project(p));
    }
  }
  return centers;
}

namespace {

const double kLogMinScale = std::log(kMinScale);
const double kLogMaxScale = std::log(kMaxScale);

void check_raw_shape(const RawAttributeField& raw, const DepthMap& depth, const CameraIntrinsics& K) {
  if (raw.width != depth.width || raw.height != depth.height || depth.width != K.width ||
      depth.height != K.height ||
      raw.values.size() != static_cast<size_t>(raw.width) * raw.height * RawAttributeField::kChannels) {
    throw Error(ErrorKind::ShapeMismatch, "raw attributes, depth and intrinsics disagree");
  }
}

}  // namespace

GaussianSet build_gaussians(const RawAttributeField& raw, const DepthMap& depth, const CameraIntrinsics& K) {
  check_raw_shape(raw, depth, K);
  const size_t n = depth.data.size();
  std::vector<Vec2> offsets(n);
  for (size_t i = 0; i < n; ++i) {
    const double* r = raw.pixel(i);
    offsets[i] = {std::tanh(r[RawAttributeField::kOffset]), std::tanh(r[RawAttributeField::kOffset + 1])};
  }
  const std::vector<Vec3> centers = unproject_pixels(depth, offsets, K);

  GaussianSet out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const double* r = raw.pixel(i);
    Vec3 scale;
    for (int k = 0; k < 3; ++k) {
      scale[k] = std::exp(std::clamp(r[RawAttributeField::kScale + k], kLogMinScale, kLogMaxScale));
    }
    Vec4 q(r[RawAttributeField::kRotation], r[RawAttributeField::kRotation + 1],
           r[RawAttributeField::kRotation + 2], r[RawAttributeField::kRotation + 3]);
    const double qn = q.norm();
    q = qn > 0.0 ? Vec4(q / qn) : Vec4(1.0, 0.0, 0.0, 0.0);
    ShCoeffs sh;
    for (int m = 0; m < 4; ++m) {
      for (int ch = 0; ch < 3; ++ch) sh(m, ch) = r[RawAttributeField::kSh + m * 3 + ch];
    }
    out.push_back(centers[i], sigmoid(r[RawAttributeField::kOpacity]), scale, q, sh);
  }
  return out;
}

BuildGradients build_gaussians_backward(const RawAttributeField& raw, const DepthMap& depth,
                                        const CameraIntrinsics& K, const GaussianGradients& upstream) {
  check_raw_shape(raw, depth, K);
  const size_t n = depth.data.size();
  if (upstream.size() != n) throw Error(ErrorKind::ShapeMismatch, "gradient count differs from pixel count");

  BuildGradients out{RawAttributeField(raw.width, raw.height), DepthMap(depth.width, depth.height)};
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const size_t i = static_cast<size_t>(y) * depth.width + x;
      const double* r = raw.pixel(i);
      double* g = out.d_raw.pixel(i);
      const Vec3& dmu = upstream.d_centers[i];

      const double dx = std::tanh(r[RawAttributeField::kOffset]);
      const double dy = std::tanh(r[RawAttributeField::kOffset + 1]);
      const Vec3 ray = K.back_project(Vec3(x + 0.5 + dx, y + 0.5 + dy, 1.0));
      const double d = depth.data[i];
      out.d_depth.data[i] = dmu.dot(ray);
      g[RawAttributeField::kOffset] = dmu.x() * d / K.fx * (1.0 - dx * dx);
      g[RawAttributeField::kOffset + 1] = dmu.y() * d / K.fy * (1.0 - dy * dy);

      const double alpha = sigmoid(r[RawAttributeField::kOpacity]);
      g[RawAttributeField::kOpacity] = upstream.d_opacity[i] * alpha * (1.0 - alpha);

      for (int k = 0; k < 3; ++k) {
        const double v = r[RawAttributeField::kScale + k];
        g[RawAttributeField::kScale + k] =
            (v > kLogMinScale && v < kLogMaxScale) ? upstream.d_scales[i][k] * std::exp(v) : 0.0;
      }

      const Vec4 q(r[RawAttributeField::kRotation], r[RawAttributeField::kRotation + 1],
                   r[RawAttributeField::kRotation + 2], r[RawAttributeField::kRotation + 3]);
      const double qn = q.norm();
      if (qn > 0.0) {
        const Vec4 u = q / qn;
        const Vec4& dq = upstream.d_orientation[i];
        const Vec4 dq_raw = (dq - u * u.dot(dq)) / qn;
        for (int k = 0; k < 4; ++k) g[RawAttributeField::kRotation + k] = dq_raw[k];
      }

      for (int m = 0; m < 4; ++m) {
        for (int ch = 0; ch < 3; ++ch) g[RawAttributeField::kSh + m * 3 + ch] = upstream.d_sh[i](m, ch);
      }
    }
  }
  return out;
}

GaussianSet transform_gaussians(const GaussianSet& gaussians, const RigidTransform& transform) {
  const Vec4 r = quat_from_rotation(transform.rotation);
  const Eigen::Matrix4d left = quat_left_matrix(r);
  GaussianSet out = gaussians;
  for (size_t i = 0; i < gaussians.size(); ++i) {
    out.centers[i] = transform.apply(gaussians.centers[i]);
    out.orientations[i] = left * gaussians.orientations[i];
    out.sh[i] = rotate_sh(gaussians.sh[i], transform.rotation);
  }
  return out;
}

TransformGradients transform_gaussians_backward(const GaussianSet& input, const RigidTransform& transform,
                                                const GaussianGradients& upstream) {
  if (upstream.size() != input.size()) {
    throw Error(ErrorKind::ShapeMismatch, "gradient count differs from Gaussian count");
  }
  const Mat3& R = transform.rotation;
  const Vec4 r = quat_from_rotation(R);
  const Eigen::Matrix4d left_t = quat_left_matrix(r).transpose();
  const Mat3 p = sh_permutation();
  const Mat3 back = p * R.transpose() * p.transpose();

  TransformGradients out;
  out.d_input = upstream;
  for (size_t i = 0; i < input.size(); ++i) {
    const Vec3& dmu = upstream.d_centers[i];
    out.d_input.d_centers[i] = R.transpose() * dmu;
    out.d_rotation += dmu * input.centers[i].transpose();
    out.d_translation += dmu;

    const Vec4& dq = upstream.d_orientation[i];
    out.d_input.d_orientation[i] = left_t * dq;
    out.d_quaternion += quat_right_matrix(input.orientations[i]).transpose() * dq;

    const Mat3 dlin = upstream.d_sh[i].block<3, 3>(1, 0);
    out.d_input.d_sh[i].block<3, 3>(1, 0) = back * dlin;
    out.d_rotation += p.transpose() * dlin * (p.transpose() * input.sh[i].block<3, 3>(1, 0)).transpose();
  }
  return out;
}

GaussianSet merge_gaussians(const GaussianSet& a, const GaussianSet& b) {
  GaussianSet out = a;
  out.reserve(a.size() + b.size());
  out.centers.insert(out.centers.end(), b.centers.begin(), b.centers.end());
  out.opacities.insert(out.opacities.end(), b.opacities.begin(), b.opacities.end());
  out.scales.insert(out.scales.end(), b.scales.begin(), b.scales.end());
  out.orientations.insert(out.orientations.end(), b.orientations.begin(), b.orientations.end());
  out.sh.insert(out.sh.end(), b.sh.begin(), b.sh.end());
  return out;
}

}  // namespace splatgeo
