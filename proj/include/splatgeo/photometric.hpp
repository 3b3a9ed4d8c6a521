#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "splatgeo/geometry.hpp"
#include "splatgeo/image.hpp"
#include "splatgeo/rasterizer.hpp"

namespace splatgeo {

struct LossConfig {
  double omega = 0.85;   // SSIM share of the photometric error
  double lambda1 = 1.0;  // reprojection weight
  double lambda2 = 1.0;  // rendering weight
  double gamma1 = 0.2;   // rendering-loss SSIM weight
  double gamma2 = 1.0;   // rendering-loss squared-error weight
  int ssim_window = 11;
  double ssim_sigma = 1.5;
  double ssim_c1 = 1e-4;
  double ssim_c2 = 9e-4;

  void validate() const;
};

using ValidMask = std::vector<std::uint8_t>;  // H x W, 1 = valid

// Mean local SSIM over all window positions that fit inside the image.
// With a mask, only windows whose pixels are all valid count; if none do,
// the result is 1.
double ssim(const Image& a, const Image& b, const LossConfig& cfg = {}, const ValidMask* mask = nullptr);

struct PairGradients {
  double value = 0.0;
  Image d_a;
  Image d_b;
};

PairGradients ssim_with_gradients(const Image& a, const Image& b, const LossConfig& cfg = {},
                                  const ValidMask* mask = nullptr);

// pe(a, b) = omega / 2 * (1 - SSIM(a, b)) + (1 - omega) * mean |a - b|.
double photometric_error(const Image& a, const Image& b, const LossConfig& cfg = {},
                         const ValidMask* mask = nullptr);
PairGradients photometric_error_with_gradients(const Image& a, const Image& b, const LossConfig& cfg = {},
                                               const ValidMask* mask = nullptr);

struct WarpResult {
  Image image;
  ValidMask valid;

  double valid_fraction() const;
};

// Samples src at the reprojection of every target pixel: back-project with
// depth_target, map by target_to_source, project with K, bilinear lookup.
// Pixels that land outside the image or behind the source camera are
// invalid and hold zeros.
WarpResult inverse_warp(const Image& src, const DepthMap& depth_target, const RigidTransform& target_to_source,
                        const CameraIntrinsics& K);

struct WarpGradients {
  DepthMap d_depth;
  Mat3 d_rotation = Mat3::Zero();
  Vec3 d_translation = Vec3::Zero();
};

WarpGradients inverse_warp_backward(const Image& src, const DepthMap& depth_target,
                                    const RigidTransform& target_to_source, const CameraIntrinsics& K,
                                    const Image& d_warped);

struct ReprojectionResult {
  double value = 0.0;
  std::array<double, 2> terms{};  // per context view
  std::array<double, 2> valid_fraction{};
};

// L_proj = pe(I_t, I_c1->t) + pe(I_t, I_c2->t); poses map each context
// camera into the target frame.
ReprojectionResult reprojection_loss(const Image& target, const Image& context1, const Image& context2,
                                     const DepthMap& depth_target, const RigidTransform& context1_to_target,
                                     const RigidTransform& context2_to_target, const CameraIntrinsics& K,
                                     const LossConfig& cfg = {});

struct ReprojectionGradients {
  ReprojectionResult loss;
  DepthMap d_depth;
  std::array<Mat3, 2> d_rotation{Mat3::Zero(), Mat3::Zero()};  // w.r.t. context_k_to_target
  std::array<Vec3, 2> d_translation{Vec3::Zero(), Vec3::Zero()};
};

ReprojectionGradients reprojection_loss_with_gradients(const Image& target, const Image& context1,
                                                       const Image& context2, const DepthMap& depth_target,
                                                       const RigidTransform& context1_to_target,
                                                       const RigidTransform& context2_to_target,
                                                       const CameraIntrinsics& K, const LossConfig& cfg = {});

// Views are ordered (c1, t, c2) in both arrays.
double rendering_loss(const std::array<const Image*, 3>& renders, const std::array<const Image*, 3>& images,
                      const LossConfig& cfg = {});

struct RenderingLossGradients {
  double value = 0.0;
  std::array<Image, 3> d_renders;
};

RenderingLossGradients rendering_loss_with_gradients(const std::array<const Image*, 3>& renders,
                                                     const std::array<const Image*, 3>& images,
                                                     const LossConfig& cfg = {});

struct LossParts {
  double reprojection = 0.0;
  double rendering = 0.0;
};

double total_loss(const LossParts& parts, const LossConfig& cfg = {});

}  // namespace splatgeo
