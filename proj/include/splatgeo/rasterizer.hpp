#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "splatgeo/gaussian.hpp"
#include "splatgeo/image.hpp"

namespace splatgeo {

struct RenderSettings {
  double near_plane = 0.01;
  double far_plane = 1000.0;
  double low_pass = 0.3;          // pixels^2 added to the projected covariance
  double cutoff_sigma = 3.0;      // Mahalanobis radius of a splat's footprint
  double min_transmittance = 1e-4;
  bool early_stop = true;
};

struct Splat2D {
  Vec2 mean;        // pixels
  Mat2 covariance;  // pixels^2, low-pass included
  double view_depth = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
};

enum class CullReason { None, NearPlane, FarPlane, OffScreen };

struct Projection {
  Splat2D splat;
  CullReason culled = CullReason::None;

  bool visible() const { return culled == CullReason::None; }
};

// Projects Gaussian i for a camera with pose camera_to_world. The view
// direction for the SH color is normalize(mu - camera_center) in world space.
Projection project_gaussian(const GaussianSet& gaussians, size_t i, const CameraIntrinsics& K,
                            const RigidTransform& camera_to_world, const RenderSettings& settings = {});

// Forward intermediates reusable by render_backward: projections, row
// buckets and per-pixel contribution lists.
struct RenderState;

struct RenderOutput {
  Image color;     // H x W x 3
  DepthMap alpha;  // accumulated opacity
  DepthMap depth;  // alpha-weighted expected view depth
  std::shared_ptr<const RenderState> state;  // only with keep_state
};

// Front-to-back compositing over splats sorted by view depth (ties broken
// by index).
RenderOutput render(const GaussianSet& gaussians, const CameraIntrinsics& K,
                    const RigidTransform& camera_to_world, const Vec3& background,
                    const RenderSettings& settings = {}, bool keep_state = false);

// dL/d(RenderOutput). Empty members are treated as zero.
struct RenderUpstream {
  Image d_color;
  DepthMap d_alpha;
  DepthMap d_depth;
};

struct RenderGradients {
  GaussianGradients gaussians;
  // dL/d(mean2d) per Gaussian, zero when culled.
  std::vector<Vec2> d_means2d;
  // Camera pose (camera-to-world) gradients.
  Vec3 d_translation = Vec3::Zero();
  Mat3 d_rotation = Mat3::Zero();
  Vec3 d_rotation_tangent = Vec3::Zero();  // R <- exp([delta]x) R
};

// Reuses forward->state when given, otherwise recomputes the forward pass.
// Throws StateMismatch if the upstream buffers do not match the camera or the
// state was rendered from different Gaussians, camera or settings.
RenderGradients render_backward(const GaussianSet& gaussians, const CameraIntrinsics& K,
                                const RigidTransform& camera_to_world, const Vec3& background,
                                const RenderUpstream& upstream, const RenderSettings& settings = {},
                                const RenderOutput* forward = nullptr);

}  // namespace splatgeo
