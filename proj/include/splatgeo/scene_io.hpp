#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splatgeo/gaussian.hpp"
#include "splatgeo/geometry.hpp"
#include "splatgeo/image.hpp"

namespace splatgeo {

enum class View { Context1 = 0, Target = 1, Context2 = 2 };

// Three views in (c1, t, c2) order sharing one camera. The target camera
// defines the world frame; gt_poses map c1 and c2 into it.
struct SceneBundle {
  std::array<Image, 3> images;
  CameraIntrinsics K;
  std::optional<std::array<RigidTransform, 2>> gt_poses;
  std::optional<std::array<DepthMap, 2>> gt_depths;  // c1, c2
  std::optional<GaussianSet> gt_gaussians;          // target frame
  std::uint64_t seed = 0;

  const Image& image(View v) const { return images[static_cast<int>(v)]; }

  // Camera-to-world pose of a view, identity for the target.
  RigidTransform camera_pose(View v) const;

  // Throws DimensionMismatch / InvalidArgument on broken invariants.
  void validate() const;
};

struct SynthSpec {
  int gaussian_count = 200;
  int width = 64;
  int height = 64;
  double focal = 64.0;
  double wall_depth = 4.0;      // distance of the textured surface
  double extent = 3.0;          // half-size of the surface patch
  double relief = 0.4;          // amplitude of the surface undulation
  double texture_period = 2.0;  // wavelength of the color texture
  double min_scale = 0.15;
  double max_scale = 0.25;
  // Low opacities keep the composite nearly independent of splat order.
  double min_opacity = 0.2;
  double max_opacity = 0.4;
  double sh_linear = 0.02;      // view-dependent color amplitude
  double baseline = 0.5;        // lateral offset of each context camera
  double rotation_deg = 1.0;    // yaw of each context camera toward the center
  Vec3 background = Vec3::Zero();
  std::uint64_t seed = 0;

  void validate() const;
};

// Samples a textured relief of Gaussians, places c1 / c2 on an arc around
// the target and renders all three views. Images keep full precision; saving
// quantizes them to 8 bits.
SceneBundle generate_synthetic_scene(const SynthSpec& spec);

inline constexpr const char* kSceneSchema = "splatgeo.scene/1";

void save_scene(const SceneBundle& bundle, const std::filesystem::path& dir);
SceneBundle load_scene(const std::filesystem::path& dir);

// Binary little-endian PLY in the common 3D-GS vertex layout.
void export_ply(const GaussianSet& gaussians, const std::filesystem::path& path);
GaussianSet import_ply(const std::filesystem::path& path);

// PNG helpers. Color is quantized with round(v * 255).
void write_png_rgb(const Image& image, const std::filesystem::path& path);
void write_png_gray8(const DepthMap& values, const std::filesystem::path& path);
void write_png_gray16(const std::vector<std::uint16_t>& values, int width, int height,
                      const std::filesystem::path& path);

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

PngImage read_png(const std::filesystem::path& path);
Image png_to_image(const PngImage& png);

inline double quantize8(double v) {
  const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return std::round(c * 255.0) / 255.0;
}

// Depth as 16-bit millimeters, saturating at 65.535 scene units.
std::vector<std::uint16_t> depth_to_millimeters(const DepthMap& depth);

}  // namespace splatgeo
