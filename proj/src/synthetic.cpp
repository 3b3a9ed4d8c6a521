#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "splatgeo/error.hpp"
#include "splatgeo/rasterizer.hpp"
#include "splatgeo/scene_io.hpp"

namespace splatgeo {

void SynthSpec::validate() const {
  if (gaussian_count <= 0) throw Error(ErrorKind::InvalidArgument, "gaussian_count must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorKind::InvalidArgument, "image size must be positive");
  if (!(focal > 0.0)) throw Error(ErrorKind::InvalidArgument, "focal length must be positive");
  if (!(wall_depth > 0.0) || !(extent > 0.0)) throw Error(ErrorKind::InvalidArgument, "scene extent must be positive");
  if (relief < 0.0 || relief >= wall_depth) throw Error(ErrorKind::InvalidArgument, "relief must lie in [0, depth)");
  if (!(texture_period > 0.0)) throw Error(ErrorKind::InvalidArgument, "texture period must be positive");
  if (!(min_scale > 0.0) || max_scale < min_scale) throw Error(ErrorKind::InvalidArgument, "bad scale range");
  if (!(min_opacity > 0.0) || max_opacity >= 1.0 || max_opacity < min_opacity) {
    throw Error(ErrorKind::InvalidArgument, "opacity range must lie inside (0, 1)");
  }
  if (baseline < 0.0 || baseline >= wall_depth) throw Error(ErrorKind::InvalidArgument, "baseline must lie in [0, depth)");
}

namespace {

constexpr int kMaxAttempts = 10;
constexpr double kCoverageAlpha = 0.1;
constexpr double kMinCoverage = 0.5;

GaussianSet sample_wall(const SynthSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  // Smooth relief z = depth + relief * sin(a x + p) * cos(b y + q).
  const double a = uniform(0.6, 1.4), b = uniform(0.6, 1.4);
  const double p = uniform(0.0, 2.0 * std::numbers::pi), q = uniform(0.0, 2.0 * std::numbers::pi);
  const auto height = [&](double x, double y) { return spec.wall_depth + spec.relief * std::sin(a * x + p) * std::cos(b * y + q); };

  // Smooth color texture: two plane waves per channel, values in [0.1, 0.9].
  std::array<std::array<Vec3, 2>, 3> waves;  // (kx, ky, phase)
  const double k = 2.0 * std::numbers::pi / spec.texture_period;
  for (auto& channel : waves) {
    for (Vec3& w : channel) {
      const double dir = uniform(0.0, 2.0 * std::numbers::pi);
      const double freq = k * uniform(0.7, 1.3);
      w = Vec3(freq * std::cos(dir), freq * std::sin(dir), uniform(0.0, 2.0 * std::numbers::pi));
    }
  }
  const auto texture = [&](double x, double y, int ch) {
    double v = 0.5;
    for (const Vec3& w : waves[ch]) v += 0.2 * std::sin(w[0] * x + w[1] * y + w[2]);
    return v;
  };

  // Jittered grid keeps the coverage even; leftovers land uniformly.
  const int grid = std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(spec.gaussian_count)))));
  const double cell = 2.0 * spec.extent / grid;

  GaussianSet g;
  g.reserve(static_cast<size_t>(spec.gaussian_count));
  for (int i = 0; i < spec.gaussian_count; ++i) {
    double x, y;
    if (i < grid * grid) {
      x = -spec.extent + (i % grid + unit(rng)) * cell;
      y = -spec.extent + (i / grid + unit(rng)) * cell;
    } else {
      x = uniform(-spec.extent, spec.extent);
      y = uniform(-spec.extent, spec.extent);
    }
    const Vec3 center(x, y, height(x, y));

    // Flat discs lying in the local tangent plane.
    const double dzdx = spec.relief * a * std::cos(a * x + p) * std::cos(b * y + q);
    const double dzdy = -spec.relief * b * std::sin(a * x + p) * std::sin(b * y + q);
    const Vec3 normal = Vec3(-dzdx, -dzdy, 1.0).normalized();
    const Mat3 tilt = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal).toRotationMatrix();
    const Mat3 R = tilt * rotation_z(uniform(0.0, std::numbers::pi));
    const Vec4 orientation = quat_from_rotation(R);

    const double s1 = uniform(spec.min_scale, spec.max_scale);
    const double s2 = uniform(spec.min_scale, spec.max_scale);
    const Vec3 scale(s1, s2, 0.1 * std::min(s1, s2));

    ShCoeffs sh = ShCoeffs::Zero();
    for (int ch = 0; ch < 3; ++ch) {
      sh(0, ch) = (texture(x, y, ch) - 0.5) / kShY0;
      for (int m = 1; m < 4; ++m) sh(m, ch) = uniform(-spec.sh_linear, spec.sh_linear);
    }
    g.push_back(center, uniform(spec.min_opacity, spec.max_opacity), scale, orientation, sh);
  }
  return g;
}

// c1 and c2 sit symmetrically on a circle through the target camera centered
// on the wall, each yawed toward the middle about a slightly tilted axis.
std::array<RigidTransform, 2> arc_poses(const SynthSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> tilt(-0.1, 0.1);
  const double r = spec.wall_depth;
  const double sag = r - std::sqrt(r * r - spec.baseline * spec.baseline);
  const double rot = spec.rotation_deg * std::numbers::pi / 180.0;
  std::array<RigidTransform, 2> poses;
  for (int k = 0; k < 2; ++k) {
    const double side = k == 0 ? -1.0 : 1.0;
    const Vec3 axis = Vec3(tilt(rng), 1.0, tilt(rng)).normalized();
    poses[k].rotation = rotation_about_axis(axis, -side * rot);
    poses[k].translation = Vec3(side * spec.baseline, 0.0, sag);
  }
  return poses;
}

double coverage(const RenderOutput& out) {
  const auto covered = std::count_if(out.alpha.data.begin(), out.alpha.data.end(),
                                     [](double a) { return a > kCoverageAlpha; });
  return static_cast<double>(covered) / static_cast<double>(out.alpha.data.size());
}

}  // namespace

SceneBundle generate_synthetic_scene(const SynthSpec& spec) {
  spec.validate();
  CameraIntrinsics K;
  K.fx = K.fy = spec.focal;
  K.cx = spec.width / 2.0;
  K.cy = spec.height / 2.0;
  K.width = spec.width;
  K.height = spec.height;

  double best = 0.0;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::seed_seq seq{spec.seed, static_cast<std::uint64_t>(attempt)};
    std::mt19937_64 rng(seq);
    GaussianSet g = sample_wall(spec, rng);
    const std::array<RigidTransform, 2> poses = arc_poses(spec, rng);
    const std::array<RigidTransform, 3> cameras{poses[0], RigidTransform::identity(), poses[1]};

    SceneBundle b;
    b.K = K;
    b.seed = spec.seed;
    std::array<RenderOutput, 3> out;
    bool ok = true;
    for (int v = 0; v < 3; ++v) {
      out[v] = render(g, K, cameras[v], spec.background);
      const double c = coverage(out[v]);
      best = std::max(best, c);
      if (c < kMinCoverage) ok = false;
    }
    if (!ok) continue;

    for (int v = 0; v < 3; ++v) b.images[v] = out[v].color;
    std::array<DepthMap, 2> depths{out[0].depth, out[2].depth};
    // Uncovered pixels take the median covered depth so every depth is positive.
    for (int k = 0; k < 2; ++k) {
      const RenderOutput& o = out[k == 0 ? 0 : 2];
      std::vector<double> covered;
      for (size_t i = 0; i < o.alpha.data.size(); ++i) {
        if (o.alpha.data[i] > kCoverageAlpha) covered.push_back(depths[k].data[i]);
      }
      std::nth_element(covered.begin(), covered.begin() + static_cast<std::ptrdiff_t>(covered.size() / 2), covered.end());
      const double fill = covered[covered.size() / 2];
      for (size_t i = 0; i < o.alpha.data.size(); ++i) {
        if (!(o.alpha.data[i] > kCoverageAlpha)) depths[k].data[i] = fill;
      }
    }
    b.gt_poses = poses;
    b.gt_depths = std::move(depths);
    b.gt_gaussians = std::move(g);
    return b;
  }
  throw Error(ErrorKind::EmptyRender, "best coverage " + std::to_string(best) + " after " +
                                          std::to_string(kMaxAttempts) + " attempts");
}

}  // namespace splatgeo
