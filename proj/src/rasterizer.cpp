#include "splatgeo/rasterizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>

#include "splatgeo/parallel.hpp"

namespace splatgeo {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

// Everything the compositor and the backward pass need about one Gaussian.
struct Projected {
  bool visible = false;
  CullReason culled = CullReason::None;
  Vec3 point = Vec3::Zero();  // camera frame
  Vec2 mean = Vec2::Zero();
  Mat2 cov = Mat2::Zero();
  Mat2 conic = Mat2::Zero();
  Mat23 jacobian = Mat23::Zero();
  Mat3 rot_q = Mat3::Identity();  // rotation of the normalized quaternion
  Mat3 cov3 = Mat3::Zero();
  Vec3 view_dir = Vec3::Zero();   // mu - camera center
  Vec3 color = Vec3::Zero();
  std::array<bool, 3> color_active{};  // unclamped channel
  double opacity = 0.0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
};

Projected project_one(const GaussianSet& g, size_t i, const CameraIntrinsics& K, const RigidTransform& cam,
                      const RenderSettings& settings) {
  Projected p;
  const Mat3 world_to_cam = cam.rotation.transpose();
  p.point = world_to_cam * (g.centers[i] - cam.translation);
  const double z = p.point.z();
  if (!(z > settings.near_plane)) {
    p.culled = CullReason::NearPlane;
    return p;
  }
  if (z > settings.far_plane) {
    p.culled = CullReason::FarPlane;
    return p;
  }

  p.mean = K.project(p.point);
  p.jacobian << K.fx / z, 0.0, -K.fx * p.point.x() / (z * z), 0.0, K.fy / z, -K.fy * p.point.y() / (z * z);
  p.rot_q = quat_to_rotation(g.orientations[i].normalized());
  p.cov3 = p.rot_q * g.scales[i].cwiseAbs2().asDiagonal() * p.rot_q.transpose();
  const Mat23 t = p.jacobian * world_to_cam;
  p.cov = t * p.cov3 * t.transpose();
  p.cov(0, 1) = p.cov(1, 0) = 0.5 * (p.cov(0, 1) + p.cov(1, 0));
  p.cov += settings.low_pass * Mat2::Identity();
  const double det = p.cov.determinant();
  if (!(det > 0.0)) {
    p.culled = CullReason::OffScreen;
    return p;
  }
  p.conic << p.cov(1, 1) / det, -p.cov(0, 1) / det, -p.cov(0, 1) / det, p.cov(0, 0) / det;

  const double mid = 0.5 * (p.cov(0, 0) + p.cov(1, 1));
  const double lambda = mid + std::sqrt(std::max(0.0, mid * mid - det));
  const double radius = settings.cutoff_sigma * std::sqrt(lambda);
  p.x0 = std::max(0, static_cast<int>(std::ceil(p.mean.x() - radius - 0.5)));
  p.x1 = std::min(K.width - 1, static_cast<int>(std::floor(p.mean.x() + radius - 0.5)));
  p.y0 = std::max(0, static_cast<int>(std::ceil(p.mean.y() - radius - 0.5)));
  p.y1 = std::min(K.height - 1, static_cast<int>(std::floor(p.mean.y() + radius - 0.5)));
  if (p.x0 > p.x1 || p.y0 > p.y1) {
    p.culled = CullReason::OffScreen;
    return p;
  }

  p.view_dir = g.centers[i] - cam.translation;
  const Vec3 raw = sh_to_color_unclamped(g.sh[i], p.view_dir.normalized());
  for (int ch = 0; ch < 3; ++ch) {
    p.color_active[ch] = raw[ch] > 0.0 && raw[ch] < 1.0;
    p.color[ch] = std::clamp(raw[ch], 0.0, 1.0);
  }
  p.opacity = g.opacities[i];
  p.visible = true;
  return p;
}

// Projection, depth sort and per-row buckets shared by forward and backward.
// The per-pixel quantities of a visible splat, packed for the compositing loops.
struct Splat {
  double mx = 0.0, my = 0.0;       // mean, pixels
  double a = 0.0, b = 0.0, c = 0.0;  // conic
  double opacity = 0.0;
  std::array<double, 3> color{};
  double z = 0.0;
};

struct Frame {
  std::vector<Projected> projected;
  std::vector<Splat> splats;           // indexed like projected
  std::vector<std::vector<int>> rows;  // Gaussian indices per image row, front to back
};

Frame prepare(const GaussianSet& g, const CameraIntrinsics& K, const RigidTransform& cam,
              const RenderSettings& settings) {
  K.validate();
  Frame f;
  const int n = static_cast<int>(g.size());
  f.projected.resize(n);
#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (int i = 0; i < n; ++i) f.projected[i] = project_one(g, i, K, cam, settings);
  f.splats.resize(n);
  for (int i = 0; i < n; ++i) {
    const Projected& p = f.projected[i];
    f.splats[i] = Splat{p.mean.x(), p.mean.y(), p.conic(0, 0), p.conic(0, 1), p.conic(1, 1), p.opacity,
                        {p.color[0], p.color[1], p.color[2]}, p.point.z()};
  }

  std::vector<int> order;
  order.reserve(n);
  for (int i = 0; i < n; ++i) {
    if (f.projected[i].visible) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double za = f.projected[a].point.z();
    const double zb = f.projected[b].point.z();
    return za < zb || (za == zb && a < b);
  });

  f.rows.resize(K.height);
  for (int i : order) {
    const Projected& p = f.projected[i];
    for (int y = p.y0; y <= p.y1; ++y) f.rows[y].push_back(i);
  }
  return f;
}

// Composited channels: r, g, b, alpha, alpha-weighted depth numerator.
constexpr int kChannels = 5;
using Channels = std::array<double, kChannels>;

struct Contribution {
  int slot = 0;  // position within the row bucket
  int x = 0;
  double weight = 0.0;
  double transmittance = 0.0;  // before this splat
};

template <typename Visit>
void composite_row(const Frame& f, int y, int width, const RenderSettings& settings, std::vector<double>& trans,
                   Visit&& visit) {
  trans.assign(width, 1.0);
  std::vector<char> done(width, 0);
  const double cutoff_sq = settings.cutoff_sigma * settings.cutoff_sigma;
  const std::vector<int>& bucket = f.rows[y];
  for (int slot = 0; slot < static_cast<int>(bucket.size()); ++slot) {
    const int index = bucket[slot];
    const Splat& p = f.splats[index];
    const double dy = y + 0.5 - p.my;
    // Columns where a dx^2 + 2 b dx dy + c dy^2 <= cutoff^2, widened by one
    // pixel on each side; the exact test below decides.
    const double a = p.a, b = p.b, c = p.c;
    const double disc = cutoff_sq / a - dy * dy * (c - b * b / a) / a;
    if (disc < 0.0) continue;
    const double center = p.mx - b * dy / a - 0.5;
    const double half = std::sqrt(disc);
    const Projected& box = f.projected[index];
    const int x0 = std::max(box.x0, static_cast<int>(std::floor(center - half)) - 1);
    const int x1 = std::min(box.x1, static_cast<int>(std::ceil(center + half)) + 1);
    const double cross = 2.0 * b * dy, tail = c * dy * dy;
    for (int x = x0; x <= x1; ++x) {
      if (done[x]) continue;
      const double dx = x + 0.5 - p.mx;
      const double maha = a * dx * dx + cross * dx + tail;
      if (maha > cutoff_sq) continue;
      const double w = p.opacity * std::exp(-0.5 * maha);
      visit(Contribution{slot, x, w, trans[x]}, p);
      trans[x] *= (1.0 - w);
      if (settings.early_stop && trans[x] < settings.min_transmittance) done[x] = 1;
    }
  }
}

inline double safe_alpha(double a) { return std::max(a, 1e-8); }

std::uint64_t mix(std::uint64_t h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return (h ^ bits) * 0x100000001b3ULL;
}

// Four interleaved lanes keep the multiply chains independent.
std::uint64_t mix_all(std::uint64_t h, const double* data, size_t count) {
  std::array<std::uint64_t, 4> lane{h, h + 1, h + 2, h + 3};
  size_t i = 0;
  for (; i + 4 <= count; i += 4) {
    for (int j = 0; j < 4; ++j) lane[j] = mix(lane[j], data[i + j]);
  }
  for (; i < count; ++i) lane[0] = mix(lane[0], data[i]);
  for (int j = 1; j < 4; ++j) lane[0] = (lane[0] ^ lane[j]) * 0x9e3779b97f4a7c15ULL;
  return lane[0];
}

// Identifies the inputs a forward state was rendered from.
std::uint64_t fingerprint(const GaussianSet& g, const CameraIntrinsics& K, const RigidTransform& cam,
                          const RenderSettings& s) {
  const size_t n = g.size();
  std::uint64_t h = mix(0, static_cast<double>(n));
  if (n > 0) {
    h = mix_all(h, g.centers[0].data(), 3 * n);
    h = mix_all(h, g.opacities.data(), n);
    h = mix_all(h, g.scales[0].data(), 3 * n);
    h = mix_all(h, g.orientations[0].data(), 4 * n);
    h = mix_all(h, g.sh[0].data(), 12 * n);
  }
  for (double v : {K.fx, K.fy, K.cx, K.cy, static_cast<double>(K.width), static_cast<double>(K.height)}) h = mix(h, v);
  h = mix_all(h, cam.rotation.data(), 9);
  h = mix_all(h, cam.translation.data(), 3);
  for (double v : {s.near_plane, s.far_plane, s.low_pass, s.cutoff_sigma, s.min_transmittance,
                   s.early_stop ? 1.0 : 0.0}) {
    h = mix(h, v);
  }
  return h;
}

}  // namespace

struct RenderState {
  Frame frame;
  std::vector<std::vector<Contribution>> rows;  // per row, in compositing order
  std::uint64_t fingerprint = 0;
};

Projection project_gaussian(const GaussianSet& gaussians, size_t i, const CameraIntrinsics& K,
                            const RigidTransform& camera_to_world, const RenderSettings& settings) {
  const Projected p = project_one(gaussians, i, K, camera_to_world, settings);
  Projection out;
  out.culled = p.culled;
  if (p.culled == CullReason::NearPlane || p.culled == CullReason::FarPlane) return out;
  out.splat.mean = p.mean;
  out.splat.covariance = p.cov;
  out.splat.view_depth = p.point.z();
  out.splat.color = p.color;
  out.splat.opacity = gaussians.opacities[i];
  return out;
}

RenderOutput render(const GaussianSet& gaussians, const CameraIntrinsics& K, const RigidTransform& camera_to_world,
                    const Vec3& background, const RenderSettings& settings, bool keep_state) {
  auto state = std::make_shared<RenderState>();
  state->frame = prepare(gaussians, K, camera_to_world, settings);
  const Frame& f = state->frame;
  if (keep_state) {
    state->rows.resize(K.height);
    state->fingerprint = fingerprint(gaussians, K, camera_to_world, settings);
  }
  RenderOutput out{Image(K.width, K.height, 3), DepthMap(K.width, K.height), DepthMap(K.width, K.height), nullptr};

#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_threads())
  for (int y = 0; y < K.height; ++y) {
    std::vector<double> trans;
    std::vector<Channels> acc(K.width, Channels{});
    std::vector<Contribution>* kept = keep_state ? &state->rows[y] : nullptr;
    if (kept != nullptr) {
      size_t bound = 0;
      for (int i : f.rows[y]) bound += static_cast<size_t>(f.projected[i].x1 - f.projected[i].x0 + 1);
      kept->reserve(bound);
    }
    composite_row(f, y, K.width, settings, trans, [&](const Contribution& c, const Splat& p) {
      const double wt = c.weight * c.transmittance;
      Channels& a = acc[c.x];
      a[0] += p.color[0] * wt;
      a[1] += p.color[1] * wt;
      a[2] += p.color[2] * wt;
      a[3] += wt;
      a[4] += p.z * wt;
      if (kept != nullptr) kept->push_back(c);
    });
    for (int x = 0; x < K.width; ++x) {
      const Channels& a = acc[x];
      for (int ch = 0; ch < 3; ++ch) out.color.at(x, y, ch) = a[ch] + trans[x] * background[ch];
      out.alpha.at(x, y) = a[3];
      out.depth.at(x, y) = a[4] / safe_alpha(a[3]);
    }
  }
  if (keep_state) out.state = std::move(state);
  return out;
}

RenderGradients render_backward(const GaussianSet& gaussians, const CameraIntrinsics& K,
                                const RigidTransform& camera_to_world, const Vec3& background,
                                const RenderUpstream& upstream, const RenderSettings& settings,
                                const RenderOutput* forward) {
  const auto check = [&](int w, int h, int c, bool present, const char* what) {
    if (present && (w != K.width || h != K.height || c != 1)) {
      throw Error(ErrorKind::StateMismatch, std::string(what) + " does not match the rendered frame");
    }
  };
  check(upstream.d_color.width, upstream.d_color.height, upstream.d_color.channels == 3 ? 1 : 0,
        !upstream.d_color.empty(), "color gradient");
  check(upstream.d_alpha.width, upstream.d_alpha.height, 1, !upstream.d_alpha.data.empty(), "alpha gradient");
  check(upstream.d_depth.width, upstream.d_depth.height, 1, !upstream.d_depth.data.empty(), "depth gradient");

  const RenderState* state = forward != nullptr ? forward->state.get() : nullptr;
  if (state != nullptr && state->fingerprint != fingerprint(gaussians, K, camera_to_world, settings)) {
    throw Error(ErrorKind::StateMismatch, "forward state was rendered from different inputs");
  }
  Frame recomputed;
  if (state == nullptr) recomputed = prepare(gaussians, K, camera_to_world, settings);
  const Frame& f = state != nullptr ? state->frame : recomputed;
  const size_t n = gaussians.size();

  // Per-row, per-slot partial gradients: mean(2), conic(a, b, c), opacity,
  // color(3), depth. Reduced in row order afterwards so the result does not
  // depend on the thread count.
  constexpr int kGrad = 10;
  std::vector<std::vector<double>> row_grads(K.height);

#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_threads())
  for (int y = 0; y < K.height; ++y) {
    std::vector<double>& rg = row_grads[y];
    rg.assign(f.rows[y].size() * kGrad, 0.0);
    if (f.rows[y].empty()) continue;

    std::vector<Contribution> local;
    if (state == nullptr) {
      std::vector<double> trans;
      composite_row(f, y, K.width, settings, trans,
                    [&](const Contribution& c, const Splat&) { local.push_back(c); });
    }
    const std::vector<Contribution>& list = state != nullptr ? state->rows[y] : local;

    // Per-pixel alpha and depth numerator, summed in compositing order.
    std::vector<double> alpha(K.width, 0.0), numer(K.width, 0.0);
    for (const Contribution& c : list) {
      const double wt = c.weight * c.transmittance;
      alpha[c.x] += wt;
      numer[c.x] += f.splats[f.rows[y][c.slot]].z * wt;
    }
    std::vector<Channels> up(K.width, Channels{});
    for (int x = 0; x < K.width; ++x) {
      Channels& u = up[x];
      if (!upstream.d_color.empty()) {
        for (int ch = 0; ch < 3; ++ch) u[ch] = upstream.d_color.at(x, y, ch);
      }
      if (!upstream.d_alpha.data.empty()) u[3] = upstream.d_alpha.at(x, y);
      if (!upstream.d_depth.data.empty()) {
        const double dd = upstream.d_depth.at(x, y);
        u[4] = dd / safe_alpha(alpha[x]);
        if (alpha[x] > 1e-8) u[3] -= dd * numer[x] / (alpha[x] * alpha[x]);
      }
    }

    // Reverse compositing order is back to front within every pixel.
    // behind[x] is what lies behind the current splat, per unit of its
    // transmittance.
    std::vector<Channels> behind(K.width, Channels{background[0], background[1], background[2], 0.0, 0.0});
    for (auto it = list.rbegin(); it != list.rend(); ++it) {
      const Contribution& c = *it;
      const Splat& p = f.splats[f.rows[y][c.slot]];
      const Channels& u = up[c.x];
      Channels& bh = behind[c.x];
      const Channels value{p.color[0], p.color[1], p.color[2], 1.0, p.z};
      double d_weight = 0.0;
      for (int ch = 0; ch < kChannels; ++ch) d_weight += u[ch] * (value[ch] - bh[ch]);
      d_weight *= c.transmittance;
      const double wt = c.weight * c.transmittance;

      double* g = rg.data() + static_cast<size_t>(c.slot) * kGrad;
      const double d_power = d_weight * c.weight;
      // power = -0.5 d^T A d with d = pixel - mean
      const double dx = c.x + 0.5 - p.mx;
      const double dy = y + 0.5 - p.my;
      g[0] += d_power * (p.a * dx + p.b * dy);
      g[1] += d_power * (p.b * dx + p.c * dy);
      g[2] += d_power * (-0.5 * dx * dx);
      g[3] += d_power * (-dx * dy);
      g[4] += d_power * (-0.5 * dy * dy);
      g[5] += d_weight * c.weight / p.opacity;
      g[6] += u[0] * wt;
      g[7] += u[1] * wt;
      g[8] += u[2] * wt;
      g[9] += u[4] * wt;

      for (int ch = 0; ch < kChannels; ++ch) bh[ch] = value[ch] * c.weight + (1.0 - c.weight) * bh[ch];
    }
  }

  std::vector<std::array<double, kGrad>> splat_grads(n, std::array<double, kGrad>{});
  for (int y = 0; y < K.height; ++y) {
    const std::vector<int>& bucket = f.rows[y];
    for (size_t s = 0; s < bucket.size(); ++s) {
      auto& dst = splat_grads[bucket[s]];
      for (int k = 0; k < kGrad; ++k) dst[k] += row_grads[y][s * kGrad + k];
    }
  }

  RenderGradients out;
  out.gaussians = GaussianGradients::zeros(n);
  out.d_means2d.assign(n, Vec2::Zero());
  std::vector<Vec3> d_points(n, Vec3::Zero());
  std::vector<Vec3> d_view_dirs(n, Vec3::Zero());
  std::vector<Mat3> d_world_to_cam(n, Mat3::Zero());

  const Mat3& cam_rot = camera_to_world.rotation;
  const Mat3 world_to_cam = cam_rot.transpose();
  const Mat3 perm = sh_permutation();

#pragma omp parallel for schedule(static) num_threads(worker_threads())
  for (long long li = 0; li < static_cast<long long>(n); ++li) {
    const size_t i = static_cast<size_t>(li);
    const Projected& p = f.projected[i];
    if (!p.visible) continue;
    const auto& sg = splat_grads[i];
    const Vec2 d_mean(sg[0], sg[1]);
    out.d_means2d[i] = d_mean;
    out.gaussians.d_opacity[i] = sg[5];

    // Conic -> 2D covariance.
    Mat2 d_conic;
    d_conic << sg[2], 0.5 * sg[3], 0.5 * sg[3], sg[4];
    const Mat2 d_cov = -p.conic * d_conic * p.conic;

    // cov2d = T cov3 T^T with T = J W.
    const Mat23 t = p.jacobian * world_to_cam;
    const Mat3 d_cov3 = t.transpose() * d_cov * t;
    const Mat23 d_t = 2.0 * d_cov * t * p.cov3;
    const Mat23 d_jac = d_t * world_to_cam.transpose();
    Mat3 d_w = p.jacobian.transpose() * d_t;

    const double x = p.point.x(), yv = p.point.y(), z = p.point.z();
    const double z2 = z * z, z3 = z2 * z;
    Vec3 d_point;
    d_point.x() = d_mean.x() * K.fx / z + d_jac(0, 2) * (-K.fx / z2);
    d_point.y() = d_mean.y() * K.fy / z + d_jac(1, 2) * (-K.fy / z2);
    d_point.z() = -d_mean.x() * K.fx * x / z2 - d_mean.y() * K.fy * yv / z2 + d_jac(0, 0) * (-K.fx / z2) +
                  d_jac(0, 2) * (2.0 * K.fx * x / z3) + d_jac(1, 1) * (-K.fy / z2) +
                  d_jac(1, 2) * (2.0 * K.fy * yv / z3) + sg[9];
    d_points[i] = d_point;
    d_w += d_point * (gaussians.centers[i] - camera_to_world.translation).transpose();
    d_world_to_cam[i] = d_w;

    // cov3 = M M^T with M = R(q) diag(s).
    const Vec3& s = gaussians.scales[i];
    const Mat3 m = p.rot_q * s.asDiagonal();
    const Mat3 d_m = 2.0 * d_cov3 * m;
    Vec3 d_s;
    for (int k = 0; k < 3; ++k) d_s[k] = d_m.col(k).dot(p.rot_q.col(k));
    // scales may be stored signed; the covariance only sees |s|
    out.gaussians.d_scales[i] = d_s;
    const Mat3 d_r = d_m * s.asDiagonal();

    const Vec4& q_raw = gaussians.orientations[i];
    const double q_norm = q_raw.norm();
    const Vec4 q = q_raw / q_norm;
    const double w = q[0], qx = q[1], qy = q[2], qz = q[3];
    Vec4 d_q;
    d_q[0] = 2.0 * (-qz * d_r(0, 1) + qy * d_r(0, 2) + qz * d_r(1, 0) - qx * d_r(1, 2) - qy * d_r(2, 0) +
                    qx * d_r(2, 1));
    d_q[1] = 2.0 * (qy * d_r(0, 1) + qz * d_r(0, 2) + qy * d_r(1, 0) - 2.0 * qx * d_r(1, 1) - w * d_r(1, 2) +
                    qz * d_r(2, 0) + w * d_r(2, 1) - 2.0 * qx * d_r(2, 2));
    d_q[2] = 2.0 * (-2.0 * qy * d_r(0, 0) + qx * d_r(0, 1) + w * d_r(0, 2) + qx * d_r(1, 0) + qz * d_r(1, 2) -
                    w * d_r(2, 0) + qz * d_r(2, 1) - 2.0 * qy * d_r(2, 2));
    d_q[3] = 2.0 * (-2.0 * qz * d_r(0, 0) - w * d_r(0, 1) + qx * d_r(0, 2) + w * d_r(1, 0) -
                    2.0 * qz * d_r(1, 1) + qy * d_r(1, 2) + qx * d_r(2, 0) + qy * d_r(2, 1));
    out.gaussians.d_orientation[i] = (d_q - q * q.dot(d_q)) / q_norm;

    // SH color through the view direction.
    const double dir_norm = p.view_dir.norm();
    const Vec3 dir = p.view_dir / dir_norm;
    const Vec3 basis = sh_linear_basis(dir);
    Vec3 d_dir = Vec3::Zero();
    ShCoeffs& d_sh = out.gaussians.d_sh[i];
    for (int ch = 0; ch < 3; ++ch) {
      if (!p.color_active[ch]) continue;
      const double dc = sg[6 + ch];
      d_sh(0, ch) = dc * kShY0;
      d_sh.block<3, 1>(1, ch) = dc * basis;
      d_dir += dc * kShY1 * (perm.transpose() * gaussians.sh[i].block<3, 1>(1, ch));
    }
    const Vec3 d_view = (d_dir - dir * dir.dot(d_dir)) / dir_norm;
    d_view_dirs[i] = d_view;

    out.gaussians.d_centers[i] = cam_rot * d_point + d_view;
  }

  // Pose gradients: accumulate the camera-space chain and the view-direction
  // chain separately, in index order.
  Vec3 sum_points = Vec3::Zero();
  Vec3 sum_views = Vec3::Zero();
  Mat3 sum_w = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) {
    sum_points += d_points[i];
    sum_views += d_view_dirs[i];
    sum_w += d_world_to_cam[i];
  }
  out.d_translation = -(cam_rot * sum_points) - sum_views;
  out.d_rotation = sum_w.transpose();
  out.d_rotation_tangent = rotation_gradient_to_tangent(out.d_rotation, cam_rot);
  return out;
}

}  // namespace splatgeo
