#include "splatgeo/photometric.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <string>

namespace splatgeo {

void LossConfig::validate() const {
  if (!(omega >= 0.0 && omega <= 1.0)) throw Error(ErrorKind::InvalidArgument, "omega must lie in [0,1]");
  if (lambda1 < 0.0 || lambda2 < 0.0 || gamma1 < 0.0 || gamma2 < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "loss weights must be non-negative");
  }
  if (ssim_window < 3 || ssim_window % 2 == 0) {
    throw Error(ErrorKind::InvalidArgument, "SSIM window must be odd and at least 3");
  }
  if (!(ssim_sigma > 0.0) || !(ssim_c1 > 0.0) || !(ssim_c2 > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "SSIM sigma and stabilizers must be positive");
  }
}

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
  const int r = window / 2;
  std::vector<double> k(window);
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    k[i] = std::exp(-static_cast<double>((i - r) * (i - r)) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable correlation over window positions that fit in the image.
std::vector<double> blur_valid(const std::vector<double>& in, int w, int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<size_t>(ow) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    double* dst = tmp.data() + static_cast<size_t>(y) * ow;
    const double* src = in.data() + static_cast<size_t>(y) * w;
    for (int j = 0; j < n; ++j) {
      for (int x = 0; x < ow; ++x) dst[x] += k[j] * src[x + j];
    }
  }
  std::vector<double> out(static_cast<size_t>(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y) {
    double* dst = out.data() + static_cast<size_t>(y) * ow;
    for (int j = 0; j < n; ++j) {
      const double* src = tmp.data() + static_cast<size_t>(y + j) * ow;
      for (int x = 0; x < ow; ++x) dst[x] += k[j] * src[x];
    }
  }
  return out;
}

std::vector<double> blur_valid_adjoint(const std::vector<double>& g, int w, int h, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<size_t>(ow) * h, 0.0);
  for (int y = 0; y < oh; ++y) {
    const double* src = g.data() + static_cast<size_t>(y) * ow;
    for (int j = 0; j < n; ++j) {
      double* dst = tmp.data() + static_cast<size_t>(y + j) * ow;
      for (int x = 0; x < ow; ++x) dst[x] += k[j] * src[x];
    }
  }
  std::vector<double> out(static_cast<size_t>(w) * h, 0.0);
  for (int y = 0; y < h; ++y) {
    const double* src = tmp.data() + static_cast<size_t>(y) * ow;
    double* dst = out.data() + static_cast<size_t>(y) * w;
    for (int j = 0; j < n; ++j) {
      for (int x = 0; x < ow; ++x) dst[x + j] += k[j] * src[x];
    }
  }
  return out;
}

// Window centers whose window is entirely valid, on the (ow x oh) grid.
std::vector<std::uint8_t> valid_windows(const ValidMask* mask, int w, int h, int window) {
  const int ow = w - window + 1, oh = h - window + 1;
  std::vector<std::uint8_t> out(static_cast<size_t>(ow) * oh, 1);
  if (mask == nullptr) return out;
  std::vector<int> row_ok(static_cast<size_t>(ow) * h, 0);
  for (int y = 0; y < h; ++y) {
    int invalid = 0;
    for (int x = 0; x < w; ++x) {
      invalid += (*mask)[static_cast<size_t>(y) * w + x] ? 0 : 1;
      if (x >= window) invalid -= (*mask)[static_cast<size_t>(y) * w + x - window] ? 0 : 1;
      if (x >= window - 1) row_ok[static_cast<size_t>(y) * ow + x - window + 1] = invalid == 0;
    }
  }
  for (int x = 0; x < ow; ++x) {
    int bad = 0;
    for (int y = 0; y < h; ++y) {
      bad += row_ok[static_cast<size_t>(y) * ow + x] ? 0 : 1;
      if (y >= window) bad -= row_ok[static_cast<size_t>(y - window) * ow + x] ? 0 : 1;
      if (y >= window - 1) out[static_cast<size_t>(y - window + 1) * ow + x] = bad == 0;
    }
  }
  return out;
}

void check_mask(const ValidMask* mask, const Image& img) {
  if (mask != nullptr && mask->size() != static_cast<size_t>(img.width) * img.height) {
    throw Error(ErrorKind::ShapeMismatch, "mask does not match image");
  }
}

double ssim_core(const Image& a, const Image& b, const LossConfig& cfg, const ValidMask* mask, Image* d_a,
                 Image* d_b) {
  require_same_shape(a, b, "ssim");
  check_mask(mask, a);
  const int w = a.width, h = a.height, c = a.channels;
  const int window = cfg.ssim_window;
  if (w < window || h < window) {
    throw Error(ErrorKind::ShapeMismatch, "image smaller than the SSIM window");
  }
  if (d_a != nullptr) *d_a = Image(w, h, c);
  if (d_b != nullptr) *d_b = Image(w, h, c);

  const std::vector<double> k = gaussian_kernel(window, cfg.ssim_sigma);
  const int ow = w - window + 1, oh = h - window + 1;
  const std::vector<std::uint8_t> centers = valid_windows(mask, w, h, window);
  size_t count = 0;
  for (std::uint8_t v : centers) count += v;
  if (count == 0) return 1.0;

  const double c1 = cfg.ssim_c1, c2 = cfg.ssim_c2;
  const double norm = 1.0 / static_cast<double>(count * c);
  const size_t npix = static_cast<size_t>(w) * h;
  double total = 0.0;
  std::vector<double> pa(npix), pb(npix), paa(npix), pbb(npix), pab(npix);
  for (int ch = 0; ch < c; ++ch) {
    for (size_t i = 0; i < npix; ++i) {
      pa[i] = a.data[i * c + ch];
      pb[i] = b.data[i * c + ch];
      paa[i] = pa[i] * pa[i];
      pbb[i] = pb[i] * pb[i];
      pab[i] = pa[i] * pb[i];
    }
    const auto mu_a = blur_valid(pa, w, h, k);
    const auto mu_b = blur_valid(pb, w, h, k);
    const auto e_aa = blur_valid(paa, w, h, k);
    const auto e_bb = blur_valid(pbb, w, h, k);
    const auto e_ab = blur_valid(pab, w, h, k);

    const bool grads = d_a != nullptr || d_b != nullptr;
    std::vector<double> g_mu_a, g_mu_b, g_aa, g_bb, g_ab;
    if (grads) {
      const size_t m = static_cast<size_t>(ow) * oh;
      g_mu_a.assign(m, 0.0);
      g_mu_b.assign(m, 0.0);
      g_aa.assign(m, 0.0);
      g_bb.assign(m, 0.0);
      g_ab.assign(m, 0.0);
    }
    double channel_sum = 0.0;
    for (size_t i = 0; i < centers.size(); ++i) {
      if (!centers[i]) continue;
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma;
      const double vb = e_bb[i] - mb * mb;
      const double cab = e_ab[i] - ma * mb;
      const double a1 = 2.0 * ma * mb + c1, a2 = 2.0 * cab + c2;
      const double b1 = ma * ma + mb * mb + c1, b2 = va + vb + c2;
      const double s = (a1 * a2) / (b1 * b2);
      channel_sum += s;
      if (!grads) continue;
      const double ds_dva = -s / b2 * norm;
      const double ds_dvb = ds_dva;
      const double ds_dcab = 2.0 * a1 / (b1 * b2) * norm;
      const double ds_dma = (2.0 * mb * a2 / (b1 * b2) - 2.0 * ma * s / b1) * norm;
      const double ds_dmb = (2.0 * ma * a2 / (b1 * b2) - 2.0 * mb * s / b1) * norm;
      g_aa[i] = ds_dva;
      g_bb[i] = ds_dvb;
      g_ab[i] = ds_dcab;
      g_mu_a[i] = ds_dma - 2.0 * ma * ds_dva - mb * ds_dcab;
      g_mu_b[i] = ds_dmb - 2.0 * mb * ds_dvb - ma * ds_dcab;
    }
    total += channel_sum;
    if (!grads) continue;
    const auto s_ab = blur_valid_adjoint(g_ab, w, h, k);
    if (d_a != nullptr) {
      const auto s_mu_a = blur_valid_adjoint(g_mu_a, w, h, k);
      const auto s_aa = blur_valid_adjoint(g_aa, w, h, k);
      for (size_t i = 0; i < npix; ++i) d_a->data[i * c + ch] = s_mu_a[i] + 2.0 * pa[i] * s_aa[i] + pb[i] * s_ab[i];
    }
    if (d_b != nullptr) {
      const auto s_mu_b = blur_valid_adjoint(g_mu_b, w, h, k);
      const auto s_bb = blur_valid_adjoint(g_bb, w, h, k);
      for (size_t i = 0; i < npix; ++i) d_b->data[i * c + ch] = s_mu_b[i] + 2.0 * pb[i] * s_bb[i] + pa[i] * s_ab[i];
    }
  }
  return total * norm;
}

double l1_core(const Image& a, const Image& b, const ValidMask* mask, Image* d_a, Image* d_b, double scale) {
  const int c = a.channels;
  const size_t npix = static_cast<size_t>(a.width) * a.height;
  size_t count = 0;
  for (size_t i = 0; i < npix; ++i) count += (mask == nullptr || (*mask)[i]) ? 1 : 0;
  if (count == 0) return 0.0;
  const double norm = 1.0 / static_cast<double>(count * c);
  double sum = 0.0;
  for (size_t i = 0; i < npix; ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    for (int ch = 0; ch < c; ++ch) {
      const double diff = a.data[i * c + ch] - b.data[i * c + ch];
      sum += std::abs(diff);
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      if (d_a != nullptr) d_a->data[i * c + ch] += scale * sign * norm;
      if (d_b != nullptr) d_b->data[i * c + ch] -= scale * sign * norm;
    }
  }
  return sum * norm;
}

}  // namespace

double ssim(const Image& a, const Image& b, const LossConfig& cfg, const ValidMask* mask) {
  return ssim_core(a, b, cfg, mask, nullptr, nullptr);
}

PairGradients ssim_with_gradients(const Image& a, const Image& b, const LossConfig& cfg, const ValidMask* mask) {
  PairGradients out;
  out.value = ssim_core(a, b, cfg, mask, &out.d_a, &out.d_b);
  return out;
}

double photometric_error(const Image& a, const Image& b, const LossConfig& cfg, const ValidMask* mask) {
  require_same_shape(a, b, "photometric_error");
  check_mask(mask, a);
  const double s = cfg.omega > 0.0 ? ssim_core(a, b, cfg, mask, nullptr, nullptr) : 1.0;
  const double l1 = l1_core(a, b, mask, nullptr, nullptr, 0.0);
  return 0.5 * cfg.omega * (1.0 - s) + (1.0 - cfg.omega) * l1;
}

namespace {

// Photometric error with the gradients for whichever of d_a, d_b is non-null.
double photometric_core(const Image& a, const Image& b, const LossConfig& cfg, const ValidMask* mask, Image* d_a,
                        Image* d_b) {
  require_same_shape(a, b, "photometric_error");
  check_mask(mask, a);
  double s = 1.0;
  if (cfg.omega > 0.0) {
    s = ssim_core(a, b, cfg, mask, d_a, d_b);
    const double scale = -0.5 * cfg.omega;
    for (Image* d : {d_a, d_b}) {
      if (d == nullptr) continue;
      for (double& v : d->data) v *= scale;
    }
  } else {
    if (d_a != nullptr) *d_a = Image(a.width, a.height, a.channels);
    if (d_b != nullptr) *d_b = Image(a.width, a.height, a.channels);
  }
  const double l1 = l1_core(a, b, mask, d_a, d_b, 1.0 - cfg.omega);
  return 0.5 * cfg.omega * (1.0 - s) + (1.0 - cfg.omega) * l1;
}

}  // namespace

PairGradients photometric_error_with_gradients(const Image& a, const Image& b, const LossConfig& cfg,
                                               const ValidMask* mask) {
  PairGradients out;
  out.value = photometric_core(a, b, cfg, mask, &out.d_a, &out.d_b);
  return out;
}

double WarpResult::valid_fraction() const {
  if (valid.empty()) return 0.0;
  size_t n = 0;
  for (std::uint8_t v : valid) n += v;
  return static_cast<double>(n) / static_cast<double>(valid.size());
}

namespace {

constexpr double kEdgeTolerance = 1e-9;
constexpr double kMinSourceDepth = 1e-6;

struct Sample {
  bool valid = false;
  Vec3 point = Vec3::Zero();  // target camera frame
  Vec3 source = Vec3::Zero(); // source camera frame
  int x0 = 0, y0 = 0;
  double fx = 0.0, fy = 0.0;  // bilinear fractions
};

Sample locate(const DepthMap& depth, const RigidTransform& t2s, const CameraIntrinsics& K, int x, int y) {
  Sample s;
  s.point = depth.at(x, y) * K.back_project(K.pixel_center(x, y));
  s.source = t2s.apply(s.point);
  if (!(s.source.z() > kMinSourceDepth)) return s;
  const Vec2 uv = K.project(s.source);
  // Positions within kEdgeTolerance of a pixel center are snapped onto it, so an identity warp
  // reproduces the source bit for bit despite back-projection roundoff.
  const auto snap = [](double v) {
    const double r = std::round(v);
    return std::abs(v - r) <= kEdgeTolerance ? r : v;
  };
  const double sx = snap(uv.x() - 0.5), sy = snap(uv.y() - 0.5);
  if (!(sx >= -kEdgeTolerance && sx <= K.width - 1 + kEdgeTolerance && sy >= -kEdgeTolerance &&
        sy <= K.height - 1 + kEdgeTolerance)) {
    return s;
  }
  s.x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, K.width - 2);
  s.y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, K.height - 2);
  s.fx = sx - s.x0;
  s.fy = sy - s.y0;
  s.valid = true;
  return s;
}

void check_warp_inputs(const Image& src, const DepthMap& depth, const CameraIntrinsics& K) {
  K.validate();
  if (src.width != K.width || src.height != K.height || depth.width != K.width || depth.height != K.height) {
    throw Error(ErrorKind::ShapeMismatch, "warp inputs do not match intrinsics");
  }
  if (K.width < 2 || K.height < 2) throw Error(ErrorKind::ShapeMismatch, "warp needs at least 2x2 pixels");
  for (double d : depth.data) {
    if (!(d > 0.0)) throw Error(ErrorKind::NonPositiveDepth, "target depth must be positive");
  }
}

}  // namespace

WarpResult inverse_warp(const Image& src, const DepthMap& depth_target, const RigidTransform& target_to_source,
                        const CameraIntrinsics& K) {
  check_warp_inputs(src, depth_target, K);
  WarpResult out{Image(K.width, K.height, src.channels), ValidMask(static_cast<size_t>(K.pixel_count()), 0)};
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const Sample s = locate(depth_target, target_to_source, K, x, y);
      if (!s.valid) continue;
      out.valid[static_cast<size_t>(y) * K.width + x] = 1;
      for (int ch = 0; ch < src.channels; ++ch) {
        const double i00 = src.at(s.x0, s.y0, ch), i10 = src.at(s.x0 + 1, s.y0, ch);
        const double i01 = src.at(s.x0, s.y0 + 1, ch), i11 = src.at(s.x0 + 1, s.y0 + 1, ch);
        out.image.at(x, y, ch) = (1.0 - s.fx) * (1.0 - s.fy) * i00 + s.fx * (1.0 - s.fy) * i10 +
                                 (1.0 - s.fx) * s.fy * i01 + s.fx * s.fy * i11;
      }
    }
  }
  return out;
}

WarpGradients inverse_warp_backward(const Image& src, const DepthMap& depth_target,
                                    const RigidTransform& target_to_source, const CameraIntrinsics& K,
                                    const Image& d_warped) {
  check_warp_inputs(src, depth_target, K);
  if (d_warped.width != K.width || d_warped.height != K.height || d_warped.channels != src.channels) {
    throw Error(ErrorKind::ShapeMismatch, "warp gradient does not match image");
  }
  WarpGradients out;
  out.d_depth = DepthMap(K.width, K.height);
  const Mat3& R = target_to_source.rotation;
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const Sample s = locate(depth_target, target_to_source, K, x, y);
      if (!s.valid) continue;
      double d_sx = 0.0, d_sy = 0.0;
      for (int ch = 0; ch < src.channels; ++ch) {
        const double g = d_warped.at(x, y, ch);
        if (g == 0.0) continue;
        const double i00 = src.at(s.x0, s.y0, ch), i10 = src.at(s.x0 + 1, s.y0, ch);
        const double i01 = src.at(s.x0, s.y0 + 1, ch), i11 = src.at(s.x0 + 1, s.y0 + 1, ch);
        d_sx += g * ((1.0 - s.fy) * (i10 - i00) + s.fy * (i11 - i01));
        d_sy += g * ((1.0 - s.fx) * (i01 - i00) + s.fx * (i11 - i10));
      }
      if (d_sx == 0.0 && d_sy == 0.0) continue;
      const Vec3& q = s.source;
      const double iz = 1.0 / q.z();
      const Vec3 d_q(d_sx * K.fx * iz, d_sy * K.fy * iz,
                     -(d_sx * K.fx * q.x() + d_sy * K.fy * q.y()) * iz * iz);
      out.d_rotation += d_q * s.point.transpose();
      out.d_translation += d_q;
      const Vec3 ray = K.back_project(K.pixel_center(x, y));
      out.d_depth.at(x, y) = ray.dot(R.transpose() * d_q);
    }
  }
  return out;
}

namespace {

void warn_low_coverage(const WarpResult& warp, int view) {
  if (warp.valid_fraction() < 0.1) {
    std::cerr << "warning: warp from context view " << view << " has only " << warp.valid_fraction() * 100.0
              << "% valid pixels\n";
  }
}

}  // namespace

ReprojectionResult reprojection_loss(const Image& target, const Image& context1, const Image& context2,
                                     const DepthMap& depth_target, const RigidTransform& context1_to_target,
                                     const RigidTransform& context2_to_target, const CameraIntrinsics& K,
                                     const LossConfig& cfg) {
  ReprojectionResult out;
  const std::array<const Image*, 2> sources{&context1, &context2};
  const std::array<const RigidTransform*, 2> poses{&context1_to_target, &context2_to_target};
  for (int k = 0; k < 2; ++k) {
    const WarpResult warp = inverse_warp(*sources[k], depth_target, se3_inverse(*poses[k]), K);
    warn_low_coverage(warp, k + 1);
    out.valid_fraction[k] = warp.valid_fraction();
    out.terms[k] = photometric_error(target, warp.image, cfg, &warp.valid);
    out.value += out.terms[k];
  }
  return out;
}

ReprojectionGradients reprojection_loss_with_gradients(const Image& target, const Image& context1,
                                                       const Image& context2, const DepthMap& depth_target,
                                                       const RigidTransform& context1_to_target,
                                                       const RigidTransform& context2_to_target,
                                                       const CameraIntrinsics& K, const LossConfig& cfg) {
  ReprojectionGradients out;
  out.d_depth = DepthMap(K.width, K.height);
  const std::array<const Image*, 2> sources{&context1, &context2};
  const std::array<const RigidTransform*, 2> poses{&context1_to_target, &context2_to_target};
  for (int k = 0; k < 2; ++k) {
    const RigidTransform t2s = se3_inverse(*poses[k]);
    const WarpResult warp = inverse_warp(*sources[k], depth_target, t2s, K);
    warn_low_coverage(warp, k + 1);
    out.loss.valid_fraction[k] = warp.valid_fraction();
    Image d_warped;
    const double pe = photometric_core(target, warp.image, cfg, &warp.valid, nullptr, &d_warped);
    out.loss.terms[k] = pe;
    out.loss.value += pe;

    const WarpGradients wg = inverse_warp_backward(*sources[k], depth_target, t2s, K, d_warped);
    for (size_t i = 0; i < out.d_depth.data.size(); ++i) out.d_depth.data[i] += wg.d_depth.data[i];
    // t2s = (R^T, -R^T t) for the pose (R, t).
    const Mat3& R = poses[k]->rotation;
    const Vec3& t = poses[k]->translation;
    out.d_rotation[k] = wg.d_rotation.transpose() - t * wg.d_translation.transpose();
    out.d_translation[k] = -(R * wg.d_translation);
  }
  return out;
}

double rendering_loss(const std::array<const Image*, 3>& renders, const std::array<const Image*, 3>& images,
                      const LossConfig& cfg) {
  return rendering_loss_with_gradients(renders, images, cfg).value;
}

RenderingLossGradients rendering_loss_with_gradients(const std::array<const Image*, 3>& renders,
                                                     const std::array<const Image*, 3>& images,
                                                     const LossConfig& cfg) {
  RenderingLossGradients out;
  for (int k = 0; k < 3; ++k) {
    const Image& render = *renders[k];
    const Image& image = *images[k];
    require_same_shape(render, image, "rendering_loss");
    Image& d = out.d_renders[k];
    d = Image(render.width, render.height, render.channels);
    if (cfg.gamma1 > 0.0) {
      Image d_ssim;
      const double s = ssim_core(image, render, cfg, nullptr, nullptr, &d_ssim);
      out.value += cfg.gamma1 * (1.0 - s);
      for (size_t i = 0; i < d.data.size(); ++i) d.data[i] -= cfg.gamma1 * d_ssim.data[i];
    }
    const double norm = 1.0 / static_cast<double>(render.data.size());
    double sq = 0.0;
    for (size_t i = 0; i < render.data.size(); ++i) {
      const double diff = render.data[i] - image.data[i];
      sq += diff * diff;
      d.data[i] += cfg.gamma2 * 2.0 * diff * norm;
    }
    out.value += cfg.gamma2 * sq * norm;
  }
  return out;
}

double total_loss(const LossParts& parts, const LossConfig& cfg) {
  return cfg.lambda1 * parts.reprojection + cfg.lambda2 * parts.rendering;
}

}  // namespace splatgeo
