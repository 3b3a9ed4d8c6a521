#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "splatgeo/cli.hpp"
#include "splatgeo/error.hpp"
#include "splatgeo/scene_io.hpp"

namespace splatgeo {

namespace fs = std::filesystem;
using nlohmann::json;

RigidTransform SceneBundle::camera_pose(View v) const {
  if (v == View::Target) return RigidTransform::identity();
  if (!gt_poses) throw Error(ErrorKind::InvalidArgument, "bundle has no ground-truth poses");
  return (*gt_poses)[v == View::Context1 ? 0 : 1];
}

void SceneBundle::validate() const {
  K.validate();
  for (const Image& img : images) {
    if (img.width != K.width || img.height != K.height || img.channels != 3) {
      throw Error(ErrorKind::DimensionMismatch, "image is " + std::to_string(img.width) + "x" +
                                                    std::to_string(img.height) + "x" + std::to_string(img.channels) +
                                                    ", camera expects " + std::to_string(K.width) + "x" +
                                                    std::to_string(K.height) + "x3");
    }
  }
  if (gt_depths) {
    for (const DepthMap& d : *gt_depths) {
      if (d.width != K.width || d.height != K.height) throw Error(ErrorKind::DimensionMismatch, "depth map size");
    }
  }
}

json pose_json(const RigidTransform& T) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) {
    rows.push_back({T.rotation(r, 0), T.rotation(r, 1), T.rotation(r, 2), T.translation[r]});
  }
  rows.push_back({0.0, 0.0, 0.0, 1.0});
  return rows;
}

RigidTransform pose_from_json_matrix(const json& rows) {
  if (!rows.is_array() || rows.size() != 4) throw Error(ErrorKind::InvalidArgument, "pose must be a 4x4 matrix");
  RigidTransform T;
  for (int r = 0; r < 3; ++r) {
    if (!rows[r].is_array() || rows[r].size() != 4) throw Error(ErrorKind::InvalidArgument, "pose must be a 4x4 matrix");
    for (int c = 0; c < 3; ++c) T.rotation(r, c) = rows[r][c].get<double>();
    T.translation[r] = rows[r][3].get<double>();
  }
  return T;
}

namespace {

const char* const kImageNames[3] = {"c1.png", "t.png", "c2.png"};
const char* const kDepthNames[2] = {"depth_c1.png", "depth_c2.png"};

}  // namespace

void save_scene(const SceneBundle& bundle, const fs::path& dir) {
  bundle.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

  json m;
  m["schema"] = kSceneSchema;
  m["fx"] = bundle.K.fx;
  m["fy"] = bundle.K.fy;
  m["cx"] = bundle.K.cx;
  m["cy"] = bundle.K.cy;
  m["width"] = bundle.K.width;
  m["height"] = bundle.K.height;
  m["seed"] = bundle.seed;
  m["images"] = json::array();
  for (int v = 0; v < 3; ++v) {
    write_png_rgb(bundle.images[v], dir / kImageNames[v]);
    m["images"].push_back(kImageNames[v]);
  }
  if (bundle.gt_poses) m["gt_poses"] = {pose_json((*bundle.gt_poses)[0]), pose_json((*bundle.gt_poses)[1])};
  if (bundle.gt_depths) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const DepthMap& d : *bundle.gt_depths) {
      for (double v : d.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
    if (!(hi > lo)) hi = lo + 1.0;
    m["depth_range"] = {{"min", lo}, {"max", hi}};
    m["depths"] = json::array();
    for (int k = 0; k < 2; ++k) {
      const DepthMap& d = (*bundle.gt_depths)[k];
      std::vector<std::uint16_t> q(d.data.size());
      for (size_t i = 0; i < q.size(); ++i) {
        q[i] = static_cast<std::uint16_t>(std::lround(std::clamp((d.data[i] - lo) / (hi - lo), 0.0, 1.0) * 65535.0));
      }
      write_png_gray16(q, d.width, d.height, dir / kDepthNames[k]);
      m["depths"].push_back(kDepthNames[k]);
    }
  }
  if (bundle.gt_gaussians) {
    export_ply(*bundle.gt_gaussians, dir / "gaussians.ply");
    m["gaussians"] = "gaussians.ply";
  }

  std::ofstream out(dir / "scene.json");
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + (dir / "scene.json").string());
  out << m.dump(2) << "\n";
}

SceneBundle load_scene(const fs::path& dir) {
  const fs::path manifest = dir / "scene.json";
  if (!fs::exists(manifest)) throw Error(ErrorKind::ManifestMissing, "no scene.json in " + dir.string());
  json m;
  try {
    std::ifstream in(manifest);
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ManifestMissing, "unreadable manifest " + manifest.string() + ": " + e.what());
  }

  SceneBundle b;
  try {
    if (m.contains("schema") && m["schema"].get<std::string>() != kSceneSchema) {
      throw Error(ErrorKind::InvalidArgument, "unsupported manifest schema " + m["schema"].get<std::string>());
    }
    b.K.fx = m.at("fx").get<double>();
    b.K.fy = m.at("fy").get<double>();
    b.K.cx = m.at("cx").get<double>();
    b.K.cy = m.at("cy").get<double>();
    b.K.width = m.at("width").get<int>();
    b.K.height = m.at("height").get<int>();
    b.seed = m.value("seed", std::uint64_t{0});
    const json& images = m.at("images");
    if (!images.is_array() || images.size() != 3) {
      throw Error(ErrorKind::InvalidArgument, "manifest must list exactly three images");
    }
    for (int v = 0; v < 3; ++v) {
      const PngImage png = read_png(dir / images[v].get<std::string>());
      if (png.width != b.K.width || png.height != b.K.height) {
        throw Error(ErrorKind::DimensionMismatch, images[v].get<std::string>() + " is " + std::to_string(png.width) +
                                                      "x" + std::to_string(png.height) + ", manifest says " +
                                                      std::to_string(b.K.width) + "x" + std::to_string(b.K.height));
      }
      b.images[v] = png_to_image(png);
    }
    if (m.contains("gt_poses")) {
      const json& poses = m["gt_poses"];
      if (!poses.is_array() || poses.size() != 2) throw Error(ErrorKind::InvalidArgument, "gt_poses needs two poses");
      b.gt_poses = std::array<RigidTransform, 2>{pose_from_json_matrix(poses[0]), pose_from_json_matrix(poses[1])};
    }
    if (m.contains("depths")) {
      const double lo = m.at("depth_range").at("min").get<double>();
      const double hi = m.at("depth_range").at("max").get<double>();
      std::array<DepthMap, 2> depths;
      for (int k = 0; k < 2; ++k) {
        const PngImage png = read_png(dir / m["depths"][k].get<std::string>());
        if (png.width != b.K.width || png.height != b.K.height || png.channels != 1) {
          throw Error(ErrorKind::DimensionMismatch, "depth image does not match the manifest size");
        }
        const double full = png.bit_depth == 16 ? 65535.0 : 255.0;
        depths[k] = DepthMap(png.width, png.height);
        for (size_t i = 0; i < depths[k].data.size(); ++i) depths[k].data[i] = lo + png.samples[i] / full * (hi - lo);
      }
      b.gt_depths = std::move(depths);
    }
    if (m.contains("gaussians")) b.gt_gaussians = import_ply(dir / m["gaussians"].get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, "malformed manifest " + manifest.string() + ": " + e.what());
  }
  b.validate();
  return b;
}

}  // namespace splatgeo
