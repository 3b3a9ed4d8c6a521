#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "splatgeo/error.hpp"
#include "splatgeo/scene_io.hpp"

namespace splatgeo {

namespace {

// 3 position, 3 normal, 3 dc, 9 rest, opacity, 3 scale, 4 rotation.
constexpr int kPlyFloats = 26;

std::vector<std::string> ply_property_names() {
  std::vector<std::string> names{"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  for (int i = 0; i < 9; ++i) names.push_back("f_rest_" + std::to_string(i));
  names.push_back("opacity");
  for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
  for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
  return names;
}

void put_float(std::string& out, double v) {
  const float f = static_cast<float>(v);
  char bytes[4];
  std::memcpy(bytes, &f, 4);
  if constexpr (std::endian::native == std::endian::big) std::swap(bytes[0], bytes[3]), std::swap(bytes[1], bytes[2]);
  out.append(bytes, 4);
}

float get_float(const char* p) {
  char bytes[4];
  std::memcpy(bytes, p, 4);
  if constexpr (std::endian::native == std::endian::big) std::swap(bytes[0], bytes[3]), std::swap(bytes[1], bytes[2]);
  float f;
  std::memcpy(&f, bytes, 4);
  return f;
}

}  // namespace

void export_ply(const GaussianSet& gaussians, const std::filesystem::path& path) {
  gaussians.validate();
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << gaussians.size() << "\n";
  for (const std::string& name : ply_property_names()) header << "property float " << name << "\n";
  header << "end_header\n";

  std::string body = header.str();
  body.reserve(body.size() + gaussians.size() * kPlyFloats * 4);
  for (size_t i = 0; i < gaussians.size(); ++i) {
    const Vec3& c = gaussians.centers[i];
    for (int k = 0; k < 3; ++k) put_float(body, c[k]);
    for (int k = 0; k < 3; ++k) put_float(body, 0.0);
    const ShCoeffs& sh = gaussians.sh[i];
    for (int ch = 0; ch < 3; ++ch) put_float(body, sh(0, ch));
    for (int ch = 0; ch < 3; ++ch) {
      for (int m = 1; m < 4; ++m) put_float(body, sh(m, ch));
    }
    put_float(body, logit(gaussians.opacities[i]));
    for (int k = 0; k < 3; ++k) put_float(body, std::log(gaussians.scales[i][k]));
    for (int k = 0; k < 4; ++k) put_float(body, gaussians.orientations[i][k]);
  }

  std::ofstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  file.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!file) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

GaussianSet import_ply(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
  std::string line;
  size_t count = 0;
  bool saw_format = false;
  std::vector<std::string> properties;
  if (!std::getline(file, line) || line != "ply") throw Error(ErrorKind::IoFailure, path.string() + " is not a PLY file");
  while (std::getline(file, line)) {
    if (line == "end_header") break;
    std::istringstream in(line);
    std::string word;
    in >> word;
    if (word == "format") {
      std::string fmt;
      in >> fmt;
      if (fmt != "binary_little_endian") throw Error(ErrorKind::IoFailure, "unsupported PLY format " + fmt);
      saw_format = true;
    } else if (word == "element") {
      std::string name;
      in >> name >> count;
      if (name != "vertex") throw Error(ErrorKind::IoFailure, "unexpected PLY element " + name);
    } else if (word == "property") {
      std::string type, name;
      in >> type >> name;
      if (type != "float") throw Error(ErrorKind::IoFailure, "unsupported PLY property type " + type);
      properties.push_back(name);
    }
  }
  if (!saw_format || line != "end_header") throw Error(ErrorKind::IoFailure, "truncated PLY header");
  std::map<std::string, size_t> slot;
  for (size_t i = 0; i < properties.size(); ++i) slot[properties[i]] = i;
  std::vector<size_t> order;
  for (const std::string& name : ply_property_names()) {
    const auto it = slot.find(name);
    if (it == slot.end()) throw Error(ErrorKind::IoFailure, "PLY is missing property " + name);
    order.push_back(it->second);
  }

  const size_t stride = properties.size() * 4;
  std::vector<char> data(stride * count);
  file.read(data.data(), static_cast<std::streamsize>(data.size()));
  if (static_cast<size_t>(file.gcount()) != data.size()) throw Error(ErrorKind::IoFailure, "truncated PLY body");

  GaussianSet out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    const char* row = data.data() + i * stride;
    const auto f = [&](int k) { return static_cast<double>(get_float(row + order[k] * 4)); };
    ShCoeffs sh;
    for (int ch = 0; ch < 3; ++ch) sh(0, ch) = f(6 + ch);
    for (int ch = 0; ch < 3; ++ch) {
      for (int m = 1; m < 4; ++m) sh(m, ch) = f(9 + ch * 3 + (m - 1));
    }
    Vec4 q(f(22), f(23), f(24), f(25));
    if (q.norm() > 0.0) q.normalize();
    out.push_back(Vec3(f(0), f(1), f(2)), sigmoid(f(18)), Vec3(std::exp(f(19)), std::exp(f(20)), std::exp(f(21))), q,
                  sh);
  }
  return out;
}

}  // namespace splatgeo
