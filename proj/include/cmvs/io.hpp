#pragma once

// On-disk formats: PFM images / depth maps, MVSNet-style cam.txt and pair.txt,
// and PLY point clouds.

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cmvs/camera.hpp"
#include "cmvs/fusion_eval.hpp"
#include "cmvs/numerics.hpp"

namespace cmvs {

/// Malformed or truncated file contents.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& source, const std::string& what)
      : std::runtime_error(source + ": " + what), source_(source) {}
  const std::string& source() const { return source_; }

 private:
  std::string source_;
};

namespace detail {
inline std::ofstream open_out(const std::filesystem::path& path, bool binary) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& path, bool binary) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::string read_token(std::istream& in) {
  std::string tok;
  int c = in.peek();
  while (c != EOF && std::isspace(c)) {
    in.get();
    c = in.peek();
  }
  while (c != EOF && !std::isspace(c)) {
    tok.push_back(static_cast<char>(in.get()));
    c = in.peek();
  }
  return tok;
}

inline float byteswap_float(float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  u = ((u & 0xffu) << 24) | ((u & 0xff00u) << 8) | ((u >> 8) & 0xff00u) | (u >> 24);
  std::memcpy(&v, &u, 4);
  return v;
}
}  // namespace detail

// ---------------------------------------------------------------- PFM

/// Header for a PFM of the given size; the scale sign encodes this host's byte order.
inline std::string pfm_header(int width, int height, int channels) {
  if (channels != 1 && channels != 3) throw std::invalid_argument("PFM supports 1 or 3 channels");
  const bool little = std::endian::native == std::endian::little;
  return std::string(channels == 3 ? "PF" : "Pf") + "\n" + std::to_string(width) + " " + std::to_string(height) +
         "\n" + (little ? "-1.0" : "1.0") + "\n";
}

/// Rows are written bottom-up as the format requires.
inline void write_pfm(std::ostream& out, const ImageF& img) {
  out << pfm_header(img.width(), img.height(), img.channels());
  const auto row_len = static_cast<std::streamsize>(sizeof(float) * img.width() * img.channels());
  for (int y = img.height() - 1; y >= 0; --y) out.write(reinterpret_cast<const char*>(img.pixel(y, 0)), row_len);
  if (!out) throw std::runtime_error("PFM write failed");
}

inline void write_pfm(const std::filesystem::path& path, const ImageF& img) {
  auto out = detail::open_out(path, true);
  write_pfm(out, img);
}

inline ImageF read_pfm(std::istream& in, const std::string& source = "<pfm>") {
  const std::string magic = detail::read_token(in);
  int channels = 0;
  if (magic == "PF") channels = 3;
  else if (magic == "Pf") channels = 1;
  else throw FormatError(source, "bad PFM magic '" + magic + "'");
  int width = 0, height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(detail::read_token(in));
    height = std::stoi(detail::read_token(in));
    scale = std::stod(detail::read_token(in));
  } catch (const std::logic_error&) {
    throw FormatError(source, "malformed PFM header");
  }
  if (width <= 0 || height <= 0 || scale == 0.0) throw FormatError(source, "invalid PFM dimensions or scale");
  if (!std::isspace(in.get())) throw FormatError(source, "missing separator after PFM header");
  ImageF img(height, width, channels);
  const auto row_len = static_cast<std::streamsize>(sizeof(float) * width * channels);
  for (int y = height - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(img.pixel(y, 0)), row_len);
    if (in.gcount() != row_len) throw FormatError(source, "truncated PFM data");
  }
  const bool file_little = scale < 0.0;
  if (file_little != (std::endian::native == std::endian::little))
    for (auto& v : img.storage()) v = detail::byteswap_float(v);
  return img;
}

inline ImageF read_pfm(const std::filesystem::path& path) {
  auto in = detail::open_in(path, true);
  return read_pfm(in, path.string());
}

// ---------------------------------------------------------------- cam.txt

struct CameraFile {
  Camera camera;
  double depth_interval = 0.0;
  int depth_num = 0;
};

/// MVSNet layout: "extrinsic" 4x4 world->camera, "intrinsic" 3x3, then
/// "depth_min depth_interval depth_num depth_max".
inline void write_cam(std::ostream& out, const Camera& cam, int depth_num = 64) {
  if (depth_num < 1) throw std::invalid_argument("write_cam: depth_num must be >= 1");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto& r = cam.extrinsics.rotation;
  const auto& t = cam.extrinsics.translation;
  out << "extrinsic\n";
  for (int i = 0; i < 3; ++i) out << r(i, 0) << ' ' << r(i, 1) << ' ' << r(i, 2) << ' ' << t(i) << '\n';
  out << "0 0 0 1\n\nintrinsic\n";
  const auto& k = cam.intrinsics;
  out << k.fx << " 0 " << k.cx << "\n0 " << k.fy << ' ' << k.cy << "\n0 0 1\n\n";
  out << cam.depth_min << ' ' << (cam.depth_max - cam.depth_min) / depth_num << ' ' << depth_num << ' '
      << cam.depth_max << '\n';
  if (!out) throw std::runtime_error("cam.txt write failed");
}

inline void write_cam(const std::filesystem::path& path, const Camera& cam, int depth_num = 64) {
  auto out = detail::open_out(path, false);
  write_cam(out, cam, depth_num);
}

/// Parses a cam.txt. The depth line may hold 2, 3 or 4 values; a missing
/// depth_num defaults to 192 and a missing depth_max is
/// depth_min + depth_num * depth_interval (the interval splits the range into depth_num bins).
inline CameraFile read_cam(std::istream& in, const std::string& source = "<cam>") {
  auto number = [&]() {
    const std::string tok = detail::read_token(in);
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (const std::logic_error&) {
      throw FormatError(source, "expected a number, found '" + tok + "'");
    }
  };
  auto keyword = [&](const char* expected) {
    const std::string tok = detail::read_token(in);
    if (tok != expected) throw FormatError(source, std::string("expected '") + expected + "', found '" + tok + "'");
  };
  keyword("extrinsic");
  double e[16];
  for (double& v : e) v = number();
  if (e[12] != 0.0 || e[13] != 0.0 || e[14] != 0.0 || e[15] != 1.0)
    throw FormatError(source, "extrinsic bottom row must be 0 0 0 1");
  keyword("intrinsic");
  double k[9];
  for (double& v : k) v = number();
  if (k[1] != 0.0 || k[3] != 0.0 || k[6] != 0.0 || k[7] != 0.0 || k[8] != 1.0)
    throw FormatError(source, "intrinsic matrix must be [fx 0 cx; 0 fy cy; 0 0 1]");

  std::vector<double> depth;
  for (std::string tok = detail::read_token(in); !tok.empty(); tok = detail::read_token(in)) {
    try {
      depth.push_back(std::stod(tok));
    } catch (const std::logic_error&) {
      throw FormatError(source, "malformed depth line");
    }
  }
  if (depth.size() < 2 || depth.size() > 4) throw FormatError(source, "depth line needs 2 to 4 values");

  CameraFile out;
  out.depth_interval = depth[1];
  out.depth_num = depth.size() >= 3 ? static_cast<int>(depth[2]) : 192;
  const double dmin = depth[0];
  const double dmax = depth.size() == 4 ? depth[3] : dmin + out.depth_num * out.depth_interval;
  Extrinsics ext;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) ext.rotation(i, j) = e[i * 4 + j];
    ext.translation(i) = e[i * 4 + 3];
  }
  try {
    out.camera = Camera(Intrinsics{k[0], k[4], k[2], k[5]}, ext, dmin, dmax);
  } catch (const std::invalid_argument& err) {
    throw FormatError(source, err.what());
  }
  return out;
}

inline CameraFile read_cam(const std::filesystem::path& path) {
  auto in = detail::open_in(path, false);
  return read_cam(in, path.string());
}

// ---------------------------------------------------------------- pair.txt

struct ViewPair {
  int ref = 0;
  std::vector<std::pair<int, double>> sources;  // (view id, score), best first
  bool operator==(const ViewPair&) const = default;
};

struct PairList {
  std::vector<ViewPair> views;

  /// Reference ids whose source list is empty.
  std::vector<int> views_without_sources() const {
    std::vector<int> out;
    for (const auto& v : views)
      if (v.sources.empty()) out.push_back(v.ref);
    return out;
  }
  const ViewPair* find(int ref) const {
    for (const auto& v : views)
      if (v.ref == ref) return &v;
    return nullptr;
  }
  bool operator==(const PairList&) const = default;
};

inline void write_pair(std::ostream& out, const PairList& pairs) {
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << pairs.views.size() << '\n';
  for (const auto& v : pairs.views) {
    out << v.ref << '\n' << v.sources.size();
    for (const auto& [id, score] : v.sources) out << ' ' << id << ' ' << score;
    out << '\n';
  }
  if (!out) throw std::runtime_error("pair.txt write failed");
}

inline void write_pair(const std::filesystem::path& path, const PairList& pairs) {
  auto out = detail::open_out(path, false);
  write_pair(out, pairs);
}

inline PairList read_pair(std::istream& in, const std::string& source = "<pair>") {
  auto integer = [&](const char* what) {
    const std::string tok = detail::read_token(in);
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
      return static_cast<int>(v);
    } catch (const std::logic_error&) {
      throw FormatError(source, std::string("expected ") + what + ", found '" + tok + "'");
    }
  };
  PairList out;
  const int count = integer("view count");
  for (int i = 0; i < count; ++i) {
    ViewPair v;
    v.ref = integer("view id");
    const int n = integer("source count");
    for (int s = 0; s < n; ++s) {
      const int id = integer("source id");
      const std::string tok = detail::read_token(in);
      try {
        v.sources.emplace_back(id, std::stod(tok));
      } catch (const std::logic_error&) {
        throw FormatError(source, "expected source score, found '" + tok + "'");
      }
    }
    out.views.push_back(std::move(v));
  }
  if (!detail::read_token(in).empty()) throw FormatError(source, "trailing data after declared view count");
  return out;
}

inline PairList read_pair(const std::filesystem::path& path) {
  auto in = detail::open_in(path, false);
  return read_pair(in, path.string());
}

// ---------------------------------------------------------------- PLY

/// x/y/z as float32, plus uchar red/green/blue when the cloud has colors.
inline void write_ply(std::ostream& out, const PointCloud& cloud, bool binary) {
  if (cloud.empty()) throw std::invalid_argument("write_ply: empty point cloud");
  if (cloud.has_colors() && cloud.colors.size() != cloud.points.size())
    throw std::invalid_argument("write_ply: color count mismatch");
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors()) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const float xyz[3] = {static_cast<float>(cloud.points[i].x()), static_cast<float>(cloud.points[i].y()),
                          static_cast<float>(cloud.points[i].z())};
    if (binary) {
      for (float v : xyz) {
        if constexpr (std::endian::native != std::endian::little) v = detail::byteswap_float(v);
        out.write(reinterpret_cast<const char*>(&v), 4);
      }
      if (cloud.has_colors()) out.write(reinterpret_cast<const char*>(cloud.colors[i].data()), 3);
    } else {
      out << std::setprecision(std::numeric_limits<float>::max_digits10) << xyz[0] << ' ' << xyz[1] << ' ' << xyz[2];
      if (cloud.has_colors())
        out << ' ' << int(cloud.colors[i][0]) << ' ' << int(cloud.colors[i][1]) << ' ' << int(cloud.colors[i][2]);
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("PLY write failed");
}

inline void write_ply(const std::filesystem::path& path, const PointCloud& cloud, bool binary) {
  auto out = detail::open_out(path, true);
  write_ply(out, cloud, binary);
}

/// Reads the vertex element of an ASCII or binary little-endian PLY. Scalar
/// properties of any standard type are accepted; x/y/z and red/green/blue are kept.
inline PointCloud read_ply(std::istream& in, const std::string& source = "<ply>") {
  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw FormatError(source, "missing 'ply' magic");
  bool binary = false;
  std::size_t vertices = 0;
  bool in_vertex = false, seen_vertex = false;
  struct Prop {
    std::string name;
    std::string type;
  };
  std::vector<Prop> props;
  while (true) {
    if (!std::getline(in, line)) throw FormatError(source, "unterminated PLY header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header") break;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else throw FormatError(source, "unsupported PLY format '" + fmt + "'");
    } else if (key == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (seen_vertex && in_vertex) in_vertex = false;
      if (name == "vertex") {
        if (seen_vertex) throw FormatError(source, "duplicate vertex element");
        in_vertex = seen_vertex = true;
        vertices = count;
      } else if (!seen_vertex) {
        throw FormatError(source, "elements before 'vertex' are not supported");
      } else {
        in_vertex = false;
      }
    } else if (key == "property" && in_vertex) {
      Prop p;
      ls >> p.type;
      if (p.type == "list") throw FormatError(source, "list properties on vertices are not supported");
      ls >> p.name;
      props.push_back(p);
    }
  }
  if (!seen_vertex) throw FormatError(source, "no vertex element");
  auto type_size = [&](const std::string& t) -> int {
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    throw FormatError(source, "unknown PLY property type '" + t + "'");
  };
  auto decode = [&](const std::string& t, const unsigned char* b) -> double {
    auto get = [&](auto v) {
      std::memcpy(&v, b, sizeof(v));
      return static_cast<double>(v);
    };
    if (t == "char" || t == "int8") return get(std::int8_t{});
    if (t == "uchar" || t == "uint8") return get(std::uint8_t{});
    if (t == "short" || t == "int16") return get(std::int16_t{});
    if (t == "ushort" || t == "uint16") return get(std::uint16_t{});
    if (t == "int" || t == "int32") return get(std::int32_t{});
    if (t == "uint" || t == "uint32") return get(std::uint32_t{});
    if (t == "float" || t == "float32") return get(float{});
    return get(double{});
  };
  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (std::size_t i = 0; i < props.size(); ++i) {
    const auto& n = props[i].name;
    const int k = static_cast<int>(i);
    if (n == "x") ix = k;
    else if (n == "y") iy = k;
    else if (n == "z") iz = k;
    else if (n == "red") ir = k;
    else if (n == "green") ig = k;
    else if (n == "blue") ib = k;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError(source, "vertex element lacks x/y/z");
  const bool colors = ir >= 0 && ig >= 0 && ib >= 0;

  PointCloud cloud;
  cloud.points.reserve(vertices);
  std::vector<double> vals(props.size());
  std::vector<unsigned char> buf(16);
  for (std::size_t v = 0; v < vertices; ++v) {
    for (std::size_t p = 0; p < props.size(); ++p) {
      if (binary) {
        const int sz = type_size(props[p].type);
        in.read(reinterpret_cast<char*>(buf.data()), sz);
        if (in.gcount() != sz) throw FormatError(source, "truncated PLY body");
        vals[p] = decode(props[p].type, buf.data());
      } else {
        const std::string tok = detail::read_token(in);
        try {
          vals[p] = std::stod(tok);
        } catch (const std::logic_error&) {
          throw FormatError(source, "malformed PLY value '" + tok + "'");
        }
        // Round to the declared type so ASCII and binary files agree bit for bit.
        if (props[p].type == "float" || props[p].type == "float32") vals[p] = static_cast<float>(vals[p]);
      }
    }
    cloud.points.emplace_back(vals[static_cast<std::size_t>(ix)], vals[static_cast<std::size_t>(iy)],
                              vals[static_cast<std::size_t>(iz)]);
    if (colors)
      cloud.colors.push_back({static_cast<std::uint8_t>(vals[static_cast<std::size_t>(ir)]),
                              static_cast<std::uint8_t>(vals[static_cast<std::size_t>(ig)]),
                              static_cast<std::uint8_t>(vals[static_cast<std::size_t>(ib)])});
  }
  return cloud;
}

inline PointCloud read_ply(const std::filesystem::path& path) {
  auto in = detail::open_in(path, true);
  return read_ply(in, path.string());
}

}  // namespace cmvs
