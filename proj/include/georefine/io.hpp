#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "georefine/geometry.hpp"
#include "georefine/image.hpp"

namespace georefine::io {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  return out;
}

inline std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
  return in;
}

/// Shortest round-trip decimal representation, locale independent.
inline std::string fmt(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << v;
  return os.str();
}

/// Fixed-precision formatting for human-facing CSV columns.
inline std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// ---------------------------------------------------------------------------------------------
// PFM: "Pf\n<w> <h>\n-1.0\n" then float32 little-endian rows, bottom row first. Invalid depth is
// written as +inf and read back as invalid.

inline void write_pfm(const fs::path& path, const DepthMap& depth) {
  auto out = open_out(path, true);
  out << "Pf\n" << depth.width() << ' ' << depth.height() << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(depth.width()));
  for (int y = depth.height() - 1; y >= 0; --y) {
    for (int x = 0; x < depth.width(); ++x) {
      row[x] = depth.is_valid(x, y) ? static_cast<float>(depth.values(x, y)) : std::numeric_limits<float>::infinity();
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::io, "short write to " + path.string());
}

inline DepthMap read_pfm(const fs::path& path) {
  auto in = open_in(path, true);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if (magic != "Pf" || w <= 0 || h <= 0) throw Error(ErrorCode::io, "not a single-channel PFM: " + path.string());
  if (scale >= 0.0) throw Error(ErrorCode::io, "big-endian PFM not supported: " + path.string());
  DepthMap depth(w, h);
  std::vector<float> row(static_cast<std::size_t>(w));
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw Error(ErrorCode::io, "truncated PFM: " + path.string());
    for (int x = 0; x < w; ++x) depth.set(x, y, row[x]);
  }
  return depth;
}

// ---------------------------------------------------------------------------------------------
// PPM (P6, maxval 255). Gray images are replicated into the three channels.

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

inline void write_ppm(const fs::path& path, const ImageGrid& image) {
  auto out = open_out(path, true);
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<std::uint8_t> bytes;
  bytes.reserve(image.pixel_count() * 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) bytes.push_back(to_byte(image.at(x, y, image.channels() == 3 ? c : 0)));
    }
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Reads a P6 file. `gray` averages the channels into a single-channel image.
inline ImageGrid read_ppm(const fs::path& path, bool gray = true) {
  auto in = open_in(path, true);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) throw Error(ErrorCode::io, "unsupported PPM: " + path.string());
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw Error(ErrorCode::io, "truncated PPM: " + path.string());
  ImageGrid image(w, h, gray ? 1 : 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t o = (static_cast<std::size_t>(y) * w + x) * 3;
      if (gray) {
        image.at(x, y) = (bytes[o] + bytes[o + 1] + bytes[o + 2]) / (3.0 * 255.0);
      } else {
        for (int c = 0; c < 3; ++c) image.at(x, y, c) = bytes[o + c] / 255.0;
      }
    }
  }
  return image;
}

/// Raw float32 dump of a single-channel image (keeps renders bit-exact across stages).
inline void write_image_f32(const fs::path& path, const ImageGrid& image) {
  auto out = open_out(path, true);
  const std::int32_t dims[3] = {image.width(), image.height(), image.channels()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::vector<float> v(image.values().begin(), image.values().end());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

inline ImageGrid read_image_f32(const fs::path& path) {
  auto in = open_in(path, true);
  std::int32_t dims[3] = {0, 0, 0};
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || dims[0] <= 0 || dims[1] <= 0) throw Error(ErrorCode::io, "bad image file: " + path.string());
  ImageGrid image(dims[0], dims[1], dims[2]);
  std::vector<float> v(image.values().size());
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
  if (!in) throw Error(ErrorCode::io, "truncated image file: " + path.string());
  std::copy(v.begin(), v.end(), image.values().begin());
  return image;
}

// ---------------------------------------------------------------------------------------------
// TUM trajectory: "timestamp tx ty tz qx qy qz qw", world-from-camera (camera center and
// orientation in the world), as produced by the TUM RGB-D tools.

struct StampedPose {
  double timestamp = 0.0;
  SE3Pose pose;  // camera-from-world
};

inline void write_tum(const fs::path& path, const std::vector<StampedPose>& traj) {
  auto out = open_out(path);
  for (const auto& sp : traj) {
    const SE3Pose wc = sp.pose.inverse();
    const auto& q = wc.rotation();
    const auto& t = wc.translation();
    out << fmt(sp.timestamp) << ' ' << fmt(t.x()) << ' ' << fmt(t.y()) << ' ' << fmt(t.z()) << ' ' << fmt(q.x())
        << ' ' << fmt(q.y()) << ' ' << fmt(q.z()) << ' ' << fmt(q.w()) << '\n';
  }
}

inline std::vector<StampedPose> read_tum(const fs::path& path) {
  auto in = open_in(path);
  std::vector<StampedPose> traj;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    is.imbue(std::locale::classic());
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(is >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
      throw Error(ErrorCode::io, "malformed trajectory line in " + path.string());
    }
    const SE3Pose wc(Eigen::Quaterniond(qw, qx, qy, qz), Vec3(tx, ty, tz));
    traj.push_back({ts, wc.inverse()});
  }
  return traj;
}

// ---------------------------------------------------------------------------------------------
// FLO1 flow: "FLO1", int32 width, int32 height, then width*height (u, v) float32 pairs in
// row-major order. Invalid vectors are stored as NaN.

inline void write_flo(const fs::path& path, const Grid<Vec2>& flow, const Mask& valid) {
  auto out = open_out(path, true);
  out.write("FLO1", 4);
  const std::int32_t dims[2] = {flow.width(), flow.height()};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::vector<float> data;
  data.reserve(flow.size() * 2);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  for (std::size_t i = 0; i < flow.size(); ++i) {
    data.push_back(valid[i] ? static_cast<float>(flow[i].x()) : nan);
    data.push_back(valid[i] ? static_cast<float>(flow[i].y()) : nan);
  }
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
}

inline void read_flo(const fs::path& path, Grid<Vec2>& flow, Mask& valid) {
  auto in = open_in(path, true);
  char magic[4];
  std::int32_t dims[2];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!in || std::memcmp(magic, "FLO1", 4) != 0 || dims[0] <= 0 || dims[1] <= 0) {
    throw Error(ErrorCode::io, "not a FLO1 file: " + path.string());
  }
  flow = Grid<Vec2>(dims[0], dims[1], Vec2::Zero());
  valid = Mask(dims[0], dims[1], 0);
  std::vector<float> data(flow.size() * 2);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!in) throw Error(ErrorCode::io, "truncated FLO1 file: " + path.string());
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (std::isfinite(data[2 * i]) && std::isfinite(data[2 * i + 1])) {
      flow[i] = Vec2(data[2 * i], data[2 * i + 1]);
      valid[i] = 1;
    }
  }
}

// ---------------------------------------------------------------------------------------------
// Minimal CSV: comma separated, no quoting (no field in our files contains a comma).

inline std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error(ErrorCode::io, "missing CSV column '" + name + "'");
    return static_cast<int>(it - header.begin());
  }
};

inline CsvTable read_csv(const fs::path& path) {
  auto in = open_in(path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::io, "empty CSV: " + path.string());
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split(line));
    if (t.rows.back().size() != t.header.size()) throw Error(ErrorCode::io, "ragged CSV row in " + path.string());
  }
  return t;
}

inline double to_double(const std::string& s) {
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  double v = 0.0;
  if (!(is >> v)) throw Error(ErrorCode::io, "not a number: '" + s + "'");
  return v;
}

inline long to_long(const std::string& s) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception&) {
    throw Error(ErrorCode::io, "not an integer: '" + s + "'");
  }
  if (pos != s.size()) throw Error(ErrorCode::io, "not an integer: '" + s + "'");
  return v;
}

inline std::string read_file(const fs::path& path) {
  auto in = open_in(path, true);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace georefine::io
