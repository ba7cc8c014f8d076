#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "georefine/error.hpp"
#include "georefine/geometry.hpp"
#include "georefine/image.hpp"
#include "georefine/marching_cubes_tables.hpp"

namespace georefine::fusion {

inline constexpr double kMaxWeight = 128.0;
inline constexpr double kZeroNudge = 1e-9;

/// Dense TSDF grid. Voxel (i, j, k) has its center at origin + voxel_size * (i, j, k); storage is
/// x-fastest.
struct TsdfVolume {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.02;
  std::array<int, 3> dims{0, 0, 0};
  double truncation = 0.08;
  std::vector<double> tsdf;
  std::vector<double> weight;

  TsdfVolume() = default;
  TsdfVolume(const Vec3& origin_, double voxel, std::array<int, 3> dims_, double trunc = 0.0)
      : origin(origin_), voxel_size(voxel), dims(dims_), truncation(trunc > 0.0 ? trunc : 4.0 * voxel) {
    if (!(voxel > 0.0) || dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
      throw Error(ErrorCode::invalid_argument, "volume needs positive voxel size and dims");
    }
    tsdf.assign(voxel_count(), 1.0);
    weight.assign(voxel_count(), 0.0);
  }

  /// Smallest volume covering the axis-aligned box [lo, hi] with `margin` on every side.
  static TsdfVolume covering(const Vec3& lo, const Vec3& hi, double voxel, double margin, double trunc = 0.0) {
    std::array<int, 3> d{};
    for (int a = 0; a < 3; ++a) d[a] = static_cast<int>(std::ceil((hi[a] - lo[a] + 2.0 * margin) / voxel)) + 1;
    return TsdfVolume(lo - Vec3::Constant(margin), voxel, d, trunc);
  }

  std::size_t voxel_count() const noexcept {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int i, int j, int k) const noexcept {
    return (static_cast<std::size_t>(k) * dims[1] + j) * dims[0] + i;
  }
  Vec3 center(int i, int j, int k) const { return origin + voxel_size * Vec3(i, j, k); }
  std::size_t observed_count() const {
    return static_cast<std::size_t>(std::count_if(weight.begin(), weight.end(), [](double w) { return w > 0.0; }));
  }
};

/// Projects every voxel center into the view and merges the truncated signed distance.
inline void integrate(TsdfVolume& vol, const DepthMap& depth, const SE3Pose& pose, const CameraIntrinsics& k) {
  if (depth.width() != k.width || depth.height() != k.height) {
    throw Error(ErrorCode::resolution_mismatch, "depth does not match intrinsics");
  }
  const Mat3 r = pose.rotation_matrix();
  const Vec3& t = pose.translation();
  for (int z = 0; z < vol.dims[2]; ++z) {
    for (int y = 0; y < vol.dims[1]; ++y) {
      for (int x = 0; x < vol.dims[0]; ++x) {
        const Vec3 xc = r * vol.center(x, y, z) + t;
        if (!(xc.z() > 0.0)) continue;
        const long u = std::lround(k.fx * xc.x() / xc.z() + k.cx);
        const long v = std::lround(k.fy * xc.y() / xc.z() + k.cy);
        if (u < 0 || v < 0 || u >= k.width || v >= k.height) continue;
        if (!depth.is_valid(static_cast<int>(u), static_cast<int>(v))) continue;
        const double sdf = depth.values(static_cast<int>(u), static_cast<int>(v)) - xc.z();
        if (sdf < -vol.truncation) continue;
        const double obs = std::clamp(sdf / vol.truncation, -1.0, 1.0);
        const std::size_t i = vol.index(x, y, z);
        const double w = vol.weight[i];
        vol.tsdf[i] = (vol.tsdf[i] * w + obs) / (w + 1.0);
        vol.weight[i] = std::min(w + 1.0, kMaxWeight);
      }
    }
  }
}

/// Fills the volume from an analytic signed distance (meters); every voxel becomes observed.
inline void load_sdf(TsdfVolume& vol, const std::function<double(const Vec3&)>& sdf) {
  for (int z = 0; z < vol.dims[2]; ++z) {
    for (int y = 0; y < vol.dims[1]; ++y) {
      for (int x = 0; x < vol.dims[0]; ++x) {
        const std::size_t i = vol.index(x, y, z);
        vol.tsdf[i] = std::clamp(sdf(vol.center(x, y, z)) / vol.truncation, -1.0, 1.0);
        vol.weight[i] = 1.0;
      }
    }
  }
}

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> normals;  // empty or one per vertex

  bool empty() const noexcept { return triangles.empty(); }
};

/// Marching cubes over the zero level set. Cubes touching an unobserved voxel are skipped; vertices
/// on shared edges are shared, so closed surfaces come out watertight.
inline TriangleMesh extract_mesh(const TsdfVolume& vol) {
  static constexpr std::array<std::array<int, 3>, 8> kCorner{{
      {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}}};
  static constexpr std::array<std::array<int, 2>, 12> kEdge{{
      {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}}};

  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto gradient = [&](int x, int y, int z) {
    auto at = [&](int i, int j, int k) {
      i = std::clamp(i, 0, vol.dims[0] - 1);
      j = std::clamp(j, 0, vol.dims[1] - 1);
      k = std::clamp(k, 0, vol.dims[2] - 1);
      return vol.tsdf[vol.index(i, j, k)];
    };
    return Vec3(at(x + 1, y, z) - at(x - 1, y, z), at(x, y + 1, z) - at(x, y - 1, z),
                at(x, y, z + 1) - at(x, y, z - 1));
  };
  auto vertex_on_edge = [&](const std::array<int, 3>& a, const std::array<int, 3>& b) {
    // Key by the lower endpoint and the axis the edge runs along.
    const auto& lo = std::min(a, b, [](const auto& p, const auto& q) { return p[0] + p[1] + p[2] < q[0] + q[1] + q[2]; });
    const auto& hi = (&lo == &a) ? b : a;
    int axis = 0;
    while (lo[axis] == hi[axis]) ++axis;
    const std::uint64_t key = static_cast<std::uint64_t>(vol.index(lo[0], lo[1], lo[2])) * 3 + axis;
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    // Exact zeros count as outside; nudging them keeps vertices on distinct edges apart.
    auto value = [&](const std::array<int, 3>& p) {
      const double v = vol.tsdf[vol.index(p[0], p[1], p[2])];
      return v == 0.0 ? kZeroNudge : v;
    };
    const double fa = value(a);
    const double fb = value(b);
    const double s = fa / (fa - fb);
    const Vec3 pa = vol.center(a[0], a[1], a[2]);
    const Vec3 pb = vol.center(b[0], b[1], b[2]);
    Vec3 n = (1.0 - s) * gradient(a[0], a[1], a[2]) + s * gradient(b[0], b[1], b[2]);
    if (n.norm() > 0.0) n.normalize();
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(pa + s * (pb - pa));
    mesh.normals.push_back(n);
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int z = 0; z + 1 < vol.dims[2]; ++z) {
    for (int y = 0; y + 1 < vol.dims[1]; ++y) {
      for (int x = 0; x + 1 < vol.dims[0]; ++x) {
        std::array<std::array<int, 3>, 8> c{};
        int cube = 0;
        bool observed = true;
        for (int n = 0; n < 8 && observed; ++n) {
          c[n] = {x + kCorner[n][0], y + kCorner[n][1], z + kCorner[n][2]};
          const std::size_t i = vol.index(c[n][0], c[n][1], c[n][2]);
          observed = vol.weight[i] > 0.0;
          if (vol.tsdf[i] < 0.0) cube |= 1 << n;
        }
        if (!observed || detail::kEdgeTable[cube] == 0) continue;
        const auto& tri = detail::kTriTable[cube];
        for (int t = 0; t < 16 && tri[t] >= 0; t += 3) {
          std::array<int, 3> ids{};
          for (int v = 0; v < 3; ++v) {
            // Reversed table order winds triangles counter-clockwise seen from free space.
            const auto& e = kEdge[tri[t + 2 - v]];
            ids[v] = vertex_on_edge(c[e[0]], c[e[1]]);
          }
          if (ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2]) continue;
          const Vec3& p0 = mesh.vertices[ids[0]];
          const double area2 = (mesh.vertices[ids[1]] - p0).cross(mesh.vertices[ids[2]] - p0).norm();
          if (!(area2 > 0.0)) continue;
          mesh.triangles.push_back(ids);
        }
      }
    }
  }
  // Drop vertices no triangle uses (left behind by skipped degenerate triangles).
  std::vector<int> remap(mesh.vertices.size(), -1);
  TriangleMesh out;
  for (auto& t : mesh.triangles) {
    for (int& v : t) {
      if (remap[v] < 0) {
        remap[v] = static_cast<int>(out.vertices.size());
        out.vertices.push_back(mesh.vertices[v]);
        out.normals.push_back(mesh.normals[v]);
      }
      v = remap[v];
    }
    out.triangles.push_back(t);
  }
  return out;
}

/// ASCII PLY text; normals are written when present.
inline std::string export_ply(const TriangleMesh& mesh) {
  const bool normals = !mesh.normals.empty() && mesh.normals.size() == mesh.vertices.size();
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << "ply\nformat ascii 1.0\n";
  os << "element vertex " << mesh.vertices.size() << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  if (normals) os << "property float nx\nproperty float ny\nproperty float nz\n";
  os << "element face " << mesh.triangles.size() << "\n";
  os << "property list uchar int vertex_indices\nend_header\n";
  os.setf(std::ios::fixed);
  os.precision(6);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& v = mesh.vertices[i];
    os << v.x() << ' ' << v.y() << ' ' << v.z();
    if (normals) os << ' ' << mesh.normals[i].x() << ' ' << mesh.normals[i].y() << ' ' << mesh.normals[i].z();
    os << '\n';
  }
  for (const auto& t : mesh.triangles) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  return os.str();
}

inline void write_ply(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot write " + path.string());
  f << export_ply(mesh);
  if (!f) throw Error(ErrorCode::io, "write failed: " + path.string());
}

/// Reads the ASCII PLY subset written by export_ply (triangular faces only).
inline TriangleMesh read_ply(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::io, "cannot read " + path.string());
  std::string line;
  std::getline(f, line);
  if (line != "ply") throw Error(ErrorCode::io, "not a PLY file: " + path.string());
  std::size_t nv = 0, nf = 0;
  int vprops = 0;
  std::string current;
  while (std::getline(f, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format" && line != "format ascii 1.0") throw Error(ErrorCode::io, "only ascii PLY is supported");
    if (word == "element") {
      ls >> current;
      (current == "vertex" ? nv : nf) = 0;
      ls >> (current == "vertex" ? nv : nf);
    } else if (word == "property" && current == "vertex") {
      ++vprops;
    }
  }
  TriangleMesh mesh;
  for (std::size_t i = 0; i < nv; ++i) {
    std::vector<double> p(vprops);
    for (auto& x : p) f >> x;
    mesh.vertices.emplace_back(p[0], p[1], p[2]);
    if (vprops >= 6) mesh.normals.emplace_back(p[3], p[4], p[5]);
  }
  for (std::size_t i = 0; i < nf; ++i) {
    int n = 0;
    std::array<int, 3> t{};
    f >> n >> t[0] >> t[1] >> t[2];
    if (n != 3) throw Error(ErrorCode::io, "non-triangular face in " + path.string());
    mesh.triangles.push_back(t);
  }
  if (!f) throw Error(ErrorCode::io, "truncated PLY: " + path.string());
  return mesh;
}

inline constexpr std::size_t kCheckpointHeader = 48;

/// Flat little-endian checkpoint: origin (3 f64), voxel size (f64), dims (3 i32), 4 reserved
/// bytes, then tsdf and weight as f32, x fastest.
inline void write_checkpoint(const std::filesystem::path& path, const TsdfVolume& vol) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot write " + path.string());
  std::array<char, kCheckpointHeader> header{};
  const double head[4] = {vol.origin.x(), vol.origin.y(), vol.origin.z(), vol.voxel_size};
  std::memcpy(header.data(), head, sizeof head);
  std::memcpy(header.data() + sizeof head, vol.dims.data(), 3 * sizeof(std::int32_t));
  f.write(header.data(), header.size());
  std::vector<float> buf(vol.voxel_count());
  std::transform(vol.tsdf.begin(), vol.tsdf.end(), buf.begin(), [](double v) { return static_cast<float>(v); });
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  std::transform(vol.weight.begin(), vol.weight.end(), buf.begin(), [](double v) { return static_cast<float>(v); });
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw Error(ErrorCode::io, "write failed: " + path.string());
}

inline TsdfVolume read_checkpoint(const std::filesystem::path& path, double truncation = 0.0) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::io, "cannot read " + path.string());
  std::array<char, kCheckpointHeader> header{};
  f.read(header.data(), header.size());
  if (!f) throw Error(ErrorCode::io, "truncated checkpoint header: " + path.string());
  double head[4];
  std::array<int, 3> dims{};
  std::memcpy(head, header.data(), sizeof head);
  std::memcpy(dims.data(), header.data() + sizeof head, 3 * sizeof(std::int32_t));
  TsdfVolume vol(Vec3(head[0], head[1], head[2]), head[3], dims, truncation);
  std::vector<float> buf(vol.voxel_count());
  for (auto* dst : {&vol.tsdf, &vol.weight}) {
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!f) throw Error(ErrorCode::io, "truncated checkpoint data: " + path.string());
    std::copy(buf.begin(), buf.end(), dst->begin());
  }
  return vol;
}

}  // namespace georefine::fusion
