#pragma once

// Tetrahedral simulation meshes, triangle surface meshes and their file formats.

#include <porosim/core/error.hpp>
#include <porosim/core/format.hpp>
#include <porosim/core/types.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace porosim {

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool empty() const { return (min.array() > max.array()).any(); }

  void expand(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  void expand(const Aabb& other) {
    min = min.cwiseMin(other.min);
    max = max.cwiseMax(other.max);
  }
  void inflate(double margin) {
    min.array() -= margin;
    max.array() += margin;
  }
  bool overlaps(const Aabb& other) const {
    return (min.array() <= other.max.array()).all() && (other.min.array() <= max.array()).all();
  }
  bool contains(const Vec3& p) const {
    return (min.array() <= p.array()).all() && (p.array() <= max.array()).all();
  }
  Vec3 extent() const { return max - min; }
};

template <typename Range>
Aabb bounds_of(const Range& points) {
  Aabb box;
  for (const auto& p : points) box.expand(p);
  return box;
}

inline double signed_tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).dot((c - a).cross(d - a)) / 6.0;
}

// Faces of a positively oriented tet, each wound so its normal points away
// from the opposite vertex. Index k is the face opposite local vertex k.
inline constexpr std::array<std::array<int, 3>, 4> kTetFaces = {{
    {1, 2, 3},
    {0, 3, 2},
    {0, 1, 3},
    {0, 2, 1},
}};

struct TetMesh {
  Vec3List rest_positions;
  Vec3List current_positions;
  Vec3List velocities;
  std::vector<Tet> tets;
  std::vector<Tri> boundary_faces;
  std::vector<int> boundary_face_tets;  // owning tet of each boundary face
  std::vector<double> rest_volumes;

  std::size_t vertex_count() const { return rest_positions.size(); }
  std::size_t tet_count() const { return tets.size(); }

  double total_rest_volume() const {
    double v = 0.0;
    for (double x : rest_volumes) v += x;
    return v;
  }

  Vec3 tet_position(int t, int local, bool rest = false) const {
    return (rest ? rest_positions : current_positions)[tets[t][local]];
  }

  /// Builds a mesh from raw data: validates indices, reorients every tet to
  /// positive volume, computes rest volumes and the boundary.
  static TetMesh from(Vec3List rest, std::vector<Tet> tets);
};

/// Reorders tet indices so each signed volume is positive. Idempotent.
/// Zero-volume tets cannot be oriented and raise DegenerateElementError.
inline void orient_tets(const Vec3List& positions, std::vector<Tet>& tets, double degenerate_tol = 0.0) {
  for (std::size_t t = 0; t < tets.size(); ++t) {
    auto& tet = tets[t];
    const double vol = signed_tet_volume(positions[tet[0]], positions[tet[1]], positions[tet[2]], positions[tet[3]]);
    if (std::abs(vol) <= degenerate_tol) {
      throw DegenerateElementError("tet " + std::to_string(t) + " has zero volume");
    }
    if (vol < 0.0) std::swap(tet[2], tet[3]);
  }
}

/// Returns the faces that belong to exactly one tet, wound outward, in
/// ascending (tet, local face) order. `owners` receives the owning tet.
inline std::vector<Tri> extract_boundary(const Vec3List& positions, const std::vector<Tet>& tets,
                                         std::vector<int>* owners = nullptr) {
  struct Entry {
    int count = 0;
    int tet = -1;
    int local = -1;
  };
  std::map<std::array<int, 3>, Entry> faces;
  for (std::size_t t = 0; t < tets.size(); ++t) {
    const auto& tet = tets[t];
    const double vol = signed_tet_volume(positions[tet[0]], positions[tet[1]], positions[tet[2]], positions[tet[3]]);
    if (!(vol > 0.0)) {
      throw OrientationError("tet " + std::to_string(t) + " is not positively oriented (signed volume " +
                             fmt_double(vol) + ")");
    }
    for (int f = 0; f < 4; ++f) {
      std::array<int, 3> key = {tet[kTetFaces[f][0]], tet[kTetFaces[f][1]], tet[kTetFaces[f][2]]};
      std::sort(key.begin(), key.end());
      auto& e = faces[key];
      if (e.count++ == 0) {
        e.tet = static_cast<int>(t);
        e.local = f;
      }
    }
  }

  std::vector<std::pair<std::pair<int, int>, Tri>> found;
  for (const auto& [key, e] : faces) {
    if (e.count != 1) continue;
    const auto& tet = tets[e.tet];
    const auto& lf = kTetFaces[e.local];
    found.push_back({{e.tet, e.local}, Tri{tet[lf[0]], tet[lf[1]], tet[lf[2]]}});
  }
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<Tri> out;
  out.reserve(found.size());
  if (owners) owners->clear();
  for (const auto& [id, tri] : found) {
    out.push_back(tri);
    if (owners) owners->push_back(id.first);
  }
  return out;
}

inline TetMesh TetMesh::from(Vec3List rest, std::vector<Tet> tets) {
  const int n = static_cast<int>(rest.size());
  for (std::size_t t = 0; t < tets.size(); ++t) {
    for (int v : tets[t]) {
      if (v < 0 || v >= n) {
        throw ValidationError("tets[" + std::to_string(t) + "]", "vertex index " + std::to_string(v) +
                                                                     " out of range [0, " + std::to_string(n) + ")");
      }
    }
  }
  orient_tets(rest, tets);

  TetMesh mesh;
  mesh.rest_positions = std::move(rest);
  mesh.current_positions = mesh.rest_positions;
  mesh.velocities.assign(mesh.rest_positions.size(), Vec3::Zero());
  mesh.tets = std::move(tets);
  mesh.rest_volumes.reserve(mesh.tets.size());
  for (const auto& tet : mesh.tets) {
    const auto& p = mesh.rest_positions;
    mesh.rest_volumes.push_back(signed_tet_volume(p[tet[0]], p[tet[1]], p[tet[2]], p[tet[3]]));
  }
  mesh.boundary_faces = extract_boundary(mesh.rest_positions, mesh.tets, &mesh.boundary_face_tets);
  return mesh;
}

struct SurfaceMesh {
  Vec3List vertices;
  std::vector<Tri> triangles;
  std::vector<double> wetness;
  std::vector<double> highlight;

  std::size_t vertex_count() const { return vertices.size(); }

  static SurfaceMesh from(Vec3List vertices, std::vector<Tri> triangles) {
    const int n = static_cast<int>(vertices.size());
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (int v : triangles[t]) {
        if (v < 0 || v >= n) {
          throw ValidationError("triangles[" + std::to_string(t) + "]", "vertex index out of range");
        }
      }
    }
    SurfaceMesh m;
    m.vertices = std::move(vertices);
    m.triangles = std::move(triangles);
    m.wetness.assign(m.vertices.size(), 0.0);
    m.highlight.assign(m.vertices.size(), 0.0);
    return m;
  }
};

/// Per-vertex highlight weight with linear falloff 1 - r/radius inside the radius.
inline std::vector<double> project_highlight(const Vec3List& vertices, const Vec3& center, double radius) {
  if (!(radius > 0.0)) throw DomainError("highlight radius must be positive");
  std::vector<double> w(vertices.size(), 0.0);
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    const double r = (vertices[i] - center).norm();
    if (r < radius) w[i] = 1.0 - r / radius;
  }
  return w;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> read_data_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open file");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace detail

/// Reads a TetGen-style .node/.ele pair. Index base (0 or 1) is detected
/// from the minimum node index.
inline TetMesh load_tetgen(const std::string& node_path, const std::string& ele_path) {
  const auto node_lines = detail::read_data_lines(node_path);
  if (node_lines.empty()) throw IoError(node_path, "empty node file");
  std::size_t n = 0;
  int dim = 0;
  {
    std::istringstream hdr(node_lines[0]);
    if (!(hdr >> n >> dim) || dim != 3) throw IoError(node_path, "expected header 'N 3'");
  }
  if (node_lines.size() < n + 1) throw IoError(node_path, "fewer node lines than declared");

  std::vector<long> ids(n);
  Vec3List pts(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::istringstream ls(node_lines[i + 1]);
    if (!(ls >> ids[i] >> pts[i].x() >> pts[i].y() >> pts[i].z())) {
      throw IoError(node_path, "malformed node line " + std::to_string(i + 2));
    }
  }
  const long base = n ? *std::min_element(ids.begin(), ids.end()) : 0;
  if (base != 0 && base != 1) throw IoError(node_path, "node indices must start at 0 or 1");
  Vec3List ordered(n);
  std::vector<bool> seen(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const long k = ids[i] - base;
    if (k < 0 || static_cast<std::size_t>(k) >= n || seen[k]) throw IoError(node_path, "node indices not a permutation");
    seen[k] = true;
    ordered[k] = pts[i];
  }

  const auto ele_lines = detail::read_data_lines(ele_path);
  if (ele_lines.empty()) throw IoError(ele_path, "empty element file");
  std::size_t m = 0;
  int per = 0;
  {
    std::istringstream hdr(ele_lines[0]);
    if (!(hdr >> m >> per) || per != 4) throw IoError(ele_path, "expected header 'M 4'");
  }
  if (ele_lines.size() < m + 1) throw IoError(ele_path, "fewer element lines than declared");
  std::vector<Tet> tets(m);
  for (std::size_t i = 0; i < m; ++i) {
    std::istringstream ls(ele_lines[i + 1]);
    long id = 0;
    long v[4];
    if (!(ls >> id >> v[0] >> v[1] >> v[2] >> v[3])) throw IoError(ele_path, "malformed element line " + std::to_string(i + 2));
    for (int k = 0; k < 4; ++k) tets[i][k] = static_cast<int>(v[k] - base);
  }
  return TetMesh::from(std::move(ordered), std::move(tets));
}

inline void save_tetgen(const TetMesh& mesh, const std::string& node_path, const std::string& ele_path) {
  std::ofstream node(node_path);
  if (!node) throw IoError(node_path, "cannot write");
  node << mesh.vertex_count() << " 3\n";
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const auto& p = mesh.rest_positions[i];
    node << i << ' ' << fmt_double(p.x()) << ' ' << fmt_double(p.y()) << ' ' << fmt_double(p.z()) << '\n';
  }
  std::ofstream ele(ele_path);
  if (!ele) throw IoError(ele_path, "cannot write");
  ele << mesh.tet_count() << " 4\n";
  for (std::size_t i = 0; i < mesh.tet_count(); ++i) {
    const auto& t = mesh.tets[i];
    ele << i << ' ' << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  }
}

/// Wavefront OBJ subset: `v x y z` and triangular `f` records. Face entries
/// may carry `/vt/vn` suffixes, which are ignored; negative indices are relative.
inline SurfaceMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open file");
  Vec3List verts;
  std::vector<Tri> tris;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw IoError(path, "malformed vertex at line " + std::to_string(lineno));
      verts.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const long raw = std::stol(tok.substr(0, tok.find('/')));
        idx.push_back(static_cast<int>(raw < 0 ? static_cast<long>(verts.size()) + raw : raw - 1));
      }
      if (idx.size() != 3) throw IoError(path, "only triangle faces are supported (line " + std::to_string(lineno) + ")");
      tris.push_back({idx[0], idx[1], idx[2]});
    }
  }
  return SurfaceMesh::from(std::move(verts), std::move(tris));
}

inline std::string obj_string(const Vec3List& vertices, const std::vector<Tri>& triangles) {
  std::string out;
  out.reserve(vertices.size() * 48 + triangles.size() * 24);
  for (const auto& p : vertices) {
    out += "v ";
    append_double(out, p.x());
    out += ' ';
    append_double(out, p.y());
    out += ' ';
    append_double(out, p.z());
    out += '\n';
  }
  for (const auto& t : triangles) {
    out += "f " + std::to_string(t[0] + 1) + ' ' + std::to_string(t[1] + 1) + ' ' + std::to_string(t[2] + 1) + '\n';
  }
  return out;
}

inline void save_obj(const Vec3List& vertices, const std::vector<Tri>& triangles, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot write");
  out << obj_string(vertices, triangles);
  if (!out) throw IoError(path, "write failed");
}

// ---------------------------------------------------------------------------
// Procedural meshes (tests and demo scenes)
// ---------------------------------------------------------------------------

/// Axis-aligned box of nx*ny*nz cubes, each split into 5 tets with
/// alternating diagonals so neighbouring cubes share faces conformingly.
inline TetMesh make_box_tet_mesh(const Vec3& origin, const Vec3& size, int nx, int ny, int nz) {
  Vec3List pts;
  pts.reserve(static_cast<std::size_t>((nx + 1) * (ny + 1) * (nz + 1)));
  auto vid = [&](int i, int j, int k) { return i + (nx + 1) * (j + (ny + 1) * k); };
  for (int k = 0; k <= nz; ++k)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i)
        pts.push_back(origin + Vec3(size.x() * i / nx, size.y() * j / ny, size.z() * k / nz));

  static constexpr int kEven[5][4] = {{0, 1, 2, 4}, {1, 3, 2, 7}, {1, 4, 5, 7}, {2, 4, 6, 7}, {1, 2, 4, 7}};
  static constexpr int kOdd[5][4] = {{1, 0, 3, 5}, {0, 2, 3, 6}, {0, 4, 5, 6}, {3, 5, 6, 7}, {0, 3, 5, 6}};
  std::vector<Tet> tets;
  tets.reserve(static_cast<std::size_t>(5 * nx * ny * nz));
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        int corner[8];
        for (int c = 0; c < 8; ++c) corner[c] = vid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
        const auto& pattern = ((i + j + k) % 2 == 0) ? kEven : kOdd;
        for (const auto& p : pattern) tets.push_back({corner[p[0]], corner[p[1]], corner[p[2]], corner[p[3]]});
      }
  return TetMesh::from(std::move(pts), std::move(tets));
}

/// Closed axis-aligned box surface with `n` subdivisions per edge.
inline SurfaceMesh make_box_surface(const Vec3& center, const Vec3& size, int n) {
  Vec3List verts;
  std::vector<Tri> tris;
  std::map<std::array<long, 3>, int> index;
  const Vec3 lo = center - 0.5 * size;
  auto add = [&](int a, int b, int c) -> int {
    const std::array<long, 3> key = {a, b, c};
    auto it = index.find(key);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(verts.size());
    verts.push_back(lo + Vec3(size.x() * a / n, size.y() * b / n, size.z() * c / n));
    index.emplace(key, id);
    return id;
  };
  // Each face: fixed axis `ax` at `side`, spanning axes u, v chosen so that u x v points outward.
  for (int ax = 0; ax < 3; ++ax) {
    for (int side = 0; side < 2; ++side) {
      int u = (ax + 1) % 3, v = (ax + 2) % 3;
      if (side == 0) std::swap(u, v);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          auto corner = [&](int di, int dj) {
            int c[3];
            c[ax] = side * n;
            c[u] = i + di;
            c[v] = j + dj;
            return add(c[0], c[1], c[2]);
          };
          const int a = corner(0, 0), b = corner(1, 0), c = corner(1, 1), d = corner(0, 1);
          tris.push_back({a, b, c});
          tris.push_back({a, c, d});
        }
    }
  }
  return SurfaceMesh::from(std::move(verts), std::move(tris));
}

}  // namespace porosim
