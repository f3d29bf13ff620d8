#pragma once

// Barycentric cage embedding of a surface mesh in a tetrahedral mesh.

#include <porosim/mesh.hpp>

#include <nlohmann/json.hpp>

namespace porosim {

/// Barycentric weights of `p` with respect to tet (a, b, c, d), from the
/// 3x3 system [b-a, c-a, d-a] * (w1, w2, w3) = p - a and w0 = 1 - w1 - w2 - w3.
inline Eigen::Vector4d barycentric_weights(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, const Vec3& p) {
  Mat3 m;
  m.col(0) = b - a;
  m.col(1) = c - a;
  m.col(2) = d - a;
  const Vec3 w = m.partialPivLu().solve(p - a);
  return Eigen::Vector4d(1.0 - w.sum(), w.x(), w.y(), w.z());
}

/// Closest point to `p` on triangle (a, b, c).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Region classification after Ericson, Real-Time Collision Detection 5.1.5.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

struct CageEmbedding {
  std::vector<int> tet;                   // containing tet per surface vertex
  std::vector<Eigen::Vector4d> weights;   // barycentric weights per surface vertex
  std::vector<bool> outside;              // true when extrapolated from the nearest tet

  int outside_count() const {
    int n = 0;
    for (bool o : outside) n += o ? 1 : 0;
    return n;
  }

  /// Most negative weight over all vertices (0 when none is negative).
  double max_negative_weight() const {
    double m = 0.0;
    for (const auto& w : weights) m = std::min(m, w.minCoeff());
    return m;
  }

  nlohmann::json report() const {
    return {{"outside_count", outside_count()}, {"max_negative_weight", max_negative_weight()}};
  }
};

inline constexpr double kInsideTolerance = 1e-9;

/// Assigns every surface vertex to the lowest-index rest-pose tet that
/// contains it (weights >= -1e-9). Vertices outside every tet get the tet
/// owning the nearest boundary face, with extrapolated weights.
inline CageEmbedding build_embedding(const TetMesh& sim, const Vec3List& surface_vertices) {
  const auto& X = sim.rest_positions;
  std::vector<Aabb> boxes(sim.tet_count());
  Aabb all;
  for (std::size_t t = 0; t < sim.tet_count(); ++t) {
    for (int k = 0; k < 4; ++k) boxes[t].expand(X[sim.tets[t][k]]);
    all.expand(boxes[t]);
  }
  const double pad = 1e-9 * std::max(1.0, all.extent().maxCoeff());
  for (auto& b : boxes) b.inflate(pad);

  CageEmbedding emb;
  const std::size_t nv = surface_vertices.size();
  emb.tet.assign(nv, -1);
  emb.weights.assign(nv, Eigen::Vector4d::Zero());
  emb.outside.assign(nv, false);

  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3& p = surface_vertices[i];
    for (std::size_t t = 0; t < sim.tet_count(); ++t) {
      if (!boxes[t].contains(p)) continue;
      const auto& tet = sim.tets[t];
      const Eigen::Vector4d w = barycentric_weights(X[tet[0]], X[tet[1]], X[tet[2]], X[tet[3]], p);
      if (w.minCoeff() >= -kInsideTolerance) {
        emb.tet[i] = static_cast<int>(t);
        emb.weights[i] = w;
        break;
      }
    }
    if (emb.tet[i] >= 0) continue;

    double best = std::numeric_limits<double>::infinity();
    int best_tet = 0;
    for (std::size_t f = 0; f < sim.boundary_faces.size(); ++f) {
      const auto& tri = sim.boundary_faces[f];
      const double d = (closest_point_on_triangle(p, X[tri[0]], X[tri[1]], X[tri[2]]) - p).squaredNorm();
      if (d < best) {
        best = d;
        best_tet = sim.boundary_face_tets[f];
      }
    }
    const auto& tet = sim.tets[best_tet];
    emb.tet[i] = best_tet;
    emb.weights[i] = barycentric_weights(X[tet[0]], X[tet[1]], X[tet[2]], X[tet[3]], p);
    emb.outside[i] = true;
  }
  return emb;
}

/// Surface vertex positions as barycentric combinations of the current tet nodes.
inline Vec3List apply_embedding(const CageEmbedding& emb, const Vec3List& sim_positions, const std::vector<Tet>& tets) {
  Vec3List out(emb.tet.size());
  for (std::size_t i = 0; i < emb.tet.size(); ++i) {
    const auto& tet = tets[emb.tet[i]];
    const auto& w = emb.weights[i];
    out[i] = w[0] * sim_positions[tet[0]] + w[1] * sim_positions[tet[1]] + w[2] * sim_positions[tet[2]] +
             w[3] * sim_positions[tet[3]];
  }
  return out;
}

inline void apply_embedding(const CageEmbedding& emb, const TetMesh& sim, SurfaceMesh& surf) {
  surf.vertices = apply_embedding(emb, sim.current_positions, sim.tets);
}

/// Rest surface plus the interpolated node displacement. Exact at rest.
inline Vec3List displace_embedded(const CageEmbedding& emb, const TetMesh& sim, const Vec3List& rest_surface) {
  Vec3List out(rest_surface);
  const auto& x = sim.current_positions;
  const auto& X = sim.rest_positions;
  for (std::size_t i = 0; i < emb.tet.size(); ++i) {
    const auto& tet = sim.tets[emb.tet[i]];
    const auto& w = emb.weights[i];
    out[i] += w[0] * (x[tet[0]] - X[tet[0]]) + w[1] * (x[tet[1]] - X[tet[1]]) + w[2] * (x[tet[2]] - X[tet[2]]) +
              w[3] * (x[tet[3]] - X[tet[3]]);
  }
  return out;
}

}  // namespace porosim
