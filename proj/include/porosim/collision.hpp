#pragma once

// Continuous collision detection between a moving tool mesh and the boundary
// of the simulation mesh over one step, time normalized to [0, 1].

#include <porosim/mesh.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

namespace porosim {

// ---------------------------------------------------------------------------
// Cubic solve
// ---------------------------------------------------------------------------

struct CubicRoots {
  std::vector<double> roots;  // sorted, in [0, 1], duplicates collapsed
  bool identically_zero = false;
};

namespace detail {

inline double eval_cubic(const std::array<double, 4>& c, double t) { return ((c[3] * t + c[2]) * t + c[1]) * t + c[0]; }
inline double eval_cubic_derivative(const std::array<double, 4>& c, double t) {
  return (3.0 * c[3] * t + 2.0 * c[2]) * t + c[1];
}

// Real roots of a t^2 + b t + c (any of a, b may vanish).
inline void quadratic_roots(double a, double b, double c, std::vector<double>& out, double eps) {
  if (std::abs(a) <= eps) {
    if (std::abs(b) > eps) out.push_back(-c / b);
    return;
  }
  double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) {
    if (disc < -eps * std::max(b * b, std::abs(4.0 * a * c))) return;
    disc = 0.0;
  }
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (b + (b >= 0.0 ? sq : -sq));
  if (q == 0.0) {
    out.push_back(0.0);
    return;
  }
  out.push_back(q / a);
  out.push_back(c / q);
}

// Analytic roots of the monic cubic t^3 + a t^2 + b t + c.
inline void monic_cubic_roots(double a, double b, double c, std::vector<double>& out) {
  const double shift = a / 3.0;
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double disc = 0.25 * q * q + p * p * p / 27.0;
  if (p == 0.0 && q == 0.0) {
    out.push_back(-shift);
    return;
  }
  if (disc > 0.0) {
    // One real root (Cardano), cancellation-free branch.
    const double sq = std::sqrt(disc);
    const double u = std::cbrt(-0.5 * q + (q > 0.0 ? -sq : sq));
    const double y = u == 0.0 ? 0.0 : u - p / (3.0 * u);
    out.push_back(y - shift);
    return;
  }
  // Three real roots (trigonometric form); p < 0 here.
  const double r = 2.0 * std::sqrt(-p / 3.0);
  const double arg = std::clamp(3.0 * q / (p * r), -1.0, 1.0);
  const double theta = std::acos(arg) / 3.0;
  constexpr double kTwoPiThird = 2.0943951023931954923;
  for (int k = 0; k < 3; ++k) out.push_back(r * std::cos(theta - kTwoPiThird * k) - shift);
}

inline double polish_root(const std::array<double, 4>& c, double t, int iterations) {
  for (int i = 0; i < iterations; ++i) {
    const double d = eval_cubic_derivative(c, t);
    if (d == 0.0) break;
    const double next = t - eval_cubic(c, t) / d;
    if (!std::isfinite(next)) break;
    if (std::abs(eval_cubic(c, next)) > std::abs(eval_cubic(c, t))) break;
    t = next;
  }
  return t;
}

// Bisection + Newton on a bracket [lo, hi] with a sign change.
inline double bracketed_root(const std::array<double, 4>& c, double lo, double hi) {
  double flo = eval_cubic(c, lo);
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = eval_cubic(c, mid);
    if (fm == 0.0) return mid;
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Real roots in [0, 1] of c3 t^3 + c2 t^2 + c1 t + c0. Analytic depressed
/// cubic (trigonometric/Cardano) with Newton polish; falls back to quadratic
/// or linear when leading coefficients vanish. A final pass over the
/// monotone pieces bisects any sign change no analytic root landed in.
inline CubicRoots cubic_roots(double c3, double c2, double c1, double c0) {
  CubicRoots result;
  const double scale = std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
  if (scale == 0.0) {
    result.identically_zero = true;
    return result;
  }
  const std::array<double, 4> c = {c0 / scale, c1 / scale, c2 / scale, c3 / scale};
  constexpr double kDegenerate = 1e-12;

  std::vector<double> candidates;
  if (std::abs(c[3]) <= kDegenerate) {
    detail::quadratic_roots(c[2], c[1], c[0], candidates, kDegenerate);
  } else {
    detail::monic_cubic_roots(c[2] / c[3], c[1] / c[3], c[0] / c[3], candidates);
  }

  constexpr double kWindow = 1e-9;
  constexpr double kResidual = 1e-10;  // relative to max |coefficient|
  std::vector<double> roots;
  for (double t : candidates) {
    if (!std::isfinite(t) || t < -0.1 || t > 1.1) continue;
    t = detail::polish_root(c, t, 2);
    if (t < -kWindow || t > 1.0 + kWindow) continue;
    roots.push_back(std::clamp(t, 0.0, 1.0));
  }

  // Monotone pieces of the cubic on [0, 1].
  std::vector<double> knots = {0.0, 1.0};
  {
    std::vector<double> crit;
    detail::quadratic_roots(3.0 * c[3], 2.0 * c[2], c[1], crit, 0.0);
    for (double t : crit)
      if (t > 0.0 && t < 1.0) knots.push_back(t);
    std::sort(knots.begin(), knots.end());
  }
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double lo = knots[k], hi = knots[k + 1];
    const double flo = detail::eval_cubic(c, lo), fhi = detail::eval_cubic(c, hi);
    if (flo == 0.0 || fhi == 0.0 || (flo < 0.0) == (fhi < 0.0)) continue;
    const bool covered = std::any_of(roots.begin(), roots.end(), [&](double r) { return r >= lo && r <= hi; });
    if (!covered) roots.push_back(detail::bracketed_root(c, lo, hi));
  }
  for (double t : {0.0, 1.0})
    if (detail::eval_cubic(c, t) == 0.0) roots.push_back(t);

  std::sort(roots.begin(), roots.end());
  for (double t : roots) {
    if (!(std::abs(detail::eval_cubic(c, t)) < kResidual)) continue;
    if (!result.roots.empty() && t - result.roots.back() < 1e-10) continue;
    result.roots.push_back(t);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Moving primitives
// ---------------------------------------------------------------------------

struct MovingPoint {
  Vec3 start;
  Vec3 end;
  Vec3 at(double t) const { return start + t * (end - start); }
  Vec3 delta() const { return end - start; }
};

using MovingVertex = MovingPoint;

struct MovingEdge {
  MovingPoint a, b;
};

struct MovingTriangle {
  MovingPoint a, b, c;
};

/// Coefficients (c0, c1, c2, c3) of (B(t) x C(t)) . P(t) for linearly moving vectors.
inline std::array<double, 4> triple_product_coefficients(const Vec3& b0, const Vec3& db, const Vec3& c0,
                                                         const Vec3& dc, const Vec3& p0, const Vec3& dp) {
  const Vec3 bc00 = b0.cross(c0), bc10 = db.cross(c0), bc01 = b0.cross(dc), bc11 = db.cross(dc);
  return {bc00.dot(p0), bc10.dot(p0) + bc01.dot(p0) + bc00.dot(dp), bc11.dot(p0) + bc10.dot(dp) + bc01.dot(dp),
          bc11.dot(dp)};
}

/// Coplanarity polynomial of a vertex and triangle: ((b-a) x (c-a)) . (p-a).
inline std::array<double, 4> vertex_face_polynomial(const MovingVertex& v, const MovingTriangle& f) {
  return triple_product_coefficients(f.b.start - f.a.start, f.b.delta() - f.a.delta(), f.c.start - f.a.start,
                                     f.c.delta() - f.a.delta(), v.start - f.a.start, v.delta() - f.a.delta());
}

/// Coplanarity polynomial of two edges: ((b-a) x (d-c)) . (c-a).
inline std::array<double, 4> edge_edge_polynomial(const MovingEdge& e1, const MovingEdge& e2) {
  return triple_product_coefficients(e1.b.start - e1.a.start, e1.b.delta() - e1.a.delta(), e2.b.start - e2.a.start,
                                     e2.b.delta() - e2.a.delta(), e2.a.start - e1.a.start,
                                     e2.a.delta() - e1.a.delta());
}

inline CubicRoots roots_of(const std::array<double, 4>& c) { return cubic_roots(c[3], c[2], c[1], c[0]); }

// ---------------------------------------------------------------------------
// Narrow phase
// ---------------------------------------------------------------------------

inline constexpr double kBarycentricTolerance = 1e-9;

/// Barycentric coordinates of the projection of p onto the plane of (a, b, c).
/// Returns nullopt for a degenerate (zero-area) triangle.
inline std::optional<Vec3> triangle_barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double n2 = n.squaredNorm();
  const double scale = std::max({(b - a).squaredNorm(), (c - a).squaredNorm(), (c - b).squaredNorm()});
  if (!(n2 > 1e-24 * scale * scale) || scale == 0.0) return std::nullopt;
  const double wb = (p - a).cross(c - a).dot(n) / n2;
  const double wc = (b - a).cross(p - a).dot(n) / n2;
  return Vec3(1.0 - wb - wc, wb, wc);
}

struct SegmentClosest {
  double s = 0.0;  // parameter on the first segment
  double u = 0.0;  // parameter on the second segment
  bool parallel = false;
  bool valid = false;  // both parameters inside [0, 1] (parallel: overlap non-empty)
};

/// Closest-point parameters of the infinite lines through (a, b) and (c, d).
/// Parallel lines take the midpoint of the projected overlap.
inline SegmentClosest line_closest(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d, double tol = 1e-9) {
  SegmentClosest out;
  const Vec3 e1 = b - a, e2 = d - c, r = a - c;
  const double aa = e1.squaredNorm(), ee = e2.squaredNorm(), ae = e1.dot(e2);
  const double denom = aa * ee - ae * ae;
  if (aa == 0.0 || ee == 0.0) return out;
  if (denom <= 1e-14 * aa * ee) {
    out.parallel = true;
    // Project c and d onto the first segment's parameter line.
    double s0 = (c - a).dot(e1) / aa, s1 = (d - a).dot(e1) / aa;
    if (s0 > s1) std::swap(s0, s1);
    const double lo = std::max(0.0, s0), hi = std::min(1.0, s1);
    if (lo > hi + tol) return out;
    out.s = 0.5 * (lo + hi);
    const Vec3 p = a + out.s * e1;
    out.u = std::clamp((p - c).dot(e2) / ee, 0.0, 1.0);
    out.valid = true;
    return out;
  }
  const double rd1 = e1.dot(r), rd2 = e2.dot(r);
  out.s = (ae * rd2 - ee * rd1) / denom;
  out.u = (aa * rd2 - ae * rd1) / denom;
  out.valid = out.s >= -tol && out.s <= 1.0 + tol && out.u >= -tol && out.u <= 1.0 + tol;
  out.s = std::clamp(out.s, 0.0, 1.0);
  out.u = std::clamp(out.u, 0.0, 1.0);
  return out;
}

struct VertexFaceContact {
  double t = 0.0;
  Vec3 weights;  // (w_a, w_b, w_c) of the contact point on the face
  Vec3 normal;   // face normal (winding orientation)
};

struct EdgeEdgeContact {
  double t = 0.0;
  Eigen::Vector2d first_weights;   // (w_a, w_b)
  Eigen::Vector2d second_weights;  // (w_c, w_d)
  Vec3 normal;
};

struct NarrowPhaseDiagnostics {
  int degenerate = 0;  // contacts dropped on zero-area triangles
};

/// Times in [0, 1] at which the vertex passes through the triangle.
inline std::vector<VertexFaceContact> ccd_vertex_face(const MovingVertex& v, const MovingTriangle& f,
                                                      NarrowPhaseDiagnostics* diag = nullptr) {
  std::vector<VertexFaceContact> out;
  const auto roots = roots_of(vertex_face_polynomial(v, f));
  if (roots.identically_zero) return out;  // always coplanar; handled by the penetration test
  for (double t : roots.roots) {
    const Vec3 a = f.a.at(t), b = f.b.at(t), c = f.c.at(t), p = v.at(t);
    const auto w = triangle_barycentric(p, a, b, c);
    if (!w) {
      if (diag) ++diag->degenerate;
      continue;
    }
    if (w->minCoeff() < -kBarycentricTolerance) continue;
    out.push_back({t, *w, (b - a).cross(c - a).normalized()});
  }
  return out;
}

/// Times in [0, 1] at which the two segments intersect. The normal is
/// (b-a) x (d-c), flipped to have a non-negative component along `reference`
/// when one is given.
inline std::vector<EdgeEdgeContact> ccd_edge_edge(const MovingEdge& e1, const MovingEdge& e2,
                                                  const Vec3& reference = Vec3::Zero()) {
  std::vector<EdgeEdgeContact> out;
  const auto roots = roots_of(edge_edge_polynomial(e1, e2));
  if (roots.identically_zero) return out;
  for (double t : roots.roots) {
    const Vec3 a = e1.a.at(t), b = e1.b.at(t), c = e2.a.at(t), d = e2.b.at(t);
    const auto cp = line_closest(a, b, c, d);
    if (!cp.valid) continue;
    const Vec3 p = a + cp.s * (b - a), q = c + cp.u * (d - c);
    const double scale = std::max({(b - a).norm(), (d - c).norm(), (c - a).norm()});
    if ((p - q).norm() > 1e-7 * scale) continue;
    Vec3 n = (b - a).cross(d - c);
    if (cp.parallel || n.squaredNorm() == 0.0) {
      n = reference;
    }
    if (n.squaredNorm() > 0.0) {
      n.normalize();
      if (n.dot(reference) < 0.0) n = -n;
    }
    out.push_back({t, {1.0 - cp.s, cp.s}, {1.0 - cp.u, cp.u}, n});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Broad phase
// ---------------------------------------------------------------------------

inline Aabb swept_box(std::initializer_list<const MovingPoint*> points) {
  Aabb box;
  for (const auto* p : points) {
    box.expand(p->start);
    box.expand(p->end);
  }
  return box;
}

/// Sweep-and-prune along x. Returns every (proxy, object) index pair whose
/// boxes overlap, sorted lexicographically.
inline std::vector<std::pair<int, int>> broadphase(const std::vector<Aabb>& proxy, const std::vector<Aabb>& object) {
  struct Endpoint {
    double x;
    int id;
    bool is_proxy;
  };
  std::vector<Endpoint> order;
  order.reserve(proxy.size() + object.size());
  for (std::size_t i = 0; i < proxy.size(); ++i) order.push_back({proxy[i].min.x(), static_cast<int>(i), true});
  for (std::size_t j = 0; j < object.size(); ++j) order.push_back({object[j].min.x(), static_cast<int>(j), false});
  std::sort(order.begin(), order.end(), [](const Endpoint& l, const Endpoint& r) {
    return std::tie(l.x, l.is_proxy, l.id) < std::tie(r.x, r.is_proxy, r.id);
  });

  std::vector<int> active_proxy, active_object;
  std::vector<std::pair<int, int>> pairs;
  for (const auto& ep : order) {
    const Aabb& box = ep.is_proxy ? proxy[ep.id] : object[ep.id];
    auto& own = ep.is_proxy ? active_proxy : active_object;
    auto& other = ep.is_proxy ? active_object : active_proxy;
    const auto& other_boxes = ep.is_proxy ? object : proxy;
    std::erase_if(other, [&](int k) { return other_boxes[k].max.x() < box.min.x(); });
    for (int k : other) {
      if (box.overlaps(other_boxes[k])) pairs.emplace_back(ep.is_proxy ? ep.id : k, ep.is_proxy ? k : ep.id);
    }
    own.push_back(ep.id);
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

// ---------------------------------------------------------------------------
// Penetration intervals
// ---------------------------------------------------------------------------

struct PenetrationInterval {
  double t_a = 0.0;
  double t_b = 0.0;
  int index = 0;
};

/// Splits [0, 1] at the sorted contact times and keeps the pieces whose
/// midpoint is penetrating. Adjacent pieces are not merged.
template <typename Penetrating>
std::vector<PenetrationInterval> penetration_intervals(const std::vector<double>& contact_times,
                                                       Penetrating&& penetrating) {
  std::vector<double> cuts = {0.0};
  for (double t : contact_times)
    if (t > cuts.back() && t < 1.0) cuts.push_back(t);
  cuts.push_back(1.0);
  std::vector<PenetrationInterval> out;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double lo = cuts[k], hi = cuts[k + 1];
    if (hi <= lo) continue;
    if (penetrating(0.5 * (lo + hi))) out.push_back({lo, hi, static_cast<int>(out.size())});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Contact events between the tool and the object boundary
// ---------------------------------------------------------------------------

enum class ContactKind { vertex_face, edge_edge };

/// One primitive pair with its penetration intervals. Positions are stored
/// at both ends of the step so p_t, q_t and n_t can be reconstructed at any t.
///
/// Conventions: p lies on the tool, q on the object, n points from the
/// object towards the tool (object outward), and the signed depth is
/// n . (p - q), negative while penetrating.
struct ContactEvent {
  ContactKind kind = ContactKind::vertex_face;
  bool tool_vertex = true;  // vertex-face: tool vertex vs object face, else object vertex vs tool face
  int tool_id = -1;         // tool vertex / face / edge index
  int object_id = -1;       // object boundary face / vertex / edge index
  // vertex-face: {vertex, a, b, c}; edge-edge: {tool a, tool b, object c, object d}
  std::array<MovingPoint, 4> points;
  Vec3 reference = Vec3::Zero();  // edge-edge: object outward direction
  std::vector<PenetrationInterval> intervals;
  std::vector<double> contact_times;
  std::array<int, 3> object_nodes = {-1, -1, -1};
  int object_node_count = 0;
  std::vector<std::array<double, 3>> node_weights;  // per interval, at its midpoint
  double max_depth = 0.0;

  Vec3 normal(double t) const {
    if (kind == ContactKind::vertex_face) {
      const Vec3 a = points[1].at(t), b = points[2].at(t), c = points[3].at(t);
      const Vec3 n = (b - a).cross(c - a).normalized();
      return tool_vertex ? n : Vec3(-n);
    }
    const Vec3 e1 = points[1].at(t) - points[0].at(t), e2 = points[3].at(t) - points[2].at(t);
    Vec3 n = e1.cross(e2);
    if (n.squaredNorm() <= 1e-24 * e1.squaredNorm() * e2.squaredNorm()) n = reference;
    n.normalize();
    return n.dot(reference) < 0.0 ? Vec3(-n) : n;
  }

  /// Tool-side point p_t and object-side point q_t.
  std::pair<Vec3, Vec3> contact_points(double t) const {
    if (kind == ContactKind::vertex_face) {
      const Vec3 v = points[0].at(t), a = points[1].at(t), b = points[2].at(t), c = points[3].at(t);
      const Vec3 n = (b - a).cross(c - a).normalized();
      const Vec3 on_plane = v - n.dot(v - a) * n;
      return tool_vertex ? std::pair{v, on_plane} : std::pair{on_plane, v};
    }
    const Vec3 a = points[0].at(t), b = points[1].at(t), c = points[2].at(t), d = points[3].at(t);
    const auto cp = line_closest(a, b, c, d);
    return {a + cp.s * (b - a), c + cp.u * (d - c)};
  }

  double depth(double t) const {
    const Vec3 n = normal(t);
    if (kind == ContactKind::vertex_face) {
      const Vec3 v = points[0].at(t), a = points[1].at(t);
      return tool_vertex ? n.dot(v - a) : n.dot(a - v);
    }
    return n.dot(points[0].at(t) - points[2].at(t));
  }

  /// Penetration test at time t: negative depth within `thickness` and the
  /// projection inside the face (or the closest points inside both edges).
  bool penetrating(double t, double thickness) const {
    const double d = depth(t);
    if (!(d < 0.0) || -d > thickness) return false;
    if (kind == ContactKind::vertex_face) {
      const auto w = triangle_barycentric(points[0].at(t), points[1].at(t), points[2].at(t), points[3].at(t));
      return w && w->minCoeff() >= 0.0;
    }
    const auto cp = line_closest(points[0].at(t), points[1].at(t), points[2].at(t), points[3].at(t), 0.0);
    return cp.valid;
  }

  /// Object-node weights at time t (sum to 1).
  std::array<double, 3> object_weights(double t) const {
    if (kind == ContactKind::vertex_face) {
      if (!tool_vertex) return {1.0, 0.0, 0.0};
      auto w = triangle_barycentric(points[0].at(t), points[1].at(t), points[2].at(t), points[3].at(t));
      if (!w) return {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
      Vec3 c = w->cwiseMax(0.0);
      c /= c.sum();
      return {c.x(), c.y(), c.z()};
    }
    const auto cp = line_closest(points[0].at(t), points[1].at(t), points[2].at(t), points[3].at(t));
    return {1.0 - cp.u, cp.u, 0.0};
  }
};

/// A closed triangle mesh moving between two vertex configurations.
struct MovingMesh {
  Vec3List start;
  Vec3List end;
  std::vector<Tri> triangles;
};

struct CollisionSettings {
  double thickness = 5e-3;       // deepest penetration still attributed to a primitive pair (m)
  double grazing_depth = 1e-12;  // intervals shallower than this are dropped
  bool filters = true;           // coefficient-sign fast reject
};

struct CollisionStats {
  std::size_t vf_candidates = 0;
  std::size_t ee_candidates = 0;
  NarrowPhaseDiagnostics narrow;
};

namespace detail {

struct EdgeList {
  std::vector<std::array<int, 2>> edges;
  std::vector<std::vector<int>> faces;  // adjacent triangles per edge
};

inline EdgeList unique_edges(const std::vector<Tri>& tris) {
  std::map<std::array<int, 2>, std::vector<int>> m;
  for (std::size_t f = 0; f < tris.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      int a = tris[f][k], b = tris[f][(k + 1) % 3];
      if (a > b) std::swap(a, b);
      m[{a, b}].push_back(static_cast<int>(f));
    }
  }
  EdgeList out;
  for (auto& [e, faces] : m) {
    out.edges.push_back(e);
    out.faces.push_back(std::move(faces));
  }
  return out;
}

inline std::vector<int> used_vertices(const std::vector<Tri>& tris) {
  std::set<int> s;
  for (const auto& t : tris) s.insert(t.begin(), t.end());
  return {s.begin(), s.end()};
}

// Fast reject: on [0, 1] the cubic is a convex combination of its Bernstein
// coefficients, so when all of them exceed the root residual bound with one
// sign, cubic_roots cannot report a root either.
inline bool cubic_has_no_root_in_unit(const std::array<double, 4>& c) {
  const double scale = std::max({std::abs(c[0]), std::abs(c[1]), std::abs(c[2]), std::abs(c[3])});
  const double eps = 2e-10 * scale;
  const double b0 = c[0];
  const double b1 = c[0] + c[1] / 3.0;
  const double b2 = c[0] + 2.0 * c[1] / 3.0 + c[2] / 3.0;
  const double b3 = c[0] + c[1] + c[2] + c[3];
  return (b0 > eps && b1 > eps && b2 > eps && b3 > eps) || (b0 < -eps && b1 < -eps && b2 < -eps && b3 < -eps);
}

}  // namespace detail

/// Contact events between the tool mesh and the object boundary over one
/// step: vertex-face both ways and edge-edge.
inline std::vector<ContactEvent> detect_contacts(const MovingMesh& tool, const MovingMesh& object,
                                                 const CollisionSettings& settings, CollisionStats* stats = nullptr) {
  std::vector<ContactEvent> events;
  const double margin = settings.thickness;
  auto mp = [](const MovingMesh& m, int v) { return MovingPoint{m.start[v], m.end[v]}; };

  auto finalize = [&](ContactEvent ev, std::vector<double> times) -> void {
    std::sort(times.begin(), times.end());
    ev.contact_times = times;
    ev.intervals = penetration_intervals(times, [&](double t) { return ev.penetrating(t, settings.thickness); });
    std::vector<PenetrationInterval> kept;
    for (const auto& iv : ev.intervals) {
      double deepest = 0.0;
      for (int k = 0; k <= 8; ++k) deepest = std::max(deepest, -ev.depth(iv.t_a + (iv.t_b - iv.t_a) * k / 8.0));
      if (deepest < settings.grazing_depth) continue;
      ev.max_depth = std::max(ev.max_depth, deepest);
      kept.push_back({iv.t_a, iv.t_b, static_cast<int>(kept.size())});
      ev.node_weights.push_back(ev.object_weights(0.5 * (iv.t_a + iv.t_b)));
    }
    ev.intervals = std::move(kept);
    if (!ev.intervals.empty()) events.push_back(std::move(ev));
  };

  auto vertex_boxes = [&](const MovingMesh& m, const std::vector<int>& verts, double pad) {
    std::vector<Aabb> boxes;
    for (int v : verts) {
      const auto p = mp(m, v);
      Aabb b = swept_box({&p});
      b.inflate(pad);
      boxes.push_back(b);
    }
    return boxes;
  };
  auto face_boxes = [&](const MovingMesh& m, double pad) {
    std::vector<Aabb> boxes;
    for (const auto& t : m.triangles) {
      const auto a = mp(m, t[0]), b = mp(m, t[1]), c = mp(m, t[2]);
      Aabb box = swept_box({&a, &b, &c});
      box.inflate(pad);
      boxes.push_back(box);
    }
    return boxes;
  };

  const auto tool_verts = detail::used_vertices(tool.triangles);
  const auto object_verts = detail::used_vertices(object.triangles);

  // Tool vertex vs object face.
  {
    const auto pairs = broadphase(vertex_boxes(tool, tool_verts, 0.0), face_boxes(object, margin));
    if (stats) stats->vf_candidates += pairs.size();
    for (const auto& [i, f] : pairs) {
      const auto& tri = object.triangles[f];
      ContactEvent ev;
      ev.kind = ContactKind::vertex_face;
      ev.tool_vertex = true;
      ev.tool_id = tool_verts[i];
      ev.object_id = f;
      ev.points = {mp(tool, tool_verts[i]), mp(object, tri[0]), mp(object, tri[1]), mp(object, tri[2])};
      ev.object_nodes = {tri[0], tri[1], tri[2]};
      ev.object_node_count = 3;
      const MovingTriangle face{ev.points[1], ev.points[2], ev.points[3]};
      std::vector<double> times;
      const bool reject = settings.filters && detail::cubic_has_no_root_in_unit(vertex_face_polynomial(ev.points[0], face));
      if (!reject) {
        for (const auto& c : ccd_vertex_face(ev.points[0], face, stats ? &stats->narrow : nullptr)) times.push_back(c.t);
      }
      finalize(std::move(ev), std::move(times));
    }
  }
  // Object vertex vs tool face.
  {
    const auto pairs = broadphase(face_boxes(tool, margin), vertex_boxes(object, object_verts, 0.0));
    if (stats) stats->vf_candidates += pairs.size();
    for (const auto& [f, j] : pairs) {
      const auto& tri = tool.triangles[f];
      ContactEvent ev;
      ev.kind = ContactKind::vertex_face;
      ev.tool_vertex = false;
      ev.tool_id = f;
      ev.object_id = object_verts[j];
      ev.points = {mp(object, object_verts[j]), mp(tool, tri[0]), mp(tool, tri[1]), mp(tool, tri[2])};
      ev.object_nodes = {object_verts[j], -1, -1};
      ev.object_node_count = 1;
      const MovingTriangle face{ev.points[1], ev.points[2], ev.points[3]};
      std::vector<double> times;
      const bool reject = settings.filters && detail::cubic_has_no_root_in_unit(vertex_face_polynomial(ev.points[0], face));
      if (!reject) {
        for (const auto& c : ccd_vertex_face(ev.points[0], face, stats ? &stats->narrow : nullptr)) times.push_back(c.t);
      }
      finalize(std::move(ev), std::move(times));
    }
  }
  // Edge-edge.
  {
    const auto tool_edges = detail::unique_edges(tool.triangles);
    const auto object_edges = detail::unique_edges(object.triangles);
    auto edge_boxes = [&](const MovingMesh& m, const detail::EdgeList& el, double pad) {
      std::vector<Aabb> boxes;
      for (const auto& e : el.edges) {
        const auto a = mp(m, e[0]), b = mp(m, e[1]);
        Aabb box = swept_box({&a, &b});
        box.inflate(pad);
        boxes.push_back(box);
      }
      return boxes;
    };
    const auto pairs = broadphase(edge_boxes(tool, tool_edges, 0.0), edge_boxes(object, object_edges, margin));
    if (stats) stats->ee_candidates += pairs.size();
    for (const auto& [i, j] : pairs) {
      const auto& te = tool_edges.edges[i];
      const auto& oe = object_edges.edges[j];
      ContactEvent ev;
      ev.kind = ContactKind::edge_edge;
      ev.tool_id = i;
      ev.object_id = j;
      ev.points = {mp(tool, te[0]), mp(tool, te[1]), mp(object, oe[0]), mp(object, oe[1])};
      ev.object_nodes = {oe[0], oe[1], -1};
      ev.object_node_count = 2;
      Vec3 ref = Vec3::Zero();
      for (int f : object_edges.faces[j]) {
        const auto& tri = object.triangles[f];
        ref += (object.start[tri[1]] - object.start[tri[0]]).cross(object.start[tri[2]] - object.start[tri[0]]).normalized();
      }
      ev.reference = ref;
      if (ref.squaredNorm() == 0.0) continue;
      const MovingEdge e1{ev.points[0], ev.points[1]}, e2{ev.points[2], ev.points[3]};
      std::vector<double> times;
      const bool reject = settings.filters && detail::cubic_has_no_root_in_unit(edge_edge_polynomial(e1, e2));
      if (!reject) {
        for (const auto& c : ccd_edge_edge(e1, e2, ref)) times.push_back(c.t);
      }
      finalize(std::move(ev), std::move(times));
    }
  }
  return events;
}

/// Tets owning a boundary face touched by any event (the wet/dry contact
/// set): the face itself for tool-vertex contacts, faces incident to the
/// object vertex or containing the object edge otherwise.
inline std::vector<int> contact_tets(const std::vector<ContactEvent>& events, const std::vector<Tri>& boundary_faces,
                                     const std::vector<int>& boundary_face_tets) {
  std::set<int> tets;
  std::set<int> vertices;
  std::set<std::array<int, 2>> edges;
  for (const auto& ev : events) {
    if (ev.kind == ContactKind::vertex_face && ev.tool_vertex) {
      tets.insert(boundary_face_tets[ev.object_id]);
    } else if (ev.kind == ContactKind::vertex_face) {
      vertices.insert(ev.object_nodes[0]);
    } else {
      edges.insert({std::min(ev.object_nodes[0], ev.object_nodes[1]), std::max(ev.object_nodes[0], ev.object_nodes[1])});
    }
  }
  if (!vertices.empty() || !edges.empty()) {
    for (std::size_t f = 0; f < boundary_faces.size(); ++f) {
      const auto& tri = boundary_faces[f];
      bool hit = false;
      for (int k = 0; k < 3 && !hit; ++k) {
        hit = vertices.count(tri[k]) > 0 ||
              edges.count({std::min(tri[k], tri[(k + 1) % 3]), std::max(tri[k], tri[(k + 1) % 3])}) > 0;
      }
      if (hit) tets.insert(boundary_face_tets[f]);
    }
  }
  return {tets.begin(), tets.end()};
}

}  // namespace porosim
