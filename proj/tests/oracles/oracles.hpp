#pragma once

// Independent reference computations for the tests. They share only the
// plain data types with the library; none of the library algorithms.

#include <porosim/core/types.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

namespace oracle {

using porosim::Tet;
using porosim::Tri;
using porosim::Vec3;
using porosim::Vec3List;

// ---------------------------------------------------------------------------
// Boundary faces by counting every tet face
// ---------------------------------------------------------------------------

inline std::size_t boundary_face_count(const std::vector<Tet>& tets) {
  std::map<std::array<int, 3>, int> count;
  for (const auto& t : tets) {
    for (int skip = 0; skip < 4; ++skip) {
      std::array<int, 3> f{};
      int k = 0;
      for (int i = 0; i < 4; ++i)
        if (i != skip) f[k++] = t[i];
      std::sort(f.begin(), f.end());
      ++count[f];
    }
  }
  return static_cast<std::size_t>(std::count_if(count.begin(), count.end(), [](const auto& e) { return e.second == 1; }));
}

// ---------------------------------------------------------------------------
// Dense-sampling CCD
// ---------------------------------------------------------------------------

struct Lin {
  Vec3 p0, p1;
  Vec3 at(double t) const { return (1.0 - t) * p0 + t * p1; }
};

/// Bisection on a sign change of f over [lo, hi].
inline double bisect(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct SampledContact {
  double t;
  double margin;  // how far inside the primitive the crossing point is
};

/// Crossings of vertex v through triangle (a, b, c), found by sampling the
/// signed plane distance at `samples` steps and refining sign changes.
inline std::vector<SampledContact> vertex_face_sampling(const Lin& v, const Lin& a, const Lin& b, const Lin& c,
                                                        int samples = 10000) {
  auto f = [&](double t) {
    const Vec3 A = a.at(t);
    return (b.at(t) - A).cross(c.at(t) - A).dot(v.at(t) - A);
  };
  std::vector<SampledContact> out;
  double prev = f(0.0);
  for (int k = 1; k <= samples; ++k) {
    const double t0 = static_cast<double>(k - 1) / samples, t1 = static_cast<double>(k) / samples;
    const double cur = f(t1);
    if ((prev < 0.0) != (cur < 0.0) || cur == 0.0) {
      const double t = cur == 0.0 ? t1 : bisect(f, t0, t1);
      const Vec3 A = a.at(t), B = b.at(t), C = c.at(t), P = v.at(t);
      const Vec3 n = (B - A).cross(C - A);
      const double n2 = n.squaredNorm();
      if (n2 > 0.0) {
        const double wb = (P - A).cross(C - A).dot(n) / n2;
        const double wc = (B - A).cross(P - A).dot(n) / n2;
        out.push_back({t, std::min({1.0 - wb - wc, wb, wc})});
      }
    }
    prev = cur;
  }
  return out;
}

/// Crossings of two moving segments, same sampling scheme on the coplanarity
/// function. The margin is the smaller distance of both closest-point
/// parameters from the segment ends.
inline std::vector<SampledContact> edge_edge_sampling(const Lin& a, const Lin& b, const Lin& c, const Lin& d,
                                                      int samples = 10000) {
  auto f = [&](double t) {
    const Vec3 A = a.at(t);
    return (b.at(t) - A).cross(d.at(t) - c.at(t)).dot(c.at(t) - A);
  };
  std::vector<SampledContact> out;
  double prev = f(0.0);
  for (int k = 1; k <= samples; ++k) {
    const double t0 = static_cast<double>(k - 1) / samples, t1 = static_cast<double>(k) / samples;
    const double cur = f(t1);
    if ((prev < 0.0) != (cur < 0.0) || cur == 0.0) {
      const double t = cur == 0.0 ? t1 : bisect(f, t0, t1);
      const Vec3 A = a.at(t), B = b.at(t), C = c.at(t), D = d.at(t);
      const Vec3 u = B - A, w = D - C, r = A - C;
      Eigen::Matrix2d m;
      m << u.dot(u), -u.dot(w), -u.dot(w), w.dot(w);
      const Eigen::Vector2d rhs(-u.dot(r), w.dot(r));
      if (std::abs(m.determinant()) > 1e-14 * m.norm() * m.norm()) {
        const Eigen::Vector2d su = m.partialPivLu().solve(rhs);
        const Vec3 p = A + su[0] * u, q = C + su[1] * w;
        const double scale = std::max({u.norm(), w.norm(), r.norm()});
        if ((p - q).norm() <= 1e-6 * scale)
          out.push_back({t, std::min({su[0], 1.0 - su[0], su[1], 1.0 - su[1]})});
      }
    }
    prev = cur;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive quadrature
// ---------------------------------------------------------------------------

/// Adaptive Simpson on a vector integrand, tolerance per panel scaled by width.
inline Vec3 adaptive_simpson(const std::function<Vec3(double)>& f, double a, double b, double tol = 1e-13,
                             int depth = 40) {
  struct Rec {
    const std::function<Vec3(double)>& f;
    Vec3 run(double a, double b, const Vec3& fa, const Vec3& fm, const Vec3& fb, const Vec3& whole, double tol,
             int depth) const {
      const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
      const Vec3 flm = f(lm), frm = f(rm);
      const Vec3 left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
      const Vec3 right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
      const Vec3 diff = left + right - whole;
      if (depth <= 0 || diff.lpNorm<Eigen::Infinity>() <= 15.0 * tol) return left + right + diff / 15.0;
      return run(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + run(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    }
  };
  const Vec3 fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const Vec3 whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return Rec{f}.run(a, b, fa, fm, fb, whole, tol, depth);
}

// ---------------------------------------------------------------------------
// Saturation diffusion as a dense recurrence
// ---------------------------------------------------------------------------

/// s <- s + dt * k * V^-1 (-L) s with the dense weighted graph Laplacian L.
inline std::vector<double> dense_diffusion(std::vector<double> s, const std::vector<double>& volumes,
                                           const std::vector<std::array<double, 3>>& links,  // (i, j, area)
                                           double k_dt, int steps) {
  const auto n = static_cast<Eigen::Index>(s.size());
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n, n);
  for (const auto& l : links) {
    const auto i = static_cast<Eigen::Index>(l[0]), j = static_cast<Eigen::Index>(l[1]);
    lap(i, i) += l[2];
    lap(j, j) += l[2];
    lap(i, j) -= l[2];
    lap(j, i) -= l[2];
  }
  Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(s.data(), n);
  const Eigen::VectorXd inv_v = Eigen::Map<const Eigen::VectorXd>(volumes.data(), n).cwiseInverse();
  for (int k = 0; k < steps; ++k) x = x - k_dt * inv_v.cwiseProduct(lap * x);
  return {x.data(), x.data() + n};
}

// ---------------------------------------------------------------------------
// Linear tet stiffness assembled densely and solved with LDLT
// ---------------------------------------------------------------------------

inline Eigen::Matrix<double, 6, 6> iso_stiffness(double E, double nu) {
  const double lambda = E * nu / ((1 + nu) * (1 - 2 * nu)), mu = E / (2 * (1 + nu));
  Eigen::Matrix<double, 6, 6> c = Eigen::Matrix<double, 6, 6>::Zero();
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) c(i, j) = lambda;
    c(i, i) = lambda + 2 * mu;
    c(i + 3, i + 3) = mu;
  }
  return c;
}

/// Dense K, with the gradient of each barycentric function taken from the
/// inverse of the 4x4 [1 x y z] matrix.
inline Eigen::MatrixXd dense_stiffness(const Vec3List& x, const std::vector<Tet>& tets,
                                       const Eigen::Matrix<double, 6, 6>& c) {
  const auto n = static_cast<Eigen::Index>(3 * x.size());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  for (const auto& t : tets) {
    Eigen::Matrix4d m;
    for (int i = 0; i < 4; ++i) m.row(i) << 1.0, x[t[i]].x(), x[t[i]].y(), x[t[i]].z();
    const double vol = std::abs(m.determinant()) / 6.0;
    const Eigen::Matrix4d inv = m.inverse();
    Eigen::Matrix<double, 6, 12> b = Eigen::Matrix<double, 6, 12>::Zero();
    for (int i = 0; i < 4; ++i) {
      const double gx = inv(1, i), gy = inv(2, i), gz = inv(3, i);
      b(0, 3 * i) = gx;
      b(1, 3 * i + 1) = gy;
      b(2, 3 * i + 2) = gz;
      b(3, 3 * i + 1) = gz;
      b(3, 3 * i + 2) = gy;
      b(4, 3 * i) = gz;
      b(4, 3 * i + 2) = gx;
      b(5, 3 * i) = gy;
      b(5, 3 * i + 1) = gx;
    }
    const Eigen::Matrix<double, 12, 12> ke = vol * b.transpose() * c * b;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        k.block<3, 3>(3 * t[i], 3 * t[j]) += ke.block<3, 3>(3 * i, 3 * j);
  }
  return k;
}

/// Displacements solving K u = f with the listed vertices clamped.
inline Eigen::VectorXd dense_static_solve(const Eigen::MatrixXd& k, const Eigen::VectorXd& f,
                                          const std::vector<bool>& fixed_vertex) {
  std::vector<Eigen::Index> free;
  for (Eigen::Index d = 0; d < k.rows(); ++d)
    if (!fixed_vertex[static_cast<std::size_t>(d / 3)]) free.push_back(d);
  const auto m = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd kf(m, m);
  Eigen::VectorXd ff(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    ff[i] = f[free[i]];
    for (Eigen::Index j = 0; j < m; ++j) kf(i, j) = k(free[i], free[j]);
  }
  const Eigen::VectorXd uf = kf.ldlt().solve(ff);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(k.rows());
  for (Eigen::Index i = 0; i < m; ++i) u[free[i]] = uf[i];
  return u;
}

}  // namespace oracle
