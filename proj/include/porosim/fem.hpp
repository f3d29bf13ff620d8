#pragma once

// Linear finite-element dynamics on constant-strain tetrahedra: implicit Euler
// with a matrix-free preconditioned conjugate-gradient solve, lumped mass,
// Rayleigh damping, plastic flow and the proxy-centred velocity kernel.

#include <porosim/material.hpp>
#include <porosim/mesh.hpp>
#include <porosim/wetting.hpp>

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <span>

namespace porosim {

struct PlasticityParams {
  double yield = std::numeric_limits<double>::infinity();
  double creep = 0.0;
  double max = std::numeric_limits<double>::infinity();

  void validate() const {
    if (!(yield >= 0.0)) throw DomainError("plastic yield must be non-negative");
    if (!(creep >= 0.0 && creep <= 1.0)) throw DomainError("plastic creep must lie in [0, 1]");
    if (!(max >= yield)) throw DomainError("plastic max must be at least the yield");
  }
};

struct DampingKernelParams {
  double k1 = 0.0;
  double k2 = 0.0;
  double radius = 1.0;  // R_D
  Vec3 center = Vec3::Zero();

  void validate() const {
    if (!(k1 >= 0.0) || !(k2 >= 0.0)) throw DomainError("kernel constants must be non-negative");
    if (!(radius > 0.0)) throw DomainError("kernel radius must be positive");
  }
};

struct SimParams {
  double dt = 1e-2;
  double density = 1000.0;
  double alpha = 0.1;   // mass-proportional Rayleigh damping
  double beta = 0.01;   // stiffness-proportional Rayleigh damping
  std::vector<int> fixed_vertices;
  double cg_tolerance = 1e-6;
  int cg_max_iterations = 200;
  bool stiffness_warping = false;

  void validate() const {
    if (!(dt > 0.0)) throw DomainError("time step must be positive");
    if (!(density > 0.0)) throw DomainError("density must be positive");
    if (!(alpha >= 0.0) || !(beta >= 0.0)) throw DomainError("Rayleigh coefficients must be non-negative");
  }
};

/// Velocity scale of the locality kernel at distance r from the proxy.
/// The second branch adds exp(k2 r) with the full distance, so the kernel
/// jumps down at r = R_D.
inline double damping_kernel_weight(double r, double k1, double k2, double radius) {
  if (r < radius) return 1.0 / (1.0 + k1 * r);
  return 1.0 / (1.0 + k1 * r + std::exp(k2 * r));
}

/// Strain-displacement matrix of a linear tet (engineering shear, Voigt order).
inline Mat612 strain_displacement(const Vec3& x0, const Vec3& x1, const Vec3& x2, const Vec3& x3) {
  Mat3 dm;
  dm.col(0) = x1 - x0;
  dm.col(1) = x2 - x0;
  dm.col(2) = x3 - x0;
  const Mat3 inv = dm.inverse();
  std::array<Vec3, 4> g;
  for (int i = 0; i < 3; ++i) g[i + 1] = inv.row(i).transpose();
  g[0] = -(g[1] + g[2] + g[3]);

  Mat612 b = Mat612::Zero();
  for (int i = 0; i < 4; ++i) {
    const int c = 3 * i;
    b(0, c) = g[i].x();
    b(1, c + 1) = g[i].y();
    b(2, c + 2) = g[i].z();
    b(3, c + 1) = g[i].z();
    b(3, c + 2) = g[i].y();
    b(4, c) = g[i].z();
    b(4, c + 2) = g[i].x();
    b(5, c) = g[i].y();
    b(5, c + 1) = g[i].x();
  }
  return b;
}

inline double longest_edge(const Vec3& x0, const Vec3& x1, const Vec3& x2, const Vec3& x3) {
  const std::array<const Vec3*, 4> p = {&x0, &x1, &x2, &x3};
  double l = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) l = std::max(l, (*p[i] - *p[j]).norm());
  return l;
}

/// K_e = V B^T C B for one constant-strain tet at its rest shape.
inline Mat12 element_stiffness(const Vec3& x0, const Vec3& x1, const Vec3& x2, const Vec3& x3, const Mat66& c) {
  const double v = signed_tet_volume(x0, x1, x2, x3);
  const double l = longest_edge(x0, x1, x2, x3);
  if (!(v > 1e-12 * l * l * l)) throw DegenerateElementError("tet volume below 1e-12 of its scale");
  const Mat612 b = strain_displacement(x0, x1, x2, x3);
  return v * b.transpose() * c * b;
}

inline Mat3 polar_rotation(const Mat3& f) {
  Eigen::JacobiSVD<Mat3> svd(f, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

struct StepReport {
  int cg_iterations = 0;
  double residual = 0.0;
};

/// Deformable body state: mesh positions/velocities plus per-element
/// material, plastic strain and cached stiffness.
class Body {
 public:
  struct Element {
    Mat612 b;
    double volume = 0.0;
    Mat66 c;
    Mat12 k;
    Vec6 plastic = Vec6::Zero();
    Mat3 rotation = Mat3::Identity();
    double phi = 0.0;  // fluid fraction at last material refresh
  };

  Body(TetMesh mesh, double density, const ElasticityTensor66& stiffness) : mesh_(std::move(mesh)) {
    if (!(density > 0.0)) throw DomainError("density must be positive");
    density_ = density;
    mass_.assign(mesh_.vertex_count(), 0.0);
    elements_.resize(mesh_.tet_count());
    const auto& X = mesh_.rest_positions;
    for (std::size_t t = 0; t < mesh_.tet_count(); ++t) {
      const auto& tet = mesh_.tets[t];
      auto& e = elements_[t];
      e.volume = mesh_.rest_volumes[t];
      e.b = strain_displacement(X[tet[0]], X[tet[1]], X[tet[2]], X[tet[3]]);
      set_element_material(t, stiffness.m);
      for (int v : tet) mass_[v] += 0.25 * density * e.volume;
    }
    fixed_.assign(mesh_.vertex_count(), false);
  }

  const TetMesh& mesh() const { return mesh_; }
  TetMesh& mesh() { return mesh_; }
  const std::vector<double>& mass() const { return mass_; }
  double density() const { return density_; }
  const std::vector<Element>& elements() const { return elements_; }
  std::vector<Element>& elements() { return elements_; }
  const std::vector<bool>& fixed() const { return fixed_; }

  double total_mass() const {
    double m = 0.0;
    for (double x : mass_) m += x;
    return m;
  }

  void set_fixed(std::span<const int> vertices) {
    fixed_.assign(mesh_.vertex_count(), false);
    for (int v : vertices) {
      if (v < 0 || static_cast<std::size_t>(v) >= fixed_.size()) throw DomainError("fixed vertex out of range");
      fixed_[v] = true;
      mesh_.velocities[v].setZero();
    }
  }

  void set_element_material(std::size_t t, const Mat66& c) {
    const auto& tet = mesh_.tets[t];
    const auto& X = mesh_.rest_positions;
    auto& e = elements_[t];
    e.c = c;
    e.k = element_stiffness(X[tet[0]], X[tet[1]], X[tet[2]], X[tet[3]], c);
  }

  void gather(std::size_t t, const Vec3List& src, Vec12& out) const {
    const auto& tet = mesh_.tets[t];
    for (int i = 0; i < 4; ++i) out.segment<3>(3 * i) = src[tet[i]];
  }

  Vec12 element_displacement(std::size_t t) const {
    Vec12 x, X;
    gather(t, mesh_.current_positions, x);
    gather(t, mesh_.rest_positions, X);
    const auto& r = elements_[t].rotation;
    if (!r.isIdentity(0.0)) {
      for (int i = 0; i < 4; ++i) x.segment<3>(3 * i) = r.transpose() * x.segment<3>(3 * i).eval();
    }
    return x - X;
  }

  /// Total strain of element t (in its unrotated frame).
  Vec6 element_strain(std::size_t t) const { return elements_[t].b * element_displacement(t); }

  /// Per-vertex internal forces f_int = dE/dx.
  Vec3List internal_forces() const {
    Vec3List f(mesh_.vertex_count(), Vec3::Zero());
    for (std::size_t t = 0; t < elements_.size(); ++t) {
      const auto& e = elements_[t];
      const Vec12 u = element_displacement(t);
      Vec12 fe = e.k * u - e.volume * e.b.transpose() * (e.c * e.plastic);
      const auto& tet = mesh_.tets[t];
      for (int i = 0; i < 4; ++i) f[tet[i]] += e.rotation * fe.segment<3>(3 * i);
    }
    return f;
  }

  double elastic_energy() const {
    double energy = 0.0;
    for (std::size_t t = 0; t < elements_.size(); ++t) {
      const auto& e = elements_[t];
      const Vec6 eps = element_strain(t) - e.plastic;
      energy += 0.5 * e.volume * eps.dot(e.c * eps);
    }
    return energy;
  }

  double kinetic_energy() const {
    double energy = 0.0;
    for (std::size_t i = 0; i < mass_.size(); ++i) energy += 0.5 * mass_[i] * mesh_.velocities[i].squaredNorm();
    return energy;
  }

  /// Updates element rotations from the current deformation gradient
  /// (stiffness warping); identity otherwise.
  void update_rotations(bool warping) {
    for (std::size_t t = 0; t < elements_.size(); ++t) {
      auto& e = elements_[t];
      if (!warping) {
        e.rotation.setIdentity();
        continue;
      }
      const auto& tet = mesh_.tets[t];
      const auto& x = mesh_.current_positions;
      const auto& X = mesh_.rest_positions;
      Mat3 ds, dm;
      for (int i = 0; i < 3; ++i) {
        ds.col(i) = x[tet[i + 1]] - x[tet[0]];
        dm.col(i) = X[tet[i + 1]] - X[tet[0]];
      }
      e.rotation = polar_rotation(ds * dm.inverse());
    }
  }

  /// y = K x (with current element rotations), over all vertices.
  void stiffness_product(const VecX& x, VecX& y) const {
    y.setZero(x.size());
    Vec12 xe;
    for (std::size_t t = 0; t < elements_.size(); ++t) {
      const auto& e = elements_[t];
      const auto& tet = mesh_.tets[t];
      const bool rotated = !e.rotation.isIdentity(0.0);
      for (int i = 0; i < 4; ++i) {
        xe.segment<3>(3 * i) = x.segment<3>(3 * tet[i]);
        if (rotated) xe.segment<3>(3 * i) = e.rotation.transpose() * xe.segment<3>(3 * i).eval();
      }
      const Vec12 ye = e.k * xe;
      for (int i = 0; i < 4; ++i) {
        y.segment<3>(3 * tet[i]) += rotated ? Vec3(e.rotation * ye.segment<3>(3 * i)) : Vec3(ye.segment<3>(3 * i));
      }
    }
  }

  VecX stiffness_diagonal() const {
    VecX d = VecX::Zero(3 * static_cast<Eigen::Index>(mesh_.vertex_count()));
    for (std::size_t t = 0; t < elements_.size(); ++t) {
      const auto& e = elements_[t];
      const auto& tet = mesh_.tets[t];
      for (int i = 0; i < 4; ++i) {
        const Mat3 block = e.rotation * e.k.block<3, 3>(3 * i, 3 * i) * e.rotation.transpose();
        d.segment<3>(3 * tet[i]) += block.diagonal();
      }
    }
    return d;
  }

 private:
  TetMesh mesh_;
  double density_ = 1.0;
  std::vector<double> mass_;
  std::vector<Element> elements_;
  std::vector<bool> fixed_;
};

/// Jacobi-preconditioned conjugate gradient on the free DOFs. `apply`
/// computes y = A x; fixed DOFs are held at zero.
template <typename Apply>
StepReport conjugate_gradient(Apply&& apply, const VecX& rhs, const VecX& diag, const std::vector<bool>& fixed_dof,
                              VecX& x, double tolerance, int max_iterations) {
  const Eigen::Index n = rhs.size();
  auto project = [&](VecX& v) {
    for (Eigen::Index i = 0; i < n; ++i)
      if (fixed_dof[i]) v[i] = 0.0;
  };
  VecX b = rhs;
  project(b);
  project(x);
  const double bnorm = b.norm();
  StepReport report;
  if (bnorm == 0.0) {
    x.setZero();
    return report;
  }
  VecX ax(n);
  apply(x, ax);
  project(ax);
  VecX r = b - ax;
  VecX z = r.cwiseQuotient(diag);
  project(z);
  VecX p = z;
  double rz = r.dot(z);
  VecX ap(n);
  report.residual = r.norm() / bnorm;
  while (report.residual > tolerance && report.cg_iterations < max_iterations) {
    apply(p, ap);
    project(ap);
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    x += alpha * p;
    r -= alpha * ap;
    ++report.cg_iterations;
    report.residual = r.norm() / bnorm;
    z = r.cwiseQuotient(diag);
    project(z);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  if (report.residual > tolerance) {
    throw SolverError("conjugate gradient did not converge", report.residual, report.cg_iterations);
  }
  return report;
}

/// One implicit Euler step
///   (M + dt D + dt^2 K) v' = M v + dt (f_ext - f_int),  x += dt v',
/// with D = alpha M + beta K. `external` holds per-vertex forces.
inline StepReport step(Body& body, const SimParams& params, const Vec3List& external) {
  auto& mesh = body.mesh();
  const std::size_t nv = mesh.vertex_count();
  const Eigen::Index n = 3 * static_cast<Eigen::Index>(nv);
  const double dt = params.dt;

  body.update_rotations(params.stiffness_warping);
  const Vec3List fint = body.internal_forces();

  std::vector<bool> fixed_dof(n, false);
  VecX mass(n), rhs(n), v(n);
  for (std::size_t i = 0; i < nv; ++i) {
    const Vec3 fe = i < external.size() ? external[i] : Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      const auto d = static_cast<Eigen::Index>(3 * i + k);
      fixed_dof[d] = body.fixed()[i];
      mass[d] = body.mass()[i];
      v[d] = mesh.velocities[i][k];
      rhs[d] = mass[d] * v[d] + dt * (fe[k] - fint[i][k]);
    }
  }

  const double mass_scale = 1.0 + dt * params.alpha;
  const double stiff_scale = dt * params.beta + dt * dt;
  const VecX diag = mass_scale * mass + stiff_scale * body.stiffness_diagonal();
  VecX kx;
  auto apply = [&](const VecX& x, VecX& y) {
    body.stiffness_product(x, kx);
    y = mass_scale * mass.cwiseProduct(x) + stiff_scale * kx;
  };
  const StepReport report =
      conjugate_gradient(apply, rhs, diag, fixed_dof, v, params.cg_tolerance, params.cg_max_iterations);

  for (std::size_t i = 0; i < nv; ++i) {
    if (body.fixed()[i]) {
      mesh.velocities[i].setZero();
      continue;
    }
    mesh.velocities[i] = v.segment<3>(3 * static_cast<Eigen::Index>(i));
    mesh.current_positions[i] += dt * mesh.velocities[i];
  }
  return report;
}

/// Small-displacement equilibrium K u = f_ext about the rest state (no
/// warping, no plastic strain). Writes current positions = rest + u.
inline StepReport static_solve(Body& body, const Vec3List& external, double tolerance = 1e-10,
                               int max_iterations = 20000) {
  auto& mesh = body.mesh();
  const std::size_t nv = mesh.vertex_count();
  const Eigen::Index n = 3 * static_cast<Eigen::Index>(nv);
  body.update_rotations(false);
  std::vector<bool> fixed_dof(n, false);
  VecX rhs = VecX::Zero(n), u = VecX::Zero(n);
  for (std::size_t i = 0; i < nv; ++i) {
    for (int k = 0; k < 3; ++k) {
      const auto d = static_cast<Eigen::Index>(3 * i + k);
      fixed_dof[d] = body.fixed()[i];
      if (i < external.size()) rhs[d] = external[i][k];
    }
  }
  const VecX diag = body.stiffness_diagonal();
  auto apply = [&](const VecX& x, VecX& y) { body.stiffness_product(x, y); };
  const StepReport report = conjugate_gradient(apply, rhs, diag, fixed_dof, u, tolerance, max_iterations);
  for (std::size_t i = 0; i < nv; ++i) {
    mesh.current_positions[i] = mesh.rest_positions[i] + u.segment<3>(3 * static_cast<Eigen::Index>(i));
    mesh.velocities[i].setZero();
  }
  return report;
}

/// Moves a creep fraction of the strain beyond the yield surface into the
/// plastic strain; the plastic strain norm is capped at `max`.
inline void apply_plastic_flow(Body& body, const PlasticityParams& plasticity) {
  for (std::size_t t = 0; t < body.elements().size(); ++t) {
    auto& e = body.elements()[t];
    const Vec6 elastic = body.element_strain(t) - e.plastic;
    const double norm = elastic.norm();
    if (!(norm > plasticity.yield)) continue;
    e.plastic += plasticity.creep * (1.0 - plasticity.yield / norm) * elastic;
    const double pn = e.plastic.norm();
    if (pn > plasticity.max) e.plastic *= plasticity.max / pn;
  }
}

/// Scales every node velocity by the locality kernel centred on the proxy.
inline void apply_damping_kernel(TetMesh& mesh, const DampingKernelParams& kernel) {
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const double r = (mesh.current_positions[i] - kernel.center).norm();
    mesh.velocities[i] *= damping_kernel_weight(r, kernel.k1, kernel.k2, kernel.radius);
  }
}

inline constexpr double kMaterialRefreshThreshold = 1e-4;

/// Recomputes the effective stiffness of tets whose fluid fraction moved by
/// more than the refresh threshold. Returns the number of refreshed tets.
inline int refresh_element_material(Body& body, const SaturationField& field, const Mixture& mixture,
                                    double threshold = kMaterialRefreshThreshold) {
  int refreshed = 0;
  for (std::size_t t = 0; t < body.elements().size(); ++t) {
    auto& e = body.elements()[t];
    const double phi = saturation_to_phi(field.saturation(t), field.porosity());
    if (std::abs(phi - e.phi) <= threshold) continue;
    body.set_element_material(t, mixture.stiffness(phi).m);
    e.phi = phi;
    ++refreshed;
  }
  return refreshed;
}

}  // namespace porosim
