#pragma once

// Elasticity of the solid, of water and of the solid-water mixture.
//
// All 6x6 tensors use Voigt order (xx, yy, zz, yz, xz, xy) with engineering
// shear strains, so a stiffness and its compliance are exact matrix inverses.

#include <porosim/core/error.hpp>
#include <porosim/core/types.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <string>

namespace porosim {

struct IsotropicElasticParams {
  double young_modulus = 1.0;
  double poisson_ratio = 0.0;

  double lame_lambda() const {
    return young_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
  }
  double shear_modulus() const { return young_modulus / (2.0 * (1.0 + poisson_ratio)); }
  double bulk_modulus() const { return young_modulus / (3.0 * (1.0 - 2.0 * poisson_ratio)); }

  static IsotropicElasticParams from_bulk_shear(double bulk, double shear) {
    return {9.0 * bulk * shear / (3.0 * bulk + shear), (3.0 * bulk - 2.0 * shear) / (2.0 * (3.0 * bulk + shear))};
  }

  void validate() const {
    if (!(young_modulus > 0.0)) throw DomainError("Young's modulus must be positive");
    if (poisson_ratio >= 0.5) throw DomainError("Poisson ratio 0.5 is incompressible: stiffness is singular");
    if (!(poisson_ratio > -1.0)) throw DomainError("Poisson ratio must exceed -1");
  }
};

enum class TensorKind { stiffness, compliance };

struct ElasticityTensor66 {
  Mat66 m = Mat66::Zero();
  TensorKind kind = TensorKind::stiffness;

  bool is_symmetric(double rel_tol = 1e-9) const {
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * std::max(m.cwiseAbs().maxCoeff(), 1e-300);
  }
};

struct EshelbyTensor {
  Mat66 m = Mat66::Zero();
};

struct MixtureParams {
  double phi = 0.0;
  double water_bulk_modulus = 2.2e9;
  double water_shear_regularizer = 1e-6;
};

inline constexpr double kMaxCondition = 1e12;

/// Dense LU solve with partial pivoting; refuses factors whose condition
/// estimate exceeds 1e12.
inline Mat66 checked_solve(const Mat66& a, const Mat66& b, const std::string& factor) {
  Eigen::PartialPivLU<Mat66> lu(a);
  const double rcond = lu.rcond();
  if (!(rcond > 1.0 / kMaxCondition)) {
    throw SingularMatrixError(factor, rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity());
  }
  return lu.solve(b);
}

inline Mat66 checked_inverse(const Mat66& a, const std::string& factor) {
  return checked_solve(a, Mat66::Identity(), factor);
}

inline Mat66 isotropic_stiffness_matrix(double lambda, double mu) {
  Mat66 c = Mat66::Zero();
  c.topLeftCorner<3, 3>().setConstant(lambda);
  for (int i = 0; i < 3; ++i) {
    c(i, i) = lambda + 2.0 * mu;
    c(i + 3, i + 3) = mu;
  }
  return c;
}

inline ElasticityTensor66 iso_to_stiffness(const IsotropicElasticParams& p) {
  p.validate();
  return {isotropic_stiffness_matrix(p.lame_lambda(), p.shear_modulus()), TensorKind::stiffness};
}

inline ElasticityTensor66 iso_to_compliance(const IsotropicElasticParams& p) {
  p.validate();
  const double e = p.young_modulus, nu = p.poisson_ratio;
  Mat66 s = Mat66::Zero();
  s.topLeftCorner<3, 3>().setConstant(-nu / e);
  for (int i = 0; i < 3; ++i) {
    s(i, i) = 1.0 / e;
    s(i + 3, i + 3) = 2.0 * (1.0 + nu) / e;
  }
  return {s, TensorKind::compliance};
}

/// Isotropic water tensor with true bulk modulus and a small regularized
/// shear modulus `eps_mu * solid_shear`.
inline ElasticityTensor66 water_stiffness(double bulk_modulus, double shear_modulus) {
  if (!(bulk_modulus > 0.0) || !(shear_modulus > 0.0)) throw DomainError("water moduli must be positive");
  return {isotropic_stiffness_matrix(bulk_modulus - 2.0 * shear_modulus / 3.0, shear_modulus), TensorKind::stiffness};
}

inline ElasticityTensor66 invert(const ElasticityTensor66& t, const std::string& factor = "tensor inverse") {
  Mat66 inv = checked_inverse(t.m, factor);
  inv = 0.5 * (inv + inv.transpose());
  return {inv, t.kind == TensorKind::stiffness ? TensorKind::compliance : TensorKind::stiffness};
}

namespace detail {
inline void check_fraction(double phi) {
  if (!(phi >= 0.0 && phi <= 1.0)) throw DomainError("fluid volume fraction must lie in [0, 1]");
}
}  // namespace detail

/// Voigt upper bound (1 - phi) C_s + phi C_w.
inline ElasticityTensor66 voigt_upper(const ElasticityTensor66& solid, const ElasticityTensor66& water, double phi) {
  detail::check_fraction(phi);
  if (solid.kind != TensorKind::stiffness || water.kind != TensorKind::stiffness) {
    throw DomainError("voigt_upper expects stiffness tensors");
  }
  return {(1.0 - phi) * solid.m + phi * water.m, TensorKind::stiffness};
}

/// Reuss lower bound (1 - phi) S_s + phi S_w on the compliance.
inline ElasticityTensor66 reuss_lower(const ElasticityTensor66& solid, const ElasticityTensor66& water, double phi) {
  detail::check_fraction(phi);
  if (solid.kind != TensorKind::compliance || water.kind != TensorKind::compliance) {
    throw DomainError("reuss_lower expects compliance tensors");
  }
  return {(1.0 - phi) * solid.m + phi * water.m, TensorKind::compliance};
}

/// Eshelby tensor of a spherical inclusion in an isotropic matrix, as an
/// engineering-strain to engineering-strain map (shear diagonal = 2 S1212).
inline EshelbyTensor eshelby_spherical(double nu) {
  if (!(nu > -1.0 && nu < 0.5)) throw DomainError("matrix Poisson ratio must lie in (-1, 0.5)");
  const double d = 15.0 * (1.0 - nu);
  const double s1111 = (7.0 - 5.0 * nu) / d;
  const double s1122 = (5.0 * nu - 1.0) / d;
  const double s1212 = (4.0 - 5.0 * nu) / d;
  EshelbyTensor e;
  e.m.topLeftCorner<3, 3>().setConstant(s1122);
  for (int i = 0; i < 3; ++i) {
    e.m(i, i) = s1111;
    e.m(i + 3, i + 3) = 2.0 * s1212;
  }
  return e;
}

/// Effective compliance of the matrix-inclusion mixture:
///   S_eff = [1 + phi (Q - P)^-1] S_M,  Q = (C_M - C_I)^-1 C_M.
inline ElasticityTensor66 effective_compliance(const ElasticityTensor66& matrix_stiffness,
                                               const ElasticityTensor66& matrix_compliance,
                                               const ElasticityTensor66& inclusion_stiffness,
                                               const EshelbyTensor& eshelby, double phi) {
  detail::check_fraction(phi);
  if (phi == 0.0) return matrix_compliance;
  checked_inverse(matrix_stiffness.m, "C_M");
  const Mat66 q = checked_solve(matrix_stiffness.m - inclusion_stiffness.m, matrix_stiffness.m, "C_M - C_I");
  const Mat66 h = checked_inverse(q - eshelby.m, "Q - P");
  Mat66 s = (Mat66::Identity() + phi * h) * matrix_compliance.m;
  s = 0.5 * (s + s.transpose());
  return {s, TensorKind::compliance};
}

struct BoundsReport {
  bool ok = false;
  double upper_margin = 0.0;  // min eigenvalue of C_V - C_eff
  double lower_margin = 0.0;  // min eigenvalue of C_eff - (S_R)^-1
  double tolerance = 0.0;
};

inline double min_eigenvalue(const Mat66& a) {
  Eigen::SelfAdjointEigenSolver<Mat66> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

inline double spectral_norm(const Mat66& a) {
  Eigen::SelfAdjointEigenSolver<Mat66> es(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Loewner-order sandwich (S_R)^-1 <= C_eff <= C_V, with tolerance
/// `rel_tol * ||C_V||` on both margins.
inline BoundsReport bounds_check(const ElasticityTensor66& c_eff, const ElasticityTensor66& c_voigt,
                                 const ElasticityTensor66& s_reuss, double rel_tol = 1e-8) {
  if (c_eff.kind != TensorKind::stiffness || c_voigt.kind != TensorKind::stiffness ||
      s_reuss.kind != TensorKind::compliance) {
    throw DomainError("bounds_check expects (stiffness, stiffness, compliance)");
  }
  BoundsReport r;
  r.tolerance = rel_tol * spectral_norm(c_voigt.m);
  r.upper_margin = min_eigenvalue(c_voigt.m - c_eff.m);
  r.lower_margin = min_eigenvalue(c_eff.m - checked_inverse(s_reuss.m, "S_R"));
  r.ok = r.upper_margin >= -r.tolerance && r.lower_margin >= -r.tolerance;
  return r;
}

/// Solid + water constituents with cached tensors; maps a fluid fraction to
/// the effective stiffness used by the elements.
class Mixture {
 public:
  Mixture(const IsotropicElasticParams& solid, double water_bulk_modulus, double eps_mu)
      : solid_params_(solid) {
    solid.validate();
    if (!(eps_mu > 0.0 && eps_mu < 1.0)) throw DomainError("water shear regularizer must lie in (0, 1)");
    solid_c_ = iso_to_stiffness(solid);
    solid_s_ = iso_to_compliance(solid);
    water_c_ = porosim::water_stiffness(water_bulk_modulus, eps_mu * solid.shear_modulus());
    water_s_ = iso_to_compliance(IsotropicElasticParams::from_bulk_shear(water_bulk_modulus, eps_mu * solid.shear_modulus()));
    eshelby_ = eshelby_spherical(solid.poisson_ratio);
  }

  const IsotropicElasticParams& solid_params() const { return solid_params_; }
  const ElasticityTensor66& solid_stiffness() const { return solid_c_; }
  const ElasticityTensor66& solid_compliance() const { return solid_s_; }
  const ElasticityTensor66& water_stiffness() const { return water_c_; }
  const ElasticityTensor66& water_compliance() const { return water_s_; }
  const EshelbyTensor& eshelby() const { return eshelby_; }

  ElasticityTensor66 compliance(double phi) const {
    return effective_compliance(solid_c_, solid_s_, water_c_, eshelby_, phi);
  }

  /// Effective stiffness, memoized per exact fraction value. The reference
  /// stays valid until the next call.
  const ElasticityTensor66& stiffness(double phi) const {
    auto it = cache_.find(phi);
    if (it != cache_.end()) return it->second;
    if (cache_.size() >= kCacheLimit) cache_.clear();
    ElasticityTensor66 c = phi == 0.0 ? solid_c_ : invert(compliance(phi), "S_eff");
    return cache_.emplace(phi, c).first->second;
  }

  std::size_t cache_size() const { return cache_.size(); }

  ElasticityTensor66 voigt(double phi) const { return voigt_upper(solid_c_, water_c_, phi); }
  ElasticityTensor66 reuss(double phi) const { return reuss_lower(solid_s_, water_s_, phi); }

 private:
  static constexpr std::size_t kCacheLimit = 4096;

  IsotropicElasticParams solid_params_;
  ElasticityTensor66 solid_c_, solid_s_, water_c_, water_s_;
  EshelbyTensor eshelby_;
  mutable std::map<double, ElasticityTensor66> cache_;
};

}  // namespace porosim
