#include <porosim/fem.hpp>

#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace porosim;
using testing_support::random_vec;

namespace {

const IsotropicElasticParams kParams{1e4, 0.3};

Body cube_body(int n = 1) {
  return Body(make_box_tet_mesh(Vec3::Zero(), Vec3::Ones(), n, n, n), 1000.0, iso_to_stiffness(kParams));
}

Vec3List element_forces(Body& body) {
  body.update_rotations(false);
  return body.internal_forces();
}

}  // namespace

TEST(Element, TranslationGivesZeroForce) {
  auto body = cube_body(2);
  for (auto& x : body.mesh().current_positions) x += Vec3(0.3, -0.2, 0.7);
  for (const auto& f : element_forces(body)) EXPECT_LT(f.norm(), 1e-10);
}

TEST(Element, SmallRotationForceIsSecondOrder) {
  auto body = cube_body(2);
  const double angle = 1e-6;
  const Mat3 r = Eigen::AngleAxisd(angle, Vec3(1, 2, 3).normalized()).toRotationMatrix();
  for (std::size_t i = 0; i < body.mesh().vertex_count(); ++i)
    body.mesh().current_positions[i] = r * body.mesh().rest_positions[i];
  double fmax = 0.0;
  for (const auto& f : element_forces(body)) fmax = std::max(fmax, f.norm());
  // A unit displacement gradient produces forces of order E; rotation leaves O(angle^2).
  EXPECT_LT(fmax, 10.0 * kParams.young_modulus * angle * angle);
}

TEST(Element, UnitTetUniaxialStretch) {
  const TetMesh mesh = TetMesh::from({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}, {{0, 1, 2, 3}});
  Body body(mesh, 1.0, iso_to_stiffness({1.0, 0.0}));
  const double e = 1e-3;
  for (std::size_t i = 0; i < 4; ++i) body.mesh().current_positions[i].x() *= 1.0 + e;
  const auto f = element_forces(body);
  // sigma_xx = E e, traction on the x = 0 face (area 1/2) and balancing node 1.
  const Eigen::MatrixXd k = oracle::dense_stiffness(mesh.rest_positions, mesh.tets, oracle::iso_stiffness(1.0, 0.0));
  Eigen::VectorXd u = Eigen::VectorXd::Zero(12);
  u[3] = e;
  const Eigen::VectorXd expect = k * u;
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(f[i][c], expect[3 * i + c], 1e-15);
  EXPECT_NEAR(f[1].x(), e / 6.0, 1e-15);
  EXPECT_NEAR(f[0].x(), -e / 6.0, 1e-15);
}

TEST(Element, AssembledStiffnessMatchesDenseOracle) {
  std::mt19937_64 rng(5);
  auto body = cube_body(2);
  const auto& mesh = body.mesh();
  const Eigen::MatrixXd k = oracle::dense_stiffness(mesh.rest_positions, mesh.tets, oracle::iso_stiffness(1e4, 0.3));
  VecX x(k.rows());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = testing_support::uniform(rng, -1, 1);
  VecX y;
  body.update_rotations(false);
  body.stiffness_product(x, y);
  EXPECT_LT((y - k * x).norm(), 1e-10 * (k * x).norm());
  EXPECT_LT((body.stiffness_diagonal() - k.diagonal()).norm(), 1e-10 * k.diagonal().norm());
}

TEST(Forces, MatchEnergyGradient) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    auto body = cube_body(1);
    for (auto& x : body.mesh().current_positions) x += random_vec(rng, -0.02, 0.02);
    body.update_rotations(trial % 2 == 1);
    const auto f = body.internal_forces();
    const double h = 1e-6;
    for (std::size_t i = 0; i < body.mesh().vertex_count(); ++i) {
      for (int c = 0; c < 3; ++c) {
        auto& x = body.mesh().current_positions[i][c];
        const double x0 = x;
        x = x0 + h;
        const double ep = body.elastic_energy();
        x = x0 - h;
        const double em = body.elastic_energy();
        x = x0;
        EXPECT_NEAR(f[i][c], (ep - em) / (2 * h), 1e-6 * (1.0 + std::abs(f[i][c])));
      }
    }
  }
}

TEST(Step, RestStateIsEquilibrium) {
  auto body = cube_body(2);
  SimParams p;
  p.dt = 1e-2;
  const auto before = body.mesh().current_positions;
  step(body, p, {});
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(body.mesh().current_positions[i], before[i]);
    EXPECT_EQ(body.mesh().velocities[i], Vec3::Zero());
  }
}

TEST(Step, FreePointMassFollowsImplicitEuler) {
  // A single tet with three clamped nodes and vanishing stiffness leaves
  // node 3 as a damped point mass: v' = (m v + dt F) / (m (1 + dt alpha)).
  const TetMesh mesh = TetMesh::from({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}, {{0, 1, 2, 3}});
  Body body(mesh, 600.0, iso_to_stiffness({1e-30, 0.0}));
  const std::vector<int> fixed = {0, 1, 2};
  body.set_fixed(fixed);
  SimParams p;
  p.dt = 0.01;
  p.alpha = 0.5;
  p.beta = 0.0;
  p.cg_tolerance = 1e-14;
  const double m = body.mass()[3];
  EXPECT_NEAR(m, 600.0 / 6.0 / 4.0, 1e-12);
  const Vec3 force(0.0, 0.0, 2.0);
  Vec3List ext(4, Vec3::Zero());
  ext[3] = force;
  double v = 0.0, z = 1.0;
  for (int k = 0; k < 50; ++k) {
    step(body, p, ext);
    v = (m * v + p.dt * force.z()) / (m * (1 + p.dt * p.alpha));
    z += p.dt * v;
  }
  EXPECT_NEAR(body.mesh().velocities[3].z(), v, 1e-10);
  EXPECT_NEAR(body.mesh().current_positions[3].z(), z, 1e-10);
  EXPECT_EQ(body.mesh().current_positions[0], Vec3(0, 0, 0));
}

TEST(Step, CgFailureRaises) {
  auto body = cube_body(2);
  SimParams p;
  p.dt = 1e-2;
  p.cg_max_iterations = 1;
  p.cg_tolerance = 1e-14;
  Vec3List ext(body.mesh().vertex_count(), Vec3(0, 0, 1));
  ext[0] = Vec3(5, -3, 1);
  EXPECT_THROW(step(body, p, ext), SolverError);
}

TEST(Static, MatchesDenseSolve) {
  auto body = Body(make_box_tet_mesh(Vec3::Zero(), Vec3(3, 1, 1), 6, 2, 2), 1000.0, iso_to_stiffness(kParams));
  const auto& mesh = body.mesh();
  std::vector<int> fixed;
  std::vector<bool> is_fixed(mesh.vertex_count(), false);
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i)
    if (mesh.rest_positions[i].x() == 0.0) {
      fixed.push_back(static_cast<int>(i));
      is_fixed[i] = true;
    }
  body.set_fixed(fixed);
  Vec3List f(mesh.vertex_count(), Vec3::Zero());
  Eigen::VectorXd fv = Eigen::VectorXd::Zero(3 * static_cast<Eigen::Index>(mesh.vertex_count()));
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i)
    if (mesh.rest_positions[i].x() == 3.0) {
      f[i] = Vec3(0, 0, -1);
      fv[3 * static_cast<Eigen::Index>(i) + 2] = -1;
    }
  static_solve(body, f);
  const Eigen::MatrixXd k = oracle::dense_stiffness(mesh.rest_positions, mesh.tets, oracle::iso_stiffness(1e4, 0.3));
  const Eigen::VectorXd u = oracle::dense_static_solve(k, fv, is_fixed);
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const Vec3 d = body.mesh().current_positions[i] - mesh.rest_positions[i];
    EXPECT_LT((d - u.segment<3>(3 * static_cast<Eigen::Index>(i))).norm(), 1e-8 * u.norm());
  }
}

TEST(Plastic, BelowYieldUnchanged) {
  auto body = cube_body(1);
  for (auto& x : body.mesh().current_positions) x.x() *= 1.001;
  body.update_rotations(false);
  apply_plastic_flow(body, {0.01, 0.5, 1.0});
  for (const auto& e : body.elements()) EXPECT_EQ(e.plastic, Vec6::Zero());
}

TEST(Plastic, FullCreepAbsorbsExcess) {
  auto body = cube_body(1);
  for (auto& x : body.mesh().current_positions) x.x() *= 1.02;
  body.update_rotations(false);
  const double yield = 0.01;  // strain norm 0.02 = 2 x yield
  apply_plastic_flow(body, {yield, 1.0, std::numeric_limits<double>::infinity()});
  for (std::size_t t = 0; t < body.elements().size(); ++t) {
    const Vec6 total = body.element_strain(t);
    const Vec6 plastic = body.elements()[t].plastic;
    EXPECT_NEAR(total.norm(), 0.02, 1e-12);
    EXPECT_LT((plastic - 0.5 * total).norm(), 1e-14);
    EXPECT_NEAR((total - plastic).norm(), yield, 1e-14);
  }
}

TEST(Plastic, PartialCreepConvergesGeometrically) {
  auto body = cube_body(1);
  for (auto& x : body.mesh().current_positions) x.x() *= 1.02;
  body.update_rotations(false);
  const double yield = 0.01, creep = 0.1;
  const Vec6 total = body.element_strain(0);
  double excess = total.norm() - yield;  // elastic norm above yield
  for (int k = 1; k <= 30; ++k) {
    apply_plastic_flow(body, {yield, creep, std::numeric_limits<double>::infinity()});
    excess *= 1.0 - creep;
    const double elastic = (total - body.elements()[0].plastic).norm();
    EXPECT_NEAR(elastic - yield, excess, 1e-14) << k;
  }
}

TEST(Plastic, CappedAtMax) {
  auto body = cube_body(1);
  for (auto& x : body.mesh().current_positions) x.x() *= 1.5;
  body.update_rotations(false);
  apply_plastic_flow(body, {0.01, 1.0, 0.05});
  for (const auto& e : body.elements()) EXPECT_LE(e.plastic.norm(), 0.05 + 1e-15);
}

TEST(Kernel, DirectValues) {
  EXPECT_EQ(damping_kernel_weight(0.0, 10.0, 5.0, 0.1), 1.0);
  EXPECT_NEAR(damping_kernel_weight(0.05, 10.0, 5.0, 0.1), 1.0 / 1.5, 1e-15);
  EXPECT_NEAR(damping_kernel_weight(0.2, 10.0, 5.0, 0.1), 1.0 / (3.0 + std::exp(1.0)), 1e-15);
  EXPECT_NEAR(1.0 / (3.0 + std::exp(1.0)), 0.1749, 1e-4);
}

TEST(Kernel, ScalesVelocities) {
  auto mesh = make_box_tet_mesh(Vec3::Zero(), Vec3::Ones(), 1, 1, 1);
  for (auto& v : mesh.velocities) v = Vec3(1, 2, 3);
  DampingKernelParams k;
  k.k1 = 2.0;
  k.k2 = 1.0;
  k.radius = 1.0;
  apply_damping_kernel(mesh, k);
  for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
    const double r = mesh.current_positions[i].norm();
    EXPECT_NEAR(mesh.velocities[i].x(), damping_kernel_weight(r, 2.0, 1.0, 1.0), 1e-15);
  }
}

TEST(Refresh, DryMeshKeepsSolid) {
  auto body = cube_body(1);
  const Mixture mix(kParams, 2.2e9, 1e-6);
  const SaturationField field(body.mesh().rest_volumes, 0.3, 0.0);
  EXPECT_EQ(refresh_element_material(body, field, mix), 0);
  for (const auto& e : body.elements()) EXPECT_EQ(e.c, mix.solid_stiffness().m);
}

TEST(Refresh, UniformWetSharesOneTensor) {
  auto body = cube_body(2);
  const Mixture mix(kParams, 2.2e9, 1e-6);
  const SaturationField field(body.mesh().rest_volumes, 0.3, 0.5);
  EXPECT_EQ(refresh_element_material(body, field, mix), static_cast<int>(body.elements().size()));
  EXPECT_EQ(mix.cache_size(), 1u);
  for (const auto& e : body.elements()) EXPECT_EQ(e.c, body.elements()[0].c);
}

TEST(Refresh, WetHalfIsMoreCompliant) {
  auto body = Body(make_box_tet_mesh(Vec3::Zero(), Vec3(2, 1, 1), 2, 1, 1), 1000.0, iso_to_stiffness(kParams));
  const Mixture mix(kParams, 2.2e9, 1e-6);
  SaturationField field(body.mesh().rest_volumes, 0.3, 0.0);
  std::vector<bool> wet(field.size());
  for (std::size_t t = 0; t < field.size(); ++t) {
    Vec3 c = Vec3::Zero();
    for (int v : body.mesh().tets[t]) c += 0.25 * body.mesh().rest_positions[v];
    wet[t] = c.x() > 1.0;
    if (wet[t]) field.set_saturation(t, 1.0);
  }
  refresh_element_material(body, field, mix);
  const Mat66 s_dry = mix.solid_compliance().m;
  for (std::size_t t = 0; t < field.size(); ++t) {
    if (!wet[t]) {
      EXPECT_EQ(body.elements()[t].c, mix.solid_stiffness().m);
      continue;
    }
    const Mat66 s_wet = checked_inverse(body.elements()[t].c, "C");
    // Young's-modulus direction and every shear direction soften.
    EXPECT_GT(s_wet(0, 0), s_dry(0, 0));
    for (int k = 3; k < 6; ++k) EXPECT_GT(s_wet(k, k), s_dry(k, k));
  }
}
