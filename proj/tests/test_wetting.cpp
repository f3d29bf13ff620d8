#include <porosim/embedding.hpp>
#include <porosim/wetting.hpp>

#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace porosim;

namespace {

SaturationField single(double s) {
  const std::vector<double> v = {1.0};
  return SaturationField(v, 0.3, s);
}

DiffusionParams delta(double d) {
  DiffusionParams p;
  p.delta_s = d;
  return p;
}

/// Four unit-volume cells in a chain with unit shared areas.
struct Chain {
  std::vector<double> volumes = {1.0, 1.0, 1.0, 1.0};
  TetAdjacency adj;
  Chain() {
    adj.neighbors = {{1}, {0, 2}, {1, 3}, {2}};
    adj.links = {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}};
    adj.area_sum = {1.0, 2.0, 2.0, 1.0};
  }
};

}  // namespace

TEST(Absorb, SingleIncrement) {
  auto f = single(0.0);
  const std::vector<int> tets = {0};
  absorb(f, tets, delta(0.1));
  EXPECT_DOUBLE_EQ(f.saturation(0), 0.1);
}

TEST(Absorb, ClampsAtOne) {
  auto f = single(0.95);
  const std::vector<int> tets = {0};
  absorb(f, tets, delta(0.1));
  EXPECT_EQ(f.saturation(0), 1.0);
}

TEST(Absorb, RepeatedReachesOne) {
  auto f = single(0.0);
  const std::vector<int> tets = {0};
  double prev = 0.0;
  for (int i = 0; i < 15; ++i) {
    absorb(f, tets, delta(0.1));
    EXPECT_GE(f.saturation(0), prev);
    prev = f.saturation(0);
  }
  EXPECT_EQ(f.saturation(0), 1.0);
}

TEST(Absorb, DuplicateTetsCountOnce) {
  auto f = single(0.0);
  const std::vector<int> tets = {0, 0, 0};
  absorb(f, tets, delta(0.1));
  EXPECT_DOUBLE_EQ(f.saturation(0), 0.1);
}

TEST(Dry, SingleDecrement) {
  auto f = single(0.1);
  const std::vector<int> tets = {0};
  dry(f, tets, delta(0.1));
  EXPECT_EQ(f.saturation(0), 0.0);
}

TEST(Dry, NoNegativeWater) {
  auto f = single(0.0);
  const std::vector<int> tets = {0};
  dry(f, tets, delta(0.1));
  EXPECT_EQ(f.saturation(0), 0.0);
}

TEST(Dry, InvertsAbsorbAwayFromClamps) {
  const std::vector<double> v = {1.0, 2.0, 3.0};
  SaturationField f(v, 0.3, 0.5);
  f.set_saturation(1, 0.25);
  const auto before = f.saturations();
  const std::vector<int> tets = {0, 1, 2};
  absorb(f, tets, delta(0.125));
  dry(f, tets, delta(0.125));
  EXPECT_EQ(f.saturations(), before);
}

TEST(Diffuse, UniformFieldUnchanged) {
  Chain c;
  SaturationField f(c.volumes, 0.3, 0.4);
  DiffusionParams p;
  p.diffusivity = 0.1;
  p.dt = 0.1;
  for (int i = 0; i < 50; ++i) diffuse_step(f, c.adj, p);
  for (double s : f.saturations()) EXPECT_EQ(s, 0.4);
}

TEST(Diffuse, TwoCellsConvergeToHalf) {
  const std::vector<double> v = {1.0, 1.0};
  SaturationField f(v, 0.3, 0.0);
  f.set_saturation(0, 1.0);
  TetAdjacency adj;
  adj.neighbors = {{1}, {0}};
  adj.links = {{0, 1, 1.0}};
  adj.area_sum = {1.0, 1.0};
  DiffusionParams p;
  p.diffusivity = 1.0;
  p.dt = 0.1;
  for (int i = 0; i < 500; ++i) diffuse_step(f, adj, p);
  EXPECT_NEAR(f.saturation(0), 0.5, 1e-12);
  EXPECT_NEAR(f.saturation(1), 0.5, 1e-12);
}

TEST(Diffuse, ChainMatchesDenseRecurrence) {
  Chain c;
  SaturationField f(c.volumes, 0.3, 0.0);
  f.set_saturation(0, 1.0);
  DiffusionParams p;
  p.diffusivity = 0.1;
  p.dt = 0.1;  // k_d dt = 0.01
  for (int i = 0; i < 100; ++i) diffuse_step(f, c.adj, p);
  const auto expect = oracle::dense_diffusion({1.0, 0.0, 0.0, 0.0}, c.volumes, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}},
                                              0.01, 100);
  for (int t = 0; t < 4; ++t) EXPECT_NEAR(f.saturation(t), expect[t], 1e-10);
}

TEST(Diffuse, MeshMatchesDenseRecurrenceAndConserves) {
  const auto mesh = make_box_tet_mesh(Vec3::Zero(), Vec3(1, 1, 1), 3, 3, 2);
  const auto adj = TetAdjacency::build(mesh);
  std::mt19937_64 rng(3);
  SaturationField f(mesh.rest_volumes, 0.4, 0.0);
  std::vector<double> s0(f.size());
  for (std::size_t t = 0; t < f.size(); ++t) {
    s0[t] = testing_support::uniform(rng, 0.0, 1.0);
    f.set_saturation(t, s0[t]);
  }
  DiffusionParams p;
  p.dt = 1e-3;
  p.diffusivity = 0.0;
  const double unit = diffusion_stability_number(f, adj, {1.0, 1e-3, 0.05});
  p.diffusivity = 0.45 / unit;
  ASSERT_LT(diffusion_stability_number(f, adj, p), 0.5);
  const double m0 = f.total_water_mass();
  for (int i = 0; i < 200; ++i) diffuse_step(f, adj, p);
  std::vector<std::array<double, 3>> links;
  for (const auto& l : adj.links) links.push_back({double(l.a), double(l.b), l.area});
  const auto expect = oracle::dense_diffusion(s0, mesh.rest_volumes, links, p.diffusivity * p.dt, 200);
  for (std::size_t t = 0; t < f.size(); ++t) EXPECT_NEAR(f.saturation(t), expect[t], 1e-10);
  EXPECT_NEAR(f.total_water_mass(), m0, 1e-12 * m0);
}

TEST(Diffuse, UnstableStepRejected) {
  Chain c;
  SaturationField f(c.volumes, 0.3, 0.0);
  DiffusionParams p;
  p.diffusivity = 1.0;
  p.dt = 0.25;  // 1 * 0.25 * 2 / 1 = 0.5
  EXPECT_THROW(diffuse_step(f, c.adj, p), StabilityError);
}

TEST(Adjacency, LinksMatchSharedFaces) {
  const auto mesh = make_box_tet_mesh(Vec3::Zero(), Vec3(1, 1, 1), 2, 2, 2);
  const auto adj = TetAdjacency::build(mesh);
  // Each tet has 4 faces: boundary faces plus twice the interior links.
  EXPECT_EQ(4 * mesh.tet_count(), mesh.boundary_faces.size() + 2 * adj.links.size());
  for (const auto& l : adj.links) {
    EXPECT_LT(l.a, l.b);
    EXPECT_GT(l.area, 0.0);
  }
}

TEST(Fraction, SaturationToPhi) {
  EXPECT_EQ(saturation_to_phi(0.0, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(saturation_to_phi(1.0, 0.3), 0.3);
  EXPECT_DOUBLE_EQ(saturation_to_phi(0.5, 0.4), 0.2);
}

TEST(Fraction, PorosityOutOfRangeRejected) {
  const std::vector<double> v = {1.0};
  EXPECT_THROW(SaturationField(v, 1.5, 0.0), DomainError);
  EXPECT_THROW(SaturationField(v, 0.0, 0.0), DomainError);
}

TEST(Transfer, DryWetAndMixed) {
  const auto mesh = make_box_tet_mesh(Vec3::Zero(), Vec3(1, 1, 1), 2, 1, 1);
  std::mt19937_64 rng(4);
  Vec3List pts;
  for (int i = 0; i < 50; ++i) pts.push_back(testing_support::random_vec(rng, 0.0, 1.0));
  const auto emb = build_embedding(mesh, pts);
  SaturationField f(mesh.rest_volumes, 0.3, 0.0);
  for (double w : transfer_wetness(f, emb)) EXPECT_EQ(w, 0.0);
  for (std::size_t t = 0; t < f.size(); ++t) f.set_saturation(t, 1.0);
  for (double w : transfer_wetness(f, emb)) EXPECT_EQ(w, 1.0);
  for (std::size_t t = 0; t < f.size(); ++t) f.set_saturation(t, 0.1 * static_cast<double>(t));
  const auto w = transfer_wetness(f, emb);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(w[i], f.saturation(emb.tet[i]));
}
