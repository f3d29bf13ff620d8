#include <porosim/embedding.hpp>
#include <porosim/mesh.hpp>

#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "support.hpp"

using namespace porosim;
using testing_support::random_vec;

namespace {

TetMesh unit_tet() {
  return TetMesh::from({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}, {{0, 1, 2, 3}});
}

double signed_area_dot(const TetMesh& m, const Tri& f, const Vec3& inside) {
  const auto& x = m.rest_positions;
  const Vec3 n = (x[f[1]] - x[f[0]]).cross(x[f[2]] - x[f[0]]);
  return n.dot(x[f[0]] - inside);
}

}  // namespace

TEST(Boundary, SingleTetHasFourFaces) {
  const auto m = unit_tet();
  ASSERT_EQ(m.boundary_faces.size(), 4u);
  const Vec3 c(0.25, 0.25, 0.25);
  for (const auto& f : m.boundary_faces) EXPECT_GT(signed_area_dot(m, f, c), 0.0);
}

TEST(Boundary, SharedFaceIsInterior) {
  const auto m = TetMesh::from({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1), Vec3(1, 1, 1)},
                               {{0, 1, 2, 3}, {1, 2, 3, 4}});
  ASSERT_EQ(m.boundary_faces.size(), 6u);
  for (const auto& f : m.boundary_faces) {
    std::array<int, 3> s = f;
    std::sort(s.begin(), s.end());
    EXPECT_NE(s, (std::array<int, 3>{1, 2, 3}));
  }
}

TEST(Boundary, FiveTetCubeMatchesFaceCount) {
  const auto m = make_box_tet_mesh(Vec3::Zero(), Vec3::Ones(), 1, 1, 1);
  ASSERT_EQ(m.tet_count(), 5u);
  EXPECT_EQ(m.boundary_faces.size(), 12u);
  EXPECT_EQ(m.boundary_faces.size(), oracle::boundary_face_count(m.tets));
}

TEST(Boundary, BoxMeshesMatchFaceCountOracle) {
  for (const auto& n : {std::array<int, 3>{2, 3, 4}, {5, 1, 2}, {3, 3, 3}}) {
    const auto m = make_box_tet_mesh(Vec3::Zero(), Vec3(1, 2, 3), n[0], n[1], n[2]);
    EXPECT_EQ(m.boundary_faces.size(), oracle::boundary_face_count(m.tets));
    EXPECT_EQ(m.boundary_faces.size(), static_cast<std::size_t>(4 * (n[0] * n[1] + n[1] * n[2] + n[0] * n[2])));
    EXPECT_NEAR(m.total_rest_volume(), 6.0, 1e-12);
    ASSERT_EQ(m.boundary_face_tets.size(), m.boundary_faces.size());
  }
}

TEST(Boundary, FacesWoundOutward) {
  const auto m = make_box_tet_mesh(Vec3::Zero(), Vec3::Ones(), 2, 2, 2);
  const Vec3 centre(0.5, 0.5, 0.5);
  for (const auto& f : m.boundary_faces) EXPECT_GT(signed_area_dot(m, f, centre), 0.0);
}

TEST(Boundary, InvertedTetIsReoriented) {
  const auto m = TetMesh::from({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}, {{0, 2, 1, 3}});
  EXPECT_GT(m.rest_volumes[0], 0.0);
}

TEST(Boundary, DegenerateTetRejected) {
  EXPECT_THROW(TetMesh::from({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)}, {{0, 1, 2, 3}}),
               DegenerateElementError);
}

TEST(Boundary, OutOfRangeIndexRejected) {
  EXPECT_THROW(TetMesh::from({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)}, {{0, 1, 2, 3}}), ValidationError);
}

TEST(Embedding, CentroidHasQuarterWeights) {
  const auto m = unit_tet();
  const auto emb = build_embedding(m, {Vec3(0.25, 0.25, 0.25)});
  EXPECT_EQ(emb.tet[0], 0);
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(emb.weights[0][k], 0.25, 1e-15);
  EXPECT_EQ(emb.outside_count(), 0);
}

TEST(Embedding, NodeHasUnitWeight) {
  const auto m = unit_tet();
  for (int k = 0; k < 4; ++k) {
    const auto emb = build_embedding(m, {m.rest_positions[m.tets[0][k]]});
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(emb.weights[0][j], j == k ? 1.0 : 0.0, 1e-15);
  }
}

TEST(Embedding, OutsideVertexExtrapolates) {
  const auto m = unit_tet();
  // 0.1 beyond the face opposite the origin along its normal.
  const Vec3 p = Vec3(1, 1, 1) / 3.0 + 0.1 * Vec3(1, 1, 1).normalized();
  const auto emb = build_embedding(m, {p});
  EXPECT_TRUE(emb.outside[0]);
  EXPECT_EQ(emb.outside_count(), 1);
  // Direct 4x4 solve of [1 x y z]^T w = [1 p].
  Eigen::Matrix4d a;
  for (int i = 0; i < 4; ++i) {
    const Vec3& x = m.rest_positions[m.tets[0][i]];
    a.col(i) << 1.0, x;
  }
  const Eigen::Vector4d expect = a.lu().solve(Eigen::Vector4d(1.0, p.x(), p.y(), p.z()));
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(emb.weights[0][k], expect[k], 1e-13);
  EXPECT_NEAR(emb.weights[0].sum(), 1.0, 1e-14);
  EXPECT_LT(emb.weights[0][0], 0.0);
}

TEST(Embedding, IdentityAtRest) {
  std::mt19937_64 rng(7);
  const auto m = make_box_tet_mesh(Vec3::Zero(), Vec3(1, 1, 1), 3, 3, 3);
  Vec3List pts;
  for (int i = 0; i < 200; ++i) pts.push_back(random_vec(rng, -0.1, 1.1));
  const auto emb = build_embedding(m, pts);
  const auto out = apply_embedding(emb, m.rest_positions, m.tets);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LT((out[i] - pts[i]).norm(), 1e-12);
  const auto disp = displace_embedded(emb, m, pts);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_EQ(disp[i], pts[i]);
}

TEST(Embedding, RigidTranslationCarriesSurface) {
  std::mt19937_64 rng(8);
  auto m = make_box_tet_mesh(Vec3::Zero(), Vec3(1, 1, 1), 2, 2, 2);
  Vec3List pts;
  for (int i = 0; i < 100; ++i) pts.push_back(random_vec(rng, 0.0, 1.0));
  const auto emb = build_embedding(m, pts);
  const Vec3 t(0.3, -1.2, 2.5);
  for (auto& x : m.current_positions) x += t;
  const auto out = apply_embedding(emb, m.current_positions, m.tets);
  for (std::size_t i = 0; i < pts.size(); ++i) EXPECT_LT((out[i] - (pts[i] + t)).norm(), 1e-12);
}

TEST(Embedding, RandomDeformationMatchesRecomputation) {
  std::mt19937_64 rng(9);
  auto m = make_box_tet_mesh(Vec3::Zero(), Vec3(1, 1, 1), 3, 2, 2);
  Vec3List pts;
  for (int i = 0; i < 100; ++i) pts.push_back(random_vec(rng, 0.0, 1.0));
  const auto emb = build_embedding(m, pts);
  for (auto& x : m.current_positions) x += random_vec(rng, -0.05, 0.05);
  const auto out = apply_embedding(emb, m.current_positions, m.tets);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& tet = m.tets[emb.tet[i]];
    Eigen::Matrix4d a;
    for (int k = 0; k < 4; ++k) a.col(k) << 1.0, m.rest_positions[tet[k]];
    const Eigen::Vector4d w = a.lu().solve(Eigen::Vector4d(1.0, pts[i].x(), pts[i].y(), pts[i].z()));
    Vec3 expect = Vec3::Zero();
    for (int k = 0; k < 4; ++k) expect += w[k] * m.current_positions[tet[k]];
    EXPECT_LT((out[i] - expect).norm(), 1e-12);
  }
}

TEST(Highlight, LinearFalloff) {
  const Vec3 c(1, 2, 3);
  const auto w = project_highlight({c, c + Vec3(0.5, 0, 0), c + Vec3(0, 1, 0), c + Vec3(0, 0, 2)}, c, 1.0);
  EXPECT_EQ(w[0], 1.0);
  EXPECT_DOUBLE_EQ(w[1], 0.5);
  EXPECT_EQ(w[2], 0.0);
  EXPECT_EQ(w[3], 0.0);
  EXPECT_THROW(project_highlight({c}, c, 0.0), DomainError);
}

TEST(Files, TetgenRoundTrip) {
  const auto dir = testing_support::temp_dir("tetgen");
  const auto m = make_box_tet_mesh(Vec3(0.1, 0.2, 0.3), Vec3(1, 2, 3), 2, 2, 1);
  save_tetgen(m, (dir / "m.node").string(), (dir / "m.ele").string());
  const auto back = load_tetgen((dir / "m.node").string(), (dir / "m.ele").string());
  ASSERT_EQ(back.vertex_count(), m.vertex_count());
  ASSERT_EQ(back.tets, m.tets);
  for (std::size_t i = 0; i < m.vertex_count(); ++i) EXPECT_EQ(back.rest_positions[i], m.rest_positions[i]);
}

TEST(Files, MissingFileNamesPath) {
  try {
    load_tetgen("/nonexistent/a.node", "/nonexistent/a.ele");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_EQ(e.path(), "/nonexistent/a.node");
  }
}

TEST(Files, ObjRoundTrip) {
  const auto dir = testing_support::temp_dir("obj");
  const auto s = make_box_surface(Vec3(0.5, 0.5, 0.5), Vec3(1, 2, 3), 3);
  save_obj(s.vertices, s.triangles, (dir / "s.obj").string());
  const auto back = load_obj((dir / "s.obj").string());
  ASSERT_EQ(back.vertex_count(), s.vertex_count());
  EXPECT_EQ(back.triangles, s.triangles);
  for (std::size_t i = 0; i < s.vertex_count(); ++i) EXPECT_EQ(back.vertices[i], s.vertices[i]);
}
