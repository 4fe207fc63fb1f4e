#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "visform/error.hpp"
#include "visform/gains.hpp"
#include "visform/rng.hpp"

using namespace visform;
using namespace visform::gains;
using geometry::Configuration;

namespace {

FormationSpec unit_triangle() {
  const std::vector<Vec2> p{{0.0, 0.0}, {1.0, 0.0}, {0.5, 0.866}};
  return FormationSpec::make(Configuration::from_points(p), Adjacency::complete(3));
}

FormationSpec triangle3() {
  const std::vector<Vec2> p{{0.0, 0.0}, {10.0, 0.0}, {5.0, 8.660254037844386}};
  return FormationSpec::make(Configuration::from_points(p), Adjacency::complete(3));
}

FormationSpec grid9() {
  std::vector<Vec2> p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.emplace_back(10.0 * c, 10.0 * r);
  return FormationSpec::make(Configuration::from_points(p), Adjacency::grid(3, 3, true));
}

// Reference projector onto the complement of span(K), built from a QR
// factorization rather than the normal equations.
Eigen::MatrixXd complement_projector(const Eigen::MatrixXd& k) {
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(k);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(k.rows(), k.cols());
  return Eigen::MatrixXd::Identity(k.rows(), k.rows()) - q * q.transpose();
}

std::vector<NeighborOffset> offsets(std::size_t i, const Eigen::VectorXd& q, const Adjacency& adj) {
  std::vector<NeighborOffset> out;
  for (std::size_t j : adj.neighbors(i)) {
    const Eigen::Index a = 2 * static_cast<Eigen::Index>(i), b = 2 * static_cast<Eigen::Index>(j);
    out.push_back({j, q.segment<2>(b) - q.segment<2>(a)});
  }
  return out;
}

}  // namespace

TEST(Adjacency, Constructions) {
  const auto c = Adjacency::complete(4);
  EXPECT_EQ(c.edges().size(), 6u);
  EXPECT_FALSE(c(2, 2));
  const auto g8 = Adjacency::grid(3, 3, true);
  EXPECT_EQ(g8.edges().size(), 20u);
  EXPECT_EQ(g8.neighbors(4).size(), 8u);
  EXPECT_EQ(g8.neighbors(0), (std::vector<std::size_t>{1, 3, 4}));
  const auto g4 = Adjacency::grid(3, 3, false);
  EXPECT_EQ(g4.edges().size(), 12u);
  const std::vector<std::pair<std::size_t, std::size_t>> e{{0, 1}, {2, 3}};
  EXPECT_FALSE(Adjacency::from_edges(4, e).connected());
  EXPECT_TRUE(Adjacency::from_edges(3, std::vector<std::pair<std::size_t, std::size_t>>{{0, 1}, {1, 2}}).connected());
  Adjacency a(3);
  EXPECT_THROW(a.connect(1, 1), Error);
  EXPECT_THROW(a.connect(0, 3), Error);
}

TEST(FormationSpec, Validation) {
  const std::vector<Vec2> line{{0, 0}, {1, 0}, {2, 0}};
  EXPECT_THROW(FormationSpec::make(Configuration::from_points(line), Adjacency::complete(3)), Error);
  const std::vector<Vec2> tri{{0, 0}, {1, 0}, {0, 1}};
  EXPECT_THROW(FormationSpec::make(Configuration::from_points(tri), Adjacency::complete(4)), Error);
  const std::vector<std::pair<std::size_t, std::size_t>> one{{0, 1}};
  EXPECT_THROW(FormationSpec::make(Configuration::from_points(tri), Adjacency::from_edges(3, one)), Error);
}

TEST(KernelBasis, TriangleColumns) {
  const Eigen::MatrixXd k = kernel_basis(unit_triangle());
  ASSERT_EQ(k.rows(), 6);
  ASSERT_EQ(k.cols(), 4);
  Eigen::VectorXd rot(6);
  rot << 0, 0, 0, 1, -0.866, 0.5;
  EXPECT_LT((k.col(3) - rot).cwiseAbs().maxCoeff(), 1e-15);
  Eigen::VectorXd ex(6), ey(6);
  ex << 1, 0, 1, 0, 1, 0;
  ey << 0, 1, 0, 1, 0, 1;
  EXPECT_EQ(k.col(0), ex);
  EXPECT_EQ(k.col(1), ey);
  EXPECT_EQ(k.col(0).dot(k.col(1)), 0.0);
  EXPECT_NEAR(k.col(0).norm(), std::sqrt(3.0), 1e-15);
}

TEST(KernelBasis, TwoAgentsSpanEverything) {
  const std::vector<Vec2> p{{0, 0}, {1, 0}};
  const auto spec = FormationSpec::make(Configuration::from_points(p), Adjacency::complete(2));
  const Eigen::MatrixXd k = kernel_basis(spec);
  EXPECT_EQ(Eigen::FullPivLU<Eigen::MatrixXd>(k).rank(), 4);
}

TEST(DesignGains, CompleteGraphIsNegatedProjector) {
  for (const auto& spec : {unit_triangle(), triangle3()}) {
    const GainSet g = design_gains(spec);
    const Eigen::MatrixXd expected = -complement_projector(kernel_basis(spec));
    EXPECT_LT((g.aggregate() - expected).cwiseAbs().maxCoeff(), 1e-12);
    const auto rep = verify_gains(g, spec);
    EXPECT_TRUE(rep.ok());
    EXPECT_EQ(rep.kernel_dimension, 4u);
    EXPECT_NEAR(rep.spectral_gap, 1.0, 1e-12);
    for (Eigen::Index i = 0; i < 2; ++i) EXPECT_NEAR(rep.eigenvalues(i), -1.0, 1e-12);
    for (Eigen::Index i = 2; i < 6; ++i) EXPECT_NEAR(rep.eigenvalues(i), 0.0, 1e-12);
  }
}

TEST(DesignGains, KernelConstraint) {
  const auto spec = triangle3();
  const GainSet g = design_gains(spec);
  const Eigen::MatrixXd k = kernel_basis(spec);
  EXPECT_LT((g.aggregate() * k.col(2)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((g.aggregate() * k.col(0)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(DesignGains, Grid9EightNeighbor) {
  const auto spec = grid9();
  const GainSet g = design_gains(spec);
  const auto rep = verify_gains(g, spec);
  EXPECT_TRUE(rep.ok());
  EXPECT_EQ(rep.kernel_dimension, 4u);
  EXPECT_GT(rep.spectral_gap, 0.0);
  EXPECT_LE(rep.symmetry_violation, 1e-9);
  EXPECT_LE(rep.kernel_residual, 1e-8);
  EXPECT_LE(rep.max_eigenvalue, 1e-9);
  EXPECT_EQ(rep.sparsity_violation, 0.0);
  // Normalized time scale.
  EXPECT_NEAR(rep.eigenvalues(0), -1.0, 1e-9);
  // Independent check with a fresh eigensolver.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.aggregate());
  int zeros = 0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    EXPECT_LE(es.eigenvalues()(i), 1e-9);
    if (std::abs(es.eigenvalues()(i)) <= 1e-8) ++zeros;
  }
  EXPECT_EQ(zeros, 4);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j)
      if (i != j && !spec.adjacency()(i, j)) EXPECT_EQ(g.block(i, j), Mat2::Zero());
}

TEST(DesignGains, BitIdenticalAcrossRuns) {
  const auto spec = grid9();
  const GainSet a = design_gains(spec), b = design_gains(spec);
  EXPECT_EQ(a.aggregate(), b.aggregate());
}

// Every pair of points is similar to every other, so the gains vanish.
TEST(DesignGains, TwoAgentsGiveZeroGains) {
  const std::vector<Vec2> p{{0, 0}, {1, 0}};
  const auto spec = FormationSpec::make(Configuration::from_points(p), Adjacency::complete(2));
  const GainSet g = design_gains(spec);
  EXPECT_LT(g.aggregate().cwiseAbs().maxCoeff(), 1e-12);
  const auto rep = verify_gains(g, spec);
  EXPECT_EQ(rep.kernel_dimension, 4u);
  EXPECT_TRUE(std::isinf(rep.spectral_gap));
  EXPECT_TRUE(rep.ok());
}

TEST(VerifyGains, CatchesBadGainSets) {
  const auto spec = unit_triangle();
  const auto zero = verify_gains(GainSet(Eigen::MatrixXd::Zero(6, 6), Adjacency::complete(3)), spec);
  EXPECT_EQ(zero.kernel_dimension, 6u);
  EXPECT_FALSE(zero.ok());

  Eigen::MatrixXd a = design_gains(spec).aggregate();
  a(0, 2) += 1e-3;
  const auto rep = verify_gains(GainSet(a, Adjacency::complete(3)), spec);
  EXPECT_GT(rep.symmetry_violation, SpectralReport::symmetry_tolerance);
  EXPECT_NEAR(rep.symmetry_violation, 1e-3, 1e-12);
  EXPECT_FALSE(rep.ok());

  const auto pos = verify_gains(GainSet(-design_gains(spec).aggregate(), Adjacency::complete(3)), spec);
  EXPECT_FALSE(pos.negative_semidefinite());
}

TEST(ControlLaw, ZeroOffsetsGiveZero) {
  const GainSet g = design_gains(triangle3());
  const std::vector<NeighborOffset> none{{1, Vec2::Zero()}, {2, Vec2::Zero()}};
  EXPECT_EQ(control_law(0, none, g), Vec2::Zero());
}

TEST(ControlLaw, EquilibriumAtDesiredShape) {
  const auto spec = grid9();
  const GainSet g = design_gains(spec);
  Eigen::VectorXd q = spec.desired().stacked();
  for (Eigen::Index i = 0; i < q.size(); i += 2) q.segment<2>(i) += Vec2(123.0, -45.0);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_LT(control_law(i, offsets(i, q, spec.adjacency()), g).norm(), 1e-10);
}

TEST(ControlLaw, PerturbedTriangleMatchesDense) {
  const auto spec = triangle3();
  const GainSet g = design_gains(spec);
  Eigen::VectorXd q = spec.desired().stacked();
  q(0) += 0.1;  // both neighbors of agent 1 shifted +0.1 m in x
  q(4) += 0.1;
  const Eigen::VectorXd dense = g.aggregate() * (q - spec.desired().stacked());
  const Vec2 u = control_law(1, offsets(1, q, spec.adjacency()), g);
  EXPECT_LT((u - dense.segment<2>(2)).norm(), 1e-12);
}

TEST(ControlLaw, StackedEqualsAggregate) {
  CounterRng r(3);
  for (const auto& spec : {triangle3(), grid9()}) {
    const GainSet g = design_gains(spec);
    const std::size_t n = spec.size();
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::VectorXd q(2 * n);
      for (Eigen::Index i = 0; i < q.size(); ++i) q(i) = r.uniform(-50, 50);
      const Eigen::VectorXd aq = g.aggregate() * q;
      for (std::size_t i = 0; i < n; ++i) {
        const Vec2 u = control_law(i, offsets(i, q, spec.adjacency()), g);
        EXPECT_LT((u - aq.segment<2>(2 * static_cast<Eigen::Index>(i))).norm(), 1e-10);
      }
    }
  }
}

TEST(ControlLaw, MissingBlockThrows) {
  const GainSet g = design_gains(grid9());
  const std::vector<NeighborOffset> bad{{8, Vec2(1, 1)}};
  EXPECT_THROW(control_law(0, bad, g), Error);
  EXPECT_THROW(control_law(9, {}, g), Error);
}

TEST(Contraction, LinearLoopNonIncreasing) {
  for (const auto& spec : {triangle3(), grid9()}) {
    const GainSet g = design_gains(spec);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g.aggregate());
    const double dt = 0.1 / std::abs(es.eigenvalues()(0));
    CounterRng r(4);
    Eigen::VectorXd q(2 * static_cast<Eigen::Index>(spec.size()));
    for (Eigen::Index i = 0; i < q.size(); ++i) q(i) = r.uniform(-30, 30);
    const double e0 = geometry::formation_error(Configuration::from_stacked(q), spec.desired());
    double prev = e0;
    for (int step = 0; step < 20000 && prev > 1e-7 * e0; ++step) {
      q += dt * g.aggregate() * q;
      const double e = geometry::formation_error(Configuration::from_stacked(q), spec.desired());
      ASSERT_LE(e, prev + 1e-9) << "step " << step;
      prev = e;
    }
    EXPECT_LT(prev, 1e-6 * e0);
  }
}

TEST(GainFile, RoundTrip) {
  const auto spec = grid9();
  const GainSet g = design_gains(spec);
  std::stringstream ss;
  write_gain_file(ss, g, verify_gains(g, spec));
  const std::string text = ss.str();
  EXPECT_NE(text.find("# "), std::string::npos);
  const GainSet back = read_gain_file(ss);
  EXPECT_EQ(back.adjacency(), g.adjacency());
  EXPECT_EQ(back.aggregate(), g.aggregate());
}

TEST(GainFile, RejectsMalformed) {
  std::istringstream empty("# nothing\n");
  EXPECT_THROW(read_gain_file(empty), Error);
  std::istringstream shortline("0 1 1 2 3\n");
  EXPECT_THROW(read_gain_file(shortline), Error);
  std::istringstream dup("0 1 1 0 0 1\n0 1 1 0 0 1\n");
  EXPECT_THROW(read_gain_file(dup), Error);
}
