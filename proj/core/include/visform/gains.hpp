#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "visform/geometry.hpp"

namespace visform::gains {

/// Symmetric sensing graph without self loops.
class Adjacency {
 public:
  Adjacency() = default;
  explicit Adjacency(std::size_t n) : n_(n), bits_(n * n, false) {}

  static Adjacency complete(std::size_t n);
  /// rows x cols lattice in row-major agent order; 4- or 8-neighborhood.
  static Adjacency grid(std::size_t rows, std::size_t cols, bool diagonals);
  static Adjacency from_edges(std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> edges);

  std::size_t size() const noexcept { return n_; }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * n_ + j]; }
  void connect(std::size_t i, std::size_t j);
  std::vector<std::size_t> neighbors(std::size_t i) const;
  /// Undirected edges with i < j, in lexicographic order.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;
  bool connected() const;

  friend bool operator==(const Adjacency&, const Adjacency&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<bool> bits_;
};

/// Desired planar shape q* plus the sensing graph.
class FormationSpec {
 public:
  /// Throws invalid_argument if sizes disagree, the graph is disconnected,
  /// or (for n >= 3) all desired points are collinear.
  static FormationSpec make(geometry::Configuration desired, Adjacency adjacency);

  std::size_t size() const noexcept { return desired_.size(); }
  const geometry::Configuration& desired() const noexcept { return desired_; }
  const Adjacency& adjacency() const noexcept { return adjacency_; }

 private:
  FormationSpec(geometry::Configuration d, Adjacency a) : desired_(std::move(d)), adjacency_(std::move(a)) {}
  geometry::Configuration desired_;
  Adjacency adjacency_;
};

/// Columns: x translation, y translation, q*, and q* with each 2-block
/// rotated by +90 degrees. Throws degenerate if the columns are not
/// linearly independent.
Eigen::MatrixXd kernel_basis(const FormationSpec& spec);

/// Gain blocks A_ij of u_i = sum_j A_ij q_j^i, stored as the aggregated
/// 2n x 2n matrix whose diagonal blocks are A_ii = -sum_j A_ij.
class GainSet {
 public:
  GainSet() = default;
  /// No validation beyond dimensions; use verify_gains for the invariants.
  GainSet(Eigen::MatrixXd aggregate, Adjacency adjacency);

  std::size_t size() const noexcept { return adjacency_.size(); }
  const Eigen::MatrixXd& aggregate() const noexcept { return a_; }
  const Adjacency& adjacency() const noexcept { return adjacency_; }
  bool has_block(std::size_t i, std::size_t j) const { return i == j || adjacency_(i, j); }
  /// A_ij; zero for non-neighbors.
  Mat2 block(std::size_t i, std::size_t j) const;

 private:
  Eigen::MatrixXd a_;
  Adjacency adjacency_;
};

struct SpectralReport {
  Eigen::VectorXd eigenvalues;  // ascending
  std::size_t kernel_dimension = 0;
  /// Smallest |lambda| over eigenvalues outside the kernel band; infinity
  /// when every eigenvalue is in the kernel band (n = 2).
  double spectral_gap = 0.0;
  double max_eigenvalue = 0.0;
  double symmetry_violation = 0.0;
  double sparsity_violation = 0.0;
  double kernel_residual = 0.0;

  static constexpr double kernel_tolerance = 1e-8;
  static constexpr double nsd_tolerance = 1e-9;
  static constexpr double symmetry_tolerance = 1e-9;

  bool symmetric() const { return symmetry_violation <= symmetry_tolerance; }
  bool sparse() const { return sparsity_violation <= symmetry_tolerance; }
  bool kernel_ok() const { return kernel_residual <= kernel_tolerance; }
  bool negative_semidefinite() const { return max_eigenvalue <= nsd_tolerance; }
  bool kernel_dimension_ok() const { return kernel_dimension == 4; }
  bool gap_ok() const { return spectral_gap > 0.0; }
  bool ok() const {
    return symmetric() && sparse() && kernel_ok() && negative_semidefinite() && kernel_dimension_ok() && gap_ok();
  }
};

struct DesignOptions {
  int max_iterations = 10000;
  double tolerance = 1e-9;
};

/// Closed-form negated projector for complete graphs; Dykstra alternating
/// projections otherwise. Output is normalized so lambda_min = -1. Throws
/// infeasible when no gain set with an exactly 4-dimensional kernel is
/// found within the iteration budget.
GainSet design_gains(const FormationSpec& spec, const DesignOptions& options = {});

SpectralReport verify_gains(const GainSet& gains, const FormationSpec& spec);

struct NeighborOffset {
  std::size_t neighbor = 0;
  Vec2 offset = Vec2::Zero();  // q_j^i, meters, agent i's frame
};

/// u_i = sum_j A_ij q_j^i. Throws invalid_argument if a listed neighbor has
/// no gain block.
Vec2 control_law(std::size_t agent, std::span<const NeighborOffset> neighbors, const GainSet& gains);

/// Plain-text gain file: '#' comment lines carry the spectral report, then
/// one block per line "i j a11 a12 a21 a22" (diagonal blocks included),
/// 17 significant digits. The reader infers n and the adjacency from the
/// listed off-diagonal blocks.
void write_gain_file(std::ostream& out, const GainSet& gains, const SpectralReport& report);
GainSet read_gain_file(std::istream& in);

}  // namespace visform::gains
