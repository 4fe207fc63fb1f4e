#include "visform/gains.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "visform/error.hpp"

namespace visform::gains {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Index ix(std::size_t i) { return static_cast<Index>(i); }

}  // namespace

Adjacency Adjacency::complete(std::size_t n) {
  Adjacency a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a.connect(i, j);
  return a;
}

Adjacency Adjacency::grid(std::size_t rows, std::size_t cols, bool diagonals) {
  Adjacency a(rows * cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    for (std::size_t j = i + 1; j < rows * cols; ++j) {
      const auto dr = std::abs(static_cast<long>(i / cols) - static_cast<long>(j / cols));
      const auto dc = std::abs(static_cast<long>(i % cols) - static_cast<long>(j % cols));
      if (dr + dc == 1 || (diagonals && dr == 1 && dc == 1)) a.connect(i, j);
    }
  }
  return a;
}

Adjacency Adjacency::from_edges(std::size_t n, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  Adjacency a(n);
  for (const auto& [i, j] : edges) a.connect(i, j);
  return a;
}

void Adjacency::connect(std::size_t i, std::size_t j) {
  if (i >= n_ || j >= n_) fail(ErrorCode::invalid_argument, "edge index out of range");
  if (i == j) fail(ErrorCode::invalid_argument, "self loops are not allowed");
  bits_[i * n_ + j] = true;
  bits_[j * n_ + i] = true;
}

std::vector<std::size_t> Adjacency::neighbors(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < n_; ++j)
    if ((*this)(i, j)) out.push_back(j);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> Adjacency::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if ((*this)(i, j)) out.emplace_back(i, j);
  return out;
}

bool Adjacency::connected() const {
  if (n_ == 0) return false;
  std::vector<bool> seen(n_, false);
  std::vector<std::size_t> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    const std::size_t i = stack.back();
    stack.pop_back();
    for (std::size_t j = 0; j < n_; ++j) {
      if ((*this)(i, j) && !seen[j]) {
        seen[j] = true;
        stack.push_back(j);
      }
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

FormationSpec FormationSpec::make(geometry::Configuration desired, Adjacency adjacency) {
  if (adjacency.size() != desired.size())
    fail(ErrorCode::invalid_argument, "adjacency has " + std::to_string(adjacency.size()) + " agents, formation has " +
                                          std::to_string(desired.size()));
  if (!adjacency.connected()) fail(ErrorCode::invalid_argument, "sensing graph must be connected");
  const std::size_t n = desired.size();
  if (n >= 3) {
    double area = 0.0;
    const Vec2 p0 = desired.point(0);
    double scale = 0.0;
    for (std::size_t i = 1; i < n; ++i) scale = std::max(scale, (desired.point(i) - p0).norm());
    for (std::size_t i = 1; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const Vec2 a = desired.point(i) - p0;
        const Vec2 b = desired.point(j) - p0;
        area = std::max(area, std::abs(a.x() * b.y() - a.y() * b.x()));
      }
    if (!(area > 1e-9 * scale * scale)) fail(ErrorCode::invalid_argument, "desired formation is collinear");
  } else if ((desired.point(0) - desired.point(1)).norm() == 0.0) {
    fail(ErrorCode::invalid_argument, "desired formation points coincide");
  }
  return FormationSpec(std::move(desired), std::move(adjacency));
}

MatrixXd kernel_basis(const FormationSpec& spec) {
  const std::size_t n = spec.size();
  const VectorXd& q = spec.desired().stacked();
  MatrixXd k = MatrixXd::Zero(ix(2 * n), 4);
  for (std::size_t i = 0; i < n; ++i) {
    k(ix(2 * i), 0) = 1.0;
    k(ix(2 * i + 1), 1) = 1.0;
    k(ix(2 * i), 3) = -q(ix(2 * i + 1));
    k(ix(2 * i + 1), 3) = q(ix(2 * i));
  }
  k.col(2) = q;
  Eigen::JacobiSVD<MatrixXd> svd(k);
  const auto& s = svd.singularValues();
  if (!(s(3) > 1e-10 * s(0))) fail(ErrorCode::degenerate, "kernel basis is rank deficient");
  return k;
}

GainSet::GainSet(MatrixXd aggregate, Adjacency adjacency) : a_(std::move(aggregate)), adjacency_(std::move(adjacency)) {
  if (a_.rows() != ix(2 * adjacency_.size()) || a_.cols() != a_.rows())
    fail(ErrorCode::invalid_argument, "aggregate gain matrix must be 2n x 2n");
}

Mat2 GainSet::block(std::size_t i, std::size_t j) const {
  if (i >= size() || j >= size()) fail(ErrorCode::invalid_argument, "gain block index out of range");
  if (!has_block(i, j)) return Mat2::Zero();
  return a_.block<2, 2>(ix(2 * i), ix(2 * j));
}

namespace {

// Orthonormal basis of the complement of the kernel, 2n x (2n - 4).
MatrixXd kernel_complement(const MatrixXd& k) {
  Eigen::JacobiSVD<MatrixXd> svd(k, Eigen::ComputeFullU);
  return svd.matrixU().rightCols(k.rows() - 4);
}

// Symmetric matrices of size m in Frobenius-isometric coordinates
// (off-diagonal entries weighted by sqrt(2)).
class SymmetricCoordinates {
 public:
  explicit SymmetricCoordinates(Index m) : m_(m) {
    for (Index k = 0; k < m; ++k)
      for (Index l = k; l < m; ++l) pairs_.emplace_back(k, l);
  }
  Index dimension() const { return static_cast<Index>(pairs_.size()); }
  const std::pair<Index, Index>& pair(Index idx) const { return pairs_[static_cast<std::size_t>(idx)]; }

  MatrixXd to_matrix(const VectorXd& x) const {
    MatrixXd m(m_, m_);
    for (Index idx = 0; idx < dimension(); ++idx) {
      const auto [k, l] = pair(idx);
      if (k == l) {
        m(k, k) = x(idx);
      } else {
        m(k, l) = m(l, k) = x(idx) / std::sqrt(2.0);
      }
    }
    return m;
  }
  VectorXd to_vector(const MatrixXd& m) const {
    VectorXd x(dimension());
    for (Index idx = 0; idx < dimension(); ++idx) {
      const auto [k, l] = pair(idx);
      x(idx) = k == l ? m(k, k) : std::sqrt(2.0) * m(k, l);
    }
    return x;
  }

 private:
  Index m_;
  std::vector<std::pair<Index, Index>> pairs_;
};

bool is_complete(const Adjacency& a) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j)
      if (i != j && !a(i, j)) return false;
  return true;
}

MatrixXd finalize(MatrixXd a, const Adjacency& adjacency) {
  a = 0.5 * (a + a.transpose()).eval();
  for (std::size_t i = 0; i < adjacency.size(); ++i)
    for (std::size_t j = 0; j < adjacency.size(); ++j)
      if (i != j && !adjacency(i, j)) a.block<2, 2>(ix(2 * i), ix(2 * j)).setZero();
  if (a.rows() > 4) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a, Eigen::EigenvaluesOnly);
    a /= -es.eigenvalues()(0);
  }
  return a;
}

}  // namespace

GainSet design_gains(const FormationSpec& spec, const DesignOptions& options) {
  const std::size_t n = spec.size();
  const MatrixXd k = kernel_basis(spec);
  const MatrixXd complement = kernel_complement(k);
  const Index m = complement.cols();
  const Adjacency& adjacency = spec.adjacency();

  if (m == 0) return GainSet(MatrixXd::Zero(ix(2 * n), ix(2 * n)), adjacency);
  if (is_complete(adjacency)) {
    // A = -(I - K (K^T K)^-1 K^T): a negated projector, spectrum {0 x4, -1}.
    return GainSet(finalize(-complement * complement.transpose(), adjacency), adjacency);
  }

  // Every symmetric A with A K = 0 is A = C M C^T with C the kernel
  // complement, so we search over symmetric M (m x m). The sparsity pattern
  // is a linear subspace L of M; the target cone is {M <= -I}, whose
  // intersection with L gives a strictly negative spectrum off the kernel.
  const SymmetricCoordinates coords(m);
  std::vector<VectorXd> rows;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (adjacency(i, j)) continue;
      for (Index a = 0; a < 2; ++a) {
        for (Index b = 0; b < 2; ++b) {
          const Index r = ix(2 * i) + a;
          const Index c = ix(2 * j) + b;
          VectorXd row(coords.dimension());
          for (Index idx = 0; idx < coords.dimension(); ++idx) {
            const auto [p, q] = coords.pair(idx);
            row(idx) = p == q ? complement(r, p) * complement(c, p)
                              : (complement(r, p) * complement(c, q) + complement(r, q) * complement(c, p)) /
                                    std::sqrt(2.0);
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }
  MatrixXd t(static_cast<Index>(rows.size()), coords.dimension());
  for (std::size_t r = 0; r < rows.size(); ++r) t.row(ix(r)) = rows[r].transpose();

  Eigen::JacobiSVD<MatrixXd> svd(t, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Index rank = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > 1e-10 * s(0)) ++rank;
  const MatrixXd null_basis = svd.matrixV().rightCols(coords.dimension() - rank);
  if (null_basis.cols() == 0) fail(ErrorCode::infeasible, "sparsity pattern admits no gain matrix for this shape");

  const auto project_subspace = [&](const VectorXd& x) -> VectorXd {
    return null_basis * (null_basis.transpose() * x);
  };
  const auto project_cone = [&](const VectorXd& x) -> VectorXd {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(coords.to_matrix(x));
    const VectorXd clipped = es.eigenvalues().cwiseMin(-1.0);
    return coords.to_vector(es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose());
  };
  // Accept an iterate of L once its spectrum is safely negative; after
  // normalization that leaves a gap well above the kernel tolerance.
  const auto acceptable = [&](const VectorXd& x) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(coords.to_matrix(x), Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    return ev(m - 1) <= -0.5 && ev(m - 1) <= -std::max(options.tolerance, 1e-6) * std::abs(ev(0));
  };

  VectorXd x = project_subspace(coords.to_vector(-MatrixXd::Identity(m, m)));
  VectorXd p = VectorXd::Zero(x.size());
  VectorXd q = VectorXd::Zero(x.size());
  for (int it = 0; it < options.max_iterations && !acceptable(x); ++it) {
    // Dykstra: correction terms p (cone) and q (subspace).
    const VectorXd y = project_cone(x + p);
    p = x + p - y;
    const VectorXd x_next = project_subspace(y + q);
    q = y + q - x_next;
    x = x_next;
  }
  if (!acceptable(x))
    fail(ErrorCode::infeasible, "alternating projections did not reach a gain set with a 4-dimensional kernel in " +
                                    std::to_string(options.max_iterations) + " iterations");

  const MatrixXd a = complement * coords.to_matrix(x) * complement.transpose();
  GainSet gains(finalize(a, adjacency), adjacency);
  if (!verify_gains(gains, spec).ok())
    fail(ErrorCode::infeasible, "designed gain set failed verification");
  return gains;
}

SpectralReport verify_gains(const GainSet& gains, const FormationSpec& spec) {
  if (gains.size() != spec.size()) fail(ErrorCode::invalid_argument, "gain set and formation sizes differ");
  const MatrixXd& a = gains.aggregate();
  const std::size_t n = spec.size();
  SpectralReport r;
  r.symmetry_violation = (a - a.transpose()).cwiseAbs().maxCoeff();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && !spec.adjacency()(i, j))
        r.sparsity_violation =
            std::max(r.sparsity_violation, a.block<2, 2>(ix(2 * i), ix(2 * j)).cwiseAbs().maxCoeff());
  r.kernel_residual = (a * kernel_basis(spec)).cwiseAbs().maxCoeff();

  const MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  r.eigenvalues = es.eigenvalues();
  r.max_eigenvalue = r.eigenvalues(r.eigenvalues.size() - 1);
  r.spectral_gap = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < r.eigenvalues.size(); ++i) {
    const double lambda = r.eigenvalues(i);
    if (std::abs(lambda) <= SpectralReport::kernel_tolerance) {
      ++r.kernel_dimension;
    } else {
      r.spectral_gap = std::min(r.spectral_gap, std::abs(lambda));
    }
  }
  return r;
}

Vec2 control_law(std::size_t agent, std::span<const NeighborOffset> neighbors, const GainSet& gains) {
  if (agent >= gains.size()) fail(ErrorCode::invalid_argument, "agent index out of range");
  Vec2 u = Vec2::Zero();
  for (const auto& nb : neighbors) {
    if (nb.neighbor >= gains.size() || nb.neighbor == agent || !gains.adjacency()(agent, nb.neighbor))
      fail(ErrorCode::invalid_argument, "no gain block A_" + std::to_string(agent) + "," +
                                            std::to_string(nb.neighbor));
    u += gains.block(agent, nb.neighbor) * nb.offset;
  }
  return u;
}

namespace {

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_gain_file(std::ostream& out, const GainSet& gains, const SpectralReport& report) {
  out << "# visform gain set\n";
  out << "# agents " << gains.size() << "\n";
  out << "# kernel_dimension " << report.kernel_dimension << "\n";
  out << "# spectral_gap " << g17(report.spectral_gap) << "\n";
  out << "# max_eigenvalue " << g17(report.max_eigenvalue) << "\n";
  out << "# symmetry_violation " << g17(report.symmetry_violation) << "\n";
  out << "# sparsity_violation " << g17(report.sparsity_violation) << "\n";
  out << "# kernel_residual " << g17(report.kernel_residual) << "\n";
  out << "# verified " << (report.ok() ? "yes" : "no") << "\n";
  out << "# eigenvalues";
  for (Index i = 0; i < report.eigenvalues.size(); ++i) out << ' ' << g17(report.eigenvalues(i));
  out << "\n# i j a11 a12 a21 a22\n";
  for (std::size_t i = 0; i < gains.size(); ++i) {
    for (std::size_t j = 0; j < gains.size(); ++j) {
      if (!gains.has_block(i, j)) continue;
      const Mat2 b = gains.aggregate().block<2, 2>(ix(2 * i), ix(2 * j));
      out << i << ' ' << j << ' ' << g17(b(0, 0)) << ' ' << g17(b(0, 1)) << ' ' << g17(b(1, 0)) << ' '
          << g17(b(1, 1)) << '\n';
    }
  }
}

GainSet read_gain_file(std::istream& in) {
  std::map<std::pair<std::size_t, std::size_t>, Mat2> blocks;
  std::size_t n = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::size_t i = 0, j = 0;
    Mat2 b;
    if (!(ls >> i >> j >> b(0, 0) >> b(0, 1) >> b(1, 0) >> b(1, 1)))
      fail(ErrorCode::io, "gain file line " + std::to_string(line_no) + ": expected 'i j a11 a12 a21 a22'");
    std::string rest;
    if (ls >> rest) fail(ErrorCode::io, "gain file line " + std::to_string(line_no) + ": trailing data");
    if (!blocks.emplace(std::make_pair(i, j), b).second)
      fail(ErrorCode::io, "gain file line " + std::to_string(line_no) + ": duplicate block");
    n = std::max(n, std::max(i, j) + 1);
  }
  if (n == 0) fail(ErrorCode::io, "gain file contains no blocks");
  Adjacency adjacency(n);
  MatrixXd a = MatrixXd::Zero(ix(2 * n), ix(2 * n));
  for (const auto& [ij, b] : blocks) {
    if (ij.first != ij.second) adjacency.connect(ij.first, ij.second);
    a.block<2, 2>(ix(2 * ij.first), ix(2 * ij.second)) = b;
  }
  for (const auto& [ij, b] : blocks) {
    if (ij.first != ij.second && !blocks.contains({ij.second, ij.first}))
      fail(ErrorCode::io, "gain file lists A_" + std::to_string(ij.first) + "," + std::to_string(ij.second) +
                              " without its transpose partner");
  }
  return GainSet(std::move(a), std::move(adjacency));
}

}  // namespace visform::gains
