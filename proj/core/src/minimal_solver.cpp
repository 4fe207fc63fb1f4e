// Five-point relative pose solvers.
//
// The algebraic backend follows the classic essential-matrix route: the
// constraints n_i^T E m_i = 0 leave a 4-dimensional null space
// E = x X + y Y + z Z + W, and det(E) = 0 together with
// 2 E E^T E - tr(E E^T) E = 0 give ten cubics in (x, y, z). Eliminating the
// ten cubic monomials leaves a multiplication-by-x action matrix on the
// basis {x^2, xy, xz, y^2, yz, z^2, x, y, z, 1}; its real eigenvectors are
// the solutions.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

#include <Eigen/Dense>

#include "pose_internal.hpp"
#include "visform/error.hpp"

namespace visform::pose::detail {

namespace {

using Eigen::Index;

// Monomials of degree <= 3 in (x, y, z): the ten cubics first, then the
// action-matrix basis.
constexpr std::array<std::array<int, 3>, 20> kMonomials{{
    {3, 0, 0}, {2, 1, 0}, {2, 0, 1}, {1, 2, 0}, {1, 1, 1},
    {1, 0, 2}, {0, 3, 0}, {0, 2, 1}, {0, 1, 2}, {0, 0, 3},
    {2, 0, 0}, {1, 1, 0}, {1, 0, 1}, {0, 2, 0}, {0, 1, 1},
    {0, 0, 2}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 0, 0},
}};

constexpr auto kMonomialIndex = [] {
  std::array<std::array<std::array<int, 4>, 4>, 4> idx{};
  for (auto& a : idx)
    for (auto& b : a)
      for (auto& c : b) c = -1;
  for (int k = 0; k < 20; ++k) idx[kMonomials[k][0]][kMonomials[k][1]][kMonomials[k][2]] = k;
  return idx;
}();

struct Poly {
  std::array<double, 20> c{};

  Poly& operator+=(const Poly& o) {
    for (std::size_t k = 0; k < 20; ++k) c[k] += o.c[k];
    return *this;
  }
  Poly& operator-=(const Poly& o) {
    for (std::size_t k = 0; k < 20; ++k) c[k] -= o.c[k];
    return *this;
  }
  friend Poly operator*(double s, Poly p) {
    for (double& v : p.c) v *= s;
    return p;
  }
  friend Poly operator+(Poly a, const Poly& b) { return a += b; }
  friend Poly operator-(Poly a, const Poly& b) { return a -= b; }
  friend Poly operator*(const Poly& a, const Poly& b) {
    Poly out;
    for (std::size_t i = 0; i < 20; ++i) {
      if (a.c[i] == 0.0) continue;
      for (std::size_t j = 0; j < 20; ++j) {
        if (b.c[j] == 0.0) continue;
        const int ex = kMonomials[i][0] + kMonomials[j][0];
        const int ey = kMonomials[i][1] + kMonomials[j][1];
        const int ez = kMonomials[i][2] + kMonomials[j][2];
        // Only linear * quadratic and linear * linear products occur.
        out.c[static_cast<std::size_t>(kMonomialIndex[ex][ey][ez])] += a.c[i] * b.c[j];
      }
    }
    return out;
  }
};

Poly linear(double x, double y, double z, double w) {
  Poly p;
  p.c[16] = x;
  p.c[17] = y;
  p.c[18] = z;
  p.c[19] = w;
  return p;
}

using Mat3Poly = std::array<std::array<Poly, 3>, 3>;

void add_solutions_from_essential(const Mat3& e, std::vector<PoseHypothesis>& out) {
  Eigen::JacobiSVD<Mat3> svd(e, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  if (u.determinant() < 0.0) u = -u;
  if (v.determinant() < 0.0) v = -v;
  Mat3 w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Vec3 t = u.col(2);
  for (const Mat3& r : {Mat3(u * w * v.transpose()), Mat3(u * w.transpose() * v.transpose())}) {
    const auto q = geometry::rotation_to_quat(geometry::Rotation3::nearest(r));
    out.push_back(PoseHypothesis::make(q, t));
  }
}

}  // namespace

std::vector<UnitBearings> unit_bearings(std::span<const Correspondence> cs) {
  std::vector<UnitBearings> ub;
  ub.reserve(cs.size());
  for (const auto& c : cs) ub.push_back({c.m.normalized(), c.n.normalized()});
  return ub;
}

bool polish_root(PoseHypothesis& h, std::span<const UnitBearings> ub, double tolerance, int iterations) {
  const auto evaluate = [&](const PoseHypothesis& p, Eigen::MatrixXd* jac, Eigen::VectorXd& r) {
    const Mat3 rot = p.rotation_matrix().matrix();
    const auto tangent = translation_tangent_basis(p.translation);
    r.resize(static_cast<Index>(ub.size()));
    if (jac != nullptr) jac->resize(static_cast<Index>(ub.size()), 5);
    for (std::size_t i = 0; i < ub.size(); ++i) {
      Eigen::Matrix<double, 1, 5> row;
      r(static_cast<Index>(i)) = residual_and_jacobian(rot, p.translation, tangent, ub[i], jac ? &row : nullptr);
      if (jac != nullptr) jac->row(static_cast<Index>(i)) = row;
    }
  };
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  evaluate(h, &jac, r);
  double err = r.cwiseAbs().maxCoeff();
  for (int it = 0; it < iterations && err > 1e-15; ++it) {
    const Eigen::Matrix<double, 5, 1> step = jac.colPivHouseholderQr().solve(-r);
    if (!step.allFinite()) break;
    const PoseHypothesis next = retract(h, step);
    Eigen::VectorXd rn;
    evaluate(next, nullptr, rn);
    const double next_err = rn.cwiseAbs().maxCoeff();
    if (!(next_err < err)) break;
    h = next;
    err = next_err;
    evaluate(h, &jac, r);
  }
  return err <= tolerance;
}

std::vector<PoseHypothesis> solve_algebraic(std::span<const UnitBearings> ub) {
  // Padded to 9 x 9 so V is square; the zero rows do not change the null space.
  Eigen::Matrix<double, 9, 9> q = Eigen::Matrix<double, 9, 9>::Zero();
  for (Index i = 0; i < 5; ++i) {
    const auto& a = ub[static_cast<std::size_t>(i)].a;
    const auto& b = ub[static_cast<std::size_t>(i)].b;
    for (Index r = 0; r < 3; ++r)
      for (Index c = 0; c < 3; ++c) q(i, 3 * r + c) = b(r) * a(c);
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 9, 9>> svd(q, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(4) > 1e-12 * sv(0))) fail(ErrorCode::degenerate, "epipolar constraint matrix is rank deficient");
  const Eigen::Matrix<double, 9, 9> v = svd.matrixV();

  Mat3Poly e;
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) {
      const Index k = static_cast<Index>(3 * r + c);
      e[r][c] = linear(v(k, 5), v(k, 6), v(k, 7), v(k, 8));
    }

  std::array<Poly, 10> eqs;
  eqs[0] = e[0][0] * (e[1][1] * e[2][2] - e[1][2] * e[2][1]) - e[0][1] * (e[1][0] * e[2][2] - e[1][2] * e[2][0]) +
           e[0][2] * (e[1][0] * e[2][1] - e[1][1] * e[2][0]);
  Mat3Poly eet;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) eet[i][j] = e[i][0] * e[j][0] + e[i][1] * e[j][1] + e[i][2] * e[j][2];
  const Poly trace = eet[0][0] + eet[1][1] + eet[2][2];
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      eqs[1 + 3 * i + j] = 2.0 * (eet[i][0] * e[0][j] + eet[i][1] * e[1][j] + eet[i][2] * e[2][j]) - trace * e[i][j];

  Eigen::Matrix<double, 10, 20> c;
  for (Index r = 0; r < 10; ++r)
    for (Index k = 0; k < 20; ++k) c(r, k) = eqs[static_cast<std::size_t>(r)].c[static_cast<std::size_t>(k)];

  const Eigen::Matrix<double, 10, 10> lead = c.leftCols<10>();
  Eigen::FullPivLU<Eigen::Matrix<double, 10, 10>> lu(lead);
  if (!lu.isInvertible() || lu.rcond() < 1e-13) fail(ErrorCode::degenerate, "cubic elimination is singular");
  const Eigen::Matrix<double, 10, 10> g = lu.solve(c.rightCols<10>());

  // Row l holds x * basis_l expressed in the basis.
  Eigen::Matrix<double, 10, 10> action = Eigen::Matrix<double, 10, 10>::Zero();
  for (Index l = 0; l < 6; ++l) action.row(l) = -g.row(l);
  action(6, 0) = 1.0;
  action(7, 1) = 1.0;
  action(8, 2) = 1.0;
  action(9, 6) = 1.0;

  Eigen::EigenSolver<Eigen::Matrix<double, 10, 10>> es(action);
  if (es.info() != Eigen::Success) fail(ErrorCode::degenerate, "action matrix eigen decomposition failed");

  std::vector<PoseHypothesis> out;
  for (Index k = 0; k < 10; ++k) {
    const std::complex<double> lambda = es.eigenvalues()(k);
    if (std::abs(lambda.imag()) > 1e-8 * std::max(1.0, std::abs(lambda.real()))) continue;
    const Eigen::Matrix<std::complex<double>, 10, 1> vec = es.eigenvectors().col(k);
    if (std::abs(vec(9)) < 1e-12 * vec.norm()) continue;
    const double x = (vec(6) / vec(9)).real();
    const double y = (vec(7) / vec(9)).real();
    const double z = (vec(8) / vec(9)).real();
    Mat3 ess;
    for (Index r = 0; r < 3; ++r)
      for (Index col = 0; col < 3; ++col) {
        const Index i = 3 * r + col;
        ess(r, col) = x * v(i, 5) + y * v(i, 6) + z * v(i, 7) + v(i, 8);
      }
    if (!ess.allFinite()) continue;
    add_solutions_from_essential(ess, out);
  }
  for (auto& h : out) polish_root(h, ub, 1e-9, 4);
  return out;
}

namespace {

double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double result = 0.0;
  double f = 1.0 / static_cast<double>(base);
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= static_cast<double>(base);
  }
  return result;
}

// Shoemake's uniform map from the unit cube to unit quaternions, fed with a
// Halton sequence in bases 2, 3, 5.
geometry::UnitQuaternion quasi_random_rotation(std::uint64_t index) {
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  const double u1 = radical_inverse(index, 2);
  const double u2 = radical_inverse(index, 3);
  const double u3 = radical_inverse(index, 5);
  const double a = std::sqrt(1.0 - u1);
  const double b = std::sqrt(u1);
  return geometry::UnitQuaternion::from_components(b * std::cos(kTwoPi * u3), a * std::sin(kTwoPi * u2),
                                                   a * std::cos(kTwoPi * u2), b * std::sin(kTwoPi * u3));
}

}  // namespace

std::vector<PoseHypothesis> solve_multistart(std::span<const UnitBearings> ub, int starts, std::uint64_t seed) {
  std::vector<PoseHypothesis> out;
  for (int s = 0; s < starts; ++s) {
    const auto q0 = quasi_random_rotation(seed * static_cast<std::uint64_t>(starts) + static_cast<std::uint64_t>(s) + 1);
    const Mat3 r0 = geometry::quat_to_rotation(q0).matrix();
    // Eliminate t: it must be orthogonal to every R m_i x n_i.
    Mat3 wtw = Mat3::Zero();
    for (const auto& b : ub) {
      const Vec3 w = (r0 * b.a).cross(b.b);
      wtw += w * w.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(wtw);
    PoseHypothesis h = PoseHypothesis::make(q0, es.eigenvectors().col(0));

    // Levenberg-Marquardt descent into the basin, then Newton to the root.
    double lambda = 1e-3;
    for (int it = 0; it < 60; ++it) {
      const Mat3 rot = h.rotation_matrix().matrix();
      const auto tangent = translation_tangent_basis(h.translation);
      Eigen::Matrix<double, 5, 5> jac;
      Eigen::Matrix<double, 5, 1> res;
      for (Index i = 0; i < 5; ++i) {
        Eigen::Matrix<double, 1, 5> row;
        res(i) = residual_and_jacobian(rot, h.translation, tangent, ub[static_cast<std::size_t>(i)], &row);
        jac.row(i) = row;
      }
      const double cost = res.squaredNorm();
      if (cost < 1e-26) break;
      const Eigen::Matrix<double, 5, 5> hess = jac.transpose() * jac;
      const Eigen::Matrix<double, 5, 1> grad = jac.transpose() * res;
      bool improved = false;
      while (lambda < 1e8) {
        Eigen::Matrix<double, 5, 5> damped = hess;
        damped.diagonal().array() += lambda * (1.0 + hess.diagonal().array());
        const Eigen::Matrix<double, 5, 1> step = damped.ldlt().solve(-grad);
        const PoseHypothesis next = retract(h, step);
        const Mat3 rn = next.rotation_matrix().matrix();
        const auto tn = translation_tangent_basis(next.translation);
        double next_cost = 0.0;
        for (const auto& b : ub) {
          const double r = residual_and_jacobian(rn, next.translation, tn, b, nullptr);
          next_cost += r * r;
        }
        if (next_cost < cost) {
          h = next;
          lambda = std::max(lambda * 0.1, 1e-12);
          improved = true;
          break;
        }
        lambda *= 10.0;
      }
      if (!improved) break;
    }
    if (polish_root(h, ub, 1e-10, 8)) {
      out.push_back(h);
      out.push_back(h.twisted());
    }
  }
  return out;
}

void canonicalize_solutions(std::vector<PoseHypothesis>& hs) {
  const auto less = [](const PoseHypothesis& a, const PoseHypothesis& b) {
    if (a.rotation.components() != b.rotation.components()) return a.rotation < b.rotation;
    return std::lexicographical_compare(a.translation.data(), a.translation.data() + 3, b.translation.data(),
                                        b.translation.data() + 3);
  };
  std::sort(hs.begin(), hs.end(), less);
  std::vector<PoseHypothesis> unique;
  for (const auto& h : hs) {
    const bool dup = std::any_of(unique.begin(), unique.end(), [&](const PoseHypothesis& u) {
      double dq = 0.0;
      for (std::size_t k = 0; k < 4; ++k) dq = std::max(dq, std::abs(u.rotation.components()[k] - h.rotation.components()[k]));
      const double dt = std::min((u.translation - h.translation).cwiseAbs().maxCoeff(),
                                 (u.translation + h.translation).cwiseAbs().maxCoeff());
      return dq < 1e-6 && dt < 1e-6;
    });
    if (!dup) unique.push_back(h);
  }
  hs = std::move(unique);
}

}  // namespace visform::pose::detail
