#include "visform/pose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <tuple>

#include <Eigen/Dense>

#include "pose_internal.hpp"
#include "visform/error.hpp"
#include "visform/rng.hpp"

namespace visform::pose {

using geometry::Rotation3;
using geometry::UnitQuaternion;
using Vec5 = Eigen::Matrix<double, 5, 1>;

Correspondence Correspondence::make(const Vec3& m, const Vec3& n) {
  if (!m.allFinite() || !n.allFinite()) fail(ErrorCode::invalid_argument, "correspondence bearings must be finite");
  if (m.z() != 1.0 || n.z() != 1.0) fail(ErrorCode::invalid_argument, "homogeneous bearings need third component 1");
  return {m, n};
}

Correspondence Correspondence::from_normalized(const Vec2& m, const Vec2& n) {
  return make(Vec3(m.x(), m.y(), 1.0), Vec3(n.x(), n.y(), 1.0));
}

PoseHypothesis PoseHypothesis::make(const UnitQuaternion& rotation, const Vec3& translation, double mean_residual) {
  const double norm = translation.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) fail(ErrorCode::invalid_argument, "translation must be nonzero");
  return {rotation, translation / norm, mean_residual};
}

PoseHypothesis PoseHypothesis::negated() const { return {rotation, -translation, mean_residual}; }

PoseHypothesis PoseHypothesis::twisted() const {
  const Mat3 flip = 2.0 * translation * translation.transpose() - Mat3::Identity();
  const Rotation3 r = Rotation3::nearest(flip * rotation_matrix().matrix());
  return {geometry::rotation_to_quat(r), translation, mean_residual};
}

double raw_epipolar_residual(const PoseHypothesis& h, const Correspondence& c) {
  return c.n.dot(h.translation.cross(h.rotation_matrix() * c.m));
}

double epipolar_residual(const PoseHypothesis& h, const Correspondence& c) {
  const Vec3 w = h.translation.cross(h.rotation_matrix() * c.m);
  const double wn = w.norm();
  if (!(wn > 1e-300)) return 0.0;
  return c.n.dot(w) / (c.n.norm() * wn);
}

std::vector<PoseHypothesis> solve_minimal(std::span<const Correspondence> cs, const MinimalOptions& options) {
  if (cs.size() != 5) fail(ErrorCode::invalid_argument, "solve_minimal needs exactly 5 correspondences");
  const auto ub = detail::unit_bearings(cs);

  // Data explained by a pure rotation (zero baseline included) leaves the
  // translation direction undefined.
  Mat3 cov = Mat3::Zero();
  for (const auto& b : ub) cov += b.b * b.a.transpose();
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 r_best = svd.matrixU() * d * svd.matrixV().transpose();
  double worst = 0.0;
  for (const auto& b : ub) worst = std::max(worst, (r_best * b.a - b.b).norm());
  if (worst < 1e-9) fail(ErrorCode::degenerate, "bearings are related by a pure rotation; baseline is zero");

  std::vector<PoseHypothesis> hs = options.backend == MinimalBackend::algebraic
                                       ? detail::solve_algebraic(ub)
                                       : detail::solve_multistart(ub, options.starts, options.seed);
  for (auto& h : hs) {
    double sum = 0.0;
    for (const auto& c : cs) sum += std::abs(epipolar_residual(h, c));
    h.mean_residual = sum / 5.0;
  }
  detail::canonicalize_solutions(hs);
  return hs;
}

DepthPair triangulate_depths(const PoseHypothesis& h, const Correspondence& c) {
  const Vec3 a = h.rotation_matrix() * c.m;
  if (a.normalized().cross(c.n.normalized()).norm() < 1e-12)
    fail(ErrorCode::no_parallax, "bearings are parallel after rotation");
  Eigen::Matrix<double, 3, 2> sys;
  sys.col(0) = a;
  sys.col(1) = -c.n;
  const Eigen::Vector2d uv = sys.colPivHouseholderQr().solve(-h.translation);
  DepthPair d;
  d.u = uv(0);
  d.v = uv(1);
  d.residual = (d.u * a + h.translation - d.v * c.n).norm();
  return d;
}

namespace {

struct Scored {
  PoseHypothesis h;
  std::size_t cheiral = 0;
  double mean = 0.0;
};

bool translation_less(const Vec3& a, const Vec3& b) {
  return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
}

}  // namespace

PoseHypothesis select_cheiral(std::span<const PoseHypothesis> hypotheses, std::span<const Correspondence> cs) {
  if (hypotheses.empty()) fail(ErrorCode::invalid_argument, "select_cheiral needs at least one hypothesis");
  std::vector<Scored> scored;
  for (const auto& h0 : hypotheses) {
    for (const PoseHypothesis& h : {h0, h0.negated()}) {
      const bool dup = std::any_of(scored.begin(), scored.end(), [&](const Scored& s) {
        return s.h.rotation == h.rotation && (s.h.translation - h.translation).cwiseAbs().maxCoeff() <= 1e-12;
      });
      if (dup) continue;
      Scored s{h, 0, 0.0};
      for (const auto& c : cs) {
        s.mean += std::abs(epipolar_residual(h, c));
        try {
          if (triangulate_depths(h, c).cheiral()) ++s.cheiral;
        } catch (const Error&) {
          // no parallax: counts as non-cheiral
        }
      }
      if (!cs.empty()) s.mean /= static_cast<double>(cs.size());
      scored.push_back(s);
    }
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.cheiral != b.cheiral) return a.cheiral > b.cheiral;
    if (a.mean != b.mean) return a.mean < b.mean;
    if (a.h.rotation.components() != b.h.rotation.components()) return a.h.rotation < b.h.rotation;
    return translation_less(a.h.translation, b.h.translation);
  });
  if (scored.size() > 1 && scored[0].cheiral == scored[1].cheiral && std::abs(scored[0].mean - scored[1].mean) <= 1e-12)
    fail(ErrorCode::ambiguous, "top hypotheses have equal cheirality and residual");
  return scored.front().h;
}

Eigen::Matrix<double, 3, 2> translation_tangent_basis(const Vec3& t) {
  // Cross with the axis least aligned with t.
  Eigen::Index axis = 0;
  t.cwiseAbs().minCoeff(&axis);
  const Vec3 e = Vec3::Unit(axis);
  const Vec3 b1 = t.cross(e).normalized();
  const Vec3 b2 = t.cross(b1).normalized();
  Eigen::Matrix<double, 3, 2> basis;
  basis << b1, b2;
  return basis;
}

PoseHypothesis retract(const PoseHypothesis& h, const Vec5& step) {
  const UnitQuaternion q = h.rotation * UnitQuaternion::exp(step.head<3>());
  const Vec3 t = h.translation + translation_tangent_basis(h.translation) * step.tail<2>();
  return PoseHypothesis::make(q, t, h.mean_residual);
}

RefinementCost refinement_cost(const PoseHypothesis& h, std::span<const Correspondence> cs) {
  const auto ub = detail::unit_bearings(cs);
  const Mat3 r = h.rotation_matrix().matrix();
  const auto tangent = translation_tangent_basis(h.translation);
  RefinementCost cost;
  for (const auto& b : ub) {
    Eigen::Matrix<double, 1, 5> jac;
    const double res = detail::angular_residual_and_jacobian(r, h.translation, tangent, b, &jac);
    cost.value += res * res;
    cost.gradient += 2.0 * res * jac.transpose();
  }
  return cost;
}

PoseHypothesis refine_pose(const PoseHypothesis& h0, std::span<const Correspondence> cs, int max_iterations) {
  const auto ub = detail::unit_bearings(cs);
  const auto evaluate = [&](const PoseHypothesis& h, Eigen::Matrix<double, 5, 5>* hess, Vec5* grad) {
    const Mat3 r = h.rotation_matrix().matrix();
    const auto tangent = translation_tangent_basis(h.translation);
    double cost = 0.0;
    if (hess != nullptr) {
      hess->setZero();
      grad->setZero();
    }
    for (const auto& b : ub) {
      Eigen::Matrix<double, 1, 5> jac;
      const double res = detail::angular_residual_and_jacobian(r, h.translation, tangent, b, hess ? &jac : nullptr);
      cost += res * res;
      if (hess != nullptr) {
        *hess += jac.transpose() * jac;
        *grad += res * jac.transpose();
      }
    }
    return cost;
  };

  PoseHypothesis h = h0;
  Eigen::Matrix<double, 5, 5> hess;
  Vec5 grad;
  double cost = evaluate(h, &hess, &grad);
  double lambda = 1e-4;
  for (int it = 0; it < max_iterations; ++it) {
    if (cost <= 1e-30 || grad.norm() <= 1e-18) break;
    double decrease = -1.0;
    while (lambda < 1e10) {
      Eigen::Matrix<double, 5, 5> damped = hess;
      damped.diagonal() += lambda * (hess.diagonal().array() + 1e-12).matrix();
      const Vec5 step = damped.ldlt().solve(-grad);
      const PoseHypothesis next = retract(h, step);
      const double next_cost = evaluate(next, nullptr, nullptr);
      if (next_cost < cost) {
        decrease = cost - next_cost;
        h = next;
        cost = evaluate(h, &hess, &grad);
        lambda = std::max(lambda * 0.1, 1e-15);
        break;
      }
      lambda *= 10.0;
    }
    if (decrease <= 1e-15 * cost) break;
  }
  double sum = 0.0;
  for (const auto& c : cs) sum += std::abs(epipolar_residual(h, c));
  h.mean_residual = cs.empty() ? 0.0 : sum / static_cast<double>(cs.size());
  return h;
}

std::size_t RansacResult::inlier_count() const {
  return static_cast<std::size_t>(std::count(inliers.begin(), inliers.end(), true));
}

std::vector<Correspondence> RansacResult::inlier_set(std::span<const Correspondence> cs) const {
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < cs.size() && i < inliers.size(); ++i)
    if (inliers[i]) out.push_back(cs[i]);
  return out;
}

namespace {

struct Consensus {
  std::size_t count = 0;  // inliers in front of both cameras
  double score = std::numeric_limits<double>::infinity();  // truncated squared residuals
  PoseHypothesis pose;    // sign / twist variant that maximizes count
};

// Depths of u R m + t = v n from the 2 x 2 normal equations; false without
// parallax.
bool depths(const Vec3& a, const Vec3& t, const Vec3& n, double& u, double& v) {
  const double aa = a.dot(a), an = a.dot(n), nn = n.dot(n);
  const double det = aa * nn - an * an;
  if (!(det > 1e-24 * aa * nn)) return false;
  const double ra = -a.dot(t), rn = n.dot(t);
  u = (nn * ra + an * rn) / det;
  v = (an * ra + aa * rn) / det;
  return true;
}

// Residual inliers of h, scored for each of h, -h, twisted(h), -twisted(h)
// by how many lie in front of both cameras. The residuals are shared by all
// four variants.
Consensus evaluate_consensus(const PoseHypothesis& h, std::span<const Correspondence> cs, double threshold,
                             std::vector<bool>* mask) {
  Consensus c;
  c.score = 0.0;
  const double t2 = threshold * threshold;
  const PoseHypothesis tw = h.twisted();
  const Mat3 r = h.rotation_matrix().matrix();
  const Mat3 rt = tw.rotation_matrix().matrix();
  const Vec3& t = h.translation;
  std::vector<std::uint8_t> in(cs.size(), 0);  // bit k: cheiral for variant k
  std::array<std::size_t, 4> counts{};
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const Vec3 a = r * cs[i].m;
    const Vec3 w = t.cross(a);
    const double wn = w.norm();
    const double res = wn > 1e-300 ? cs[i].n.dot(w) / (cs[i].n.norm() * wn) : 0.0;
    c.score += std::min(res * res, t2);
    if (std::abs(res) > threshold) continue;
    std::uint8_t bits = 0;
    double u = 0.0, v = 0.0;
    if (depths(a, t, cs[i].n, u, v)) {
      if (u > 0.0 && v > 0.0) bits |= 1;
      if (u < 0.0 && v < 0.0) bits |= 2;
    }
    if (depths(rt * cs[i].m, t, cs[i].n, u, v)) {
      if (u > 0.0 && v > 0.0) bits |= 4;
      if (u < 0.0 && v < 0.0) bits |= 8;
    }
    in[i] = static_cast<std::uint8_t>(bits | 16);
    for (std::size_t k = 0; k < 4; ++k)
      if (bits & (1U << k)) ++counts[k];
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < 4; ++k)
    if (counts[k] > counts[best]) best = k;
  c.count = counts[best];
  c.pose = best == 0 ? h : best == 1 ? h.negated() : best == 2 ? tw : tw.negated();
  if (mask != nullptr) {
    mask->assign(cs.size(), false);
    for (std::size_t i = 0; i < cs.size(); ++i) (*mask)[i] = (in[i] & (1U << best)) != 0;
  }
  return c;
}

std::vector<Correspondence> select(std::span<const Correspondence> cs, const std::vector<bool>& mask) {
  std::vector<Correspondence> out;
  for (std::size_t i = 0; i < cs.size(); ++i)
    if (mask[i]) out.push_back(cs[i]);
  return out;
}

}  // namespace

RansacResult ransac_pose(std::span<const Correspondence> input, const RansacParams& params) {
  constexpr std::size_t kSample = 5;
  if (input.size() < kSample) fail(ErrorCode::invalid_argument, "ransac_pose needs at least 5 correspondences");
  if (!(params.threshold > 0.0)) fail(ErrorCode::invalid_argument, "ransac threshold must be positive");
  if (!(params.confidence > 0.0 && params.confidence < 1.0))
    fail(ErrorCode::invalid_argument, "ransac confidence must be in (0, 1)");

  // Canonical order makes sampling independent of the caller's ordering.
  std::vector<std::size_t> order(input.size());
  std::iota(order.begin(), order.end(), 0);
  const auto key = [&](std::size_t i) {
    const auto& c = input[i];
    return std::make_tuple(c.m.x(), c.m.y(), c.n.x(), c.n.y());
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  std::vector<Correspondence> cs;
  cs.reserve(input.size());
  for (std::size_t i : order) cs.push_back(input[i]);

  const std::size_t n = cs.size();
  Consensus best;
  best.count = 0;
  long needed = params.max_iterations;
  int it = 0;
  for (; it < params.max_iterations && it < needed; ++it) {
    CounterRng rng(derive_seed(params.seed, {static_cast<std::uint64_t>(it)}));
    std::array<std::size_t, kSample> idx{};
    for (std::size_t k = 0; k < kSample; ++k) {
      std::size_t candidate = rng.index(n);
      while (std::find(idx.begin(), idx.begin() + static_cast<long>(k), candidate) != idx.begin() + static_cast<long>(k))
        candidate = rng.index(n);
      idx[k] = candidate;
    }
    std::array<Correspondence, kSample> sample;
    for (std::size_t k = 0; k < kSample; ++k) sample[k] = cs[idx[k]];

    std::vector<PoseHypothesis> hyps;
    try {
      MinimalOptions mo;
      mo.backend = params.backend;
      mo.seed = derive_seed(params.seed, {static_cast<std::uint64_t>(it), tag("multistart")});
      hyps = solve_minimal(sample, mo);
    } catch (const Error&) {
      continue;  // degenerate sample
    }
    for (const auto& h : hyps) {
      const Consensus c = evaluate_consensus(h, cs, params.threshold, nullptr);
      if (c.count > best.count || (c.count == best.count && c.score < best.score)) {
        best = c;
        const double w = static_cast<double>(best.count) / static_cast<double>(n);
        const double p_good = std::pow(w, static_cast<double>(kSample));
        if (p_good >= 1.0 - 1e-15) {
          needed = it + 1;
        } else if (p_good > 0.0) {
          const double req = std::log(1.0 - params.confidence) / std::log(1.0 - p_good);
          needed = static_cast<long>(std::min(std::ceil(req), static_cast<double>(params.max_iterations)));
        }
      }
    }
  }

  if (best.count < kSample) fail(ErrorCode::no_consensus, "no hypothesis reached 5 inliers");

  std::vector<bool> mask;
  PoseHypothesis pose = evaluate_consensus(best.pose, cs, params.threshold, &mask).pose;
  if (params.refine) {
    for (int round = 0; round < 3; ++round) {
      const PoseHypothesis refined = refine_pose(pose, select(cs, mask), 50);
      std::vector<bool> refined_mask;
      const Consensus c = evaluate_consensus(refined, cs, params.threshold, &refined_mask);
      if (c.count < kSample) break;
      pose = c.pose;
      const bool stable = refined_mask == mask;
      mask = std::move(refined_mask);
      if (stable) break;
    }
  }
  std::vector<bool> final_mask;
  pose = evaluate_consensus(pose, cs, params.threshold, &final_mask).pose;
  if (static_cast<std::size_t>(std::count(final_mask.begin(), final_mask.end(), true)) < kSample)
    fail(ErrorCode::no_consensus, "refined pose lost consensus");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!final_mask[i]) continue;
    sum += std::abs(epipolar_residual(pose, cs[i]));
    ++count;
  }
  pose.mean_residual = sum / static_cast<double>(count);

  RansacResult result;
  result.pose = pose;
  result.iterations = it;
  result.threshold = params.threshold;
  result.inliers.assign(n, false);
  for (std::size_t k = 0; k < n; ++k) result.inliers[order[k]] = final_mask[k];
  return result;
}

double recover_scale(const PoseHypothesis& h, std::span<const Correspondence> inliers, double altitude,
                     const Rotation3& camera_orientation) {
  if (!(altitude > 0.0)) fail(ErrorCode::invalid_argument, "altitude must be positive");
  std::vector<double> drops;
  for (const auto& c : inliers) {
    DepthPair d;
    try {
      d = triangulate_depths(h, c);
    } catch (const Error&) {
      continue;
    }
    if (!d.cheiral()) continue;
    const Vec3 world = camera_orientation.transpose() * (d.u * c.m);
    drops.push_back(-world.z());
  }
  if (drops.empty()) fail(ErrorCode::unobservable, "no cheiral inliers to measure the ground");
  std::sort(drops.begin(), drops.end());
  const std::size_t mid = drops.size() / 2;
  const double median = drops.size() % 2 == 1 ? drops[mid] : 0.5 * (drops[mid - 1] + drops[mid]);
  if (!(median > 1e-9)) fail(ErrorCode::unobservable, "median vertical drop is not positive; ground not observed");
  return altitude / median;
}

Vec2 relative_position(const PoseHypothesis& h, double scale, const Rotation3& mounting) {
  if (!(scale > 0.0) || !std::isfinite(scale)) fail(ErrorCode::invalid_argument, "scale must be positive");
  const Vec3 body = mounting.transpose() * (scale * h.translation);
  return body.head<2>();
}

PoseError pose_error(const PoseHypothesis& estimate, const Rotation3& rotation, const Vec3& translation) {
  return {geometry::rotation_angle_between(estimate.rotation_matrix(), rotation),
          geometry::angle_between(estimate.translation, translation)};
}

}  // namespace visform::pose
