#include "visform/percept.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Core>

#include "visform/error.hpp"
#include "visform/rng.hpp"

namespace visform::percept {

void WorldParams::validate() const {
  if (count == 0) fail(ErrorCode::invalid_argument, "world needs at least one landmark");
  if (!(upper.x() > lower.x() && upper.y() > lower.y()) || !lower.allFinite() || !upper.allFinite())
    fail(ErrorCode::invalid_argument, "world bounds are empty");
  if (clutter > 0 && !(clutter_height > 0.0)) fail(ErrorCode::invalid_argument, "clutter height must be positive");
}

World generate_world(const WorldParams& params, std::uint64_t seed) {
  params.validate();
  World w{params, seed, {}};
  CounterRng rng(derive_seed(seed, {tag("world")}));
  const std::size_t total = params.count + params.clutter;
  if (total > std::numeric_limits<std::uint32_t>::max()) fail(ErrorCode::invalid_argument, "too many landmarks");
  w.landmarks.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    Landmark l;
    l.id = static_cast<std::uint32_t>(i);
    l.position.x() = rng.uniform(params.lower.x(), params.upper.x());
    l.position.y() = rng.uniform(params.lower.y(), params.upper.y());
    l.position.z() = i < params.count ? 0.0 : params.clutter_height * (1.0 - rng.uniform());
    w.landmarks.push_back(l);
  }
  return w;
}

Descriptor landmark_descriptor(std::uint32_t id) {
  CounterRng rng(derive_seed(tag("descriptor"), {id}));
  std::array<double, kDescriptorLength> v{};
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  Descriptor d{};
  for (std::size_t k = 0; k < kDescriptorLength; ++k) d[k] = static_cast<float>(v[k] / norm);
  return d;
}

std::vector<FeaturePoint> capture(const World& world, const geometry::CameraPose& camera,
                                  const geometry::CameraIntrinsics& intrinsics, const CaptureNoise& noise,
                                  std::uint64_t seed) {
  if (!(noise.pixel_sigma >= 0.0) || !(noise.descriptor_sigma >= 0.0))
    fail(ErrorCode::invalid_argument, "noise sigmas must be nonnegative");
  intrinsics.validate();
  std::vector<FeaturePoint> out;
  for (const auto& l : world.landmarks) {
    const auto px = geometry::project(intrinsics, camera, l.position);
    if (!px) continue;
    // One stream per landmark so a feature's noise does not depend on which
    // other landmarks happen to be visible.
    CounterRng rng(derive_seed(seed, {l.id}));
    Vec2 p = *px;
    if (noise.pixel_sigma > 0.0) {
      const double dx = rng.normal();
      const double dy = rng.normal();
      p += noise.pixel_sigma * Vec2(dx, dy);
    }
    FeaturePoint f;
    f.pixel = {static_cast<float>(p.x()), static_cast<float>(p.y())};
    if (!(f.pixel[0] >= 0.0f && f.pixel[0] < static_cast<float>(intrinsics.width) && f.pixel[1] >= 0.0f &&
          f.pixel[1] < static_cast<float>(intrinsics.height)))
      continue;
    const Descriptor base = landmark_descriptor(l.id);
    if (noise.descriptor_sigma > 0.0) {
      std::array<double, kDescriptorLength> v{};
      double norm = 0.0;
      for (std::size_t k = 0; k < kDescriptorLength; ++k) {
        v[k] = base[k] + noise.descriptor_sigma * rng.normal();
        norm += v[k] * v[k];
      }
      norm = std::sqrt(norm);
      for (std::size_t k = 0; k < kDescriptorLength; ++k) f.descriptor[k] = static_cast<float>(v[k] / norm);
    } else {
      f.descriptor = base;
    }
    f.landmark = l.id;
    out.push_back(f);
  }
  return out;
}

namespace {

using DescMatrix = Eigen::Matrix<float, Eigen::Dynamic, static_cast<int>(kDescriptorLength), Eigen::RowMajor>;

DescMatrix stack(std::span<const FeaturePoint> fs) {
  DescMatrix m(static_cast<Eigen::Index>(fs.size()), static_cast<Eigen::Index>(kDescriptorLength));
  for (std::size_t i = 0; i < fs.size(); ++i)
    for (std::size_t k = 0; k < kDescriptorLength; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = fs[i].descriptor[k];
  return m;
}

struct Nearest {
  Eigen::Index best = -1;
  float d1 = std::numeric_limits<float>::infinity();  // squared distances
  float d2 = std::numeric_limits<float>::infinity();
};

// Best and runner-up squared distance per row (or per column) of d2.
template <bool Rows>
std::vector<Nearest> nearest(const Eigen::MatrixXf& d2) {
  const Eigen::Index outer = Rows ? d2.rows() : d2.cols();
  const Eigen::Index inner = Rows ? d2.cols() : d2.rows();
  std::vector<Nearest> out(static_cast<std::size_t>(outer));
  for (Eigen::Index i = 0; i < outer; ++i) {
    Nearest& n = out[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < inner; ++j) {
      const float d = Rows ? d2(i, j) : d2(j, i);
      if (d < n.d1) {
        n.d2 = n.d1;
        n.d1 = d;
        n.best = j;
      } else if (d < n.d2) {
        n.d2 = d;
      }
    }
  }
  return out;
}

bool same_landmark(const FeaturePoint& a, const FeaturePoint& b) { return a.landmark >= 0 && a.landmark == b.landmark; }

}  // namespace

MatchResult match_features(std::span<const FeaturePoint> a, std::span<const FeaturePoint> b, double rho,
                           std::uint64_t seed, const geometry::CameraIntrinsics& intrinsics) {
  if (!(rho >= 0.0 && rho < 1.0)) fail(ErrorCode::invalid_argument, "mismatch rate must be in [0, 1)");
  MatchResult r;
  if (a.empty() || b.empty()) return r;

  const DescMatrix da = stack(a);
  const DescMatrix db = stack(b);
  Eigen::MatrixXf d2 = (-2.0f * (da * db.transpose())).eval();
  d2.colwise() += da.rowwise().squaredNorm();
  d2.rowwise() += db.rowwise().squaredNorm().transpose();
  d2 = d2.cwiseMax(0.0f);

  const auto from_a = nearest<true>(d2);
  const auto from_b = nearest<false>(d2);
  // Ratio test on distances: d1 < 0.8 d2, i.e. d1^2 < 0.64 d2^2.
  const float ratio2 = kRatioTest * kRatioTest;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Nearest& n = from_a[i];
    if (n.best < 0 || !(n.d1 < ratio2 * n.d2)) continue;
    const auto j = static_cast<std::size_t>(n.best);
    const Nearest& back = from_b[j];
    if (back.best != static_cast<Eigen::Index>(i) || !(back.d1 < ratio2 * back.d2)) continue;
    r.index_a.push_back(i);
    r.index_b.push_back(j);
  }

  const std::size_t matches = r.index_a.size();
  const auto k = static_cast<std::size_t>(std::llround(rho * static_cast<double>(matches)));
  if (k > 0) {
    CounterRng rng(derive_seed(seed, {tag("mismatch")}));
    std::vector<std::size_t> order(matches);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = matches - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
    std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(chosen.begin(), chosen.end());
    if (k >= 2) {
      std::vector<std::size_t> shifted(k);
      for (std::size_t s = 0; s < k; ++s) shifted[s] = r.index_b[chosen[(s + 1) % k]];
      for (std::size_t s = 0; s < k; ++s) r.index_b[chosen[s]] = shifted[s];
    } else {
      // A single mismatch needs an unused partner; without one nothing is rewired.
      std::vector<bool> used(b.size(), false);
      for (std::size_t j : r.index_b) used[j] = true;
      std::vector<std::size_t> free;
      for (std::size_t j = 0; j < b.size(); ++j)
        if (!used[j] && !same_landmark(a[r.index_a[chosen[0]]], b[j])) free.push_back(j);
      if (!free.empty()) r.index_b[chosen[0]] = free[rng.index(free.size())];
    }
  }

  r.correspondences.reserve(matches);
  r.correct.reserve(matches);
  for (std::size_t s = 0; s < matches; ++s) {
    const FeaturePoint& fa = a[r.index_a[s]];
    const FeaturePoint& fb = b[r.index_b[s]];
    r.correspondences.push_back(pose::Correspondence::make(geometry::backproject(fa.pixel_d(), intrinsics),
                                                           geometry::backproject(fb.pixel_d(), intrinsics)));
    r.correct.push_back(same_landmark(fa, fb));
  }
  return r;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xffU));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (std::size_t k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(in[offset + k]) << (8 * k);
  return v;
}

}  // namespace

std::size_t message_size(std::size_t features) { return kHeaderBytes + kFeatureBytes * features; }

std::vector<std::uint8_t> encode_message(const FeatureMessage& message) {
  if (message.features.size() > std::numeric_limits<std::uint32_t>::max())
    fail(ErrorCode::invalid_argument, "too many features for one message");
  std::vector<std::uint8_t> out;
  out.reserve(message_size(message.features.size()));
  put_u32(out, message.sender);
  put_u32(out, message.frame);
  put_u32(out, static_cast<std::uint32_t>(message.features.size()));
  put_u32(out, message.reserved);
  for (const auto& f : message.features) {
    put_u32(out, std::bit_cast<std::uint32_t>(f.pixel[0]));
    put_u32(out, std::bit_cast<std::uint32_t>(f.pixel[1]));
    for (float d : f.descriptor) put_u32(out, std::bit_cast<std::uint32_t>(d));
  }
  return out;
}

FeatureMessage decode_message(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) fail(ErrorCode::malformed_message, "message shorter than its header");
  FeatureMessage m;
  m.sender = get_u32(bytes, 0);
  m.frame = get_u32(bytes, 4);
  const std::uint32_t count = get_u32(bytes, 8);
  m.reserved = get_u32(bytes, 12);
  const std::size_t payload = bytes.size() - kHeaderBytes;
  if (payload % kFeatureBytes != 0 || payload / kFeatureBytes != count)
    fail(ErrorCode::malformed_message, "message length " + std::to_string(bytes.size()) + " does not match count " +
                                           std::to_string(count));
  m.features.resize(count);
  std::size_t off = kHeaderBytes;
  for (auto& f : m.features) {
    f.pixel[0] = std::bit_cast<float>(get_u32(bytes, off));
    f.pixel[1] = std::bit_cast<float>(get_u32(bytes, off + 4));
    off += 8;
    for (float& d : f.descriptor) {
      d = std::bit_cast<float>(get_u32(bytes, off));
      off += 4;
    }
  }
  return m;
}

double bandwidth(double features_per_frame, double frames_per_second) {
  if (!(features_per_frame >= 0.0) || !(frames_per_second >= 0.0))
    fail(ErrorCode::invalid_argument, "bandwidth inputs must be nonnegative");
  return (static_cast<double>(kHeaderBytes) + static_cast<double>(kFeatureBytes) * features_per_frame) *
         frames_per_second;
}

}  // namespace visform::percept
