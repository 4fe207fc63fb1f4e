#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "visform/agent.hpp"
#include "visform/error.hpp"
#include "visform/percept.hpp"
#include "visform/rng.hpp"

using namespace visform;
using namespace visform::percept;
using geometry::CameraIntrinsics;
using geometry::CameraPose;

namespace {

CameraPose downward_at(const Vec3& position, double yaw = 0.0) {
  return agent::AgentState::make(0, position, yaw, geometry::downward_mounting()).camera_pose();
}

World dense_world(std::size_t count, std::uint64_t seed) {
  WorldParams p;
  p.lower = Vec2(-20, -20);
  p.upper = Vec2(20, 20);
  p.count = count;
  return generate_world(p, seed);
}

FeatureMessage random_message(CounterRng& rng) {
  FeatureMessage m;
  m.sender = static_cast<std::uint32_t>(rng.next_u64());
  m.frame = static_cast<std::uint32_t>(rng.next_u64());
  m.reserved = static_cast<std::uint32_t>(rng.next_u64());
  m.features.resize(rng.index(40));
  for (auto& f : m.features) {
    // Arbitrary bit patterns, NaN payloads and infinities included.
    for (float& x : f.pixel) {
      const auto bits = static_cast<std::uint32_t>(rng.next_u64());
      std::memcpy(&x, &bits, sizeof x);
    }
    for (float& x : f.descriptor) {
      const auto bits = static_cast<std::uint32_t>(rng.next_u64());
      std::memcpy(&x, &bits, sizeof x);
    }
  }
  return m;
}

bool same_bits(const FeatureMessage& a, const FeatureMessage& b) {
  if (a.sender != b.sender || a.frame != b.frame || a.reserved != b.reserved) return false;
  if (a.features.size() != b.features.size()) return false;
  for (std::size_t i = 0; i < a.features.size(); ++i) {
    if (std::memcmp(a.features[i].pixel.data(), b.features[i].pixel.data(), sizeof(float) * 2) != 0) return false;
    if (std::memcmp(a.features[i].descriptor.data(), b.features[i].descriptor.data(),
                    sizeof(float) * kDescriptorLength) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST(World, Generation) {
  WorldParams p;
  p.lower = Vec2(-50, -50);
  p.upper = Vec2(50, 50);
  p.count = 500;
  const World a = generate_world(p, 3), b = generate_world(p, 3);
  ASSERT_EQ(a.landmarks.size(), 500u);
  for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
    EXPECT_EQ(a.landmarks[i].id, i);
    EXPECT_EQ(a.landmarks[i].position, b.landmarks[i].position);
    const Vec3& x = a.landmarks[i].position;
    EXPECT_GE(x.x(), -50.0);
    EXPECT_LE(x.x(), 50.0);
    EXPECT_GE(x.y(), -50.0);
    EXPECT_LE(x.y(), 50.0);
    EXPECT_EQ(x.z(), 0.0);
  }
  EXPECT_NE(generate_world(p, 4).landmarks[0].position, a.landmarks[0].position);

  p.clutter = 100;
  p.clutter_height = 6.0;
  const World c = generate_world(p, 3);
  ASSERT_EQ(c.landmarks.size(), 600u);
  for (std::size_t i = 500; i < 600; ++i) {
    EXPECT_GT(c.landmarks[i].position.z(), 0.0);
    EXPECT_LE(c.landmarks[i].position.z(), 6.0);
  }

  p.count = 0;
  EXPECT_THROW(generate_world(p, 1), Error);
  p.count = 10;
  p.upper = p.lower;
  EXPECT_THROW(generate_world(p, 1), Error);
}

TEST(Descriptor, UnitNormAndDistinct) {
  const Descriptor a = landmark_descriptor(1), b = landmark_descriptor(2);
  double na = 0.0, dot = 0.0;
  for (std::size_t k = 0; k < kDescriptorLength; ++k) {
    na += static_cast<double>(a[k]) * a[k];
    dot += static_cast<double>(a[k]) * b[k];
  }
  EXPECT_NEAR(na, 1.0, 1e-6);
  EXPECT_LT(std::abs(dot), 0.6);
  EXPECT_EQ(landmark_descriptor(1), a);
}

TEST(Capture, ExactPixelsWithoutNoise) {
  const World w = dense_world(2000, 5);
  const CameraIntrinsics k;
  const CameraPose cam = downward_at(Vec3(1, -2, 20), 0.3);
  CaptureNoise noise;
  noise.pixel_sigma = 0.0;
  const auto fs = capture(w, cam, k, noise, 9);
  ASSERT_FALSE(fs.empty());
  for (const auto& f : fs) {
    const auto px = geometry::project(k, cam, w.landmarks[static_cast<std::size_t>(f.landmark)].position);
    ASSERT_TRUE(px.has_value());
    EXPECT_EQ(f.pixel[0], static_cast<float>(px->x()));
    EXPECT_EQ(f.pixel[1], static_cast<float>(px->y()));
  }
  const auto again = capture(w, cam, k, noise, 9);
  ASSERT_EQ(again.size(), fs.size());
  for (std::size_t i = 0; i < fs.size(); ++i) EXPECT_EQ(again[i].descriptor, fs[i].descriptor);
}

TEST(Capture, FacingAwayIsEmpty) {
  const World w = dense_world(2000, 5);
  CameraPose up;
  up.position = Vec3(0, 0, 20);
  up.orientation = geometry::Rotation3::identity();  // optical axis is world +z
  EXPECT_TRUE(capture(w, up, CameraIntrinsics{}, CaptureNoise{}, 1).empty());
  CaptureNoise bad;
  bad.pixel_sigma = -1.0;
  EXPECT_THROW(capture(w, up, CameraIntrinsics{}, bad, 1), Error);
}

TEST(Capture, RayleighPixelDeviation) {
  const World w = dense_world(40000, 6);
  const CameraIntrinsics k;
  CaptureNoise exact, noisy;
  exact.pixel_sigma = 0.0;
  noisy.pixel_sigma = 1.0;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::uint64_t shot = 0; count < 10000; ++shot) {
    const CameraPose cam = downward_at(Vec3(-8.0 + 4.0 * static_cast<double>(shot % 5), 0, 20));
    std::map<std::int64_t, Vec2> truth;
    for (const auto& f : capture(w, cam, k, exact, shot)) truth[f.landmark] = f.pixel_d();
    for (const auto& f : capture(w, cam, k, noisy, shot)) {
      const auto it = truth.find(f.landmark);
      if (it == truth.end()) continue;
      sum += (f.pixel_d() - it->second).norm();
      if (++count == 10000) break;
    }
  }
  const double expected = std::sqrt(std::numbers::pi / 2.0);
  EXPECT_NEAR(sum / static_cast<double>(count), expected, 0.05 * expected);
}

TEST(Match, IdenticalListsSelfMatch) {
  const World w = dense_world(2000, 7);
  const auto fs = capture(w, downward_at(Vec3(0, 0, 20)), CameraIntrinsics{}, CaptureNoise{}, 1);
  ASSERT_GT(fs.size(), 50u);
  const auto m = match_features(fs, fs, 0.0, 1, CameraIntrinsics{});
  ASSERT_EQ(m.size(), fs.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_EQ(m.index_a[i], i);
    EXPECT_EQ(m.index_b[i], i);
    EXPECT_TRUE(m.correct[i]);
  }
}

TEST(Match, ExactMismatchFraction) {
  const World w = dense_world(4000, 8);
  const CameraIntrinsics k;
  const auto a = capture(w, downward_at(Vec3(0, 0, 20)), k, CaptureNoise{}, 1);
  std::vector<FeaturePoint> first(a.begin(), a.begin() + 100);
  const auto b = capture(w, downward_at(Vec3(0, 0, 20)), k, CaptureNoise{}, 2);
  std::vector<FeaturePoint> second;
  for (const auto& f : b)
    for (const auto& g : first)
      if (f.landmark == g.landmark) second.push_back(f);
  ASSERT_EQ(second.size(), 100u);
  const auto m = match_features(first, second, 0.3, 4, k);
  ASSERT_EQ(m.size(), 100u);
  std::size_t wrong = 0;
  for (bool c : m.correct) wrong += c ? 0 : 1;
  EXPECT_EQ(wrong, 30u);
  // One-to-one and deterministic.
  std::vector<bool> used(second.size(), false);
  for (std::size_t j : m.index_b) {
    EXPECT_FALSE(used[j]);
    used[j] = true;
  }
  const auto again = match_features(first, second, 0.3, 4, k);
  EXPECT_EQ(again.index_b, m.index_b);
  EXPECT_THROW(match_features(first, second, 1.0, 4, k), Error);
}

TEST(Match, DisjointLandmarksDoNotMatch) {
  // Two worlds whose landmark identities do not overlap.
  const World w = dense_world(2000, 9);
  const auto a = capture(w, downward_at(Vec3(0, 0, 20)), CameraIntrinsics{}, CaptureNoise{}, 1);
  std::vector<FeaturePoint> b = a;
  for (auto& f : b) {
    f.landmark += 1000000;
    f.descriptor = landmark_descriptor(static_cast<std::uint32_t>(f.landmark));
  }
  ASSERT_GT(a.size(), 50u);
  EXPECT_EQ(match_features(a, b, 0.0, 1, CameraIntrinsics{}).size(), 0u);
  EXPECT_EQ(match_features(a, {}, 0.0, 1, CameraIntrinsics{}).size(), 0u);
}

TEST(Match, ExactDataSatisfiesEpipolarConstraintToFloatPrecision) {
  // Two downward cameras at 20 m, 6 m apart, with clutter in view.
  WorldParams p;
  p.count = 4000;
  p.clutter = 1500;
  p.clutter_height = 6.0;
  const World w = generate_world(p, 10);
  const CameraIntrinsics k;
  const auto s1 = agent::AgentState::make(0, Vec3(0, 0, 20), 0.1, geometry::downward_mounting());
  const auto s2 = agent::AgentState::make(1, Vec3(3, 5, 20), -0.2, geometry::downward_mounting());
  CaptureNoise exact;
  exact.pixel_sigma = 0.0;
  const auto f1 = capture(w, s1.camera_pose(), k, exact, 1);
  const auto f2 = capture(w, s2.camera_pose(), k, exact, 2);
  const auto m = match_features(f1, f2, 0.0, 3, k);
  ASSERT_GT(m.size(), 100u);
  // X2 = R X1 + t between the two camera frames.
  const Mat3 r1 = s1.world_to_camera().matrix(), r2 = s2.world_to_camera().matrix();
  const Mat3 r = r2 * r1.transpose();
  const Vec3 t = r2 * (s1.position - s2.position);
  const auto h = pose::PoseHypothesis::make(geometry::rotation_to_quat(geometry::Rotation3::nearest(r)), t);
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_TRUE(m.correct[i]);
    worst = std::max(worst, std::abs(pose::epipolar_residual(h, m.correspondences[i])));
  }
  // Single-precision pixels carry about 2^-24 relative error.
  EXPECT_LT(worst, 1e-6);
}

TEST(Match, DyadicScenePassesStrictEpipolarBound) {
  // Landmarks on a 1/16 m grid seen from 20 m make every exact pixel a
  // dyadic rational, so the float pixels lose nothing.
  World w;
  std::uint32_t id = 0;
  for (int i = -160; i <= 160; i += 3)
    for (int j = -160; j <= 160; j += 3) w.landmarks.push_back({id++, Vec3(i / 16.0, j / 16.0, 0.0)});
  const CameraIntrinsics k;
  const auto s1 = agent::AgentState::make(0, Vec3(0, 0, 20), 0.0, geometry::downward_mounting());
  const auto s2 = agent::AgentState::make(1, Vec3(2, -3, 20), 0.0, geometry::downward_mounting());
  CaptureNoise exact;
  exact.pixel_sigma = 0.0;
  const auto m = match_features(capture(w, s1.camera_pose(), k, exact, 1), capture(w, s2.camera_pose(), k, exact, 2),
                                0.0, 3, k);
  ASSERT_GT(m.size(), 100u);
  const Mat3 r2 = s2.world_to_camera().matrix();
  const auto h = pose::PoseHypothesis::make(geometry::UnitQuaternion::identity(), r2 * (s1.position - s2.position));
  double worst = 0.0;
  for (const auto& c : m.correspondences) worst = std::max(worst, std::abs(pose::epipolar_residual(h, c)));
  EXPECT_LT(worst, 1e-10);
}

TEST(Codec, Sizes) {
  FeatureMessage m;
  EXPECT_EQ(encode_message(m).size(), 16u);
  m.features.resize(500);
  EXPECT_EQ(encode_message(m).size(), 132016u);
  EXPECT_EQ(message_size(500), 132016u);
  EXPECT_EQ(kFeatureBytes, 264u);
}

TEST(Codec, LittleEndianLayout) {
  FeatureMessage m;
  m.sender = 0x01020304;
  m.frame = 7;
  m.reserved = 0;
  FeaturePoint f;
  f.pixel = {1.0f, -2.5f};
  f.descriptor[0] = 0.5f;
  m.features.push_back(f);
  const auto bytes = encode_message(m);
  ASSERT_EQ(bytes.size(), 16u + 264u);
  EXPECT_EQ(bytes[0], 0x04);
  EXPECT_EQ(bytes[3], 0x01);
  EXPECT_EQ(bytes[4], 7);
  EXPECT_EQ(bytes[8], 1);  // feature count
  // 1.0f = 0x3f800000
  EXPECT_EQ(bytes[16], 0x00);
  EXPECT_EQ(bytes[18], 0x80);
  EXPECT_EQ(bytes[19], 0x3f);
  // 0.5f = 0x3f000000 as the first descriptor value
  EXPECT_EQ(bytes[27], 0x3f);
}

TEST(Codec, RoundTripIsBitExact) {
  CounterRng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const FeatureMessage m = random_message(rng);
    const auto bytes = encode_message(m);
    ASSERT_EQ(bytes.size(), message_size(m.features.size()));
    const FeatureMessage back = decode_message(bytes);
    ASSERT_TRUE(same_bits(m, back)) << "trial " << trial;
    EXPECT_EQ(encode_message(back), bytes);
    for (const auto& f : back.features) EXPECT_EQ(f.landmark, -1);
  }
}

TEST(Codec, RejectsMalformed) {
  FeatureMessage m;
  m.features.resize(3);
  auto bytes = encode_message(m);
  for (std::size_t cut : {std::size_t{0}, std::size_t{15}, bytes.size() - 1}) {
    try {
      decode_message(std::span(bytes).first(cut));
      FAIL() << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::malformed_message);
    }
  }
  bytes.push_back(0);
  EXPECT_THROW(decode_message(bytes), Error);
  bytes.pop_back();
  bytes[8] = 4;  // count disagrees with the length
  EXPECT_THROW(decode_message(bytes), Error);
}

TEST(Bandwidth, Arithmetic) {
  EXPECT_EQ(bandwidth(0, 20), 320.0);
  EXPECT_EQ(bandwidth(500, 20), 2640320.0);
  EXPECT_EQ(bandwidth(20, 1), 5296.0);
  EXPECT_NEAR(bandwidth(20, 1) / 1024.0, 5.2, 0.05);
  EXPECT_THROW(bandwidth(-1, 20), Error);
  EXPECT_THROW(bandwidth(1, -20), Error);
}
