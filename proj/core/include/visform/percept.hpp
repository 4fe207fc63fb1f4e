#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "visform/geometry.hpp"
#include "visform/pose.hpp"

namespace visform::percept {

inline constexpr std::size_t kDescriptorLength = 64;
inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::size_t kFeatureBytes = 4 * (2 + kDescriptorLength);

/// Landmarks on a ground patch (z = 0) plus optional clutter at uniform
/// heights in (0, clutter_height].
struct WorldParams {
  Vec2 lower{-40.0, -40.0};
  Vec2 upper{40.0, 40.0};
  std::size_t count = 4000;
  std::size_t clutter = 0;
  double clutter_height = 5.0;

  void validate() const;
};

struct Landmark {
  std::uint32_t id = 0;
  Vec3 position = Vec3::Zero();
};

struct World {
  WorldParams params;
  std::uint64_t seed = 0;
  std::vector<Landmark> landmarks;  // ids are 0, 1, 2, ... in order
};

/// Throws invalid_argument for count == 0 or empty bounds.
World generate_world(const WorldParams& params, std::uint64_t seed);

using Descriptor = std::array<float, kDescriptorLength>;

struct FeaturePoint {
  std::array<float, 2> pixel{};
  Descriptor descriptor{};
  /// Ground-truth landmark id, simulation only; never serialized. -1 when
  /// unknown (for example after decoding).
  std::int64_t landmark = -1;

  Vec2 pixel_d() const { return {pixel[0], pixel[1]}; }
};

/// Unit-norm Gaussian encoding of a landmark id.
Descriptor landmark_descriptor(std::uint32_t id);

struct CaptureNoise {
  double pixel_sigma = 0.0;
  double descriptor_sigma = 0.02;  // per component, before renormalization
};

/// Features for every visible landmark, in landmark order. Noisy pixels that
/// leave the image are dropped. Throws invalid_argument for negative sigmas.
std::vector<FeaturePoint> capture(const World& world, const geometry::CameraPose& camera,
                                  const geometry::CameraIntrinsics& intrinsics, const CaptureNoise& noise,
                                  std::uint64_t seed);

struct MatchResult {
  std::vector<pose::Correspondence> correspondences;  // m from a, n from b
  std::vector<std::size_t> index_a;
  std::vector<std::size_t> index_b;
  std::vector<bool> correct;  // simulation ground truth

  std::size_t size() const { return correspondences.size(); }
};

inline constexpr float kRatioTest = 0.8f;

/// Mutual nearest-descriptor matching with a ratio test, ordered by index in
/// a. Afterwards round(rho * matches) of them are rewired to wrong partners
/// in b and flagged false. Throws invalid_argument unless 0 <= rho < 1.
MatchResult match_features(std::span<const FeaturePoint> a, std::span<const FeaturePoint> b, double rho,
                           std::uint64_t seed, const geometry::CameraIntrinsics& intrinsics);

struct FeatureMessage {
  std::uint32_t sender = 0;
  std::uint32_t frame = 0;
  std::uint32_t reserved = 0;
  std::vector<FeaturePoint> features;
};

/// Little-endian header (sender, frame, count, reserved) followed by 66
/// IEEE-754 floats per feature (x, y, descriptor).
std::vector<std::uint8_t> encode_message(const FeatureMessage& message);
/// Throws malformed_message for short buffers or a count that disagrees
/// with the length.
FeatureMessage decode_message(std::span<const std::uint8_t> bytes);

std::size_t message_size(std::size_t features);

/// Bytes per second for broadcasting one message per frame.
double bandwidth(double features_per_frame, double frames_per_second);

}  // namespace visform::percept
