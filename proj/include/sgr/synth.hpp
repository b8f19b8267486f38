// SPDX-License-Identifier: Apache-2.0
//
// Seeded synthetic gestures: static face/body anchors with both hands tracing
// parametric paths, plus a nearest-centroid separability oracle.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sgr/keypoints.hpp"
#include "sgr/preprocess.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

enum class PathKind { kCircle, kLine, kFigureEight };

std::string to_string(PathKind kind);

struct HandPath {
  PathKind kind = PathKind::kCircle;
  double amplitude = 0.1;
  double frequency = 1.0;  // cycles over the whole gesture
  double phase = 0.0;      // radians
  std::array<double, 2> center{0.0, 0.0};  // offset from the hand's rest position
};

struct GestureTemplate {
  std::size_t class_id = 0;
  HandPath left, right;
  /// Gaussian noise on every hand coordinate, per frame.
  double point_jitter = 0.005;
  /// Per-sequence relative amplitude spread and absolute phase spread (rad).
  double amplitude_jitter = 0.05;
  double phase_jitter = 0.05;

  /// Throws ConfigError for non-positive amplitudes or negative jitters.
  void validate() const;
};

/// Templates for `classes` gestures, pairwise distinct by at least 3x the
/// phase jitter in one parameter. `jitter_scale` multiplies every jitter.
std::vector<GestureTemplate> make_templates(std::size_t classes, double jitter_scale = 1.0);

/// Position of the path at normalized time s in [0, 1].
std::array<double, 2> path_point(const HandPath& path, double s);

/// Rest positions of the static anchors (raw image coordinates).
inline constexpr double kLeftShoulderX = 0.6;
inline constexpr double kRightShoulderX = 0.3;
inline constexpr double kShoulderY = 0.55;

/// Raw-space holistic543 sequence of length `length`; draws L ~ U(20, 60)
/// from `rng` when `length` is 0.
GestureSequence synth_sequence(const GestureTemplate& tmpl, std::mt19937_64& rng,
                               std::size_t length = 0);

struct SynthSpec {
  std::size_t classes = 5;
  std::size_t per_class = 40;
  std::uint64_t seed = 0;
  double jitter_scale = 1.0;
};

/// Writes classes*per_class .kpjl files under `out_dir/seqs` plus
/// `out_dir/manifest.json`; returns the manifest (base_dir = out_dir).
DatasetManifest synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir,
                              std::size_t jobs = 1);

/// Leave-one-out nearest-centroid accuracy over flattened tensors.
double nearest_centroid_loo(const std::vector<Tensor>& inputs, const std::vector<std::size_t>& labels,
                            std::size_t classes);

/// Preprocesses every sequence of the manifest and runs the oracle.
double separability_oracle(const DatasetManifest& manifest, const PreprocessConfig& config = {},
                           std::size_t jobs = 1);

}  // namespace sgr
