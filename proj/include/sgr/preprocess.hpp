// SPDX-License-Identifier: Apache-2.0
//
// Landmark preprocessing: dropout imputation, shoulder-frame normalization,
// constant-velocity Kalman smoothing, fixed-length resampling and the
// geometric/noise augmentations used to enlarge training sets.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sgr/keypoints.hpp"
#include "sgr/tensor.hpp"

namespace sgr {

struct NormalizationSpec {
  std::string ref_block = "body";
  std::size_t ref_index = 12;                       // right shoulder
  std::array<std::size_t, 2> shoulder_pair{11, 12};  // left, right
  double epsilon_dnorm = 1e-6;

  /// Throws LayoutError/ConfigError if indices fall outside the block.
  void validate(const LayoutSpec& layout) const;
};

struct KalmanSpec {
  double q = 1e-3;   // white-acceleration process noise scale
  double r = 1e-2;   // measurement variance
  double p0 = 1.0;   // initial covariance scale
  double dt = 1.0;

  void validate() const;
};

struct AugmentSpec {
  double rot_max_deg = 15.0;
  double scale_lo = 0.9;
  double scale_hi = 1.1;
  double tshift_frac = 0.05;
  double noise_sigma = 0.01;
  std::size_t copies_per_sequence = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PreprocessConfig {
  NormalizationSpec normalization;
  KalmanSpec kalman;
  std::size_t frames = 30;  // T
};

KeypointFrame normalize_frame(const KeypointFrame& frame, const NormalizationSpec& spec);

/// Replaces dropout sentinels by the last observed value of that landmark.
/// Landmarks with no earlier observation take the reference landmark's
/// position of the same frame. Throws ImputationRequiredError when the
/// reference or a shoulder has never been observed.
GestureSequence impute_missing(const GestureSequence& seq, const NormalizationSpec& spec);

/// Causal hold-last imputation state, shared by the offline pass and the
/// streaming session so both impute identically.
class Imputer {
 public:
  explicit Imputer(NormalizationSpec spec) : spec_(std::move(spec)) {}
  KeypointFrame operator()(const KeypointFrame& frame);

 private:
  NormalizationSpec spec_;
  std::vector<Landmark> last_;
};

/// One constant-velocity Kalman filter per scalar coordinate. Stepping the
/// bank left to right over a sequence is exactly what kalman_smooth does.
class KalmanBank {
 public:
  explicit KalmanBank(KalmanSpec spec);
  KeypointFrame step(const KeypointFrame& frame);
  bool initialized() const { return !pos_.empty(); }

 private:
  KalmanSpec spec_;
  std::vector<double> pos_, vel_, p00_, p01_, p11_;
};

GestureSequence kalman_smooth(const GestureSequence& seq, const KalmanSpec& spec);

/// Linear interpolation to exactly `frames` frames over [0, L-1].
GestureSequence resample_sequence(const GestureSequence& seq, std::size_t frames = 30);

struct AugmentDraw {
  double theta_rad = 0.0;
  double scale = 1.0;
  std::int64_t shift_frames = 0;
};

AugmentDraw draw_augmentation(const AugmentSpec& spec, std::size_t length, std::mt19937_64& rng);

/// Rotation about y, uniform scale, edge-held temporal shift, then Gaussian
/// noise drawn from `rng`.
GestureSequence apply_augmentation(const GestureSequence& seq, const AugmentDraw& draw,
                                   double noise_sigma, std::mt19937_64& rng);

GestureSequence augment_sequence(const GestureSequence& seq, const AugmentSpec& spec,
                                 std::mt19937_64& rng);

/// Normalized + smoothed sequence at its original length.
GestureSequence normalize_and_smooth(const GestureSequence& seq, const PreprocessConfig& config);

/// impute -> normalize -> smooth -> resample; returns (T, K, 3). Sequences
/// already in normalized space are only resampled.
Tensor preprocess_pipeline(const GestureSequence& seq, const PreprocessConfig& config);

/// Window tensor (T, K, 3) from already normalized and smoothed frames.
Tensor window_tensor(const std::vector<KeypointFrame>& frames, std::size_t T);

/// Writes `copies_per_sequence` augmented variants of every sequence into
/// `out_dir` and returns the enlarged manifest, each original followed by its
/// copies. Copies are stored in normalized space.
DatasetManifest expand_dataset(const DatasetManifest& manifest, const AugmentSpec& spec,
                               const std::filesystem::path& out_dir,
                               const PreprocessConfig& config = {}, std::size_t jobs = 1);

}  // namespace sgr
