// SPDX-License-Identifier: Apache-2.0
#include "sgr/preprocess.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "sgr/errors.hpp"
#include "sgr/parallel.hpp"

namespace sgr {

void NormalizationSpec::validate(const LayoutSpec& layout) const {
  if (!(epsilon_dnorm > 0.0)) throw ConfigError("epsilon_dnorm must be positive");
  layout.index_of(ref_block, ref_index);
  layout.index_of(ref_block, shoulder_pair[0]);
  layout.index_of(ref_block, shoulder_pair[1]);
}

void KalmanSpec::validate() const {
  if (!(q >= 0.0)) throw ConfigError("kalman q must be >= 0");
  if (!(r > 0.0)) throw ConfigError("kalman r must be > 0");
  if (!(p0 > 0.0)) throw ConfigError("kalman p0 must be > 0");
  if (!(dt > 0.0)) throw ConfigError("kalman dt must be > 0");
}

void AugmentSpec::validate() const {
  if (!(rot_max_deg >= 0.0 && rot_max_deg < 90.0)) throw ConfigError("rot_max_deg must be in [0, 90)");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi)) throw ConfigError("need 0 < scale_lo <= scale_hi");
  if (!(tshift_frac >= 0.0 && tshift_frac < 0.5)) throw ConfigError("tshift_frac must be in [0, 0.5)");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
}

// --- normalization -----------------------------------------------------------

KeypointFrame normalize_frame(const KeypointFrame& frame, const NormalizationSpec& spec) {
  if (!frame.layout) throw LayoutError("frame without layout");
  if (frame.layout->find(spec.ref_block) == nullptr)
    throw LayoutError("layout '" + frame.layout->name() + "' has no '" + spec.ref_block + "' block");
  spec.validate(*frame.layout);
  if (frame.has_missing())
    throw ImputationRequiredError("frame " + std::to_string(frame.t) + " has missing landmarks");

  const Landmark ref = frame.landmarks[frame.layout->index_of(spec.ref_block, spec.ref_index)];
  const Landmark a = frame.landmarks[frame.layout->index_of(spec.ref_block, spec.shoulder_pair[0])];
  const Landmark b = frame.landmarks[frame.layout->index_of(spec.ref_block, spec.shoulder_pair[1])];
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  const double d_norm = std::sqrt(dx * dx + dy * dy + dz * dz);
  if (!(d_norm >= spec.epsilon_dnorm))
    throw DegenerateFrameError("frame " + std::to_string(frame.t) + ": shoulder distance " +
                               format_double(d_norm) + " below epsilon");

  KeypointFrame out;
  out.t = frame.t;
  out.layout = frame.layout;
  out.landmarks.reserve(frame.landmarks.size());
  for (const auto& p : frame.landmarks)
    out.landmarks.push_back({(p.x - ref.x) / d_norm, (p.y - ref.y) / d_norm, (p.z - ref.z) / d_norm});
  return out;
}

// --- imputation --------------------------------------------------------------

KeypointFrame Imputer::operator()(const KeypointFrame& frame) {
  const auto& layout = *frame.layout;
  if (last_.empty()) last_.assign(frame.landmarks.size(), Landmark::missing());
  if (last_.size() != frame.landmarks.size()) throw LayoutError("imputer: landmark count changed");

  KeypointFrame out = frame;
  for (std::size_t i = 0; i < out.landmarks.size(); ++i) {
    if (out.landmarks[i].is_missing()) out.landmarks[i] = last_[i];
    else if (!out.landmarks[i].is_finite())
      throw ValueError("frame " + std::to_string(frame.t) + ": non-finite landmark");
  }
  if (layout.find(spec_.ref_block) != nullptr) {
    for (std::size_t local : {spec_.ref_index, spec_.shoulder_pair[0], spec_.shoulder_pair[1]}) {
      if (out.landmarks[layout.index_of(spec_.ref_block, local)].is_missing())
        throw ImputationRequiredError("frame " + std::to_string(frame.t) +
                                      ": anchor landmark never observed");
    }
    const Landmark ref = out.landmarks[layout.index_of(spec_.ref_block, spec_.ref_index)];
    for (auto& l : out.landmarks)
      if (l.is_missing()) l = ref;
  } else if (out.has_missing()) {
    throw ImputationRequiredError("frame " + std::to_string(frame.t) + ": landmark never observed");
  }
  for (std::size_t i = 0; i < frame.landmarks.size(); ++i)
    if (!frame.landmarks[i].is_missing()) last_[i] = frame.landmarks[i];
  return out;
}

GestureSequence impute_missing(const GestureSequence& seq, const NormalizationSpec& spec) {
  validate_sequence(seq);
  GestureSequence out = seq;
  Imputer impute(spec);
  for (auto& f : out.frames) f = impute(f);
  return out;
}

// --- Kalman ------------------------------------------------------------------

KalmanBank::KalmanBank(KalmanSpec spec) : spec_(spec) { spec_.validate(); }

KeypointFrame KalmanBank::step(const KeypointFrame& frame) {
  const std::size_t n = frame.landmarks.size() * 3;
  KeypointFrame out;
  out.t = frame.t;
  out.layout = frame.layout;
  out.landmarks.resize(frame.landmarks.size());
  auto coord = [](const Landmark& l, std::size_t c) { return c == 0 ? l.x : (c == 1 ? l.y : l.z); };
  auto set = [](Landmark& l, std::size_t c, double v) { (c == 0 ? l.x : (c == 1 ? l.y : l.z)) = v; };

  if (pos_.empty()) {
    pos_.resize(n);
    vel_.assign(n, 0.0);
    p00_.assign(n, spec_.p0);
    p01_.assign(n, 0.0);
    p11_.assign(n, spec_.p0);
    for (std::size_t i = 0; i < n; ++i) pos_[i] = coord(frame.landmarks[i / 3], i % 3);
    out.landmarks = frame.landmarks;
    return out;
  }
  if (pos_.size() != n) throw LayoutError("kalman: landmark count changed");

  const double dt = spec_.dt;
  const double q00 = spec_.q * dt * dt * dt * dt / 4.0;
  const double q01 = spec_.q * dt * dt * dt / 2.0;
  const double q11 = spec_.q * dt * dt;
  for (std::size_t i = 0; i < n; ++i) {
    // predict: x = A x, P = A P A^T + Q
    const double xp = pos_[i] + dt * vel_[i];
    const double vp = vel_[i];
    const double a00 = p00_[i] + 2.0 * dt * p01_[i] + dt * dt * p11_[i] + q00;
    const double a01 = p01_[i] + dt * p11_[i] + q01;
    const double a11 = p11_[i] + q11;
    // update with z = H x + noise, H = [1, 0]
    const double z = coord(frame.landmarks[i / 3], i % 3);
    const double s = a00 + spec_.r;
    const double k0 = a00 / s;
    const double k1 = a01 / s;
    const double innov = z - xp;
    pos_[i] = xp + k0 * innov;
    vel_[i] = vp + k1 * innov;
    p00_[i] = (1.0 - k0) * a00;
    p01_[i] = (1.0 - k0) * a01;
    p11_[i] = a11 - k1 * a01;
    set(out.landmarks[i / 3], i % 3, pos_[i]);
  }
  return out;
}

GestureSequence kalman_smooth(const GestureSequence& seq, const KalmanSpec& spec) {
  if (seq.frames.empty()) throw EmptyError("kalman_smooth: empty sequence");
  KalmanBank bank(spec);
  GestureSequence out = seq;
  for (auto& f : out.frames) {
    if (f.has_missing()) throw ImputationRequiredError("kalman_smooth: missing landmarks");
    f = bank.step(f);
  }
  return out;
}

// --- resampling --------------------------------------------------------------

GestureSequence resample_sequence(const GestureSequence& seq, std::size_t frames) {
  if (frames < 2) throw ConfigError("resample target must be at least 2 frames");
  if (seq.frames.empty()) throw EmptyError("resample: empty sequence");
  if (seq.frames.size() < 2) throw TooShortError("resample needs at least 2 frames");
  const std::size_t len = seq.frames.size();
  GestureSequence out;
  out.label = seq.label;
  out.source_id = seq.source_id;
  out.fps = seq.fps;
  out.space = seq.space;
  out.frames.resize(frames);
  const double span = static_cast<double>(len - 1);
  const double denom = static_cast<double>(frames - 1);
  for (std::size_t j = 0; j < frames; ++j) {
    const double pos = static_cast<double>(j) * span / denom;
    auto i0 = static_cast<std::size_t>(std::floor(pos));
    if (i0 >= len - 1) i0 = len - 1;
    const double frac = pos - static_cast<double>(i0);
    const auto& a = seq.frames[i0];
    auto& f = out.frames[j];
    f.t = static_cast<std::int64_t>(j);
    f.layout = a.layout;
    if (frac == 0.0) {
      f.landmarks = a.landmarks;
      continue;
    }
    const auto& b = seq.frames[i0 + 1];
    f.landmarks.resize(a.landmarks.size());
    for (std::size_t k = 0; k < a.landmarks.size(); ++k) {
      const auto& p = a.landmarks[k];
      const auto& q = b.landmarks[k];
      f.landmarks[k] = {p.x + (q.x - p.x) * frac, p.y + (q.y - p.y) * frac,
                        p.z + (q.z - p.z) * frac};
    }
  }
  return out;
}

// --- augmentation ------------------------------------------------------------

AugmentDraw draw_augmentation(const AugmentSpec& spec, std::size_t length, std::mt19937_64& rng) {
  spec.validate();
  AugmentDraw d;
  const double rot = spec.rot_max_deg * std::numbers::pi / 180.0;
  d.theta_rad = std::uniform_real_distribution<double>(-rot, rot)(rng);
  d.scale = std::uniform_real_distribution<double>(spec.scale_lo, spec.scale_hi)(rng);
  const double delta =
      std::uniform_real_distribution<double>(-spec.tshift_frac, spec.tshift_frac)(rng);
  d.shift_frames = static_cast<std::int64_t>(std::lround(delta * static_cast<double>(length)));
  return d;
}

GestureSequence apply_augmentation(const GestureSequence& seq, const AugmentDraw& draw,
                                   double noise_sigma, std::mt19937_64& rng) {
  validate_sequence(seq);
  const double c = std::cos(draw.theta_rad), s = std::sin(draw.theta_rad);
  const auto len = static_cast<std::int64_t>(seq.frames.size());

  std::vector<KeypointFrame> geo(seq.frames.size());
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    geo[f] = seq.frames[f];
    for (auto& l : geo[f].landmarks) {
      const double x = l.x * c + l.z * s;
      const double z = -l.x * s + l.z * c;
      l = {x * draw.scale, l.y * draw.scale, z * draw.scale};
    }
  }

  GestureSequence out = seq;
  for (std::int64_t t = 0; t < len; ++t) {
    const std::int64_t src = std::clamp<std::int64_t>(t - draw.shift_frames, 0, len - 1);
    out.frames[static_cast<std::size_t>(t)].landmarks = geo[static_cast<std::size_t>(src)].landmarks;
  }
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& f : out.frames)
      for (auto& l : f.landmarks) {
        l.x += noise(rng);
        l.y += noise(rng);
        l.z += noise(rng);
      }
  }
  return out;
}

GestureSequence augment_sequence(const GestureSequence& seq, const AugmentSpec& spec,
                                 std::mt19937_64& rng) {
  const AugmentDraw draw = draw_augmentation(spec, seq.frames.size(), rng);
  return apply_augmentation(seq, draw, spec.noise_sigma, rng);
}

// --- pipeline ----------------------------------------------------------------

namespace {

template <typename Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

}  // namespace

GestureSequence normalize_and_smooth(const GestureSequence& seq, const PreprocessConfig& config) {
  staged("validate", [&] { validate_sequence(seq); return 0; });
  if (seq.space == CoordinateSpace::kNormalized) return seq;
  GestureSequence s = staged("impute", [&] { return impute_missing(seq, config.normalization); });
  staged("normalize", [&] {
    for (auto& f : s.frames) f = normalize_frame(f, config.normalization);
    return 0;
  });
  s = staged("smooth", [&] { return kalman_smooth(s, config.kalman); });
  s.space = CoordinateSpace::kNormalized;
  return s;
}

Tensor window_tensor(const std::vector<KeypointFrame>& frames, std::size_t T) {
  GestureSequence seq;
  seq.frames = frames;
  const GestureSequence r = staged("resample", [&] { return resample_sequence(seq, T); });
  const std::size_t k = r.frames.front().landmarks.size();
  Tensor out({T, k, 3});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < k; ++i) {
      const auto& l = r.frames[t].landmarks[i];
      double* dst = &out[(t * k + i) * 3];
      dst[0] = l.x;
      dst[1] = l.y;
      dst[2] = l.z;
    }
  return out;
}

Tensor preprocess_pipeline(const GestureSequence& seq, const PreprocessConfig& config) {
  const GestureSequence s = normalize_and_smooth(seq, config);
  Tensor out = window_tensor(s.frames, config.frames);
  for (double v : out.values())
    if (!std::isfinite(v)) throw StageError("resample", ValueError("non-finite output"));
  return out;
}

DatasetManifest expand_dataset(const DatasetManifest& manifest, const AugmentSpec& spec,
                               const std::filesystem::path& out_dir, const PreprocessConfig& config,
                               std::size_t jobs) {
  spec.validate();
  validate_manifest(manifest);
  const std::size_t copies = spec.copies_per_sequence;
  const std::size_t n = manifest.sequences.size();
  std::vector<std::vector<ManifestEntry>> produced(n);

  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& entry = manifest.sequences[i];
    const std::filesystem::path src = manifest.resolve(entry);
    ManifestEntry original = entry;
    if (!manifest.base_dir.empty() || !out_dir.empty())
      original.path = std::filesystem::proximate(src, out_dir).generic_string();
    produced[i].push_back(original);
    if (copies == 0) return;

    const GestureSequence base = normalize_and_smooth(read_sequence(src), config);
    auto rng = derive_rng(spec.seed, entry.path);
    const std::string stem = std::filesystem::path(entry.path).stem().string();
    for (std::size_t k = 0; k < copies; ++k) {
      GestureSequence aug = augment_sequence(base, spec, rng);
      char name[64];
      std::snprintf(name, sizeof name, "%05zu", i);
      const std::string rel = "aug/" + std::string(name) + "_" + stem + "_a" + std::to_string(k + 1) + ".kpjl";
      write_sequence(aug, out_dir / rel);
      produced[i].push_back({rel, entry.label});
    }
  });

  DatasetManifest out;
  out.classes = manifest.classes;
  out.seed = manifest.seed;
  out.base_dir = out_dir;
  for (auto& p : produced)
    for (auto& e : p) out.sequences.push_back(std::move(e));
  return out;
}

}  // namespace sgr
