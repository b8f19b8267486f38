// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "sgr/errors.hpp"
#include "sgr/parallel.hpp"
#include "sgr/preprocess.hpp"

using namespace sgr;
using namespace sgr::testing;

namespace {

double dist(const Landmark& a, const Landmark& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

KeypointFrame transformed(KeypointFrame f, double scale, double dx, double dy, double dz) {
  for (auto& l : f.landmarks) l = {l.x * scale + dx, l.y * scale + dy, l.z * scale + dz};
  return f;
}

double max_frame_diff(const KeypointFrame& a, const KeypointFrame& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
    m = std::max(m, std::abs(a.landmarks[i].x - b.landmarks[i].x));
    m = std::max(m, std::abs(a.landmarks[i].y - b.landmarks[i].y));
    m = std::max(m, std::abs(a.landmarks[i].z - b.landmarks[i].z));
  }
  return m;
}

}  // namespace

TEST_CASE("normalization puts the reference at the origin and divides by shoulder width") {
  std::mt19937_64 rng(1);
  const NormalizationSpec spec;
  const auto f = random_frame(0, rng);
  const auto n = normalize_frame(f, spec);
  const std::size_t ref = f.layout->index_of("body", 12);
  CHECK(n.landmarks[ref].x == 0.0);
  CHECK(n.landmarks[ref].y == 0.0);
  CHECK(n.landmarks[ref].z == 0.0);
  CHECK(n.landmarks[0].x == doctest::Approx((f.landmarks[0].x - 0.3) / 0.3));
}

TEST_CASE("normalization is translation and scale invariant") {
  const NormalizationSpec spec;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const auto f = random_frame(0, rng);
    const auto base = normalize_frame(f, spec);
    CHECK(max_frame_diff(base, normalize_frame(transformed(f, 1.0, 3.7, -2.1, 0.4), spec)) <= 1e-9);
    CHECK(max_frame_diff(base, normalize_frame(transformed(f, 4.5, 0.0, 0.0, 0.0), spec)) <= 1e-6);
    CHECK(max_frame_diff(base, normalize_frame(transformed(f, 0.02, 0.0, 0.0, 0.0), spec)) <= 1e-6);
  }
}

TEST_CASE("degenerate shoulders are rejected") {
  std::mt19937_64 rng(1);
  const auto f = random_frame(0, rng, 0.0);
  CHECK_THROWS_AS(normalize_frame(f, NormalizationSpec{}), DegenerateFrameError);
}

TEST_CASE("imputation holds the last observation") {
  auto seq = random_sequence(4, 5);
  const Landmark seen = seq.frames[0].landmarks[3];
  seq.frames[1].landmarks[3] = Landmark::missing();
  seq.frames[2].landmarks[3] = Landmark::missing();
  seq.frames[0].landmarks[7] = Landmark::missing();
  const auto out = impute_missing(seq, NormalizationSpec{});
  CHECK(out.frames[1].landmarks[3] == seen);
  CHECK(out.frames[2].landmarks[3] == seen);
  const std::size_t ref = seq.frames[0].layout->index_of("body", 12);
  CHECK(out.frames[0].landmarks[7] == seq.frames[0].landmarks[ref]);

  auto no_anchor = random_sequence(2, 6);
  no_anchor.frames[0].landmarks[ref] = Landmark::missing();
  CHECK_THROWS_AS(impute_missing(no_anchor, NormalizationSpec{}), ImputationRequiredError);
}

TEST_CASE("kalman smoothing denoises a constant signal") {
  const auto layout = LayoutSpec::by_name("holistic543");
  std::mt19937_64 rng(123);
  std::normal_distribution<double> noise(0.0, 0.1);
  KalmanBank bank(KalmanSpec{});
  std::vector<double> out;
  for (int t = 0; t < 100; ++t) {
    KeypointFrame f;
    f.t = t;
    f.layout = layout;
    f.landmarks.assign(543, {0.5, 0.5, 0.5});
    f.landmarks[0].x = 0.5 + noise(rng);
    const auto s = bank.step(f);
    if (t == 0) CHECK(s.landmarks[0].x == f.landmarks[0].x);
    out.push_back(s.landmarks[0].x);
  }
  double mean = 0.0, var = 0.0;
  for (int t = 20; t < 100; ++t) mean += out[t] / 80.0;
  for (int t = 20; t < 100; ++t) var += (out[t] - mean) * (out[t] - mean) / 80.0;
  CHECK(var < 0.01);
  CHECK(std::abs(mean - 0.5) < 0.05);
}

TEST_CASE("kalman bank equals the offline pass") {
  const auto seq = random_sequence(10, 8);
  const auto offline = kalman_smooth(seq, KalmanSpec{});
  KalmanBank bank(KalmanSpec{});
  for (std::size_t i = 0; i < seq.size(); ++i) CHECK(same_values(bank.step(seq.frames[i]), offline.frames[i]));
}

TEST_CASE("resampling") {
  auto seq = random_sequence(3, 2);
  const auto r = resample_sequence(seq, 5);
  REQUIRE(r.size() == 5);
  CHECK(same_values(r.frames[0], seq.frames[0]));
  CHECK(r.frames[4].landmarks == seq.frames[2].landmarks);
  CHECK(r.frames[1].landmarks[0].x ==
        doctest::Approx(seq.frames[0].landmarks[0].x + 0.5 * (seq.frames[1].landmarks[0].x - seq.frames[0].landmarks[0].x)));
  CHECK(same_values(resample_sequence(seq, 3), seq));
  CHECK_THROWS_AS(resample_sequence(random_sequence(1, 1), 30), TooShortError);
  CHECK_THROWS_AS(resample_sequence(seq, 1), ConfigError);
}

TEST_CASE("augmentation keeps distance ratios before noise") {
  const auto seq = normalize_and_smooth(random_sequence(20, 4), PreprocessConfig{});
  AugmentSpec spec;
  spec.tshift_frac = 0.0;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto draw = draw_augmentation(spec, seq.size(), rng);
    CHECK(std::abs(draw.theta_rad) <= 15.0 * std::numbers::pi / 180.0);
    CHECK(draw.scale >= 0.9);
    CHECK(draw.scale <= 1.1);
    const auto out = apply_augmentation(seq, draw, 0.0, rng);
    for (std::size_t f = 0; f < seq.size(); f += 7)
      for (std::size_t i = 1; i < 543; i += 37) {
        const double before = dist(seq.frames[f].landmarks[0], seq.frames[f].landmarks[i]);
        const double after = dist(out.frames[f].landmarks[0], out.frames[f].landmarks[i]);
        CHECK(after / before == doctest::Approx(draw.scale).epsilon(1e-12));
      }
  }
}

TEST_CASE("augmentation temporal shift holds edges") {
  const auto seq = normalize_and_smooth(random_sequence(20, 4), PreprocessConfig{});
  std::mt19937_64 rng(1);
  AugmentDraw d;
  d.shift_frames = 2;
  const auto out = apply_augmentation(seq, d, 0.0, rng);
  CHECK(out.size() == seq.size());
  CHECK(out.frames[0].landmarks == seq.frames[0].landmarks);
  CHECK(out.frames[1].landmarks == seq.frames[0].landmarks);
  CHECK(out.frames[2].landmarks == seq.frames[0].landmarks);
  CHECK(out.frames[5].landmarks == seq.frames[3].landmarks);
}

TEST_CASE("augmentation noise has the configured spread") {
  const auto layout = LayoutSpec::holistic543();
  GestureSequence seq;
  for (int t = 0; t < 614; ++t) {
    KeypointFrame f;
    f.t = t;
    f.layout = layout;
    f.landmarks.assign(543, {0.0, 0.0, 0.0});
    seq.frames.push_back(f);
  }
  std::mt19937_64 rng(77);
  const auto out = apply_augmentation(seq, AugmentDraw{}, 0.01, rng);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& f : out.frames)
    for (const auto& l : f.landmarks)
      for (double v : {l.x, l.y, l.z}) {
        sum += v;
        sq += v * v;
        ++n;
      }
  CHECK(n >= 1000000);
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
  CHECK(std::abs(sd - 0.01) <= 0.001);
}

TEST_CASE("pipeline output shape and golden tensor") {
  const auto seq = read_sequence(std::string(SGR_TEST_DATA) + "/golden_input.kpjl");
  const Tensor x = preprocess_pipeline(seq, PreprocessConfig{});
  CHECK(x.shape() == Shape{30, 543, 3});
  const auto golden = read_tensor_file(std::string(SGR_TEST_DATA) + "/golden_tensor.sgkp");
  REQUIRE(golden.size() == 1);
  CHECK(golden[0].shape == x.shape());
  CHECK(golden[0].data == x.storage());
  // frame 0 is the first measurement, normalized by hand
  const double d = std::sqrt(0.3 * 0.3 + 0.02 * 0.02);
  const Landmark raw = seq.frames[0].landmarks[0];
  CHECK(x.at(0, 0, 0) == doctest::Approx((raw.x - 0.31) / d).epsilon(1e-12));
  CHECK(x.at(0, 0, 1) == doctest::Approx((raw.y - 0.5) / d).epsilon(1e-12));
}

TEST_CASE("pipeline stage errors name the stage") {
  auto seq = random_sequence(5, 1);
  const std::size_t ls = seq.frames[0].layout->index_of("body", 11);
  seq.frames[2].landmarks[ls] = seq.frames[2].landmarks[seq.frames[0].layout->index_of("body", 12)];
  try {
    preprocess_pipeline(seq, PreprocessConfig{});
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "normalize");
    CHECK(e.kind() == DegenerateFrameError("").kind());
  }
}

TEST_CASE("expand_dataset is reproducible and independent of jobs") {
  const auto dir = temp_dir("aug");
  DatasetManifest m;
  m.classes = {"a", "b"};
  m.base_dir = dir;
  for (int i = 0; i < 4; ++i) {
    const std::string p = "s" + std::to_string(i) + ".kpjl";
    write_sequence(random_sequence(12, static_cast<std::uint64_t>(i)), dir / p);
    m.sequences.push_back({p, i % 2 ? "b" : "a"});
  }
  AugmentSpec spec;
  spec.copies_per_sequence = 2;
  spec.seed = 3;
  const auto a = expand_dataset(m, spec, dir / "o1", {}, 1);
  const auto b = expand_dataset(m, spec, dir / "o2", {}, 3);
  REQUIRE(a.sequences.size() == 12);
  CHECK(a.sequences[1].path == "aug/00000_s0_a1.kpjl");
  for (std::size_t i = 0; i < a.sequences.size(); ++i) {
    CHECK(a.sequences[i].label == m.sequences[i / 3].label);
    if (i % 3 == 0) continue;
    CHECK(read_text_file(dir / "o1" / a.sequences[i].path) == read_text_file(dir / "o2" / b.sequences[i].path));
  }
  const auto copy = read_sequence(dir / "o1" / a.sequences[1].path);
  CHECK(copy.space == CoordinateSpace::kNormalized);
  CHECK(preprocess_pipeline(copy, {}).shape() == Shape{30, 543, 3});
  std::filesystem::remove_all(dir);
}

TEST_CASE("derived rng streams") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  std::vector<int> out(50, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
  CHECK(out[49] == 98);
  CHECK_THROWS_WITH_AS(parallel_for(10, 3, [](std::size_t i) {
                         if (i == 3 || i == 7) throw ValueError("at " + std::to_string(i));
                       }),
                       "ValueError: at 3", ValueError);
}
