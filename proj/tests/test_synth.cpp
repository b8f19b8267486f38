// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "sgr/errors.hpp"
#include "sgr/parallel.hpp"
#include "sgr/synth.hpp"

using namespace sgr;
using namespace sgr::testing;

namespace {

GestureTemplate without_jitter(GestureTemplate t) {
  t.point_jitter = t.amplitude_jitter = t.phase_jitter = 0.0;
  return t;
}

/// Writes n sequences per template and returns the manifest.
DatasetManifest write_corpus(const std::vector<GestureTemplate>& templates, std::size_t n,
                             const std::filesystem::path& dir) {
  DatasetManifest m;
  m.base_dir = dir;
  for (std::size_t c = 0; c < templates.size(); ++c) m.classes.push_back("c" + std::to_string(c));
  for (std::size_t c = 0; c < templates.size(); ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const std::string path = "s/" + m.classes[c] + "_" + std::to_string(i) + ".kpjl";
      auto rng = derive_rng(17, path);
      auto seq = synth_sequence(templates[c], rng);
      write_sequence(seq, dir / path);
      m.sequences.push_back({path, m.classes[c]});
    }
  return m;
}

}  // namespace

TEST_CASE("templates") {
  const auto t = make_templates(6);
  REQUIRE(t.size() == 6);
  CHECK(t[0].right.kind == PathKind::kCircle);
  CHECK(t[1].right.kind == PathKind::kLine);
  CHECK(t[2].right.kind == PathKind::kFigureEight);
  CHECK(t[4].right.amplitude > t[0].right.amplitude);
  for (const auto& g : t) CHECK_NOTHROW(g.validate());
  const auto scaled = make_templates(2, 3.0);
  CHECK(scaled[0].point_jitter == doctest::Approx(3.0 * t[0].point_jitter));
  auto bad = t[0];
  bad.left.amplitude = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("same seed gives the same sequence") {
  const auto t = make_templates(3)[1];
  std::mt19937_64 a(5), b(5), c(6);
  const auto sa = synth_sequence(t, a), sb = synth_sequence(t, b), sc = synth_sequence(t, c);
  CHECK(serialize_sequence(sa) == serialize_sequence(sb));
  CHECK(serialize_sequence(sa) != serialize_sequence(sc));
  CHECK(sa.frames.size() >= 20);
  CHECK(sa.frames.size() <= 60);
  CHECK_NOTHROW(validate_sequence(sa));
}

TEST_CASE("zero jitter puts the wrists on the template path") {
  const auto layout = LayoutSpec::holistic543();
  for (const auto& raw : make_templates(4)) {
    const auto t = without_jitter(raw);
    std::mt19937_64 rng(1);
    const auto seq = synth_sequence(t, rng, 31);
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
      const double s = static_cast<double>(f) / 30.0;
      const auto pr = path_point(t.right, s);
      const auto pl = path_point(t.left, s);
      const auto& r = seq.frames[f].landmarks[layout->index_of("right_hand", 0)];
      const auto& l = seq.frames[f].landmarks[layout->index_of("left_hand", 0)];
      CHECK(r.x == doctest::Approx(0.26 + pr[0]).epsilon(1e-14));
      CHECK(r.y == doctest::Approx(0.72 + pr[1]).epsilon(1e-14));
      CHECK(l.x == doctest::Approx(0.64 + pl[0]).epsilon(1e-14));
      CHECK(l.y == doctest::Approx(0.72 + pl[1]).epsilon(1e-14));
    }
  }
}

TEST_CASE("shoulders are exactly 0.3 apart") {
  const auto layout = LayoutSpec::holistic543();
  std::mt19937_64 rng(2);
  const auto seq = synth_sequence(make_templates(5)[3], rng);
  for (const auto& f : seq.frames) {
    const auto& a = f.landmarks[layout->index_of("body", 11)];
    const auto& b = f.landmarks[layout->index_of("body", 12)];
    CHECK(std::hypot(a.x - b.x, a.y - b.y, a.z - b.z) == kLeftShoulderX - kRightShoulderX);
    CHECK(std::abs(std::hypot(a.x - b.x, a.y - b.y, a.z - b.z) - 0.3) < 1e-15);
    CHECK(a.y == kShoulderY);
  }
}

TEST_CASE("dataset generation is reproducible and parallel-safe") {
  const auto d1 = temp_dir("synth"), d2 = temp_dir("synth");
  SynthSpec spec{3, 4, 9, 1.0};
  const auto m1 = synth_dataset(spec, d1, 1);
  const auto m2 = synth_dataset(spec, d2, 3);
  CHECK(m1.sequences.size() == 12);
  CHECK(validate_manifest(m1) == std::vector<std::size_t>{4, 4, 4});
  CHECK(read_text_file(d1 / "manifest.json") == read_text_file(d2 / "manifest.json"));
  for (const auto& e : m1.sequences) CHECK(read_text_file(d1 / e.path) == read_text_file(d2 / e.path));
  CHECK_THROWS_AS(synth_dataset({1, 4, 0, 1.0}, d1), ConfigError);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);

  const auto d3 = temp_dir("synth");
  const auto big = synth_dataset({20, 10, 1, 1.0}, d3, 2);
  CHECK(validate_manifest(parse_manifest(read_text_file(d3 / "manifest.json"))).size() == 20);
  CHECK(big.sequences.size() == 200);
  std::filesystem::remove_all(d3);
}

TEST_CASE("nearest-centroid oracle") {
  std::vector<Tensor> xs;
  std::vector<std::size_t> ys;
  for (std::size_t c = 0; c < 2; ++c)
    for (int i = 0; i < 3; ++i) {
      xs.push_back(Tensor({1, 1, 1}, static_cast<double>(c) * 10.0 + i));
      ys.push_back(c);
    }
  CHECK(nearest_centroid_loo(xs, ys, 2) == 1.0);
  ys = {0, 1, 0, 1, 0, 1};
  CHECK(nearest_centroid_loo(xs, ys, 2) < 1.0);
}

TEST_CASE("oracle accuracy reflects separability") {
  const auto base = make_templates(4);
  const auto d1 = temp_dir("oracle");
  const double clean = separability_oracle(write_corpus(base, 8, d1));
  CHECK(clean >= 0.95);

  auto dup = base;
  dup[1] = base[0];
  dup[1].class_id = 1;
  const auto d2 = temp_dir("oracle");
  const double merged = separability_oracle(write_corpus(dup, 8, d2));
  CHECK(merged < clean - 0.1);

  double prev = 2.0;
  for (double scale : {0.0, 10.0, 60.0}) {
    const auto d = temp_dir("oracle");
    SynthSpec spec{4, 8, 3, scale};
    const double acc = separability_oracle(synth_dataset(spec, d));
    CHECK(acc <= prev + 1e-12);
    prev = acc;
    std::filesystem::remove_all(d);
  }
  CHECK(prev < 0.8);
  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}
