// SPDX-License-Identifier: Apache-2.0
#include "sgr/synth.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "sgr/errors.hpp"
#include "sgr/parallel.hpp"

namespace sgr {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::array<double, 2> kLeftRest{0.64, 0.72};
constexpr std::array<double, 2> kRightRest{0.26, 0.72};

std::array<double, 2> hand_offset(std::size_t j) {
  if (j == 0) return {0.0, 0.0};
  const double finger = static_cast<double>((j - 1) / 4) - 2.0;
  const double joint = static_cast<double>((j - 1) % 4 + 1);
  return {0.012 * finger, -0.018 * joint};
}

Landmark face_anchor(std::size_t i) {
  const double a = kTwoPi * static_cast<double>(i) / 468.0;
  const double r = 1.0 - 0.25 * static_cast<double>(i % 4);
  return {0.45 + 0.08 * r * std::cos(a), 0.3 + 0.11 * r * std::sin(a), -0.02 * r};
}

Landmark body_anchor(std::size_t i) {
  if (i == 11) return {kLeftShoulderX, kShoulderY, 0.0};
  if (i == 12) return {kRightShoulderX, kShoulderY, 0.0};
  const double col = static_cast<double>(i % 7) - 3.0;
  return {0.45 + 0.03 * col, 0.25 + 0.025 * static_cast<double>(i), 0.01 * col};
}

}  // namespace

std::string to_string(PathKind kind) {
  switch (kind) {
    case PathKind::kCircle: return "circle";
    case PathKind::kLine: return "line";
    case PathKind::kFigureEight: return "figure_eight";
  }
  return "?";
}

void GestureTemplate::validate() const {
  for (const HandPath* p : {&left, &right}) {
    if (!(p->amplitude > 0.0)) throw ConfigError("template amplitude must be > 0");
    if (!std::isfinite(p->frequency) || !std::isfinite(p->phase)) throw ConfigError("non-finite template parameter");
  }
  if (!(point_jitter >= 0.0) || !(amplitude_jitter >= 0.0) || !(phase_jitter >= 0.0))
    throw ConfigError("jitter scales must be >= 0");
}

std::vector<GestureTemplate> make_templates(std::size_t classes, double jitter_scale) {
  if (classes < 2) throw ConfigError("need at least 2 classes");
  if (!(jitter_scale >= 0.0)) throw ConfigError("jitter_scale must be >= 0");
  std::vector<GestureTemplate> out;
  for (std::size_t c = 0; c < classes; ++c) {
    GestureTemplate t;
    t.class_id = c;
    const double frac = static_cast<double>(c) / static_cast<double>(classes);
    t.right.kind = static_cast<PathKind>(c % 3);
    t.right.amplitude = 0.08 + 0.03 * static_cast<double>((c / 3) % 2);
    t.right.frequency = 1.0 + static_cast<double>((c / 6) % 2);
    t.right.phase = kTwoPi * frac;
    t.right.center = {0.0, -0.05 * static_cast<double>(c % 2)};
    t.left.kind = static_cast<PathKind>((c + 1) % 3);
    t.left.amplitude = 0.07;
    t.left.frequency = 1.0;
    t.left.phase = -kTwoPi * frac;
    t.left.center = {0.0, 0.0};
    t.point_jitter *= jitter_scale;
    t.amplitude_jitter *= jitter_scale;
    t.phase_jitter *= jitter_scale;
    out.push_back(t);
  }
  return out;
}

std::array<double, 2> path_point(const HandPath& p, double s) {
  const double a = kTwoPi * p.frequency * s + p.phase;
  double x = 0.0, y = 0.0;
  switch (p.kind) {
    case PathKind::kCircle:
      x = std::cos(a);
      y = std::sin(a);
      break;
    case PathKind::kLine:
      x = std::cos(p.phase) * std::sin(kTwoPi * p.frequency * s);
      y = std::sin(p.phase) * std::sin(kTwoPi * p.frequency * s);
      break;
    case PathKind::kFigureEight:
      x = std::sin(a);
      y = 0.5 * std::sin(2.0 * a);
      break;
  }
  return {p.center[0] + p.amplitude * x, p.center[1] + p.amplitude * y};
}

GestureSequence synth_sequence(const GestureTemplate& tmpl, std::mt19937_64& rng, std::size_t length) {
  tmpl.validate();
  if (length == 0) length = std::uniform_int_distribution<std::size_t>(20, 60)(rng);
  if (length < 2) throw ConfigError("synthetic sequences need >= 2 frames");
  const auto layout = LayoutSpec::holistic543();

  HandPath left = tmpl.left, right = tmpl.right;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (HandPath* p : {&left, &right}) {
    p->amplitude *= std::max(0.1, 1.0 + tmpl.amplitude_jitter * unit(rng));
    p->phase += tmpl.phase_jitter * unit(rng);
  }

  std::vector<Landmark> anchors(layout->total_landmarks());
  const auto* face = layout->find("face");
  const auto* body = layout->find("body");
  for (std::size_t i = face->start; i < face->end; ++i) anchors[i] = face_anchor(i - face->start);
  for (std::size_t i = body->start; i < body->end; ++i) anchors[i] = body_anchor(i - body->start);

  GestureSequence seq;
  seq.fps = 30;
  for (std::size_t f = 0; f < length; ++f) {
    const double s = static_cast<double>(f) / static_cast<double>(length - 1);
    KeypointFrame frame;
    frame.t = static_cast<std::int64_t>(f);
    frame.layout = layout;
    frame.landmarks = anchors;
    const std::pair<const char*, std::pair<const HandPath*, std::array<double, 2>>> hands[] = {
        {"left_hand", {&left, kLeftRest}}, {"right_hand", {&right, kRightRest}}};
    for (const auto& [name, hp] : hands) {
      const auto* block = layout->find(name);
      const auto c = path_point(*hp.first, s);
      for (std::size_t j = 0; j < block->size(); ++j) {
        const auto o = hand_offset(j);
        Landmark& l = frame.landmarks[block->start + j];
        l.x = hp.second[0] + c[0] + o[0];
        l.y = hp.second[1] + c[1] + o[1];
        l.z = -0.05;
        if (tmpl.point_jitter > 0.0) {
          l.x += tmpl.point_jitter * unit(rng);
          l.y += tmpl.point_jitter * unit(rng);
          l.z += tmpl.point_jitter * unit(rng);
        }
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

DatasetManifest synth_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir,
                              std::size_t jobs) {
  if (spec.classes < 2) throw ConfigError("synth needs C >= 2");
  if (spec.per_class < 2) throw ConfigError("synth needs n >= 2");
  const auto templates = make_templates(spec.classes, spec.jitter_scale);
  DatasetManifest m;
  m.seed = spec.seed;
  m.base_dir = out_dir;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    char name[16];
    std::snprintf(name, sizeof name, "g%02zu", c);
    m.classes.push_back(name);
  }
  for (std::size_t c = 0; c < spec.classes; ++c)
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      char path[64];
      std::snprintf(path, sizeof path, "seqs/%s_%03zu.kpjl", m.classes[c].c_str(), i);
      m.sequences.push_back({path, m.classes[c]});
    }
  parallel_for(m.sequences.size(), jobs, [&](std::size_t k) {
    const auto& e = m.sequences[k];
    auto rng = derive_rng(spec.seed, e.path);
    auto seq = synth_sequence(templates[k / spec.per_class], rng);
    seq.label = e.label;
    seq.source_id = e.path;
    write_sequence(seq, out_dir / e.path);
  });
  write_manifest(m, out_dir / "manifest.json");
  return m;
}

double nearest_centroid_loo(const std::vector<Tensor>& inputs, const std::vector<std::size_t>& labels,
                            std::size_t classes) {
  if (inputs.empty()) throw EmptyError("oracle needs samples");
  if (inputs.size() != labels.size()) throw ShapeError("inputs/labels length mismatch");
  const std::size_t d = inputs.front().size();
  std::vector<std::vector<double>> sums(classes, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != d) throw ShapeError("oracle inputs differ in size");
    if (labels[i] >= classes) throw LabelError("label index out of range");
    counts[labels[i]]++;
    for (std::size_t k = 0; k < d; ++k) sums[labels[i]][k] += inputs[i][k];
  }
  for (std::size_t c = 0; c < classes; ++c)
    if (counts[c] < 2) throw StratifyError("oracle needs >= 2 samples per class");

  std::size_t correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& x = inputs[i];
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      const bool own = c == labels[i];
      const double n = static_cast<double>(counts[c] - (own ? 1 : 0));
      double dist = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double centroid = (sums[c][k] - (own ? x[k] : 0.0)) / n;
        dist += (x[k] - centroid) * (x[k] - centroid);
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(inputs.size());
}

double separability_oracle(const DatasetManifest& manifest, const PreprocessConfig& config,
                           std::size_t jobs) {
  validate_manifest(manifest);
  std::vector<Tensor> inputs(manifest.sequences.size());
  std::vector<std::size_t> labels(manifest.sequences.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    const auto& e = manifest.sequences[i];
    inputs[i] = preprocess_pipeline(read_sequence(manifest.resolve(e)), config);
    labels[i] = manifest.class_index(e.label);
  });
  return nearest_centroid_loo(inputs, labels, manifest.classes.size());
}

}  // namespace sgr
