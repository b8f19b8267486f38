// SPDX-License-Identifier: Apache-2.0
#include "sgr/config.hpp"

#include <set>

#include "sgr/errors.hpp"
#include "sgr/training.hpp"

namespace sgr {

using json = nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key())) throw ConfigError(std::string("unknown ") + what + " key '" + it.key() + "'");
}

template <typename V>
void read(const json& j, const char* key, V& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

json to_json(const ModelSpec& s) {
  return json{{"mode", to_string(s.mode)},
              {"frames", s.frames},
              {"keypoints", s.keypoints},
              {"channels", s.channels},
              {"conv_filters", s.conv_filters},
              {"kernel", s.kernel},
              {"lstm_units", s.lstm_units},
              {"lstm_proj_dim", s.lstm_proj_dim},
              {"classes", s.classes},
              {"dropout", s.dropout},
              {"post_conv_dropout", s.post_conv_dropout},
              {"bn_momentum", s.bn_momentum},
              {"bn_eps", s.bn_eps},
              {"dtype", s.dtype},
              {"seed", s.seed},
              {"layout", s.layout},
              {"input_selection", s.input_selection},
              {"class_names", s.class_names}};
}

ModelSpec model_spec_from_json(const json& j, ModelSpec s) {
  reject_unknown(j,
                 {"mode", "frames", "keypoints", "channels", "conv_filters", "kernel", "lstm_units",
                  "lstm_proj_dim", "classes", "dropout", "post_conv_dropout", "bn_momentum",
                  "bn_eps", "dtype", "seed", "layout", "input_selection", "class_names"},
                 "model");
  std::string mode = to_string(s.mode);
  read(j, "mode", mode);
  s.mode = model_mode_from_string(mode);
  read(j, "frames", s.frames);
  read(j, "keypoints", s.keypoints);
  read(j, "channels", s.channels);
  read(j, "conv_filters", s.conv_filters);
  read(j, "kernel", s.kernel);
  read(j, "lstm_units", s.lstm_units);
  read(j, "lstm_proj_dim", s.lstm_proj_dim);
  read(j, "classes", s.classes);
  read(j, "dropout", s.dropout);
  read(j, "post_conv_dropout", s.post_conv_dropout);
  read(j, "bn_momentum", s.bn_momentum);
  read(j, "bn_eps", s.bn_eps);
  read(j, "dtype", s.dtype);
  read(j, "seed", s.seed);
  read(j, "layout", s.layout);
  read(j, "input_selection", s.input_selection);
  read(j, "class_names", s.class_names);
  return s;
}

json to_json(const PreprocessConfig& c) {
  const auto& n = c.normalization;
  const auto& k = c.kalman;
  return json{{"frames", c.frames},
              {"normalization",
               {{"ref_block", n.ref_block},
                {"ref_index", n.ref_index},
                {"shoulder_pair", n.shoulder_pair},
                {"epsilon_dnorm", n.epsilon_dnorm}}},
              {"kalman", {{"q", k.q}, {"r", k.r}, {"p0", k.p0}, {"dt", k.dt}}}};
}

PreprocessConfig preprocess_config_from_json(const json& j, PreprocessConfig c) {
  reject_unknown(j, {"frames", "normalization", "kalman"}, "preprocess");
  read(j, "frames", c.frames);
  if (auto it = j.find("normalization"); it != j.end()) {
    reject_unknown(*it, {"ref_block", "ref_index", "shoulder_pair", "epsilon_dnorm"}, "normalization");
    read(*it, "ref_block", c.normalization.ref_block);
    read(*it, "ref_index", c.normalization.ref_index);
    read(*it, "shoulder_pair", c.normalization.shoulder_pair);
    read(*it, "epsilon_dnorm", c.normalization.epsilon_dnorm);
  }
  if (auto it = j.find("kalman"); it != j.end()) {
    reject_unknown(*it, {"q", "r", "p0", "dt"}, "kalman");
    read(*it, "q", c.kalman.q);
    read(*it, "r", c.kalman.r);
    read(*it, "p0", c.kalman.p0);
    read(*it, "dt", c.kalman.dt);
  }
  return c;
}

json to_json(const AugmentSpec& a) {
  return json{{"rot_max_deg", a.rot_max_deg},   {"scale_lo", a.scale_lo},
              {"scale_hi", a.scale_hi},         {"tshift_frac", a.tshift_frac},
              {"noise_sigma", a.noise_sigma},   {"copies_per_sequence", a.copies_per_sequence},
              {"seed", a.seed}};
}

AugmentSpec augment_spec_from_json(const json& j, AugmentSpec a) {
  reject_unknown(j,
                 {"rot_max_deg", "scale_lo", "scale_hi", "tshift_frac", "noise_sigma",
                  "copies_per_sequence", "seed"},
                 "augment");
  read(j, "rot_max_deg", a.rot_max_deg);
  read(j, "scale_lo", a.scale_lo);
  read(j, "scale_hi", a.scale_hi);
  read(j, "tshift_frac", a.tshift_frac);
  read(j, "noise_sigma", a.noise_sigma);
  read(j, "copies_per_sequence", a.copies_per_sequence);
  read(j, "seed", a.seed);
  return a;
}

json to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"min_delta", c.min_delta},
              {"lr0", c.adam.lr0},
              {"beta1", c.adam.beta1},
              {"beta2", c.adam.beta2},
              {"adam_eps", c.adam.eps},
              {"decay_factor", c.adam.decay_factor},
              {"decay_every", c.adam.decay_every},
              {"class_weighting", c.class_weighting},
              {"seed", c.seed},
              {"dtype", c.dtype},
              {"val_frac", c.val_frac},
              {"train_frac", c.train_frac},
              {"augment_copies", c.augment_copies},
              {"record_timing", c.record_timing}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  reject_unknown(j,
                 {"batch_size", "max_epochs", "patience", "min_delta", "lr0", "beta1", "beta2",
                  "adam_eps", "decay_factor", "decay_every", "class_weighting", "seed", "dtype",
                  "val_frac", "train_frac", "augment_copies", "record_timing"},
                 "train");
  TrainConfig c = base;
  read(j, "batch_size", c.batch_size);
  read(j, "max_epochs", c.max_epochs);
  read(j, "patience", c.patience);
  read(j, "min_delta", c.min_delta);
  read(j, "lr0", c.adam.lr0);
  read(j, "beta1", c.adam.beta1);
  read(j, "beta2", c.adam.beta2);
  read(j, "adam_eps", c.adam.eps);
  read(j, "decay_factor", c.adam.decay_factor);
  read(j, "decay_every", c.adam.decay_every);
  read(j, "class_weighting", c.class_weighting);
  read(j, "seed", c.seed);
  read(j, "dtype", c.dtype);
  read(j, "val_frac", c.val_frac);
  read(j, "train_frac", c.train_frac);
  read(j, "augment_copies", c.augment_copies);
  read(j, "record_timing", c.record_timing);
  return c;
}

}  // namespace sgr
