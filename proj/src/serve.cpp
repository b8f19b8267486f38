// SPDX-License-Identifier: Apache-2.0
#include "sgr/serve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "sgr/errors.hpp"
#include "sgr/parallel.hpp"
#include "sgr/synth.hpp"

namespace sgr {

using json = nlohmann::json;

void StreamConfig::validate() const {
  if (window < 2) throw ConfigError("window must be >= 2");
  if (stride < 1) throw ConfigError("stride must be >= 1");
}

bool should_emit(std::size_t frames_seen, const StreamConfig& c) {
  return frames_seen >= c.window && (frames_seen - c.window) % c.stride == 0;
}

namespace {

Prediction classify_window(Model<double>& model, const std::vector<KeypointFrame>& frames,
                           const std::vector<std::size_t>& selection) {
  const Tensor window = select_landmarks(window_tensor(frames, model.preprocess().frames), selection);
  Shape batched{1};
  for (std::size_t d : window.shape()) batched.push_back(d);
  const Tensor probs = predict(model, window.reshaped(batched));
  Prediction p;
  p.window_end = frames.back().t;
  p.probs.assign(probs.values().begin(), probs.values().end());
  p.label = static_cast<std::size_t>(std::max_element(p.probs.begin(), p.probs.end()) - p.probs.begin());
  p.label_name = model.class_name(p.label);
  return p;
}

}  // namespace

StreamSession::StreamSession(std::shared_ptr<Model<double>> model, StreamConfig config)
    : model_(std::move(model)),
      config_(config),
      layout_(LayoutSpec::by_name(model_->spec().layout)),
      selection_(selected_landmarks(*layout_, model_->spec().input_selection)),
      imputer_(model_->preprocess().normalization),
      kalman_(model_->preprocess().kalman) {
  config_.validate();
  model_->preprocess().normalization.validate(*layout_);
}

std::optional<Prediction> StreamSession::handle_frame(const KeypointFrame& frame) {
  const auto start = std::chrono::steady_clock::now();
  if (!frame.layout || frame.layout->name() != layout_->name() ||
      frame.landmarks.size() != layout_->total_landmarks())
    throw LayoutError("frame does not match session layout '" + layout_->name() + "'");
  if (last_t_ && frame.t <= *last_t_)
    throw OrderError("frame t=" + std::to_string(frame.t) + " is not after t=" + std::to_string(*last_t_));
  for (const auto& l : frame.landmarks)
    if (!l.is_missing() && !l.is_finite()) throw ValueError("non-finite landmark at t=" + std::to_string(frame.t));

  // Imputer state only advances once the frame is known to be usable.
  Imputer imputer = imputer_;
  const KeypointFrame imputed = imputer(frame);
  const KeypointFrame normalized = normalize_frame(imputed, model_->preprocess().normalization);
  imputer_ = std::move(imputer);
  buffer_.push_back(kalman_.step(normalized));
  if (buffer_.size() > config_.window) buffer_.pop_front();
  ++frames_seen_;
  last_t_ = frame.t;
  if (!should_emit(frames_seen_, config_)) return std::nullopt;

  Prediction p = classify_window(*model_, {buffer_.begin(), buffer_.end()}, selection_);
  p.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return p;
}

std::vector<Prediction> offline_window_predictions(Model<double>& model, const GestureSequence& seq,
                                                   const StreamConfig& config) {
  config.validate();
  const auto layout = LayoutSpec::by_name(model.spec().layout);
  if (seq.layout()->name() != layout->name())
    throw LayoutError("sequence layout '" + seq.layout()->name() + "' does not match model layout '" +
                      layout->name() + "'");
  const auto selection = selected_landmarks(*layout, model.spec().input_selection);
  const GestureSequence s = normalize_and_smooth(seq, model.preprocess());
  std::vector<Prediction> out;
  for (std::size_t seen = 1; seen <= s.frames.size(); ++seen) {
    if (!should_emit(seen, config)) continue;
    const std::vector<KeypointFrame> window(s.frames.begin() + static_cast<std::ptrdiff_t>(seen - config.window),
                                            s.frames.begin() + static_cast<std::ptrdiff_t>(seen));
    out.push_back(classify_window(model, window, selection));
  }
  return out;
}

// --- protocol ----------------------------------------------------------------

std::string prediction_json(const Prediction& p) {
  std::string s = "{\"type\":\"prediction\",\"window_end\":" + std::to_string(p.window_end) +
                  ",\"label\":" + json(p.label_name).dump() + ",\"probs\":[";
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    if (i) s += ',';
    s += format_double(p.probs[i]);
  }
  s += "],\"latency_ms\":" + format_double(p.latency_ms) + "}";
  return s;
}

ModelSource::ModelSource(std::string checkpoint_bytes) : bytes_(std::move(checkpoint_bytes)) {
  spec_ = decode_checkpoint<double>(bytes_).spec();
  if (spec_.mode != ModelMode::kTimePreserving)
    throw ConfigError("serving needs a time-preserving model");
}

ModelSource ModelSource::from_file(const std::filesystem::path& path) {
  return ModelSource(read_text_file(path));
}

std::shared_ptr<Model<double>> ModelSource::instantiate() const {
  return std::make_shared<Model<double>>(decode_checkpoint<double>(bytes_));
}

ProtocolSession::ProtocolSession(const ModelSource& source, StreamConfig defaults)
    : source_(source), defaults_(defaults) {
  defaults_.validate();
}

ProtocolReply ProtocolSession::close(int code, std::string reason) {
  closed_ = true;
  ProtocolReply r;
  r.close_code = code;
  r.close_reason = std::move(reason);
  return r;
}

ProtocolReply ProtocolSession::handle_text(std::string_view message) {
  if (closed_) return {};
  json msg;
  try {
    msg = json::parse(message);
  } catch (const json::exception& e) {
    return close(kCloseBadValue, "malformed JSON");
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
    return close(kCloseProtocolOrder, "message without type");
  const std::string type = msg["type"].get<std::string>();

  if (type == "hello") {
    if (stream_) return close(kCloseProtocolOrder, "duplicate hello");
    const std::string layout = msg.value("layout", std::string());
    if (layout != source_.spec().layout)
      return close(kCloseLayout, "layout '" + layout + "' not served; expected '" + source_.spec().layout + "'");
    StreamConfig cfg = defaults_;
    if (msg.contains("stride")) {
      const auto& s = msg["stride"];
      if (!s.is_number_integer() || s.get<long long>() < 1) return close(kCloseBadValue, "stride must be an integer >= 1");
      cfg.stride = s.get<std::size_t>();
    }
    stream_ = std::make_unique<StreamSession>(source_.instantiate(), cfg);
    json ready{{"type", "ready"}, {"classes", json::array()}};
    for (std::size_t k = 0; k < source_.spec().classes; ++k) ready["classes"].push_back(stream_->model().class_name(k));
    ProtocolReply r;
    r.messages.push_back(ready.dump());
    return r;
  }

  if (type == "frame") {
    if (!stream_) return close(kCloseProtocolOrder, "frame before hello");
    const auto& layout = stream_->layout();
    if (!msg.contains("t") || !msg["t"].is_number_integer()) return close(kCloseBadValue, "frame needs integer t");
    if (!msg.contains("lm") || !msg["lm"].is_array()) return close(kCloseBadValue, "frame needs lm array");
    const auto& lm = msg["lm"];
    if (lm.size() != layout->total_landmarks())
      return close(kCloseLayout, "frame has " + std::to_string(lm.size()) + " landmarks, layout expects " +
                                     std::to_string(layout->total_landmarks()));
    KeypointFrame frame;
    frame.t = msg["t"].get<std::int64_t>();
    frame.layout = layout;
    frame.landmarks.reserve(lm.size());
    for (const auto& p : lm) {
      if (p.is_null()) {
        frame.landmarks.push_back(Landmark::missing());
        continue;
      }
      if (!p.is_array() || p.size() != 3) return close(kCloseBadValue, "landmark must be [x,y,z] or null");
      if (p[0].is_null() && p[1].is_null() && p[2].is_null()) {
        frame.landmarks.push_back(Landmark::missing());
        continue;
      }
      if (!p[0].is_number() || !p[1].is_number() || !p[2].is_number())
        return close(kCloseBadValue, "landmark coordinates must be numbers");
      frame.landmarks.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    try {
      ProtocolReply r;
      if (auto pred = stream_->handle_frame(frame)) r.messages.push_back(prediction_json(*pred));
      return r;
    } catch (const LayoutError& e) {
      return close(kCloseLayout, e.what());
    } catch (const Error& e) {
      return close(kCloseBadValue, e.what());
    }
  }

  return close(kCloseProtocolOrder, "unknown message type '" + type + "'");
}

// --- latency -----------------------------------------------------------------

LatencyStats summarize_latency(std::vector<double> samples) {
  if (samples.empty()) throw EmptyError("no latency samples");
  std::sort(samples.begin(), samples.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(samples.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    return samples[lo] + (samples[hi] - samples[lo]) * (pos - static_cast<double>(lo));
  };
  LatencyStats s;
  s.n = samples.size();
  s.p50 = quantile(0.5);
  s.p95 = quantile(0.95);
  for (double v : samples) s.mean += v;
  s.mean /= static_cast<double>(samples.size());
  return s;
}

LatencyStats bench_latency(const ModelSource& source, std::size_t n, const StreamConfig& config,
                           std::uint64_t seed) {
  if (n == 0) throw ConfigError("bench needs n >= 1");
  if (source.spec().layout != "holistic543") throw LayoutError("bench generates holistic543 frames only");
  StreamSession session(source.instantiate(), config);
  const auto templates = make_templates(2);
  auto rng = derive_rng(seed, "bench");
  const std::size_t frames = config.window + (n - 1) * config.stride;
  const GestureSequence seq = synth_sequence(templates[0], rng, frames);
  std::vector<double> samples;
  for (const auto& f : seq.frames)
    if (auto p = session.handle_frame(f)) samples.push_back(p->latency_ms);
  return summarize_latency(samples);
}

}  // namespace sgr
