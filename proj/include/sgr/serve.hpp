// SPDX-License-Identifier: Apache-2.0
//
// Sliding-window streaming inference. StreamSession is transport-free;
// ProtocolSession speaks the JSON message protocol; WsServer carries it over
// WebSocket.
#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "sgr/model.hpp"

namespace sgr {

struct StreamConfig {
  std::size_t window = 30;  // W, raw frames per prediction window
  std::size_t stride = 5;   // S

  void validate() const;
};

struct Prediction {
  std::int64_t window_end = 0;  // t of the newest frame in the window
  std::size_t label = 0;
  std::string label_name;
  std::vector<double> probs;
  double latency_ms = 0.0;
};

/// Per-connection state: imputer and Kalman filters persist over the whole
/// session, and only the last W normalized frames are retained.
class StreamSession {
 public:
  StreamSession(std::shared_ptr<Model<double>> model, StreamConfig config = {});

  /// Throws LayoutError on a layout mismatch and ValueError on non-finite
  /// coordinates (the frame is then not consumed).
  std::optional<Prediction> handle_frame(const KeypointFrame& frame);

  std::size_t frames_seen() const { return frames_seen_; }
  std::size_t buffered() const { return buffer_.size(); }
  const StreamConfig& config() const { return config_; }
  const Model<double>& model() const { return *model_; }
  const LayoutPtr& layout() const { return layout_; }

 private:
  std::shared_ptr<Model<double>> model_;
  StreamConfig config_;
  LayoutPtr layout_;
  std::vector<std::size_t> selection_;
  Imputer imputer_;
  KalmanBank kalman_;
  std::deque<KeypointFrame> buffer_;
  std::size_t frames_seen_ = 0;
  std::optional<std::int64_t> last_t_;
};

/// Emission rule: frames_seen >= W and (frames_seen - W) % S == 0.
bool should_emit(std::size_t frames_seen, const StreamConfig& config);

/// Offline reference: the whole sequence is normalized and smoothed in one
/// left-to-right pass, then every emitting window is classified.
std::vector<Prediction> offline_window_predictions(Model<double>& model, const GestureSequence& seq,
                                                   const StreamConfig& config = {});

// --- protocol ----------------------------------------------------------------

enum CloseCode : int {
  kCloseLayout = 4001,
  kCloseBadValue = 4002,
  kCloseProtocolOrder = 4003,
};

struct ProtocolReply {
  std::vector<std::string> messages;
  std::optional<int> close_code;
  std::string close_reason;
};

std::string prediction_json(const Prediction& p);

/// Decodes a checkpoint once; each session gets its own model instance built
/// from the shared bytes because layers cache activations during forward.
class ModelSource {
 public:
  explicit ModelSource(std::string checkpoint_bytes);
  static ModelSource from_file(const std::filesystem::path& path);
  std::shared_ptr<Model<double>> instantiate() const;
  const ModelSpec& spec() const { return spec_; }

 private:
  std::string bytes_;
  ModelSpec spec_;
};

/// hello -> ready, then frame -> [prediction]. Any violation yields a close
/// code; after a close every further message is ignored.
class ProtocolSession {
 public:
  ProtocolSession(const ModelSource& source, StreamConfig defaults = {});
  ProtocolReply handle_text(std::string_view message);
  bool closed() const { return closed_; }
  const StreamSession* stream() const { return stream_.get(); }

 private:
  ProtocolReply close(int code, std::string reason);

  const ModelSource& source_;
  StreamConfig defaults_;
  std::unique_ptr<StreamSession> stream_;
  bool closed_ = false;
};

// --- WebSocket server --------------------------------------------------------

struct ServeOptions {
  std::string host = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  std::size_t threads = 2;
  int ping_interval_s = 10;
  bool handle_signals = false;  // stop on SIGINT/SIGTERM
  StreamConfig stream;
};

class WsServer {
 public:
  WsServer(ServeOptions options, std::shared_ptr<const ModelSource> source);
  ~WsServer();
  WsServer(const WsServer&) = delete;
  WsServer& operator=(const WsServer&) = delete;

  /// Binds and starts the worker threads; returns the bound port.
  unsigned short start();
  /// Blocks until stop() is called.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// --- latency -----------------------------------------------------------------

struct LatencyStats {
  double p50 = 0.0;
  double p95 = 0.0;
  double mean = 0.0;
  std::size_t n = 0;
};

/// Linear-interpolated percentiles of the samples.
LatencyStats summarize_latency(std::vector<double> samples_ms);

/// Streams a synthetic gesture through a session until `n` windows have been
/// classified and reports per-window wall-clock latency.
LatencyStats bench_latency(const ModelSource& source, std::size_t n = 1000,
                           const StreamConfig& config = {}, std::uint64_t seed = 0);

}  // namespace sgr
