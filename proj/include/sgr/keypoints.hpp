// SPDX-License-Identifier: Apache-2.0
//
// Landmark data model: layouts, frames, sequences, dataset manifests and the
// line-oriented .kpjl file format.
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace sgr {

struct LayoutBlock {
  std::string name;  // left_hand | right_hand | face | body
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  std::size_t size() const { return end - start; }
};

/// Partition of a flat landmark array into named anatomical blocks.
class LayoutSpec {
 public:
  LayoutSpec(std::string name, std::vector<LayoutBlock> blocks);

  const std::string& name() const { return name_; }
  const std::vector<LayoutBlock>& blocks() const { return blocks_; }
  std::size_t total_landmarks() const { return total_; }

  /// Block with the given name, or nullptr.
  const LayoutBlock* find(std::string_view block) const;

  /// Flat index of a block-local landmark. Throws LayoutError.
  std::size_t index_of(std::string_view block, std::size_t local) const;

  /// 21 + 21 + 468 + 33 = 543.
  static std::shared_ptr<const LayoutSpec> holistic543();
  /// 522-wide layout; the face block is truncated to 447 points.
  static std::shared_ptr<const LayoutSpec> paper522();
  /// Built-in layout by name. Throws LayoutError for unknown names.
  static std::shared_ptr<const LayoutSpec> by_name(std::string_view name);

 private:
  std::string name_;
  std::vector<LayoutBlock> blocks_;
  std::size_t total_ = 0;
};

using LayoutPtr = std::shared_ptr<const LayoutSpec>;

struct Landmark {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  /// Tracker dropout sentinel.
  static Landmark missing() {
    return {std::nan(""), std::nan(""), std::nan("")};
  }
  bool is_missing() const {
    return std::isnan(x) && std::isnan(y) && std::isnan(z);
  }
  bool is_finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
  }

  friend bool operator==(const Landmark& a, const Landmark& b) = default;
};

/// Coordinate space a sequence lives in. Normalized sequences have already
/// gone through the per-frame normalization and smoothing stages.
enum class CoordinateSpace { kRaw, kNormalized };

struct KeypointFrame {
  std::int64_t t = 0;
  std::vector<Landmark> landmarks;
  LayoutPtr layout;

  bool has_missing() const;
};

bool same_values(const KeypointFrame& a, const KeypointFrame& b);

struct GestureSequence {
  std::vector<KeypointFrame> frames;
  std::optional<std::string> label;
  std::string source_id;
  int fps = 30;
  CoordinateSpace space = CoordinateSpace::kRaw;

  const LayoutPtr& layout() const;
  std::size_t size() const { return frames.size(); }
};

/// Checks ordering, layout consistency and non-emptiness. Throws
/// EmptyError, OrderError or LayoutError.
void validate_sequence(const GestureSequence& seq);

bool same_values(const GestureSequence& a, const GestureSequence& b);

// --- .kpjl records -----------------------------------------------------------

/// Shortest decimal that parses back to exactly `v`.
std::string format_double(double v);

/// Parses one frame line against `layout`. Accepts `null` or
/// `[null,null,null]` for a missing landmark.
KeypointFrame parse_frame_record(std::string_view line, const LayoutPtr& layout);

/// Canonical single-line rendering (no trailing newline).
std::string write_frame_record(const KeypointFrame& frame);

struct SequenceHeader {
  LayoutPtr layout;
  int fps = 30;
  CoordinateSpace space = CoordinateSpace::kRaw;
};

SequenceHeader parse_sequence_header(std::string_view line);
std::string write_sequence_header(const SequenceHeader& header);

GestureSequence parse_sequence(std::string_view text, std::string source_id = {});
std::string serialize_sequence(const GestureSequence& seq);

GestureSequence read_sequence(const std::filesystem::path& path);
void write_sequence(const GestureSequence& seq, const std::filesystem::path& path);

// --- manifests ---------------------------------------------------------------

struct ManifestEntry {
  std::string path;
  std::string label;
};

struct DatasetManifest {
  std::vector<std::string> classes;
  std::vector<ManifestEntry> sequences;
  std::uint64_t seed = 0;
  /// Directory relative paths are resolved against. Not serialized.
  std::filesystem::path base_dir;

  std::size_t class_index(std::string_view label) const;
  std::filesystem::path resolve(const ManifestEntry& entry) const;
};

/// Per-class sample counts, ordered like `manifest.classes`.
std::vector<std::size_t> validate_manifest(const DatasetManifest& manifest);

DatasetManifest parse_manifest(std::string_view text);
std::string serialize_manifest(const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// --- small file helpers ------------------------------------------------------

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace sgr
