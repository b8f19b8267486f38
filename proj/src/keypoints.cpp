// SPDX-License-Identifier: Apache-2.0
#include "sgr/keypoints.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sgr/errors.hpp"

namespace sgr {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

const std::set<std::string, std::less<>> kBlockNames = {"left_hand", "right_hand", "face",
                                                        "body"};

std::vector<LayoutBlock> make_blocks(std::size_t face) {
  std::vector<LayoutBlock> blocks;
  std::size_t at = 0;
  for (auto [name, n] : std::array<std::pair<const char*, std::size_t>, 4>{
           {{"left_hand", 21}, {"right_hand", 21}, {"face", face}, {"body", 33}}}) {
    blocks.push_back({name, at, at + n});
    at += n;
  }
  return blocks;
}

std::string_view trim_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
  return line;
}

}  // namespace

// --- LayoutSpec --------------------------------------------------------------

LayoutSpec::LayoutSpec(std::string name, std::vector<LayoutBlock> blocks)
    : name_(std::move(name)), blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw LayoutError("layout '" + name_ + "' has no blocks");
  std::set<std::string> seen;
  std::size_t expect = 0;
  for (const auto& b : blocks_) {
    if (!kBlockNames.count(b.name)) throw LayoutError("unknown block name '" + b.name + "'");
    if (!seen.insert(b.name).second) throw LayoutError("duplicate block '" + b.name + "'");
    if (b.start != expect || b.end <= b.start)
      throw LayoutError("blocks of '" + name_ + "' are not contiguous");
    expect = b.end;
  }
  total_ = expect;
}

const LayoutBlock* LayoutSpec::find(std::string_view block) const {
  for (const auto& b : blocks_)
    if (b.name == block) return &b;
  return nullptr;
}

std::size_t LayoutSpec::index_of(std::string_view block, std::size_t local) const {
  const auto* b = find(block);
  if (b == nullptr) throw LayoutError("layout '" + name_ + "' has no block '" + std::string(block) + "'");
  if (local >= b->size())
    throw LayoutError("index " + std::to_string(local) + " outside block '" + b->name + "'");
  return b->start + local;
}

std::shared_ptr<const LayoutSpec> LayoutSpec::holistic543() {
  static const auto layout = std::make_shared<const LayoutSpec>("holistic543", make_blocks(468));
  return layout;
}

std::shared_ptr<const LayoutSpec> LayoutSpec::paper522() {
  static const auto layout = std::make_shared<const LayoutSpec>("paper522", make_blocks(447));
  return layout;
}

std::shared_ptr<const LayoutSpec> LayoutSpec::by_name(std::string_view name) {
  if (name == "holistic543") return holistic543();
  if (name == "paper522") return paper522();
  throw LayoutError("unknown layout '" + std::string(name) + "'");
}

// --- frames and sequences ----------------------------------------------------

bool KeypointFrame::has_missing() const {
  return std::any_of(landmarks.begin(), landmarks.end(),
                     [](const Landmark& l) { return l.is_missing(); });
}

namespace {
bool same_bits(double a, double b) {
  return std::isnan(a) ? std::isnan(b) : (a == b && std::signbit(a) == std::signbit(b));
}
}  // namespace

bool same_values(const KeypointFrame& a, const KeypointFrame& b) {
  if (a.t != b.t || a.landmarks.size() != b.landmarks.size()) return false;
  if (a.layout && b.layout && a.layout->name() != b.layout->name()) return false;
  for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
    const auto& p = a.landmarks[i];
    const auto& q = b.landmarks[i];
    if (!same_bits(p.x, q.x) || !same_bits(p.y, q.y) || !same_bits(p.z, q.z)) return false;
  }
  return true;
}

bool same_values(const GestureSequence& a, const GestureSequence& b) {
  if (a.frames.size() != b.frames.size() || a.fps != b.fps || a.space != b.space) return false;
  for (std::size_t i = 0; i < a.frames.size(); ++i)
    if (!same_values(a.frames[i], b.frames[i])) return false;
  return true;
}

const LayoutPtr& GestureSequence::layout() const {
  if (frames.empty()) throw EmptyError("sequence '" + source_id + "' has no frames");
  return frames.front().layout;
}

void validate_sequence(const GestureSequence& seq) {
  if (seq.frames.empty()) throw EmptyError("sequence '" + seq.source_id + "' has no frames");
  const auto& layout = seq.frames.front().layout;
  if (!layout) throw LayoutError("frame without layout");
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& f = seq.frames[i];
    if (f.layout != layout && (!f.layout || f.layout->name() != layout->name()))
      throw LayoutError("sequence '" + seq.source_id + "' mixes layouts");
    if (f.landmarks.size() != layout->total_landmarks())
      throw LayoutError("frame " + std::to_string(f.t) + " has " +
                        std::to_string(f.landmarks.size()) + " landmarks, layout expects " +
                        std::to_string(layout->total_landmarks()));
    if (i > 0 && f.t <= seq.frames[i - 1].t)
      throw OrderError("frame index " + std::to_string(f.t) + " follows " +
                       std::to_string(seq.frames[i - 1].t));
  }
}

// --- record format -----------------------------------------------------------

std::string format_double(double v) {
  if (v == 0.0 && std::signbit(v)) return "-0.0";
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw ValueError("cannot format value");
  return std::string(buf.data(), end);
}

namespace {

double coordinate(const json& v) {
  if (!v.is_number()) throw ParseError("landmark coordinate is not a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) throw ValueError("non-finite landmark coordinate");
  return d;
}

Landmark parse_landmark(const json& v) {
  if (v.is_null()) return Landmark::missing();
  if (!v.is_array() || v.size() != 3) throw ParseError("landmark must be an [x,y,z] triple");
  const bool any_null = v[0].is_null() || v[1].is_null() || v[2].is_null();
  if (any_null) {
    if (v[0].is_null() && v[1].is_null() && v[2].is_null()) return Landmark::missing();
    throw ValueError("partially missing landmark");
  }
  return {coordinate(v[0]), coordinate(v[1]), coordinate(v[2])};
}

json parse_json(std::string_view text, const char* what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed ") + what + ": " + e.what());
  }
}

}  // namespace

KeypointFrame parse_frame_record(std::string_view line, const LayoutPtr& layout) {
  if (!layout) throw LayoutError("no layout declared");
  const json rec = parse_json(trim_line(line), "frame record");
  if (!rec.is_object()) throw ParseError("frame record is not an object");
  auto t_it = rec.find("t");
  auto lm_it = rec.find("lm");
  if (t_it == rec.end() || !t_it->is_number_integer())
    throw ParseError("frame record needs an integer 't'");
  if (lm_it == rec.end() || !lm_it->is_array()) throw ParseError("frame record needs an 'lm' array");

  KeypointFrame frame;
  frame.t = t_it->get<std::int64_t>();
  frame.layout = layout;
  if (lm_it->size() != layout->total_landmarks())
    throw LayoutError("frame " + std::to_string(frame.t) + " has " + std::to_string(lm_it->size()) +
                      " landmarks, layout '" + layout->name() + "' expects " +
                      std::to_string(layout->total_landmarks()));
  frame.landmarks.reserve(lm_it->size());
  for (const auto& v : *lm_it) frame.landmarks.push_back(parse_landmark(v));
  return frame;
}

std::string write_frame_record(const KeypointFrame& frame) {
  std::string out;
  out.reserve(16 + frame.landmarks.size() * 40);
  out += "{\"t\":";
  out += std::to_string(frame.t);
  out += ",\"lm\":[";
  for (std::size_t i = 0; i < frame.landmarks.size(); ++i) {
    if (i) out += ',';
    const auto& l = frame.landmarks[i];
    if (l.is_missing()) {
      out += "null";
      continue;
    }
    if (!l.is_finite()) throw ValueError("non-finite landmark coordinate");
    out += '[';
    out += format_double(l.x);
    out += ',';
    out += format_double(l.y);
    out += ',';
    out += format_double(l.z);
    out += ']';
  }
  out += "]}";
  return out;
}

SequenceHeader parse_sequence_header(std::string_view line) {
  const json h = parse_json(trim_line(line), "sequence header");
  if (!h.is_object() || !h.contains("layout") || !h["layout"].is_string())
    throw ParseError("sequence header needs a 'layout' name");
  SequenceHeader header;
  header.layout = LayoutSpec::by_name(h["layout"].get<std::string>());
  if (h.contains("k")) {
    if (!h["k"].is_number_integer()) throw ParseError("header 'k' must be an integer");
    if (h["k"].get<std::int64_t>() != static_cast<std::int64_t>(header.layout->total_landmarks()))
      throw LayoutError("header k disagrees with layout '" + header.layout->name() + "'");
  }
  if (h.contains("fps")) {
    if (!h["fps"].is_number_integer() || h["fps"].get<int>() <= 0)
      throw ParseError("header 'fps' must be a positive integer");
    header.fps = h["fps"].get<int>();
  }
  if (h.contains("space")) {
    const auto s = h["space"].get<std::string>();
    if (s == "normalized") header.space = CoordinateSpace::kNormalized;
    else if (s != "raw") throw ParseError("unknown coordinate space '" + s + "'");
  }
  return header;
}

std::string write_sequence_header(const SequenceHeader& header) {
  std::string out = "{\"layout\":\"" + header.layout->name() +
                    "\",\"k\":" + std::to_string(header.layout->total_landmarks()) +
                    ",\"fps\":" + std::to_string(header.fps);
  if (header.space == CoordinateSpace::kNormalized) out += ",\"space\":\"normalized\"";
  out += '}';
  return out;
}

GestureSequence parse_sequence(std::string_view text, std::string source_id) {
  GestureSequence seq;
  seq.source_id = std::move(source_id);
  std::optional<SequenceHeader> header;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = trim_line(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    if (!header) {
      header = parse_sequence_header(line);
      seq.fps = header->fps;
      seq.space = header->space;
      continue;
    }
    if (line.find("\"layout\"") != std::string_view::npos) {
      const auto other = parse_sequence_header(line);
      if (other.layout->name() != header->layout->name())
        throw LayoutError("sequence '" + seq.source_id + "' mixes layouts");
      continue;
    }
    seq.frames.push_back(parse_frame_record(line, header->layout));
  }
  if (!header || seq.frames.empty()) throw EmptyError("sequence '" + seq.source_id + "' is empty");
  validate_sequence(seq);
  return seq;
}

std::string serialize_sequence(const GestureSequence& seq) {
  validate_sequence(seq);
  std::string out = write_sequence_header({seq.layout(), seq.fps, seq.space});
  out += '\n';
  for (const auto& f : seq.frames) {
    out += write_frame_record(f);
    out += '\n';
  }
  return out;
}

GestureSequence read_sequence(const std::filesystem::path& path) {
  return parse_sequence(read_text_file(path), path.string());
}

void write_sequence(const GestureSequence& seq, const std::filesystem::path& path) {
  write_text_file(path, serialize_sequence(seq));
}

// --- manifests ---------------------------------------------------------------

std::size_t DatasetManifest::class_index(std::string_view label) const {
  auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) throw LabelError("label '" + std::string(label) + "' is not a class");
  return static_cast<std::size_t>(it - classes.begin());
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& entry) const {
  std::filesystem::path p(entry.path);
  if (p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::vector<std::size_t> validate_manifest(const DatasetManifest& manifest) {
  if (manifest.classes.size() < 2) throw LabelError("a manifest needs at least 2 classes");
  std::set<std::string> names;
  for (const auto& c : manifest.classes)
    if (!names.insert(c).second) throw DuplicateError("class '" + c + "' listed twice");
  std::vector<std::size_t> counts(manifest.classes.size(), 0);
  std::set<std::string> paths;
  for (const auto& e : manifest.sequences) {
    counts[manifest.class_index(e.label)]++;
    if (!paths.insert(e.path).second) throw DuplicateError("path '" + e.path + "' listed twice");
  }
  return counts;
}

DatasetManifest parse_manifest(std::string_view text) {
  const json j = parse_json(text, "manifest");
  DatasetManifest m;
  try {
    m.classes = j.at("classes").get<std::vector<std::string>>();
    if (j.contains("seed")) m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("sequences"))
      m.sequences.push_back({e.at("path").get<std::string>(), e.at("label").get<std::string>()});
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  ordered_json j;
  j["classes"] = manifest.classes;
  j["seed"] = manifest.seed;
  j["sequences"] = ordered_json::array();
  for (const auto& e : manifest.sequences) {
    ordered_json s;
    s["path"] = e.path;
    s["label"] = e.label;
    j["sequences"].push_back(std::move(s));
  }
  return j.dump(1) + "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  auto m = parse_manifest(read_text_file(path));
  m.base_dir = path.parent_path();
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  write_text_file(path, serialize_manifest(manifest));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

}  // namespace sgr
