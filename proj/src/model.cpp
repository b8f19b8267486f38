// SPDX-License-Identifier: Apache-2.0
#include "sgr/model.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "sgr/config.hpp"
#include "sgr/errors.hpp"

namespace sgr {

using json = nlohmann::json;

std::string to_string(ModelMode mode) {
  return mode == ModelMode::kPaperLiteral ? "paper_literal" : "time_preserving";
}

ModelMode model_mode_from_string(const std::string& s) {
  if (s == "paper_literal") return ModelMode::kPaperLiteral;
  if (s == "time_preserving") return ModelMode::kTimePreserving;
  throw ConfigError("unknown model mode '" + s + "'");
}

void ModelSpec::validate() const {
  if (classes < 2) throw ConfigError("a model needs at least 2 classes");
  if (frames < 1 || keypoints < 1 || channels < 1) throw ConfigError("input extents must be positive");
  if (conv_filters.empty()) throw ConfigError("at least one convolution block is required");
  if (kernel % 2 == 0) throw ConfigError("kernel size must be odd");
  if (lstm_units == 0 || lstm_proj_dim == 0) throw ConfigError("recurrent widths must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  if (dtype != "float64" && dtype != "float32") throw ConfigError("dtype must be float64 or float32");
  if (!class_names.empty() && class_names.size() != classes)
    throw ConfigError("class_names length differs from classes");
  std::size_t k = keypoints, t = frames;
  for (std::size_t i = 0; i < conv_filters.size(); ++i) {
    if (conv_filters[i] == 0) throw ConfigError("filter counts must be positive");
    k = pooled_extent(k, 2);
    if (mode == ModelMode::kPaperLiteral) t = pooled_extent(t, 2);
    if (k == 0 || t == 0)
      throw ShapeError("input (" + std::to_string(frames) + ", " + std::to_string(keypoints) +
                       ") is too small for " + std::to_string(conv_filters.size()) +
                       " pooling halvings");
  }
}

ModelSpec ModelSpec::paper_literal() {
  ModelSpec s;
  s.mode = ModelMode::kPaperLiteral;
  s.frames = 30;
  s.keypoints = 522;
  s.layout = "paper522";
  return s;
}

std::vector<std::size_t> selected_landmarks(const LayoutSpec& layout,
                                            const std::vector<std::string>& selection) {
  std::vector<std::size_t> idx;
  if (selection.empty()) {
    idx.resize(layout.total_landmarks());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }
  for (const auto& item : selection) {
    const auto colon = item.find(':');
    const std::string block = item.substr(0, colon);
    const auto* b = layout.find(block);
    if (b == nullptr) throw LayoutError("layout '" + layout.name() + "' has no block '" + block + "'");
    std::size_t count = b->size();
    if (colon != std::string::npos) {
      count = std::stoul(item.substr(colon + 1));
      if (count == 0 || count > b->size())
        throw LayoutError("selection '" + item + "' exceeds block size");
    }
    for (std::size_t i = 0; i < count; ++i) idx.push_back(b->start + i);
  }
  return idx;
}

Tensor select_landmarks(const Tensor& window, const std::vector<std::size_t>& indices) {
  if (window.rank() != 3 || window.dim(2) != 3) throw ShapeError("expected a (T, K, 3) window");
  const std::size_t t = window.dim(0), k = window.dim(1);
  if (indices.size() == k) {
    bool identity = true;
    for (std::size_t i = 0; i < k && identity; ++i) identity = indices[i] == i;
    if (identity) return window;
  }
  Tensor out({t, indices.size(), 3});
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= k) throw ShapeError("landmark index out of range");
      std::copy_n(&window[(f * k + indices[i]) * 3], 3, &out[(f * indices.size() + i) * 3]);
    }
  return out;
}

std::size_t BuildReport::total_params() const {
  std::size_t total = 0;
  for (const auto& r : rows) total += r.params;
  return total;
}

// --- Model -------------------------------------------------------------------

template <typename T>
Model<T>::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  preprocess_.frames = spec_.frames;
  std::mt19937_64 rng(spec_.seed);
  const bool literal = spec_.mode == ModelMode::kPaperLiteral;
  Shape cur{1, spec_.frames, spec_.keypoints, spec_.channels};
  auto add = [&](LayerPtr<T> layer) {
    cur = layer->output_shape(cur);
    report_.rows.push_back({layer->name(), layer->kind(), Shape(cur.begin() + 1, cur.end()),
                            layer->param_count(), true, ""});
    layers_.push_back(std::move(layer));
  };
  report_.rows.push_back({"input", "input", Shape(cur.begin() + 1, cur.end()), 0, true, ""});

  std::uint64_t dropout_id = 0;
  auto dropout_seed = [&] { return spec_.seed ^ (0x5bd1e995ull * ++dropout_id); };
  std::size_t cin = spec_.channels;
  for (std::size_t i = 0; i < spec_.conv_filters.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    const std::size_t f = spec_.conv_filters[i];
    auto conv = std::make_unique<Conv2D<T>>("conv2d_" + n, cin, f, spec_.kernel, spec_.kernel);
    conv->init(rng);
    add(std::move(conv));
    add(std::make_unique<BatchNorm<T>>("batchnorm_" + n, f, spec_.bn_momentum, spec_.bn_eps));
    add(std::make_unique<ReLU<T>>("relu_" + n));
    add(std::make_unique<MaxPool2D<T>>("maxpool2d_" + n, literal ? 2 : 1, 2));
    if (spec_.post_conv_dropout)
      add(std::make_unique<Dropout<T>>("conv_dropout_" + n, spec_.dropout, dropout_seed()));
    cin = f;
  }

  const std::size_t units = spec_.lstm_units;
  if (literal) {
    add(std::make_unique<Flatten<T>>("flatten"));
    const std::size_t flat = cur[1];
    const std::size_t reshaped = spec_.frames * spec_.lstm_proj_dim;
    report_.rows.push_back({"reshape", "reshape", {spec_.frames, spec_.lstm_proj_dim}, 0, false,
                            flat == reshaped ? "" :
                            "UNREALIZABLE: " + std::to_string(flat) + " elements cannot be viewed as " +
                                std::to_string(spec_.frames) + "x" +
                                std::to_string(spec_.lstm_proj_dim) + " = " +
                                std::to_string(reshaped)});
    report_.rows.push_back({"bilstm_1", "bilstm", {spec_.frames, 2 * units},
                            bilstm_param_count(spec_.lstm_proj_dim, units), false,
                            "counted from the stated input width"});
    report_.rows.push_back({"dropout_1", "dropout", {spec_.frames, 2 * units}, 0, false, ""});
    report_.rows.push_back({"bilstm_2", "bilstm", {2 * units}, bilstm_param_count(2 * units, units),
                            false, "counted from the stated input width"});
    report_.rows.push_back({"dropout_2", "dropout", {2 * units}, 0, false, ""});
    report_.rows.push_back({"dense", "dense", {spec_.classes},
                            dense_param_count(2 * units, spec_.classes), false, ""});
    return;
  }

  const std::size_t features = cur[2] * cur[3];
  add(std::make_unique<Reshape<T>>("reshape", 2, Shape{features}));
  auto proj = std::make_unique<Dense<T>>("projection", features, spec_.lstm_proj_dim);
  proj->init(rng);
  add(std::move(proj));
  if (cur[1] != spec_.frames)
    throw ShapeError("time axis collapsed before the recurrent layers");
  auto lstm1 = std::make_unique<BiLSTM<T>>("bilstm_1", spec_.lstm_proj_dim, units, true);
  lstm1->init(rng);
  add(std::move(lstm1));
  add(std::make_unique<Dropout<T>>("dropout_1", spec_.dropout, dropout_seed()));
  auto lstm2 = std::make_unique<BiLSTM<T>>("bilstm_2", 2 * units, units, false);
  lstm2->init(rng);
  add(std::move(lstm2));
  add(std::make_unique<Dropout<T>>("dropout_2", spec_.dropout, dropout_seed()));
  auto head = std::make_unique<Dense<T>>("dense", 2 * units, spec_.classes);
  head->init(rng);
  add(std::move(head));
}

template <typename T>
BasicTensor<T> Model<T>::forward(const BasicTensor<T>& batch, Mode mode) {
  if (batch.rank() != 4 || batch.dim(1) != spec_.frames || batch.dim(2) != spec_.keypoints ||
      batch.dim(3) != spec_.channels)
    throw ShapeError("model expects (N, " + std::to_string(spec_.frames) + ", " +
                     std::to_string(spec_.keypoints) + ", " + std::to_string(spec_.channels) +
                     "), got " + shape_string(batch.shape()));
  if (batch.dim(0) == 0) throw EmptyError("empty batch");
  BasicTensor<T> x = batch;
  for (auto& l : layers_) x = l->forward(x, mode);
  return x;
}

template <typename T>
BasicTensor<T> Model<T>::backward(const BasicTensor<T>& grad_logits) {
  BasicTensor<T> g = grad_logits;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::parameters() {
  std::vector<Parameter<T>*> out;
  for (auto& l : layers_)
    for (auto* p : l->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<Parameter<T>*> Model<T>::state() {
  std::vector<Parameter<T>*> out;
  for (auto& l : layers_) {
    for (auto* p : l->parameters()) out.push_back(p);
    for (auto* p : l->buffers()) out.push_back(p);
  }
  return out;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
void Model<T>::reseed_dropout(std::uint64_t seed) {
  std::uint64_t k = 0;
  for (auto& l : layers_)
    if (auto* d = dynamic_cast<Dropout<T>*>(l.get())) d->reseed(seed ^ (0x9e3779b97f4a7c15ull * ++k));
}

template <typename T>
std::vector<std::size_t> Model<T>::activation_signature() const {
  std::vector<std::size_t> sig;
  for (const auto& l : layers_) l->append_signature(sig);
  return sig;
}

template <typename T>
Layer<T>& Model<T>::layer(const std::string& name) {
  for (auto& l : layers_)
    if (l->name() == name) return *l;
  throw ConfigError("model has no layer '" + name + "'");
}

template <typename T>
std::string Model<T>::class_name(std::size_t index) const {
  if (index < spec_.class_names.size()) return spec_.class_names[index];
  return "class_" + std::to_string(index);
}

template <typename T>
BasicTensor<T> predict(Model<T>& model, const BasicTensor<T>& batch) {
  if (model.spec().mode == ModelMode::kPaperLiteral)
    throw ConfigError("the literal reference graph stops at Flatten and cannot classify");
  return softmax(model.forward(batch, Mode::kInfer));
}

// --- audit -------------------------------------------------------------------

namespace {

struct PublishedRow {
  const char* name;
  const char* internal;  // row name in BuildReport
  Shape shape;
  std::size_t params;
};

const std::vector<PublishedRow>& published_rows() {
  static const std::vector<PublishedRow> rows = {
      {"Input", "input", {30, 522, 3}, 0},
      {"Conv2D-1", "conv2d_1", {30, 522, 32}, 896},
      {"BatchNorm-1", "batchnorm_1", {30, 522, 32}, 128},
      {"MaxPool2D-1", "maxpool2d_1", {15, 261, 32}, 0},
      {"Conv2D-2", "conv2d_2", {15, 261, 64}, 18496},
      {"BatchNorm-2", "batchnorm_2", {15, 261, 64}, 256},
      {"MaxPool2D-2", "maxpool2d_2", {7, 130, 64}, 0},
      {"Conv2D-3", "conv2d_3", {7, 130, 128}, 73856},
      {"BatchNorm-3", "batchnorm_3", {7, 130, 128}, 512},
      {"MaxPool2D-3", "maxpool2d_3", {3, 65, 128}, 0},
      {"Conv2D-4", "conv2d_4", {3, 65, 256}, 295168},
      {"BatchNorm-4", "batchnorm_4", {3, 65, 256}, 1024},
      {"MaxPool2D-4", "maxpool2d_4", {1, 32, 256}, 0},
      {"Flatten", "flatten", {8192}, 0},
      {"Reshape", "reshape", {30, 273}, 0},
      {"Bidirectional LSTM-1", "bilstm_1", {30, 512}, 1082368},
      {"Dropout-1", "dropout_1", {30, 512}, 0},
      {"Bidirectional LSTM-2", "bilstm_2", {512}, 1574912},
      {"Dropout-2", "dropout_2", {512}, 0},
      {"Dense", "dense", {20}, 10260},
  };
  return rows;
}

constexpr std::size_t kPublishedTotal = 3057876;

}  // namespace

ArchitectureAudit verify_paper_architecture() {
  const Model<double> model(ModelSpec::paper_literal());
  const auto& report = model.report();
  ArchitectureAudit audit;
  audit.paper_total = kPublishedTotal;
  for (const auto& pub : published_rows()) {
    const auto it = std::find_if(report.rows.begin(), report.rows.end(),
                                 [&](const ReportRow& r) { return r.name == pub.internal; });
    if (it == report.rows.end()) throw ConfigError(std::string("audit row missing: ") + pub.name);
    AuditRow row;
    row.name = pub.name;
    row.expected_output_shape = shape_string(pub.shape);
    row.expected_params = pub.params;
    row.computed_params = it->params;
    row.params_match = row.computed_params == row.expected_params;
    if (it->executable) {
      row.output_shape = shape_string(it->output);
      row.shape_match = it->output == pub.shape;
    } else {
      row.output_shape = "-";
      row.shape_match = false;
    }
    row.note = it->note;
    if (!row.params_match)
      row.note += (row.note.empty() ? "" : "; ") + std::string("delta ") +
                  std::to_string(static_cast<long long>(row.computed_params) -
                                 static_cast<long long>(row.expected_params));
    audit.computed_total += row.computed_params;
    audit.rows_total_expected += row.expected_params;
    audit.rows.push_back(std::move(row));
  }
  return audit;
}

std::string ArchitectureAudit::to_table() const {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %-16s %-16s %12s %12s  %s\n", "layer", "shape",
                "published shape", "params", "published", "match");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-22s %-16s %-16s %12zu %12zu  %s%s%s\n", r.name.c_str(),
                  r.output_shape.c_str(), r.expected_output_shape.c_str(), r.computed_params,
                  r.expected_params, r.params_match ? "yes" : "NO",
                  r.note.empty() ? "" : "  ", r.note.c_str());
    os << line;
  }
  auto grouped = [](long long v) {
    std::string digits = std::to_string(v < 0 ? -v : v);
    for (int i = static_cast<int>(digits.size()) - 3; i > 0; i -= 3) digits.insert(static_cast<std::size_t>(i), ",");
    return (v < 0 ? "-" : "") + digits;
  };
  std::string mismatched;
  for (const auto& r : rows)
    if (!r.params_match) mismatched += (mismatched.empty() ? "" : ", ") + r.name;
  os << "computed total " << grouped(static_cast<long long>(computed_total)) << ", published total "
     << grouped(static_cast<long long>(paper_total)) << ", delta " << (delta() > 0 ? "+" : "")
     << grouped(delta());
  if (!mismatched.empty()) os << " (" << mismatched << ")";
  os << "\n";
  return os.str();
}

// --- container ---------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'S', 'G', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kAlign = 64;
constexpr std::size_t kPrefix = 16;

std::size_t align_up(std::size_t n) { return (n + kAlign - 1) / kAlign * kAlign; }

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <typename U>
U get_le(std::string_view in, std::size_t at) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_container(const std::string& header_json_without_tensors,
                             const std::vector<NamedArray>& arrays) {
  json header = json::parse(header_json_without_tensors);
  json table = json::array();
  std::size_t offset = 0;
  for (const auto& a : arrays) {
    if (a.data.size() != shape_size(a.shape)) throw ShapeError("array '" + a.name + "' size mismatch");
    table.push_back({{"name", a.name}, {"shape", a.shape}, {"dtype", "f64"}, {"offset", offset}});
    offset = align_up(offset + a.data.size() * sizeof(double));
  }
  header["tensors"] = table;
  const std::string text = header.dump();

  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  out.resize(align_up(out.size()), '\0');
  const std::size_t data_start = out.size();
  for (std::size_t k = 0; k < arrays.size(); ++k) {
    out.resize(data_start + table[k]["offset"].get<std::size_t>(), '\0');
    for (double d : arrays[k].data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(d));
  }
  out.resize(data_start + offset, '\0');
  return out;
}

DecodedContainer decode_container(std::string_view bytes) {
  if (bytes.size() < kPrefix || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("not an SGKP container");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kVersion) throw FormatError("unsupported container version " + std::to_string(version));
  const auto header_len = get_le<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPrefix) throw CorruptError("truncated header");
  DecodedContainer out;
  out.header_json = std::string(bytes.substr(kPrefix, header_len));
  json header;
  try {
    header = json::parse(out.header_json);
  } catch (const json::exception& e) {
    throw CorruptError(std::string("unreadable header: ") + e.what());
  }
  const std::size_t data_start = align_up(kPrefix + header_len);
  try {
    for (const auto& t : header.at("tensors")) {
      NamedArray a;
      a.name = t.at("name").get<std::string>();
      a.shape = t.at("shape").get<Shape>();
      if (t.at("dtype").get<std::string>() != "f64")
        throw FormatError("unsupported dtype for '" + a.name + "'");
      const auto offset = t.at("offset").get<std::size_t>();
      const std::size_t count = shape_size(a.shape);
      if (data_start + offset + count * sizeof(double) > bytes.size())
        throw CorruptError("array '" + a.name + "' runs past the end of the file");
      a.data.resize(count);
      for (std::size_t i = 0; i < count; ++i)
        a.data[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, data_start + offset + 8 * i));
      out.arrays.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw CorruptError(std::string("bad tensor table: ") + e.what());
  }
  return out;
}

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  write_text_file(path, encode_container(R"({"kind":"tensor-only"})", arrays));
}

std::vector<NamedArray> read_tensor_file(const std::filesystem::path& path) {
  return decode_container(read_text_file(path)).arrays;
}

template <typename T>
std::string encode_checkpoint(Model<T>& model) {
  json header;
  header["kind"] = "model";
  header["spec"] = to_json(model.spec());
  header["preprocess"] = to_json(model.preprocess());
  std::vector<NamedArray> arrays;
  for (auto* p : model.state())
    arrays.push_back({p->name, p->value.shape(),
                      std::vector<double>(p->value.storage().begin(), p->value.storage().end())});
  return encode_container(header.dump(), arrays);
}

template <typename T>
Model<T> decode_checkpoint(std::string_view bytes) {
  auto decoded = decode_container(bytes);
  json header = json::parse(decoded.header_json);
  if (header.value("kind", "") != "model") throw FormatError("container does not hold a model");
  Model<T> model(model_spec_from_json(header.at("spec")));
  model.preprocess() = preprocess_config_from_json(header.at("preprocess"));
  auto state = model.state();
  if (state.size() != decoded.arrays.size())
    throw CorruptError("checkpoint holds " + std::to_string(decoded.arrays.size()) +
                       " arrays, model expects " + std::to_string(state.size()));
  for (auto* p : state) {
    auto it = std::find_if(decoded.arrays.begin(), decoded.arrays.end(),
                           [&](const NamedArray& a) { return a.name == p->name; });
    if (it == decoded.arrays.end()) throw CorruptError("checkpoint lacks '" + p->name + "'");
    if (it->shape != p->value.shape())
      throw CorruptError("'" + p->name + "' has shape " + shape_string(it->shape) + ", expected " +
                         shape_string(p->value.shape()));
    for (std::size_t i = 0; i < it->data.size(); ++i) p->value[i] = static_cast<T>(it->data[i]);
  }
  return model;
}

template <typename T>
void save_checkpoint(Model<T>& model, const std::filesystem::path& path) {
  write_text_file(path, encode_checkpoint(model));
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(read_text_file(path));
}

#define SGR_INSTANTIATE_MODEL(T)                                              \
  template class Model<T>;                                                    \
  template BasicTensor<T> predict(Model<T>&, const BasicTensor<T>&);          \
  template std::string encode_checkpoint(Model<T>&);                          \
  template Model<T> decode_checkpoint<T>(std::string_view);                   \
  template void save_checkpoint(Model<T>&, const std::filesystem::path&);     \
  template Model<T> load_checkpoint<T>(const std::filesystem::path&);

SGR_INSTANTIATE_MODEL(float)
SGR_INSTANTIATE_MODEL(double)

#undef SGR_INSTANTIATE_MODEL

}  // namespace sgr
