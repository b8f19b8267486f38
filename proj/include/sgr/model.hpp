// SPDX-License-Identifier: Apache-2.0
//
// Hybrid CNN-BiLSTM classifier assembly, architecture audit and checkpoints.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sgr/nn.hpp"
#include "sgr/preprocess.hpp"

namespace sgr {

enum class ModelMode {
  /// Layer stack of the published table, executable through Flatten.
  kPaperLiteral,
  /// Pools only the keypoint axis so the recurrent layers see every frame.
  kTimePreserving,
};

std::string to_string(ModelMode mode);
ModelMode model_mode_from_string(const std::string& s);

struct ModelSpec {
  ModelMode mode = ModelMode::kTimePreserving;
  std::size_t frames = 30;      // T
  std::size_t keypoints = 543;  // K, model input width
  std::size_t channels = 3;
  std::vector<std::size_t> conv_filters{32, 64, 128, 256};
  std::size_t kernel = 3;
  std::size_t lstm_units = 256;
  std::size_t lstm_proj_dim = 273;
  std::size_t classes = 20;
  double dropout = 0.5;
  bool post_conv_dropout = false;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;
  std::string dtype = "float64";
  std::uint64_t seed = 0;

  /// Landmark layout of the ingested data and the subset fed to the model.
  /// Entries are block names, optionally truncated as "block:count"; empty
  /// means the whole layout.
  std::string layout = "holistic543";
  std::vector<std::string> input_selection;
  std::vector<std::string> class_names;

  /// Throws ConfigError/ShapeError for inconsistent specs.
  void validate() const;

  /// (30, 522, 3) input, filters 32..256, 256 units, 273 projection, 20 classes.
  static ModelSpec paper_literal();
};

/// Flat landmark indices the model consumes, in order.
std::vector<std::size_t> selected_landmarks(const LayoutSpec& layout,
                                            const std::vector<std::string>& selection);

/// Gathers the selected landmarks of a (T, K, 3) tensor.
Tensor select_landmarks(const Tensor& window, const std::vector<std::size_t>& indices);

struct ReportRow {
  std::string name;
  std::string kind;
  Shape output;  // without batch axis
  std::size_t params = 0;
  bool executable = true;
  std::string note;
};

struct BuildReport {
  std::vector<ReportRow> rows;
  std::size_t total_params() const;
};

template <typename T>
class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  const BuildReport& report() const { return report_; }
  PreprocessConfig& preprocess() { return preprocess_; }
  const PreprocessConfig& preprocess() const { return preprocess_; }

  /// Logits (N, classes) for a batch (N, T, K, 3). In literal mode the
  /// graph ends at Flatten and this returns the flattened features.
  BasicTensor<T> forward(const BasicTensor<T>& batch, Mode mode);
  /// Backpropagates d(loss)/d(logits); parameter gradients accumulate.
  BasicTensor<T> backward(const BasicTensor<T>& grad_logits);

  std::vector<Parameter<T>*> parameters();
  /// Parameters followed by running statistics, in checkpoint order.
  std::vector<Parameter<T>*> state();
  void zero_grad();
  void reseed_dropout(std::uint64_t seed);
  std::vector<std::size_t> activation_signature() const;
  std::vector<LayerPtr<T>>& layers() { return layers_; }
  Layer<T>& layer(const std::string& name);

  std::string class_name(std::size_t index) const;

 private:
  ModelSpec spec_;
  PreprocessConfig preprocess_;
  std::vector<LayerPtr<T>> layers_;
  BuildReport report_;
};

template <typename T>
Model<T> build_model(const ModelSpec& spec) {
  return Model<T>(spec);
}

/// Inference-mode class probabilities (N, classes).
template <typename T>
BasicTensor<T> predict(Model<T>& model, const BasicTensor<T>& batch);

// --- architecture audit ------------------------------------------------------

struct AuditRow {
  std::string name;
  std::string output_shape;           // as computed
  std::string expected_output_shape;  // as published
  std::size_t expected_params = 0;
  std::size_t computed_params = 0;
  bool params_match = false;
  bool shape_match = false;
  std::string note;
};

struct ArchitectureAudit {
  std::vector<AuditRow> rows;
  std::size_t paper_total = 0;
  std::size_t computed_total = 0;
  std::size_t rows_total_expected = 0;  // sum of published rows

  long long delta() const {
    return static_cast<long long>(computed_total) - static_cast<long long>(paper_total);
  }
  std::string to_table() const;
};

ArchitectureAudit verify_paper_architecture();

// --- checkpoints -------------------------------------------------------------

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

/// SGKP container: magic, u32 version, u64 header length, JSON header, then
/// little-endian float64 arrays aligned to 64 bytes. Offsets in the header are
/// relative to the start of the array section.
std::string encode_container(const std::string& header_json_without_tensors,
                             const std::vector<NamedArray>& arrays);

struct DecodedContainer {
  std::string header_json;  // full header, including the tensor table
  std::vector<NamedArray> arrays;
};
DecodedContainer decode_container(std::string_view bytes);

void write_tensor_file(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_tensor_file(const std::filesystem::path& path);

template <typename T>
void save_checkpoint(Model<T>& model, const std::filesystem::path& path);
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);
template <typename T>
std::string encode_checkpoint(Model<T>& model);
template <typename T>
Model<T> decode_checkpoint(std::string_view bytes);

}  // namespace sgr
