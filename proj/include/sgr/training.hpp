// SPDX-License-Identifier: Apache-2.0
//
// Training recipe (Adam with step decay, class weighting, early stopping),
// stratified splitting, k-fold cross-validation, grid search and the
// evaluation report (per-class precision/recall/F1 and confusion matrix).
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sgr/model.hpp"

namespace sgr {

struct TrainConfig {
  std::size_t batch_size = 32;
  int max_epochs = 100;
  int patience = 12;
  double min_delta = 0.0;
  AdamConfig adam;  // lr0 0.001, decay 0.1 every 50 epochs
  bool class_weighting = true;
  std::uint64_t seed = 0;
  std::string dtype = "float64";
  double val_frac = 0.2;   // share of the training split held out for early stopping
  double train_frac = 0.8; // train/test split
  std::size_t augment_copies = 0;
  /// Record real wall-clock times in the history. Off by default so that
  /// histories are byte-reproducible.
  bool record_timing = false;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

/// Preprocessed samples: one (T, K, 3) tensor and one class index each.
struct Dataset {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  std::vector<std::string> ids;
  std::size_t classes = 0;

  std::size_t size() const { return inputs.size(); }
  Dataset subset(const std::vector<std::size_t>& idx) const;
};

/// Reads, preprocesses and selects model-input landmarks of every sequence.
Dataset load_dataset(const DatasetManifest& manifest, const ModelSpec& spec,
                     const PreprocessConfig& config, std::size_t jobs = 1);

/// Augmented copies of every sample, generated in normalized space before
/// resampling. Originals come first.
Dataset augment_dataset(const DatasetManifest& manifest, const std::vector<std::size_t>& rows,
                        const ModelSpec& spec, const PreprocessConfig& config,
                        const AugmentSpec& augment, std::size_t jobs = 1);

// --- splitting ---------------------------------------------------------------

struct Split {
  std::vector<std::size_t> train, test;
};

/// Per class, round_half_up(n_c * train_frac) samples go to train.
Split stratified_split(const std::vector<std::size_t>& labels, std::size_t classes,
                       double train_frac, std::uint64_t seed);
std::pair<DatasetManifest, DatasetManifest> stratified_split(const DatasetManifest& manifest,
                                                             double train_frac, std::uint64_t seed);

/// Stratified fold index per sample.
std::vector<std::size_t> stratified_folds(const std::vector<std::size_t>& labels,
                                          std::size_t classes, std::size_t k, std::uint64_t seed);

/// w_c = N / (C * n_c).
std::vector<double> class_weights(const std::vector<std::size_t>& labels, std::size_t classes);

// --- early stopping ----------------------------------------------------------

class EarlyStopping {
 public:
  EarlyStopping(int patience, double min_delta = 0.0);
  /// Feeds one epoch's validation loss; returns true when training should stop.
  bool update(double val_loss);
  bool improved() const { return improved_; }
  /// Zero-based index of the best epoch seen so far.
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }
  int epochs_seen() const { return seen_; }

 private:
  int patience_;
  double min_delta_;
  double best_;
  int best_epoch_ = -1;
  int seen_ = 0;
  int wait_ = 0;
  bool improved_ = false;
};

// --- training ----------------------------------------------------------------

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

/// Mini-batch training; on return the model holds the best-validation-loss
/// parameters. Throws DivergenceError on a non-finite loss after restoring
/// the last finite state.
template <typename T>
TrainResult train(Model<T>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config);

template <typename T>
BasicTensor<T> make_batch(const Dataset& data, const std::vector<std::size_t>& rows);

/// Argmax predictions; ties go to the lowest class index.
template <typename T>
std::vector<std::size_t> predict_labels(Model<T>& model, const Dataset& data,
                                        std::size_t batch_size = 32);

/// Unweighted mean cross-entropy and accuracy in inference mode.
template <typename T>
std::pair<double, double> evaluate_loss(Model<T>& model, const Dataset& data,
                                        std::size_t batch_size = 32);

// --- evaluation --------------------------------------------------------------

struct ClassMetrics {
  std::string name;
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct EvalReport {
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;  // percent
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t total = 0;
};

/// 2PR / (P + R), or 0 when P + R = 0.
double f1(double precision, double recall);

/// Rounds a percentage to 0.1.
double round_tenth(double pct);

EvalReport make_report(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                       const std::vector<std::string>& class_names);

template <typename T>
EvalReport evaluate(Model<T>& model, const Dataset& test_set);

std::string report_json(const EvalReport& report);
std::string confusion_csv(const EvalReport& report);
std::string history_csv(const std::vector<EpochRecord>& history);

// --- cross-validation and grid search ----------------------------------------

struct CvResult {
  std::vector<EvalReport> folds;
  std::vector<std::size_t> fold_sizes;
  double macro_f1_mean = 0.0;
  double macro_f1_std = 0.0;
};

/// Trains one fresh model per fold; each fold's rng stream derives from
/// (seed, fold index). Folds run on up to `jobs` threads.
CvResult kfold_cv(const Dataset& data, const ModelSpec& spec, const TrainConfig& config,
                  std::size_t k = 5, std::size_t jobs = 1);

struct GridPoint {
  double lr0 = 0.001;
  std::size_t kernel = 3;
  std::size_t units = 256;

  std::string key() const;
};

struct GridSpace {
  std::vector<double> lr0;
  std::vector<std::size_t> kernel;
  std::vector<std::size_t> units;

  std::vector<GridPoint> points() const;
};

struct GridResult {
  GridPoint point;
  double val_macro_f1 = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  int epochs = 0;
};

/// Trains every grid point on the same split, ranked by validation macro-F1
/// (descending), then validation loss, then the point's parameters.
std::vector<GridResult> grid_search(const GridSpace& space, const Dataset& train_set,
                                    const Dataset& val_set, const ModelSpec& spec,
                                    const TrainConfig& config, std::size_t jobs = 1);

}  // namespace sgr
