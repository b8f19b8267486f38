// SPDX-License-Identifier: Apache-2.0
#include "sgr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sgr/errors.hpp"
#include "sgr/parallel.hpp"

namespace sgr {

using json = nlohmann::ordered_json;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(adam.lr0 >= 0.0)) throw ConfigError("lr0 must be >= 0");
  if (adam.decay_every < 1) throw ConfigError("decay_every must be >= 1");
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must be in (0, 1)");
  if (!(val_frac > 0.0 && val_frac < 1.0)) throw ConfigError("val_frac must be in (0, 1)");
  if (dtype != "float64" && dtype != "float32") throw ConfigError("dtype must be float64 or float32");
}

// --- datasets ----------------------------------------------------------------

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset d;
  d.classes = classes;
  for (std::size_t i : idx) {
    d.inputs.push_back(inputs.at(i));
    d.labels.push_back(labels.at(i));
    d.ids.push_back(ids.at(i));
  }
  return d;
}

namespace {

std::vector<std::size_t> input_indices(const ModelSpec& spec) {
  const auto layout = LayoutSpec::by_name(spec.layout);
  auto idx = selected_landmarks(*layout, spec.input_selection);
  if (idx.size() != spec.keypoints)
    throw ConfigError("input selection yields " + std::to_string(idx.size()) +
                      " landmarks but the model expects " + std::to_string(spec.keypoints));
  return idx;
}

void check_layout(const GestureSequence& seq, const ModelSpec& spec) {
  if (seq.layout()->name() != spec.layout)
    throw LayoutError("sequence '" + seq.source_id + "' uses layout '" + seq.layout()->name() +
                      "', model expects '" + spec.layout + "'");
}

}  // namespace

Dataset load_dataset(const DatasetManifest& manifest, const ModelSpec& spec,
                     const PreprocessConfig& config, std::size_t jobs) {
  validate_manifest(manifest);
  const auto idx = input_indices(spec);
  Dataset d;
  d.classes = manifest.classes.size();
  const std::size_t n = manifest.sequences.size();
  d.inputs.resize(n);
  d.labels.resize(n);
  d.ids.resize(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const auto& e = manifest.sequences[i];
    const auto seq = read_sequence(manifest.resolve(e));
    check_layout(seq, spec);
    d.inputs[i] = select_landmarks(preprocess_pipeline(seq, config), idx);
    d.labels[i] = manifest.class_index(e.label);
    d.ids[i] = e.path;
  });
  return d;
}

Dataset augment_dataset(const DatasetManifest& manifest, const std::vector<std::size_t>& rows,
                        const ModelSpec& spec, const PreprocessConfig& config,
                        const AugmentSpec& augment, std::size_t jobs) {
  augment.validate();
  const auto idx = input_indices(spec);
  const std::size_t copies = augment.copies_per_sequence;
  std::vector<Dataset> parts(rows.size());
  parallel_for(rows.size(), jobs, [&](std::size_t r) {
    const auto& e = manifest.sequences.at(rows[r]);
    const auto seq = read_sequence(manifest.resolve(e));
    check_layout(seq, spec);
    const auto base = normalize_and_smooth(seq, config);
    auto rng = derive_rng(augment.seed, e.path);
    auto& part = parts[r];
    const std::size_t label = manifest.class_index(e.label);
    part.inputs.push_back(select_landmarks(window_tensor(base.frames, config.frames), idx));
    part.labels.push_back(label);
    part.ids.push_back(e.path);
    for (std::size_t k = 0; k < copies; ++k) {
      const auto aug = augment_sequence(base, augment, rng);
      part.inputs.push_back(select_landmarks(window_tensor(aug.frames, config.frames), idx));
      part.labels.push_back(label);
      part.ids.push_back(e.path + "#a" + std::to_string(k + 1));
    }
  });
  Dataset d;
  d.classes = manifest.classes.size();
  for (auto& p : parts) {
    for (std::size_t i = 0; i < p.inputs.size(); ++i) {
      d.inputs.push_back(std::move(p.inputs[i]));
      d.labels.push_back(p.labels[i]);
      d.ids.push_back(std::move(p.ids[i]));
    }
  }
  return d;
}

// --- splitting ---------------------------------------------------------------

namespace {

std::vector<std::vector<std::size_t>> by_class(const std::vector<std::size_t>& labels,
                                               std::size_t classes) {
  std::vector<std::vector<std::size_t>> groups(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw LabelError("label index " + std::to_string(labels[i]) + " out of range");
    groups[labels[i]].push_back(i);
  }
  return groups;
}

}  // namespace

Split stratified_split(const std::vector<std::size_t>& labels, std::size_t classes,
                       double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must be in (0, 1)");
  auto groups = by_class(labels, classes);
  std::mt19937_64 rng(derive_seed(seed, "stratified_split"));
  Split s;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& g = groups[c];
    if (g.empty()) continue;
    if (g.size() < 2)
      throw StratifyError("class " + std::to_string(c) + " has a single sample");
    std::shuffle(g.begin(), g.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(g.size()) * train_frac + 0.5));
    s.train.insert(s.train.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), g.begin() + static_cast<std::ptrdiff_t>(n_train), g.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::pair<DatasetManifest, DatasetManifest> stratified_split(const DatasetManifest& manifest,
                                                             double train_frac, std::uint64_t seed) {
  validate_manifest(manifest);
  std::vector<std::size_t> labels;
  for (const auto& e : manifest.sequences) labels.push_back(manifest.class_index(e.label));
  const Split s = stratified_split(labels, manifest.classes.size(), train_frac, seed);
  DatasetManifest train = manifest, test = manifest;
  train.sequences.clear();
  test.sequences.clear();
  for (std::size_t i : s.train) train.sequences.push_back(manifest.sequences[i]);
  for (std::size_t i : s.test) test.sequences.push_back(manifest.sequences[i]);
  return {train, test};
}

std::vector<std::size_t> stratified_folds(const std::vector<std::size_t>& labels,
                                          std::size_t classes, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold needs k >= 2");
  auto groups = by_class(labels, classes);
  std::mt19937_64 rng(derive_seed(seed, "stratified_folds"));
  std::vector<std::size_t> fold(labels.size(), 0);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& g = groups[c];
    if (g.empty()) continue;
    if (g.size() < k)
      throw StratifyError("class " + std::to_string(c) + " has " + std::to_string(g.size()) +
                          " samples, fewer than " + std::to_string(k) + " folds");
    std::shuffle(g.begin(), g.end(), rng);
    for (std::size_t j = 0; j < g.size(); ++j) fold[g[j]] = (offset + j) % k;
    offset = (offset + g.size()) % k;
  }
  return fold;
}

std::vector<double> class_weights(const std::vector<std::size_t>& labels, std::size_t classes) {
  if (classes == 0) throw ConfigError("no classes");
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t y : labels) {
    if (y >= classes) throw LabelError("label index " + std::to_string(y) + " out of range");
    counts[y]++;
  }
  std::vector<double> w(classes);
  const double n = static_cast<double>(labels.size());
  for (std::size_t c = 0; c < classes; ++c) {
    if (counts[c] == 0) throw LabelError("class " + std::to_string(c) + " has no samples");
    w[c] = n / (static_cast<double>(classes) * static_cast<double>(counts[c]));
  }
  return w;
}

// --- early stopping ----------------------------------------------------------

EarlyStopping::EarlyStopping(int patience, double min_delta)
    : patience_(patience), min_delta_(min_delta), best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(min_delta >= 0.0)) throw ConfigError("min_delta must be >= 0");
}

bool EarlyStopping::update(double val_loss) {
  improved_ = val_loss < best_ - min_delta_;
  if (improved_) {
    best_ = val_loss;
    best_epoch_ = seen_;
    wait_ = 0;
  } else {
    ++wait_;
  }
  ++seen_;
  return wait_ >= patience_;
}

// --- training ----------------------------------------------------------------

template <typename T>
BasicTensor<T> make_batch(const Dataset& data, const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw EmptyError("empty batch");
  const Shape& s = data.inputs.at(rows.front()).shape();
  const std::size_t per = shape_size(s);
  BasicTensor<T> batch({rows.size(), s[0], s[1], s[2]});
  for (std::size_t b = 0; b < rows.size(); ++b) {
    const auto& x = data.inputs.at(rows[b]);
    if (x.shape() != s) throw ShapeError("samples of different shapes in one batch");
    std::transform(x.data(), x.data() + per, batch.data() + b * per,
                   [](double v) { return static_cast<T>(v); });
  }
  return batch;
}

namespace {

template <typename T>
std::size_t argmax_row(const BasicTensor<T>& m, std::size_t row) {
  const std::size_t c = m.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j)
    if (m[row * c + j] > m[row * c + best]) best = j;
  return best;
}

template <typename T>
std::vector<BasicTensor<T>> snapshot(Model<T>& model) {
  std::vector<BasicTensor<T>> s;
  for (auto* p : model.state()) s.push_back(p->value);
  return s;
}

template <typename T>
void restore(Model<T>& model, const std::vector<BasicTensor<T>>& s) {
  auto state = model.state();
  for (std::size_t i = 0; i < state.size(); ++i) state[i]->value = s[i];
}

}  // namespace

template <typename T>
std::pair<double, double> evaluate_loss(Model<T>& model, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw EmptyError("empty evaluation set");
  const std::vector<double> ones(model.spec().classes, 1.0);
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) rows.push_back(i);
    std::vector<std::size_t> labels;
    for (std::size_t i : rows) labels.push_back(data.labels[i]);
    const auto logits = model.forward(make_batch<T>(data, rows), Mode::kInfer);
    const auto r = softmax_xent(logits, labels, ones);
    loss += r.loss * static_cast<double>(rows.size());
    for (std::size_t b = 0; b < rows.size(); ++b)
      if (argmax_row(logits, b) == labels[b]) ++correct;
  }
  const double n = static_cast<double>(data.size());
  return {loss / n, static_cast<double>(correct) / n};
}

template <typename T>
TrainResult train(Model<T>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config) {
  config.validate();
  if (train_set.size() == 0) throw EmptyError("empty training split");
  if (val_set.size() == 0) throw EmptyError("empty validation split");
  if (model.spec().mode != ModelMode::kTimePreserving)
    throw ConfigError("only the time-preserving model is trainable");
  if (train_set.classes != model.spec().classes)
    throw ConfigError("dataset has " + std::to_string(train_set.classes) + " classes, model " +
                      std::to_string(model.spec().classes));

  const std::vector<double> weights = config.class_weighting
                                          ? class_weights(train_set.labels, train_set.classes)
                                          : std::vector<double>(train_set.classes, 1.0);
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, "shuffle"));
  model.reseed_dropout(derive_seed(config.seed, "dropout"));
  AdamState<T> adam;
  adam.config = config.adam;
  EarlyStopping stopper(config.patience, config.min_delta);
  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  auto params = model.parameters();
  auto best = snapshot(model);
  auto last_finite = best;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::vector<std::size_t> rows(
          order.begin() + static_cast<std::ptrdiff_t>(start),
          order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + config.batch_size)));
      std::vector<std::size_t> labels;
      for (std::size_t i : rows) labels.push_back(train_set.labels[i]);
      model.zero_grad();
      const auto logits = model.forward(make_batch<T>(train_set, rows), Mode::kTrain);
      const auto xent = softmax_xent(logits, labels, weights);
      if (!std::isfinite(xent.loss)) {
        restore(model, last_finite);
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      model.backward(xent.grad_logits);
      adam_step(params, adam, epoch);
      loss_sum += xent.loss * static_cast<double>(rows.size());
      for (std::size_t b = 0; b < rows.size(); ++b)
        if (argmax_row(logits, b) == labels[b]) ++correct;
    }
    const auto [val_loss, val_acc] = evaluate_loss(model, val_set, config.batch_size);
    if (!std::isfinite(val_loss)) {
      restore(model, last_finite);
      throw DivergenceError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    last_finite = snapshot(model);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    rec.val_loss = val_loss;
    rec.val_acc = val_acc;
    rec.lr = learning_rate(config.adam, epoch);
    if (config.record_timing)
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(rec);

    const bool stop = stopper.update(val_loss);
    if (stopper.improved()) best = last_finite;
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }
  restore(model, best);
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best_loss();
  return result;
}

template <typename T>
std::vector<std::size_t> predict_labels(Model<T>& model, const Dataset& data, std::size_t batch_size) {
  std::vector<std::size_t> out;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) rows.push_back(i);
    const auto probs = predict(model, make_batch<T>(data, rows));
    for (std::size_t b = 0; b < rows.size(); ++b) out.push_back(argmax_row(probs, b));
  }
  return out;
}

// --- evaluation --------------------------------------------------------------

double f1(double precision, double recall) {
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double round_tenth(double pct) { return std::floor(pct * 10.0 + 0.5) / 10.0; }

EvalReport make_report(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                       const std::vector<std::string>& class_names) {
  if (truth.empty()) throw EmptyError("nothing to evaluate");
  if (truth.size() != predicted.size()) throw ShapeError("truth/prediction length mismatch");
  const std::size_t c = class_names.size();
  EvalReport r;
  r.total = truth.size();
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= c || predicted[i] >= c) throw LabelError("class index out of range");
    r.confusion[truth[i]][predicted[i]]++;
  }
  std::size_t diag = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t row = 0, col = 0;
    for (std::size_t j = 0; j < c; ++j) {
      row += r.confusion[k][j];
      col += r.confusion[j][k];
    }
    const double tp = static_cast<double>(r.confusion[k][k]);
    diag += r.confusion[k][k];
    ClassMetrics m;
    m.name = class_names[k];
    m.support = row;
    m.precision = col == 0 ? 0.0 : 100.0 * tp / static_cast<double>(col);
    m.recall = row == 0 ? 0.0 : 100.0 * tp / static_cast<double>(row);
    m.f1 = f1(m.precision, m.recall);
    r.macro_precision += m.precision / static_cast<double>(c);
    r.macro_recall += m.recall / static_cast<double>(c);
    r.macro_f1 += m.f1 / static_cast<double>(c);
    r.per_class.push_back(m);
  }
  r.accuracy = 100.0 * static_cast<double>(diag) / static_cast<double>(r.total);
  return r;
}

template <typename T>
EvalReport evaluate(Model<T>& model, const Dataset& test_set) {
  if (test_set.size() == 0) throw EmptyError("empty test set");
  std::vector<std::string> names;
  for (std::size_t k = 0; k < model.spec().classes; ++k) names.push_back(model.class_name(k));
  return make_report(test_set.labels, predict_labels(model, test_set), names);
}

std::string report_json(const EvalReport& r) {
  json j;
  j["accuracy"] = round_tenth(r.accuracy);
  j["macro_precision"] = round_tenth(r.macro_precision);
  j["macro_recall"] = round_tenth(r.macro_recall);
  j["macro_f1"] = round_tenth(r.macro_f1);
  j["total"] = r.total;
  j["per_class"] = json::array();
  for (const auto& m : r.per_class)
    j["per_class"].push_back({{"class", m.name},
                              {"precision", round_tenth(m.precision)},
                              {"recall", round_tenth(m.recall)},
                              {"f1", round_tenth(m.f1)},
                              {"support", m.support}});
  j["confusion"] = r.confusion;
  return j.dump(1) + "\n";
}

std::string confusion_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "true\\predicted";
  for (const auto& m : r.per_class) os << ',' << m.name;
  os << '\n';
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    os << r.per_class[i].name;
    for (std::size_t v : r.confusion[i]) os << ',' << v;
    os << '\n';
  }
  return os.str();
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc,lr,wall_ms\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + ',' + format_double(h.train_loss) + ',' +
           format_double(h.train_acc) + ',' + format_double(h.val_loss) + ',' +
           format_double(h.val_acc) + ',' + format_double(h.lr) + ',' + format_double(h.wall_ms) + '\n';
  }
  return out;
}

// --- cross-validation --------------------------------------------------------

namespace {

template <typename T>
EvalReport train_and_evaluate(const Dataset& train_set, const Dataset& val_set, ModelSpec spec,
                              const TrainConfig& config, double* val_loss = nullptr,
                              int* epochs = nullptr) {
  Model<T> model(spec);
  const auto result = train(model, train_set, val_set, config);
  if (val_loss) *val_loss = result.best_val_loss;
  if (epochs) *epochs = static_cast<int>(result.history.size());
  return evaluate(model, val_set);
}

EvalReport dispatch_train_eval(const Dataset& tr, const Dataset& va, const ModelSpec& spec,
                               const TrainConfig& config, double* val_loss = nullptr,
                               int* epochs = nullptr) {
  if (config.dtype == "float32")
    return train_and_evaluate<float>(tr, va, spec, config, val_loss, epochs);
  return train_and_evaluate<double>(tr, va, spec, config, val_loss, epochs);
}

}  // namespace

CvResult kfold_cv(const Dataset& data, const ModelSpec& spec, const TrainConfig& config,
                  std::size_t k, std::size_t jobs) {
  config.validate();
  const auto folds = stratified_folds(data.labels, data.classes, k, config.seed);
  CvResult cv;
  cv.folds.resize(k);
  cv.fold_sizes.assign(k, 0);
  for (std::size_t f : folds) cv.fold_sizes[f]++;
  parallel_for(k, jobs, [&](std::size_t f) {
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == f ? va : tr).push_back(i);
    ModelSpec s = spec;
    s.seed = derive_seed(spec.seed, "fold" + std::to_string(f));
    TrainConfig c = config;
    c.seed = derive_seed(config.seed, "fold" + std::to_string(f));
    cv.folds[f] = dispatch_train_eval(data.subset(tr), data.subset(va), s, c);
  });
  for (const auto& r : cv.folds) cv.macro_f1_mean += r.macro_f1 / static_cast<double>(k);
  double var = 0.0;
  for (const auto& r : cv.folds) var += (r.macro_f1 - cv.macro_f1_mean) * (r.macro_f1 - cv.macro_f1_mean);
  cv.macro_f1_std = std::sqrt(var / static_cast<double>(k));
  return cv;
}

// --- grid search -------------------------------------------------------------

std::string GridPoint::key() const {
  return "lr0=" + format_double(lr0) + ",kernel=" + std::to_string(kernel) +
         ",units=" + std::to_string(units);
}

std::vector<GridPoint> GridSpace::points() const {
  if (lr0.empty() || kernel.empty() || units.empty()) throw ConfigError("grid space is empty");
  std::vector<GridPoint> pts;
  for (double lr : lr0)
    for (std::size_t k : kernel)
      for (std::size_t u : units) pts.push_back({lr, k, u});
  return pts;
}

std::vector<GridResult> grid_search(const GridSpace& space, const Dataset& train_set,
                                    const Dataset& val_set, const ModelSpec& spec,
                                    const TrainConfig& config, std::size_t jobs) {
  const auto points = space.points();
  std::vector<GridResult> results(points.size());
  parallel_for(points.size(), jobs, [&](std::size_t i) {
    const auto& p = points[i];
    ModelSpec s = spec;
    s.kernel = p.kernel;
    s.lstm_units = p.units;
    TrainConfig c = config;
    c.adam.lr0 = p.lr0;
    GridResult& r = results[i];
    r.point = p;
    const auto report = dispatch_train_eval(train_set, val_set, s, c, &r.val_loss, &r.epochs);
    r.val_macro_f1 = report.macro_f1;
    r.val_accuracy = report.accuracy;
  });
  std::sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
    if (a.val_macro_f1 != b.val_macro_f1) return a.val_macro_f1 > b.val_macro_f1;
    if (a.val_loss != b.val_loss) return a.val_loss < b.val_loss;
    return std::tie(a.point.lr0, a.point.kernel, a.point.units) <
           std::tie(b.point.lr0, b.point.kernel, b.point.units);
  });
  return results;
}

#define SGR_INSTANTIATE_TRAINING(T)                                                             \
  template BasicTensor<T> make_batch<T>(const Dataset&, const std::vector<std::size_t>&);      \
  template TrainResult train(Model<T>&, const Dataset&, const Dataset&, const TrainConfig&);   \
  template std::vector<std::size_t> predict_labels(Model<T>&, const Dataset&, std::size_t);    \
  template std::pair<double, double> evaluate_loss(Model<T>&, const Dataset&, std::size_t);    \
  template EvalReport evaluate(Model<T>&, const Dataset&);

SGR_INSTANTIATE_TRAINING(float)
SGR_INSTANTIATE_TRAINING(double)

#undef SGR_INSTANTIATE_TRAINING

}  // namespace sgr
