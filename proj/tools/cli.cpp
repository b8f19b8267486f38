// SPDX-License-Identifier: Apache-2.0
#include "sgr/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "sgr/config.hpp"
#include "sgr/errors.hpp"
#include "sgr/parallel.hpp"
#include "sgr/serve.hpp"
#include "sgr/synth.hpp"
#include "sgr/training.hpp"

namespace sgr {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string format;
  std::string config;
};

void add_common(CLI::App* cmd, Common& c, bool seeded) {
  if (seeded) cmd->add_option("--seed", c.seed, "RNG seed");
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--format", c.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    json j = json::parse(read_text_file(path));
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "model" && it.key() != "train" && it.key() != "preprocess" && it.key() != "augment")
        throw ConfigError("unknown config section '" + it.key() + "'");
    return j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void emit(const std::string& text, const std::string& out_path, std::ostream& out) {
  if (out_path.empty())
    out << text;
  else
    write_text_file(out_path, text);
}

// Model, training, preprocessing and augmentation settings resolved from the
// config file, then flags.
struct RunSetup {
  ModelSpec spec;
  TrainConfig train;
  PreprocessConfig preprocess;
  AugmentSpec augment;
  DatasetManifest manifest;
};

struct TrainFlags {
  std::optional<int> epochs, patience;
  std::optional<std::size_t> batch_size, augment_copies;
  std::optional<double> lr0;
  std::optional<std::string> dtype;
  std::optional<bool> class_weighting;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--epochs", f.epochs, "Maximum epochs");
  cmd->add_option("--patience", f.patience, "Early-stopping patience");
  cmd->add_option("--batch-size", f.batch_size, "Mini-batch size");
  cmd->add_option("--lr0", f.lr0, "Initial learning rate");
  cmd->add_option("--dtype", f.dtype, "float64 or float32")->check(CLI::IsMember({"float64", "float32"}));
  cmd->add_option("--augment-copies", f.augment_copies, "Augmented copies per training sequence");
  cmd->add_option("--class-weighting", f.class_weighting, "Weight the loss by inverse class frequency");
}

RunSetup resolve(const Common& c, const TrainFlags& f, const std::string& manifest_path) {
  const json cfg = load_config(c.config);
  RunSetup r;
  r.manifest = read_manifest(manifest_path);
  validate_manifest(r.manifest);
  r.preprocess = preprocess_config_from_json(cfg.value("preprocess", json::object()));
  r.train = train_config_from_json(cfg.value("train", json::object()), TrainConfig{});
  r.augment = augment_spec_from_json(cfg.value("augment", json::object()));
  r.spec = model_spec_from_json(cfg.value("model", json::object()));
  if (c.seed) {
    r.train.seed = *c.seed;
    r.spec.seed = *c.seed;
    r.augment.seed = *c.seed;
  }
  if (f.epochs) r.train.max_epochs = *f.epochs;
  if (f.patience) r.train.patience = *f.patience;
  if (f.batch_size) r.train.batch_size = *f.batch_size;
  if (f.lr0) r.train.adam.lr0 = *f.lr0;
  if (f.dtype) r.train.dtype = *f.dtype;
  if (f.augment_copies) r.train.augment_copies = *f.augment_copies;
  if (f.class_weighting) r.train.class_weighting = *f.class_weighting;
  r.train.validate();

  r.spec.classes = r.manifest.classes.size();
  r.spec.class_names = r.manifest.classes;
  r.spec.frames = r.preprocess.frames;
  r.spec.dtype = r.train.dtype;
  r.spec.keypoints = selected_landmarks(*LayoutSpec::by_name(r.spec.layout), r.spec.input_selection).size();
  r.spec.validate();
  r.augment.copies_per_sequence = r.train.augment_copies;
  return r;
}

std::vector<std::size_t> labels_of(const DatasetManifest& m) {
  std::vector<std::size_t> y;
  for (const auto& e : m.sequences) y.push_back(m.class_index(e.label));
  return y;
}

std::vector<std::size_t> pick(const std::vector<std::size_t>& v, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

// Train/validation/test partition: test is held out by train_frac, then the
// remaining rows are split again by val_frac.
struct Partition {
  std::vector<std::size_t> train, val, test;
};

Partition partition(const RunSetup& r) {
  const auto labels = labels_of(r.manifest);
  const std::size_t classes = r.manifest.classes.size();
  const Split outer = stratified_split(labels, classes, r.train.train_frac, r.train.seed);
  const Split inner = stratified_split(pick(labels, outer.train), classes, 1.0 - r.train.val_frac,
                                       derive_seed(r.train.seed, "validation"));
  Partition p;
  p.train = pick(outer.train, inner.train);
  p.val = pick(outer.train, inner.test);
  p.test = outer.test;
  return p;
}

Dataset training_rows(const RunSetup& r, const Dataset& all, const std::vector<std::size_t>& rows,
                      std::size_t jobs) {
  if (r.train.augment_copies == 0) return all.subset(rows);
  return augment_dataset(r.manifest, rows, r.spec, r.preprocess, r.augment, jobs);
}

std::string cv_report(const CvResult& cv, const std::string& format) {
  if (format == "csv") {
    std::string s = "fold,size,accuracy,macro_f1\n";
    for (std::size_t f = 0; f < cv.folds.size(); ++f)
      s += std::to_string(f) + ',' + std::to_string(cv.fold_sizes[f]) + ',' +
           format_double(round_tenth(cv.folds[f].accuracy)) + ',' +
           format_double(round_tenth(cv.folds[f].macro_f1)) + '\n';
    return s;
  }
  ojson j;
  j["k"] = cv.folds.size();
  j["macro_f1_mean"] = round_tenth(cv.macro_f1_mean);
  j["macro_f1_std"] = round_tenth(cv.macro_f1_std);
  j["folds"] = ojson::array();
  for (std::size_t f = 0; f < cv.folds.size(); ++f)
    j["folds"].push_back({{"fold", f},
                          {"size", cv.fold_sizes[f]},
                          {"accuracy", round_tenth(cv.folds[f].accuracy)},
                          {"macro_f1", round_tenth(cv.folds[f].macro_f1)}});
  return j.dump(1) + "\n";
}

std::string grid_report(const std::vector<GridResult>& results, const std::string& format) {
  if (format == "csv") {
    std::string s = "rank,lr0,kernel,units,val_macro_f1,val_accuracy,val_loss,epochs\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      s += std::to_string(i + 1) + ',' + format_double(r.point.lr0) + ',' + std::to_string(r.point.kernel) +
           ',' + std::to_string(r.point.units) + ',' + format_double(round_tenth(r.val_macro_f1)) + ',' +
           format_double(round_tenth(r.val_accuracy)) + ',' + format_double(r.val_loss) + ',' +
           std::to_string(r.epochs) + '\n';
    }
    return s;
  }
  ojson j = ojson::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    j.push_back({{"rank", i + 1},
                 {"lr0", r.point.lr0},
                 {"kernel", r.point.kernel},
                 {"units", r.point.units},
                 {"val_macro_f1", round_tenth(r.val_macro_f1)},
                 {"val_accuracy", round_tenth(r.val_accuracy)},
                 {"val_loss", r.val_loss},
                 {"epochs", r.epochs}});
  }
  return j.dump(1) + "\n";
}

template <typename T>
EvalReport train_run(const RunSetup& r, const Dataset& tr, const Dataset& va, const Dataset& te,
                     const fs::path& out_dir, TrainResult& result) {
  Model<T> model(r.spec);
  model.preprocess() = r.preprocess;
  result = train(model, tr, va, r.train);
  save_checkpoint(model, out_dir / "best.sgkp");
  return evaluate(model, te);
}

template <typename T>
EvalReport eval_checkpoint(const fs::path& path, const DatasetManifest& manifest, std::size_t jobs) {
  Model<T> model = load_checkpoint<T>(path);
  if (manifest.classes != std::vector<std::string>(model.spec().class_names))
    throw LabelError("manifest classes differ from the model's classes");
  const Dataset data = load_dataset(manifest, model.spec(), model.preprocess(), jobs);
  return evaluate(model, data);
}

std::string checkpoint_dtype(const fs::path& path) {
  const auto decoded = decode_container(read_text_file(path));
  const json h = json::parse(decoded.header_json);
  return h.at("spec").value("dtype", std::string("float64"));
}

std::string audit_json(const ArchitectureAudit& a) {
  ojson j;
  j["rows"] = ojson::array();
  for (const auto& r : a.rows)
    j["rows"].push_back({{"layer", r.name},
                         {"output_shape", r.output_shape},
                         {"published_output_shape", r.expected_output_shape},
                         {"params", r.computed_params},
                         {"published_params", r.expected_params},
                         {"params_match", r.params_match},
                         {"shape_match", r.shape_match},
                         {"note", r.note}});
  j["computed_total"] = a.computed_total;
  j["published_total"] = a.paper_total;
  j["delta"] = a.delta();
  return j.dump(1) + "\n";
}

std::string audit_csv(const ArchitectureAudit& a) {
  std::string s = "layer,output_shape,published_output_shape,params,published_params,params_match\n";
  for (const auto& r : a.rows)
    s += r.name + ",\"" + r.output_shape + "\",\"" + r.expected_output_shape + "\"," +
         std::to_string(r.computed_params) + ',' + std::to_string(r.expected_params) + ',' +
         (r.params_match ? "true" : "false") + '\n';
  s += "total,,," + std::to_string(a.computed_total) + ',' + std::to_string(a.paper_total) + ',' +
       (a.delta() == 0 ? "true" : "false") + '\n';
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Keypoint sign-gesture recognition toolkit", "sgr"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  Common c;
  TrainFlags tf;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic gesture dataset");
  SynthSpec synth_spec;
  std::string synth_out;
  bool synth_oracle = false;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--classes", synth_spec.classes, "Number of classes");
  synth->add_option("--per-class", synth_spec.per_class, "Sequences per class");
  synth->add_option("--jitter-scale", synth_spec.jitter_scale, "Multiplier on every jitter");
  synth->add_flag("--oracle", synth_oracle, "Report nearest-centroid separability");
  add_common(synth, c, true);

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "Impute, normalize, smooth and resample");
  std::string prep_input, prep_manifest, prep_out;
  auto* prep_in_opt = prep->add_option("--input", prep_input, ".kpjl sequence");
  prep->add_option("--manifest", prep_manifest, "Dataset manifest")->excludes(prep_in_opt);
  prep->add_option("--out", prep_out, "Output tensor file")->required();
  prep->add_option("--config", c.config, "JSON config");
  add_common(prep, c, false);

  // augment
  auto* aug = app.add_subcommand("augment", "Write augmented copies and an enlarged manifest");
  std::string aug_manifest, aug_out;
  std::optional<std::size_t> aug_copies;
  aug->add_option("--manifest", aug_manifest, "Dataset manifest")->required();
  aug->add_option("--out", aug_out, "Output directory")->required();
  aug->add_option("--copies", aug_copies, "Copies per sequence");
  aug->add_option("--config", c.config, "JSON config");
  add_common(aug, c, true);

  // train
  auto* trn = app.add_subcommand("train", "Train a classifier");
  std::string trn_manifest, trn_out;
  trn->add_option("--manifest", trn_manifest, "Dataset manifest")->required();
  trn->add_option("--out", trn_out, "Run directory")->required();
  trn->add_option("--config", c.config, "JSON config");
  add_train_flags(trn, tf);
  add_common(trn, c, true);

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  std::string ev_model, ev_manifest, ev_out;
  ev->add_option("--model", ev_model, "Checkpoint")->required();
  ev->add_option("--manifest", ev_manifest, "Dataset manifest")->required();
  ev->add_option("--out", ev_out, "Report path (stdout when omitted)");
  add_common(ev, c, false);

  // cv
  auto* cvc = app.add_subcommand("cv", "Stratified k-fold cross-validation");
  std::string cv_manifest, cv_out;
  std::size_t cv_k = 5;
  cvc->add_option("--manifest", cv_manifest, "Dataset manifest")->required();
  cvc->add_option("--k", cv_k, "Number of folds");
  cvc->add_option("--out", cv_out, "Report path (stdout when omitted)");
  cvc->add_option("--config", c.config, "JSON config");
  add_train_flags(cvc, tf);
  add_common(cvc, c, true);

  // grid
  auto* grd = app.add_subcommand("grid", "Grid search over lr0, kernel and units");
  std::string grid_manifest, grid_out;
  GridSpace space{{0.001}, {3}, {256}};
  grd->add_option("--manifest", grid_manifest, "Dataset manifest")->required();
  grd->add_option("--lr0-values", space.lr0, "Comma-separated learning rates")->delimiter(',');
  grd->add_option("--kernels", space.kernel, "Comma-separated kernel sizes")->delimiter(',');
  grd->add_option("--units", space.units, "Comma-separated LSTM widths")->delimiter(',');
  grd->add_option("--out", grid_out, "Report path (stdout when omitted)");
  grd->add_option("--config", c.config, "JSON config");
  add_train_flags(grd, tf);
  add_common(grd, c, true);

  // verify-arch
  auto* va = app.add_subcommand("verify-arch", "Audit the published architecture table");
  add_common(va, c, false);

  // infer
  auto* inf = app.add_subcommand("infer", "Sliding-window inference over a recorded sequence");
  std::string inf_model, inf_input, inf_out;
  StreamConfig inf_stream;
  inf->add_option("--model", inf_model, "Checkpoint")->required();
  inf->add_option("--input", inf_input, ".kpjl sequence")->required();
  inf->add_option("--window", inf_stream.window, "Frames per window");
  inf->add_option("--stride", inf_stream.stride, "Frames between predictions");
  inf->add_option("--out", inf_out, "Output path (stdout when omitted)");
  add_common(inf, c, false);

  // serve
  auto* srv = app.add_subcommand("serve", "WebSocket streaming inference server");
  std::string srv_model;
  ServeOptions srv_opt;
  srv->add_option("--model", srv_model, "Checkpoint")->required();
  srv->add_option("--host", srv_opt.host, "Bind address");
  srv->add_option("--port", srv_opt.port, "Port (0 picks a free one)");
  srv->add_option("--threads", srv_opt.threads, "I/O threads")->check(CLI::PositiveNumber);
  srv->add_option("--window", srv_opt.stream.window, "Frames per window");
  srv->add_option("--stride", srv_opt.stream.stride, "Default stride");
  srv->add_option("--ping", srv_opt.ping_interval_s, "Keep-alive ping interval in seconds");
  add_common(srv, c, false);

  // bench
  auto* bn = app.add_subcommand("bench", "Per-window latency benchmark");
  std::string bn_model, bn_out;
  std::size_t bn_n = 1000;
  StreamConfig bn_stream;
  bn->add_option("--model", bn_model, "Checkpoint")->required();
  bn->add_option("--n", bn_n, "Windows to time")->check(CLI::PositiveNumber);
  bn->add_option("--stride", bn_stream.stride, "Frames between predictions");
  bn->add_option("--out", bn_out, "Report path (stdout when omitted)");
  add_common(bn, c, true);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      synth_spec.seed = c.seed.value_or(0);
      const auto m = synth_dataset(synth_spec, synth_out, c.jobs);
      out << "wrote " << m.sequences.size() << " sequences to " << synth_out << "\n";
      if (synth_oracle) out << "oracle accuracy " << format_double(separability_oracle(m, {}, c.jobs)) << "\n";
    } else if (prep->parsed()) {
      if (prep_input.empty() == prep_manifest.empty()) throw ConfigError("pass exactly one of --input or --manifest");
      const PreprocessConfig pp = preprocess_config_from_json(load_config(c.config).value("preprocess", json::object()));
      std::vector<NamedArray> arrays;
      auto to_named = [](const std::string& name, const Tensor& t) {
        return NamedArray{name, t.shape(), std::vector<double>(t.values().begin(), t.values().end())};
      };
      if (!prep_input.empty()) {
        arrays.push_back(to_named("x", preprocess_pipeline(read_sequence(prep_input), pp)));
      } else {
        const auto m = read_manifest(prep_manifest);
        validate_manifest(m);
        std::vector<Tensor> ts(m.sequences.size());
        parallel_for(ts.size(), c.jobs, [&](std::size_t i) { ts[i] = preprocess_pipeline(read_sequence(m.resolve(m.sequences[i])), pp); });
        for (std::size_t i = 0; i < ts.size(); ++i) arrays.push_back(to_named(m.sequences[i].path, ts[i]));
      }
      write_tensor_file(prep_out, arrays);
      out << "wrote " << arrays.size() << " tensors to " << prep_out << "\n";
    } else if (aug->parsed()) {
      const json cfg = load_config(c.config);
      AugmentSpec spec = augment_spec_from_json(cfg.value("augment", json::object()));
      const PreprocessConfig pp = preprocess_config_from_json(cfg.value("preprocess", json::object()));
      if (c.seed) spec.seed = *c.seed;
      if (aug_copies) spec.copies_per_sequence = *aug_copies;
      const auto m = expand_dataset(read_manifest(aug_manifest), spec, aug_out, pp, c.jobs);
      write_manifest(m, fs::path(aug_out) / "manifest.json");
      out << "wrote " << m.sequences.size() << " entries to " << (fs::path(aug_out) / "manifest.json").string() << "\n";
    } else if (trn->parsed()) {
      const RunSetup r = resolve(c, tf, trn_manifest);
      const Partition p = partition(r);
      const Dataset all = load_dataset(r.manifest, r.spec, r.preprocess, c.jobs);
      const Dataset tr = training_rows(r, all, p.train, c.jobs);
      const Dataset vl = all.subset(p.val), te = all.subset(p.test);
      fs::create_directories(trn_out);
      TrainResult result;
      const EvalReport report = r.train.dtype == "float32"
                                    ? train_run<float>(r, tr, vl, te, trn_out, result)
                                    : train_run<double>(r, tr, vl, te, trn_out, result);
      write_text_file(fs::path(trn_out) / "history.csv", history_csv(result.history));
      write_text_file(fs::path(trn_out) / "report.json", report_json(report));
      write_text_file(fs::path(trn_out) / "confusion.csv", confusion_csv(report));
      ojson resolved;
      resolved["model"] = to_json(r.spec);
      resolved["train"] = to_json(r.train);
      resolved["preprocess"] = to_json(r.preprocess);
      resolved["augment"] = to_json(r.augment);
      write_text_file(fs::path(trn_out) / "config.json", resolved.dump(1) + "\n");
      out << "epochs " << result.history.size() << ", best epoch " << result.best_epoch << ", test accuracy "
          << format_double(round_tenth(report.accuracy)) << "%, macro F1 "
          << format_double(round_tenth(report.macro_f1)) << "\n";
    } else if (ev->parsed()) {
      const auto m = read_manifest(ev_manifest);
      const EvalReport report = checkpoint_dtype(ev_model) == "float32"
                                    ? eval_checkpoint<float>(ev_model, m, c.jobs)
                                    : eval_checkpoint<double>(ev_model, m, c.jobs);
      emit(c.format == "csv" ? confusion_csv(report) : report_json(report), ev_out, out);
    } else if (cvc->parsed()) {
      const RunSetup r = resolve(c, tf, cv_manifest);
      const Dataset all = load_dataset(r.manifest, r.spec, r.preprocess, c.jobs);
      emit(cv_report(kfold_cv(all, r.spec, r.train, cv_k, c.jobs), c.format), cv_out, out);
    } else if (grd->parsed()) {
      const RunSetup r = resolve(c, tf, grid_manifest);
      const auto labels = labels_of(r.manifest);
      const Split s = stratified_split(labels, r.manifest.classes.size(), 1.0 - r.train.val_frac, r.train.seed);
      const Dataset all = load_dataset(r.manifest, r.spec, r.preprocess, c.jobs);
      const auto results = grid_search(space, training_rows(r, all, s.train, c.jobs), all.subset(s.test), r.spec,
                                       r.train, c.jobs);
      emit(grid_report(results, c.format), grid_out, out);
    } else if (va->parsed()) {
      const auto audit = verify_paper_architecture();
      if (c.format == "json") out << audit_json(audit);
      else if (c.format == "csv") out << audit_csv(audit);
      else out << audit.to_table();
    } else if (inf->parsed()) {
      auto model = load_checkpoint<double>(inf_model);
      const auto preds = offline_window_predictions(model, read_sequence(inf_input), inf_stream);
      std::string text;
      if (c.format == "csv") {
        text = "window_end,label";
        for (std::size_t k = 0; k < model.spec().classes; ++k) text += ",p_" + model.class_name(k);
        text += "\n";
        for (const auto& p : preds) {
          text += std::to_string(p.window_end) + ',' + p.label_name;
          for (double v : p.probs) text += ',' + format_double(v);
          text += '\n';
        }
      } else {
        for (const auto& p : preds) text += prediction_json(p) + "\n";
      }
      emit(text, inf_out, out);
    } else if (srv->parsed()) {
      auto source = std::make_shared<const ModelSource>(ModelSource::from_file(srv_model));
      srv_opt.handle_signals = true;
      WsServer server(srv_opt, source);
      const unsigned short port = server.start();
      out << "listening on ws://" << srv_opt.host << ":" << port << std::endl;
      server.wait();
    } else if (bn->parsed()) {
      const auto source = ModelSource::from_file(bn_model);
      const auto s = bench_latency(source, bn_n, bn_stream, c.seed.value_or(0));
      std::string text;
      if (c.format == "csv") {
        text = "n,p50_ms,p95_ms,mean_ms\n" + std::to_string(s.n) + ',' + format_double(s.p50) + ',' +
               format_double(s.p95) + ',' + format_double(s.mean) + '\n';
      } else {
        ojson j{{"n", s.n}, {"p50_ms", s.p50}, {"p95_ms", s.p95}, {"mean_ms", s.mean}};
        text = j.dump(1) + "\n";
      }
      emit(text, bn_out, out);
    }
  } catch (const Error& e) {
    err << "error (" << e.kind() << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace sgr
