// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "helpers.hpp"
#include "sgr/errors.hpp"
#include "sgr/training.hpp"

using namespace sgr;
using namespace sgr::testing;

namespace {

/// Tiny separable dataset: class c shifts channel 0 by c - 1.
Dataset planted(std::size_t per_class, std::uint64_t seed) {
  Dataset d;
  d.classes = 3;
  std::mt19937_64 rng(seed);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      Tensor x = random_tensor({8, 8, 3}, rng, -0.3, 0.3);
      for (std::size_t t = 0; t < 8; ++t)
        for (std::size_t k = 0; k < 8; ++k) x.at(t, k, 0) += static_cast<double>(c) - 1.0;
      d.inputs.push_back(std::move(x));
      d.labels.push_back(c);
      d.ids.push_back("s" + std::to_string(c) + "_" + std::to_string(i));
    }
  return d;
}

TrainConfig quick_config() {
  TrainConfig c;
  c.max_epochs = 15;
  c.batch_size = 8;
  c.adam.lr0 = 0.01;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("f1 identities of the published table") {
  const std::vector<std::array<double, 3>> rows = {
      {95, 93, 94.0}, {91, 94, 92.5}, {86, 82, 84.0}, {89, 85, 87.0}, {92, 89, 90.5}};
  for (const auto& r : rows) CHECK(std::abs(round_tenth(f1(r[0], r[1])) - r[2]) <= 0.05);
  CHECK(f1(0.0, 0.0) == 0.0);
  CHECK(round_tenth(92.45) == 92.5);
  CHECK(round_tenth(87.04) == 87.0);
}

TEST_CASE("evaluation report") {
  const std::vector<std::size_t> truth = {0, 0, 1, 1, 2, 2};
  const std::vector<std::size_t> pred = {0, 1, 1, 1, 0, 2};
  const auto r = make_report(truth, pred, {"a", "b", "c"});
  CHECK(r.total == 6);
  CHECK(r.accuracy == doctest::Approx(400.0 / 6.0));
  CHECK(r.per_class[1].precision == doctest::Approx(200.0 / 3.0));
  CHECK(r.per_class[1].recall == doctest::Approx(100.0));
  CHECK(r.per_class[0].f1 == doctest::Approx(50.0));
  CHECK(r.confusion[2][0] == 1);
  const double mean_f1 = (r.per_class[0].f1 + r.per_class[1].f1 + r.per_class[2].f1) / 3.0;
  CHECK(r.macro_f1 == doctest::Approx(mean_f1));

  const auto z = make_report({0, 0}, {0, 0}, {"a", "b"});
  CHECK(z.per_class[1].precision == 0.0);
  CHECK(z.per_class[1].f1 == 0.0);

  CHECK(confusion_csv(r).rfind("true\\predicted,a,b,c\n", 0) == 0);
  CHECK(report_json(r).find("\"macro_f1\"") != std::string::npos);
}

TEST_CASE("stratified split and folds") {
  std::vector<std::size_t> labels;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 5 + c; ++i) labels.push_back(c);
  const auto s = stratified_split(labels, 3, 0.8, 11);
  std::map<std::size_t, std::size_t> train_counts;
  for (auto i : s.train) ++train_counts[labels[i]];
  CHECK(train_counts[0] == 4);  // round_half_up(4.0)
  CHECK(train_counts[1] == 5);  // 4.8
  CHECK(train_counts[2] == 6);  // 5.6
  CHECK(s.train.size() + s.test.size() == labels.size());
  const auto again = stratified_split(labels, 3, 0.8, 11);
  CHECK(again.train == s.train);
  CHECK(stratified_split(labels, 3, 0.8, 12).train != s.train);

  CHECK_THROWS_AS(stratified_split(std::vector<std::size_t>{0, 0, 1}, 2, 0.8, 1), StratifyError);

  const auto folds = stratified_folds(labels, 3, 3, 5);
  std::vector<std::vector<std::size_t>> per(3, std::vector<std::size_t>(3, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) ++per[folds[i]][labels[i]];
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t c = 0; c < 3; ++c) CHECK(per[f][c] >= 1);
  CHECK_THROWS_AS(stratified_folds(labels, 3, 1, 5), ConfigError);
}

TEST_CASE("class weights") {
  const auto w = class_weights({0, 0, 0, 1}, 2);
  CHECK(w[0] == doctest::Approx(4.0 / 6.0));
  CHECK(w[1] == doctest::Approx(2.0));
}

TEST_CASE("early stopping on a scripted trace") {
  // best at the first epoch, then no improvement for 12 epochs
  EarlyStopping es(12);
  std::vector<double> trace = {1.0};
  for (int i = 0; i < 20; ++i) trace.push_back(1.0 + 0.01 * (i + 1));
  int stopped_at = -1;
  for (std::size_t e = 0; e < trace.size(); ++e)
    if (es.update(trace[e])) {
      stopped_at = static_cast<int>(e);
      break;
    }
  CHECK(stopped_at == 12);
  CHECK(es.epochs_seen() == 13);
  CHECK(es.best_epoch() == 0);
  CHECK(es.best_loss() == 1.0);

  EarlyStopping md(2, 0.1);
  CHECK_FALSE(md.update(1.0));
  CHECK_FALSE(md.update(0.95));  // within min_delta
  CHECK_FALSE(md.improved());
  CHECK(md.update(0.92));
}

TEST_CASE("training learns a planted signal and is deterministic") {
  const auto data = planted(12, 1);
  const auto split = stratified_split(data.labels, 3, 0.75, 2);
  const auto tr = data.subset(split.train), va = data.subset(split.test);
  auto cfg = quick_config();

  Model<double> m(tiny_spec(4));
  const auto res = train(m, tr, va, cfg);
  REQUIRE(!res.history.empty());
  for (std::size_t e = 0; e < res.history.size(); ++e) {
    CHECK(res.history[e].epoch == static_cast<int>(e));
    CHECK(res.history[e].lr == cfg.adam.lr0 * std::pow(0.1, static_cast<double>(e / 50)));
    CHECK(res.history[e].wall_ms == 0.0);
  }
  const auto report = evaluate(m, va);
  CHECK(report.accuracy >= 90.0);

  Model<double> m2(tiny_spec(4));
  const auto res2 = train(m2, tr, va, cfg);
  CHECK(history_csv(res.history) == history_csv(res2.history));
  CHECK(encode_checkpoint(m) == encode_checkpoint(m2));

  cfg.max_epochs = 3;
  Model<float> mf(tiny_spec(4));
  CHECK(train(mf, tr, va, cfg).history.size() == 3);
}

TEST_CASE("lr column across a decay boundary") {
  const auto data = planted(3, 2);
  auto cfg = quick_config();
  cfg.adam.decay_every = 2;
  cfg.max_epochs = 5;
  cfg.patience = 100;
  Model<double> m(tiny_spec(1));
  const auto res = train(m, data, data, cfg);
  REQUIRE(res.history.size() == 5);
  CHECK(res.history[1].lr == 0.01);
  CHECK(res.history[2].lr == 0.01 * std::pow(0.1, 1));
  CHECK(res.history[4].lr == 0.01 * std::pow(0.1, 2));
}

TEST_CASE("grid search ranks a planted best point first") {
  const auto data = planted(10, 5);
  const auto split = stratified_split(data.labels, 3, 0.7, 1);
  GridSpace space{{0.0, 0.01}, {3}, {3}};
  CHECK(space.points().size() == 2);
  auto cfg = quick_config();
  const auto r1 = grid_search(space, data.subset(split.train), data.subset(split.test), tiny_spec(2), cfg, 1);
  REQUIRE(r1.size() == 2);
  CHECK(r1[0].point.lr0 == 0.01);
  CHECK(r1[0].val_macro_f1 > r1[1].val_macro_f1);
  const auto r2 = grid_search(space, data.subset(split.train), data.subset(split.test), tiny_spec(2), cfg, 2);
  CHECK(r2[0].val_loss == r1[0].val_loss);
  CHECK(r2[1].val_loss == r1[1].val_loss);
}

TEST_CASE("k-fold cross-validation is independent of the job count") {
  const auto data = planted(4, 6);
  auto cfg = quick_config();
  cfg.max_epochs = 4;
  const auto a = kfold_cv(data, tiny_spec(3), cfg, 3, 1);
  const auto b = kfold_cv(data, tiny_spec(3), cfg, 3, 3);
  CHECK(a.folds.size() == 3);
  CHECK(a.macro_f1_mean == b.macro_f1_mean);
  CHECK(a.macro_f1_std == b.macro_f1_std);
  std::size_t total = 0;
  for (auto n : a.fold_sizes) total += n;
  CHECK(total == data.size());
}

TEST_CASE("config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.adam.lr0 = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
