// Tests for the benchmark harness: CSV loading, split protocol,
// standardization, configuration parsing, state serialization, the training
// loop's early stopping and weight-histogram collection, test-set scoring,
// train/test hygiene, determinism of the full protocol, and report files.
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "shrinkage/benchmark.hpp"
#include "shrinkage/serialize.hpp"

using shrinkage::ConfigError;
using shrinkage::Dataset;
using shrinkage::DomainError;
using shrinkage::ExperimentConfig;
using shrinkage::FittedModel;
using shrinkage::Histogram;
using shrinkage::IoError;
using shrinkage::KeyValueConfig;
using shrinkage::ModelPlan;
using shrinkage::NetworkConfig;
using shrinkage::NoiseFamily;
using shrinkage::NoiseStructure;
using shrinkage::PhaseOutcome;
using shrinkage::ResultTable;
using shrinkage::RngStream;
using shrinkage::SplitIndices;
using shrinkage::SplitOutcome;
using shrinkage::Standardizer;
using shrinkage::Tensor;
using shrinkage::TrainSettings;
using shrinkage::VariationalState;
using shrinkage::WeightSet;

namespace {

std::string temp_path(const std::string& name) { return testing::TempDir() + name; }

std::string write_file(const std::string& name, const std::string& content) {
  const std::string path = temp_path(name);
  std::ofstream out(path);
  out << content;
  out.close();
  return path;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

// Synthetic regression dataset built in memory.
Dataset synthetic_dataset(std::size_t n, std::size_t dim, std::uint64_t seed,
                          bool with_signal = true) {
  RngStream rng(seed);
  Dataset d;
  d.name = "synthetic";
  for (std::size_t c = 0; c < dim; ++c) d.feature_names.push_back("x" + std::to_string(c));
  d.x = Tensor({n, dim});
  for (double& v : d.x.values()) v = rng.normal();
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (with_signal)
      d.y[i] = 2.0 * d.x.at(i, 0) - (dim > 1 ? d.x.at(i, 1) : 0.0) + 0.3 * rng.normal();
    else
      d.y[i] = 5.0 + 4.0 * rng.normal();
  }
  return d;
}

// A small fully specified experiment for the protocol tests (no file I/O).
ExperimentConfig tiny_experiment() {
  ExperimentConfig cfg;
  cfg.model = "map";
  cfg.hidden = {3};
  cfg.epochs = 3;
  cfg.batch = 16;
  cfg.lr = 1e-3;
  cfg.eval_every = 1;
  cfg.patience = 10;
  cfg.val_fraction = 0.2;
  cfg.val_samples = 1;
  cfg.test_samples = 1;
  cfg.splits = 2;
  cfg.test_fraction = 0.2;
  cfg.seed = 7;
  cfg.sd_grid = 5;
  cfg.sd_min = 0.05;
  cfg.sd_max = 2.0;
  cfg.histogram_bins = 40;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV loading

TEST(BenchCsv, LoadsHeaderedFileWithTargetAnywhere) {
  const std::string path = write_file("ok.csv",
                                      "a,y,b\n"
                                      "1.5,10,2.5\n"
                                      "-0.25,20,0.125\n"
                                      "\n"  // blank lines are skipped
                                      "3,30,4\n");
  const Dataset d = shrinkage::load_csv(path, "y");
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.dim(), 2u);
  ASSERT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(d.x.at(0, 0), 1.5);
  EXPECT_EQ(d.x.at(0, 1), 2.5);
  EXPECT_EQ(d.x.at(1, 0), -0.25);
  EXPECT_EQ(d.x.at(2, 1), 4.0);
  EXPECT_EQ(d.y, (std::vector<double>{10.0, 20.0, 30.0}));
}

TEST(BenchCsv, HandlesCrLfLineEndings) {
  const std::string path = write_file("crlf.csv", "x1,y\r\n1,2\r\n3,4\r\n");
  const Dataset d = shrinkage::load_csv(path, "y");
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.y, (std::vector<double>{2.0, 4.0}));
}

TEST(BenchCsv, RejectsMalformedInput) {
  EXPECT_THROW(shrinkage::load_csv(temp_path("missing_file.csv")), IoError);
  EXPECT_THROW(shrinkage::load_csv(write_file("empty.csv", "")), IoError);

  // Target column absent.
  try {
    shrinkage::load_csv(write_file("notarget.csv", "a,b\n1,2\n"), "y");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("'y' not found"), std::string::npos) << e.what();
  }

  // Non-numeric cell names the cell and the line.
  try {
    shrinkage::load_csv(write_file("text.csv", "a,y\n1,2\nfoo,4\n"), "y");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'foo'"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":3"), std::string::npos) << msg;
  }

  // Ragged rows in both directions, with line info.
  try {
    shrinkage::load_csv(write_file("short.csv", "a,b,y\n1,2,3\n4,5\n"), "y");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 3"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":3"), std::string::npos) << msg;
  }
  EXPECT_THROW(shrinkage::load_csv(write_file("long.csv", "a,y\n1,2,9\n"), "y"), IoError);

  // Header only, no data rows.
  EXPECT_THROW(shrinkage::load_csv(write_file("hdr.csv", "a,y\n"), "y"), IoError);
}

TEST(BenchCsv, LoadsBundledEnergyDataset) {
  const std::string path = std::string(SHRINKAGE_REPO_DIR) + "/data/energy.csv";
  if (!std::ifstream(path)) GTEST_SKIP() << "dataset not present: " << path;
  const Dataset d = shrinkage::load_csv(path, "y");
  EXPECT_EQ(d.size(), 768u);
  EXPECT_EQ(d.dim(), 8u);
  EXPECT_TRUE(std::isfinite(d.x.at(767, 7)));
}

// ---------------------------------------------------------------------------
// Split protocol

TEST(BenchSplits, DeterministicDisjointCoveringSplits) {
  const auto splits = shrinkage::make_splits(100, 5, 0.1, 42);
  ASSERT_EQ(splits.size(), 5u);
  for (const SplitIndices& s : splits) {
    EXPECT_EQ(s.test.size(), 10u);
    EXPECT_EQ(s.train.size(), 90u);
    EXPECT_TRUE(std::is_sorted(s.test.begin(), s.test.end()));
    EXPECT_TRUE(std::is_sorted(s.train.begin(), s.train.end()));
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    all.insert(s.test.begin(), s.test.end());
    EXPECT_EQ(all.size(), 100u);  // disjoint and covering
    EXPECT_EQ(*all.begin(), 0u);
    EXPECT_EQ(*all.rbegin(), 99u);
  }

  const auto again = shrinkage::make_splits(100, 5, 0.1, 42);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(splits[k].test, again[k].test);
    EXPECT_EQ(splits[k].train, again[k].train);
  }
  const auto other = shrinkage::make_splits(100, 5, 0.1, 43);
  bool any_diff = false;
  for (std::size_t k = 0; k < 5; ++k) any_diff = any_diff || other[k].test != splits[k].test;
  EXPECT_TRUE(any_diff);
}

TEST(BenchSplits, TestSetsAreApproximatelyIndependent) {
  // Two independent 10% test sets overlap in ~1% of the rows on average.
  const std::size_t n = 200, count = 40;
  const auto splits = shrinkage::make_splits(n, count, 0.1, 9);
  double overlap = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < count; ++a)
    for (std::size_t b = a + 1; b < count; ++b) {
      std::vector<std::size_t> inter;
      std::set_intersection(splits[a].test.begin(), splits[a].test.end(),
                            splits[b].test.begin(), splits[b].test.end(),
                            std::back_inserter(inter));
      overlap += static_cast<double>(inter.size()) / static_cast<double>(splits[a].test.size());
      ++pairs;
    }
  overlap /= static_cast<double>(pairs);
  EXPECT_GT(overlap, 0.05);
  EXPECT_LT(overlap, 0.15);
}

TEST(BenchSplits, ValidatesArguments) {
  EXPECT_NO_THROW(shrinkage::make_splits(10, 1, 0.1, 1));
  EXPECT_EQ(shrinkage::make_splits(10, 1, 0.05, 1)[0].test.size(), 1u);  // floor, min 1
  EXPECT_THROW(shrinkage::make_splits(9, 1, 0.1, 1), DomainError);
  EXPECT_THROW(shrinkage::make_splits(100, 1, 0.0, 1), DomainError);
  EXPECT_THROW(shrinkage::make_splits(100, 1, 1.0, 1), DomainError);
  EXPECT_TRUE(shrinkage::make_splits(100, 0, 0.1, 1).empty());
}

// ---------------------------------------------------------------------------
// Standardizer

TEST(BenchStandardizer, FitsOnGivenRowsOnly) {
  Dataset d;
  d.x = Tensor({3, 2});
  // Rows 0 and 1 are the training rows; row 2 is a wild outlier that must not
  // influence the statistics.
  d.x.at(0, 0) = 1.0;  d.x.at(0, 1) = 5.0;
  d.x.at(1, 0) = 3.0;  d.x.at(1, 1) = 5.0;
  d.x.at(2, 0) = 1e6;  d.x.at(2, 1) = -1e6;
  d.y = {10.0, 14.0, 1e6};

  const Standardizer s = Standardizer::fit(d, {0, 1});
  EXPECT_DOUBLE_EQ(s.x_mean[0], 2.0);
  EXPECT_DOUBLE_EQ(s.x_sd[0], 1.0);  // population sd of {1,3}
  EXPECT_DOUBLE_EQ(s.x_mean[1], 5.0);
  EXPECT_DOUBLE_EQ(s.x_sd[1], 1.0);  // constant column keeps scale 1
  EXPECT_DOUBLE_EQ(s.y_mean, 12.0);
  EXPECT_DOUBLE_EQ(s.y_sd, 2.0);

  const Tensor xs = s.x_rows(d, {0, 1});
  EXPECT_DOUBLE_EQ(xs.at(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(xs.at(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(xs.at(0, 1), 0.0);
  const Tensor ys = s.y_rows(d, {0, 1});
  EXPECT_DOUBLE_EQ(ys.at(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(ys.at(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(s.y_to_original(ys.at(0, 0)), 10.0);

  EXPECT_THROW(Standardizer::fit(d, {}), DomainError);
}

// ---------------------------------------------------------------------------
// Configuration

TEST(BenchConfig, ParsesSectionsCommentsAndOverrides) {
  const std::string path = write_file("cfg.ini",
                                      "# leading comment\n"
                                      "[data]\n"
                                      "name = energy   # trailing comment\n"
                                      "\n"
                                      "[train]\n"
                                      "epochs = 50\n"
                                      "lr=0.01\n");
  KeyValueConfig kv = KeyValueConfig::parse_file(path);
  EXPECT_EQ(kv.get("data.name", ""), "energy");
  EXPECT_EQ(kv.get_int("train.epochs", 0), 50);
  EXPECT_DOUBLE_EQ(kv.get_double("train.lr", 0.0), 0.01);
  EXPECT_FALSE(kv.has("train.batch"));
  EXPECT_EQ(kv.get("train.batch", "fallback"), "fallback");

  kv.apply_override("train.epochs=75");
  kv.apply_override("model.kind = ta");
  EXPECT_EQ(kv.get_int("train.epochs", 0), 75);
  EXPECT_EQ(kv.get("model.kind", ""), "ta");
  EXPECT_THROW(kv.apply_override("no-equals-sign"), ConfigError);
  EXPECT_THROW(kv.apply_override("=value"), ConfigError);

  EXPECT_THROW(KeyValueConfig::parse_file(temp_path("missing.ini")), IoError);
  EXPECT_THROW(KeyValueConfig::parse_file(write_file("bad1.ini", "[data\nname=x\n")), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse_file(write_file("bad2.ini", "keyonly\n")), ConfigError);
  EXPECT_THROW(KeyValueConfig::parse_file(write_file("bad3.ini", "= nokey\n")), ConfigError);

  KeyValueConfig typed;
  typed.values["k"] = "abc";
  EXPECT_THROW(typed.get_double("k", 0.0), ConfigError);
  EXPECT_THROW(typed.get_int("k", 0), ConfigError);
  EXPECT_THROW(typed.get_bool("k", false), ConfigError);
  typed.values["k"] = "true";
  EXPECT_TRUE(typed.get_bool("k", false));
  typed.values["k"] = "no";
  EXPECT_FALSE(typed.get_bool("k", true));
}

TEST(BenchConfig, ResolvesExperimentWithDefaultsAndEcho) {
  KeyValueConfig kv;
  const ExperimentConfig defaults = ExperimentConfig::from(kv);
  EXPECT_EQ(defaults.model, "lb");
  EXPECT_EQ(defaults.hidden, (std::vector<std::size_t>{50}));
  EXPECT_EQ(defaults.splits, 20u);

  kv.values["network.hidden"] = "50, 50";
  kv.values["model.kind"] = "em-ard-add";
  kv.values["network.residual"] = "blocks";
  kv.values["model.hyper"] = "log-uniform";
  kv.values["protocol.seed"] = "123";
  const ExperimentConfig cfg = ExperimentConfig::from(kv);
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{50, 50}));
  EXPECT_TRUE(cfg.is_em());
  EXPECT_EQ(cfg.prior_structure(), shrinkage::PriorStructure::ArdAdd);
  EXPECT_EQ(cfg.seed, 123u);

  // The echo covers exactly the known keys, and feeding it back reproduces
  // the same configuration.
  const auto echo = cfg.echo();
  EXPECT_EQ(echo.size(), ExperimentConfig::known_keys().size());
  for (const auto& [k, v] : echo) EXPECT_TRUE(ExperimentConfig::known_keys().count(k)) << k;
  KeyValueConfig round;
  round.values.insert(echo.begin(), echo.end());
  EXPECT_EQ(ExperimentConfig::from(round).echo(), echo);
}

TEST(BenchConfig, RejectsUnknownAndInvalidKeys) {
  KeyValueConfig kv;
  kv.values["data.nmae"] = "oops";
  try {
    ExperimentConfig::from(kv);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("data.nmae"), std::string::npos);
  }

  auto reject = [](const std::string& key, const std::string& value) {
    KeyValueConfig bad;
    bad.values[key] = value;
    EXPECT_THROW(ExperimentConfig::from(bad), ConfigError) << key << "=" << value;
  };
  reject("model.kind", "dropout");
  reject("model.noise", "cauchy");
  reject("model.structure", "rows");
  reject("model.hyper", "gamma");
  reject("network.residual", "some");
  reject("network.activation", "tanh");
  reject("network.hidden", "50,-3");
  reject("network.hidden", "banana");
  reject("model.drop_rate", "1.0");
  reject("train.val_fraction", "0.5");
  reject("train.epochs", "-1");
  reject("protocol.sd_min", "0");
}

TEST(BenchConfig, MapsModelPiecesAndHonorsDataDirEnv) {
  ExperimentConfig cfg = tiny_experiment();
  cfg.hidden = {4, 4, 4};
  cfg.residual = "blocks";
  const NetworkConfig net = cfg.make_network(13);
  EXPECT_EQ(net.residual, (std::vector<bool>{false, true, true}));
  cfg.residual = "all";
  cfg.hidden = {13, 13};
  EXPECT_EQ(cfg.make_network(13).residual, (std::vector<bool>{true, true}));

  cfg.structure = "weight";
  cfg.noise = "rayleigh";
  cfg.noise_scale = 0.7;
  const NoiseStructure st = cfg.make_structure();
  EXPECT_TRUE(st.has_weight());
  EXPECT_EQ(st.unit.kind(), NoiseFamily::Kind::Rayleigh);
  EXPECT_DOUBLE_EQ(st.unit.scale(), 0.7);

  cfg.hyper = "half-cauchy";
  cfg.hyper_b = 2.5;
  EXPECT_EQ(cfg.make_hyper().kind, shrinkage::HyperPrior::Kind::HalfCauchy);
  EXPECT_DOUBLE_EQ(cfg.make_hyper().b, 2.5);
  EXPECT_THROW(cfg.prior_structure(), ConfigError);  // map model has none

  cfg.data_dir = "some/dir";
  cfg.data_name = "energy";
  const char* before = std::getenv("SHRINKAGE_DATA_DIR");
  const std::string saved = before ? before : "";
  ASSERT_EQ(setenv("SHRINKAGE_DATA_DIR", "/env/override", 1), 0);
  EXPECT_EQ(cfg.data_path(), "/env/override/energy.csv");
  ASSERT_EQ(unsetenv("SHRINKAGE_DATA_DIR"), 0);
  EXPECT_EQ(cfg.data_path(), "some/dir/energy.csv");
  if (before) setenv("SHRINKAGE_DATA_DIR", saved.c_str(), 1);
}

// ---------------------------------------------------------------------------
// State serialization

TEST(BenchSerialize, WeightRoundTripIsBitExact) {
  WeightSet ws;
  ws.w.push_back(Tensor({2, 3}, {1.0 / 3.0, -0.1, 1e-300, 1.7976931348623157e308, 0.0, -2.5}));
  ws.w.push_back(Tensor({1, 1}, {3.14159265358979312}));
  const std::string path = temp_path("weights.txt");
  shrinkage::save_weights(path, ws);
  EXPECT_EQ(shrinkage::state_file_type(path), "point");

  const WeightSet back = shrinkage::load_weights(path);
  ASSERT_EQ(back.w.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    ASSERT_TRUE(back.w[i].same_shape(ws.w[i]));
    for (std::size_t k = 0; k < ws.w[i].size(); ++k)
      EXPECT_EQ(back.w[i].values()[k], ws.w[i].values()[k]);
  }
}

TEST(BenchSerialize, VariationalRoundTripIsBitExact) {
  VariationalState st;
  st.mu = {Tensor({2, 2}, {0.1, -0.2, 0.3, -0.4}), Tensor({3, 1}, {1e-7, 2e3, -0.5})};
  st.rho = {Tensor({2, 2}, {-3.0, -2.9, -2.8, -2.7}), Tensor({3, 1}, {-3.0, -2.0, -1.0})};
  st.row_scale_sq = {{0.25, 1.0 / 7.0}, {}};  // the ADD structure has empty groups
  st.layer_scale_sq = {1.0, 0.125};
  const std::string path = temp_path("state.txt");
  shrinkage::save_state(path, st);
  EXPECT_EQ(shrinkage::state_file_type(path), "variational");

  const VariationalState back = shrinkage::load_state(path);
  ASSERT_EQ(back.mu.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < st.mu[i].size(); ++k) {
      EXPECT_EQ(back.mu[i].values()[k], st.mu[i].values()[k]);
      EXPECT_EQ(back.rho[i].values()[k], st.rho[i].values()[k]);
    }
  EXPECT_EQ(back.row_scale_sq, st.row_scale_sq);
  EXPECT_EQ(back.layer_scale_sq, st.layer_scale_sq);
}

TEST(BenchSerialize, RejectsWrongTypeTruncationAndGarbage) {
  WeightSet ws;
  ws.w.push_back(Tensor({1, 2}, {1.0, 2.0}));
  const std::string wpath = temp_path("w.txt");
  shrinkage::save_weights(wpath, ws);

  // Loading a point state as variational (and vice versa) names both types.
  try {
    shrinkage::load_state(wpath);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'point'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("'variational'"), std::string::npos) << msg;
  }

  // Truncated matrix payload.
  const std::string full = read_file(wpath);
  const std::string tpath = write_file("trunc.txt", full.substr(0, full.size() - 4));
  EXPECT_THROW(shrinkage::load_weights(tpath), IoError);

  EXPECT_THROW(shrinkage::load_weights(write_file("junk.txt", "not a state file")), IoError);
  EXPECT_THROW(shrinkage::state_file_type(write_file("junk2.txt", "nope 1")), IoError);
  EXPECT_THROW(shrinkage::load_weights(temp_path("absent.txt")), IoError);
}

// ---------------------------------------------------------------------------
// Model plans and train settings

TEST(BenchPlan, MapsConfigToPlan) {
  ExperimentConfig cfg = tiny_experiment();
  cfg.model = "lb";
  cfg.samples = 7;
  cfg.sigma0 = 1.5;
  cfg.init_sigma = 0.01;
  ModelPlan lb = shrinkage::make_plan(cfg, 5);
  EXPECT_FALSE(lb.em);
  EXPECT_FALSE(lb.map);
  ASSERT_TRUE(lb.noise.has_value());
  EXPECT_EQ(lb.samples, 7u);
  EXPECT_DOUBLE_EQ(lb.sigma0, 1.5);
  EXPECT_DOUBLE_EQ(lb.init_sigma, 0.01);
  EXPECT_DOUBLE_EQ(lb.train_noise_var, 1.0);
  EXPECT_FALSE(lb.decay);
  EXPECT_EQ(lb.net.input_dim, 5u);

  cfg.model = "map";
  ModelPlan map = shrinkage::make_plan(cfg, 5);
  EXPECT_TRUE(map.map);
  EXPECT_FALSE(map.noise.has_value());
  EXPECT_TRUE(map.decay);  // MAP always regularizes

  cfg.model = "em-add";
  ModelPlan em = shrinkage::make_plan(cfg, 5);
  EXPECT_TRUE(em.em);
  EXPECT_FALSE(em.noise.has_value());
  EXPECT_EQ(em.prior, shrinkage::PriorStructure::Add);

  cfg.model = "iw";
  cfg.weight_decay = true;
  EXPECT_TRUE(shrinkage::make_plan(cfg, 5).decay);
}

TEST(BenchPlan, SdGridIsLogSpacedWithExactEndpoints) {
  TrainSettings t;
  t.sd_grid = 30;
  t.sd_min = 1e-3;
  t.sd_max = 10.0;
  const std::vector<double> g = t.sd_grid_values();
  ASSERT_EQ(g.size(), 30u);
  EXPECT_DOUBLE_EQ(g.front(), 1e-3);
  EXPECT_DOUBLE_EQ(g.back(), 10.0);
  const double ratio = g[1] / g[0];
  for (std::size_t i = 1; i + 1 < g.size(); ++i)
    EXPECT_NEAR(g[i + 1] / g[i], ratio, 1e-9 * ratio);

  t.sd_grid = 1;
  const std::vector<double> one = t.sd_grid_values();
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0], 1e-3);
}

TEST(BenchPlan, HistogramBinsClampAndCount) {
  Histogram h(40);
  h.add(0.125);   // bin 5
  h.add(-3.0);    // clamps to bin 0
  h.add(2.0);     // clamps to the last bin
  h.add(1.0);     // exactly hi also lands in the last bin
  EXPECT_EQ(h.counts[5], 1u);
  EXPECT_EQ(h.counts[0], 1u);
  EXPECT_EQ(h.counts[39], 2u);
  EXPECT_EQ(h.total(), 4u);
  EXPECT_EQ(h.occupied(), 3u);
}

// ---------------------------------------------------------------------------
// Training loop semantics

TEST(BenchTrain, EarlyStopsAfterPatienceEvaluationsWithoutImprovement) {
  // With lr = 0 the model never changes, so the first evaluation sets the
  // best score and every later one ties (no strict improvement): training
  // stops after `patience` further evaluations.
  const Dataset d = synthetic_dataset(16, 2, 3);
  ExperimentConfig cfg = tiny_experiment();
  ModelPlan plan = shrinkage::make_plan(cfg, d.dim());
  TrainSettings s = TrainSettings::from(cfg);
  s.epochs = 10;
  s.lr = 0.0;
  s.eval_every = 1;
  s.patience = 2;

  const Standardizer sc = Standardizer::fit(d, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  const std::vector<std::size_t> fit = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
  const std::vector<std::size_t> val = {12, 13, 14, 15};
  const Tensor xf = sc.x_rows(d, fit), yf = sc.y_rows(d, fit);
  const Tensor xv = sc.x_rows(d, val), yv = sc.y_rows(d, val);

  const PhaseOutcome out = shrinkage::train_phase(plan, xf, yf, &xv, &yv, s, 11);
  EXPECT_TRUE(out.stopped_early);
  EXPECT_EQ(out.best_epoch, 1u);
  EXPECT_EQ(out.epochs_run, 3u);  // best at 1, ties at 2 and 3, then stop
  EXPECT_TRUE(std::isfinite(out.best.loglik));

  // Without validation data the phase runs to the end and reports it.
  const PhaseOutcome full = shrinkage::train_phase(plan, xf, yf, nullptr, nullptr, s, 11);
  EXPECT_FALSE(full.stopped_early);
  EXPECT_EQ(full.epochs_run, 10u);
  EXPECT_EQ(full.best_epoch, 10u);
}

TEST(BenchTrain, HistogramCollectsFinalEpochWeights) {
  // The lower bound assigns every sample the weight 1/S, so the histogram
  // must hold (batches in the final epoch) * samples entries in one bin.
  const Dataset d = synthetic_dataset(10, 2, 4);
  ExperimentConfig cfg = tiny_experiment();
  cfg.model = "lb";
  cfg.samples = 5;
  ModelPlan plan = shrinkage::make_plan(cfg, d.dim());
  TrainSettings s = TrainSettings::from(cfg);
  s.epochs = 2;
  s.batch = 4;

  std::vector<std::size_t> all(10);
  for (std::size_t i = 0; i < 10; ++i) all[i] = i;
  const Standardizer sc = Standardizer::fit(d, all);
  const Tensor x = sc.x_rows(d, all), y = sc.y_rows(d, all);

  Histogram hist(40);
  shrinkage::train_phase(plan, x, y, nullptr, nullptr, s, 21, &hist);
  EXPECT_EQ(hist.total(), 15u);  // ceil(10/4) = 3 batches x 5 samples
  EXPECT_EQ(hist.occupied(), 1u);
  EXPECT_EQ(hist.counts[8], 15u);  // 1/5 = 0.2 lands in bin floor(0.2*40)
}

TEST(BenchTrain, SameSeedReproducesWeightsBitwise) {
  const Dataset d = synthetic_dataset(24, 2, 5);
  ExperimentConfig cfg = tiny_experiment();
  cfg.model = "ta";
  cfg.samples = 4;
  ModelPlan plan = shrinkage::make_plan(cfg, d.dim());
  TrainSettings s = TrainSettings::from(cfg);
  s.epochs = 3;
  s.batch = 8;

  std::vector<std::size_t> all(24);
  for (std::size_t i = 0; i < 24; ++i) all[i] = i;
  const Standardizer sc = Standardizer::fit(d, all);
  const Tensor x = sc.x_rows(d, all), y = sc.y_rows(d, all);

  const PhaseOutcome a = shrinkage::train_phase(plan, x, y, nullptr, nullptr, s, 77);
  const PhaseOutcome b = shrinkage::train_phase(plan, x, y, nullptr, nullptr, s, 77);
  const PhaseOutcome c = shrinkage::train_phase(plan, x, y, nullptr, nullptr, s, 78);
  ASSERT_EQ(a.model.ws.w.size(), b.model.ws.w.size());
  bool all_equal = true, any_diff_seed = false;
  for (std::size_t i = 0; i < a.model.ws.w.size(); ++i)
    for (std::size_t k = 0; k < a.model.ws.w[i].size(); ++k) {
      all_equal = all_equal && a.model.ws.w[i].values()[k] == b.model.ws.w[i].values()[k];
      any_diff_seed = any_diff_seed || a.model.ws.w[i].values()[k] != c.model.ws.w[i].values()[k];
    }
  EXPECT_TRUE(all_equal);
  EXPECT_TRUE(any_diff_seed);
}

// ---------------------------------------------------------------------------
// Test-set evaluation

TEST(BenchEval, MatchesHandComputedMetrics) {
  // Identity network f(x) = x (two 1x1 weight matrices of 1), so predictions
  // in standardized units equal the inputs; the plan is noiseless MAP.
  NetworkConfig net;
  net.input_dim = 1;
  net.hidden = {1};
  net.output_dim = 1;
  net.activation = shrinkage::Activation::Identity;
  net.bias = false;
  ModelPlan plan;
  plan.net = net;
  plan.kind = "map";
  plan.map = true;
  FittedModel model;
  model.ws.w = {Tensor({1, 1}, 1.0), Tensor({1, 1}, 1.0)};

  Standardizer sc;
  sc.x_mean = {0.0};
  sc.x_sd = {1.0};
  sc.y_mean = 2.0;
  sc.y_sd = 3.0;

  Tensor x_std({2, 1});
  x_std.at(0, 0) = 0.5;
  x_std.at(1, 0) = -1.0;
  const std::vector<double> y_orig = {3.0, 1.4};
  const double sd = 0.7;

  const shrinkage::TestMetrics m =
      shrinkage::evaluate_test(plan, model, x_std, y_orig, sc, 7, sd, 123);

  // Predictions in original units: 0.5*3+2 = 3.5 and -1*3+2 = -1.
  const double rmse = std::sqrt((0.25 + 5.76) / 2.0);
  EXPECT_NEAR(m.rmse, rmse, 1e-12);

  double ll = 0.0;
  const std::vector<double> y_std = {1.0 / 3.0, -0.2};
  const std::vector<double> pred_std = {0.5, -1.0};
  for (int i = 0; i < 2; ++i) {
    const double diff = y_std[i] - pred_std[i];
    ll += -0.5 * std::log(2.0 * M_PI * sd * sd) - diff * diff / (2.0 * sd * sd);
  }
  ll = ll / 2.0 - std::log(3.0);
  EXPECT_NEAR(m.loglik, ll, 1e-12);
}

// ---------------------------------------------------------------------------
// Split protocol hygiene and determinism

TEST(BenchProtocol, TestRowsNeverInfluenceTrainingOrScaling) {
  const Dataset d = synthetic_dataset(60, 2, 8);
  const ExperimentConfig cfg = tiny_experiment();
  const auto splits = shrinkage::make_splits(d.size(), cfg.splits, cfg.test_fraction,
                                             RngStream(cfg.seed).split(0).seed());

  Dataset tampered = d;
  for (std::size_t idx : splits[0].test) {
    tampered.y[idx] += 100.0;
    tampered.x.at(idx, 0) -= 50.0;
  }

  const shrinkage::SingleRun a = shrinkage::run_split(cfg, d, splits[0], 0);
  const shrinkage::SingleRun b = shrinkage::run_split(cfg, tampered, splits[0], 0);
  ASSERT_TRUE(a.outcome.ok);
  ASSERT_TRUE(b.outcome.ok);

  // Identical scaler and identical fitted weights, bit for bit...
  EXPECT_EQ(a.scaler.x_mean, b.scaler.x_mean);
  EXPECT_EQ(a.scaler.x_sd, b.scaler.x_sd);
  EXPECT_EQ(a.scaler.y_mean, b.scaler.y_mean);
  EXPECT_EQ(a.scaler.y_sd, b.scaler.y_sd);
  ASSERT_EQ(a.model.ws.w.size(), b.model.ws.w.size());
  for (std::size_t i = 0; i < a.model.ws.w.size(); ++i)
    for (std::size_t k = 0; k < a.model.ws.w[i].size(); ++k)
      EXPECT_EQ(a.model.ws.w[i].values()[k], b.model.ws.w[i].values()[k]);

  // ...while the test metrics see the tampering.
  EXPECT_GT(b.outcome.rmse, a.outcome.rmse + 10.0);
}

TEST(BenchProtocol, ExperimentIsDeterministicAndWorkerInvariant) {
  const Dataset d = synthetic_dataset(60, 2, 9);
  ExperimentConfig cfg = tiny_experiment();
  cfg.splits = 3;

  const ResultTable t1 = shrinkage::run_experiment(cfg, d, 1);
  const ResultTable t2 = shrinkage::run_experiment(cfg, d, 1);
  const ResultTable t3 = shrinkage::run_experiment(cfg, d, 2);
  ASSERT_EQ(t1.splits.size(), 3u);
  EXPECT_EQ(t1.failed(), 0u);
  for (const ResultTable* t : {&t2, &t3}) {
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_EQ(t->splits[k].rmse, t1.splits[k].rmse);
      EXPECT_EQ(t->splits[k].loglik, t1.splits[k].loglik);
      EXPECT_EQ(t->splits[k].best_epoch, t1.splits[k].best_epoch);
      EXPECT_EQ(t->splits[k].best_sd, t1.splits[k].best_sd);
    }
    EXPECT_EQ(t->hist.counts, t1.hist.counts);
  }

  // Aggregates match a direct recomputation.
  double mean = 0.0;
  for (const SplitOutcome& s : t1.splits) mean += s.rmse;
  mean /= 3.0;
  EXPECT_NEAR(t1.rmse_mean, mean, 1e-15 * (1.0 + std::abs(mean)));

  ExperimentConfig zero = tiny_experiment();
  zero.splits = 0;
  EXPECT_THROW(shrinkage::run_experiment(zero, d, 1), ConfigError);
}

TEST(BenchProtocol, PureNoiseTargetsScoreNearTheEntropyFloor) {
  // With no learnable signal and y ~ N(5, 16), a sane pipeline predicts near
  // the mean with observation sd near 4, so the per-datum predictive
  // log-likelihood approaches -0.5*log(2*pi) - 0.5 - log(4) = -2.805 and the
  // RMSE approaches 4.
  const Dataset d = synthetic_dataset(200, 3, 10, /*with_signal=*/false);
  ExperimentConfig cfg = tiny_experiment();
  cfg.splits = 3;
  cfg.test_fraction = 0.15;
  cfg.epochs = 20;
  cfg.eval_every = 5;
  cfg.patience = 3;
  cfg.batch = 32;
  cfg.sd_grid = 30;
  cfg.sd_min = 1e-3;
  cfg.sd_max = 10.0;

  const ResultTable t = shrinkage::run_experiment(cfg, d, 1);
  ASSERT_EQ(t.failed(), 0u);
  EXPECT_NEAR(t.loglik_mean, -0.5 * std::log(2.0 * M_PI) - 0.5 - std::log(4.0), 0.35);
  EXPECT_GT(t.rmse_mean, 3.0);
  EXPECT_LT(t.rmse_mean, 5.2);
}

// ---------------------------------------------------------------------------
// Report files

namespace {

ResultTable sample_table() {
  ResultTable t;
  SplitOutcome s0;
  s0.split = 0;
  s0.ok = true;
  s0.rmse = 1.0 / 3.0;
  s0.loglik = -2.7182818284590451;
  s0.best_sd = 0.31622776601683794;
  s0.best_epoch = 40;
  s0.epochs = 60;
  SplitOutcome s1;
  s1.split = 1;
  s1.ok = true;
  s1.rmse = 0.125;
  s1.loglik = -1.5;
  s1.best_sd = 1.0;
  s1.best_epoch = 20;
  s1.epochs = 20;
  SplitOutcome s2;
  s2.split = 2;
  s2.ok = false;
  s2.error = "diverged, loss=nan, check \"config\"";
  t.splits = {s0, s1, s2};
  t.hist = Histogram(4);
  t.hist.counts = {3, 0, 1, 2};
  t.aggregate();
  return t;
}

}  // namespace

TEST(BenchReports, CsvRoundTripsDoublesExactly) {
  const ResultTable t = sample_table();
  const std::string path = temp_path("report.csv");
  shrinkage::write_report_csv(t, path);

  std::ifstream in(path);
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "split,rmse,loglik,rmse_se,loglik_se,best_epoch,best_sd,epochs,status");

  ASSERT_TRUE(std::getline(in, line));
  auto cells = split_csv_line(line);
  ASSERT_GE(cells.size(), 9u);
  EXPECT_EQ(cells[0], "0");
  EXPECT_EQ(std::strtod(cells[1].c_str(), nullptr), 1.0 / 3.0);  // 17 digits round-trip
  EXPECT_EQ(std::strtod(cells[2].c_str(), nullptr), -2.7182818284590451);
  EXPECT_EQ(cells[5], "40");
  EXPECT_EQ(std::strtod(cells[6].c_str(), nullptr), 0.31622776601683794);
  EXPECT_EQ(cells[8], "ok");

  ASSERT_TRUE(std::getline(in, line));  // split 1
  ASSERT_TRUE(std::getline(in, line));  // split 2, failed; quoted because of commas
  EXPECT_NE(line.find("\"failed: diverged, loss=nan, check \"\"config\"\"\""), std::string::npos)
      << line;

  ASSERT_TRUE(std::getline(in, line));  // aggregate row
  cells = split_csv_line(line);
  EXPECT_EQ(cells[0], "aggregate");
  EXPECT_EQ(std::strtod(cells[1].c_str(), nullptr), t.rmse_mean);
  EXPECT_EQ(std::strtod(cells[3].c_str(), nullptr), t.rmse_se);
  EXPECT_EQ(cells[8], "2/3 ok");
}

TEST(BenchReports, JsonHoldsConfigEchoSplitsAndSummary) {
  const ResultTable t = sample_table();
  ExperimentConfig cfg = tiny_experiment();
  const std::string path = temp_path("report.json");
  shrinkage::write_report_json(cfg, t, path);

  nlohmann::json j = nlohmann::json::parse(read_file(path));
  EXPECT_EQ(j["config"].size(), ExperimentConfig::known_keys().size());
  EXPECT_EQ(j["config"]["model.kind"], "map");
  ASSERT_EQ(j["splits"].size(), 3u);
  EXPECT_EQ(j["splits"][0]["status"], "ok");
  EXPECT_EQ(j["splits"][0]["rmse"].get<double>(), 1.0 / 3.0);
  EXPECT_EQ(j["splits"][2]["status"], "failed");
  EXPECT_EQ(j["splits"][2]["error"], "diverged, loss=nan, check \"config\"");
  EXPECT_EQ(j["summary"]["splits"], 3);
  EXPECT_EQ(j["summary"]["failed"], 1);
  EXPECT_EQ(j["summary"]["rmse_mean"].get<double>(), t.rmse_mean);
  EXPECT_EQ(j["summary"]["loglik_se"].get<double>(), t.loglik_se);
  ASSERT_EQ(j["histogram"]["counts"].size(), 4u);
  EXPECT_EQ(j["histogram"]["counts"][2], 1);
}

TEST(BenchReports, HistogramAndHeatmapCsv) {
  const ResultTable t = sample_table();
  const std::string hpath = temp_path("weights.csv");
  shrinkage::write_histogram_csv(t.hist, hpath);
  std::ifstream in(hpath);
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(line, "bin_lo,bin_hi,count");
  std::size_t total = 0, rows = 0;
  double expected_lo = 0.0;
  while (std::getline(in, line)) {
    auto cells = split_csv_line(line);
    ASSERT_EQ(cells.size(), 3u);
    EXPECT_NEAR(std::strtod(cells[0].c_str(), nullptr), expected_lo, 1e-15);
    expected_lo = std::strtod(cells[1].c_str(), nullptr);
    total += std::strtoull(cells[2].c_str(), nullptr, 10);
    ++rows;
  }
  EXPECT_EQ(rows, 4u);
  EXPECT_NEAR(expected_lo, 1.0, 1e-15);  // last bin ends at hi
  EXPECT_EQ(total, t.hist.total());

  const std::vector<Tensor> maps = {Tensor({2, 2}, {1.0, 2.0, 3.0, 4.0})};
  const std::string mpath = temp_path("heatmap.csv");
  shrinkage::write_heatmap_csv(maps, mpath);
  std::ifstream hin(mpath);
  ASSERT_TRUE(std::getline(hin, line));
  EXPECT_EQ(line, "matrix,row,col,value");
  std::size_t mrows = 0;
  std::string last;
  while (std::getline(hin, line)) {
    last = line;
    ++mrows;
  }
  EXPECT_EQ(mrows, 4u);
  EXPECT_EQ(last, "1,1,1,4");

  ExperimentConfig cfg = tiny_experiment();
  cfg.out_dir = "results";
  cfg.data_name = "energy";
  cfg.model = "ta";
  EXPECT_EQ(shrinkage::report_basename(cfg), "results/energy_ta");
}
