#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "hnclass/datagen.hpp"
#include "hnclass/eval.hpp"

using namespace hnclass;
namespace fs = std::filesystem;

namespace {

constexpr auto A = ProblemClass::kCorruptDefaultRoute;  // index 0
constexpr auto B = ProblemClass::kDnsWrongIp;           // index 1

std::vector<ProblemClass> toy_labels() {
  std::vector<ProblemClass> y(10, A);
  y.insert(y.end(), 10, B);
  return y;
}

/// Eight of ten A correct, seven of ten B correct.
std::vector<ProblemClass> toy_predictions() {
  std::vector<ProblemClass> p(8, A);
  p.insert(p.end(), 2, B);
  p.insert(p.end(), 3, A);
  p.insert(p.end(), 7, B);
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

SuiteConfig tiny_suite() {
  SuiteConfig s;
  s.transformer.embed_dim = 8;
  s.transformer.num_heads = 2;
  s.transformer.num_blocks = 1;
  s.transformer.ffn_dim = 16;
  s.transformer.batch_size = 8;
  s.transformer.max_epochs = 2;
  s.bow.max_epochs = 2;
  s.bow.batch_size = 8;
  s.greedy_seq_len = 24;
  s.whitespace_seq_len = 24;
  return s;
}

}  // namespace

TEST(Confusion, Examples) {
  const std::vector<ProblemClass> y{A, A, B};
  const auto cm = confusion(std::vector<ProblemClass>{A, B, B}, y);
  EXPECT_EQ(cm.counts[0][0], 1u);
  EXPECT_EQ(cm.counts[0][1], 1u);
  EXPECT_EQ(cm.counts[1][1], 1u);
  EXPECT_EQ(cm.total(), 3u);
  EXPECT_EQ(cm.trace(), 2u);
  EXPECT_EQ(cm.row_sum(0), 2u);
  EXPECT_EQ(cm.column_sum(1), 2u);
  EXPECT_THROW(confusion(std::vector<ProblemClass>{A}, y), UsageError);
  EXPECT_THROW(confusion(std::vector<ProblemClass>{}, std::vector<ProblemClass>{}), UsageError);
}

TEST(Metrics, PerfectPredictionsAreDiagonal) {
  std::vector<ProblemClass> y;
  for (auto c : all_classes()) y.insert(y.end(), 3, c);
  const auto r = metrics(confusion(y, y));
  EXPECT_DOUBLE_EQ(r.accuracy, 1.0);
  for (const auto& m : r.per_class) {
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.support, 3u);
  }
}

TEST(Metrics, NeverPredictedClassHasUndefinedPrecision) {
  const std::vector<ProblemClass> y{A, B};
  const auto r = metrics(confusion(std::vector<ProblemClass>{A, A}, y));
  EXPECT_FALSE(r.at(B).precision.has_value());
  EXPECT_EQ(r.at(B).recall, 0.0);
  EXPECT_FALSE(r.at(ProblemClass::kHighJitter).recall.has_value());
  EXPECT_EQ(format_metric(r.at(B).precision), "n/a");
  EXPECT_EQ(format_metric(0.5), "0.50");
}

TEST(Metrics, TwoClassToy) {
  const auto r = metrics(confusion(toy_predictions(), toy_labels()), "toy");
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(*r.at(A).precision, 8.0 / 11.0);
  EXPECT_DOUBLE_EQ(*r.at(A).recall, 0.8);
  EXPECT_DOUBLE_EQ(*r.at(B).precision, 7.0 / 9.0);
  EXPECT_DOUBLE_EQ(*r.at(B).recall, 0.7);
  EXPECT_DOUBLE_EQ(*r.macro_recall, 0.75);
  EXPECT_EQ(r.test_case_id, "toy");
}

TEST(Metrics, PermutationInvariantAndAccuracyIsWeightedRecall) {
  Rng rng(4);
  std::vector<ProblemClass> y, p;
  for (int i = 0; i < 300; ++i) {
    y.push_back(class_from_index(static_cast<std::size_t>(rng.uniform_int(0, 10))));
    p.push_back(rng.uniform() < 0.6 ? y.back() : class_from_index(static_cast<std::size_t>(rng.uniform_int(0, 10))));
  }
  const auto r = metrics(confusion(p, y));
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::vector<ProblemClass> y2, p2;
  for (auto i : order) y2.push_back(y[i]), p2.push_back(p[i]);
  EXPECT_EQ(metrics(confusion(p2, y2)).confusion, r.confusion);

  double weighted = 0.0;
  for (const auto& m : r.per_class) {
    if (m.recall) weighted += *m.recall * static_cast<double>(m.support);
  }
  EXPECT_NEAR(weighted / static_cast<double>(r.total), r.accuracy, 1e-12);
}

TEST(MetricsReport, JsonRoundTripIsLossless) {
  const std::vector<ProblemClass> y{A, B, ProblemClass::kHighJitter};
  const auto r = metrics(confusion(std::vector<ProblemClass>{A, A, ProblemClass::kHighJitter}, y), "case");
  const auto j = r.to_json();
  EXPECT_TRUE(j["per_class"][1]["precision"].is_null());
  const auto back = MetricsReport::from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.test_case_id, r.test_case_id);
  EXPECT_EQ(back.accuracy, r.accuracy);
  EXPECT_EQ(back.per_class, r.per_class);
  EXPECT_EQ(back.confusion, r.confusion);
  EXPECT_EQ(back.macro_precision, r.macro_precision);
  EXPECT_THROW(MetricsReport::from_json(nlohmann::json::parse("{\"accuracy\": 1}")), CorruptionError);
  EXPECT_THROW(ConfusionMatrix::from_json(nlohmann::json::array({1, 2})), CorruptionError);
}

TEST(MetricsReport, TextAndCsv) {
  const auto r = metrics(confusion(toy_predictions(), toy_labels()), "toy");
  const auto text = r.to_text();
  EXPECT_NE(text.find("0.75"), std::string::npos);
  EXPECT_NE(text.find("n/a"), std::string::npos);
  const auto csv = r.confusion.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "true\\predicted,CORRUPT_DEFAULT_ROUTE,DNS_WRONG_IP,HIGH_DELAY,HIGH_JITTER,HIGH_PACKET_LOSS,"
            "HOST_INTERFACE_DOWN,LOW_AP_TX_POWER,NO_DEFAULT_ROUTE,NORMAL_STATE,ROUTER_INTERFACE_DOWN,STATION_FAR_AWAY");
  EXPECT_NE(csv.find("\nCORRUPT_DEFAULT_ROUTE,8,2,0,"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 12);
}

TEST(Suite, CaseListMatchesReferenceTable) {
  const auto cases = suite_cases();
  ASSERT_EQ(cases.size(), kReferenceAccuracy.size());
  EXPECT_EQ(cases[0].id, "transformer-greedy-1");
  EXPECT_EQ(cases[2].spec, PreTokenizerSpec::greedy(3));
  EXPECT_EQ(cases[4].spec, PreTokenizerSpec::whitespace());
  EXPECT_EQ(cases[4].seq_len, 1024u);
  EXPECT_EQ(cases[6].model, ModelKind::kBow);
}

TEST(Suite, FittedSequenceLength) {
  const std::vector<LogSample> samples{{"a b c", ProblemClass::kNormalState, 0}, {"a", ProblemClass::kHighDelay, 1}};
  EXPECT_EQ(fitted_seq_len(samples, PreTokenizerSpec::whitespace(), 4), 4u);
  EXPECT_EQ(fitted_seq_len(samples, PreTokenizerSpec::whitespace(), 3), 3u);
  EXPECT_EQ(fitted_seq_len(samples, PreTokenizerSpec::whitespace()), 64u);
}

TEST(Suite, ComparisonTableMarksUniqueBestAndWorst) {
  SuiteResult s;
  const auto y = toy_labels();
  auto good = toy_predictions();
  std::vector<ProblemClass> bad(y.size(), A);
  s.results.push_back({{"good", ModelKind::kBow, {}, 0}, 0, metrics(confusion(good, y), "good"), {}, {}, 0});
  s.results.push_back({{"perfect", ModelKind::kBow, {}, 0}, 0, metrics(confusion(y, y), "perfect"), {}, {}, 0});
  s.results.push_back({{"bad", ModelKind::kBow, {}, 0}, 0, metrics(confusion(bad, y), "bad"), {}, {}, 0});
  s.results.push_back({{"broken", ModelKind::kBow, {}, 0}, 0, std::nullopt, "diverged", {}, 0});
  const auto table = s.comparison_table();
  std::istringstream in(table);
  std::string line, row_b;
  while (std::getline(in, line)) {
    if (line.rfind("DNS_WRONG_IP", 0) == 0) row_b = line;
  }
  // good: 0.78 / 0.70, perfect: 1.00+ / 1.00+, bad: n/a / 0.00-
  EXPECT_NE(row_b.find("1.00+"), std::string::npos) << row_b;
  EXPECT_NE(row_b.find("0.00-"), std::string::npos) << row_b;
  EXPECT_NE(row_b.find("n/a"), std::string::npos) << row_b;
  EXPECT_NE(table.find("failed: broken (seed 0): diverged"), std::string::npos);
  EXPECT_EQ(s.find("bad")->report->accuracy, 0.5);
  EXPECT_EQ(s.find("missing"), nullptr);
}

TEST(Suite, RunsAllCasesOnTinyData) {
  const auto ds = generate_dataset(5, 12);
  auto cfg = tiny_suite();
  std::vector<std::string> log;
  cfg.log = [&](const std::string& l) { log.push_back(l); };
  const auto suite = run_suite(ds, cfg);
  ASSERT_EQ(suite.results.size(), 7u);
  for (const auto& r : suite.results) {
    ASSERT_TRUE(r.report.has_value()) << r.test_case.id << ": " << r.error;
    EXPECT_EQ(r.report->total, ds.test.size());
    EXPECT_EQ(r.history.epochs.size(), 2u);
  }
  EXPECT_FALSE(log.empty());

  cfg.log = nullptr;
  cfg.only = {"bow-whitespace"};
  cfg.seeds = {1, 2};
  const auto again = run_suite(ds, cfg);
  ASSERT_EQ(again.results.size(), 2u);
  EXPECT_EQ(run_suite(ds, cfg).results[1].report->confusion, again.results[1].report->confusion);

  const auto dir = fs::temp_directory_path() / "hnclass_suite_test";
  fs::remove_all(dir);
  write_suite(dir, again, true);
  EXPECT_TRUE(fs::exists(dir / "bow-whitespace.seed2.report.json"));
  EXPECT_TRUE(fs::exists(dir / "bow-whitespace.seed1.confusion.csv"));
  EXPECT_TRUE(fs::exists(dir / "bow-whitespace.seed1.history.jsonl"));
  const auto back = MetricsReport::from_json(nlohmann::json::parse(read_file(dir / "bow-whitespace.seed2.report.json")));
  EXPECT_EQ(back.confusion, again.results[1].report->confusion);
  EXPECT_EQ(read_file(dir / "comparison.txt"), again.comparison_table());
  fs::remove_all(dir);

  cfg.only = {"nope"};
  EXPECT_THROW(run_suite(ds, cfg), ConfigError);
}

TEST(Suite, DivergenceIsRecordedPerCase) {
  const auto ds = generate_dataset(5, 12);
  auto cfg = tiny_suite();
  cfg.only = {"bow-whitespace", "bow-greedy-3"};
  cfg.bow.learning_rate = 1e38;
  cfg.bow.max_epochs = 3;
  const auto suite = run_suite(ds, cfg);
  ASSERT_EQ(suite.results.size(), 2u);
  for (const auto& r : suite.results) {
    EXPECT_FALSE(r.report.has_value());
    EXPECT_FALSE(r.error.empty());
  }
  EXPECT_NE(suite.comparison_table().find("failed: bow-greedy-3"), std::string::npos);
}
