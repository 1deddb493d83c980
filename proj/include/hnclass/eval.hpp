#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnclass/baseline.hpp"
#include "hnclass/classes.hpp"
#include "hnclass/config.hpp"
#include "hnclass/datagen.hpp"
#include "hnclass/error.hpp"
#include "hnclass/model.hpp"
#include "hnclass/pretokenize.hpp"
#include "hnclass/train.hpp"
#include "hnclass/vocab.hpp"

namespace hnclass {

/// counts[true][predicted].
struct ConfusionMatrix {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (const auto& row : counts) {
      for (std::size_t c : row) n += c;
    }
    return n;
  }
  std::size_t trace() const noexcept {
    std::size_t n = 0;
    for (std::size_t i = 0; i < kNumClasses; ++i) n += counts[i][i];
    return n;
  }
  std::size_t row_sum(std::size_t r) const noexcept {
    std::size_t n = 0;
    for (std::size_t c : counts[r]) n += c;
    return n;
  }
  std::size_t column_sum(std::size_t c) const noexcept {
    std::size_t n = 0;
    for (const auto& row : counts) n += row[c];
    return n;
  }

  /// Grid with a header row and column of class names.
  std::string to_csv() const {
    std::string out = "true\\predicted";
    for (auto name : kClassNames) out += "," + std::string(name);
    out.push_back('\n');
    for (std::size_t r = 0; r < kNumClasses; ++r) {
      out += kClassNames[r];
      for (std::size_t c : counts[r]) out += "," + std::to_string(c);
      out.push_back('\n');
    }
    return out;
  }

  nlohmann::json to_json() const { return counts; }

  static ConfusionMatrix from_json(const nlohmann::json& j) {
    ConfusionMatrix cm;
    try {
      if (!j.is_array() || j.size() != kNumClasses) throw CorruptionError("confusion matrix must have 11 rows");
      for (std::size_t r = 0; r < kNumClasses; ++r) {
        if (!j[r].is_array() || j[r].size() != kNumClasses) throw CorruptionError("confusion row must have 11 entries");
        for (std::size_t c = 0; c < kNumClasses; ++c) cm.counts[r][c] = j[r][c].get<std::size_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError(std::string("malformed confusion matrix: ") + e.what());
    }
    return cm;
  }
};

inline ConfusionMatrix confusion(std::span<const ProblemClass> predictions, std::span<const ProblemClass> labels) {
  if (predictions.size() != labels.size()) {
    throw UsageError("confusion needs equally many predictions (" + std::to_string(predictions.size()) +
                     ") and labels (" + std::to_string(labels.size()) + ")");
  }
  if (labels.empty()) throw UsageError("confusion needs at least one sample");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) ++cm.counts[class_index(labels[i])][class_index(predictions[i])];
  return cm;
}

/// Undefined ratios (zero denominator) are empty optionals.
struct ClassMetrics {
  ProblemClass cls = ProblemClass::kNormalState;
  std::optional<double> precision;
  std::optional<double> recall;
  std::size_t support = 0;

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

inline std::string format_metric(const std::optional<double>& v, int digits = 2) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, *v);
  return buf;
}

struct MetricsReport {
  std::string test_case_id;
  double accuracy = 0.0;
  std::size_t total = 0;
  std::vector<ClassMetrics> per_class;
  std::optional<double> macro_precision;  // mean over classes with defined precision
  std::optional<double> macro_recall;
  ConfusionMatrix confusion;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;

  const ClassMetrics& at(ProblemClass c) const { return per_class.at(class_index(c)); }

  nlohmann::json to_json() const {
    const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& m : per_class) {
      classes.push_back({{"class", class_name(m.cls)},
                         {"precision", opt(m.precision)},
                         {"recall", opt(m.recall)},
                         {"support", m.support}});
    }
    return {{"test_case_id", test_case_id},
            {"accuracy", accuracy},
            {"total", total},
            {"macro_precision", opt(macro_precision)},
            {"macro_recall", opt(macro_recall)},
            {"per_class", classes},
            {"confusion", confusion.to_json()}};
  }

  static MetricsReport from_json(const nlohmann::json& j) {
    const auto opt = [](const nlohmann::json& v) {
      return v.is_null() ? std::optional<double>{} : std::optional<double>(v.get<double>());
    };
    MetricsReport r;
    try {
      r.test_case_id = j.at("test_case_id").get<std::string>();
      r.accuracy = j.at("accuracy").get<double>();
      r.total = j.at("total").get<std::size_t>();
      r.macro_precision = opt(j.at("macro_precision"));
      r.macro_recall = opt(j.at("macro_recall"));
      for (const auto& m : j.at("per_class")) {
        const auto cls = parse_class(m.at("class").get<std::string>());
        if (!cls) throw CorruptionError("unknown class in report: " + m.at("class").get<std::string>());
        r.per_class.push_back({*cls, opt(m.at("precision")), opt(m.at("recall")), m.at("support").get<std::size_t>()});
      }
      r.confusion = ConfusionMatrix::from_json(j.at("confusion"));
    } catch (const nlohmann::json::exception& e) {
      throw CorruptionError(std::string("malformed metrics report: ") + e.what());
    }
    if (r.per_class.size() != kNumClasses) throw CorruptionError("metrics report must list 11 classes");
    return r;
  }

  /// Human-readable per-class table.
  std::string to_text() const {
    std::string out = "test case: " + test_case_id + "\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "accuracy: %.4f (%zu samples)\n", accuracy, total);
    out += buf;
    std::snprintf(buf, sizeof(buf), "%-24s %9s %9s %8s\n", "class", "precision", "recall", "support");
    out += buf;
    for (const auto& m : per_class) {
      std::snprintf(buf, sizeof(buf), "%-24s %9s %9s %8zu\n", std::string(class_name(m.cls)).c_str(),
                    format_metric(m.precision, 4).c_str(), format_metric(m.recall, 4).c_str(), m.support);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), "%-24s %9s %9s\n", "macro average", format_metric(macro_precision, 4).c_str(),
                  format_metric(macro_recall, 4).c_str());
    out += buf;
    return out;
  }
};

inline MetricsReport metrics(const ConfusionMatrix& cm, std::string test_case_id = {}) {
  MetricsReport r;
  r.test_case_id = std::move(test_case_id);
  r.confusion = cm;
  r.total = cm.total();
  if (r.total == 0) throw UsageError("metrics need a non-empty confusion matrix");
  r.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(r.total);
  double p_sum = 0.0, r_sum = 0.0;
  std::size_t p_n = 0, r_n = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    ClassMetrics m;
    m.cls = class_from_index(c);
    m.support = cm.row_sum(c);
    const std::size_t predicted = cm.column_sum(c);
    if (predicted > 0) {
      m.precision = static_cast<double>(cm.counts[c][c]) / static_cast<double>(predicted);
      p_sum += *m.precision;
      ++p_n;
    }
    if (m.support > 0) {
      m.recall = static_cast<double>(cm.counts[c][c]) / static_cast<double>(m.support);
      r_sum += *m.recall;
      ++r_n;
    }
    r.per_class.push_back(m);
  }
  if (p_n > 0) r.macro_precision = p_sum / static_cast<double>(p_n);
  if (r_n > 0) r.macro_recall = r_sum / static_cast<double>(r_n);
  return r;
}

// ---------------------------------------------------------------------------
// Seven-case comparison suite

struct SuiteCase {
  std::string id;
  ModelKind model = ModelKind::kTransformer;
  PreTokenizerSpec spec;
  std::size_t seq_len = 0;  // transformer only; 0 fits the training split
};

/// Transformer k=1..4, transformer whitespace, BoW greedy-3, BoW whitespace.
inline std::vector<SuiteCase> suite_cases(std::size_t greedy_seq_len = 512, std::size_t whitespace_seq_len = 1024) {
  std::vector<SuiteCase> cases;
  for (std::size_t k = 1; k <= 4; ++k) {
    cases.push_back({"transformer-greedy-" + std::to_string(k), ModelKind::kTransformer, PreTokenizerSpec::greedy(k),
                     greedy_seq_len});
  }
  cases.push_back({"transformer-whitespace", ModelKind::kTransformer, PreTokenizerSpec::whitespace(), whitespace_seq_len});
  cases.push_back({"bow-greedy-3", ModelKind::kBow, PreTokenizerSpec::greedy(3), 0});
  cases.push_back({"bow-whitespace", ModelKind::kBow, PreTokenizerSpec::whitespace(), 0});
  return cases;
}

/// Full-scale reference accuracies for the seven cases, in suite_cases() order.
inline constexpr std::array<double, 7> kReferenceAccuracy = {0.90, 0.94, 0.94, 0.94, 0.87, 0.91, 0.81};

struct SuiteConfig {
  ModelConfig transformer = ModelConfig::transformer_defaults();
  ModelConfig bow = ModelConfig::bow_defaults();
  std::size_t greedy_seq_len = 512;
  std::size_t whitespace_seq_len = 1024;
  std::size_t min_frequency = 1;
  std::vector<std::uint64_t> seeds{0};
  std::vector<std::string> only;  // case ids to run; empty runs all
  std::function<void(const std::string&)> log;
};

/// Reduced transformer sized for single-core training on a few thousand
/// samples, with T fitted to each pre-tokenizer's longest training sample.
inline SuiteConfig desk_suite_config() {
  SuiteConfig s;
  s.transformer.embed_dim = 32;
  s.transformer.num_blocks = 1;
  s.transformer.num_heads = 2;
  s.transformer.ffn_dim = 64;
  s.transformer.batch_size = 16;
  s.transformer.learning_rate = 2e-3;
  s.transformer.max_epochs = 20;
  s.transformer.patience = 5;
  s.bow.learning_rate = 1e-3;
  s.bow.max_epochs = 30;
  s.bow.patience = 5;
  s.transformer.mask_padding = true;
  s.greedy_seq_len = 0;
  s.whitespace_seq_len = 0;
  return s;
}

struct CaseResult {
  SuiteCase test_case;
  std::uint64_t seed = 0;
  std::optional<MetricsReport> report;
  std::string error;  // set when training failed
  TrainingHistory history;
  double seconds = 0.0;
};

struct SuiteResult {
  std::vector<CaseResult> results;

  const CaseResult* find(std::string_view id, std::optional<std::uint64_t> seed = {}) const {
    for (const auto& r : results) {
      if (r.test_case.id == id && (!seed || r.seed == *seed)) return &r;
    }
    return nullptr;
  }

  /// Per-class precision/recall of every case (averaged over seeds). A
  /// value unique-best in its row is marked '+', unique-worst '-'.
  std::string comparison_table() const {
    std::vector<std::string> ids;
    for (const auto& r : results) {
      if (std::find(ids.begin(), ids.end(), r.test_case.id) == ids.end()) ids.push_back(r.test_case.id);
    }
    struct Cell {
      std::optional<double> p, r;
    };
    std::vector<std::array<Cell, kNumClasses>> cells(ids.size());
    std::vector<std::optional<double>> acc(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::array<double, kNumClasses> ps{}, rs{};
      std::array<std::size_t, kNumClasses> pn{}, rn{};
      double a = 0.0;
      std::size_t an = 0;
      for (const auto& res : results) {
        if (res.test_case.id != ids[i] || !res.report) continue;
        a += res.report->accuracy;
        ++an;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
          const auto& m = res.report->per_class[c];
          if (m.precision) ps[c] += *m.precision, ++pn[c];
          if (m.recall) rs[c] += *m.recall, ++rn[c];
        }
      }
      if (an > 0) acc[i] = a / static_cast<double>(an);
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        if (pn[c] > 0) cells[i][c].p = ps[c] / static_cast<double>(pn[c]);
        if (rn[c] > 0) cells[i][c].r = rs[c] / static_cast<double>(rn[c]);
      }
    }

    const auto rounded = [](double v) { return std::round(v * 100.0) / 100.0; };
    const auto marks = [&](const std::vector<std::optional<double>>& row) {
      std::vector<char> out(row.size(), ' ');
      std::optional<double> best, worst;
      for (const auto& v : row) {
        if (!v) continue;
        const double x = rounded(*v);
        best = best ? std::max(*best, x) : x;
        worst = worst ? std::min(*worst, x) : x;
      }
      if (!best || *best == *worst) return out;
      std::size_t n_best = 0, n_worst = 0;
      for (const auto& v : row) {
        if (v && rounded(*v) == *best) ++n_best;
        if (v && rounded(*v) == *worst) ++n_worst;
      }
      for (std::size_t i = 0; i < row.size(); ++i) {
        if (!row[i]) continue;
        if (n_best == 1 && rounded(*row[i]) == *best) out[i] = '+';
        if (n_worst == 1 && rounded(*row[i]) == *worst) out[i] = '-';
      }
      return out;
    };

    std::string out;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-24s", "P / R");
    out += buf;
    for (const auto& id : ids) {
      std::snprintf(buf, sizeof(buf), " | %-23s", id.c_str());
      out += buf;
    }
    out.push_back('\n');
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      std::vector<std::optional<double>> prow, rrow;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        prow.push_back(cells[i][c].p);
        rrow.push_back(cells[i][c].r);
      }
      const auto pm = marks(prow);
      const auto rm = marks(rrow);
      std::snprintf(buf, sizeof(buf), "%-24s", std::string(kClassNames[c]).c_str());
      out += buf;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        std::snprintf(buf, sizeof(buf), " | %5s%c  %5s%c         ", format_metric(prow[i]).c_str(), pm[i],
                      format_metric(rrow[i]).c_str(), rm[i]);
        out += buf;
      }
      out.push_back('\n');
    }
    std::snprintf(buf, sizeof(buf), "%-24s", "accuracy");
    out += buf;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      std::snprintf(buf, sizeof(buf), " | %-23s", format_metric(acc[i]).c_str());
      out += buf;
    }
    out.push_back('\n');
    for (const auto& r : results) {
      if (!r.error.empty()) out += "failed: " + r.test_case.id + " (seed " + std::to_string(r.seed) + "): " + r.error + "\n";
    }
    return out;
  }
};

/// Vocabulary built from the training split only.
inline Vocabulary vocabulary_for(std::span<const LogSample> train, const PreTokenizerSpec& spec,
                                 std::size_t min_frequency = 1) {
  std::vector<TokenList> corpus;
  corpus.reserve(train.size());
  for (const auto& s : train) corpus.push_back(pretokenize(s.text, spec));
  return build_vocabulary(corpus, min_frequency);
}

/// Longest pre-tokenized training sample, rounded up to a multiple of `multiple`.
inline std::size_t fitted_seq_len(std::span<const LogSample> train, const PreTokenizerSpec& spec,
                                  std::size_t multiple = 64) {
  std::size_t longest = 1;
  for (const auto& s : train) longest = std::max(longest, pretokenize(s.text, spec).size());
  return (longest + multiple - 1) / multiple * multiple;
}

inline std::vector<ProblemClass> labels_of(std::span<const LogSample> samples) {
  std::vector<ProblemClass> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

/// Trains and tests one case on the given splits.
inline CaseResult run_case(const Dataset& ds, const SuiteCase& tc, const SuiteConfig& cfg, std::uint64_t seed,
                           const Vocabulary& vocab) {
  CaseResult result{tc, seed, std::nullopt, {}, {}, 0.0};
  const auto start = std::chrono::steady_clock::now();
  const auto log_epoch = [&](const EpochRecord& e) {
    if (!cfg.log) return;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s seed %llu epoch %zu: train loss %.4f acc %.4f, valid loss %.4f acc %.4f",
                  tc.id.c_str(), static_cast<unsigned long long>(seed), e.epoch, e.train_loss, e.train_accuracy,
                  e.valid_loss, e.valid_accuracy);
    cfg.log(buf);
  };
  try {
    std::vector<ProblemClass> predictions;
    if (tc.model == ModelKind::kTransformer) {
      ModelConfig mc = cfg.transformer;
      mc.seq_len = tc.seq_len;
      mc.seed = seed;
      const auto train_set = encode_split<LogSample>(ds.train, tc.spec, vocab, mc.seq_len);
      const auto valid_set = encode_split<LogSample>(ds.valid, tc.spec, vocab, mc.seq_len);
      const auto test_set = encode_split<LogSample>(ds.test, tc.spec, vocab, mc.seq_len);
      auto trained = train<float>(train_set, valid_set, vocab.size(), mc, log_epoch);
      result.history = std::move(trained.history);
      predictions = evaluate(test_set, trained.params, mc).predictions;
    } else {
      ModelConfig mc = cfg.bow;
      mc.seed = seed;
      const auto train_set = encode_bow_split<LogSample>(ds.train, tc.spec, vocab);
      const auto valid_set = encode_bow_split<LogSample>(ds.valid, tc.spec, vocab);
      const auto test_set = encode_bow_split<LogSample>(ds.test, tc.spec, vocab);
      auto trained = bow_train<float>(train_set, valid_set, vocab.size(), mc, log_epoch);
      result.history = std::move(trained.history);
      predictions = bow_evaluate(test_set, trained.params).predictions;
    }
    const auto labels = labels_of(ds.test);
    result.report = metrics(confusion(predictions, labels), tc.id);
  } catch (const DivergenceError& e) {
    result.error = e.what();
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (cfg.log) {
    char buf[160];
    if (result.report) {
      std::snprintf(buf, sizeof(buf), "%s seed %llu: test accuracy %.4f (%.0f s)", tc.id.c_str(),
                    static_cast<unsigned long long>(seed), result.report->accuracy, result.seconds);
    } else {
      std::snprintf(buf, sizeof(buf), "%s seed %llu: failed: %s", tc.id.c_str(), static_cast<unsigned long long>(seed),
                    result.error.c_str());
    }
    cfg.log(buf);
  }
  return result;
}

/// Trains and evaluates every case with identical data and seeds. Training
/// divergence is recorded per case and does not stop the suite.
inline SuiteResult run_suite(const Dataset& ds, const SuiteConfig& cfg) {
  if (ds.train.empty() || ds.valid.empty() || ds.test.empty()) throw ConfigError("suite needs non-empty splits");
  if (cfg.seeds.empty()) throw ConfigError("suite needs at least one seed");
  std::vector<SuiteCase> cases;
  for (auto& tc : suite_cases(cfg.greedy_seq_len, cfg.whitespace_seq_len)) {
    if (cfg.only.empty() || std::find(cfg.only.begin(), cfg.only.end(), tc.id) != cfg.only.end()) cases.push_back(tc);
  }
  if (cases.empty()) throw ConfigError("no suite case matches the requested ids");

  std::map<std::string, Vocabulary> vocabs;
  SuiteResult out;
  for (auto tc : cases) {
    const std::string key = tc.spec.name();
    if (!vocabs.contains(key)) vocabs.emplace(key, vocabulary_for(ds.train, tc.spec, cfg.min_frequency));
    if (tc.model == ModelKind::kTransformer && tc.seq_len == 0) tc.seq_len = fitted_seq_len(ds.train, tc.spec);
    for (std::uint64_t seed : cfg.seeds) out.results.push_back(run_case(ds, tc, cfg, seed, vocabs.at(key)));
  }
  return out;
}

/// Writes <id>[.seedN].report.json, .confusion.csv and .history.jsonl per
/// case plus comparison.txt.
inline void write_suite(const std::filesystem::path& dir, const SuiteResult& suite, bool seed_suffix) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f || !(f << text)) throw IoError("cannot write " + p.string());
  };
  for (const auto& r : suite.results) {
    std::string stem = r.test_case.id;
    if (seed_suffix) stem += ".seed" + std::to_string(r.seed);
    write(dir / (stem + ".history.jsonl"), r.history.to_jsonl());
    if (r.report) {
      write(dir / (stem + ".report.json"), r.report->to_json().dump(2) + "\n");
      write(dir / (stem + ".confusion.csv"), r.report->confusion.to_csv());
    }
  }
  write(dir / "comparison.txt", suite.comparison_table());
}

}  // namespace hnclass
