#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnclass/classes.hpp"
#include "hnclass/config.hpp"
#include "hnclass/error.hpp"
#include "hnclass/model.hpp"
#include "hnclass/rng.hpp"
#include "hnclass/tensor.hpp"
#include "hnclass/vocab.hpp"

namespace hnclass {

/// Decoupled-weight-decay Adam over a fixed list of tensors.
template <typename S>
class AdamW {
 public:
  AdamW(const ModelConfig& cfg, const std::vector<NamedTensor<const Matrix<S>>>& params)
      : lr_(cfg.learning_rate), beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.adam_eps), decay_(cfg.weight_decay) {
    for (const auto& t : params) {
      m_.push_back(Matrix<S>::Zero(t.value->rows(), t.value->cols()));
      v_.push_back(Matrix<S>::Zero(t.value->rows(), t.value->cols()));
    }
  }

  void step(const std::vector<NamedTensor<Matrix<S>>>& params, const std::vector<NamedTensor<Matrix<S>>>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) throw UsageError("optimizer tensor count mismatch");
    ++t_;
    const S b1 = static_cast<S>(beta1_);
    const S b2 = static_cast<S>(beta2_);
    const S c1 = static_cast<S>(1.0 / (1.0 - std::pow(beta1_, static_cast<double>(t_))));
    const S c2 = static_cast<S>(1.0 / (1.0 - std::pow(beta2_, static_cast<double>(t_))));
    const S lr = static_cast<S>(lr_);
    const S eps = static_cast<S>(eps_);
    const S shrink = static_cast<S>(1.0 - lr_ * decay_);
    for (std::size_t i = 0; i < m_.size(); ++i) {
      auto p = params[i].value->array();
      const auto g = grads[i].value->array();
      auto m = m_[i].array();
      auto v = v_[i].array();
      m = b1 * m + (S(1) - b1) * g;
      v = b2 * v + (S(1) - b2) * g.square();
      p = shrink * p - lr * (m * c1) / ((v * c2).sqrt() + eps);
    }
  }

  std::uint64_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, decay_;
  std::uint64_t t_ = 0;
  std::vector<Matrix<S>> m_, v_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double valid_loss = 0.0;
  double valid_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool stopped_early = false;

  friend bool operator==(const TrainingHistory&, const TrainingHistory&) = default;

  /// One JSON object per epoch and line.
  std::string to_jsonl() const {
    std::string out;
    for (const auto& e : epochs) {
      const nlohmann::json j = {{"epoch", e.epoch},
                                {"train_loss", e.train_loss},
                                {"train_accuracy", e.train_accuracy},
                                {"valid_loss", e.valid_loss},
                                {"valid_accuracy", e.valid_accuracy},
                                {"best", e.epoch == best_epoch}};
      out += j.dump();
      out.push_back('\n');
    }
    return out;
  }

  static TrainingHistory from_jsonl(const std::string& text) {
    TrainingHistory h;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        EpochRecord e{j.at("epoch").get<std::size_t>(), j.at("train_loss").get<double>(),
                      j.at("train_accuracy").get<double>(), j.at("valid_loss").get<double>(),
                      j.at("valid_accuracy").get<double>()};
        if (j.value("best", false)) h.best_epoch = e.epoch;
        h.epochs.push_back(e);
      } catch (const nlohmann::json::exception& ex) {
        throw CorruptionError(std::string("malformed history record: ") + ex.what());
      }
    }
    return h;
  }
};

using EpochCallback = std::function<void(const EpochRecord&)>;

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<ProblemClass> predictions;
};

struct BatchStats {
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

/// Fixed-length id sequences with their labels.
struct EncodedSplit {
  std::vector<TokenSequence> sequences;
  std::vector<ProblemClass> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Shuffled mini-batch training with per-epoch validation, keeping the
/// parameters of the best validation accuracy and stopping after `patience`
/// epochs without improvement (patience 0 disables early stopping).
///
/// Learner provides: train_batch(indices, epoch, batch) -> BatchStats,
/// evaluate_valid() -> EvalStats, snapshot() and restore(snapshot).
template <typename Learner>
TrainingHistory fit(Learner& learner, std::size_t train_size, const ModelConfig& cfg,
                    const EpochCallback& on_epoch = {}) {
  if (train_size == 0) throw ConfigError("training set is empty");
  TrainingHistory history;
  std::vector<std::size_t> order(train_size);
  double best_accuracy = -1.0;
  auto best = learner.snapshot();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, 0x50ffULL + epoch));
    shuffle_rng.shuffle(order);

    BatchStats totals;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < train_size; start += cfg.batch_size, ++batch) {
      const std::size_t end = std::min(train_size, start + cfg.batch_size);
      BatchStats stats;
      try {
        stats = learner.train_batch(std::span<const std::size_t>(order.data() + start, end - start), epoch, batch);
      } catch (const DivergenceError& e) {
        throw DivergenceError(e.what(), epoch, batch);
      }
      if (!std::isfinite(stats.loss_sum)) throw DivergenceError("non-finite training loss", epoch, batch);
      totals.loss_sum += stats.loss_sum;
      totals.correct += stats.correct;
    }

    EvalStats valid;
    try {
      valid = learner.evaluate_valid();
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.what(), epoch, batch);
    }
    const EpochRecord record{epoch, totals.loss_sum / static_cast<double>(train_size),
                             static_cast<double>(totals.correct) / static_cast<double>(train_size), valid.loss,
                             valid.accuracy};
    history.epochs.push_back(record);
    if (valid.accuracy > best_accuracy) {
      best_accuracy = valid.accuracy;
      best = learner.snapshot();
      history.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch) on_epoch(record);
    if (cfg.patience > 0 && since_best >= cfg.patience) {
      history.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  learner.restore(std::move(best));
  return history;
}

namespace detail {

inline std::uint64_t batch_seed(std::uint64_t seed, std::size_t epoch, std::size_t batch) {
  return derive_seed(derive_seed(seed, 0xba7c40000ULL + epoch), batch);
}

template <typename S>
EvalStats evaluate_split(const EncodedSplit& split, const TransformerParams<S>& params, const ModelConfig& cfg) {
  EvalStats out;
  if (split.size() == 0) return out;
  std::size_t correct = 0;
  SampleTape<S> tape;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const Matrix<S>& probs = forward_sample(split.sequences[i], params, cfg, static_cast<Rng*>(nullptr), i, tape);
    const auto c = static_cast<Eigen::Index>(class_index(split.labels[i]));
    out.loss -= std::log(std::max(static_cast<double>(probs(0, c)), kProbabilityFloor));
    const ProblemClass pred = class_from_index(argmax_row(probs, 0));
    correct += pred == split.labels[i] ? 1 : 0;
    out.predictions.push_back(pred);
  }
  out.loss /= static_cast<double>(split.size());
  out.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
  return out;
}

template <typename S>
class TransformerLearner {
 public:
  TransformerLearner(const EncodedSplit& train, const EncodedSplit& valid, TransformerParams<S> params,
                     const ModelConfig& cfg)
      : train_(train),
        valid_(valid),
        cfg_(cfg),
        params_(std::move(params)),
        grads_(params_.zeros_like()),
        optimizer_(cfg, std::as_const(params_).tensors()) {}

  BatchStats train_batch(std::span<const std::size_t> indices, std::size_t epoch, std::size_t batch) {
    for (auto& t : grads_.tensors()) t.value->setZero();
    const std::uint64_t seed = batch_seed(cfg_.seed, epoch, batch);
    const S weight = S(1) / static_cast<S>(indices.size());
    BatchStats stats;
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const std::size_t idx = indices[i];
      const ProblemClass label = train_.labels[idx];
      Rng rng(sample_dropout_seed(seed, i));
      SampleTape<S>& tape = tape_;
      forward_sample(train_.sequences[idx], params_, cfg_, &rng, i, tape);
      const auto c = static_cast<Eigen::Index>(class_index(label));
      stats.loss_sum -= std::log(std::max(static_cast<double>(tape.probs(0, c)), kProbabilityFloor));
      stats.correct += argmax_row(tape.probs, 0) == class_index(label) ? 1 : 0;
      backward_sample(tape, label, weight, params_, grads_, cfg_);
    }
    optimizer_.step(params_.tensors(), grads_.tensors());
    return stats;
  }

  EvalStats evaluate_valid() const { return evaluate_split(valid_, params_, cfg_); }

  TransformerParams<S> snapshot() const { return params_; }
  void restore(TransformerParams<S> p) { params_ = std::move(p); }
  TransformerParams<S>& params() { return params_; }

 private:
  const EncodedSplit& train_;
  const EncodedSplit& valid_;
  ModelConfig cfg_;
  TransformerParams<S> params_;
  TransformerParams<S> grads_;
  AdamW<S> optimizer_;
  SampleTape<S> tape_;
};

}  // namespace detail

template <typename S>
struct TrainedTransformer {
  TransformerParams<S> params;
  TrainingHistory history;
};

inline void check_split(const EncodedSplit& split, const ModelConfig& cfg, std::string_view name) {
  if (split.size() == 0) throw ConfigError(std::string(name) + " set is empty");
  if (split.sequences.size() != split.labels.size()) throw UsageError(std::string(name) + " set label count mismatch");
  for (const auto& s : split.sequences) {
    if (s.size() != cfg.seq_len) throw ConfigError(std::string(name) + " set is not encoded to length T");
  }
}

/// AdamW training of a freshly initialised transformer; deterministic in cfg.seed.
template <typename S = float>
TrainedTransformer<S> train(const EncodedSplit& train_set, const EncodedSplit& valid_set, std::size_t vocab_size,
                            const ModelConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  check_split(train_set, cfg, "training");
  check_split(valid_set, cfg, "validation");
  detail::TransformerLearner<S> learner(train_set, valid_set, TransformerParams<S>::initialized(cfg, vocab_size), cfg);
  TrainingHistory history = fit(learner, train_set.size(), cfg, on_epoch);
  return {std::move(learner.params()), std::move(history)};
}

template <typename S>
EvalStats evaluate(const EncodedSplit& split, const TransformerParams<S>& params, const ModelConfig& cfg) {
  return detail::evaluate_split(split, params, cfg);
}

/// Pretokenizes and encodes every text to length `seq_len`.
template <typename Sample>
EncodedSplit encode_split(std::span<const Sample> samples, const PreTokenizerSpec& spec, const Vocabulary& vocab,
                          std::size_t seq_len) {
  EncodedSplit out;
  out.sequences.reserve(samples.size());
  out.labels.reserve(samples.size());
  for (const auto& s : samples) {
    out.sequences.push_back(encode(pretokenize(s.text, spec), vocab, seq_len));
    out.labels.push_back(s.label);
  }
  return out;
}

}  // namespace hnclass
