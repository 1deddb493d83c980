#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "hnclass/classes.hpp"
#include "hnclass/config.hpp"
#include "hnclass/error.hpp"
#include "hnclass/model.hpp"
#include "hnclass/pretokenize.hpp"
#include "hnclass/rng.hpp"
#include "hnclass/tensor.hpp"
#include "hnclass/train.hpp"
#include "hnclass/vocab.hpp"

namespace hnclass {

/// Sorted, distinct vocabulary ids present in `tokens`; unknown tokens map to
/// UNK and PAD never appears.
inline std::vector<TokenId> active_ids(std::span<const std::string> tokens, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) {
    const TokenId id = vocab.id(t);
    if (id != Vocabulary::kPadId) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

/// Binary presence vector of length vocab.size() (1 x V).
template <typename S = float>
Matrix<S> multi_hot(std::span<const std::string> tokens, const Vocabulary& vocab) {
  Matrix<S> x = Matrix<S>::Zero(1, static_cast<Eigen::Index>(vocab.size()));
  for (TokenId id : active_ids(tokens, vocab)) x(0, id) = S(1);
  return x;
}

template <typename S>
struct BowParams {
  Matrix<S> weights;  // vocab x 11
  Matrix<S> bias;     // 1 x 11

  std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(weights.rows()); }

  std::vector<NamedTensor<Matrix<S>>> tensors() { return {{"bow.weights", &weights}, {"bow.bias", &bias}}; }
  std::vector<NamedTensor<const Matrix<S>>> tensors() const {
    return {{"bow.weights", &weights}, {"bow.bias", &bias}};
  }

  static BowParams zeros(std::size_t vocab_size) {
    if (vocab_size < 2) throw ConfigError("vocabulary must contain at least the two reserved tokens");
    return {Matrix<S>::Zero(static_cast<Eigen::Index>(vocab_size), static_cast<Eigen::Index>(kNumClasses)),
            Matrix<S>::Zero(1, static_cast<Eigen::Index>(kNumClasses))};
  }

  static BowParams initialized(const ModelConfig& cfg, std::size_t vocab_size) {
    BowParams p = zeros(vocab_size);
    Rng rng(derive_seed(cfg.seed, 0xb0f));
    fill_normal(p.weights, cfg.init_std, rng);
    return p;
  }

  BowParams zeros_like() const { return zeros(vocab_size()); }

  template <typename T>
  BowParams<T> cast() const {
    return {weights.template cast<T>(), bias.template cast<T>()};
  }

  void check_shapes(std::size_t expected_vocab) const {
    if (weights.rows() != static_cast<Eigen::Index>(expected_vocab) ||
        weights.cols() != static_cast<Eigen::Index>(kNumClasses) || bias.rows() != 1 ||
        bias.cols() != static_cast<Eigen::Index>(kNumClasses)) {
      throw CorruptionError("bag-of-words parameters do not match a vocabulary of size " +
                            std::to_string(expected_vocab));
    }
    if (!weights.allFinite() || !bias.allFinite()) throw CorruptionError("bag-of-words parameters are not finite");
  }
};

/// softmax(x W + b) row-wise for dense multi-hot rows x (B x V).
template <typename S>
Matrix<S> bow_forward(const Matrix<S>& x, const BowParams<S>& p) {
  if (x.cols() != p.weights.rows()) throw UsageError("multi-hot width does not match vocabulary size");
  return classify_head(x, p.weights, p.bias);
}

/// Sparse equivalent of bow_forward for one sample: 1 x 11.
template <typename S>
Matrix<S> bow_forward_sparse(std::span<const TokenId> active, const BowParams<S>& p) {
  Matrix<S> logits = p.bias;
  for (TokenId id : active) {
    if (id < 0 || static_cast<std::size_t>(id) >= p.vocab_size()) {
      throw CorruptionError("token id " + std::to_string(id) + " outside bag-of-words vocabulary");
    }
    logits += p.weights.row(id);
  }
  softmax_rows_inplace(logits);
  return logits;
}

/// Mean cross-entropy and its gradient for dense inputs.
template <typename S>
double bow_loss_and_gradients(const Matrix<S>& x, std::span<const ProblemClass> labels, const BowParams<S>& p,
                              BowParams<S>& grads) {
  if (static_cast<std::size_t>(x.rows()) != labels.size() || labels.empty()) throw UsageError("need one label per row");
  const Matrix<S> probs = bow_forward(x, p);
  Matrix<S> dlogits = probs;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    dlogits(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(class_index(labels[b]))) -= S(1);
  }
  dlogits /= static_cast<S>(labels.size());
  grads = p.zeros_like();
  grads.weights.noalias() = x.transpose() * dlogits;
  grads.bias = dlogits.colwise().sum();
  return cross_entropy(probs, labels);
}

/// Multi-hot inputs in sparse form with their labels.
struct BowSplit {
  std::vector<std::vector<TokenId>> active;
  std::vector<ProblemClass> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Uses the full token list of every sample, without truncation.
template <typename Sample>
BowSplit encode_bow_split(std::span<const Sample> samples, const PreTokenizerSpec& spec, const Vocabulary& vocab) {
  BowSplit out;
  out.active.reserve(samples.size());
  out.labels.reserve(samples.size());
  for (const auto& s : samples) {
    out.active.push_back(active_ids(pretokenize(s.text, spec), vocab));
    out.labels.push_back(s.label);
  }
  return out;
}

namespace detail {

template <typename S>
EvalStats bow_evaluate_split(const BowSplit& split, const BowParams<S>& params) {
  EvalStats out;
  if (split.size() == 0) return out;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const Matrix<S> probs = bow_forward_sparse<S>(split.active[i], params);
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
class BowLearner {
 public:
  BowLearner(const BowSplit& train, const BowSplit& valid, BowParams<S> params, const ModelConfig& cfg)
      : train_(train),
        valid_(valid),
        params_(std::move(params)),
        grads_(params_.zeros_like()),
        optimizer_(cfg, std::as_const(params_).tensors()) {}

  BatchStats train_batch(std::span<const std::size_t> indices, std::size_t, std::size_t) {
    grads_.weights.setZero();
    grads_.bias.setZero();
    const S weight = S(1) / static_cast<S>(indices.size());
    BatchStats stats;
    for (std::size_t idx : indices) {
      const auto& active = train_.active[idx];
      const ProblemClass label = train_.labels[idx];
      Matrix<S> dlogits = bow_forward_sparse<S>(active, params_);
      const auto c = static_cast<Eigen::Index>(class_index(label));
      stats.loss_sum -= std::log(std::max(static_cast<double>(dlogits(0, c)), kProbabilityFloor));
      stats.correct += argmax_row(dlogits, 0) == class_index(label) ? 1 : 0;
      dlogits(0, c) -= S(1);
      dlogits *= weight;
      grads_.bias += dlogits;
      for (TokenId id : active) grads_.weights.row(id) += dlogits;
    }
    optimizer_.step(params_.tensors(), grads_.tensors());
    return stats;
  }

  EvalStats evaluate_valid() const { return bow_evaluate_split(valid_, params_); }
  BowParams<S> snapshot() const { return params_; }
  void restore(BowParams<S> p) { params_ = std::move(p); }
  BowParams<S>& params() { return params_; }

 private:
  const BowSplit& train_;
  const BowSplit& valid_;
  BowParams<S> params_;
  BowParams<S> grads_;
  AdamW<S> optimizer_;
};

}  // namespace detail

template <typename S>
struct TrainedBow {
  BowParams<S> params;
  TrainingHistory history;
};

/// Same optimiser, shuffling and early-stopping protocol as the transformer.
template <typename S = float>
TrainedBow<S> bow_train(const BowSplit& train_set, const BowSplit& valid_set, std::size_t vocab_size,
                        const ModelConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_set.size() == 0) throw ConfigError("training set is empty");
  if (valid_set.size() == 0) throw ConfigError("validation set is empty");
  detail::BowLearner<S> learner(train_set, valid_set, BowParams<S>::initialized(cfg, vocab_size), cfg);
  TrainingHistory history = fit(learner, train_set.size(), cfg, on_epoch);
  return {std::move(learner.params()), std::move(history)};
}

template <typename S>
EvalStats bow_evaluate(const BowSplit& split, const BowParams<S>& params) {
  return detail::bow_evaluate_split(split, params);
}

template <typename S>
Prediction bow_predict(std::string_view text, const PreTokenizerSpec& spec, const Vocabulary& vocab,
                       const BowParams<S>& params) {
  const auto active = active_ids(pretokenize(text, spec), vocab);
  return prediction_from_row(bow_forward_sparse<S>(active, params), 0);
}

}  // namespace hnclass
