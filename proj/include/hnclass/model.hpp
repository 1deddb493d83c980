#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "hnclass/classes.hpp"
#include "hnclass/config.hpp"
#include "hnclass/error.hpp"
#include "hnclass/pretokenize.hpp"
#include "hnclass/rng.hpp"
#include "hnclass/tensor.hpp"
#include "hnclass/vocab.hpp"

namespace hnclass {

template <typename S>
struct BlockParams {
  Matrix<S> wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix<S> ln1_gain, ln1_bias;
  Matrix<S> w1, b1, w2, b2;
  Matrix<S> ln2_gain, ln2_bias;

  template <typename Self>
  static auto collect(Self& self, const std::string& prefix) {
    using M = std::conditional_t<std::is_const_v<Self>, const Matrix<S>, Matrix<S>>;
    return std::vector<NamedTensor<M>>{
        {prefix + "attn.wq", &self.wq},        {prefix + "attn.bq", &self.bq},
        {prefix + "attn.wk", &self.wk},        {prefix + "attn.bk", &self.bk},
        {prefix + "attn.wv", &self.wv},        {prefix + "attn.bv", &self.bv},
        {prefix + "attn.wo", &self.wo},        {prefix + "attn.bo", &self.bo},
        {prefix + "ln1.gain", &self.ln1_gain}, {prefix + "ln1.bias", &self.ln1_bias},
        {prefix + "ffn.w1", &self.w1},         {prefix + "ffn.b1", &self.b1},
        {prefix + "ffn.w2", &self.w2},         {prefix + "ffn.b2", &self.b2},
        {prefix + "ln2.gain", &self.ln2_gain}, {prefix + "ln2.bias", &self.ln2_bias},
    };
  }
};

/// All trainable tensors of the transformer classifier. Biases and layer-norm
/// vectors are stored as 1 x n matrices.
template <typename S>
struct TransformerParams {
  Matrix<S> token_embedding;     // vocab x C
  Matrix<S> position_embedding;  // T x C
  std::vector<BlockParams<S>> blocks;
  Matrix<S> head_weights;  // C x 11
  Matrix<S> head_bias;     // 1 x 11

  std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(token_embedding.rows()); }

  /// Every tensor with its stable name, in a fixed order.
  std::vector<NamedTensor<Matrix<S>>> tensors() { return collect(*this); }
  std::vector<NamedTensor<const Matrix<S>>> tensors() const { return collect(*this); }

  static TransformerParams zeros(const ModelConfig& cfg, std::size_t vocab_size) {
    cfg.validate();
    if (vocab_size < 2) throw ConfigError("vocabulary must contain at least the two reserved tokens");
    const auto C = static_cast<Eigen::Index>(cfg.embed_dim);
    const auto F = static_cast<Eigen::Index>(cfg.ffn_dim);
    const auto K = static_cast<Eigen::Index>(cfg.num_classes);
    TransformerParams p;
    p.token_embedding = Matrix<S>::Zero(static_cast<Eigen::Index>(vocab_size), C);
    p.position_embedding = Matrix<S>::Zero(static_cast<Eigen::Index>(cfg.seq_len), C);
    p.blocks.resize(cfg.num_blocks);
    for (auto& b : p.blocks) {
      for (auto* m : {&b.wq, &b.wk, &b.wv, &b.wo}) *m = Matrix<S>::Zero(C, C);
      for (auto* m : {&b.bq, &b.bk, &b.bv, &b.bo, &b.ln1_gain, &b.ln1_bias, &b.ln2_gain, &b.ln2_bias, &b.b2}) {
        *m = Matrix<S>::Zero(1, C);
      }
      b.w1 = Matrix<S>::Zero(C, F);
      b.b1 = Matrix<S>::Zero(1, F);
      b.w2 = Matrix<S>::Zero(F, C);
    }
    p.head_weights = Matrix<S>::Zero(C, K);
    p.head_bias = Matrix<S>::Zero(1, K);
    return p;
  }

  /// Normal(0, init_std) matrices, zero biases, unit layer-norm gains.
  static TransformerParams initialized(const ModelConfig& cfg, std::size_t vocab_size) {
    TransformerParams p = zeros(cfg, vocab_size);
    Rng rng(derive_seed(cfg.seed, 0x1417));
    fill_normal(p.token_embedding, cfg.init_std, rng);
    fill_normal(p.position_embedding, cfg.init_std, rng);
    for (auto& b : p.blocks) {
      for (auto* m : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.w2}) fill_normal(*m, cfg.init_std, rng);
      b.ln1_gain.setOnes();
      b.ln2_gain.setOnes();
    }
    fill_normal(p.head_weights, cfg.init_std, rng);
    return p;
  }

  TransformerParams zeros_like() const {
    TransformerParams g = *this;
    for (auto& t : g.tensors()) t.value->setZero();
    return g;
  }

  template <typename T>
  TransformerParams<T> cast() const {
    TransformerParams<T> out;
    out.token_embedding = token_embedding.template cast<T>();
    out.position_embedding = position_embedding.template cast<T>();
    out.blocks.resize(blocks.size());
    for (std::size_t l = 0; l < blocks.size(); ++l) {
      auto src = BlockParams<S>::collect(blocks[l], "");
      auto dst = BlockParams<T>::collect(out.blocks[l], "");
      for (std::size_t i = 0; i < src.size(); ++i) *dst[i].value = src[i].value->template cast<T>();
    }
    out.head_weights = head_weights.template cast<T>();
    out.head_bias = head_bias.template cast<T>();
    return out;
  }

  /// Throws CorruptionError unless every tensor matches the config shapes.
  void check_shapes(const ModelConfig& cfg) const {
    const auto expected = zeros(cfg, std::max<std::size_t>(vocab_size(), 2));
    const auto want = expected.tensors();
    const auto have = tensors();
    if (want.size() != have.size()) throw CorruptionError("parameter tensor count does not match config");
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (want[i].value->rows() != have[i].value->rows() || want[i].value->cols() != have[i].value->cols()) {
        throw CorruptionError("parameter '" + want[i].name + "' has shape " + std::to_string(have[i].value->rows()) +
                              "x" + std::to_string(have[i].value->cols()) + ", expected " +
                              std::to_string(want[i].value->rows()) + "x" + std::to_string(want[i].value->cols()));
      }
      if (!have[i].value->allFinite()) throw CorruptionError("parameter '" + want[i].name + "' has non-finite entries");
    }
  }

 private:
  template <typename Self>
  static auto collect(Self& self) {
    using M = std::conditional_t<std::is_const_v<Self>, const Matrix<S>, Matrix<S>>;
    std::vector<NamedTensor<M>> out{{"token_embedding", &self.token_embedding},
                                    {"position_embedding", &self.position_embedding}};
    for (std::size_t l = 0; l < self.blocks.size(); ++l) {
      auto block = BlockParams<S>::collect(self.blocks[l], "blocks." + std::to_string(l) + ".");
      out.insert(out.end(), block.begin(), block.end());
    }
    out.push_back({"head_weights", &self.head_weights});
    out.push_back({"head_bias", &self.head_bias});
    return out;
  }
};

/// Class distribution in canonical class order plus its argmax.
struct Prediction {
  std::array<double, kNumClasses> probs{};
  ProblemClass label = ProblemClass::kNormalState;
};

namespace detail {

template <typename S>
struct BlockTape {
  Matrix<S> x, q, k, v, o;
  std::vector<Matrix<S>> attn;  // per-head T x T probabilities
  Matrix<S> attn_drop, xhat1, y, h, ffn_drop, xhat2;
  ColVector<S> rstd1, rstd2;
  Matrix<S> dscores;  // backward scratch
};

template <typename S>
struct SampleTape {
  const TokenSequence* seq = nullptr;
  Matrix<S> embed_drop;
  std::vector<BlockTape<S>> blocks;
  std::size_t pool_count = 0;
  Matrix<S> pooled;  // 1 x C
  Matrix<S> probs;   // 1 x 11
};

inline std::size_t valid_length(const TokenSequence& seq, const ModelConfig& cfg) {
  if (!cfg.mask_padding) return seq.size();
  return seq.true_length == 0 ? seq.size() : std::min(seq.true_length, seq.size());
}

template <typename S>
Matrix<S> embed_sample(const TokenSequence& seq, const TransformerParams<S>& p, const ModelConfig& cfg, Rng* rng,
                       Matrix<S>& drop) {
  if (seq.size() != cfg.seq_len) {
    throw UsageError("sequence length " + std::to_string(seq.size()) + " does not match T=" +
                     std::to_string(cfg.seq_len));
  }
  const S scale = cfg.scale_embeddings ? static_cast<S>(std::sqrt(static_cast<double>(cfg.embed_dim))) : S(1);
  Matrix<S> x(static_cast<Eigen::Index>(seq.size()), p.token_embedding.cols());
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const TokenId id = seq.ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= p.vocab_size()) {
      throw CorruptionError("token id " + std::to_string(id) + " outside embedding table of size " +
                            std::to_string(p.vocab_size()));
    }
    const auto ti = static_cast<Eigen::Index>(t);
    x.row(ti) = p.token_embedding.row(id) * scale + p.position_embedding.row(ti);
  }
  fill_dropout_mask(drop, x.rows(), x.cols(), cfg.dropout, rng);
  apply_mask(x, drop);
  return x;
}

/// Writes every intermediate into `t` so its buffers are reused across calls.
template <typename S>
Matrix<S> block_forward(const Matrix<S>& x, const BlockParams<S>& p, const ModelConfig& cfg, std::size_t length,
                        Rng* rng, BlockTape<S>& t) {
  const Eigen::Index T = x.rows();
  const auto d = static_cast<Eigen::Index>(cfg.head_dim());
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(cfg.head_dim())));
  const auto L = static_cast<Eigen::Index>(length);

  t.x = x;
  t.q.noalias() = x * p.wq;
  t.q.rowwise() += p.bq.row(0);
  t.k.noalias() = x * p.wk;
  t.k.rowwise() += p.bk.row(0);
  t.v.noalias() = x * p.wv;
  t.v.rowwise() += p.bv.row(0);
  t.o.resize(T, x.cols());
  t.attn.resize(cfg.num_heads);
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * d;
    Matrix<S>& s = t.attn[h];
    s.noalias() = t.q.middleCols(c0, d) * t.k.middleCols(c0, d).transpose();
    s *= scale;
    if (L < T) s.rightCols(T - L).setConstant(-std::numeric_limits<S>::infinity());
    softmax_rows_inplace(s);
    t.o.middleCols(c0, d).noalias() = s * t.v.middleCols(c0, d);
  }
  Matrix<S> a = t.o * p.wo;
  a.rowwise() += p.bo.row(0);
  fill_dropout_mask(t.attn_drop, a.rows(), a.cols(), rng != nullptr ? cfg.dropout : 0.0, rng);
  apply_mask(a, t.attn_drop);
  a += x;
  t.y = layer_norm<S>(a, p.ln1_gain, p.ln1_bias, cfg.layernorm_eps, &t.xhat1, &t.rstd1);

  t.h.noalias() = t.y * p.w1;
  t.h.rowwise() += p.b1.row(0);
  Matrix<S> f = t.h.cwiseMax(S(0)) * p.w2;
  f.rowwise() += p.b2.row(0);
  fill_dropout_mask(t.ffn_drop, f.rows(), f.cols(), rng != nullptr ? cfg.dropout : 0.0, rng);
  apply_mask(f, t.ffn_drop);
  f += t.y;
  return layer_norm<S>(f, p.ln2_gain, p.ln2_bias, cfg.layernorm_eps, &t.xhat2, &t.rstd2);
}

template <typename S>
Matrix<S> block_backward(const Matrix<S>& dout, BlockTape<S>& t, const BlockParams<S>& p, BlockParams<S>& g,
                         const ModelConfig& cfg) {
  const auto d = static_cast<Eigen::Index>(cfg.head_dim());
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(cfg.head_dim())));

  Matrix<S> dy = layer_norm_backward<S>(dout, t.xhat2, t.rstd2, p.ln2_gain, g.ln2_gain, g.ln2_bias);
  Matrix<S> df = dy;
  apply_mask(df, t.ffn_drop);
  const Matrix<S> hr = t.h.cwiseMax(S(0));
  g.w2.noalias() += hr.transpose() * df;
  g.b2.row(0) += df.colwise().sum();
  Matrix<S> dh = df * p.w2.transpose();
  dh.array() *= (t.h.array() > S(0)).template cast<S>();
  g.w1.noalias() += t.y.transpose() * dh;
  g.b1.row(0) += dh.colwise().sum();
  dy.noalias() += dh * p.w1.transpose();

  Matrix<S> dx = layer_norm_backward<S>(dy, t.xhat1, t.rstd1, p.ln1_gain, g.ln1_gain, g.ln1_bias);
  Matrix<S> da = dx;
  apply_mask(da, t.attn_drop);
  g.wo.noalias() += t.o.transpose() * da;
  g.bo.row(0) += da.colwise().sum();
  const Matrix<S> d_o = da * p.wo.transpose();

  Matrix<S> dq(t.q.rows(), t.q.cols());
  Matrix<S> dk(t.k.rows(), t.k.cols());
  Matrix<S> dv(t.v.rows(), t.v.cols());
  for (std::size_t h = 0; h < cfg.num_heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * d;
    const Matrix<S>& prob = t.attn[h];
    dv.middleCols(c0, d).noalias() = prob.transpose() * d_o.middleCols(c0, d);
    Matrix<S>& ds = t.dscores;
    ds.noalias() = d_o.middleCols(c0, d) * t.v.middleCols(c0, d).transpose();
    const ColVector<S> row_dot = (ds.array() * prob.array()).rowwise().sum().matrix();
    ds.colwise() -= row_dot;
    ds.array() *= prob.array() * scale;
    dq.middleCols(c0, d).noalias() = ds * t.k.middleCols(c0, d);
    dk.middleCols(c0, d).noalias() = ds.transpose() * t.q.middleCols(c0, d);
  }
  g.wq.noalias() += t.x.transpose() * dq;
  g.wk.noalias() += t.x.transpose() * dk;
  g.wv.noalias() += t.x.transpose() * dv;
  g.bq.row(0) += dq.colwise().sum();
  g.bk.row(0) += dk.colwise().sum();
  g.bv.row(0) += dv.colwise().sum();
  dx.noalias() += dq * p.wq.transpose();
  dx.noalias() += dk * p.wk.transpose();
  dx.noalias() += dv * p.wv.transpose();
  return dx;
}

template <typename S>
void check_finite(const Matrix<S>& m, std::string_view stage, std::size_t sample) {
  if (!m.allFinite()) {
    throw DivergenceError("non-finite activations after " + std::string(stage) + " in batch sample " +
                          std::to_string(sample));
  }
}

/// Full forward pass for one sample. A non-null `rng` enables dropout.
template <typename S>
Matrix<S> forward_sample(const TokenSequence& seq, const TransformerParams<S>& p, const ModelConfig& cfg, Rng* rng,
                         std::size_t sample, SampleTape<S>& tape) {
  const std::size_t length = valid_length(seq, cfg);
  Matrix<S> x = embed_sample(seq, p, cfg, rng, tape.embed_drop);
  tape.seq = &seq;
  tape.blocks.resize(p.blocks.size());
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    x = block_forward(x, p.blocks[l], cfg, length, rng, tape.blocks[l]);
    check_finite(x, "encoder block " + std::to_string(l), sample);
  }
  tape.pool_count = length;
  tape.pooled = x.topRows(static_cast<Eigen::Index>(length)).colwise().mean();
  tape.probs = softmax_rows<S>((tape.pooled * p.head_weights) + p.head_bias);
  check_finite(tape.probs, "classification head", sample);
  return tape.probs;
}

/// Accumulates d(weight * cross-entropy)/d(params) into `g`.
template <typename S>
void backward_sample(SampleTape<S>& tape, ProblemClass label, S weight, const TransformerParams<S>& p,
                     TransformerParams<S>& g, const ModelConfig& cfg) {
  Matrix<S> dlogits = tape.probs;
  dlogits(0, static_cast<Eigen::Index>(class_index(label))) -= S(1);
  dlogits *= weight;
  g.head_weights.noalias() += tape.pooled.transpose() * dlogits;
  g.head_bias += dlogits;
  const Matrix<S> dpool = (dlogits * p.head_weights.transpose()) / static_cast<S>(tape.pool_count);

  const auto T = static_cast<Eigen::Index>(cfg.seq_len);
  Matrix<S> dx = Matrix<S>::Zero(T, p.token_embedding.cols());
  dx.topRows(static_cast<Eigen::Index>(tape.pool_count)).rowwise() = dpool.row(0);
  for (std::size_t l = p.blocks.size(); l-- > 0;) {
    dx = block_backward(dx, tape.blocks[l], p.blocks[l], g.blocks[l], cfg);
  }
  apply_mask(dx, tape.embed_drop);
  g.position_embedding += dx;
  const S scale = cfg.scale_embeddings ? static_cast<S>(std::sqrt(static_cast<double>(cfg.embed_dim))) : S(1);
  const auto& ids = tape.seq->ids;
  for (Eigen::Index t = 0; t < T; ++t) g.token_embedding.row(ids[static_cast<std::size_t>(t)]) += dx.row(t) * scale;
}

inline std::uint64_t sample_dropout_seed(std::uint64_t seed, std::size_t sample) {
  return derive_seed(seed, 0xd509'0000'0000ULL + sample);
}

}  // namespace detail

/// token_embedding[ids] + position_embedding, dropout in training mode.
template <typename S>
Tensor3<S> embed(std::span<const TokenSequence> batch, const TransformerParams<S>& p, const ModelConfig& cfg,
                 Mode mode = Mode::kEval, std::uint64_t dropout_seed = 0) {
  Tensor3<S> out;
  out.reserve(batch.size());
  Matrix<S> drop;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Rng rng(detail::sample_dropout_seed(dropout_seed, b));
    out.push_back(detail::embed_sample(batch[b], p, cfg, mode == Mode::kTrain ? &rng : nullptr, drop));
  }
  return out;
}

/// Post-norm encoder block: multi-head self-attention then a ReLU
/// feed-forward layer, each with a residual connection and layer norm.
/// `lengths` only matters when cfg.mask_padding is set.
template <typename S>
Tensor3<S> encoder_block(const Tensor3<S>& x, const BlockParams<S>& p, const ModelConfig& cfg, Mode mode = Mode::kEval,
                         std::uint64_t dropout_seed = 0, std::span<const std::size_t> lengths = {}) {
  Tensor3<S> out;
  out.reserve(x.size());
  detail::BlockTape<S> tape;
  for (std::size_t b = 0; b < x.size(); ++b) {
    if (x[b].cols() != static_cast<Eigen::Index>(cfg.embed_dim)) throw UsageError("encoder input width must equal C");
    std::size_t length = static_cast<std::size_t>(x[b].rows());
    if (cfg.mask_padding && b < lengths.size() && lengths[b] > 0) length = std::min(length, lengths[b]);
    Rng rng(detail::sample_dropout_seed(dropout_seed, b));
    out.push_back(detail::block_forward(x[b], p, cfg, length, mode == Mode::kTrain ? &rng : nullptr, tape));
    detail::check_finite(out.back(), "encoder block", b);
  }
  return out;
}

/// Mean over all T positions of each sample: B x C.
template <typename S>
Matrix<S> mean_pool(const Tensor3<S>& x) {
  if (x.empty()) return {};
  Matrix<S> out(static_cast<Eigen::Index>(x.size()), x.front().cols());
  for (std::size_t b = 0; b < x.size(); ++b) {
    if (x[b].rows() == 0) throw UsageError("mean_pool needs T >= 1");
    out.row(static_cast<Eigen::Index>(b)) = x[b].colwise().mean();
  }
  return out;
}

/// softmax(x W + b) row-wise: B x 11.
template <typename S>
Matrix<S> classify_head(const Matrix<S>& pooled, const Matrix<S>& weights, const Matrix<S>& bias) {
  if (pooled.cols() != weights.rows() || bias.cols() != weights.cols()) throw UsageError("classification head shape mismatch");
  Matrix<S> logits = (pooled * weights).rowwise() + bias.row(0);
  softmax_rows_inplace(logits);
  return logits;
}

template <typename S>
Matrix<S> classify_head(const Matrix<S>& pooled, const TransformerParams<S>& p) {
  return classify_head(pooled, p.head_weights, p.head_bias);
}

/// classify_head(mean_pool(encoder_block^N(embed(batch)))): B x 11.
template <typename S>
Matrix<S> forward(std::span<const TokenSequence> batch, const TransformerParams<S>& p, const ModelConfig& cfg,
                  Mode mode = Mode::kEval, std::uint64_t dropout_seed = 0) {
  Matrix<S> out(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(kNumClasses));
  detail::SampleTape<S> tape;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Rng rng(detail::sample_dropout_seed(dropout_seed, b));
    out.row(static_cast<Eigen::Index>(b)) =
        detail::forward_sample(batch[b], p, cfg, mode == Mode::kTrain ? &rng : nullptr, b, tape);
  }
  return out;
}

/// Mean cross-entropy with a 1e-12 probability floor.
template <typename S>
double loss(const Matrix<S>& probs, std::span<const ProblemClass> labels) {
  return cross_entropy(probs, labels);
}

/// Eval-mode loss and parameter gradients of a batch, in double precision.
/// Used for gradient checking and tests; training uses the per-sample path.
template <typename S>
double loss_and_gradients(std::span<const TokenSequence> batch, std::span<const ProblemClass> labels,
                          const TransformerParams<S>& p, const ModelConfig& cfg, TransformerParams<S>& grads) {
  if (batch.size() != labels.size() || batch.empty()) throw UsageError("need one label per sample");
  grads = p.zeros_like();
  double total = 0.0;
  const S weight = S(1) / static_cast<S>(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    detail::SampleTape<S> tape;
    detail::forward_sample(batch[b], p, cfg, static_cast<Rng*>(nullptr), b, tape);
    const double prob = static_cast<double>(tape.probs(0, static_cast<Eigen::Index>(class_index(labels[b]))));
    total -= std::log(std::max(prob, kProbabilityFloor));
    detail::backward_sample(tape, labels[b], weight, p, grads, cfg);
  }
  return total / static_cast<double>(batch.size());
}

template <typename S>
Prediction prediction_from_row(const Matrix<S>& probs, Eigen::Index row) {
  Prediction out;
  for (std::size_t c = 0; c < kNumClasses; ++c) out.probs[c] = static_cast<double>(probs(row, static_cast<Eigen::Index>(c)));
  out.label = class_from_index(argmax_row(probs, row));
  return out;
}

/// End-to-end inference: pretokenize, encode to T, eval-mode forward.
template <typename S>
Prediction predict(std::string_view text, const PreTokenizerSpec& spec, const Vocabulary& vocab,
                   const TransformerParams<S>& p, const ModelConfig& cfg) {
  const TokenList tokens = pretokenize(text, spec);
  const TokenSequence seq = encode(tokens, vocab, cfg.seq_len);
  const Matrix<S> probs = forward<S>(std::span<const TokenSequence>(&seq, 1), p, cfg);
  return prediction_from_row(probs, 0);
}

}  // namespace hnclass
