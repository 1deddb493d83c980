#include <gtest/gtest.h>

#include <vector>

#include "hnclass/baseline.hpp"
#include "hnclass/datagen.hpp"
#include "hnclass/eval.hpp"
#include "oracles.hpp"

using namespace hnclass;
using MatD = Matrix<double>;

namespace {
Vocabulary ab_vocab() { return Vocabulary({"a", "b"}); }
}  // namespace

TEST(MultiHot, Examples) {
  const auto v = ab_vocab();
  EXPECT_EQ(multi_hot<double>(TokenList{}, v), MatD::Zero(1, 4));

  MatD ab = MatD::Zero(1, 4);
  ab(0, 2) = ab(0, 3) = 1.0;
  EXPECT_EQ(multi_hot<double>(TokenList{"a", "a", "b"}, v), ab);

  MatD unk = MatD::Zero(1, 4);
  unk(0, Vocabulary::kUnkId) = 1.0;
  EXPECT_EQ(multi_hot<double>(TokenList{"zzz"}, v), unk);
}

TEST(MultiHot, OrderAndDuplicationInvariant) {
  const auto v = ab_vocab();
  EXPECT_EQ(multi_hot<double>(TokenList{"b", "q", "a"}, v), multi_hot<double>(TokenList{"a", "a", "q", "b", "b"}, v));
  EXPECT_EQ(active_ids(TokenList{"b", "q", "a", "a"}, v), (std::vector<TokenId>{1, 2, 3}));
}

TEST(BowForward, Examples) {
  const auto p = BowParams<double>::zeros(4);
  const MatD x = multi_hot<double>(TokenList{"a"}, ab_vocab());
  const MatD probs = bow_forward(x, p);
  for (Eigen::Index c = 0; c < 11; ++c) EXPECT_NEAR(probs(0, c), 1.0 / 11.0, 1e-15);

  ModelConfig cfg;
  cfg.seed = 2;
  const auto q = BowParams<double>::initialized(cfg, 4);
  MatD xx(2, 4);
  xx << 0, 1, 1, 0, 0, 1, 1, 0;
  const MatD out = bow_forward(xx, q);
  EXPECT_EQ(out.row(0), out.row(1));
  EXPECT_NEAR(out.row(0).sum(), 1.0, 1e-6);
  EXPECT_THROW(bow_forward(MatD(MatD::Zero(1, 3)), q), UsageError);
}

TEST(BowForward, SparseMatchesDense) {
  ModelConfig cfg;
  const auto p = BowParams<double>::initialized(cfg, 6);
  const Vocabulary v({"a", "b", "c", "d"});
  const TokenList tokens{"d", "a", "x", "d"};
  const MatD dense = bow_forward(multi_hot<double>(tokens, v), p);
  const MatD sparse = bow_forward_sparse<double>(active_ids(tokens, v), p);
  EXPECT_LT((dense - sparse).cwiseAbs().maxCoeff(), 1e-15);
  const std::vector<TokenId> bad{9};
  EXPECT_THROW(bow_forward_sparse<double>(bad, p), CorruptionError);
}

TEST(BowGradient, MatchesCentralDifferences) {
  ModelConfig cfg;
  cfg.init_std = 0.5;
  auto p = BowParams<double>::initialized(cfg, 7);
  MatD x(3, 7);
  x << 0, 1, 1, 0, 0, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 0, 0, 0, 0, 1;
  const std::vector<ProblemClass> labels{ProblemClass::kHighJitter, ProblemClass::kNormalState,
                                         ProblemClass::kHighDelay};
  BowParams<double> g;
  bow_loss_and_gradients(x, labels, p, g);
  const auto r = oracle::check_gradients(p.tensors(), g.tensors(),
                                         [&] { return cross_entropy(bow_forward(x, p), labels); }, 1e-5, 1e-8);
  EXPECT_LE(r.worst, 1e-4) << r.worst_name;
}

TEST(BowTrain, OverfitsOneSamplePerClassAndIsDeterministic) {
  std::vector<LogSample> samples;
  for (auto cls : all_classes()) samples.push_back(generate_sample(cls, 9000 + class_index(cls)));
  const auto spec = PreTokenizerSpec::whitespace();
  const auto vocab = vocabulary_for(samples, spec);
  const auto split = encode_bow_split<LogSample>(samples, spec, vocab);
  auto cfg = ModelConfig::bow_defaults();
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 4;
  cfg.patience = 0;
  cfg.max_epochs = 50;
  const auto a = bow_train<float>(split, split, vocab.size(), cfg);
  EXPECT_DOUBLE_EQ(bow_evaluate(split, a.params).accuracy, 1.0);
  const auto b = bow_train<float>(split, split, vocab.size(), cfg);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.params.weights, b.params.weights);
}

TEST(BowTrain, UsesFullTokenList) {
  std::string text;
  for (int i = 0; i < 700; ++i) text += "tok" + std::string(1, static_cast<char>('a' + i % 26)) + " ";
  text += "tail_marker";
  const std::vector<LogSample> samples{{text, ProblemClass::kNormalState, 0}};
  const auto vocab = vocabulary_for(samples, PreTokenizerSpec::whitespace());
  const auto split = encode_bow_split<LogSample>(samples, PreTokenizerSpec::whitespace(), vocab);
  const auto& ids = split.active[0];
  EXPECT_NE(std::find(ids.begin(), ids.end(), vocab.id("tail_marker")), ids.end());
}

TEST(BowParams, ShapeCheck) {
  const auto p = BowParams<float>::zeros(10);
  EXPECT_NO_THROW(p.check_shapes(10));
  EXPECT_THROW(p.check_shapes(11), CorruptionError);
  EXPECT_THROW(BowParams<float>::zeros(1), ConfigError);
}

TEST(BowPredict, SumsToOne) {
  const Vocabulary v({"Link", "detected:", "no"});
  ModelConfig cfg;
  const auto p = BowParams<float>::initialized(cfg, v.size());
  const auto pred = bow_predict("Link detected: no", PreTokenizerSpec::whitespace(), v, p);
  double s = 0.0;
  for (double x : pred.probs) s += x;
  EXPECT_NEAR(s, 1.0, 1e-6);
}
