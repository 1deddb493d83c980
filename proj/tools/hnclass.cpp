#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hnclass/hnclass.hpp"

namespace fs = std::filesystem;
using namespace hnclass;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

std::string default_data_dir() {
  const char* env = std::getenv("HNCLASS_DATA_DIR");
  return env != nullptr && *env != '\0' ? env : "data";
}

std::string read_text(const std::string& path) {
  if (path.empty() || path == "-") {
    return {std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>()};
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

PreTokenizerSpec parse_spec(const std::string& text) {
  const auto spec = PreTokenizerSpec::parse(text);
  if (!spec) throw ConfigError("unknown pre-tokenizer '" + text + "' (expected greedy-K or whitespace)");
  return *spec;
}

std::vector<LogSample> read_split(const fs::path& data_dir, const std::string& split) {
  if (split == "train") return read_samples(data_dir / DatasetFiles::kTrain);
  if (split == "valid") return read_samples(data_dir / DatasetFiles::kValid);
  if (split == "test") return read_samples(data_dir / DatasetFiles::kTest);
  throw ConfigError("unknown split '" + split + "' (expected train, valid or test)");
}

void require_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("dataset directory " + dir.string() + " does not exist");
}

/// Model hyperparameter flags; unset flags keep the preset value.
struct ModelFlags {
  std::optional<std::size_t> seq_len, embed_dim, num_blocks, num_heads, ffn_dim, batch_size, max_epochs, patience;
  std::optional<double> dropout, learning_rate, weight_decay;
  std::optional<bool> mask_padding, scale_embeddings;

  void add(CLI::App* cmd) {
    cmd->add_option("--seq-len", seq_len, "Sequence length T");
    cmd->add_option("--embed-dim", embed_dim, "Embedding size C");
    cmd->add_option("--blocks", num_blocks, "Number of encoder blocks N");
    cmd->add_option("--heads", num_heads, "Attention heads");
    cmd->add_option("--ffn-dim", ffn_dim, "Feed-forward hidden size");
    cmd->add_option("--dropout", dropout, "Dropout rate");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--lr", learning_rate, "AdamW learning rate");
    cmd->add_option("--weight-decay", weight_decay, "AdamW weight decay");
    cmd->add_option("--epochs", max_epochs, "Maximum training epochs");
    cmd->add_option("--patience", patience, "Early-stopping patience in epochs (0 disables)");
    cmd->add_flag("--mask-padding,!--no-mask-padding", mask_padding, "Mask padded keys and pool over real tokens only");
    cmd->add_flag("--scale-embeddings,!--no-scale-embeddings", scale_embeddings, "Multiply token embeddings by sqrt(C)");
  }

  void apply(ModelConfig& c) const {
    if (seq_len) c.seq_len = *seq_len;
    if (embed_dim) c.embed_dim = *embed_dim;
    if (num_blocks) c.num_blocks = *num_blocks;
    if (num_heads) c.num_heads = *num_heads;
    if (ffn_dim) c.ffn_dim = *ffn_dim;
    if (dropout) c.dropout = *dropout;
    if (batch_size) c.batch_size = *batch_size;
    if (learning_rate) c.learning_rate = *learning_rate;
    if (weight_decay) c.weight_decay = *weight_decay;
    if (max_epochs) c.max_epochs = *max_epochs;
    if (patience) c.patience = *patience;
    if (mask_padding) c.mask_padding = *mask_padding;
    if (scale_embeddings) c.scale_embeddings = *scale_embeddings;
  }
};

EpochCallback epoch_logger(bool quiet) {
  if (quiet) return {};
  return [](const EpochRecord& e) {
    std::fprintf(stderr, "epoch %zu: train loss %.4f acc %.4f, valid loss %.4f acc %.4f\n", e.epoch, e.train_loss,
                 e.train_accuracy, e.valid_loss, e.valid_accuracy);
  };
}

Vocabulary build_or_load_vocab(const fs::path& path, const fs::path& data_dir, const PreTokenizerSpec& spec,
                               std::size_t min_frequency) {
  if (fs::exists(path)) return Vocabulary::load(path);
  const auto train = read_samples(data_dir / DatasetFiles::kTrain);
  Vocabulary vocab = vocabulary_for(train, spec, min_frequency);
  vocab.save(path);
  std::fprintf(stderr, "built vocabulary of %zu tokens at %s\n", vocab.size(), path.string().c_str());
  return vocab;
}

void print_report(const MetricsReport& r, const std::optional<std::string>& out_dir) {
  std::cout << r.to_text();
  if (!out_dir) return;
  fs::create_directories(*out_dir);
  write_text(fs::path(*out_dir) / (r.test_case_id + ".report.json"), r.to_json().dump(2) + "\n");
  write_text(fs::path(*out_dir) / (r.test_case_id + ".confusion.csv"), r.confusion.to_csv());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Network problem classification from diagnostic tool logs"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a TOML/INI file; command-line flags take precedence");
  app.option_defaults()->always_capture_default();

  std::string data_dir = default_data_dir();
  const auto add_data = [&](CLI::App* cmd) {
    cmd->add_option("--data", data_dir, "Dataset directory (default from HNCLASS_DATA_DIR, else ./data)");
  };

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a labelled synthetic log corpus");
  std::size_t per_class = 500;
  std::uint64_t gen_seed = 2024;
  SplitFractions fractions;
  add_data(gen);
  gen->add_option("--per-class", per_class, "Samples per class")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--train-fraction", fractions.train, "Training split fraction");
  gen->add_option("--valid-fraction", fractions.valid, "Validation split fraction");
  gen->add_option("--test-fraction", fractions.test, "Test split fraction");

  // pretokenize
  auto* pre = app.add_subcommand("pretokenize", "Split a text into pre-tokens, one bracketed token per line");
  std::string pre_spec = "greedy-3";
  std::string pre_input;
  bool pre_json = false;
  pre->add_option("--pretokenizer", pre_spec, "greedy-K or whitespace");
  pre->add_option("input", pre_input, "Text file (default: standard input)");
  pre->add_flag("--json", pre_json, "Emit a JSON array of tokens");

  // build-vocab
  auto* voc = app.add_subcommand("build-vocab", "Build a vocabulary from the training split");
  std::string voc_spec = "greedy-3";
  std::string voc_out;
  std::size_t min_frequency = 1;
  add_data(voc);
  voc->add_option("--pretokenizer", voc_spec, "greedy-K or whitespace");
  voc->add_option("--min-frequency", min_frequency, "Minimum token count")->check(CLI::PositiveNumber);
  voc->add_option("--out", voc_out, "Vocabulary file (default: <data>/vocab-<pretokenizer>.txt)");

  // train
  auto* tr = app.add_subcommand("train", "Train a transformer or bag-of-words classifier");
  std::string tr_model = "transformer";
  std::string tr_spec = "greedy-3";
  std::string tr_vocab, tr_checkpoint, tr_history;
  std::uint64_t tr_seed = 0;
  bool quiet = false;
  ModelFlags tr_flags;
  add_data(tr);
  tr->add_option("--model", tr_model, "transformer or bow")->check(CLI::IsMember({"transformer", "bow"}));
  tr->add_option("--pretokenizer", tr_spec, "greedy-K or whitespace");
  tr->add_option("--vocab", tr_vocab, "Vocabulary file; built from the training split if absent");
  tr->add_option("--min-frequency", min_frequency, "Minimum token count when building the vocabulary");
  tr->add_option("--checkpoint", tr_checkpoint, "Output checkpoint (default: <data>/<model>-<pretokenizer>.ckpt)");
  tr->add_option("--history", tr_history, "Output history (default: <checkpoint>.history.jsonl)");
  tr->add_option("--seed", tr_seed, "Initialisation, shuffling and dropout seed");
  tr->add_flag("--quiet", quiet, "Do not log epochs");
  tr_flags.add(tr);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split");
  std::string ev_checkpoint, ev_vocab, ev_split = "test";
  std::optional<std::string> ev_out;
  add_data(ev);
  ev->add_option("--checkpoint", ev_checkpoint, "Checkpoint file")->required();
  ev->add_option("--vocab", ev_vocab, "Vocabulary file (default: the path stored in the checkpoint)");
  ev->add_option("--split", ev_split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
  ev->add_option("--out", ev_out, "Directory for the report JSON and confusion CSV");

  // suite
  auto* su = app.add_subcommand("suite", "Train and evaluate the seven comparison cases");
  std::string su_preset = "desk";
  std::string su_out;
  std::vector<std::uint64_t> su_seeds{0};
  std::vector<std::string> su_only;
  std::optional<std::size_t> su_greedy_t, su_ws_t, bow_epochs, bow_batch;
  std::optional<double> bow_lr;
  ModelFlags su_flags;
  add_data(su);
  su->add_option("--preset", su_preset, "desk (CPU-sized) or full (full-scale hyperparameters)")
      ->check(CLI::IsMember({"desk", "full"}));
  su->add_option("--out", su_out, "Output directory (default: <data>/suite)");
  su->add_option("--seeds", su_seeds, "One or more seeds; several seeds average the comparison table");
  su->add_option("--only", su_only, "Restrict to these case ids");
  su->add_option("--greedy-seq-len", su_greedy_t, "T for greedy cases (0 fits the longest training sample)");
  su->add_option("--whitespace-seq-len", su_ws_t, "T for the whitespace case (0 fits the longest training sample)");
  su->add_option("--bow-lr", bow_lr, "Bag-of-words learning rate");
  su->add_option("--bow-epochs", bow_epochs, "Bag-of-words maximum epochs");
  su->add_option("--bow-batch-size", bow_batch, "Bag-of-words mini-batch size");
  su->add_option("--min-frequency", min_frequency, "Minimum token count for vocabularies");
  su->add_flag("--quiet", quiet, "Do not log progress");
  su_flags.add(su);

  // classify
  auto* cl = app.add_subcommand("classify", "Classify one log text with a trained checkpoint");
  std::string cl_checkpoint, cl_vocab, cl_input;
  bool cl_json = false;
  cl->add_option("--checkpoint", cl_checkpoint, "Checkpoint file")->required();
  cl->add_option("--vocab", cl_vocab, "Vocabulary file (default: the path stored in the checkpoint)");
  cl->add_option("input", cl_input, "Log text file (default: standard input)");
  cl->add_flag("--json", cl_json, "Emit a JSON record");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const fs::path data(data_dir);

    if (*gen) {
      const Dataset ds = generate_dataset(per_class, gen_seed, fractions);
      write_dataset(data, ds, per_class, gen_seed, fractions);
      std::printf("wrote %zu/%zu/%zu samples to %s\n", ds.train.size(), ds.valid.size(), ds.test.size(),
                  data.string().c_str());
    } else if (*pre) {
      const auto tokens = pretokenize(read_text(pre_input), parse_spec(pre_spec));
      if (pre_json) {
        std::cout << nlohmann::json(tokens).dump() << "\n";
      } else {
        for (const auto& t : tokens) std::cout << "[" << Vocabulary::escape(t) << "]\n";
      }
    } else if (*voc) {
      require_dataset(data);
      const auto spec = parse_spec(voc_spec);
      const fs::path out = voc_out.empty() ? data / ("vocab-" + spec.name() + ".txt") : fs::path(voc_out);
      const Vocabulary vocab = vocabulary_for(read_samples(data / DatasetFiles::kTrain), spec, min_frequency);
      vocab.save(out);
      std::printf("wrote %zu tokens to %s\n", vocab.size(), out.string().c_str());
    } else if (*tr) {
      require_dataset(data);
      const auto spec = parse_spec(tr_spec);
      const ModelKind kind = *parse_model_kind(tr_model);
      ModelConfig cfg = kind == ModelKind::kTransformer ? ModelConfig::transformer_defaults() : ModelConfig::bow_defaults();
      tr_flags.apply(cfg);
      cfg.seed = tr_seed;
      cfg.validate();
      const fs::path vocab_path = tr_vocab.empty() ? data / ("vocab-" + spec.name() + ".txt") : fs::path(tr_vocab);
      const fs::path ckpt_path = tr_checkpoint.empty() ? data / (tr_model + "-" + spec.name() + ".ckpt")
                                                       : fs::path(tr_checkpoint);
      const fs::path history_path = tr_history.empty() ? fs::path(ckpt_path.string() + ".history.jsonl")
                                                       : fs::path(tr_history);
      const Vocabulary vocab = build_or_load_vocab(vocab_path, data, spec, min_frequency);
      const auto train_samples = read_samples(data / DatasetFiles::kTrain);
      const auto valid_samples = read_samples(data / DatasetFiles::kValid);

      Checkpoint ck;
      ck.kind = kind;
      ck.config = cfg;
      ck.pretokenizer = spec;
      ck.vocab_hash = vocab.hash();
      ck.vocab_size = vocab.size();
      ck.vocab_path = fs::absolute(vocab_path).string();
      TrainingHistory history;
      if (kind == ModelKind::kTransformer) {
        auto trained = train<float>(encode_split<LogSample>(train_samples, spec, vocab, cfg.seq_len),
                                    encode_split<LogSample>(valid_samples, spec, vocab, cfg.seq_len), vocab.size(),
                                    cfg, epoch_logger(quiet));
        ck.transformer = std::move(trained.params);
        history = std::move(trained.history);
      } else {
        auto trained = bow_train<float>(encode_bow_split<LogSample>(train_samples, spec, vocab),
                                        encode_bow_split<LogSample>(valid_samples, spec, vocab), vocab.size(), cfg,
                                        epoch_logger(quiet));
        ck.bow = std::move(trained.params);
        history = std::move(trained.history);
      }
      save_checkpoint(ckpt_path, ck);
      write_text(history_path, history.to_jsonl());

      const Checkpoint reloaded = load_checkpoint(ckpt_path);
      reloaded.check_vocabulary(vocab);
      if (serialize_checkpoint(reloaded) != serialize_checkpoint(ck)) {
        throw CorruptionError("checkpoint self-validation failed for " + ckpt_path.string());
      }
      std::printf("best epoch %zu, valid accuracy %.4f; wrote %s\n", history.best_epoch,
                  history.epochs.at(history.best_epoch - 1).valid_accuracy, ckpt_path.string().c_str());
    } else if (*ev) {
      const Checkpoint ck = load_checkpoint(ev_checkpoint);
      const Vocabulary vocab = Vocabulary::load(ev_vocab.empty() ? fs::path(ck.vocab_path) : fs::path(ev_vocab));
      ck.check_vocabulary(vocab);
      require_dataset(data);
      const auto samples = read_split(data, ev_split);
      if (samples.empty()) throw CorruptionError(ev_split + " split is empty");
      std::vector<ProblemClass> predictions;
      if (ck.kind == ModelKind::kTransformer) {
        predictions = evaluate(encode_split<LogSample>(samples, ck.pretokenizer, vocab, ck.config.seq_len),
                               *ck.transformer, ck.config)
                          .predictions;
      } else {
        predictions = bow_evaluate(encode_bow_split<LogSample>(samples, ck.pretokenizer, vocab), *ck.bow).predictions;
      }
      const std::string id = fs::path(ev_checkpoint).stem().string() + "." + ev_split;
      print_report(metrics(confusion(predictions, labels_of(samples)), id), ev_out);
    } else if (*su) {
      require_dataset(data);
      SuiteConfig cfg = su_preset == "desk" ? desk_suite_config() : SuiteConfig{};
      su_flags.apply(cfg.transformer);
      if (su_greedy_t) cfg.greedy_seq_len = *su_greedy_t;
      if (su_ws_t) cfg.whitespace_seq_len = *su_ws_t;
      if (bow_lr) cfg.bow.learning_rate = *bow_lr;
      if (bow_epochs) cfg.bow.max_epochs = *bow_epochs;
      if (bow_batch) cfg.bow.batch_size = *bow_batch;
      cfg.min_frequency = min_frequency;
      cfg.seeds = su_seeds;
      cfg.only = su_only;
      if (!quiet) cfg.log = [](const std::string& line) { std::fprintf(stderr, "%s\n", line.c_str()); };
      const SuiteResult result = run_suite(read_dataset(data), cfg);
      const fs::path out = su_out.empty() ? data / "suite" : fs::path(su_out);
      write_suite(out, result, cfg.seeds.size() > 1);
      std::cout << result.comparison_table();
      std::printf("wrote %zu reports to %s\n", result.results.size(), out.string().c_str());
      for (const auto& r : result.results) {
        if (!r.report) return kNumerical;
      }
    } else if (*cl) {
      const Checkpoint ck = load_checkpoint(cl_checkpoint);
      const Vocabulary vocab = Vocabulary::load(cl_vocab.empty() ? fs::path(ck.vocab_path) : fs::path(cl_vocab));
      const Prediction p = classify(ck, vocab, read_text(cl_input));
      if (cl_json) {
        nlohmann::json probs = nlohmann::json::object();
        for (std::size_t c = 0; c < kNumClasses; ++c) probs[std::string(kClassNames[c])] = p.probs[c];
        std::cout << nlohmann::json{{"label", class_name(p.label)}, {"probabilities", probs}}.dump() << "\n";
      } else {
        std::cout << class_name(p.label) << "\n";
        for (std::size_t c = 0; c < kNumClasses; ++c) std::printf("  %-24s %.6f\n", kClassNames[c].data(), p.probs[c]);
      }
    }
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kNumerical;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
  return kOk;
}
