#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hnclass/baseline.hpp"
#include "hnclass/config.hpp"
#include "hnclass/error.hpp"
#include "hnclass/model.hpp"
#include "hnclass/pretokenize.hpp"
#include "hnclass/tensor.hpp"
#include "hnclass/vocab.hpp"

namespace hnclass {

/// Layout: magic, u32 version, u64 header length, JSON header, raw float32
/// tensors in header order, u64 FNV-1a checksum of everything before it.
/// All integers and floats are little-endian.
struct Checkpoint {
  static constexpr std::string_view kMagic = "HNCLSCKP";
  static constexpr std::uint32_t kVersion = 1;

  ModelKind kind = ModelKind::kTransformer;
  ModelConfig config;
  PreTokenizerSpec pretokenizer = PreTokenizerSpec::greedy(3);
  std::uint64_t vocab_hash = 0;
  std::size_t vocab_size = 0;
  std::string vocab_path;  // informational
  std::optional<TransformerParams<float>> transformer;
  std::optional<BowParams<float>> bow;

  /// Throws CorruptionError unless `vocab` is the one the model was trained with.
  void check_vocabulary(const Vocabulary& vocab) const {
    if (vocab.size() != vocab_size || vocab.hash() != vocab_hash) {
      throw CorruptionError("vocabulary does not match the checkpoint (expected " + std::to_string(vocab_size) +
                            " tokens, hash " + std::to_string(vocab_hash) + ")");
    }
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put_raw(std::string& out, const T& v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }

  std::string_view take(std::size_t n) {
    if (n > data_.size() - pos_) throw CorruptionError("checkpoint is truncated");
    const auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

template <typename M>
nlohmann::json tensor_index(const std::vector<NamedTensor<M>>& tensors) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : tensors) out.push_back({{"name", t.name}, {"shape", {t.value->rows(), t.value->cols()}}});
  return out;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::vector<NamedTensor<const Matrix<float>>> tensors;
  if (ck.kind == ModelKind::kTransformer) {
    if (!ck.transformer) throw UsageError("transformer checkpoint lacks parameters");
    tensors = ck.transformer->tensors();
  } else {
    if (!ck.bow) throw UsageError("bag-of-words checkpoint lacks parameters");
    tensors = ck.bow->tensors();
  }
  const nlohmann::json header = {
      {"kind", model_kind_name(ck.kind)},
      {"config", ck.config.to_json()},
      {"pretokenizer", ck.pretokenizer.name()},
      {"vocab_hash", ck.vocab_hash},
      {"vocab_size", ck.vocab_size},
      {"vocab_path", ck.vocab_path},
      {"tensors", detail::tensor_index(tensors)},
  };
  const std::string header_text = header.dump();

  std::string out(Checkpoint::kMagic);
  detail::put_raw(out, Checkpoint::kVersion);
  detail::put_raw(out, static_cast<std::uint64_t>(header_text.size()));
  out += header_text;
  for (const auto& t : tensors) {
    out.append(reinterpret_cast<const char*>(t.value->data()), static_cast<std::size_t>(t.value->size()) * sizeof(float));
  }
  detail::put_raw(out, fnv1a64(out));
  return out;
}

inline Checkpoint deserialize_checkpoint(std::string_view data) {
  if (data.size() < Checkpoint::kMagic.size() + 4 + 8 + 8) throw CorruptionError("checkpoint is truncated");
  const std::string_view body = data.substr(0, data.size() - 8);
  std::uint64_t stored = 0;
  std::memcpy(&stored, data.data() + body.size(), 8);
  if (stored != fnv1a64(body)) throw CorruptionError("checkpoint checksum mismatch");

  detail::Reader in(body);
  if (in.take(Checkpoint::kMagic.size()) != Checkpoint::kMagic) throw CorruptionError("not a checkpoint file");
  const auto version = in.get<std::uint32_t>();
  if (version != Checkpoint::kVersion) throw CorruptionError("unsupported checkpoint version " + std::to_string(version));
  const auto header_len = in.get<std::uint64_t>();
  if (header_len > in.remaining()) throw CorruptionError("checkpoint header is truncated");

  Checkpoint ck;
  nlohmann::json header;
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> index;
  try {
    header = nlohmann::json::parse(in.take(static_cast<std::size_t>(header_len)));
    const auto kind = parse_model_kind(header.at("kind").get<std::string>());
    if (!kind) throw CorruptionError("unknown model kind in checkpoint");
    ck.kind = *kind;
    ck.config = ModelConfig::from_json(header.at("config"));
    const auto spec = PreTokenizerSpec::parse(header.at("pretokenizer").get<std::string>());
    if (!spec) throw CorruptionError("unknown pre-tokenizer in checkpoint");
    ck.pretokenizer = *spec;
    ck.vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
    ck.vocab_size = header.at("vocab_size").get<std::size_t>();
    ck.vocab_path = header.at("vocab_path").get<std::string>();
    for (const auto& t : header.at("tensors")) {
      const auto& shape = t.at("shape");
      index.push_back({t.at("name").get<std::string>(),
                       {shape.at(0).get<Eigen::Index>(), shape.at(1).get<Eigen::Index>()}});
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptionError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw CorruptionError(std::string("invalid configuration in checkpoint: ") + e.what());
  }

  std::vector<NamedTensor<Matrix<float>>> tensors;
  if (ck.kind == ModelKind::kTransformer) {
    ck.transformer = TransformerParams<float>::zeros(ck.config, ck.vocab_size);
    tensors = ck.transformer->tensors();
  } else {
    ck.bow = BowParams<float>::zeros(ck.vocab_size);
    tensors = ck.bow->tensors();
  }
  if (tensors.size() != index.size()) throw CorruptionError("checkpoint tensor count does not match its config");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& t = tensors[i];
    if (index[i].first != t.name) {
      throw CorruptionError("checkpoint tensor " + std::to_string(i) + " is " + index[i].first + ", expected " + t.name);
    }
    if (index[i].second.first != t.value->rows() || index[i].second.second != t.value->cols()) {
      throw CorruptionError("checkpoint tensor " + t.name + " has shape " + std::to_string(index[i].second.first) + "x" +
                            std::to_string(index[i].second.second) + ", config implies " +
                            std::to_string(t.value->rows()) + "x" + std::to_string(t.value->cols()));
    }
    const auto bytes = in.take(static_cast<std::size_t>(t.value->size()) * sizeof(float));
    std::memcpy(t.value->data(), bytes.data(), bytes.size());
  }
  if (in.remaining() != 0) throw CorruptionError("checkpoint has trailing bytes");

  if (ck.transformer) ck.transformer->check_shapes(ck.config);
  if (ck.bow) ck.bow->check_shapes(ck.vocab_size);
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw IoError("cannot write checkpoint " + path.string());
  }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

/// Class probabilities for one raw log text.
inline Prediction classify(const Checkpoint& ck, const Vocabulary& vocab, std::string_view text) {
  ck.check_vocabulary(vocab);
  if (ck.kind == ModelKind::kTransformer) return predict(text, ck.pretokenizer, vocab, *ck.transformer, ck.config);
  return bow_predict(text, ck.pretokenizer, vocab, *ck.bow);
}

}  // namespace hnclass
