#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hnclass/error.hpp"
#include "hnclass/pretokenize.hpp"

namespace hnclass {

using TokenId = std::int32_t;

inline constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                       std::uint64_t hash = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

/// Fixed-length id sequence; ids[true_length..] are padding.
struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t true_length = 0;

  std::size_t size() const noexcept { return ids.size(); }
};

/// Immutable token <-> id table. Ids 0 and 1 are reserved for PAD and UNK.
class Vocabulary {
 public:
  static constexpr TokenId kPadId = 0;
  static constexpr TokenId kUnkId = 1;
  static constexpr std::string_view kPadToken = "<PAD>";
  static constexpr std::string_view kUnkToken = "<UNK>";

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

  /// `tokens` are the non-reserved entries in id order, starting at id 2.
  explicit Vocabulary(std::vector<std::string> tokens) {
    id_to_token_.reserve(tokens.size() + 2);
    id_to_token_.emplace_back(kPadToken);
    id_to_token_.emplace_back(kUnkToken);
    for (auto& t : tokens) {
      const auto id = static_cast<TokenId>(id_to_token_.size());
      if (!token_to_id_.emplace(t, id).second) {
        throw CorruptionError("duplicate vocabulary token at id " + std::to_string(id));
      }
      id_to_token_.push_back(std::move(t));
    }
  }

  std::size_t size() const noexcept { return id_to_token_.size(); }
  TokenId pad_id() const noexcept { return kPadId; }
  TokenId unk_id() const noexcept { return kUnkId; }

  /// Id of `token`, or the UNK id when absent.
  TokenId id(std::string_view token) const {
    const auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? kUnkId : it->second;
  }

  bool contains(std::string_view token) const { return token_to_id_.contains(std::string(token)); }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= size()) {
      throw CorruptionError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(size()));
    }
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  /// One escaped token per line, id order, sentinels first.
  std::string serialize() const {
    std::string out;
    for (const auto& t : id_to_token_) {
      out += escape(t);
      out.push_back('\n');
    }
    return out;
  }

  static Vocabulary deserialize(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
      const std::size_t end = text.find('\n', start);
      if (end == std::string_view::npos) throw CorruptionError("vocabulary file lacks trailing new-line");
      lines.push_back(unescape(text.substr(start, end - start)));
      start = end + 1;
    }
    if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kUnkToken) {
      throw CorruptionError("vocabulary file must start with <PAD> and <UNK> lines");
    }
    return Vocabulary(std::vector<std::string>(std::make_move_iterator(lines.begin() + 2),
                                               std::make_move_iterator(lines.end())));
  }

  std::uint64_t hash() const { return fnv1a64(serialize()); }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary " + path.string());
    out << serialize();
    if (!out) throw IoError("failed writing vocabulary " + path.string());
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocabulary " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str());
  }

  static std::string escape(std::string_view token) {
    std::string out;
    out.reserve(token.size());
    for (char c : token) {
      switch (c) {
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        case '\r': out += "\\r"; break;
        default: out.push_back(c);
      }
    }
    return out;
  }

  static std::string unescape(std::string_view line) {
    std::string out;
    out.reserve(line.size());
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] != '\\') {
        out.push_back(line[i]);
        continue;
      }
      if (++i == line.size()) throw CorruptionError("dangling escape in vocabulary file");
      switch (line[i]) {
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        default: throw CorruptionError(std::string("unknown escape \\") + line[i] + " in vocabulary file");
      }
    }
    return out;
  }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

/// Tokens with at least `min_frequency` occurrences, most frequent first,
/// ties in byte order.
inline Vocabulary build_vocabulary(std::span<const TokenList> corpus, std::size_t min_frequency = 1) {
  if (corpus.empty()) throw ConfigError("cannot build a vocabulary from an empty corpus");
  if (min_frequency == 0) throw ConfigError("min_frequency must be >= 1");

  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& doc : corpus) {
    for (const auto& t : doc) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, count] : counts) {
    if (count >= min_frequency) kept.emplace_back(token, count);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& entry : kept) tokens.push_back(std::move(entry.first));
  return Vocabulary(std::move(tokens));
}

/// Head-truncates or right-pads to exactly `seq_len` ids.
inline TokenSequence encode(std::span<const std::string> tokens, const Vocabulary& vocab, std::size_t seq_len) {
  if (seq_len == 0) throw ConfigError("sequence length must be >= 1");
  TokenSequence seq;
  seq.true_length = std::min(tokens.size(), seq_len);
  seq.ids.assign(seq_len, vocab.pad_id());
  for (std::size_t i = 0; i < seq.true_length; ++i) seq.ids[i] = vocab.id(tokens[i]);
  return seq;
}

inline TokenList decode(const TokenSequence& seq, const Vocabulary& vocab) {
  if (seq.true_length > seq.ids.size()) throw CorruptionError("true_length exceeds sequence length");
  TokenList out;
  out.reserve(seq.true_length);
  for (std::size_t i = 0; i < seq.true_length; ++i) out.push_back(vocab.token(seq.ids[i]));
  return out;
}

}  // namespace hnclass
