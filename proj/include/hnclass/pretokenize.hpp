#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hnclass/error.hpp"

namespace hnclass {

using TokenList = std::vector<std::string>;

struct PreTokenizerSpec {
  enum class Kind { kGreedyKDigits, kWhitespace };

  Kind kind = Kind::kGreedyKDigits;
  std::size_t k = 3;  // digits per chunk; ignored for kWhitespace

  static PreTokenizerSpec greedy(std::size_t k) { return {Kind::kGreedyKDigits, k}; }
  static PreTokenizerSpec whitespace() { return {Kind::kWhitespace, 0}; }

  void validate() const {
    if (kind == Kind::kGreedyKDigits && k == 0) {
      throw ConfigError("greedy-k-digits pre-tokenizer requires k >= 1");
    }
  }

  /// "greedy-3" or "whitespace".
  std::string name() const {
    return kind == Kind::kWhitespace ? std::string("whitespace") : "greedy-" + std::to_string(k);
  }

  /// Inverse of name(); also accepts "ws".
  static std::optional<PreTokenizerSpec> parse(std::string_view text) {
    if (text == "whitespace" || text == "ws") return whitespace();
    constexpr std::string_view prefix = "greedy-";
    if (text.substr(0, prefix.size()) != prefix || text.size() == prefix.size()) return std::nullopt;
    std::size_t k = 0;
    for (char c : text.substr(prefix.size())) {
      if (c < '0' || c > '9') return std::nullopt;
      k = k * 10 + static_cast<std::size_t>(c - '0');
      if (k > 1'000'000) return std::nullopt;
    }
    if (k == 0) return std::nullopt;
    return greedy(k);
  }

  friend bool operator==(const PreTokenizerSpec& a, const PreTokenizerSpec& b) {
    return a.kind == b.kind && (a.kind == Kind::kWhitespace || a.k == b.k);
  }
};

namespace detail {
constexpr bool is_ascii_digit(char c) noexcept { return c >= '0' && c <= '9'; }
}  // namespace detail

/// Greedy-k-digits: cut around every number region and after every k digits
/// inside it, dropping new-line characters.
///
/// A number region is a maximal run of ASCII digits, optionally preceded by a
/// '-' that is not itself preceded by a digit. The '-' rides on the first
/// chunk without using up a digit slot. Text between regions and new-lines is
/// kept whole.
inline TokenList greedy_k_digits(std::string_view text, std::size_t k) {
  if (k == 0) throw ConfigError("greedy-k-digits pre-tokenizer requires k >= 1");

  TokenList tokens;
  std::string pending;
  const auto flush = [&] {
    if (!pending.empty()) {
      tokens.push_back(std::move(pending));
      pending.clear();
    }
  };

  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const char c = text[i];
    if (c == '\n') {
      flush();
      ++i;
      continue;
    }
    const bool signed_start = c == '-' && i + 1 < n && detail::is_ascii_digit(text[i + 1]) &&
                              !(i > 0 && detail::is_ascii_digit(text[i - 1]));
    if (!signed_start && !detail::is_ascii_digit(c)) {
      pending.push_back(c);
      ++i;
      continue;
    }

    flush();
    std::string chunk;
    if (signed_start) {
      chunk.push_back('-');
      ++i;
    }
    std::size_t digits = 0;
    while (i < n && detail::is_ascii_digit(text[i])) {
      chunk.push_back(text[i++]);
      if (++digits == k) {
        tokens.push_back(std::move(chunk));
        chunk.clear();
        digits = 0;
      }
    }
    if (!chunk.empty()) tokens.push_back(std::move(chunk));
  }
  flush();
  return tokens;
}

/// Maximal runs of characters other than space, tab, '\n' and '\r'.
inline TokenList whitespace_pretokenize(std::string_view text) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  TokenList tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    const std::size_t start = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    if (i > start) tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

inline TokenList pretokenize(std::string_view text, const PreTokenizerSpec& spec) {
  spec.validate();
  return spec.kind == PreTokenizerSpec::Kind::kWhitespace ? whitespace_pretokenize(text)
                                                          : greedy_k_digits(text, spec.k);
}

}  // namespace hnclass
