#pragma once

// Independent reference implementations used as test oracles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "hnclass/hnclass.hpp"

namespace oracle {

inline bool digit(char c) { return c >= '0' && c <= '9'; }

/// Greedy-k-digits by boundary sets: mark number regions, collect every cut
/// position (region start and end, every k digits, around each new-line),
/// slice, then drop new-lines and empty pieces.
inline std::vector<std::string> greedy(std::string_view text, std::size_t k) {
  const std::size_t n = text.size();
  std::vector<int> region(n, -1);  // region id per character
  int next_region = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!digit(text[i]) || region[i] >= 0) continue;
    std::size_t start = i;
    if (i > 0 && text[i - 1] == '-' && !(i > 1 && digit(text[i - 2]))) start = i - 1;
    std::size_t end = i;
    while (end < n && digit(text[end])) ++end;
    for (std::size_t j = start; j < end; ++j) region[j] = next_region;
    ++next_region;
  }

  std::set<std::size_t> cuts{0, n};
  for (std::size_t i = 0; i < n; ++i) {
    if (text[i] == '\n') {
      cuts.insert(i);
      cuts.insert(i + 1);
    }
    const int prev = i > 0 ? region[i - 1] : -1;
    if (region[i] != prev) cuts.insert(i);
  }
  for (std::size_t i = 0; i < n;) {
    if (region[i] < 0) {
      ++i;
      continue;
    }
    const int r = region[i];
    std::size_t count = 0;
    for (; i < n && region[i] == r; ++i) {
      if (digit(text[i]) && ++count % k == 0) cuts.insert(i + 1);
    }
  }

  std::vector<std::string> out;
  std::size_t prev = 0;
  for (std::size_t c : cuts) {
    if (c == prev) continue;
    std::string piece(text.substr(prev, c - prev));
    piece.erase(std::remove(piece.begin(), piece.end(), '\n'), piece.end());
    if (!piece.empty()) out.push_back(piece);
    prev = c;
  }
  return out;
}

inline std::vector<std::string> whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Relative error with a denominator floor so near-zero gradients are judged
/// by absolute error.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheck {
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
};

/// Central differences over every entry of every named tensor.
template <typename M>
GradCheck check_gradients(const std::vector<hnclass::NamedTensor<M>>& params,
                          const std::vector<hnclass::NamedTensor<M>>& grads, const std::function<double()>& loss,
                          double eps, double floor) {
  GradCheck out;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& p = *params[t].value;
    const auto& g = *grads[t].value;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + eps;
      const double up = loss();
      p.data()[i] = saved - eps;
      const double down = loss();
      p.data()[i] = saved;
      const double err = relative_error(g.data()[i], (up - down) / (2.0 * eps), floor);
      ++out.checked;
      if (err > out.worst) {
        out.worst = err;
        out.worst_name = params[t].name;
      }
    }
  }
  return out;
}

/// Scalar AdamW with decoupled weight decay.
struct ScalarAdamW {
  double lr, b1, b2, eps, wd;
  double m = 0.0, v = 0.0;
  int t = 0;

  double step(double p, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return p - lr * wd * p - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

/// Tiny configuration used by gradient and shape tests.
inline hnclass::ModelConfig tiny_config() {
  hnclass::ModelConfig c;
  c.seq_len = 8;
  c.embed_dim = 8;
  c.num_blocks = 1;
  c.num_heads = 2;
  c.ffn_dim = 16;
  c.seed = 11;
  return c;
}

inline std::vector<hnclass::TokenSequence> random_batch(std::size_t batch, std::size_t seq_len, std::size_t vocab,
                                                        std::uint64_t seed, bool pad_tail = true) {
  hnclass::Rng rng(seed);
  std::vector<hnclass::TokenSequence> out;
  for (std::size_t b = 0; b < batch; ++b) {
    hnclass::TokenSequence s;
    s.true_length = pad_tail ? static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(seq_len)))
                             : seq_len;
    s.ids.assign(seq_len, 0);
    for (std::size_t t = 0; t < s.true_length; ++t) {
      s.ids[t] = static_cast<hnclass::TokenId>(rng.uniform_int(1, static_cast<std::int64_t>(vocab) - 1));
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace oracle
