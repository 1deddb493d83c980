#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hnclass/classes.hpp"
#include "hnclass/error.hpp"
#include "hnclass/rng.hpp"

namespace hnclass {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ColVector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

/// B matrices of shape T x C.
template <typename S>
using Tensor3 = std::vector<Matrix<S>>;

enum class Mode { kTrain, kEval };

template <typename S>
struct NamedTensor {
  std::string name;
  S* value;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Row-wise softmax with max subtraction.
template <typename S>
void softmax_rows_inplace(Matrix<S>& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = m.row(i);
    const S mx = row.maxCoeff();
    row = (row.array() - mx).exp().matrix();
    row /= row.sum();
  }
}

template <typename S>
Matrix<S> softmax_rows(Matrix<S> m) {
  softmax_rows_inplace(m);
  return m;
}

/// Mean categorical cross-entropy with a probability floor.
template <typename S>
double cross_entropy(const Matrix<S>& probs, std::span<const ProblemClass> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size() || labels.empty()) {
    throw UsageError("loss needs one label per probability row");
  }
  if (probs.cols() != static_cast<Eigen::Index>(kNumClasses)) throw UsageError("loss expects 11 columns");
  double total = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const double p = static_cast<double>(probs(static_cast<Eigen::Index>(b), class_index(labels[b])));
    total -= std::log(std::max(p, kProbabilityFloor));
  }
  return total / static_cast<double>(labels.size());
}

template <typename S>
std::size_t argmax_row(const Matrix<S>& m, Eigen::Index row) {
  Eigen::Index best = 0;
  m.row(row).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

/// Inverted dropout mask with entries 0 or 1/(1-p); left empty when p == 0.
template <typename S>
void fill_dropout_mask(Matrix<S>& mask, Eigen::Index rows, Eigen::Index cols, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) {
    mask.resize(0, 0);
    return;
  }
  mask.resize(rows, cols);
  const S keep = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < p ? S(0) : keep;
}

template <typename S>
void apply_mask(Matrix<S>& m, const Matrix<S>& mask) {
  if (mask.size() != 0) m.array() *= mask.array();
}

/// Gaussian fill used for weight initialisation.
template <typename S>
void fill_normal(Matrix<S>& m, double stddev, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.normal() * stddev);
}

namespace detail {

/// Per-row layer normalisation; keeps x-hat and 1/sigma for the backward pass.
template <typename S>
Matrix<S> layer_norm(const Matrix<S>& r, const Matrix<S>& gain, const Matrix<S>& bias, double eps,
                     Matrix<S>* xhat_out, ColVector<S>* rstd_out) {
  const ColVector<S> mu = r.rowwise().mean();
  Matrix<S> xhat = r.colwise() - mu;
  const ColVector<S> rstd =
      ((xhat.array().square().rowwise().sum() / static_cast<S>(r.cols())) + static_cast<S>(eps)).rsqrt().matrix();
  xhat.array().colwise() *= rstd.array();
  Matrix<S> out = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
  if (xhat_out != nullptr) *xhat_out = std::move(xhat);
  if (rstd_out != nullptr) *rstd_out = rstd;
  return out;
}

template <typename S>
Matrix<S> layer_norm_backward(const Matrix<S>& dout, const Matrix<S>& xhat, const ColVector<S>& rstd,
                              const Matrix<S>& gain, Matrix<S>& dgain, Matrix<S>& dbias) {
  dgain.row(0) += (dout.array() * xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dout.colwise().sum();
  const Matrix<S> dxhat = dout.array().rowwise() * gain.row(0).array();
  const ColVector<S> mean_d = dxhat.rowwise().mean();
  const ColVector<S> mean_dx = (dxhat.array() * xhat.array()).rowwise().mean().matrix();
  Matrix<S> dr = dxhat.colwise() - mean_d;
  dr.array() -= xhat.array().colwise() * mean_dx.array();
  dr.array().colwise() *= rstd.array();
  return dr;
}

}  // namespace detail
}  // namespace hnclass
