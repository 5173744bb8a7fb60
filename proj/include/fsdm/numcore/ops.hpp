#pragma once

// Differentiable ops over 2-D nodes. Rank is always (rows, cols); a vector is
// a single row.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "fsdm/numcore/tape.hpp"

namespace fsdm::numcore {

// x [r x in] times w^T, w [out x in]  ->  [r x out]
template <typename T>
Var<T> linear(Var<T> x, Var<T> w);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
// a [r x n] + b [1 x n] broadcast over rows
template <typename T>
Var<T> add_row(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T factor);
template <typename T>
Var<T> one_minus(Var<T> a);

template <typename T>
Var<T> sigmoid(Var<T> a);
template <typename T>
Var<T> tanh(Var<T> a);

template <typename T>
Var<T> concat_cols(std::span<const Var<T>> parts);
template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts);
template <typename T>
Var<T> slice_cols(Var<T> a, std::size_t start, std::size_t len);
template <typename T>
Var<T> row(Var<T> a, std::size_t index);
template <typename T>
Var<T> repeat_rows(Var<T> a, std::size_t times);
// Embedding lookup: rows of `table` at `ids`.
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const std::int32_t> ids);

// Softmax over every element of `a`, shape preserved.
template <typename T>
Var<T> softmax(Var<T> a);
// sum_i w_i * keys[i, :] for w with keys.rows() elements  ->  [1 x keys.cols()]
template <typename T>
Var<T> weighted_sum(Var<T> w, Var<T> keys);
// score_i = v . tanh(projected_keys[i, :] + projected_query)  ->  [L x 1]
template <typename T>
Var<T> additive_scores(Var<T> projected_keys, Var<T> projected_query, Var<T> v);

template <typename T>
Var<T> sum(Var<T> a);
template <typename T>
Var<T> mean(Var<T> a);

// GRU state update from pre-activations. gx = W x + b and gh = U h, both
// [r x 3H] in (z, r, n) gate order, h is [r x H]:
//   z = s(gx_z + gh_z), r = s(gx_r + gh_r), n = tanh(gx_n + r * gh_n)
//   h' = (1 - z) * n + z * h
template <typename T>
Var<T> gru_gates(Var<T> gx, Var<T> gh, Var<T> h);

// Joint softmax over [gen_scores, copy_scores]. Generation entry j lands on
// output id j; copy entry i lands on alignment[i]. Output is [1 x out_size]
// and sums to one. An invalid (default) `copy_scores` means an empty copy
// source, which reduces to a plain softmax.
template <typename T>
Var<T> copy_combine(Var<T> gen_scores, Var<T> copy_scores,
                    std::span<const std::int32_t> alignment, std::size_t out_size);

inline constexpr double kProbabilityFloor = 1e-10;

// -log(max(p[target], 1e-10)). Sets *clamped when the floor was hit.
template <typename T>
Var<T> nll(Var<T> probs, std::int32_t target, bool* clamped = nullptr);

// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
template <typename T>
Var<T> bce_with_logits(Var<T> logits, std::span<const T> targets);

// Inverted dropout. Identity when !training or rate == 0.
template <typename T>
Var<T> dropout(Var<T> a, double rate, bool training, std::mt19937_64& rng);

}  // namespace fsdm::numcore
