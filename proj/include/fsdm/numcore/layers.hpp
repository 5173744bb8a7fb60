#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "fsdm/numcore/ops.hpp"

namespace fsdm::numcore {

// Recurrent weights with gates stacked in (z, r, n) order.
template <typename T>
struct GruParams {
  Tensor<T> input_weights;   // [3H x in]
  Tensor<T> hidden_weights;  // [3H x H]
  Tensor<T> bias;            // [1 x 3H]

  GruParams() = default;
  GruParams(std::size_t input_dim, std::size_t hidden_dim)
      : input_weights({3 * hidden_dim, input_dim}),
        hidden_weights({3 * hidden_dim, hidden_dim}),
        bias({1, 3 * hidden_dim}) {}

  std::size_t input_dim() const { return input_weights.cols(); }
  std::size_t hidden_dim() const { return hidden_weights.cols(); }

  void validate() const {
    const std::size_t h = hidden_dim();
    if (input_weights.rows() != 3 * h || hidden_weights.rows() != 3 * h || bias.size() != 3 * h) {
      throw ShapeError("GRU weights do not stack three gates of width " + std::to_string(h));
    }
  }
};

// Additive (tanh) attention.
template <typename T>
struct AttnParams {
  Tensor<T> query_proj;    // [A x query_dim]
  Tensor<T> key_proj;      // [A x key_dim]
  Tensor<T> score_vector;  // [1 x A]

  AttnParams() = default;
  AttnParams(std::size_t query_dim, std::size_t key_dim, std::size_t attn_dim)
      : query_proj({attn_dim, query_dim}), key_proj({attn_dim, key_dim}), score_vector({1, attn_dim}) {}

  void validate() const {
    const std::size_t a = score_vector.size();
    if (query_proj.rows() != a || key_proj.rows() != a) {
      throw ShapeError("attention projections must map to the score vector width");
    }
  }
};

template <typename T>
struct GruVars {
  Var<T> input_weights, hidden_weights, bias;
};

template <typename T>
struct AttnVars {
  Var<T> query_proj, key_proj, score_vector;
};

template <typename T>
GruVars<T> bind(Tape<T>& tape, GruParams<T>& p) {
  p.validate();
  return {tape.param(p.input_weights), tape.param(p.hidden_weights), tape.param(p.bias)};
}

template <typename T>
AttnVars<T> bind(Tape<T>& tape, AttnParams<T>& p) {
  p.validate();
  return {tape.param(p.query_proj), tape.param(p.key_proj), tape.param(p.score_vector)};
}

// x [r x in], h_prev [r x H]  ->  [r x H]
template <typename T>
Var<T> gru_cell(Var<T> x, Var<T> h_prev, const GruVars<T>& p) {
  if (x.cols() != p.input_weights.cols()) {
    throw ShapeError("gru_cell: input width " + std::to_string(x.cols()) + " but weights expect " +
                     std::to_string(p.input_weights.cols()));
  }
  if (h_prev.cols() != p.hidden_weights.cols() || h_prev.rows() != x.rows()) {
    throw ShapeError("gru_cell: hidden state does not match weights");
  }
  Var<T> gx = add_row(linear(x, p.input_weights), p.bias);
  Var<T> gh = linear(h_prev, p.hidden_weights);
  return gru_gates(gx, gh, h_prev);
}

// Keys with their projection cached, so a decoder attending to the same
// memory at every step projects it once.
template <typename T>
struct AttnMemory {
  Var<T> keys;       // [L x key_dim]
  Var<T> projected;  // [L x A]
};

template <typename T>
AttnMemory<T> attn_memory(Var<T> keys, const AttnVars<T>& p) {
  if (!keys.valid() || keys.rows() == 0) throw EmptySourceError("attention over an empty memory");
  return {keys, linear(keys, p.key_proj)};
}

template <typename T>
struct AttnResult {
  Var<T> context;  // [1 x key_dim]
  Var<T> weights;  // [L x 1]
};

template <typename T>
AttnResult<T> attend(Var<T> query, const AttnMemory<T>& memory, const AttnVars<T>& p) {
  Var<T> q = linear(query, p.query_proj);
  Var<T> w = softmax(additive_scores(memory.projected, q, p.score_vector));
  return {weighted_sum(w, memory.keys), w};
}

template <typename T>
AttnResult<T> attention(Var<T> query, Var<T> keys, const AttnVars<T>& p) {
  return attend(query, attn_memory(keys, p), p);
}

template <typename T>
Var<T> concat_cols(std::initializer_list<Var<T>> parts) {
  return concat_cols(std::span<const Var<T>>(parts.begin(), parts.size()));
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  return concat_cols(std::span<const Var<T>>(parts));
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  return concat_rows(std::span<const Var<T>>(parts));
}

template <typename T>
Var<T> concat_rows(std::initializer_list<Var<T>> parts) {
  return concat_rows(std::span<const Var<T>>(parts.begin(), parts.size()));
}

}  // namespace fsdm::numcore
