#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fsdm/corpus/schema.hpp"
#include "fsdm/corpus/vocab.hpp"
#include "fsdm/kb/kb.hpp"
#include "fsdm/numcore/adam.hpp"
#include "fsdm/numcore/layers.hpp"

namespace fsdm::model {

using numcore::Tape;
using numcore::Tensor;
using numcore::Var;
using Tokens = std::vector<std::string>;

struct ModelConfig {
  std::size_t embed_dim = 300;
  std::size_t hidden_dim = 128;
  double dropout = 0.0;
  double init_scale = 0.08;
  std::size_t max_value_len = 8;
  std::size_t max_response_len = 50;
  std::size_t beam_width = 1;  // 1 = greedy
  double threshold = 0.5;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

template <typename T>
struct ModelParams {
  Tensor<T> embedding;  // [V x E], shared by every component

  numcore::GruParams<T> encoder;

  numcore::GruParams<T> inf_gru;  // input [c ; e]
  numcore::AttnParams<T> inf_attn;
  Tensor<T> inf_gen;   // [V x H]
  Tensor<T> inf_copy;  // [H x H]

  numcore::GruParams<T> req_gru;  // input [c ; e]
  numcore::AttnParams<T> req_attn;
  Tensor<T> req_out;  // [1 x H]

  numcore::GruParams<T> slot_gru;  // input [c ; e ; d]
  numcore::AttnParams<T> slot_attn;
  Tensor<T> slot_out;  // [1 x H]

  numcore::GruParams<T> resp_gru;  // input [cE ; cB ; e ; d]
  numcore::AttnParams<T> resp_attn_enc;
  numcore::AttnParams<T> resp_attn_belief;
  Tensor<T> resp_gen;   // [V x H]
  Tensor<T> resp_copy;  // [H x H]

  ModelParams() = default;
  ModelParams(std::size_t vocab, std::size_t embed, std::size_t hidden);

  std::vector<numcore::NamedTensor<T>> named();
};

// Vocabulary plus the out-of-vocabulary surface tokens of one copy source.
class ExtendedVocab {
 public:
  explicit ExtendedVocab(const corpus::Vocab* vocab) : vocab_(vocab) {}

  // Vocab id when known, otherwise an id past the vocab (added on demand).
  std::int32_t add(const std::string& token);
  // Like add() but maps unseen OOV tokens to UNK.
  std::int32_t lookup(const std::string& token) const;
  const std::string& token(std::int32_t id) const;
  std::size_t size() const { return vocab_->size() + oov_.size(); }
  std::size_t oov_count() const { return oov_.size(); }

 private:
  const corpus::Vocab* vocab_;
  std::vector<std::string> oov_;
  std::unordered_map<std::string, std::int32_t> oov_index_;
};

template <typename T>
class Model {
 public:
  Model(corpus::SlotSchema schema, corpus::Vocab vocab, ModelConfig config);

  void init(std::uint64_t seed);

  const corpus::SlotSchema& schema() const { return schema_; }
  const corpus::Vocab& vocab() const { return vocab_; }
  const ModelConfig& config() const { return config_; }
  ModelConfig& config() { return config_; }
  ModelParams<T>& params() { return params_; }
  const ModelParams<T>& params() const { return params_; }
  std::vector<numcore::NamedTensor<T>> named() { return params_.named(); }

  // Schema, vocab and config, enough to rebuild an identically shaped model.
  nlohmann::json describe() const;
  static Model from_description(const nlohmann::json& j);

  void save(const std::filesystem::path& dir, const nlohmann::json& extra = {});
  // Throws CheckpointError when the stored layout differs.
  static Model load(const std::filesystem::path& dir);

  // Rows of known tokens come from a whitespace "token v1 v2 ..." file; the
  // rest are the mean of loaded rows plus U(-0.01, 0.01) noise. Returns the
  // number of tokens found.
  std::size_t load_word_vectors(const std::filesystem::path& file, std::uint64_t seed);

 private:
  corpus::SlotSchema schema_;
  corpus::Vocab vocab_;
  ModelConfig config_;
  ModelParams<T> params_;
};

template <typename T>
struct Encoded {
  Tokens source;
  Var<T> hiddens;  // [L x H]
  Var<T> last;     // [1 x H]
  numcore::AttnMemory<T> inf_memory, req_memory, resp_memory;
  Var<T> copy_keys;  // tanh(W_c^I h_i), [L x H]
  ExtendedVocab ext;
  std::vector<std::int32_t> alignment;  // extended id of each source position
};

template <typename T>
struct SlotDecode {
  Tokens tokens;                   // value tokens, end marker excluded
  std::vector<Var<T>> hiddens;     // one per step, end step included
  std::vector<Var<T>> probs;       // [1 x ext] per step
  std::vector<std::int32_t> ids;   // emitted extended ids per step
};

template <typename T>
struct Classified {
  Var<T> hiddens;  // [K x H], schema order
  Var<T> logits;   // [K x 1]
  std::vector<double> probs;
};

// One copy source of the response decoder: a token with the hidden that
// produced it and its word copy probability.
template <typename T>
struct CopyCandidate {
  std::string token;
  Var<T> hidden;  // [1 x H]
  Var<T> gate;    // [1 x 1]
};

template <typename T>
struct ResponseDecode {
  Tokens tokens;  // EOS excluded
  std::vector<Var<T>> probs;
  std::vector<std::int32_t> ids;
};

// Word copy probabilities by surface token. Informable values take 1, then
// requestable names take y^R, placeholders y^S; everything else is absent
// (probability 0).
std::map<std::string, double> word_copy_probability(const corpus::BeliefState& belief,
                                                    const std::vector<double>& requestable_probs,
                                                    const std::vector<double>& response_probs,
                                                    const corpus::SlotSchema& schema);

// One forward pass over a single turn. Binds every parameter onto `tape`.
template <typename T>
class Forward {
 public:
  Forward(Tape<T>& tape, Model<T>& model, bool training = false, std::mt19937_64* rng = nullptr);

  Tape<T>& tape() { return tape_; }
  Model<T>& model() { return model_; }

  // Contract violation when the concatenated source is empty.
  Encoded<T> encode(const Tokens& prev_response, const corpus::BeliefState& prev_belief, const Tokens& user);
  Encoded<T> encode_tokens(const Tokens& source);

  // Teacher-forced over gold + end marker when `gold` is given, otherwise
  // greedy with structural tokens masked.
  SlotDecode<T> decode_informable(std::size_t slot, const Encoded<T>& enc, const Tokens* gold = nullptr);

  Classified<T> classify_requestable(const Encoded<T>& enc);
  Classified<T> classify_response_slots(const std::vector<SlotDecode<T>>& informable, const Classified<T>& requestable,
                                        const kb::MatchIndicator& d);

  // Informable values (gate 1), requestable names (gate y^R), placeholders
  // (gate y^S). Gates stay on the tape so the response loss reaches the
  // classifiers.
  std::vector<CopyCandidate<T>> copy_candidates(const std::vector<SlotDecode<T>>& informable,
                                                const Classified<T>& requestable, const Classified<T>& response);

  // Attention pool over informable, requestable and response-slot hiddens.
  Var<T> belief_pool(const std::vector<SlotDecode<T>>& informable, const Classified<T>& requestable,
                     const Classified<T>& response);

  // Candidates with a gate of exactly 0 are dropped from the copy source.
  ResponseDecode<T> decode_response(const Encoded<T>& enc, Var<T> pool, const std::vector<CopyCandidate<T>>& candidates,
                                    const kb::MatchIndicator& d, const Tokens* gold = nullptr);

  Var<T> constant_row(const std::vector<float>& values);

 private:
  struct Bound;
  struct ResponseState;

  Var<T> drop(Var<T> v);
  Var<T> embed(const std::vector<std::int32_t>& ids);
  // Advances the response decoder one step from `h` with input embedding
  // `e`; returns the new hidden and the output distribution.
  std::pair<Var<T>, Var<T>> response_step(const Encoded<T>& enc, const ResponseState& st, Var<T> h, Var<T> e);
  ResponseDecode<T> beam_response(const Encoded<T>& enc, const ResponseState& st);
  bool banned_in_value(std::int32_t id, std::int32_t own_end) const;
  bool banned_in_response(std::int32_t id) const;

  Tape<T>& tape_;
  Model<T>& model_;
  bool training_;
  std::mt19937_64* rng_;
  std::shared_ptr<Bound> p_;
  std::vector<char> structural_;  // per vocab id: 1 special, 2 start symbol, 3 end marker
};

struct TurnPrediction {
  corpus::BeliefState belief;
  bool belief_valid = true;
  std::vector<double> requestable_probs;
  std::vector<double> response_probs;
  Tokens response_slots;  // predicted placeholders, schema order
  long match_count = 0;
  kb::MatchIndicator match;
  std::vector<kb::Record> records;
  Tokens response;  // delexicalized
};

// Greedy (or beam, when configured) inference for one turn on a
// non-recording tape.
template <typename T>
TurnPrediction predict_turn(Model<T>& model, const Tokens& prev_response, const corpus::BeliefState& prev_belief,
                            const Tokens& user, const std::vector<kb::KBTable>& tables);

}  // namespace fsdm::model
