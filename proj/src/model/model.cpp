#include "fsdm/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fsdm/errors.hpp"
#include "fsdm/numcore/checkpoint.hpp"

namespace fsdm::model {

using corpus::Vocab;
using numcore::AttnVars;
using numcore::GruVars;
using nlohmann::json;

// ---- config -------------------------------------------------------------------

json ModelConfig::to_json() const {
  return {{"embed_dim", embed_dim},
          {"hidden_dim", hidden_dim},
          {"dropout", dropout},
          {"init_scale", init_scale},
          {"max_value_len", max_value_len},
          {"max_response_len", max_response_len},
          {"beam_width", beam_width},
          {"threshold", threshold}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.dropout = j.value("dropout", c.dropout);
  c.init_scale = j.value("init_scale", c.init_scale);
  c.max_value_len = j.value("max_value_len", c.max_value_len);
  c.max_response_len = j.value("max_response_len", c.max_response_len);
  c.beam_width = j.value("beam_width", c.beam_width);
  c.threshold = j.value("threshold", c.threshold);
  if (c.embed_dim == 0 || c.hidden_dim == 0) throw ConfigError("model dimensions must be positive");
  if (!(c.dropout >= 0.0) || c.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  if (c.beam_width == 0) throw ConfigError("beam_width must be at least 1");
  return c;
}

// ---- params -------------------------------------------------------------------

template <typename T>
ModelParams<T>::ModelParams(std::size_t v, std::size_t e, std::size_t h)
    : embedding({v, e}),
      encoder(e, h),
      inf_gru(h + e, h),
      inf_attn(h, h, h),
      inf_gen({v, h}),
      inf_copy({h, h}),
      req_gru(h + e, h),
      req_attn(h, h, h),
      req_out({1, h}),
      slot_gru(h + e + kb::kMatchBins, h),
      slot_attn(h, h, h),
      slot_out({1, h}),
      resp_gru(2 * h + e + kb::kMatchBins, h),
      resp_attn_enc(h, h, h),
      resp_attn_belief(h, h, h),
      resp_gen({v, h}),
      resp_copy({h, h}) {}

namespace {

template <typename T>
void add_gru(std::vector<numcore::NamedTensor<T>>& out, const std::string& prefix, numcore::GruParams<T>& g) {
  out.push_back({prefix + ".input_weights", &g.input_weights});
  out.push_back({prefix + ".hidden_weights", &g.hidden_weights});
  out.push_back({prefix + ".bias", &g.bias});
}

template <typename T>
void add_attn(std::vector<numcore::NamedTensor<T>>& out, const std::string& prefix, numcore::AttnParams<T>& a) {
  out.push_back({prefix + ".query_proj", &a.query_proj});
  out.push_back({prefix + ".key_proj", &a.key_proj});
  out.push_back({prefix + ".score_vector", &a.score_vector});
}

}  // namespace

template <typename T>
std::vector<numcore::NamedTensor<T>> ModelParams<T>::named() {
  std::vector<numcore::NamedTensor<T>> out;
  out.push_back({"embedding", &embedding});
  add_gru(out, "encoder", encoder);
  add_gru(out, "informable.gru", inf_gru);
  add_attn(out, "informable.attn", inf_attn);
  out.push_back({"informable.gen", &inf_gen});
  out.push_back({"informable.copy", &inf_copy});
  add_gru(out, "requestable.gru", req_gru);
  add_attn(out, "requestable.attn", req_attn);
  out.push_back({"requestable.out", &req_out});
  add_gru(out, "response_slot.gru", slot_gru);
  add_attn(out, "response_slot.attn", slot_attn);
  out.push_back({"response_slot.out", &slot_out});
  add_gru(out, "response.gru", resp_gru);
  add_attn(out, "response.attn_encoder", resp_attn_enc);
  add_attn(out, "response.attn_belief", resp_attn_belief);
  out.push_back({"response.gen", &resp_gen});
  out.push_back({"response.copy", &resp_copy});
  return out;
}

// ---- extended vocab -------------------------------------------------------------

std::int32_t ExtendedVocab::add(const std::string& token) {
  if (vocab_->contains(token)) return vocab_->id(token);
  auto it = oov_index_.find(token);
  if (it != oov_index_.end()) return it->second;
  const auto id = static_cast<std::int32_t>(vocab_->size() + oov_.size());
  oov_.push_back(token);
  oov_index_.emplace(token, id);
  return id;
}

std::int32_t ExtendedVocab::lookup(const std::string& token) const {
  if (vocab_->contains(token)) return vocab_->id(token);
  auto it = oov_index_.find(token);
  return it == oov_index_.end() ? Vocab::kUnkId : it->second;
}

const std::string& ExtendedVocab::token(std::int32_t id) const {
  if (id >= 0 && static_cast<std::size_t>(id) < vocab_->size()) return vocab_->token(id);
  const auto k = static_cast<std::size_t>(id) - vocab_->size();
  if (id < 0 || k >= oov_.size()) throw ContractViolation("extended id " + std::to_string(id) + " out of range");
  return oov_[k];
}

// ---- model --------------------------------------------------------------------

template <typename T>
Model<T>::Model(corpus::SlotSchema schema, corpus::Vocab vocab, ModelConfig config)
    : schema_(std::move(schema)),
      vocab_(std::move(vocab)),
      config_(config),
      params_(vocab_.size(), config.embed_dim, config.hidden_dim) {
  schema_.validate();
  for (const auto& slot : schema_.informable) {
    if (!vocab_.contains(corpus::start_symbol(slot)) || !vocab_.contains(corpus::end_marker(slot))) {
      throw ConfigError("vocabulary lacks the markers of slot '" + slot + "'");
    }
  }
  for (const auto& tok : schema_.requestable) {
    if (!vocab_.contains(tok)) throw ConfigError("vocabulary lacks requestable slot '" + tok + "'");
  }
  for (const auto& tok : schema_.response_slots) {
    if (!vocab_.contains(tok)) throw ConfigError("vocabulary lacks response slot '" + tok + "'");
  }
}

template <typename T>
void Model<T>::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& nt : named()) {
    const bool bias = nt.name.size() >= 5 && nt.name.compare(nt.name.size() - 5, 5, ".bias") == 0;
    if (bias) {
      std::fill(nt.tensor->data.begin(), nt.tensor->data.end(), T(0));
    } else {
      numcore::fill_uniform(*nt.tensor, static_cast<T>(config_.init_scale), rng);
    }
  }
}

template <typename T>
json Model<T>::describe() const {
  return {{"schema", schema_}, {"vocab", vocab_.to_json()}, {"config", config_.to_json()}};
}

template <typename T>
Model<T> Model<T>::from_description(const json& j) {
  try {
    return Model(j.at("schema").get<corpus::SlotSchema>(), Vocab::from_json(j.at("vocab")),
                 ModelConfig::from_json(j.at("config")));
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("model description is malformed: ") + e.what());
  }
}

template <typename T>
void Model<T>::save(const std::filesystem::path& dir, const json& extra) {
  json meta = extra.is_object() ? extra : json::object();
  meta["model"] = describe();
  auto nt = named();
  numcore::save_checkpoint<T>(dir, nt, meta);
}

template <typename T>
Model<T> Model<T>::load(const std::filesystem::path& dir) {
  const json manifest = numcore::read_manifest(dir);
  if (!manifest.contains("metadata") || !manifest["metadata"].contains("model")) {
    throw CheckpointError(dir.string() + ": manifest carries no model description");
  }
  Model m = from_description(manifest["metadata"]["model"]);
  auto nt = m.named();
  numcore::load_checkpoint<T>(dir, nt);
  return m;
}

template <typename T>
std::size_t Model<T>::load_word_vectors(const std::filesystem::path& file, std::uint64_t seed) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open word vectors " + file.string());
  const std::size_t e = config_.embed_dim;
  std::vector<char> found(vocab_.size(), 0);
  std::vector<double> mean(e, 0.0);
  std::size_t hits = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok) || !vocab_.contains(tok)) continue;
    std::vector<double> v;
    for (double x; ls >> x;) v.push_back(x);
    if (v.size() != e) {
      throw ConfigError("word vector for '" + tok + "' has " + std::to_string(v.size()) + " values, expected " +
                        std::to_string(e));
    }
    const auto id = static_cast<std::size_t>(vocab_.id(tok));
    if (found[id]) continue;
    found[id] = 1;
    ++hits;
    for (std::size_t k = 0; k < e; ++k) {
      params_.embedding.data[id * e + k] = static_cast<T>(v[k]);
      mean[k] += v[k];
    }
  }
  if (hits == 0) return 0;
  for (auto& m : mean) m /= static_cast<double>(hits);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-0.01, 0.01);
  for (std::size_t id = 0; id < vocab_.size(); ++id) {
    if (found[id]) continue;
    for (std::size_t k = 0; k < e; ++k) params_.embedding.data[id * e + k] = static_cast<T>(mean[k] + noise(rng));
  }
  return hits;
}

// ---- word copy probability ------------------------------------------------------

std::map<std::string, double> word_copy_probability(const corpus::BeliefState& belief,
                                                    const std::vector<double>& requestable_probs,
                                                    const std::vector<double>& response_probs,
                                                    const corpus::SlotSchema& schema) {
  if (requestable_probs.size() != schema.requestable.size() || response_probs.size() != schema.response_slots.size()) {
    throw ShapeError("word_copy_probability: one probability per slot expected");
  }
  std::map<std::string, double> pc;
  for (std::size_t i = 0; i < schema.requestable.size(); ++i) pc[schema.requestable[i]] = requestable_probs[i];
  for (std::size_t i = 0; i < schema.response_slots.size(); ++i) pc[schema.response_slots[i]] = response_probs[i];
  for (const auto& [slot, value] : belief.informable) {
    for (const auto& tok : value) pc[tok] = 1.0;
  }
  return pc;
}

// ---- forward ------------------------------------------------------------------

template <typename T>
struct Forward<T>::Bound {
  Var<T> embedding;
  GruVars<T> encoder, inf_gru, req_gru, slot_gru, resp_gru;
  AttnVars<T> inf_attn, req_attn, slot_attn, resp_attn_enc, resp_attn_belief;
  Var<T> inf_gen, inf_copy, req_out, slot_out, resp_gen, resp_copy;
};

template <typename T>
struct Forward<T>::ResponseState {
  ExtendedVocab ext;
  std::vector<std::int32_t> alignment;
  Var<T> cand_keys;  // [C x H] or invalid
  Var<T> gates;      // [C x 1]
  numcore::AttnMemory<T> belief_memory;
  Var<T> match;
};

template <typename T>
Forward<T>::Forward(Tape<T>& tape, Model<T>& model, bool training, std::mt19937_64* rng)
    : tape_(tape), model_(model), training_(training), rng_(rng), p_(std::make_shared<Bound>()) {
  if (training_ && model_.config().dropout > 0.0 && !rng_) {
    throw ContractViolation("training with dropout needs a random generator");
  }
  auto& mp = model_.params();
  Bound& b = *p_;
  b.embedding = tape.param(mp.embedding);
  b.encoder = numcore::bind(tape, mp.encoder);
  b.inf_gru = numcore::bind(tape, mp.inf_gru);
  b.inf_attn = numcore::bind(tape, mp.inf_attn);
  b.inf_gen = tape.param(mp.inf_gen);
  b.inf_copy = tape.param(mp.inf_copy);
  b.req_gru = numcore::bind(tape, mp.req_gru);
  b.req_attn = numcore::bind(tape, mp.req_attn);
  b.req_out = tape.param(mp.req_out);
  b.slot_gru = numcore::bind(tape, mp.slot_gru);
  b.slot_attn = numcore::bind(tape, mp.slot_attn);
  b.slot_out = tape.param(mp.slot_out);
  b.resp_gru = numcore::bind(tape, mp.resp_gru);
  b.resp_attn_enc = numcore::bind(tape, mp.resp_attn_enc);
  b.resp_attn_belief = numcore::bind(tape, mp.resp_attn_belief);
  b.resp_gen = tape.param(mp.resp_gen);
  b.resp_copy = tape.param(mp.resp_copy);

  const auto& vocab = model_.vocab();
  const auto& schema = model_.schema();
  structural_.assign(vocab.size(), 0);
  for (auto id : {Vocab::kPadId, Vocab::kUnkId, Vocab::kGoId, Vocab::kEosId}) structural_[id] = 1;
  structural_[vocab.id(corpus::kEndBelief)] = 1;
  for (const auto& slot : schema.informable) {
    structural_[vocab.id(corpus::start_symbol(slot))] = 2;
    structural_[vocab.id(corpus::end_marker(slot))] = 3;
  }
}

template <typename T>
Var<T> Forward<T>::drop(Var<T> v) {
  const double rate = model_.config().dropout;
  if (!training_ || rate == 0.0) return v;
  return numcore::dropout(v, rate, true, *rng_);
}

template <typename T>
Var<T> Forward<T>::embed(const std::vector<std::int32_t>& ids) {
  return numcore::gather_rows(p_->embedding, std::span<const std::int32_t>(ids));
}

template <typename T>
Var<T> Forward<T>::constant_row(const std::vector<float>& values) {
  return tape_.constant(std::vector<T>(values.begin(), values.end()), 1, values.size());
}

template <typename T>
bool Forward<T>::banned_in_value(std::int32_t id, std::int32_t own_end) const {
  if (id == own_end) return false;
  return static_cast<std::size_t>(id) < structural_.size() && structural_[static_cast<std::size_t>(id)] != 0;
}

template <typename T>
bool Forward<T>::banned_in_response(std::int32_t id) const {
  if (id == Vocab::kEosId || id == Vocab::kUnkId) return false;
  return static_cast<std::size_t>(id) < structural_.size() && structural_[static_cast<std::size_t>(id)] != 0;
}

template <typename T>
Encoded<T> Forward<T>::encode(const Tokens& prev_response, const corpus::BeliefState& prev_belief,
                              const Tokens& user) {
  Tokens source = prev_response;
  const auto belief = corpus::serialize_belief(prev_belief, model_.schema());
  source.insert(source.end(), belief.begin(), belief.end());
  source.insert(source.end(), user.begin(), user.end());
  return encode_tokens(source);
}

template <typename T>
Encoded<T> Forward<T>::encode_tokens(const Tokens& source) {
  if (source.empty()) throw ContractViolation("encode: empty input sequence");
  const auto& vocab = model_.vocab();
  const std::size_t h_dim = model_.config().hidden_dim;
  Bound& b = *p_;

  Encoded<T> enc{source, {}, {}, {}, {}, {}, {}, ExtendedVocab(&vocab), {}};
  const auto ids = vocab.ids(source);
  Var<T> x = drop(embed(ids));
  Var<T> gx = numcore::add_row(numcore::linear(x, b.encoder.input_weights), b.encoder.bias);
  Var<T> h = tape_.zeros(1, h_dim);
  std::vector<Var<T>> hs;
  hs.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    h = numcore::gru_gates(numcore::row(gx, i), numcore::linear(h, b.encoder.hidden_weights), h);
    hs.push_back(h);
  }
  enc.hiddens = numcore::concat_rows(hs);
  enc.last = hs.back();
  Var<T> keys = drop(enc.hiddens);
  enc.inf_memory = numcore::attn_memory(keys, b.inf_attn);
  enc.req_memory = numcore::attn_memory(keys, b.req_attn);
  enc.resp_memory = numcore::attn_memory(keys, b.resp_attn_enc);
  enc.copy_keys = numcore::tanh(numcore::linear(keys, b.inf_copy));
  for (const auto& tok : source) enc.alignment.push_back(enc.ext.add(tok));
  return enc;
}

namespace {

template <typename T>
std::int32_t masked_argmax(std::span<const T> probs, const std::function<bool(std::int32_t)>& banned) {
  std::int32_t best = -1;
  T best_p = T(-1);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto id = static_cast<std::int32_t>(i);
    if (banned(id)) continue;
    if (probs[i] > best_p) {
      best_p = probs[i];
      best = id;
    }
  }
  return best;
}

}  // namespace

template <typename T>
SlotDecode<T> Forward<T>::decode_informable(std::size_t slot, const Encoded<T>& enc, const Tokens* gold) {
  const auto& schema = model_.schema();
  const auto& vocab = model_.vocab();
  if (slot >= schema.informable.size()) throw ContractViolation("informable slot index out of range");
  const std::string& name = schema.informable[slot];
  const std::int32_t start = vocab.id(corpus::start_symbol(name));
  const std::int32_t end = vocab.id(corpus::end_marker(name));
  Bound& b = *p_;

  auto step = [&](Var<T>& h, Var<T> e) {
    Var<T> c = numcore::attend(h, enc.inf_memory, b.inf_attn).context;
    h = numcore::gru_cell(numcore::concat_cols({c, e}), h, b.inf_gru);
    Var<T> hd = drop(h);
    Var<T> gen = numcore::linear(hd, b.inf_gen);
    Var<T> copy = numcore::linear(enc.copy_keys, hd);
    return numcore::copy_combine(gen, copy, std::span<const std::int32_t>(enc.alignment), enc.ext.size());
  };

  SlotDecode<T> out;
  Var<T> h = enc.last;
  if (gold) {
    std::vector<std::int32_t> inputs{start};
    for (const auto& tok : *gold) inputs.push_back(vocab.id(tok));
    Var<T> e = drop(embed(inputs));
    for (std::size_t j = 0; j <= gold->size(); ++j) {
      out.probs.push_back(step(h, numcore::row(e, j)));
      out.hiddens.push_back(h);
      out.ids.push_back(j < gold->size() ? enc.ext.lookup((*gold)[j]) : end);
    }
    out.tokens = *gold;
    return out;
  }
  std::int32_t prev = start;
  const std::size_t max_len = model_.config().max_value_len;
  auto banned = [&](std::int32_t id) { return banned_in_value(id, end); };
  for (std::size_t j = 0; j <= max_len; ++j) {
    Var<T> probs = step(h, drop(embed({prev})));
    out.probs.push_back(probs);
    out.hiddens.push_back(h);
    std::int32_t id = j == max_len ? end : masked_argmax<T>(probs.value(), banned);
    out.ids.push_back(id);
    if (id == end) break;
    out.tokens.push_back(enc.ext.token(id));
    prev = vocab.id(out.tokens.back());
  }
  return out;
}

template <typename T>
Classified<T> Forward<T>::classify_requestable(const Encoded<T>& enc) {
  const auto& schema = model_.schema();
  Bound& b = *p_;
  const std::size_t k = schema.requestable.size();
  Var<T> c = numcore::attend(enc.last, enc.req_memory, b.req_attn).context;
  Var<T> e = drop(embed(model_.vocab().ids(schema.requestable)));
  Var<T> x = numcore::concat_cols({numcore::repeat_rows(c, k), e});
  Classified<T> out;
  out.hiddens = numcore::gru_cell(x, numcore::repeat_rows(enc.last, k), b.req_gru);
  out.logits = numcore::linear(drop(out.hiddens), b.req_out);
  for (T z : out.logits.value()) out.probs.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(z))));
  return out;
}

template <typename T>
Classified<T> Forward<T>::classify_response_slots(const std::vector<SlotDecode<T>>& informable,
                                                  const Classified<T>& requestable, const kb::MatchIndicator& d) {
  const auto& schema = model_.schema();
  Bound& b = *p_;
  std::vector<Var<T>> pool;
  for (const auto& s : informable) pool.insert(pool.end(), s.hiddens.begin(), s.hiddens.end());
  pool.push_back(requestable.hiddens);
  const auto memory = numcore::attn_memory(numcore::concat_rows(pool), b.slot_attn);
  Var<T> match = constant_row(std::vector<float>(d.bins.begin(), d.bins.end()));
  Var<T> e = drop(embed(model_.vocab().ids(schema.response_slots)));
  std::vector<Var<T>> hs;
  for (std::size_t i = 0; i < schema.response_slots.size(); ++i) {
    Var<T> q = numcore::row(requestable.hiddens, i);
    Var<T> c = numcore::attend(q, memory, b.slot_attn).context;
    hs.push_back(numcore::gru_cell(numcore::concat_cols({c, numcore::row(e, i), match}), q, b.slot_gru));
  }
  Classified<T> out;
  out.hiddens = numcore::concat_rows(hs);
  out.logits = numcore::linear(drop(out.hiddens), b.slot_out);
  for (T z : out.logits.value()) out.probs.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(z))));
  return out;
}

template <typename T>
std::vector<CopyCandidate<T>> Forward<T>::copy_candidates(const std::vector<SlotDecode<T>>& informable,
                                                          const Classified<T>& requestable,
                                                          const Classified<T>& response) {
  const auto& schema = model_.schema();
  std::vector<CopyCandidate<T>> out;
  std::set<std::string> in_belief;
  Var<T> one = tape_.constant({T(1)}, 1, 1);
  for (const auto& s : informable) {
    for (std::size_t j = 0; j < s.tokens.size(); ++j) {
      out.push_back({s.tokens[j], s.hiddens[j], one});
      in_belief.insert(s.tokens[j]);
    }
  }
  Var<T> req_gate = numcore::sigmoid(requestable.logits);
  for (std::size_t i = 0; i < schema.requestable.size(); ++i) {
    const auto& tok = schema.requestable[i];
    out.push_back({tok, numcore::row(requestable.hiddens, i), in_belief.count(tok) ? one : numcore::row(req_gate, i)});
  }
  Var<T> resp_gate = numcore::sigmoid(response.logits);
  for (std::size_t i = 0; i < schema.response_slots.size(); ++i) {
    const auto& tok = schema.response_slots[i];
    out.push_back({tok, numcore::row(response.hiddens, i), in_belief.count(tok) ? one : numcore::row(resp_gate, i)});
  }
  return out;
}

template <typename T>
Var<T> Forward<T>::belief_pool(const std::vector<SlotDecode<T>>& informable, const Classified<T>& requestable,
                               const Classified<T>& response) {
  std::vector<Var<T>> pool;
  for (const auto& s : informable) pool.insert(pool.end(), s.hiddens.begin(), s.hiddens.end());
  pool.push_back(requestable.hiddens);
  pool.push_back(response.hiddens);
  return numcore::concat_rows(pool);
}

template <typename T>
std::pair<Var<T>, Var<T>> Forward<T>::response_step(const Encoded<T>& enc, const ResponseState& st, Var<T> h,
                                                    Var<T> e) {
  Bound& b = *p_;
  Var<T> ce = numcore::attend(h, enc.resp_memory, b.resp_attn_enc).context;
  Var<T> cb = numcore::attend(h, st.belief_memory, b.resp_attn_belief).context;
  h = numcore::gru_cell(numcore::concat_cols({ce, cb, e, st.match}), h, b.resp_gru);
  Var<T> hd = drop(h);
  Var<T> gen = numcore::linear(hd, b.resp_gen);
  Var<T> copy;
  if (st.cand_keys.valid()) copy = numcore::mul(numcore::linear(st.cand_keys, hd), st.gates);
  return {h, numcore::copy_combine(gen, copy, std::span<const std::int32_t>(st.alignment), st.ext.size())};
}

template <typename T>
ResponseDecode<T> Forward<T>::decode_response(const Encoded<T>& enc, Var<T> pool,
                                              const std::vector<CopyCandidate<T>>& candidates,
                                              const kb::MatchIndicator& d, const Tokens* gold) {
  const auto& vocab = model_.vocab();
  Bound& b = *p_;
  ResponseState st{ExtendedVocab(&vocab), {}, {}, {}, {}, {}};
  std::vector<Var<T>> hidden_rows, gate_rows;
  for (const auto& c : candidates) {
    if (c.gate.item() == T(0)) continue;
    st.alignment.push_back(st.ext.add(c.token));
    hidden_rows.push_back(c.hidden);
    gate_rows.push_back(c.gate);
  }
  if (!hidden_rows.empty()) {
    st.cand_keys = numcore::tanh(numcore::linear(numcore::concat_rows(hidden_rows), b.resp_copy));
    st.gates = numcore::concat_rows(gate_rows);
  }
  st.belief_memory = numcore::attn_memory(pool, b.resp_attn_belief);
  st.match = constant_row(std::vector<float>(d.bins.begin(), d.bins.end()));

  ResponseDecode<T> out;
  Var<T> h = enc.last;
  if (gold) {
    std::vector<std::int32_t> inputs{Vocab::kGoId};
    for (const auto& tok : *gold) inputs.push_back(vocab.id(tok));
    Var<T> e = drop(embed(inputs));
    for (std::size_t j = 0; j <= gold->size(); ++j) {
      auto [h2, probs] = response_step(enc, st, h, numcore::row(e, j));
      h = h2;
      out.probs.push_back(probs);
      out.ids.push_back(j < gold->size() ? st.ext.lookup((*gold)[j]) : Vocab::kEosId);
    }
    out.tokens = *gold;
    return out;
  }
  if (model_.config().beam_width > 1) return beam_response(enc, st);
  std::int32_t prev = Vocab::kGoId;
  auto banned = [&](std::int32_t id) { return banned_in_response(id); };
  for (std::size_t j = 0; j < model_.config().max_response_len; ++j) {
    auto [h2, probs] = response_step(enc, st, h, drop(embed({prev})));
    h = h2;
    out.probs.push_back(probs);
    const std::int32_t id = masked_argmax<T>(probs.value(), banned);
    out.ids.push_back(id);
    if (id == Vocab::kEosId) break;
    out.tokens.push_back(st.ext.token(id));
    prev = vocab.id(out.tokens.back());
  }
  return out;
}

template <typename T>
ResponseDecode<T> Forward<T>::beam_response(const Encoded<T>& enc, const ResponseState& st) {
  struct Hyp {
    std::vector<std::int32_t> ids;
    std::vector<Var<T>> probs;
    Var<T> h;
    double score = 0;
    bool done = false;
  };
  const std::size_t width = model_.config().beam_width;
  const auto& vocab = model_.vocab();
  std::vector<Hyp> beam{{{}, {}, enc.last, 0.0, false}};
  for (std::size_t j = 0; j < model_.config().max_response_len; ++j) {
    std::vector<Hyp> next;
    for (const auto& hyp : beam) {
      if (hyp.done) {
        next.push_back(hyp);
        continue;
      }
      const std::int32_t prev = hyp.ids.empty() ? Vocab::kGoId : vocab.id(st.ext.token(hyp.ids.back()));
      auto [h2, probs] = response_step(enc, st, hyp.h, embed({prev}));
      auto pv = probs.value();
      std::vector<std::pair<double, std::int32_t>> ranked;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const auto id = static_cast<std::int32_t>(i);
        if (!banned_in_response(id)) ranked.emplace_back(std::log(std::max<double>(pv[i], 1e-30)), id);
      }
      const std::size_t keep = std::min(width, ranked.size());
      std::partial_sort(ranked.begin(), ranked.begin() + static_cast<long>(keep), ranked.end(),
                        [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
      for (std::size_t r = 0; r < keep; ++r) {
        Hyp n = hyp;
        n.ids.push_back(ranked[r].second);
        n.probs.push_back(probs);
        n.h = h2;
        n.score += ranked[r].first;
        n.done = ranked[r].second == Vocab::kEosId;
        next.push_back(std::move(n));
      }
    }
    std::stable_sort(next.begin(), next.end(), [](const Hyp& a, const Hyp& b) { return a.score > b.score; });
    if (next.size() > width) next.resize(width);
    beam = std::move(next);
    if (std::all_of(beam.begin(), beam.end(), [](const Hyp& hyp) { return hyp.done; })) break;
  }
  const Hyp& best = beam.front();
  ResponseDecode<T> out;
  out.ids = best.ids;
  out.probs = best.probs;
  for (auto id : best.ids) {
    if (id == Vocab::kEosId) break;
    out.tokens.push_back(st.ext.token(id));
  }
  return out;
}

// ---- prediction ---------------------------------------------------------------

template <typename T>
TurnPrediction predict_turn(Model<T>& model, const Tokens& prev_response, const corpus::BeliefState& prev_belief,
                            const Tokens& user, const std::vector<kb::KBTable>& tables) {
  Tape<T> tape(false);
  Forward<T> f(tape, model);
  const auto& schema = model.schema();
  const double threshold = model.config().threshold;
  auto enc = f.encode(prev_response, prev_belief, user);

  TurnPrediction out;
  std::vector<SlotDecode<T>> informable;
  for (std::size_t k = 0; k < schema.informable.size(); ++k) {
    informable.push_back(f.decode_informable(k, enc));
    out.belief.set(schema.informable[k], informable.back().tokens);
  }
  const auto req = f.classify_requestable(enc);
  out.requestable_probs = req.probs;
  for (std::size_t i = 0; i < schema.requestable.size(); ++i) {
    if (req.probs[i] > threshold) out.belief.requestable.insert(schema.requestable[i]);
  }
  out.belief_valid = corpus::is_valid(out.belief, schema);

  out.records = kb::query(tables, out.belief.informable);
  out.match_count = static_cast<long>(out.records.size());
  out.match = kb::encode_match_count(out.match_count);

  const auto slots = f.classify_response_slots(informable, req, out.match);
  out.response_probs = slots.probs;
  for (std::size_t i = 0; i < schema.response_slots.size(); ++i) {
    if (slots.probs[i] > threshold) out.response_slots.push_back(schema.response_slots[i]);
  }
  const auto candidates = f.copy_candidates(informable, req, slots);
  const auto pool = f.belief_pool(informable, req, slots);
  out.response = f.decode_response(enc, pool, candidates, out.match).tokens;
  return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template class Model<float>;
template class Model<double>;
template class Forward<float>;
template class Forward<double>;
template TurnPrediction predict_turn(Model<float>&, const Tokens&, const corpus::BeliefState&, const Tokens&,
                                     const std::vector<kb::KBTable>&);
template TurnPrediction predict_turn(Model<double>&, const Tokens&, const corpus::BeliefState&, const Tokens&,
                                     const std::vector<kb::KBTable>&);

}  // namespace fsdm::model
