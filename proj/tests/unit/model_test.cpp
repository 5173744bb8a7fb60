#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "fsdm/corpus/schema.hpp"
#include "fsdm/errors.hpp"
#include "fsdm/model/model.hpp"
#include "fsdm/numcore/checkpoint.hpp"
#include "support/generators.hpp"
#include "support/micro.hpp"
#include "support/scalar_oracle.hpp"

namespace fsdm::model {
namespace {

namespace o = fsdm::testing::oracle;
using corpus::BeliefState;
using corpus::Vocab;
using fsdm::testing::micro_example;
using fsdm::testing::micro_model;
using fsdm::testing::micro_schema;
using numcore::Tape;

std::vector<double> values(const Var<double>& v) { return {v.value().begin(), v.value().end()}; }

std::vector<o::Vec> rows(const Var<double>& v) {
  std::vector<o::Vec> out;
  auto val = v.value();
  for (std::size_t r = 0; r < v.rows(); ++r) {
    out.emplace_back(val.begin() + static_cast<long>(r * v.cols()), val.begin() + static_cast<long>((r + 1) * v.cols()));
  }
  return out;
}

void expect_near_vec(const o::Vec& a, const o::Vec& b, double tol = 1e-12) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "index " << i;
}

void expect_distribution(const Var<float>& p) {
  double s = 0;
  for (float x : p.value()) {
    ASSERT_GE(x, 0.0f);
    s += x;
  }
  EXPECT_NEAR(s, 1.0, 1e-5);
}

void expect_distribution(const Var<double>& p) {
  double s = 0;
  for (double x : p.value()) {
    ASSERT_GE(x, 0.0);
    s += x;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}

o::Vec embedding(Model<double>& m, const std::string& tok) { return o::row(m.params().embedding, m.vocab().id(tok)); }

// Full pipeline pieces for the micro example, gold-forced.
struct Trace {
  Encoded<double> enc;
  std::vector<SlotDecode<double>> inf;
  Classified<double> req, slots;
};

Trace forced_trace(Forward<double>& f, const corpus::TurnExample& ex, const kb::MatchIndicator& d) {
  Trace t{f.encode(ex.prev_response, ex.prev_belief, ex.user_utterance), {}, {}, {}};
  const auto& schema = f.model().schema();
  for (std::size_t k = 0; k < schema.informable.size(); ++k) {
    const auto gold = ex.gold_belief.value(schema.informable[k]);
    t.inf.push_back(f.decode_informable(k, t.enc, &gold));
  }
  t.req = f.classify_requestable(t.enc);
  t.slots = f.classify_response_slots(t.inf, t.req, d);
  return t;
}

TEST(ModelConfig, JsonRoundTripAndValidation) {
  ModelConfig c;
  c.hidden_dim = 17;
  c.dropout = 0.25;
  c.beam_width = 3;
  const auto back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.hidden_dim, 17u);
  EXPECT_EQ(back.dropout, 0.25);
  EXPECT_EQ(back.beam_width, 3u);
  EXPECT_THROW(ModelConfig::from_json({{"dropout", 1.0}}), ConfigError);
  EXPECT_THROW(ModelConfig::from_json({{"hidden_dim", 0}}), ConfigError);
}

TEST(Model, RejectsVocabularyWithoutSchemaTokens) {
  const auto other = corpus::SlotSchema::make({"food", "price"}, {"food"});
  EXPECT_THROW(Model<double>(other, fsdm::testing::micro_vocab(), ModelConfig{}), ConfigError);
}

TEST(Model, InitZeroesGruBiasesOnly) {
  auto m = micro_model<double>(3, 8, 6, 0.08);
  for (const auto& nt : m.named()) {
    const bool bias = nt.name.ends_with(".bias");
    for (double x : nt.tensor->data) {
      if (bias) {
        EXPECT_EQ(x, 0.0) << nt.name;
      } else {
        EXPECT_LE(std::abs(x), 0.08) << nt.name;
      }
    }
  }
}

TEST(ExtendedVocab, AssignsIdsPastVocabulary) {
  const auto vocab = fsdm::testing::micro_vocab();
  ExtendedVocab ext(&vocab);
  EXPECT_EQ(ext.add("thai"), vocab.id("thai"));
  const auto x = ext.add("xanadu");
  EXPECT_EQ(x, static_cast<std::int32_t>(vocab.size()));
  EXPECT_EQ(ext.add("xanadu"), x);
  EXPECT_EQ(ext.lookup("xanadu"), x);
  EXPECT_EQ(ext.lookup("zzz"), Vocab::kUnkId);
  EXPECT_EQ(ext.token(x), "xanadu");
  EXPECT_EQ(ext.size(), vocab.size() + 1);
  EXPECT_THROW(ext.token(x + 1), ContractViolation);
}

TEST(Encode, ShapesAndLast) {
  auto m = micro_model<double>(1);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  const auto ex = micro_example();
  auto enc = f.encode(ex.prev_response, ex.prev_belief, ex.user_utterance);
  const auto belief = corpus::serialize_belief(ex.prev_belief, m.schema());
  const std::size_t l = ex.prev_response.size() + belief.size() + ex.user_utterance.size();
  EXPECT_EQ(enc.source.size(), l);
  EXPECT_EQ(enc.hiddens.rows(), l);
  EXPECT_EQ(enc.hiddens.cols(), 8u);
  EXPECT_EQ(enc.alignment.size(), l);
  EXPECT_EQ(rows(enc.hiddens).back(), values(enc.last));
  EXPECT_EQ(enc.ext.oov_count(), 1u);
}

TEST(Encode, EmptySourceIsContractViolation) {
  auto m = micro_model<double>(1);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  EXPECT_THROW(f.encode_tokens({}), ContractViolation);
  EXPECT_NO_THROW(f.encode({}, BeliefState{}, {}));
}

TEST(Encode, ZeroWeightsGiveZeroHiddens) {
  auto m = micro_model<double>(1);
  for (auto* t : {&m.params().encoder.input_weights, &m.params().encoder.hidden_weights, &m.params().encoder.bias}) {
    std::fill(t->data.begin(), t->data.end(), 0.0);
  }
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto enc = f.encode_tokens({"i", "want", "thai"});
  for (double x : enc.hiddens.value()) EXPECT_EQ(x, 0.0);
}

TEST(Encode, MatchesScalarGruTrace) {
  auto m = micro_model<double>(7);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  const std::vector<std::string> src{"i", "want", "xanadu"};
  auto enc = f.encode_tokens(src);
  o::Vec h(8, 0.0);
  const auto got = rows(enc.hiddens);
  for (std::size_t i = 0; i < src.size(); ++i) {
    h = o::gru(m.params().encoder, embedding(m, src[i]), h);
    expect_near_vec(got[i], h);
  }
}

TEST(Informable, FirstStepMatchesScalarEnumeration) {
  auto m = micro_model<double>(11);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto enc = f.encode_tokens({"cheap", "xanadu"});
  const Tokens gold{"cheap"};
  auto dec = f.decode_informable(1, enc, &gold);
  ASSERT_EQ(dec.probs.size(), 2u);
  EXPECT_EQ(dec.ids.back(), m.vocab().id("end_area"));

  const auto& p = m.params();
  const auto keys = rows(enc.hiddens);
  const o::Vec h0 = values(enc.last);
  const o::Vec c = o::attend(p.inf_attn, h0, keys);
  const o::Vec h1 = o::gru(p.inf_gru, o::cat({c, embedding(m, "<go_area>")}), h0);
  const o::Vec gen = o::matvec(p.inf_gen, h1);
  o::Vec copy;
  for (const auto& k : keys) {
    o::Vec proj = o::matvec(p.inf_copy, k);
    for (auto& x : proj) x = std::tanh(x);
    copy.push_back(o::dot(proj, h1));
  }
  const auto expected = o::joint(gen, copy, {m.vocab().id("cheap"), static_cast<std::int32_t>(m.vocab().size())},
                                 m.vocab().size() + 1);
  expect_near_vec(values(dec.probs[0]), expected);
  expect_near_vec(values(dec.hiddens[0]), h1);
}

TEST(Informable, TeacherForcedStepsAreDistributions) {
  auto m = micro_model<double>(2);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto enc = f.encode_tokens({"i", "want", "cheap"});
  const Tokens gold{"cheap"};
  auto dec = f.decode_informable(0, enc, &gold);
  ASSERT_EQ(dec.probs.size(), 2u);
  for (const auto& p : dec.probs) expect_distribution(p);
}

TEST(Informable, OovSourceTokenIsReachable) {
  auto m = micro_model<double>(5);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto enc = f.encode_tokens({"i", "want", "xanadu"});
  const auto x = enc.ext.lookup("xanadu");
  ASSERT_GE(x, static_cast<std::int32_t>(m.vocab().size()));
  auto dec = f.decode_informable(0, enc);
  ASSERT_FALSE(dec.probs.empty());
  EXPECT_GT(dec.probs[0].value()[static_cast<std::size_t>(x)], 0.0);
}

TEST(Informable, GreedyRespectsLengthCapAndMask) {
  auto m = micro_model<double>(9, 8, 6, 2.0);
  m.config().max_value_len = 3;
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto enc = f.encode_tokens({"i", "want", "thai", "end_food", "<go_area>"});
  for (std::size_t k = 0; k < 2; ++k) {
    auto dec = f.decode_informable(k, enc);
    EXPECT_LE(dec.tokens.size(), 3u);
    EXPECT_EQ(dec.ids.back(), m.vocab().id(corpus::end_marker(m.schema().informable[k])));
    for (const auto& t : dec.tokens) {
      EXPECT_NE(t, corpus::kEndBelief);
      EXPECT_FALSE(t.starts_with("end_")) << t;
      EXPECT_FALSE(t.starts_with("<")) << t;
    }
  }
}

TEST(Requestable, ZeroOutputWeightsGiveHalf) {
  auto m = micro_model<double>(4);
  std::fill(m.params().req_out.data.begin(), m.params().req_out.data.end(), 0.0);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto enc = f.encode_tokens({"i", "want", "thai"});
  for (double p : f.classify_requestable(enc).probs) EXPECT_EQ(p, 0.5);
}

TEST(Requestable, IdenticalEmbeddingsGiveIdenticalProbabilities) {
  auto m = micro_model<double>(4);
  auto& e = m.params().embedding;
  const auto a = m.vocab().id("food"), b = m.vocab().id("area");
  std::copy_n(e.data.begin() + a * e.cols(), e.cols(), e.data.begin() + b * e.cols());
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto enc = f.encode_tokens({"i", "want", "thai"});
  const auto r = f.classify_requestable(enc);
  EXPECT_EQ(r.probs[0], r.probs[1]);
}

TEST(Requestable, MatchesScalarOracle) {
  auto m = micro_model<double>(12);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto enc = f.encode_tokens({"what", "is", "the", "area"});
  const auto r = f.classify_requestable(enc);
  const auto& p = m.params();
  const o::Vec last = values(enc.last);
  const o::Vec c = o::attend(p.req_attn, last, rows(enc.hiddens));
  const auto hs = rows(r.hiddens);
  for (std::size_t i = 0; i < m.schema().requestable.size(); ++i) {
    const o::Vec h = o::gru(p.req_gru, o::cat({c, embedding(m, m.schema().requestable[i])}), last);
    expect_near_vec(hs[i], h);
    EXPECT_NEAR(r.probs[i], o::sigmoid(o::dot(o::row(p.req_out, 0), h)), 1e-12);
  }
}

TEST(ResponseSlot, ZeroOutputWeightsGiveHalf) {
  auto m = micro_model<double>(4);
  std::fill(m.params().slot_out.data.begin(), m.params().slot_out.data.end(), 0.0);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto t = forced_trace(f, micro_example(), kb::encode_match_count(1));
  for (double p : t.slots.probs) EXPECT_EQ(p, 0.5);
}

TEST(ResponseSlot, MatchesScalarOracle) {
  auto m = micro_model<double>(13);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  const auto d = kb::encode_match_count(3);
  auto t = forced_trace(f, micro_example(), d);
  const auto& p = m.params();
  std::vector<o::Vec> pool;
  for (const auto& s : t.inf) {
    for (const auto& h : s.hiddens) pool.push_back(values(h));
  }
  for (const auto& h : rows(t.req.hiddens)) pool.push_back(h);
  const o::Vec dv(d.bins.begin(), d.bins.end());
  const auto req_h = rows(t.req.hiddens);
  for (std::size_t i = 0; i < m.schema().response_slots.size(); ++i) {
    const o::Vec c = o::attend(p.slot_attn, req_h[i], pool);
    const o::Vec h = o::gru(p.slot_gru, o::cat({c, embedding(m, m.schema().response_slots[i]), dv}), req_h[i]);
    EXPECT_NEAR(t.slots.probs[i], o::sigmoid(o::dot(o::row(p.slot_out, 0), h)), 1e-12);
  }
}

TEST(ResponseSlot, PoolPermutationLeavesProbabilitiesUnchanged) {
  auto m = micro_model<double>(14);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  const auto d = kb::encode_match_count(0);
  auto t = forced_trace(f, micro_example(), d);
  std::vector<SlotDecode<double>> reversed(t.inf.rbegin(), t.inf.rend());
  for (auto& s : reversed) std::reverse(s.hiddens.begin(), s.hiddens.end());
  const auto again = f.classify_response_slots(reversed, t.req, d);
  for (std::size_t i = 0; i < t.slots.probs.size(); ++i) EXPECT_NEAR(again.probs[i], t.slots.probs[i], 1e-14);
}

TEST(WordCopyProbability, FollowsTheThreeCases) {
  const auto schema = corpus::camrest_schema();
  BeliefState b;
  b.set("price", {"cheap"});
  std::vector<double> req(schema.requestable.size(), 0.2), resp(schema.response_slots.size(), 0.3);
  resp[0] = 0.9;
  const auto pc = word_copy_probability(b, req, resp, schema);
  EXPECT_EQ(pc.at("cheap"), 1.0);
  EXPECT_EQ(pc.at(schema.response_slots[0]), 0.9);
  EXPECT_EQ(pc.at("phone"), 0.2);
  EXPECT_EQ(pc.count("restaurant"), 0u);
}

TEST(WordCopyProbability, BeliefValueWinsOverSlotName) {
  const auto schema = corpus::camrest_schema();
  BeliefState b;
  b.set("food", {"area"});
  std::vector<double> req(schema.requestable.size(), 0.2), resp(schema.response_slots.size(), 0.3);
  EXPECT_EQ(word_copy_probability(b, req, resp, schema).at("area"), 1.0);
}

TEST(WordCopyProbability, ChangingOneRequestableTouchesOnlyItsToken) {
  const auto schema = corpus::camrest_schema();
  fsdm::testing::Gen g(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto b = g.belief(schema);
    std::vector<double> req(schema.requestable.size()), resp(schema.response_slots.size());
    for (auto& x : req) x = g.uniform(0.01, 0.99);
    for (auto& x : resp) x = g.uniform(0.01, 0.99);
    const auto before = word_copy_probability(b, req, resp, schema);
    const auto k = g.below(req.size());
    req[k] = 1.0 - req[k];
    const auto after = word_copy_probability(b, req, resp, schema);
    ASSERT_EQ(before.size(), after.size());
    for (const auto& [tok, p] : before) {
      if (tok != schema.requestable[k]) EXPECT_EQ(after.at(tok), p) << tok;
    }
  }
}

TEST(WordCopyProbability, RejectsWrongLengths) {
  const auto schema = corpus::camrest_schema();
  EXPECT_THROW(word_copy_probability(BeliefState{}, {0.5}, {}, schema), ShapeError);
}

TEST(CopyCandidates, GatesFollowBeliefAndClassifiers) {
  auto m = micro_model<double>(15);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto t = forced_trace(f, micro_example(), kb::encode_match_count(2));
  const auto cands = f.copy_candidates(t.inf, t.req, t.slots);
  // food:[thai], area:[north, xanadu], then 2 requestable names, 2 placeholders
  ASSERT_EQ(cands.size(), 7u);
  EXPECT_EQ(cands[0].token, "thai");
  EXPECT_EQ(cands[2].token, "xanadu");
  for (int i = 0; i < 3; ++i) EXPECT_EQ(cands[i].gate.item(), 1.0);
  EXPECT_EQ(cands[3].token, "food");
  EXPECT_NEAR(cands[3].gate.item(), t.req.probs[0], 1e-15);
  EXPECT_EQ(cands[6].token, "area_SLOT");
  EXPECT_NEAR(cands[6].gate.item(), t.slots.probs[1], 1e-15);
  EXPECT_EQ(values(cands[2].hidden), values(t.inf[1].hiddens[1]));
}

TEST(Response, AllZeroCopyGatesGivePlainSoftmax) {
  auto m = micro_model<double>(16);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  const auto d = kb::encode_match_count(1);
  auto t = forced_trace(f, micro_example(), d);
  auto cands = f.copy_candidates(t.inf, t.req, t.slots);
  for (auto& c : cands) c.gate = tape.constant({0.0}, 1, 1);
  const auto pool = f.belief_pool(t.inf, t.req, t.slots);
  const Tokens gold{"the"};
  auto r = f.decode_response(t.enc, pool, cands, d, &gold);

  const auto& p = m.params();
  const o::Vec h0 = values(t.enc.last);
  const o::Vec ce = o::attend(p.resp_attn_enc, h0, rows(t.enc.hiddens));
  const o::Vec cb = o::attend(p.resp_attn_belief, h0, rows(pool));
  const o::Vec dv(d.bins.begin(), d.bins.end());
  const o::Vec h1 = o::gru(p.resp_gru, o::cat({ce, cb, embedding(m, "<go>"), dv}), h0);
  expect_near_vec(values(r.probs[0]), o::softmax(o::matvec(p.resp_gen, h1)));
}

TEST(Response, FirstStepMatchesScalarEnumeration) {
  auto m = micro_model<double>(17);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  const auto d = kb::encode_match_count(4);
  auto t = forced_trace(f, micro_example(), d);
  const auto cands = f.copy_candidates(t.inf, t.req, t.slots);
  const auto pool = f.belief_pool(t.inf, t.req, t.slots);
  const Tokens gold{"the", "xanadu"};
  auto r = f.decode_response(t.enc, pool, cands, d, &gold);
  ASSERT_EQ(r.probs.size(), 3u);

  const auto& p = m.params();
  const o::Vec h0 = values(t.enc.last);
  const o::Vec ce = o::attend(p.resp_attn_enc, h0, rows(t.enc.hiddens));
  const o::Vec cb = o::attend(p.resp_attn_belief, h0, rows(pool));
  const o::Vec dv(d.bins.begin(), d.bins.end());
  const o::Vec h1 = o::gru(p.resp_gru, o::cat({ce, cb, embedding(m, "<go>"), dv}), h0);
  o::Vec copy;
  std::vector<std::int32_t> align;
  const auto xanadu = static_cast<std::int32_t>(m.vocab().size());
  for (const auto& c : cands) {
    o::Vec k = o::matvec(p.resp_copy, values(c.hidden));
    for (auto& x : k) x = std::tanh(x);
    copy.push_back(c.gate.item() * o::dot(k, h1));
    align.push_back(m.vocab().contains(c.token) ? m.vocab().id(c.token) : xanadu);
  }
  const auto expected = o::joint(o::matvec(p.resp_gen, h1), copy, align, m.vocab().size() + 1);
  expect_near_vec(values(r.probs[0]), expected);
  EXPECT_EQ(r.ids[1], xanadu);
  EXPECT_EQ(r.ids[2], Vocab::kEosId);
  for (const auto& q : r.probs) expect_distribution(q);
}

TEST(Response, GreedyStopsAtLengthCap) {
  auto m = micro_model<double>(18);
  m.config().max_response_len = 4;
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  const auto d = kb::encode_match_count(0);
  auto t = forced_trace(f, micro_example(), d);
  auto r = f.decode_response(t.enc, f.belief_pool(t.inf, t.req, t.slots), f.copy_candidates(t.inf, t.req, t.slots), d);
  EXPECT_LE(r.probs.size(), 4u);
  EXPECT_LE(r.tokens.size(), 4u);
}

TEST(Response, BeamWidthOneEqualsGreedyAndBeamIsValid) {
  auto m = micro_model<double>(19);
  const auto ex = micro_example();
  std::vector<kb::KBTable> tables;
  const auto greedy = predict_turn(m, ex.prev_response, ex.prev_belief, ex.user_utterance, tables);
  m.config().beam_width = 3;
  const auto beam = predict_turn(m, ex.prev_response, ex.prev_belief, ex.user_utterance, tables);
  EXPECT_EQ(beam.belief, greedy.belief);
  EXPECT_LE(beam.response.size(), m.config().max_response_len);
  for (const auto& tok : beam.response) EXPECT_NE(tok, "<eos>");
}

TEST(Forward, SlotOrderInvariance) {
  auto m = micro_model<double>(20);
  Tape<double> tape(false);
  Forward<double> f(tape, m);
  auto enc = f.encode_tokens({"i", "want", "thai", "north"});
  auto a0 = f.decode_informable(0, enc);
  auto a1 = f.decode_informable(1, enc);
  auto b1 = f.decode_informable(1, enc);
  auto b0 = f.decode_informable(0, enc);
  EXPECT_EQ(a0.ids, b0.ids);
  EXPECT_EQ(a1.ids, b1.ids);
  for (std::size_t j = 0; j < a0.probs.size(); ++j) EXPECT_EQ(values(a0.probs[j]), values(b0.probs[j]));

}

TEST(Forward, TeacherForcedPassIsBitwiseReproducible) {
  auto m = micro_model<float>(21);
  m.config().dropout = 0.3;
  const auto ex = micro_example();
  auto run = [&] {
    Tape<float> tape;
    std::mt19937_64 rng(99);
    Forward<float> f(tape, m, true, &rng);
    auto enc = f.encode(ex.prev_response, ex.prev_belief, ex.user_utterance);
    const auto gold = ex.gold_belief.value("area");
    auto dec = f.decode_informable(1, enc, &gold);
    std::vector<float> out;
    for (const auto& p : dec.probs) out.insert(out.end(), p.value().begin(), p.value().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Forward, TrainingWithDropoutNeedsRng) {
  auto m = micro_model<float>(1);
  m.config().dropout = 0.5;
  Tape<float> tape;
  EXPECT_THROW(Forward<float>(tape, m, true, nullptr), ContractViolation);
}

TEST(PredictTurn, RandomModelsYieldValidBeliefs) {
  fsdm::testing::Gen g(31);
  const auto schema = micro_schema();
  for (int trial = 0; trial < 50; ++trial) {
    auto m = micro_model<float>(g.rng()(), 8, 6, g.uniform(0.01, 3.0));
    const auto prev = g.belief(schema);
    const auto user = g.words(1, 6);
    const auto p = predict_turn(m, g.words(0, 5), prev, user, {});
    EXPECT_TRUE(p.belief_valid);
    EXPECT_TRUE(corpus::is_valid(p.belief, schema));
    const auto parsed = corpus::parse_belief(corpus::serialize_belief(p.belief, schema), schema);
    EXPECT_TRUE(parsed.valid);
    EXPECT_EQ(parsed.belief, p.belief);
    EXPECT_EQ(p.requestable_probs.size(), 2u);
    EXPECT_EQ(p.response_probs.size(), 2u);
  }
}

TEST(PredictTurn, QueriesTheKnowledgeBase) {
  auto m = micro_model<float>(3);
  kb::KBTable t{"r", {"food", "area", "name"}, {}};
  t.add({{"food", "thai"}, {"area", "north"}, {"name", "a"}});
  t.add({{"food", "thai"}, {"area", "south"}, {"name", "b"}});
  const auto p = predict_turn(m, {}, BeliefState{}, {"i", "want", "thai"}, {t});
  EXPECT_EQ(static_cast<std::size_t>(p.match_count), kb::query({t}, p.belief.informable).size());
  EXPECT_EQ(p.match.index(), kb::encode_match_count(p.match_count).index());
}

TEST(Checkpoint, SaveLoadRoundTrip) {
  auto m = micro_model<float>(8);
  const auto dir = std::filesystem::temp_directory_path() / "fsdm_model_ckpt_test";
  std::filesystem::remove_all(dir);
  m.save(dir, {{"note", "x"}});
  auto back = Model<float>::load(dir);
  EXPECT_EQ(back.vocab(), m.vocab());
  EXPECT_EQ(back.schema(), m.schema());
  EXPECT_EQ(back.config().hidden_dim, 8u);
  auto a = m.named(), b = back.named();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].tensor->data, b[i].tensor->data) << a[i].name;
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ShapeMismatchIsCheckpointError) {
  auto m = micro_model<float>(8);
  const auto dir = std::filesystem::temp_directory_path() / "fsdm_model_ckpt_mismatch";
  std::filesystem::remove_all(dir);
  m.save(dir);
  auto manifest = numcore::read_manifest(dir);
  manifest["metadata"]["model"]["config"]["hidden_dim"] = 9;
  std::ofstream(dir / numcore::kManifestFile) << manifest.dump();
  EXPECT_THROW(Model<float>::load(dir), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST(WordVectors, LoadsKnownRowsAndAveragesTheRest) {
  auto m = micro_model<double>(8, 8, 3);
  const auto file = std::filesystem::temp_directory_path() / "fsdm_vectors.txt";
  std::ofstream(file) << "thai 1 2 3\nnorth 3 2 1\nzzz 9 9 9\n";
  EXPECT_EQ(m.load_word_vectors(file, 1), 2u);
  const auto& e = m.params().embedding;
  EXPECT_EQ(o::row(e, m.vocab().id("thai")), (o::Vec{1, 2, 3}));
  for (double x : o::row(e, m.vocab().id("i"))) EXPECT_NEAR(x, 2.0, 0.01 + 1e-12);
  std::ofstream(file) << "thai 1 2\n";
  EXPECT_THROW(m.load_word_vectors(file, 1), ConfigError);
  std::filesystem::remove(file);
}

}  // namespace
}  // namespace fsdm::model
