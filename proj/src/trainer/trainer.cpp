#include "fsdm/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <limits>
#include <sstream>
#include <thread>

#include "fsdm/corpus/text.hpp"
#include "fsdm/errors.hpp"
#include "fsdm/numcore/adam.hpp"

namespace fsdm::trainer {

using nlohmann::json;
using numcore::Var;

BeliefFeed parse_belief_feed(const std::string& name) {
  if (name == "predicted") return BeliefFeed::predicted;
  if (name == "gold") return BeliefFeed::gold;
  throw ConfigError("belief feed must be 'predicted' or 'gold', got '" + name + "'");
}

std::string to_string(BeliefFeed feed) { return feed == BeliefFeed::gold ? "gold" : "predicted"; }

// ---- config -------------------------------------------------------------------

TrainConfig TrainConfig::preset(const std::string& dataset) {
  TrainConfig c;
  c.dataset = dataset;
  if (dataset == "camrest") {
    c.format = "camrest";
    return c;
  }
  if (dataset == "kvret") {
    c.format = "kvret";
    c.dropout_rate = 0.2;
    c.hidden_dim = 256;
    c.alpha = {1.0, 3.0, 2.0, 0.5};
    return c;
  }
  throw ConfigError("unknown dataset preset '" + dataset + "'");
}

json TrainConfig::to_json() const {
  return {{"dataset", dataset},
          {"corpus", corpus},
          {"format", format},
          {"output_dir", output_dir},
          {"word_vectors", word_vectors},
          {"learning_rate", learning_rate},
          {"dropout_rate", dropout_rate},
          {"hidden_dim", hidden_dim},
          {"embed_dim", embed_dim},
          {"loss_weights", {{"inf", alpha.inf}, {"req", alpha.req}, {"respslot", alpha.respslot}, {"resp", alpha.resp}}},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"patience", patience},
          {"seed", seed},
          {"eval_belief_feed", to_string(eval_belief_feed)},
          {"min_count", min_count},
          {"max_train_dialogues", max_train_dialogues},
          {"target_loss", target_loss},
          {"validate", validate},
          {"beam_width", beam_width},
          {"max_value_len", max_value_len},
          {"max_response_len", max_response_len}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig c = preset(j.value("dataset", std::string("camrest")));
  const json known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown training config field '" + key + "'");
  }
  try {
    c.corpus = j.value("corpus", c.corpus);
    c.format = j.value("format", c.format);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.word_vectors = j.value("word_vectors", c.word_vectors);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    if (j.contains("loss_weights")) {
      const json& w = j["loss_weights"];
      for (const auto& [key, value] : w.items()) {
        if (key != "inf" && key != "req" && key != "respslot" && key != "resp") {
          throw ConfigError("unknown loss weight '" + key + "'");
        }
      }
      c.alpha.inf = w.value("inf", c.alpha.inf);
      c.alpha.req = w.value("req", c.alpha.req);
      c.alpha.respslot = w.value("respslot", c.alpha.respslot);
      c.alpha.resp = w.value("resp", c.alpha.resp);
    }
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    if (j.contains("eval_belief_feed")) c.eval_belief_feed = parse_belief_feed(j["eval_belief_feed"].get<std::string>());
    c.min_count = j.value("min_count", c.min_count);
    c.max_train_dialogues = j.value("max_train_dialogues", c.max_train_dialogues);
    c.target_loss = j.value("target_loss", c.target_loss);
    c.validate = j.value("validate", c.validate);
    c.beam_width = j.value("beam_width", c.beam_width);
    c.max_value_len = j.value("max_value_len", c.max_value_len);
    c.max_response_len = j.value("max_response_len", c.max_response_len);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate_or_throw();
  return c;
}

void TrainConfig::validate_or_throw() const {
  if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  for (double a : {alpha.inf, alpha.req, alpha.respslot, alpha.resp}) {
    if (!(a >= 0)) throw ConfigError("loss weights must be nonnegative");
  }
  if (!(dropout_rate >= 0) || dropout_rate >= 1) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (hidden_dim == 0 || embed_dim == 0) throw ConfigError("hidden_dim and embed_dim must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (min_count == 0) throw ConfigError("min_count must be at least 1");
  if (beam_width == 0) throw ConfigError("beam_width must be at least 1");
  corpus::parse_format(format);
}

model::ModelConfig TrainConfig::model_config() const {
  model::ModelConfig m;
  m.embed_dim = embed_dim;
  m.hidden_dim = hidden_dim;
  m.dropout = dropout_rate;
  m.beam_width = beam_width;
  m.max_value_len = max_value_len;
  m.max_response_len = max_response_len;
  return m;
}

// ---- losses -------------------------------------------------------------------

template <typename T>
LossBundle LossTerms<T>::values() const {
  LossBundle b;
  b.inf = inf.item();
  b.req = req.item();
  b.respslot = respslot.item();
  b.resp = resp.item();
  b.total = total.item();
  b.clamped = clamped;
  return b;
}

namespace {

template <typename T>
Var<T> mean_of(const std::vector<Var<T>>& xs) {
  Var<T> s = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) s = numcore::add(s, xs[i]);
  return numcore::scale(s, T(1) / static_cast<T>(xs.size()));
}

template <typename T>
Var<T> sequence_nll(const std::vector<Var<T>>& probs, const std::vector<std::int32_t>& ids, bool& clamped) {
  std::vector<Var<T>> terms;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    bool c = false;
    terms.push_back(numcore::nll(probs[j], ids[j], &c));
    clamped = clamped || c;
  }
  return mean_of(terms);
}

}  // namespace

template <typename T>
LossTerms<T> compute_losses(model::Forward<T>& f, const corpus::TurnExample& ex, const LossWeights& alpha) {
  const auto& schema = f.model().schema();
  LossTerms<T> out;
  auto enc = f.encode(ex.prev_response, ex.prev_belief, ex.user_utterance);

  std::vector<model::SlotDecode<T>> informable;
  std::vector<Var<T>> slot_losses;
  for (std::size_t k = 0; k < schema.informable.size(); ++k) {
    const auto gold = ex.gold_belief.value(schema.informable[k]);
    informable.push_back(f.decode_informable(k, enc, &gold));
    slot_losses.push_back(sequence_nll(informable.back().probs, informable.back().ids, out.clamped));
  }
  out.inf = mean_of(slot_losses);

  auto req = f.classify_requestable(enc);
  std::vector<T> req_targets;
  for (const auto& name : schema.requestable) req_targets.push_back(ex.gold_belief.requestable.count(name) ? T(1) : T(0));
  out.req = numcore::bce_with_logits(req.logits, std::span<const T>(req_targets));

  const auto d = kb::encode_match_count(ex.gold_match_count);
  auto slots = f.classify_response_slots(informable, req, d);
  std::vector<T> slot_targets;
  for (const auto& name : schema.response_slots) {
    const bool on = std::find(ex.gold_response_slots.begin(), ex.gold_response_slots.end(), name) !=
                    ex.gold_response_slots.end();
    slot_targets.push_back(on ? T(1) : T(0));
  }
  out.respslot = numcore::bce_with_logits(slots.logits, std::span<const T>(slot_targets));

  const auto candidates = f.copy_candidates(informable, req, slots);
  const auto pool = f.belief_pool(informable, req, slots);
  auto resp = f.decode_response(enc, pool, candidates, d, &ex.gold_response);
  out.resp = sequence_nll(resp.probs, resp.ids, out.clamped);

  out.total = numcore::add(
      numcore::add(numcore::add(numcore::scale(out.inf, static_cast<T>(alpha.inf)),
                                numcore::scale(out.req, static_cast<T>(alpha.req))),
                   numcore::scale(out.respslot, static_cast<T>(alpha.respslot))),
      numcore::scale(out.resp, static_cast<T>(alpha.resp)));
  return out;
}

// ---- inference ----------------------------------------------------------------

namespace {

template <typename T>
PredictedDialogue infer_dialogue(const corpus::Dialogue& d, model::Model<T>& model,
                                 const std::vector<kb::KBTable>& tables, BeliefFeed feed) {
  PredictedDialogue out{d.id, {}};
  model::Tokens prev_response;
  corpus::BeliefState prev_belief;
  for (const auto& turn : d.turns) {
    auto p = model::predict_turn(model, prev_response, prev_belief, corpus::tokenize(turn.user), tables);
    PredictedTurn t;
    t.belief = p.belief;
    t.belief_valid = p.belief_valid;
    t.match_count = p.match_count;
    t.match_bin = p.match.index();
    t.response = p.response;
    t.response_slots = p.response_slots;
    if (feed == BeliefFeed::gold) {
      prev_belief = turn.belief;
      prev_response.clear();
      std::istringstream in(turn.agent_delex);
      for (std::string tok; in >> tok;) prev_response.push_back(tok);
    } else {
      prev_belief = t.belief;
      prev_response = t.response;
    }
    out.turns.push_back(std::move(t));
  }
  return out;
}

}  // namespace

template <typename T>
std::vector<PredictedDialogue> run_inference(const std::vector<corpus::Dialogue>& dialogues, model::Model<T>& model,
                                             const std::vector<kb::KBTable>& tables, BeliefFeed feed) {
  std::vector<PredictedDialogue> out(dialogues.size());
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), dialogues.size());
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 0; w < workers; ++w) {
    jobs.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < dialogues.size(); i += workers) out[i] = infer_dialogue(dialogues[i], model, tables, feed);
    }));
  }
  for (auto& j : jobs) j.get();
  return out;
}

std::vector<metrics::DialogueRecord> pair_with_gold(const std::vector<corpus::Dialogue>& gold,
                                                    const std::vector<PredictedDialogue>& predicted,
                                                    const corpus::SlotSchema& schema) {
  if (gold.size() != predicted.size()) throw ContractViolation("prediction count differs from dialogue count");
  std::vector<metrics::DialogueRecord> out;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto examples = corpus::make_turn_examples({gold[i]}, schema);
    if (examples.size() != predicted[i].turns.size()) {
      throw ContractViolation("dialogue " + gold[i].id + ": prediction has the wrong number of turns");
    }
    metrics::DialogueRecord rec{gold[i].id, {}};
    for (std::size_t t = 0; t < examples.size(); ++t) {
      rec.turns.push_back({predicted[i].turns[t].belief, examples[t].gold_belief, predicted[i].turns[t].response,
                           examples[t].gold_response});
    }
    out.push_back(std::move(rec));
  }
  return out;
}

template <typename T>
metrics::Report evaluate_split(const std::vector<corpus::Dialogue>& dialogues, model::Model<T>& model,
                               const std::vector<kb::KBTable>& tables, BeliefFeed feed) {
  const auto predicted = run_inference(dialogues, model, tables, feed);
  return metrics::evaluate(pair_with_gold(dialogues, predicted, model.schema()), tables);
}

json transcript_json(const std::vector<PredictedDialogue>& predicted) {
  json out = json::array();
  for (const auto& d : predicted) {
    json turns = json::array();
    for (const auto& t : d.turns) {
      turns.push_back({{"belief", t.belief},
                       {"match_count", t.match_count},
                       {"match_bin", t.match_bin},
                       {"response", corpus::join(t.response)},
                       {"response_slots", t.response_slots}});
    }
    out.push_back({{"id", d.id}, {"turns", turns}});
  }
  return out;
}

// ---- training -----------------------------------------------------------------

namespace {

std::vector<corpus::Dialogue> training_dialogues(const corpus::Corpus& c, const TrainConfig& cfg) {
  std::vector<corpus::Dialogue> out = c.train;
  if (cfg.max_train_dialogues > 0 && out.size() > cfg.max_train_dialogues) out.resize(cfg.max_train_dialogues);
  return out;
}

json loss_json(const LossBundle& b) {
  return {{"inf", b.inf}, {"req", b.req}, {"respslot", b.respslot}, {"resp", b.resp}, {"total", b.total}};
}

}  // namespace

corpus::Vocab build_vocab(const corpus::Corpus& c, const TrainConfig& cfg) {
  const auto examples = corpus::make_turn_examples(training_dialogues(c, cfg), c.schema);
  return corpus::Vocab::build(corpus::count_tokens(examples), c.schema, cfg.min_count);
}

TrainResult train(const corpus::Corpus& c, const TrainConfig& cfg) {
  cfg.validate_or_throw();
  const auto dialogues = training_dialogues(c, cfg);
  const auto examples = corpus::make_turn_examples(dialogues, c.schema);
  if (examples.empty()) throw ConfigError("training split has no turns");

  model::Model<float> model(c.schema, build_vocab(c, cfg), cfg.model_config());
  model.init(cfg.seed);
  if (!cfg.word_vectors.empty()) model.load_word_vectors(cfg.word_vectors, cfg.seed + 1);

  const std::filesystem::path out_dir = cfg.output_dir;
  std::filesystem::create_directories(out_dir);
  std::ofstream log(out_dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw ConfigError("cannot write training log in " + out_dir.string());

  numcore::Adam<float> adam(model.named(), cfg.learning_rate);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.checkpoint = out_dir / "model";
  double best = -std::numeric_limits<double>::infinity();
  std::size_t stagnant = 0;

  auto meta = [&](std::size_t epoch) { return json{{"train_config", cfg.to_json()}, {"epoch", epoch}}; };
  auto abort = [&](std::size_t epoch, const std::string& what) {
    model.save(out_dir / "last_good", meta(epoch));
    log << json{{"epoch", epoch}, {"split", "train"}, {"error", what}}.dump() << "\n";
    log.flush();
    throw NumericError("epoch " + std::to_string(epoch) + ": " + what);
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBundle sum;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const float inv = 1.0f / static_cast<float>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        numcore::Tape<float> tape;
        model::Forward<float> f(tape, model, true, &rng);
        auto terms = compute_losses(f, examples[order[i]], cfg.alpha);
        const auto v = terms.values();
        if (!std::isfinite(v.total)) abort(epoch, "non-finite loss");
        tape.backward(numcore::scale(terms.total, inv));
        sum.inf += v.inf;
        sum.req += v.req;
        sum.respslot += v.respslot;
        sum.resp += v.resp;
        sum.total += v.total;
      }
      try {
        adam.step();
      } catch (const NumericError& e) {
        abort(epoch, e.what());
      }
    }
    const double n = static_cast<double>(examples.size());
    LossBundle mean{sum.inf / n, sum.req / n, sum.respslot / n, sum.resp / n, sum.total / n, false};
    log << json{{"epoch", epoch}, {"split", "train"}, {"loss", loss_json(mean)}}.dump() << "\n";

    EpochRecord rec{epoch, mean, std::nullopt};
    double score = -mean.total;
    if (cfg.validate && !c.dev.empty()) {
      const auto report = evaluate_split(c.dev, model, c.kb, cfg.eval_belief_feed);
      score = report.succ_f1.value_or(0.0) + report.bleu.value_or(0.0);
      rec.score = score;
      json m = report.to_json();
      m.erase("per_dialogue");
      log << json{{"epoch", epoch}, {"split", "dev"}, {"metrics", m}, {"score", score}}.dump() << "\n";
    }
    log.flush();
    result.history.push_back(rec);
    result.epochs_run = epoch;

    if (score > best) {
      best = score;
      stagnant = 0;
      result.best_epoch = epoch;
      model.save(result.checkpoint, meta(epoch));
    } else {
      ++stagnant;
    }
    if (cfg.target_loss > 0 && mean.total < cfg.target_loss) break;
    if (cfg.patience > 0 && stagnant >= cfg.patience) break;
  }
  return result;
}

template struct LossTerms<float>;
template struct LossTerms<double>;
template LossTerms<float> compute_losses(model::Forward<float>&, const corpus::TurnExample&, const LossWeights&);
template LossTerms<double> compute_losses(model::Forward<double>&, const corpus::TurnExample&, const LossWeights&);
template std::vector<PredictedDialogue> run_inference(const std::vector<corpus::Dialogue>&, model::Model<float>&,
                                                      const std::vector<kb::KBTable>&, BeliefFeed);
template std::vector<PredictedDialogue> run_inference(const std::vector<corpus::Dialogue>&, model::Model<double>&,
                                                      const std::vector<kb::KBTable>&, BeliefFeed);
template metrics::Report evaluate_split(const std::vector<corpus::Dialogue>&, model::Model<float>&,
                                        const std::vector<kb::KBTable>&, BeliefFeed);
template metrics::Report evaluate_split(const std::vector<corpus::Dialogue>&, model::Model<double>&,
                                        const std::vector<kb::KBTable>&, BeliefFeed);

}  // namespace fsdm::trainer
