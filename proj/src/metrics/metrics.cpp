#include "fsdm/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "fsdm/corpus/text.hpp"
#include "fsdm/errors.hpp"

namespace fsdm::metrics {

using nlohmann::json;

Counts count(const ItemSet& predicted, const ItemSet& gold) {
  Counts c;
  for (const auto& p : predicted) (gold.count(p) ? c.tp : c.fp)++;
  for (const auto& g : gold) {
    if (!predicted.count(g)) ++c.fn;
  }
  return c;
}

PRF prf(const Counts& c) {
  if (c.tp + c.fp + c.fn == 0) return {1.0, 1.0, 1.0};
  PRF r;
  if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0) r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

PRF slot_prf(const std::vector<ItemSet>& predicted, const std::vector<ItemSet>& gold) {
  if (predicted.size() != gold.size()) throw ContractViolation("slot_prf: turn lists differ in length");
  Counts total;
  for (std::size_t i = 0; i < gold.size(); ++i) total += count(predicted[i], gold[i]);
  return prf(total);
}

ItemSet informable_items(const corpus::BeliefState& belief) {
  ItemSet out;
  for (const auto& [slot, value] : belief.informable) out.insert(slot + "=" + corpus::join(value));
  return out;
}

ItemSet requestable_items(const corpus::BeliefState& belief) {
  return ItemSet(belief.requestable.begin(), belief.requestable.end());
}

namespace {

using Ngrams = std::map<std::vector<std::string>, std::size_t>;

Ngrams ngrams(const Tokens& t, std::size_t n) {
  Ngrams out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Tokens(t.begin() + i, t.begin() + i + n)];
  return out;
}

}  // namespace

double bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references) {
  if (candidates.size() != references.size()) throw ContractViolation("bleu: candidate and reference counts differ");
  std::array<std::size_t, 4> matched{}, total{};
  std::size_t c_len = 0, r_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    c_len += candidates[i].size();
    r_len += references[i].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto cand = ngrams(candidates[i], n);
      const auto ref = ngrams(references[i], n);
      for (const auto& [g, k] : cand) {
        total[n - 1] += k;
        auto it = ref.find(g);
        if (it != ref.end()) matched[n - 1] += std::min(k, it->second);
      }
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  const double bp = c_len > r_len ? 1.0 : std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c_len));
  return bp * std::exp(log_sum / 4.0);
}

EntityMatch entity_match_rate(const std::vector<kb::Constraints>& generated, const std::vector<kb::Constraints>& gold,
                              const std::vector<kb::KBTable>& tables) {
  if (generated.size() != gold.size()) throw ContractViolation("entity_match_rate: dialogue lists differ in length");
  EntityMatch out;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].empty()) {
      out.per_dialogue.push_back(std::nullopt);
      continue;
    }
    auto a = kb::query(tables, generated[i]);
    auto b = kb::query(tables, gold[i]);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const bool match = a == b;
    out.per_dialogue.push_back(match);
    ++out.scored;
    hits += match;
  }
  out.rate = out.scored ? static_cast<double>(hits) / static_cast<double>(out.scored) : 0.0;
  return out;
}

ItemSet placeholders_in(const std::vector<Tokens>& responses) {
  ItemSet out;
  for (const auto& r : responses) {
    for (const auto& t : r) {
      if (corpus::is_placeholder(t)) out.insert(t);
    }
  }
  return out;
}

double success_f1(const std::vector<std::vector<Tokens>>& generated, const std::vector<std::vector<Tokens>>& gold) {
  if (generated.size() != gold.size()) throw ContractViolation("success_f1: dialogue lists differ in length");
  Counts total;
  for (std::size_t i = 0; i < gold.size(); ++i) total += count(placeholders_in(generated[i]), placeholders_in(gold[i]));
  return prf(total).f1;
}

namespace {

json prf_json(const std::optional<PRF>& p) {
  if (!p) return nullptr;
  return {{"precision", p->precision}, {"recall", p->recall}, {"f1", p->f1}};
}

template <typename V>
json opt_json(const std::optional<V>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

json Report::to_json() const {
  return {{"inf", prf_json(inf)},       {"req", prf_json(req)},     {"bleu", opt_json(bleu)},
          {"emr", opt_json(emr)},       {"succ_f1", opt_json(succ_f1)}, {"dialogues", dialogues},
          {"turns", turns},             {"per_dialogue", per_dialogue}};
}

Report evaluate(const std::vector<DialogueRecord>& dialogues, const std::vector<kb::KBTable>& tables) {
  Report r;
  r.dialogues = dialogues.size();
  std::vector<ItemSet> inf_p, inf_g, req_p, req_g;
  std::vector<Tokens> cands, refs;
  std::vector<kb::Constraints> final_p, final_g;
  std::vector<std::vector<Tokens>> resp_p, resp_g;
  for (const auto& d : dialogues) {
    std::vector<Tokens> dp, dg;
    for (const auto& t : d.turns) {
      inf_p.push_back(informable_items(t.predicted_belief));
      inf_g.push_back(informable_items(t.gold_belief));
      req_p.push_back(requestable_items(t.predicted_belief));
      req_g.push_back(requestable_items(t.gold_belief));
      cands.push_back(t.predicted_response);
      refs.push_back(t.gold_response);
      dp.push_back(t.predicted_response);
      dg.push_back(t.gold_response);
    }
    r.turns += d.turns.size();
    final_p.push_back(d.turns.empty() ? kb::Constraints{} : d.turns.back().predicted_belief.informable);
    final_g.push_back(d.turns.empty() ? kb::Constraints{} : d.turns.back().gold_belief.informable);
    resp_p.push_back(std::move(dp));
    resp_g.push_back(std::move(dg));
  }
  const auto emr = entity_match_rate(final_p, final_g, tables);
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    const auto c = count(placeholders_in(resp_p[i]), placeholders_in(resp_g[i]));
    json turns = json::array();
    for (const auto& t : dialogues[i].turns) {
      turns.push_back({{"belief", t.predicted_belief},
                       {"gold_belief", t.gold_belief},
                       {"response", corpus::join(t.predicted_response)},
                       {"gold_response", corpus::join(t.gold_response)}});
    }
    r.per_dialogue.push_back({{"id", dialogues[i].id},
                              {"emr", emr.per_dialogue[i] ? json(*emr.per_dialogue[i] ? 1 : 0) : json(nullptr)},
                              {"success", {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}}},
                              {"turns", turns}});
  }
  if (r.turns == 0) return r;
  r.inf = slot_prf(inf_p, inf_g);
  r.req = slot_prf(req_p, req_g);
  r.bleu = bleu(cands, refs);
  if (emr.scored) r.emr = emr.rate;
  r.succ_f1 = success_f1(resp_p, resp_g);
  return r;
}

}  // namespace fsdm::metrics
