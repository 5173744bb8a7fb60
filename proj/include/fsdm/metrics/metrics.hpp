#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsdm/corpus/schema.hpp"
#include "fsdm/kb/kb.hpp"

namespace fsdm::metrics {

using Tokens = std::vector<std::string>;
using ItemSet = std::set<std::string>;

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Counts count(const ItemSet& predicted, const ItemSet& gold);

// No items anywhere counts as perfect agreement; otherwise an empty
// denominator scores 0.
PRF prf(const Counts& c);

// Micro-averaged over aligned turns.
PRF slot_prf(const std::vector<ItemSet>& predicted, const std::vector<ItemSet>& gold);

// "slot=value tokens" per informable slot.
ItemSet informable_items(const corpus::BeliefState& belief);
ItemSet requestable_items(const corpus::BeliefState& belief);

// Corpus BLEU-4, uniform weights, standard brevity penalty, no smoothing.
double bleu(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references);

struct EntityMatch {
  double rate = 0.0;
  std::size_t scored = 0;
  std::vector<std::optional<bool>> per_dialogue;  // nullopt when gold is empty
};

// Final generated vs final gold constraints of each dialogue, compared by the
// record sets they retrieve.
EntityMatch entity_match_rate(const std::vector<kb::Constraints>& generated,
                              const std::vector<kb::Constraints>& gold, const std::vector<kb::KBTable>& tables);

ItemSet placeholders_in(const std::vector<Tokens>& responses);

// Dialogue-level placeholder sets, micro-averaged.
double success_f1(const std::vector<std::vector<Tokens>>& generated, const std::vector<std::vector<Tokens>>& gold);

struct TurnRecord {
  corpus::BeliefState predicted_belief, gold_belief;
  Tokens predicted_response, gold_response;
};

struct DialogueRecord {
  std::string id;
  std::vector<TurnRecord> turns;
};

struct Report {
  std::optional<PRF> inf, req;
  std::optional<double> bleu, emr, succ_f1;
  std::size_t dialogues = 0;
  std::size_t turns = 0;
  nlohmann::json per_dialogue = nlohmann::json::array();

  nlohmann::json to_json() const;
};

Report evaluate(const std::vector<DialogueRecord>& dialogues, const std::vector<kb::KBTable>& tables);

}  // namespace fsdm::metrics
