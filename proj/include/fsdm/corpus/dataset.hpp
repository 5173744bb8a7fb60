#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsdm/corpus/schema.hpp"
#include "fsdm/corpus/vocab.hpp"
#include "fsdm/kb/kb.hpp"

namespace fsdm::corpus {

struct Turn {
  std::string user;
  std::string agent_raw;
  std::string agent_delex;  // space-joined tokens
  BeliefState belief;
  long kb_match_count = 0;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
};

struct Corpus {
  SlotSchema schema;
  std::vector<Dialogue> train, dev, test;
  std::vector<kb::KBTable> kb;

  // "train", "dev" or "test"; ConfigError otherwise.
  const std::vector<Dialogue>& split(const std::string& name) const;
};

enum class Format { canonical, camrest, kvret };

Format parse_format(const std::string& name);

// canonical: a directory with train.json, dev.json, test.json and kb.json.
// camrest:   a directory with CamRest676.json and CamRestDB.json; split 3:1:1
//            by dialogue order.
// kvret:     a directory with kvret_{train,dev,test}_public.json; per-dialogue
//            KB items are merged into one table per task intent.
Corpus load_corpus(const std::filesystem::path& path, Format format);

// One split file: {schema, dialogues}. `schema` is filled from the file.
std::vector<Dialogue> load_split(const std::filesystem::path& file, SlotSchema& schema);
void save_canonical(const Corpus& corpus, const std::filesystem::path& dir);

nlohmann::json read_json(const std::filesystem::path& file);

void to_json(nlohmann::json& j, const Turn& t);
void to_json(nlohmann::json& j, const Dialogue& d);

struct TurnExample {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  std::vector<std::string> prev_response;
  BeliefState prev_belief;
  std::vector<std::string> user_utterance;
  BeliefState gold_belief;
  std::vector<std::string> gold_response;
  std::vector<std::string> gold_response_slots;  // schema order
  long gold_match_count = 0;
};

std::vector<TurnExample> make_turn_examples(const std::vector<Dialogue>& dialogues, const SlotSchema& schema);

// Token counts over user utterances, delexicalized responses and belief
// values.
std::map<std::string, std::size_t> count_tokens(const std::vector<TurnExample>& examples);

}  // namespace fsdm::corpus
