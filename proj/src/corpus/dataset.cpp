#include "fsdm/corpus/dataset.hpp"

#include <fstream>
#include <sstream>

#include "fsdm/corpus/delex.hpp"
#include "fsdm/corpus/text.hpp"
#include "fsdm/errors.hpp"

namespace fsdm::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<Dialogue>& Corpus::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "' (expected train, dev or test)");
}

Format parse_format(const std::string& name) {
  if (name == "canonical") return Format::canonical;
  if (name == "camrest") return Format::camrest;
  if (name == "kvret") return Format::kvret;
  throw ConfigError("unknown corpus format '" + name + "' (expected canonical, camrest or kvret)");
}

json read_json(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(file.string() + ": byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

void to_json(json& j, const Turn& t) {
  j = {{"user", t.user},
       {"agent_raw", t.agent_raw},
       {"agent_delex", t.agent_delex},
       {"belief", t.belief},
       {"kb_match_count", t.kb_match_count}};
}

void to_json(json& j, const Dialogue& d) { j = {{"id", d.id}, {"turns", d.turns}}; }

namespace {

std::string where(const std::string& dialogue, std::size_t turn) {
  return "dialogue " + dialogue + " turn " + std::to_string(turn);
}

void check_belief(const BeliefState& b, const SlotSchema& s, const std::string& dialogue, std::size_t turn) {
  for (const auto& [slot, value] : b.informable) {
    if (!s.is_informable(slot)) throw IngestionError(where(dialogue, turn) + ": unknown informable slot '" + slot + "'");
  }
  for (const auto& r : b.requestable) {
    if (!s.is_requestable(r)) throw IngestionError(where(dialogue, turn) + ": unknown requestable slot '" + r + "'");
  }
  if (!is_valid(b, s)) throw IngestionError(where(dialogue, turn) + ": belief value collides with a structural marker");
}

std::vector<std::string> split_spaces(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string t; in >> t;) out.push_back(t);
  return out;
}

}  // namespace

std::vector<Dialogue> load_split(const fs::path& file, SlotSchema& schema) {
  const json j = read_json(file);
  std::vector<Dialogue> out;
  try {
    schema = j.at("schema").get<SlotSchema>();
    for (const auto& dj : j.at("dialogues")) {
      Dialogue d;
      d.id = dj.at("id").is_string() ? dj.at("id").get<std::string>() : dj.at("id").dump();
      for (const auto& tj : dj.at("turns")) {
        Turn t;
        t.user = tj.at("user").get<std::string>();
        t.agent_raw = tj.value("agent_raw", std::string());
        t.agent_delex = tj.at("agent_delex").get<std::string>();
        t.belief = tj.at("belief").get<BeliefState>();
        t.kb_match_count = tj.value("kb_match_count", 0L);
        check_belief(t.belief, schema, d.id, d.turns.size());
        if (t.kb_match_count < 0) throw IngestionError(where(d.id, d.turns.size()) + ": negative kb_match_count");
        d.turns.push_back(std::move(t));
      }
      out.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  return out;
}

namespace {

Corpus load_canonical(const fs::path& dir) {
  Corpus c;
  SlotSchema s_dev, s_test;
  c.train = load_split(dir / "train.json", c.schema);
  c.dev = load_split(dir / "dev.json", s_dev);
  c.test = load_split(dir / "test.json", s_test);
  if (!(s_dev == c.schema) || !(s_test == c.schema)) {
    throw IngestionError(dir.string() + ": split files disagree on the slot schema");
  }
  try {
    c.kb = kb::tables_from_json(read_json(dir / "kb.json"));
  } catch (const QueryError& e) {
    throw IngestionError(std::string("kb.json: ") + e.what());
  }
  return c;
}

std::string rename_camrest(std::string slot) { return slot == "pricerange" ? "price" : slot; }

kb::KBTable camrest_table(const json& db) {
  kb::KBTable t;
  t.name = "restaurants";
  std::vector<kb::Record> recs;
  for (const auto& rj : db) {
    kb::Record r;
    for (const auto& [k, v] : rj.items()) {
      if (!v.is_string()) continue;
      const std::string attr = rename_camrest(k);
      r[attr] = v.get<std::string>();
      if (!t.has_attribute(attr)) t.attributes.push_back(attr);
    }
    recs.push_back(std::move(r));
  }
  for (auto& r : recs) t.add(std::move(r));
  return t;
}

Corpus load_camrest(const fs::path& dir) {
  Corpus c;
  c.schema = camrest_schema();
  const json db = read_json(dir / "CamRestDB.json");
  const json dials = read_json(dir / "CamRest676.json");
  std::vector<Dialogue> all;
  try {
    c.kb.push_back(camrest_table(db));
    const Lexicon lex = lexicon_for(c.kb.front().records, c.schema);
    for (std::size_t di = 0; di < dials.size(); ++di) {
      const json& dj = dials[di];
      Dialogue d;
      d.id = dj.contains("dialogue_id") ? dj["dialogue_id"].dump() : std::to_string(di);
      if (d.id.size() > 1 && d.id.front() == '"') d.id = dj["dialogue_id"].get<std::string>();
      BeliefState running;
      for (const auto& tj : dj.at("dial")) {
        const std::size_t ti = d.turns.size();
        Turn t;
        t.user = tj.at("usr").at("transcript").get<std::string>();
        t.agent_raw = tj.at("sys").at("sent").get<std::string>();
        running.requestable.clear();
        const json slu = tj.at("usr").value("slu", json::array());
        for (const auto& act : slu) {
          const std::string kind = act.value("act", "");
          const json pairs = act.value("slots", json::array());
          for (const auto& pair : pairs) {
            const std::string name = rename_camrest(pair.at(0).get<std::string>());
            const std::string value = pair.at(1).get<std::string>();
            if (kind == "inform") {
              if (!c.schema.is_informable(name)) {
                throw IngestionError("CamRest676.json: " + where(d.id, ti) + ": unknown informable slot '" + name + "'");
              }
              running.set(name, tokenize(value));
            } else if (kind == "request") {
              const std::string req = rename_camrest(value);
              if (!c.schema.is_requestable(req)) {
                throw IngestionError("CamRest676.json: " + where(d.id, ti) + ": unknown requestable slot '" + req + "'");
              }
              running.requestable.insert(req);
            }
          }
        }
        t.belief = running;
        check_belief(t.belief, c.schema, d.id, ti);
        t.agent_delex = join(delexicalize(t.agent_raw, lex));
        t.kb_match_count = static_cast<long>(kb::query(c.kb, t.belief.informable).size());
        d.turns.push_back(std::move(t));
      }
      all.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("CamRest676.json: ") + e.what());
  }
  const std::size_t n = all.size(), n_dev = n / 5, n_test = n / 5, n_train = n - n_dev - n_test;
  auto at = [&](std::size_t i) { return all.begin() + static_cast<std::ptrdiff_t>(i); };
  c.train.assign(at(0), at(n_train));
  c.dev.assign(at(n_train), at(n_train + n_dev));
  c.test.assign(at(n_train + n_dev), at(n));
  return c;
}

struct KvretRaw {
  std::string id;
  std::string intent;
  std::vector<kb::Record> items;
  std::vector<Turn> turns;
};

std::vector<KvretRaw> read_kvret(const fs::path& file, const SlotSchema& schema) {
  const json j = read_json(file);
  std::vector<KvretRaw> out;
  try {
    for (std::size_t di = 0; di < j.size(); ++di) {
      const json& dj = j[di];
      KvretRaw d;
      const json sc = dj.value("scenario", json::object());
      d.id = sc.value("uuid", file.stem().string() + "-" + std::to_string(di));
      d.intent = sc.contains("task") ? sc["task"].value("intent", "unknown") : "unknown";
      if (sc.contains("kb") && sc["kb"].contains("items") && sc["kb"]["items"].is_array()) {
        for (const auto& item : sc["kb"]["items"]) {
          kb::Record r;
          for (const auto& [k, v] : item.items()) {
            if (v.is_string()) r[k] = v.get<std::string>();
          }
          d.items.push_back(std::move(r));
        }
      }
      std::string pending;
      for (const auto& ej : dj.at("dialogue")) {
        const std::string speaker = ej.at("turn").get<std::string>();
        const json& data = ej.at("data");
        const std::string utt = data.value("utterance", "");
        if (speaker == "driver") {
          pending += (pending.empty() ? "" : " ") + utt;
          continue;
        }
        if (pending.empty()) {
          if (!d.turns.empty()) d.turns.back().agent_raw += " " + utt;
          continue;
        }
        const std::size_t ti = d.turns.size();
        Turn t;
        t.user = std::move(pending);
        pending.clear();
        t.agent_raw = utt;
        const json slots = data.value("slots", json::object());
        const json requested = data.value("requested", json::object());
        for (const auto& [slot, value] : slots.items()) {
          if (schema.is_informable(slot)) {
            if (value.is_string()) t.belief.set(slot, tokenize(value.get<std::string>()));
          } else if (!schema.is_requestable(slot)) {
            throw IngestionError(file.filename().string() + ": " + where(d.id, ti) + ": unknown informable slot '" +
                                 slot + "'");
          }
        }
        for (const auto& [slot, flag] : requested.items()) {
          if (schema.is_requestable(slot)) {
            if (flag.is_boolean() && flag.get<bool>()) t.belief.requestable.insert(slot);
          } else if (!schema.is_informable(slot)) {
            throw IngestionError(file.filename().string() + ": " + where(d.id, ti) + ": unknown requestable slot '" +
                                 slot + "'");
          }
        }
        check_belief(t.belief, schema, d.id, ti);
        d.turns.push_back(std::move(t));
      }
      out.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
  return out;
}

Corpus load_kvret(const fs::path& dir) {
  Corpus c;
  c.schema = kvret_schema();
  std::vector<std::vector<KvretRaw>> raw;
  for (const char* name : {"train", "dev", "test"}) {
    raw.push_back(read_kvret(dir / (std::string("kvret_") + name + "_public.json"), c.schema));
  }
  std::map<std::string, std::size_t> table_of;
  std::vector<std::set<kb::Record>> seen;
  std::vector<std::vector<kb::Record>> ordered;
  for (const auto& split : raw) {
    for (const auto& d : split) {
      auto [it, fresh] = table_of.emplace(d.intent, c.kb.size());
      if (fresh) {
        c.kb.push_back({d.intent, {}, {}});
        seen.emplace_back();
        ordered.emplace_back();
      }
      for (const auto& r : d.items) {
        if (!seen[it->second].insert(r).second) continue;
        ordered[it->second].push_back(r);
        for (const auto& [attr, v] : r) {
          if (!c.kb[it->second].has_attribute(attr)) c.kb[it->second].attributes.push_back(attr);
        }
      }
    }
  }
  for (std::size_t i = 0; i < c.kb.size(); ++i) {
    for (auto& r : ordered[i]) c.kb[i].add(std::move(r));
  }
  std::vector<Dialogue>* targets[] = {&c.train, &c.dev, &c.test};
  for (std::size_t s = 0; s < raw.size(); ++s) {
    for (auto& d : raw[s]) {
      const Lexicon lex = lexicon_for(d.items, c.schema);
      Dialogue out;
      out.id = d.id;
      for (auto& t : d.turns) {
        t.agent_delex = join(delexicalize(t.agent_raw, lex));
        t.kb_match_count = static_cast<long>(kb::query(c.kb, t.belief.informable).size());
        out.turns.push_back(std::move(t));
      }
      targets[s]->push_back(std::move(out));
    }
  }
  return c;
}

}  // namespace

Corpus load_corpus(const fs::path& path, Format format) {
  if (!fs::exists(path)) throw IngestionError("corpus path does not exist: " + path.string());
  switch (format) {
    case Format::canonical:
      return load_canonical(path);
    case Format::camrest:
      return load_camrest(path);
    case Format::kvret:
      return load_kvret(path);
  }
  throw ConfigError("unsupported corpus format");
}

void save_canonical(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  auto write = [&](const fs::path& file, const json& j) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IngestionError("cannot write " + file.string());
    out << j.dump(1) << '\n';
  };
  write(dir / "train.json", {{"schema", corpus.schema}, {"dialogues", corpus.train}});
  write(dir / "dev.json", {{"schema", corpus.schema}, {"dialogues", corpus.dev}});
  write(dir / "test.json", {{"schema", corpus.schema}, {"dialogues", corpus.test}});
  write(dir / "kb.json", kb::tables_to_json(corpus.kb));
}

std::vector<TurnExample> make_turn_examples(const std::vector<Dialogue>& dialogues, const SlotSchema& schema) {
  std::vector<TurnExample> out;
  for (const auto& d : dialogues) {
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      const Turn& t = d.turns[i];
      TurnExample ex;
      ex.dialogue_id = d.id;
      ex.turn_index = i;
      if (i > 0) {
        ex.prev_response = split_spaces(d.turns[i - 1].agent_delex);
        ex.prev_belief = d.turns[i - 1].belief;
      }
      ex.user_utterance = tokenize(t.user);
      ex.gold_belief = t.belief;
      ex.gold_response = split_spaces(t.agent_delex);
      ex.gold_response_slots = response_slots_of(ex.gold_response, schema);
      ex.gold_match_count = t.kb_match_count;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::map<std::string, std::size_t> count_tokens(const std::vector<TurnExample>& examples) {
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : examples) {
    for (const auto& t : ex.user_utterance) ++counts[t];
    for (const auto& t : ex.gold_response) ++counts[t];
    for (const auto& [slot, value] : ex.gold_belief.informable) {
      for (const auto& t : value) ++counts[t];
    }
  }
  return counts;
}

}  // namespace fsdm::corpus
