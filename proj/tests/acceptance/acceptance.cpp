// Prints one line per acceptance criterion: PASS, FAIL or NOT RUN.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "fsdm/corpus/text.hpp"
#include "fsdm/metrics/metrics.hpp"
#include "fsdm/numcore/checkpoint.hpp"
#include "fsdm/trainer/trainer.hpp"
#include "support/generators.hpp"
#include "support/gradcheck.hpp"
#include "support/micro.hpp"
#include "support/overfit.hpp"

namespace fsdm::acceptance {
namespace {

namespace fs = std::filesystem;
using numcore::Tape;
using testing::Gen;

struct Failed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotRun : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failed(what);
}

std::string fmt(double x) {
  std::ostringstream s;
  s << x;
  return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  auto m = testing::micro_model<double>(4, 8, 6, 0.3);
  require(m.vocab().size() == 20 && m.schema().informable.size() == 2, "micro model shape");
  const auto ex = testing::micro_example();
  const trainer::LossWeights w{1.5, 9, 8, 0.5};
  const auto report = testing::grad_check(
      [&](Tape<double>& tape) {
        model::Forward<double> f(tape, m);
        return trainer::compute_losses(f, ex, w).total;
      },
      m.named());
  const double secs = seconds_since(t0);
  require(report.max_rel_error < 1e-4, "max rel error " + fmt(report.max_rel_error) + " at " + report.worst);
  require(secs < 60, "took " + fmt(secs) + " s");
  return "max rel error " + fmt(report.max_rel_error) + " over " + std::to_string(report.checked) + " entries, " +
         fmt(secs) + " s";
}

void check_distribution(const numcore::Var<double>& p, double& worst) {
  double s = 0;
  for (double x : p.value()) {
    require(x >= 0.0, "negative probability");
    s += x;
  }
  worst = std::max(worst, std::abs(s - 1.0));
  require(std::abs(s - 1.0) <= 1e-6, "distribution sums to " + fmt(s));
}

std::string normalization() {
  Gen g(7);
  const auto schema = testing::micro_schema();
  std::size_t inf_steps = 0, resp_steps = 0;
  double worst = 0;
  while (inf_steps < 1000 || resp_steps < 1000) {
    auto m = testing::micro_model<double>(g.rng()(), 8, 6, g.uniform(0.05, 3.0));
    Tape<double> tape(false);
    model::Forward<double> f(tape, m);
    const auto enc = f.encode(g.words(0, 5), g.belief(schema), g.words(1, 6));
    std::vector<model::SlotDecode<double>> inf;
    for (std::size_t k = 0; k < schema.informable.size(); ++k) {
      inf.push_back(f.decode_informable(k, enc));
      for (const auto& p : inf.back().probs) check_distribution(p, worst);
      inf_steps += inf.back().probs.size();
    }
    const auto req = f.classify_requestable(enc);
    const auto d = kb::encode_match_count(static_cast<long>(g.below(8)));
    const auto slots = f.classify_response_slots(inf, req, d);
    const auto r = f.decode_response(enc, f.belief_pool(inf, req, slots), f.copy_candidates(inf, req, slots), d);
    for (const auto& p : r.probs) check_distribution(p, worst);
    resp_steps += r.probs.size();
  }
  return std::to_string(inf_steps) + " belief steps, " + std::to_string(resp_steps) +
         " response steps, max |sum - 1| " + fmt(worst);
}

std::string validity_fuzz() {
  Gen g(11);
  const auto schema = testing::micro_schema();
  std::size_t calls = 0;
  for (int model_i = 0; model_i < 100; ++model_i) {
    auto m = testing::micro_model<float>(g.rng()(), 8, 6, g.uniform(0.01, 4.0));
    for (int i = 0; i < 100; ++i, ++calls) {
      const auto p = model::predict_turn(m, g.words(0, 5), g.belief(schema), g.words(1, 6), {});
      require(p.belief_valid && corpus::is_valid(p.belief, schema), "invalid belief at call " + std::to_string(calls));
      const auto parsed = corpus::parse_belief(corpus::serialize_belief(p.belief, schema), schema);
      require(parsed.valid && parsed.belief == p.belief, "belief does not round-trip at call " + std::to_string(calls));
    }
  }
  return std::to_string(calls) + " calls, all valid";
}

std::string micro_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  testing::ScratchDir dir("fsdm_acceptance_overfit");
  const auto c = testing::overfit_corpus();
  const auto cfg = testing::overfit_config(dir.path);
  const auto result = trainer::train(c, cfg);
  const double loss = result.history.back().train_loss.total;
  require(result.epochs_run <= 500, "ran " + std::to_string(result.epochs_run) + " epochs");
  require(loss < 0.05, "final loss " + fmt(loss));
  auto m = model::Model<float>::load(result.checkpoint);
  const auto predicted = trainer::run_inference(c.train, m, c.kb, trainer::BeliefFeed::gold);
  const auto report = metrics::evaluate(trainer::pair_with_gold(c.train, predicted, c.schema), c.kb);
  const double secs = seconds_since(t0);
  require(report.inf && report.inf->f1 == 1.0, "Inf F1 " + fmt(report.inf ? report.inf->f1 : -1));
  require(report.req && report.req->f1 == 1.0, "Req F1 " + fmt(report.req ? report.req->f1 : -1));
  require(report.bleu && *report.bleu == 1.0, "BLEU " + fmt(report.bleu.value_or(-1)));
  require(secs < 600, "took " + fmt(secs) + " s");
  return std::to_string(c.train.size()) + " dialogues, loss " + fmt(loss) + " after " +
         std::to_string(result.epochs_run) + " epochs; Inf F1 1, Req F1 1, BLEU 1; " + fmt(secs) + " s";
}

std::string squash(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == ' ') {
      if (!out.empty() && out.back() != ' ') out += ' ';
    } else {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string kb_oracle() {
  Gen g(2024);
  const std::vector<std::string> pool{"cheap", "Cheap", "north", "NORTH  side", "north side", "x", "y", "dontcare",
                                      "modern european", "Modern European"};
  std::size_t matches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    kb::KBTable t{"t", {}, {}};
    for (std::size_t a = 0, n = 1 + g.below(4); a < n; ++a) t.attributes.push_back("a" + std::to_string(a));
    for (std::size_t r = 0, n = g.below(12); r < n; ++r) {
      kb::Record rec;
      for (const auto& a : t.attributes) {
        if (g.coin(0.9)) rec[a] = g.pick(pool);
      }
      t.add(rec);
    }
    kb::Constraints cons;
    for (const auto& a : t.attributes) {
      if (g.coin(0.4)) cons[a] = corpus::tokenize(g.pick(pool));
    }
    std::vector<kb::Record> expected;
    for (const auto& rec : t.records) {
      bool ok = true;
      for (const auto& [a, toks] : cons) {
        const std::string want = corpus::join(toks);
        if (want == "dontcare") continue;
        ok = ok && !rec.at(a).empty() && squash(rec.at(a)) == want;
      }
      if (ok) expected.push_back(rec);
    }
    require(kb::query(t, cons) == expected, "table " + std::to_string(trial) + " differs from scan");
    matches += expected.size();
  }
  for (long n = 0; n <= 10; ++n) {
    const auto d = kb::encode_match_count(n);
    for (std::size_t i = 0; i < kb::kMatchBins; ++i) {
      require(d.bins[i] == (i == static_cast<std::size_t>(std::min(n, 4L)) ? 1.0f : 0.0f),
              "bin " + std::to_string(i) + " for n=" + std::to_string(n));
    }
  }
  return "1000 tables (" + std::to_string(matches) + " matching records), bins for n = 0..10";
}

std::string metric_oracles() {
  Gen g(3);
  const std::vector<std::string> items{"price=cheap", "food=thai", "area=north", "area=south", "phone", "address"};
  const std::vector<std::string> words{"the", "is", "phone_SLOT", "address_SLOT", "name_SLOT", "food_SLOT", "ok"};
  auto f1_of = [](std::size_t tp, std::size_t fp, std::size_t fn) {
    if (tp + fp + fn == 0) return 1.0;
    const double p = tp + fp ? double(tp) / double(tp + fp) : 0;
    const double r = tp + fn ? double(tp) / double(tp + fn) : 0;
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  };
  for (int dialogue = 0; dialogue < 50; ++dialogue) {
    // Slot PRF over the dialogue's turns.
    std::vector<metrics::ItemSet> pred, gold;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t t = 0, n = 1 + g.below(8); t < n; ++t) {
      metrics::ItemSet p, q;
      for (const auto& x : items) {
        const bool in_p = g.coin(0.35), in_q = g.coin(0.35);
        if (in_p) p.insert(x);
        if (in_q) q.insert(x);
        tp += in_p && in_q;
        fp += in_p && !in_q;
        fn += !in_p && in_q;
      }
      pred.push_back(p);
      gold.push_back(q);
    }
    require(metrics::slot_prf(pred, gold).f1 == f1_of(tp, fp, fn), "slot F1, dialogue " + std::to_string(dialogue));

    // Success F1 over placeholder sets of a batch of responses.
    std::vector<std::vector<metrics::Tokens>> gen(1), ref(1);
    for (auto* side : {&gen[0], &ref[0]}) {
      for (std::size_t t = 0, n = 1 + g.below(4); t < n; ++t) {
        metrics::Tokens r;
        for (std::size_t k = 0, m = g.below(6); k < m; ++k) r.push_back(g.pick(words));
        side->push_back(r);
      }
    }
    std::size_t stp = 0, sfp = 0, sfn = 0;
    for (const auto& w : words) {
      if (!w.ends_with("_SLOT")) continue;
      auto has = [&](const std::vector<metrics::Tokens>& dl) {
        return std::any_of(dl.begin(), dl.end(), [&](const auto& r) { return std::count(r.begin(), r.end(), w) > 0; });
      };
      const bool p = has(gen[0]), q = has(ref[0]);
      stp += p && q;
      sfp += p && !q;
      sfn += !p && q;
    }
    require(metrics::success_f1(gen, ref) == f1_of(stp, sfp, sfn), "success F1, dialogue " + std::to_string(dialogue));
  }

  // Hand-computed BLEU-4 cases.
  const double bp = std::exp(1.0 - 7.0 / 5.0);
  require(std::abs(metrics::bleu({{"a", "b", "c", "d", "e"}}, {{"a", "b", "c", "d", "e", "f", "g"}}) - bp) < 1e-6,
          "BLEU with brevity penalty");
  const double clipped =
      std::exp((std::log(9.0 / 11) + std::log(6.0 / 9) + std::log(4.0 / 7) + std::log(2.0 / 5)) / 4);
  require(std::abs(metrics::bleu({{"a", "a", "a", "a", "b", "c"}, {"x", "y", "z", "w", "v"}},
                                 {{"a", "b", "c", "a", "d", "e"}, {"x", "y", "z", "w", "v"}}) -
                   clipped) < 1e-6,
          "BLEU with clipping");
  require(metrics::bleu({{"the", "cat", "sat", "on", "the", "mat"}}, {{"the", "cat", "is", "on", "the", "mat"}}) == 0.0,
          "BLEU with no 4-gram match");
  return "50 random dialogues for slot F1 and success F1, 3 BLEU cases";
}

std::string determinism() {
  testing::ScratchDir dir("fsdm_acceptance_determinism");
  const auto c = corpus::load_corpus(testing::data_dir() / "camrest_micro", corpus::Format::camrest);
  auto cfg = trainer::TrainConfig::preset("camrest");
  cfg.hidden_dim = 16;
  cfg.embed_dim = 12;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.max_response_len = 16;
  cfg.dropout_rate = 0.3;
  cfg.seed = 5;
  cfg.output_dir = (dir.path / "run").string();
  const auto ckpt = trainer::train(c, cfg).checkpoint;
  fs::copy(ckpt, dir.path / "first", fs::copy_options::recursive);
  fs::remove_all(cfg.output_dir);
  require(trainer::train(c, cfg).checkpoint == ckpt, "checkpoint path changed");
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir.path / "first")) {
    const auto a = slurp(entry.path());
    require(!a.empty() && a == slurp(ckpt / entry.path().filename()),
            entry.path().filename().string() + " differs between runs");
    ++files;
  }
  require(files >= 2, "checkpoint has " + std::to_string(files) + " files");
  auto m = model::Model<float>::load(ckpt);
  const auto t1 = trainer::transcript_json(trainer::run_inference(c.test, m, c.kb, trainer::BeliefFeed::predicted));
  const auto t2 = trainer::transcript_json(trainer::run_inference(c.test, m, c.kb, trainer::BeliefFeed::predicted));
  require(t1.dump() == t2.dump(), "inference transcripts differ");
  return "checkpoints byte-identical, transcripts identical";
}

std::string desk_scale() {
  const char* env = std::getenv("FSDM_CAMREST_DIR");
  if (!env || !fs::exists(fs::path(env) / "CamRest676.json")) {
    throw NotRun("CamRest676 data not available; set FSDM_CAMREST_DIR to run (budget 6 h CPU)");
  }
  const auto t0 = std::chrono::steady_clock::now();
  testing::ScratchDir dir("fsdm_acceptance_camrest");
  const auto c = corpus::load_corpus(env, corpus::Format::camrest);
  auto cfg = trainer::TrainConfig::preset("camrest");
  cfg.corpus = env;
  cfg.output_dir = dir.path.string();
  const auto result = trainer::train(c, cfg);
  auto m = model::Model<float>::load(result.checkpoint);
  const auto predicted = trainer::run_inference(c.test, m, c.kb, trainer::BeliefFeed::predicted);
  const auto r = metrics::evaluate(trainer::pair_with_gold(c.test, predicted, c.schema), c.kb);
  const std::string detail = "Inf F1 " + fmt(r.inf->f1) + ", Req F1 " + fmt(r.req->f1) + ", SuccF1 " +
                             fmt(r.succ_f1.value_or(0)) + ", EMR " + fmt(r.emr.value_or(0)) + ", BLEU " +
                             fmt(r.bleu.value_or(0)) + "; " + fmt(seconds_since(t0) / 3600) + " h";
  require(r.inf->f1 >= 0.95 && r.req->f1 >= 0.90 && r.succ_f1.value_or(0) >= 0.78 && r.emr.value_or(0) >= 0.85,
          detail);
  return detail;
}

}  // namespace
}  // namespace fsdm::acceptance

int main() {
  using namespace fsdm::acceptance;
  const std::vector<std::pair<std::string, std::function<std::string()>>> criteria{
      {"gradient-check", gradient_check},   {"distribution-normalization", normalization},
      {"belief-validity-fuzz", validity_fuzz}, {"micro-corpus-overfit", micro_overfit},
      {"kb-oracle", kb_oracle},             {"metric-oracles", metric_oracles},
      {"determinism", determinism},         {"desk-scale-camrest", desk_scale},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    try {
      const auto detail = check();
      std::cout << "PASS    " << name << ": " << detail << std::endl;
    } catch (const NotRun& e) {
      std::cout << "NOT RUN " << name << ": " << e.what() << std::endl;
    } catch (const std::exception& e) {
      ++failures;
      std::cout << "FAIL    " << name << ": " << e.what() << std::endl;
    }
  }
  return failures == 0 ? 0 : 1;
}
