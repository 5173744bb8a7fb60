#include "cli.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "fsdm/corpus/dataset.hpp"
#include "fsdm/errors.hpp"
#include "fsdm/numcore/checkpoint.hpp"
#include "fsdm/service/service.hpp"
#include "fsdm/trainer/trainer.hpp"

namespace fsdm::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Options {
  std::string config, corpus, format, checkpoint, split, belief_feed, kb, output, transcript, host;
  int port = 0;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

// flag, then FSDM_<NAME>, then the config file value, then the fallback.
std::string resolve(const std::string& flag, const char* env, const json& file, const char* key,
                    const std::string& fallback = "") {
  if (!flag.empty()) return flag;
  if (const char* v = std::getenv(env); v && *v) return v;
  if (file.is_object() && file.contains(key) && file[key].is_string() && !file[key].get<std::string>().empty()) {
    return file[key].get<std::string>();
  }
  return fallback;
}

json read_config(const std::string& path) {
  if (path.empty()) return json::object();
  if (!fs::exists(path)) throw ConfigError("config file does not exist: " + path);
  try {
    return corpus::read_json(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

corpus::Corpus load_corpus_checked(const std::string& path, const std::string& format) {
  if (path.empty()) throw ConfigError("no corpus given (--corpus, FSDM_CORPUS or the config file)");
  if (!fs::exists(path)) throw ConfigError("corpus path does not exist: " + path);
  return corpus::load_corpus(path, corpus::parse_format(format));
}

int cmd_train(const Options& o, std::ostream& out) {
  const std::string config_path = resolve(o.config, "FSDM_CONFIG", json(), "");
  json file = read_config(config_path);
  trainer::TrainConfig cfg = trainer::TrainConfig::from_json(file);
  cfg.corpus = resolve(o.corpus, "FSDM_CORPUS", file, "corpus", cfg.corpus);
  cfg.format = resolve(o.format, "FSDM_FORMAT", file, "format", cfg.format);
  cfg.output_dir = resolve(o.output, "FSDM_OUTPUT", file, "output_dir", cfg.output_dir);
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.epochs = *o.epochs;
  cfg.validate_or_throw();
  const auto c = load_corpus_checked(cfg.corpus, cfg.format);
  const auto result = trainer::train(c, cfg);
  out << json{{"checkpoint", result.checkpoint.string()},
              {"epochs_run", result.epochs_run},
              {"best_epoch", result.best_epoch},
              {"final_loss", result.history.empty() ? 0.0 : result.history.back().train_loss.total}}
             .dump()
      << "\n";
  return kOk;
}

json checkpoint_train_config(const std::string& checkpoint) {
  const auto manifest = numcore::read_manifest(checkpoint);
  if (manifest.contains("metadata") && manifest["metadata"].contains("train_config")) {
    return manifest["metadata"]["train_config"];
  }
  return json::object();
}

std::vector<kb::KBTable> tables_for(const std::string& kb_path, const corpus::Corpus* c) {
  if (!kb_path.empty()) {
    if (!fs::exists(kb_path)) throw ConfigError("KB file does not exist: " + kb_path);
    return kb::load_tables(kb_path);
  }
  if (c) return c->kb;
  throw ConfigError("no KB given (--kb, FSDM_KB, or a corpus)");
}

void check_schema(const model::Model<float>& m, const corpus::SlotSchema& s) {
  if (!(m.schema() == s)) throw CheckpointError("checkpoint schema does not match the corpus schema");
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const std::string checkpoint = resolve(o.checkpoint, "FSDM_CHECKPOINT", json(), "");
  if (checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint or FSDM_CHECKPOINT)");
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint does not exist: " + checkpoint);
  auto model = model::Model<float>::load(checkpoint);
  json file = read_config(resolve(o.config, "FSDM_CONFIG", json(), ""));
  const json stored = checkpoint_train_config(checkpoint);
  if (file.empty()) file = stored;
  const std::string corpus_path = resolve(o.corpus, "FSDM_CORPUS", file, "corpus");
  const std::string format = resolve(o.format, "FSDM_FORMAT", file, "format", "canonical");
  const std::string split = resolve(o.split, "FSDM_SPLIT", file, "split", "test");
  const auto feed =
      trainer::parse_belief_feed(resolve(o.belief_feed, "FSDM_BELIEF_FEED", file, "eval_belief_feed", "predicted"));
  const auto c = load_corpus_checked(corpus_path, format);
  check_schema(model, c.schema);
  const auto tables = tables_for(resolve(o.kb, "FSDM_KB", json(), ""), &c);
  const auto& dialogues = c.split(split);
  const auto predicted = trainer::run_inference(dialogues, model, tables, feed);
  auto report = metrics::evaluate(trainer::pair_with_gold(dialogues, predicted, c.schema), tables).to_json();
  report["split"] = split;
  report["belief_feed"] = trainer::to_string(feed);
  if (!o.transcript.empty()) {
    std::ofstream t(o.transcript);
    if (!t) throw ConfigError("cannot write transcript " + o.transcript);
    t << trainer::transcript_json(predicted).dump(1) << "\n";
  }
  out << report.dump(2) << "\n";
  return kOk;
}

int cmd_serve(const Options& o, std::ostream& out) {
  const std::string checkpoint = resolve(o.checkpoint, "FSDM_CHECKPOINT", json(), "");
  if (checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint or FSDM_CHECKPOINT)");
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint does not exist: " + checkpoint);
  auto model = model::Model<float>::load(checkpoint);
  json file = read_config(resolve(o.config, "FSDM_CONFIG", json(), ""));
  if (file.empty()) file = checkpoint_train_config(checkpoint);
  std::vector<kb::KBTable> tables;
  const std::string kb_path = resolve(o.kb, "FSDM_KB", file, "kb");
  if (!kb_path.empty()) {
    tables = tables_for(kb_path, nullptr);
  } else {
    const auto c = load_corpus_checked(resolve(o.corpus, "FSDM_CORPUS", file, "corpus"),
                                       resolve(o.format, "FSDM_FORMAT", file, "format", "canonical"));
    check_schema(model, c.schema);
    tables = c.kb;
  }
  int port = o.port;
  if (port == 0) {
    const std::string p = resolve("", "FSDM_PORT", json(), "", "8080");
    try {
      port = std::stoi(p);
    } catch (const std::exception&) {
      throw ConfigError("FSDM_PORT is not a number: " + p);
    }
  }
  if (port <= 0 || port > 65535) throw ConfigError("port out of range: " + std::to_string(port));
  service::DialogueService svc(std::move(model), std::move(tables));
  httplib::Server server;
  service::mount(server, svc);
  const std::string host = o.host.empty() ? "127.0.0.1" : o.host;
  if (!server.bind_to_port(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  out << "listening on " << host << ":" << port << std::endl;
  server.listen_after_bind();
  return kOk;
}

int cmd_convert(const Options& o, std::ostream& out) {
  const json file = read_config(resolve(o.config, "FSDM_CONFIG", json(), ""));
  const auto c = load_corpus_checked(resolve(o.corpus, "FSDM_CORPUS", file, "corpus"),
                                     resolve(o.format, "FSDM_FORMAT", file, "format", "camrest"));
  const std::string dest = resolve(o.output, "FSDM_OUTPUT", json(), "");
  if (dest.empty()) throw ConfigError("no output directory given (--output)");
  corpus::save_canonical(c, dest);
  out << json{{"output", dest},
              {"train", c.train.size()},
              {"dev", c.dev.size()},
              {"test", c.test.size()},
              {"kb_records", kb::record_count(c.kb)}}
             .dump()
      << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fsdm: flexibly-structured dialogue model"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file (env FSDM_CONFIG)");
    sub->add_option("--corpus", o.corpus, "corpus directory (env FSDM_CORPUS)");
    sub->add_option("--format", o.format, "canonical, camrest or kvret (env FSDM_FORMAT)");
  };
  auto* train = app.add_subcommand("train", "train a model");
  common(train);
  train->add_option("--output", o.output, "output directory (env FSDM_OUTPUT)");
  train->add_option("--seed", o.seed, "random seed");
  train->add_option("--epochs", o.epochs, "epoch limit");

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on a split");
  common(evaluate);
  evaluate->add_option("--checkpoint", o.checkpoint, "checkpoint directory (env FSDM_CHECKPOINT)");
  evaluate->add_option("--split", o.split, "train, dev or test (env FSDM_SPLIT)");
  evaluate->add_option("--belief-feed", o.belief_feed, "predicted or gold (env FSDM_BELIEF_FEED)");
  evaluate->add_option("--kb", o.kb, "KB json overriding the corpus KB (env FSDM_KB)");
  evaluate->add_option("--transcript", o.transcript, "write per-turn predictions here");

  auto* serve = app.add_subcommand("serve", "serve the /v1 dialogue API");
  common(serve);
  serve->add_option("--checkpoint", o.checkpoint, "checkpoint directory (env FSDM_CHECKPOINT)");
  serve->add_option("--kb", o.kb, "KB json (env FSDM_KB)");
  serve->add_option("--port", o.port, "port (env FSDM_PORT, default 8080)");
  serve->add_option("--host", o.host, "bind address (default 127.0.0.1)");

  auto* convert = app.add_subcommand("convert", "write a raw corpus in canonical form");
  common(convert);
  convert->add_option("--output", o.output, "destination directory");

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "fsdm: " << e.what() << "\n";
    return kConfig;
  }

  try {
    if (*train) return cmd_train(o, out);
    if (*evaluate) return cmd_evaluate(o, out);
    if (*serve) return cmd_serve(o, out);
    if (*convert) return cmd_convert(o, out);
  } catch (const ConfigError& e) {
    err << "fsdm: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ParseError& e) {
    err << "fsdm: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IngestionError& e) {
    err << "fsdm: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    err << "fsdm: training aborted: " << e.what() << "\n";
    return kNumeric;
  } catch (const CheckpointError& e) {
    err << "fsdm: checkpoint mismatch: " << e.what() << "\n";
    return kCheckpoint;
  } catch (const std::exception& e) {
    err << "fsdm: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace fsdm::cli
