#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsdm/corpus/dataset.hpp"
#include "fsdm/metrics/metrics.hpp"
#include "fsdm/model/model.hpp"

namespace fsdm::trainer {

enum class BeliefFeed { predicted, gold };

BeliefFeed parse_belief_feed(const std::string& name);
std::string to_string(BeliefFeed feed);

struct LossWeights {
  double inf = 1.5;
  double req = 9.0;
  double respslot = 8.0;
  double resp = 0.5;
};

struct TrainConfig {
  std::string dataset = "camrest";
  std::string corpus;  // directory
  std::string format = "camrest";
  std::string output_dir = "fsdm-out";
  std::string word_vectors;  // optional

  double learning_rate = 0.00025;
  double dropout_rate = 0.5;
  std::size_t hidden_dim = 128;
  std::size_t embed_dim = 300;
  LossWeights alpha;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::size_t patience = 5;  // 0 disables early stopping
  std::uint64_t seed = 1;
  BeliefFeed eval_belief_feed = BeliefFeed::predicted;
  std::size_t min_count = 1;
  std::size_t max_train_dialogues = 0;  // 0 = all
  double target_loss = 0.0;             // stop once the epoch mean total falls below; 0 = off
  bool validate = true;
  std::size_t beam_width = 1;
  std::size_t max_value_len = 8;
  std::size_t max_response_len = 50;

  // Defaults for "camrest" or "kvret"; ConfigError otherwise.
  static TrainConfig preset(const std::string& dataset);
  // Starts from the preset named by "dataset" (camrest when absent), then
  // overrides every field present. Unknown keys are a ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate_or_throw() const;
  model::ModelConfig model_config() const;
};

struct LossBundle {
  double inf = 0, req = 0, respslot = 0, resp = 0, total = 0;
  bool clamped = false;
};

template <typename T>
struct LossTerms {
  numcore::Var<T> inf, req, respslot, resp, total;
  bool clamped = false;

  LossBundle values() const;
};

// Teacher-forced losses for one turn with the gold match indicator.
template <typename T>
LossTerms<T> compute_losses(model::Forward<T>& forward, const corpus::TurnExample& example, const LossWeights& alpha);

struct PredictedTurn {
  corpus::BeliefState belief;
  bool belief_valid = true;
  long match_count = 0;
  std::size_t match_bin = 0;
  model::Tokens response;
  model::Tokens response_slots;
};

struct PredictedDialogue {
  std::string id;
  std::vector<PredictedTurn> turns;
};

// Turn-by-turn prediction. With BeliefFeed::gold the previous belief and
// response come from the annotation, otherwise from the model's own output.
template <typename T>
std::vector<PredictedDialogue> run_inference(const std::vector<corpus::Dialogue>& dialogues, model::Model<T>& model,
                                             const std::vector<kb::KBTable>& tables, BeliefFeed feed);

std::vector<metrics::DialogueRecord> pair_with_gold(const std::vector<corpus::Dialogue>& gold,
                                                    const std::vector<PredictedDialogue>& predicted,
                                                    const corpus::SlotSchema& schema);

template <typename T>
metrics::Report evaluate_split(const std::vector<corpus::Dialogue>& dialogues, model::Model<T>& model,
                               const std::vector<kb::KBTable>& tables, BeliefFeed feed);

nlohmann::json transcript_json(const std::vector<PredictedDialogue>& predicted);

struct EpochRecord {
  std::size_t epoch = 0;
  LossBundle train_loss;  // mean over examples
  std::optional<double> score;
};

struct TrainResult {
  std::filesystem::path checkpoint;  // <output_dir>/model
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

// Writes <output_dir>/model (best checkpoint) and <output_dir>/train_log.jsonl.
// On a non-finite loss or gradient, saves <output_dir>/last_good and throws
// NumericError.
TrainResult train(const corpus::Corpus& corpus, const TrainConfig& config);

// Vocabulary from the training split of `corpus` as limited by the config.
corpus::Vocab build_vocab(const corpus::Corpus& corpus, const TrainConfig& config);

}  // namespace fsdm::trainer
