#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "numlab/adam.hpp"
#include "numlab/checkpoint.hpp"
#include "numlab/model.hpp"
#include "numlab/tokenizer.hpp"

namespace numlab {

enum class LrSchedule { kConstant, kLinearDecay };

// Which targets the loss scores: every token, or only the continuation after
// the prompt prefix (the part the model must produce at evaluation time).
enum class LossScope { kAll, kContinuation };

std::string_view loss_scope_id(LossScope s);
LossScope parse_loss_scope(std::string_view s);

std::string_view schedule_id(LrSchedule s);
LrSchedule parse_schedule(std::string_view s);

struct TrainConfig {
  int epochs = 25;
  double learning_rate = 1e-4;
  int batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  // Checkpoint callback period in optimizer steps; 0 disables it.
  std::uint64_t eval_every = 0;
  Precision precision = Precision::kStandard;
  LrSchedule schedule = LrSchedule::kConstant;
  // Global-norm gradient clipping threshold; 0 disables clipping.
  double grad_clip = 0.0;
  LossScope loss_scope = LossScope::kAll;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

struct LossRecord {
  std::uint64_t step = 0;
  int epoch = 0;
  double loss = 0.0;
  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct TrainCallbacks {
  std::function<void(const LossRecord&)> on_step;
  std::function<void(const Checkpoint&)> on_checkpoint;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> log;
};

// BOS + tokens + EOS for every line. Throws ValidationError listing every
// line whose encoding exceeds max_seq_len.
std::vector<std::vector<TokenId>> encode_dataset(const std::vector<std::string>& lines, const Tokenizer& tokenizer,
                                                 int max_seq_len);

// Index of the first continuation token in each encoded sequence (BOS + prompt
// tokens). The prompt ends at the line's first '.', which is always followed
// by a space and hence falls on a token boundary.
std::vector<std::size_t> continuation_starts(const std::vector<std::string>& lines, const Tokenizer& tokenizer);

// Mini-batch Adam on next-token cross-entropy over whole observations. Each
// epoch visits the data in a fresh seeded permutation; the last batch of an
// epoch may be smaller. When `resume` is given, training continues from its
// weights, optimizer moments and step counter. `stop_after_step` (if
// nonzero) ends training early at that global step.
TrainResult train(const std::vector<std::string>& lines, const Tokenizer& tokenizer, ModelConfig model_config,
                  const TrainConfig& config, const TrainCallbacks& callbacks = {},
                  const Checkpoint* resume = nullptr, std::uint64_t stop_after_step = 0);

// Mean of the per-step losses recorded during `epoch` (1-based).
double epoch_mean_loss(const std::vector<LossRecord>& log, int epoch);

std::string loss_log_csv(const std::vector<LossRecord>& log);

}  // namespace numlab
