#include "numlab/trainer.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "numlab/error.hpp"
#include "numlab/rng.hpp"

namespace numlab {

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kShuffleStream = 0x5a0f'f1e5ULL;
constexpr std::uint64_t kDropoutStream = 0xd20b'0a7ULL;

template <typename Scalar>
void clip_global_norm(std::span<Scalar> grads, double max_norm) {
  double sq = 0.0;
  for (const auto g : grads) sq += static_cast<double>(g) * static_cast<double>(g);
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const auto scale = static_cast<Scalar>(max_norm / norm);
    for (auto& g : grads) g *= scale;
  }
}

template <typename Scalar>
TrainResult train_impl(const std::vector<std::vector<TokenId>>& data, const std::vector<std::size_t>& starts,
                       const ModelConfig& model_config,
                       const TrainConfig& config, const TrainCallbacks& callbacks, const Checkpoint* resume,
                       std::uint64_t stop_after_step) {
  auto model = resume ? resume->model<Scalar>()
                      : Transformer<Scalar>::initialize(model_config, mix_seed(config.seed, kInitStream));
  auto adam = resume ? resume->optimizer_state<Scalar>() : AdamState<Scalar>::zeros(model.params().size());

  const std::size_t n = data.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t steps_per_epoch = (n + bs - 1) / bs;
  const std::uint64_t total_steps = steps_per_epoch * static_cast<std::uint64_t>(config.epochs);
  auto adam_config = config.adam();

  TrainResult result;
  std::uint64_t step = adam.step;
  while (step < total_steps && (stop_after_step == 0 || step < stop_after_step)) {
    const auto epoch = static_cast<int>(step / steps_per_epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(config.seed, kShuffleStream + static_cast<std::uint64_t>(epoch)));
    shuffle(std::span<std::size_t>(order), shuffle_rng);

    for (std::size_t b = step % steps_per_epoch; b < steps_per_epoch; ++b) {
      if (stop_after_step != 0 && step >= stop_after_step) break;
      std::vector<std::vector<TokenId>> batch;
      std::vector<std::size_t> loss_from;
      for (std::size_t i = b * bs; i < std::min(n, (b + 1) * bs); ++i) {
        batch.push_back(data[order[i]]);
        if (!starts.empty()) loss_from.push_back(starts[order[i]]);
      }

      Rng dropout_rng(mix_seed(config.seed ^ kDropoutStream, step));
      auto lg = model.loss_and_grads(batch, model_config.dropout > 0.0 ? &dropout_rng : nullptr, loss_from);
      if (config.grad_clip > 0.0) clip_global_norm<Scalar>(lg.grads, config.grad_clip);
      if (config.schedule == LrSchedule::kLinearDecay) {
        adam_config.learning_rate =
            config.learning_rate * (1.0 - static_cast<double>(step) / static_cast<double>(total_steps));
      }
      adam_step<Scalar>(model.params(), lg.grads, adam, adam_config, model.layout());
      step = adam.step;

      const LossRecord rec{step, epoch + 1, lg.loss};
      result.log.push_back(rec);
      if (callbacks.on_step) callbacks.on_step(rec);
      if (config.eval_every != 0 && step % config.eval_every == 0 && callbacks.on_checkpoint) {
        callbacks.on_checkpoint(Checkpoint::capture(model, &adam, config.seed));
      }
    }
  }
  result.checkpoint = Checkpoint::capture(model, &adam, config.seed);
  return result;
}

}  // namespace

std::string_view schedule_id(LrSchedule s) { return s == LrSchedule::kLinearDecay ? "linear" : "constant"; }

std::string_view loss_scope_id(LossScope s) { return s == LossScope::kContinuation ? "continuation" : "all"; }

LossScope parse_loss_scope(std::string_view s) {
  if (s == "all") return LossScope::kAll;
  if (s == "continuation") return LossScope::kContinuation;
  throw ValidationError("unknown loss scope \"" + std::string(s) + "\" (expected all or continuation)");
}

LrSchedule parse_schedule(std::string_view s) {
  if (s == "constant") return LrSchedule::kConstant;
  if (s == "linear" || s == "linear-decay") return LrSchedule::kLinearDecay;
  throw ValidationError("unknown learning-rate schedule \"" + std::string(s) + "\"");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (batch_size <= 0) throw ValidationError("batch size must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("Adam betas must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ValidationError("Adam epsilon must be positive");
  if (grad_clip < 0.0) throw ValidationError("gradient clip must be >= 0");
}

std::vector<std::vector<TokenId>> encode_dataset(const std::vector<std::string>& lines, const Tokenizer& tokenizer,
                                                 int max_seq_len) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(lines.size());
  std::ostringstream offending;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<TokenId> seq{Tokenizer::kBos};
    const auto ids = tokenizer.encode(lines[i]);
    seq.insert(seq.end(), ids.begin(), ids.end());
    seq.push_back(Tokenizer::kEos);
    if (seq.size() > static_cast<std::size_t>(max_seq_len)) {
      if (bad < 20) offending << "\n  line " << (i + 1) << ": " << seq.size() << " tokens";
      ++bad;
    }
    out.push_back(std::move(seq));
  }
  if (bad) {
    throw ValidationError(std::to_string(bad) + " observation(s) exceed max_seq_len " + std::to_string(max_seq_len) +
                          ":" + offending.str());
  }
  return out;
}

std::vector<std::size_t> continuation_starts(const std::vector<std::string>& lines, const Tokenizer& tokenizer) {
  std::vector<std::size_t> starts;
  starts.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto dot = lines[i].find('.');
    if (dot == std::string::npos) {
      throw ValidationError("line " + std::to_string(i + 1) + " has no prompt prefix (no '.')");
    }
    starts.push_back(1 + tokenizer.encode(std::string_view(lines[i]).substr(0, dot + 1)).size());
  }
  return starts;
}

TrainResult train(const std::vector<std::string>& lines, const Tokenizer& tokenizer, ModelConfig model_config,
                  const TrainConfig& config, const TrainCallbacks& callbacks, const Checkpoint* resume,
                  std::uint64_t stop_after_step) {
  config.validate();
  if (model_config.vocab_size == 0) model_config.vocab_size = static_cast<int>(tokenizer.vocab_size());
  if (static_cast<std::size_t>(model_config.vocab_size) != tokenizer.vocab_size()) {
    throw ValidationError("model vocab_size " + std::to_string(model_config.vocab_size) + " != tokenizer vocabulary " +
                          std::to_string(tokenizer.vocab_size()));
  }
  model_config.validate();
  if (lines.empty()) throw ValidationError("training set is empty");
  if (resume && !(resume->config == model_config)) throw ValidationError("resume checkpoint has a different model config");
  const auto data = encode_dataset(lines, tokenizer, model_config.max_seq_len);
  const auto starts =
      config.loss_scope == LossScope::kContinuation ? continuation_starts(lines, tokenizer) : std::vector<std::size_t>{};
  if (config.precision == Precision::kWide) {
    return train_impl<double>(data, starts, model_config, config, callbacks, resume, stop_after_step);
  }
  return train_impl<float>(data, starts, model_config, config, callbacks, resume, stop_after_step);
}

double epoch_mean_loss(const std::vector<LossRecord>& log, int epoch) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : log) {
    if (r.epoch == epoch) {
      sum += r.loss;
      ++n;
    }
  }
  if (n == 0) throw ValidationError("no loss records for epoch " + std::to_string(epoch));
  return sum / static_cast<double>(n);
}

std::string loss_log_csv(const std::vector<LossRecord>& log) {
  std::ostringstream out;
  out.precision(9);
  out << "step,epoch,loss\n";
  for (const auto& r : log) out << r.step << "," << r.epoch << "," << r.loss << "\n";
  return out.str();
}

}  // namespace numlab
