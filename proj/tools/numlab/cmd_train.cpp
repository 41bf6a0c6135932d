#include <chrono>
#include <ostream>

#include "commands.hpp"
#include "numlab/error.hpp"
#include "numlab/io.hpp"
#include "util.hpp"

namespace numlab::cli {

void ModelOptions::add_to(CLI::App& app) {
  app.add_option("--vocab", vocab, "Tokenizer target vocabulary size");
  app.add_option("--layers", model.n_layers, "Transformer layers");
  app.add_option("--heads", model.n_heads, "Attention heads");
  app.add_option("--d-model", model.d_model, "Model width");
  app.add_option("--d-ff", model.d_ff, "Feed-forward width");
  app.add_option("--max-seq-len", model.max_seq_len, "Context length in tokens");
  app.add_option("--dropout", model.dropout, "Dropout probability (0 = deterministic)");
  app.add_option("--epochs", train.epochs, "Passes over the dataset");
  app.add_option("--lr", train.learning_rate, "Adam learning rate");
  app.add_option("--batch", train.batch_size, "Observations per optimizer step");
  app.add_option("--beta1", train.beta1, "Adam beta1");
  app.add_option("--beta2", train.beta2, "Adam beta2");
  app.add_option("--eps", train.epsilon, "Adam epsilon");
  app.add_option("--schedule", schedule, "Learning-rate schedule: constant or linear")
      ->check(CLI::IsMember({"constant", "linear"}));
  app.add_option("--loss-scope", loss_scope, "Tokens that carry loss: all (whole observation) or continuation")
      ->check(CLI::IsMember({"all", "continuation"}));
  app.add_option("--grad-clip", train.grad_clip, "Global gradient-norm clip (0 = off)");
  app.add_option("--checkpoint-every", train.eval_every, "Write an intermediate checkpoint every N steps (0 = off)");
}

void TrainOptions::add_to(CLI::App& app) {
  app.add_option("--data", data, "Dataset file written by `numlab generate`");
  app.add_flag("--matrix", matrix, "Train one model per dataset found in --data-dir");
  app.add_option("--data-dir", data_dir, "Directory of datasets for --matrix");
  knobs.add_to(app);
  app.add_option("--resume", resume, "Continue from this checkpoint (tokenizer is reused from its directory)");
  app.add_option("--stop-after", stop_after, "Stop at this global step (0 = run all epochs)");
}

namespace {

void train_one(const Context& ctx, const TrainOptions& opt, const std::filesystem::path& data,
               const std::filesystem::path& dir) {
  require_file(data, "numlab generate");
  const auto meta = read_dataset_meta(data);
  const auto lines = read_lines(data);
  if (lines.empty()) throw ValidationError(data.string() + " has no observations");

  std::optional<Checkpoint> resume;
  Tokenizer tokenizer;
  if (!opt.resume.empty()) {
    const std::filesystem::path ckpt(opt.resume);
    require_file(ckpt, "numlab train");
    resume = Checkpoint::load(ckpt);
    const auto tok_path = ckpt.parent_path() / kTokenizerFile;
    require_file(tok_path, "numlab train");
    tokenizer = Tokenizer::load(tok_path);
  } else {
    tokenizer = Tokenizer::train(lines, opt.knobs.vocab);
  }

  ModelConfig model_config = resume ? resume->config : opt.knobs.model;
  model_config.vocab_size = static_cast<int>(tokenizer.vocab_size());
  TrainConfig config = opt.knobs.train;
  config.seed = ctx.globals.seed;
  config.precision = resume ? resume->precision : ctx.globals.resolved_precision();
  config.schedule = parse_schedule(opt.knobs.schedule);
  config.loss_scope = parse_loss_scope(opt.knobs.loss_scope);
  config.validate();

  ctx.log << "training on " << data.string() << ": " << lines.size() << " lines, vocab " << tokenizer.vocab_size()
          << ", " << model_config.parameter_count() << " parameters\n";

  const auto start = std::chrono::steady_clock::now();
  const std::size_t steps_per_epoch = (lines.size() + static_cast<std::size_t>(config.batch_size) - 1) /
                                      static_cast<std::size_t>(config.batch_size);
  double epoch_sum = 0.0;
  std::size_t epoch_steps = 0;
  TrainCallbacks callbacks;
  callbacks.on_step = [&](const LossRecord& r) {
    epoch_sum += r.loss;
    ++epoch_steps;
    if (r.step % steps_per_epoch == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      ctx.log << "epoch " << r.epoch << "/" << config.epochs << " step " << r.step << " mean loss "
              << epoch_sum / static_cast<double>(epoch_steps) << " (" << static_cast<long>(secs) << " s)\n";
      epoch_sum = 0.0;
      epoch_steps = 0;
    }
  };
  callbacks.on_checkpoint = [&](const Checkpoint& c) {
    c.save(dir / ("step-" + std::to_string(c.step) + ".ckpt"));
  };

  tokenizer.save(dir / kTokenizerFile);
  const auto result = train(lines, tokenizer, model_config, config, callbacks, resume ? &*resume : nullptr, opt.stop_after);
  result.checkpoint.save(dir / kCheckpointFile);

  auto csv = loss_log_csv(result.log);
  if (resume && std::filesystem::is_regular_file(dir / "loss.csv")) {
    csv = read_file(dir / "loss.csv") + csv.substr(csv.find('\n') + 1);
  }
  write_file_atomic(dir / "loss.csv", csv);
  write_file_atomic(dir / kDatasetMetaFile, read_file(std::filesystem::path(data.string() + ".meta")));
  ctx.write_manifest(dir, "dataset " + data.string() + "\nvocab_size " + std::to_string(tokenizer.vocab_size()) +
                              "\nfinal_step " + std::to_string(result.checkpoint.step));
  ctx.log << "wrote " << (dir / kCheckpointFile).string() << "\n";
}

}  // namespace

void TrainOptions::run(const Context& ctx) const {
  if (matrix) {
    if (data_dir.empty()) throw ValidationError("--matrix needs --data-dir");
    const auto files = sorted_files(data_dir, {".txt"});
    if (files.empty()) throw IoError("no datasets in " + data_dir + " (produce them with `numlab generate --all`)");
    for (const auto& f : files) train_one(ctx, *this, f, ctx.globals.out / f.stem());
    return;
  }
  if (data.empty()) throw ValidationError("train needs --data (or --matrix --data-dir)");
  train_one(ctx, *this, data, ctx.globals.out);
}

}  // namespace numlab::cli
