// One PASS/FAIL line per acceptance criterion. Training-heavy criteria (6, 7)
// run the default model at full recipe and take tens of minutes each.
//
//   acceptance [--only 1,2,9] [--work DIR]

#include <chrono>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "numlab/arith_format.hpp"
#include "numlab/datagen.hpp"
#include "numlab/eval.hpp"
#include "numlab/io.hpp"
#include "numlab/remote.hpp"
#include "numlab/report.hpp"
#include "numlab/saliency.hpp"
#include "numlab/trainer.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/mock_endpoint.hpp"

using namespace numlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

fs::path g_work = "acceptance_work";

// ---------------------------------------------------------------- 1

Outcome format_bytes() {
  const auto add = Operation::add();
  std::vector<std::string> bad;
  if (render_observation(1201, 1302, add, Approach::decomposition()).text != fixtures::kDecomposition1201)
    bad.push_back("decomposition");
  if (render_observation(1201, 1302, add, Approach::baseline()).text != fixtures::kBaseline1201) bad.push_back("baseline");
  if (render_observation(1201, 1302, add, Approach::spaced()).text != fixtures::kSpaced1201) bad.push_back("spaced");
  const std::vector<std::pair<std::int64_t, std::int64_t>> sets{{28, 39}, {804, 121}, {1201, 1302}, {97734, 86328}};
  for (const auto& [a, b] : sets) {
    if (build_fewshot_prompt(a, b, add) != fixtures::fewshot_addition(std::to_string(a), std::to_string(b)))
      bad.push_back("fewshot " + std::to_string(a) + "+" + std::to_string(b));
  }
  if (!bad.empty()) {
    std::string d = "mismatch:";
    for (const auto& b : bad) d += " " + b;
    return {false, d};
  }
  return {true, "3 observation strings and 4 few-shot prompts byte-identical"};
}

// ---------------------------------------------------------------- 2

Outcome decomposition_roundtrip() {
  std::size_t checked = 0;
  for (std::int64_t n = -999999; n <= 999999; ++n) {
    for (const auto order : {DigitOrder::kAscending, DigitOrder::kDescending}) {
      if (recompose(decompose(n, order)) != n) return {false, "recompose(decompose(" + std::to_string(n) + ")) differs"};
      ++checked;
    }
  }
  return {true, "exhaustive over |n| < 10^6, both digit orders (" + std::to_string(checked) + " strings)"};
}

// ---------------------------------------------------------------- 3

Outcome dataset_protocol() {
  const auto dir = g_work / "datasets";
  fs::remove_all(dir);
  std::ostringstream out, err;
  const std::string out_s = dir.string();
  const char* argv[] = {"numlab", "-q", "--seed", "17", "--out", out_s.c_str(), "generate", "--all", "--test-count", "200"};
  if (const int code = cli::run(static_cast<int>(std::size(argv)), argv, out, err); code != 0)
    return {false, "numlab generate exited " + std::to_string(code) + ": " + err.str()};

  std::set<std::tuple<int, std::int64_t, std::int64_t>> held;
  for (const auto& f : fs::directory_iterator(dir / "tests")) {
    const auto loaded = load_test_set(f.path(), TestSetFormat::kNative);
    for (const auto& c : loaded.cases) held.insert({static_cast<int>(c.op.kind), c.n1, c.n2});
  }
  std::size_t files = 0;
  for (const auto& op : Operation::all()) {
    const std::size_t want = op == Operation::mul() ? 3000 : 12000;
    for (const auto& a : Approach::all()) {
      const auto path = dir / (std::string(op.id()) + "_" + std::string(a.id()) + ".txt");
      const auto lines = read_lines(path);
      if (lines.size() != want)
        return {false, path.filename().string() + " has " + std::to_string(lines.size()) + " lines, want " + std::to_string(want)};
      for (const auto& line : lines) {
        const auto p = parse_observation(line, a);
        if (held.count({static_cast<int>(op.kind), p.n1, p.n2}))
          return {false, path.filename().string() + " contains held-out pair " + line};
        if (extract_answer(line) != op.apply(p.n1, p.n2)) return {false, "wrong trailing number: " + line};
      }
      ++files;
    }
  }
  return {true, std::to_string(files) + " files (12000/12000/3000 lines), " + std::to_string(held.size()) +
                    " held-out pairs excluded, every trailing number matches the oracle"};
}

// ---------------------------------------------------------------- 4

Outcome gradient_check() {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 32;
  c.d_ff = 64;
  c.max_seq_len = 16;
  c.vocab_size = 11;
  Rng rng(2024);
  double worst = 0;
  std::size_t params = 0;
  for (int trial = 0; trial < 3; ++trial) {
    auto m = Transformer<double>::initialize(c, 100 + static_cast<std::uint64_t>(trial));
    // Scaled-up weights keep softmax and GELU away from their flat regions.
    for (auto& p : m.params()) p *= 5;
    params = m.params().size();
    worst = std::max(worst, check::worst_gradient_error(m, check::random_batch(rng, c.vocab_size, 12)));
  }
  return {worst < 1e-4, "worst relative error " + std::to_string(worst) + " over " + std::to_string(params) +
                            " parameters x 3 batches (bound 1e-4)"};
}

// ---------------------------------------------------------------- 5

Outcome tokenizer_effect() {
  std::vector<std::string> corpus;
  for (const auto& p : sample_pairs(SamplingSpec::defaults(Operation::add(), 5)))
    corpus.push_back(render_observation(p.n1, p.n2, Operation::add(), Approach::baseline()).text);
  const std::size_t vocab = cli::ModelOptions{}.vocab;
  const auto tok = Tokenizer::train(corpus, vocab);
  const auto fused = tok.encode("2503").size();
  const auto spaced = tok.encode("2 5 0 3").size();
  for (const auto& line : corpus) {
    if (tok.decode(tok.encode(line)) != line) return {false, "lossy round trip: " + line};
  }
  return {fused < spaced, "vocab " + std::to_string(vocab) + ": \"2503\" -> " + std::to_string(fused) +
                              " tokens, \"2 5 0 3\" -> " + std::to_string(spaced) + "; " +
                              std::to_string(corpus.size()) + " lines round-trip"};
}

// ---------------------------------------------------------------- 6, 7

// Default model and recipe on one ADD band: 3000 training pairs with the
// 200 held-out pairs removed.
struct BandRun {
  Tokenizer tokenizer;
  Checkpoint checkpoint;
  std::vector<TestCase> tests;
  double accuracy = 0;
  double final_loss = 0;
  double seconds = 0;
};

BandRun train_band(int digits, Approach approach, const std::string& tag, double learning_rate = TrainConfig{}.learning_rate) {
  const auto t0 = Clock::now();
  BandRun run;
  run.tests = make_test_set(Operation::add(), digits, 200, 99);
  const SamplingSpec spec{Operation::add(), {{digits, 3000}}, 7};
  std::vector<std::string> lines;
  for (const auto& p : exclude_test_pairs(sample_pairs(spec), spec, run.tests))
    lines.push_back(render_observation(p.n1, p.n2, Operation::add(), approach).text);
  run.tokenizer = Tokenizer::train(lines, cli::ModelOptions{}.vocab);

  TrainConfig tc;
  tc.seed = 1;
  tc.learning_rate = learning_rate;
  ModelConfig mc;
  int last_epoch = 0;
  TrainCallbacks cb;
  cb.on_step = [&](const LossRecord& r) {
    if (r.epoch != last_epoch) {
      last_epoch = r.epoch;
      std::cerr << "  [" << tag << "] epoch " << r.epoch << "/" << tc.epochs << " loss " << fixed(r.loss, 4) << " ("
                << static_cast<long>(seconds_since(t0)) << " s)" << std::endl;
    }
  };
  auto result = train(lines, run.tokenizer, mc, tc, cb);
  run.final_loss = epoch_mean_loss(result.log, tc.epochs);
  run.checkpoint = std::move(result.checkpoint);

  const auto model = run.checkpoint.model<float>();
  const ModelGenerator<float> gen(model, run.tokenizer);
  const auto ev = evaluate(gen, run.tests, approach);
  run.accuracy = ev.tasks.at(task_key(Operation::add(), digits)).accuracy();
  run.seconds = seconds_since(t0);

  const auto dir = g_work / tag;
  fs::create_directories(dir);
  run.checkpoint.save(dir / "model.ckpt");
  run.tokenizer.save(dir / "tokenizer.txt");
  write_file_atomic(dir / "loss.csv", loss_log_csv(result.log));
  write_file_atomic(dir / "failures.jsonl", failure_samples_jsonl(ev));
  return run;
}

std::optional<BandRun> g_learn2;

const BandRun& learn2() {
  if (!g_learn2) g_learn2 = train_band(2, Approach::decomposition(), "add2_decomposition");
  return *g_learn2;
}

Outcome learnability() {
  const auto& r = learn2();
  const bool in_time = r.seconds <= 30 * 60;
  return {r.accuracy >= 90.0 && in_time, "2D+ exact match " + fixed(r.accuracy) + "% on 200 held-out pairs (bar 90), " +
                                             "final epoch loss " + fixed(r.final_loss, 4) + ", " +
                                             fixed(r.seconds / 60, 1) + " min (bound 30)"};
}

Outcome directional_gap() {
  const auto t0 = Clock::now();
  // Same budget for both formats. At lr 1e-4 the 5-digit decomposition loss
  // stalls near 0.18 within 25 epochs (digit sums never learned, 0%).
  constexpr double kLr = 1e-3;
  const auto dec = train_band(5, Approach::decomposition(), "add5_decomposition", kLr);
  const auto base = train_band(5, Approach::baseline(), "add5_baseline", kLr);
  const double total = seconds_since(t0);
  const double gap = dec.accuracy - base.accuracy;
  return {gap >= 20.0 && total <= 2 * 3600,
          "5D+ decomposition " + fixed(dec.accuracy) + "% vs baseline " + fixed(base.accuracy) + "% (gap " + fixed(gap) +
              ", bar 20), 25 epochs at lr 1e-3 each, final losses " + fixed(dec.final_loss, 4) + " / " + fixed(base.final_loss, 4) + ", " +
              fixed(total / 60, 1) + " min (bound 120)"};
}

// ---------------------------------------------------------------- 8

Outcome saliency_tendency() {
  const auto& r = learn2();
  const auto t0 = Clock::now();
  const auto model = r.checkpoint.model<float>();
  std::size_t hits = 0, located = 0, sum_line = 0;
  const std::size_t n = 100;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tc = r.tests[i];
    const auto p = probe_units_saliency(model, r.tokenizer, prompt_prefix(tc.n1, tc.n2, tc.op, Approach::decomposition()));
    hits += p.hit;
    located += p.located;
    sum_line += p.sum_line_hit;
  }
  const double secs = seconds_since(t0);
  return {2 * hits > n && secs <= 600,
          std::to_string(hits) + "/" + std::to_string(n) + " prompts with both operands' units digits in the top 3 (" +
              std::to_string(located) + " located; Sum-line copies alone " + std::to_string(sum_line) + "/" +
              std::to_string(n) + "), " + fixed(secs, 1) + " s"};
}

// ---------------------------------------------------------------- 9

Outcome eval_fidelity() {
  std::vector<TestCase> cases;
  for (const auto& op : Operation::all()) {
    const int top = op == Operation::mul() ? 2 : 5;
    for (int d = 2; d <= top; ++d) {
      const auto t = make_test_set(op, d, 100, 500 + static_cast<std::uint64_t>(d));
      cases.insert(cases.end(), t.begin(), t.end());
    }
  }
  EvalReport report;
  for (const auto& a : Approach::all()) report.add(std::string("Oracle ") + std::string(a.id()), evaluate(OracleGenerator{}, cases, a));
  report.add("Empty", evaluate(EmptyGenerator{}, cases, Approach::decomposition()));
  const auto csv = report.to_csv();
  for (const auto& row : report.rows()) {
    const std::string want = row.label == "Empty" ? "0.00" : "100.00";
    if (row.cells.size() != task_columns().size()) return {false, row.label + " is missing columns"};
    for (const auto& [task, cell] : row.cells) {
      if (format_percent(cell.accuracy) != want) return {false, row.label + " " + task + " = " + format_percent(cell.accuracy)};
    }
  }

  // Greedy decoding twice on the same trained (or, if absent, fresh) model.
  std::string which = "untrained default model";
  Tokenizer tok = Tokenizer::characters("0123456789 .,=+-abcdefghijklmnopqrstuvwxyzCFST:");
  Transformer<float> model = Transformer<float>::initialize([&] {
    ModelConfig c;
    c.vocab_size = static_cast<int>(tok.vocab_size());
    return c;
  }(), 3);
  if (g_learn2) {
    model = g_learn2->checkpoint.model<float>();
    tok = g_learn2->tokenizer;
    which = "trained 2D+ model";
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto prompt = prompt_prefix(cases[i].n1, cases[i].n2, cases[i].op, Approach::decomposition());
    const auto a = greedy_decode(model, tok, prompt);
    const auto b = greedy_decode(model, tok, prompt);
    const auto la = model.forward(tok.encode(prompt));
    const auto lb = model.forward(tok.encode(prompt));
    same += a.continuation == b.continuation && a.truncated == b.truncated &&
            std::memcmp(la.data(), lb.data(), sizeof(float) * static_cast<std::size_t>(la.size())) == 0;
  }
  if (same != 20) return {false, "greedy decoding differed on " + std::to_string(20 - same) + "/20 prompts"};
  return {true, "oracle 100.00 on all 9 columns for 3 approaches, empty 0.00 on all 9; " + which +
                    " decodes bit-identically twice on 20 prompts"};
}

// ---------------------------------------------------------------- 10

Outcome remote_contract() {
  testing::MockServer server;
  RemoteConfig cfg;
  cfg.endpoint = server.url();
  cfg.retries = 1;
  cfg.timeout_seconds = 5;
  cfg.max_cases = 100;
  std::vector<TestCase> cases;
  for (const auto& [op, d] : {std::pair{Operation::add(), 5}, std::pair{Operation::sub(), 3}}) {
    const auto t = make_test_set(op, d, 130, 8);
    cases.insert(cases.end(), t.begin(), t.end());
  }
  const auto run = run_remote_eval(cfg, cases, http_transport(cfg, std::nullopt));
  const auto bodies = server.bodies();
  if (bodies.size() != 200 || run.transcript.size() != 200)
    return {false, std::to_string(bodies.size()) + " requests for 2 tasks x 130 cases, want 200"};
  std::set<std::string> sent;
  for (const auto& b : bodies) sent.insert(nlohmann::json::parse(b)["prompt"].get<std::string>());
  for (std::size_t task = 0; task < 2; ++task) {
    for (std::size_t i = 0; i < 100; ++i) {
      const auto& tc = cases[task * 130 + i];
      if (!sent.count(build_fewshot_prompt(tc.n1, tc.n2, tc.op))) return {false, "prompt not byte-identical for case " + std::to_string(i)};
    }
  }
  const auto path = g_work / "remote_transcript.jsonl";
  fs::create_directories(g_work);
  write_file_atomic(path, transcript_jsonl(run.transcript));
  const auto replay = replay_transcript(read_file(path), cfg.response_field);
  if (replay.report.to_csv() != run.report.to_csv()) return {false, "replayed report differs"};
  return {true, "200 byte-identical prompts (first 100 of 130 per task), replay report identical: " +
                    run.report.rows().front().label};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string work = g_work.string();
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  app.add_option("--work", work, "Directory for generated datasets and trained models");
  CLI11_PARSE(app, argc, argv);
  g_work = work;
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"format byte-exactness", format_bytes},
      {"decomposition round trip", decomposition_roundtrip},
      {"dataset protocol", dataset_protocol},
      {"gradient check", gradient_check},
      {"tokenizer effect", tokenizer_effect},
      {"2-digit learnability", learnability},
      {"5-digit decomposition vs baseline", directional_gap},
      {"units-digit saliency", saliency_tendency},
      {"evaluation rule fidelity", eval_fidelity},
      {"remote client contract", remote_contract},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << " (" << fixed(seconds_since(t0), 1)
              << " s): " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
