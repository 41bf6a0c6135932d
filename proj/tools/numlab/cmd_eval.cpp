#include <ostream>

#include "commands.hpp"
#include "numlab/error.hpp"
#include "numlab/io.hpp"
#include "numlab/report.hpp"
#include "numlab/saliency.hpp"
#include "util.hpp"

namespace numlab::cli {

void EvalOptions::add_to(CLI::App& app) {
  app.add_option("--model", model_dir, "Model directory written by `numlab train`");
  app.add_option("--tests", tests, "Test-set files (native .tsv or gpt3 .jsonl)");
  app.add_option("--tests-dir", tests_dir, "Directory of test sets");
  app.add_option("--approach", approach, "Prompt approach (default: the model's training approach)");
  app.add_option("--fixture", fixture, "Evaluate a fixture instead of a model: oracle or empty")
      ->check(CLI::IsMember({"oracle", "empty"}));
  app.add_flag("--oracle", oracle, "Same as --fixture oracle");
  app.add_flag("--matrix", matrix, "Evaluate every model under --models-dir on every band of its operation");
  app.add_option("--models-dir", models_dir, "Directory of model directories for --matrix");
  app.add_option("--max-new-tokens", max_new_tokens, "Generation budget per prompt");
  app.add_option("--workers", workers, "Parallel evaluation threads");
  app.add_option("--label", label, "Report row label (default: the approach's row label)");
}

namespace {

void write_outputs(const Context& ctx, const EvalReport& report, const std::string& failures) {
  const auto& dir = ctx.globals.out;
  emit_report(report, ReportFormat::kCsv, dir / "report.csv");
  emit_report(report, ReportFormat::kText, dir / "report.txt");
  emit_report(report, ReportFormat::kHtml, dir / "report.html");
  write_file_atomic(dir / "failures.jsonl", failures);
  ctx.write_manifest(dir);
  ctx.out << report.to_text();
}

}  // namespace

void EvalOptions::run(const Context& ctx) const {
  EvalReport report;
  std::string failures;
  const std::string fixture_name = oracle ? "oracle" : fixture;

  if (!fixture_name.empty()) {
    const auto cases = load_cases(tests, tests_dir, ctx.log);
    if (cases.empty()) throw ValidationError("no test cases (pass --tests or --tests-dir)");
    const auto a = parse_approach(approach.empty() ? "decomposition" : approach);
    OracleGenerator oracle_gen;
    EmptyGenerator empty_gen;
    const Generator& gen = fixture_name == "oracle" ? static_cast<const Generator&>(oracle_gen) : empty_gen;
    const auto result = evaluate(gen, cases, a, workers);
    report.add(label.empty() ? (fixture_name == "oracle" ? "Oracle" : "Empty") : label, result);
    failures = failure_samples_jsonl(result);
    write_outputs(ctx, report, failures);
    return;
  }

  std::vector<std::filesystem::path> dirs;
  if (matrix) {
    if (models_dir.empty()) throw ValidationError("--matrix needs --models-dir");
    if (!std::filesystem::is_directory(models_dir)) {
      throw IoError("missing " + models_dir + " (produce it with `numlab train --matrix`)");
    }
    for (const auto& e : std::filesystem::directory_iterator(models_dir)) {
      if (e.is_directory() && std::filesystem::is_regular_file(e.path() / kCheckpointFile)) dirs.push_back(e.path());
    }
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw IoError("no trained models under " + models_dir + " (run `numlab train --matrix`)");
  } else {
    if (model_dir.empty()) throw ValidationError("eval needs --model, --matrix or --fixture");
    dirs.push_back(model_dir);
  }

  const auto all_cases = load_cases(tests, tests_dir, ctx.log);
  if (all_cases.empty()) throw ValidationError("no test cases (pass --tests or --tests-dir)");
  for (const auto& dir : dirs) {
    const auto loaded = LoadedModel::load(dir);
    Approach a;
    if (!approach.empty()) {
      a = parse_approach(approach);
    } else if (loaded.meta) {
      a = loaded.meta->approach;
    } else {
      throw ValidationError(dir.string() + " has no dataset.meta; pass --approach");
    }
    std::vector<TestCase> cases;
    for (const auto& tc : all_cases) {
      // In matrix mode each model sees only its own operation's bands.
      if (!matrix || !loaded.meta || tc.op == loaded.meta->spec.op) cases.push_back(tc);
    }
    ctx.log << "evaluating " << dir.string() << " (" << a.id() << ") on " << cases.size() << " cases\n";
    const auto gen = loaded.generator(max_new_tokens);
    const auto result = evaluate(*gen, cases, a, workers);
    report.add(label.empty() ? std::string(a.row_label()) : label, result);
    failures += failure_samples_jsonl(result);
  }
  write_outputs(ctx, report, failures);
}

void SaliencyOptions::add_to(CLI::App& app) {
  app.add_option("--model", model_dir, "Model directory written by `numlab train`")->required();
  app.add_option("--prompt", prompt, "Prompt text (default: the prefix for --n1 --op --n2)");
  app.add_option("--n1", n1, "First operand");
  app.add_option("--n2", n2, "Second operand");
  app.add_option("--op", op, "Operation: add, sub or mul");
  app.add_option("--positions", positions,
                 "Generated-token indices to explain (default: the Sum line's units digit)");
  app.add_option("--probe", probe, "Instead of one report, run the units-digit probe on the first N --tests cases");
  app.add_option("--tests", tests, "Test sets for --probe");
}

void SaliencyOptions::run(const Context& ctx) const {
  const auto loaded = LoadedModel::load(model_dir);
  const auto approach = loaded.meta ? loaded.meta->approach : Approach::decomposition();

  if (probe > 0) {
    auto cases = load_cases(tests, "", ctx.log);
    if (cases.size() > probe) cases.resize(probe);
    if (cases.empty()) throw ValidationError("--probe needs --tests");
    std::size_t located = 0, hits = 0, sum_line_hits = 0;
    std::string csv = "n1,op,n2,located,rank_operand1,rank_operand2,hit,sum_line_hit\n";
    for (const auto& tc : cases) {
      const auto p = std::visit(
          [&](const auto& m) {
            return probe_units_saliency(m, loaded.tokenizer, prompt_prefix(tc.n1, tc.n2, tc.op, approach));
          },
          loaded.model);
      located += p.located;
      hits += p.hit;
      sum_line_hits += p.sum_line_hit;
      csv += std::to_string(tc.n1) + "," + std::string(tc.op.id()) + "," + std::to_string(tc.n2) + "," +
             (p.located ? "1" : "0") + "," + std::to_string(p.rank_operand1) + "," + std::to_string(p.rank_operand2) +
             "," + (p.hit ? "1" : "0") + "," + (p.sum_line_hit ? "1" : "0") + "\n";
    }
    write_file_atomic(ctx.globals.out / "saliency_probe.csv", csv);
    ctx.write_manifest(ctx.globals.out);
    ctx.out << "units-digit probe: " << hits << "/" << cases.size() << " hits (" << located << " located), "
            << format_percent(100.0 * static_cast<double>(hits) / static_cast<double>(cases.size())) << "%; Sum-line copies only: "
            << sum_line_hits << "/" << cases.size() << "\n";
    return;
  }

  const std::string text = prompt.empty() ? prompt_prefix(n1, n2, parse_op(op), approach) : prompt;
  auto indices = positions;
  if (indices.empty()) {
    const auto prompt_len = loaded.tokenizer.encode(text).size();
    const auto ids = std::visit(
        [&](const auto& m) { return greedy_decode_ids(m, loaded.tokenizer.encode(text), kDefaultMaxNewTokens, loaded.tokenizer); },
        loaded.model);
    const auto units = find_units_digit_tokens(loaded.tokenizer, ids);
    if (!units || units->result <= prompt_len) {
      throw ValidationError("no Sum line with a units digit in the generation; pass --positions");
    }
    indices.push_back(units->result - 1 - prompt_len);
  }
  const auto rep = std::visit(
      [&](const auto& m) { return saliency_report(m, loaded.tokenizer, text, indices); }, loaded.model);
  write_file_atomic(ctx.globals.out / "saliency.txt", saliency_text(rep));
  write_file_atomic(ctx.globals.out / "saliency.html", saliency_html(rep));
  ctx.write_manifest(ctx.globals.out);
  ctx.out << saliency_text(rep);
}

}  // namespace numlab::cli
