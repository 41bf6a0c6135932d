#include <ostream>

#include "commands.hpp"
#include "numlab/error.hpp"
#include "numlab/io.hpp"

namespace numlab::cli {

void Context::write_manifest(const std::filesystem::path& dir, const std::string& extra) const {
  std::string text = "# numlab resolved manifest; rerun with: numlab --config <this file>\n";
  if (!extra.empty()) {
    for (std::size_t start = 0; start < extra.size();) {
      auto end = extra.find('\n', start);
      if (end == std::string::npos) end = extra.size();
      text += "# " + extra.substr(start, end - start) + "\n";
      start = end + 1;
    }
  }
  write_file_atomic(dir / "manifest.ini", text + manifest);
}

namespace {

std::string quoted(const std::string& v) { return "\"" + v + "\""; }

// Every option of `app` with its effective value, in the config-file syntax
// that --config reads back. Help and config options are left out.
std::string dump_options(const CLI::App& app) {
  std::string text;
  for (const auto* opt : app.get_options()) {
    const auto name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "help-all") continue;
    std::vector<std::string> values;
    if (opt->count() > 0) {
      values = opt->results();
    } else {
      auto d = opt->get_default_str();
      if (opt->get_items_expected_max() > 1) {
        // Vector defaults are rendered as "[a,b]" or "{}".
        if (d.size() >= 2 && (d.front() == '[' || d.front() == '{')) d = d.substr(1, d.size() - 2);
        for (auto& item : CLI::detail::split(d, ',')) {
          if (!item.empty()) values.push_back(item);
        }
        if (values.empty()) continue;
      } else {
        values.push_back(d);
      }
    }
    if (opt->get_type_size() == 0) {  // flag
      text += name + "=" + (opt->as<bool>() ? "true" : "false") + "\n";
    } else if (opt->get_items_expected_max() > 1) {
      std::string list;
      for (const auto& v : values) list += (list.empty() ? "" : ",") + quoted(v);
      text += name + "=[" + list + "]\n";
    } else {
      text += name + "=" + quoted(values.empty() ? "" : values.back()) + "\n";
    }
  }
  return text;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Arithmetic-format experiments with a small decoder-only transformer.", "numlab"};
  app.set_config("--config", "", "INI/TOML file of options; command-line flags override it");
  app.option_defaults()->always_capture_default();

  Globals globals;
  app.add_option("--seed", globals.seed, "Master seed for sampling, initialization and shuffling");
  app.add_option("--out", globals.out, "Output directory");
  app.add_option("--precision", globals.precision, "Numeric precision: standard (32-bit) or wide (64-bit)")
      ->check(CLI::IsMember({"standard", "wide"}));
  app.add_flag("-q,--quiet", globals.quiet, "No progress output");
  app.require_subcommand(1);

  GenerateOptions generate;
  TrainOptions train;
  EvalOptions eval;
  SaliencyOptions saliency;
  RemoteOptions remote;
  ReportOptions report;

  auto* s_generate = app.add_subcommand("generate", "Write training datasets (and optional held-out test sets)");
  auto* s_train = app.add_subcommand("train", "Train a tokenizer and model on a dataset");
  auto* s_eval = app.add_subcommand("eval", "Greedy-decode test prompts and score exact match");
  auto* s_saliency = app.add_subcommand("saliency", "Input saliency for generated tokens");
  auto* s_remote = app.add_subcommand("remote", "Few-shot evaluation against a remote completion endpoint");
  auto* s_report = app.add_subcommand("report", "Merge, render or compare accuracy reports");
  generate.add_to(*s_generate);
  train.add_to(*s_train);
  eval.add_to(*s_eval);
  saliency.add_to(*s_saliency);
  remote.add_to(*s_remote);
  report.add_to(*s_report);
  for (auto* s : app.get_subcommands({})) s->configurable();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kValidation);
  }

  std::ostream null_stream(nullptr);
  CLI::App* chosen = app.get_subcommands().front();
  Context ctx{globals, out, globals.quiet ? null_stream : err,
              dump_options(app) + "[" + chosen->get_name() + "]\n" + dump_options(*chosen)};
  try {
    if (chosen == s_generate) generate.run(ctx);
    if (chosen == s_train) train.run(ctx);
    if (chosen == s_eval) eval.run(ctx);
    if (chosen == s_saliency) saliency.run(ctx);
    if (chosen == s_remote) remote.run(ctx);
    if (chosen == s_report) report.run(ctx);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kFailure);
  }
  return static_cast<int>(ExitCode::kOk);
}

}  // namespace numlab::cli
