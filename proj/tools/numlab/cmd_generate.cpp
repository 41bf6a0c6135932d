#include <map>
#include <ostream>

#include "commands.hpp"
#include "numlab/error.hpp"
#include "numlab/rng.hpp"
#include "util.hpp"

namespace numlab::cli {

void GenerateOptions::add_to(CLI::App& app) {
  app.add_option("--op", ops, "Operations: add, sub, mul");
  app.add_option("--approach", approaches, "Approaches: decomposition, baseline, spaced");
  app.add_flag("--all", all, "Every operation x approach (9 datasets)");
  app.add_option("--bands", bands, "Override bands as digits:count,... (default 2..5 x 3000, mul 2 x 3000)");
  app.add_option("--exclude", exclude, "Test-set files whose pairs must not appear in training data");
  app.add_option("--test-count", test_count, "Also write a held-out test set of N pairs per band to <out>/tests");
}

void GenerateOptions::run(const Context& ctx) const {
  std::vector<Operation> op_list;
  std::vector<Approach> approach_list;
  if (all) {
    for (const auto* id : {"add", "sub", "mul"}) op_list.push_back(parse_op(id));
    approach_list = Approach::all();
  } else {
    for (const auto& id : ops) op_list.push_back(parse_op(id));
    for (const auto& id : approaches) approach_list.push_back(parse_approach(id));
  }
  if (op_list.empty() || approach_list.empty()) throw ValidationError("nothing to generate");

  const auto& out = ctx.globals.out;
  const auto external = load_cases(exclude, "", ctx.log);
  std::string summary;

  for (const auto op : op_list) {
    auto spec = SamplingSpec::defaults(op, mix_seed(ctx.globals.seed, static_cast<std::uint64_t>(op.kind)));
    if (!bands.empty()) spec.bands = parse_bands(bands);
    spec.validate();

    std::vector<TestCase> held_out;
    for (const auto& tc : external) {
      if (tc.op == op) held_out.push_back(tc);
    }
    if (test_count > 0) {
      for (const auto& band : spec.bands) {
        auto cases = make_test_set(op, band.digits, test_count, ctx.globals.seed);
        const auto path = out / "tests" / (std::string(op.id()) + "_" + std::to_string(band.digits) + "d.tsv");
        write_test_set(cases, path);
        ctx.log << "wrote " << path.string() << " (" << cases.size() << " cases)\n";
        held_out.insert(held_out.end(), cases.begin(), cases.end());
      }
    }

    const auto pairs = exclude_test_pairs(sample_pairs(spec), spec, held_out);
    for (const auto approach : approach_list) {
      const auto path = out / (std::string(op.id()) + "_" + std::string(approach.id()) + ".txt");
      write_dataset(pairs, {spec, approach, held_out.size()}, path);
      ctx.log << "wrote " << path.string() << " (" << pairs.size() << " lines)\n";
      summary += path.filename().string() + ": " + std::to_string(pairs.size()) + " lines, bands " +
                 format_bands(spec.bands) + "\n";
    }
  }
  ctx.write_manifest(out, summary);
}

}  // namespace numlab::cli
