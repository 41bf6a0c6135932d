#include "util.hpp"

#include <algorithm>
#include <ostream>

#include "numlab/error.hpp"

namespace numlab::cli {

void require_file(const std::filesystem::path& path, const std::string& producer) {
  if (!std::filesystem::is_regular_file(path)) {
    throw IoError("missing " + path.string() + " (produce it with `" + producer + "`)");
  }
}

LoadedModel LoadedModel::load(const std::filesystem::path& dir) {
  require_file(dir / kCheckpointFile, "numlab train");
  require_file(dir / kTokenizerFile, "numlab train");
  auto tokenizer = Tokenizer::load(dir / kTokenizerFile);
  auto checkpoint = Checkpoint::load(dir / kCheckpointFile);
  if (static_cast<std::size_t>(checkpoint.config.vocab_size) != tokenizer.vocab_size()) {
    throw ValidationError(dir.string() + ": checkpoint vocabulary " + std::to_string(checkpoint.config.vocab_size) +
                          " does not match tokenizer vocabulary " + std::to_string(tokenizer.vocab_size()));
  }
  std::optional<DatasetMeta> meta;
  if (std::filesystem::is_regular_file(dir / kDatasetMetaFile)) {
    // read_dataset_meta appends ".meta" to the dataset path.
    meta = read_dataset_meta(dir / "dataset");
  }
  auto model = checkpoint.precision == Precision::kWide
                   ? std::variant<Transformer<float>, Transformer<double>>(checkpoint.model<double>())
                   : std::variant<Transformer<float>, Transformer<double>>(checkpoint.model<float>());
  return {dir, std::move(tokenizer), std::move(checkpoint), std::move(meta), std::move(model)};
}

std::unique_ptr<Generator> LoadedModel::generator(std::size_t max_new_tokens) const {
  return std::visit(
      [&](const auto& m) -> std::unique_ptr<Generator> {
        using Scalar = typename std::decay_t<decltype(m)>::Matrix::Scalar;
        return std::make_unique<ModelGenerator<Scalar>>(m, tokenizer, max_new_tokens);
      },
      model);
}

std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir, const std::vector<std::string>& extensions) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (std::find(extensions.begin(), extensions.end(), ext) != extensions.end()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<TestCase> load_cases(const std::vector<std::string>& files, const std::string& dir, std::ostream& log) {
  std::vector<std::filesystem::path> paths(files.begin(), files.end());
  if (!dir.empty()) {
    const auto more = sorted_files(dir, {".tsv", ".jsonl"});
    paths.insert(paths.end(), more.begin(), more.end());
  }
  std::vector<TestCase> cases;
  for (const auto& p : paths) {
    require_file(p, "numlab generate --test-count N");
    auto loaded = load_test_set(p, detect_test_set_format(p));
    for (const auto& w : loaded.warnings) {
      log << "warning: " << p.string() << ":" << w.line_number << ": " << w.message << " (line skipped)\n";
    }
    cases.insert(cases.end(), loaded.cases.begin(), loaded.cases.end());
  }
  return cases;
}

Operation parse_op(const std::string& id) {
  const auto op = Operation::from_id(id);
  if (!op) throw ValidationError("unknown operation '" + id + "' (expected add, sub or mul)");
  return *op;
}

Approach parse_approach(const std::string& id) {
  const auto a = Approach::from_id(id);
  if (!a) throw ValidationError("unknown approach '" + id + "' (expected decomposition, baseline or spaced)");
  return *a;
}

}  // namespace numlab::cli
