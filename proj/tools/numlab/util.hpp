#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "commands.hpp"
#include "numlab/checkpoint.hpp"
#include "numlab/datagen.hpp"
#include "numlab/eval.hpp"
#include "numlab/tokenizer.hpp"

namespace numlab::cli {

inline constexpr const char* kCheckpointFile = "model.ckpt";
inline constexpr const char* kTokenizerFile = "tokenizer.txt";
inline constexpr const char* kDatasetMetaFile = "dataset.meta";

// Throws IoError naming the command that produces the missing file.
void require_file(const std::filesystem::path& path, const std::string& producer);

// A trained model directory: checkpoint, tokenizer and the dataset sidecar.
struct LoadedModel {
  std::filesystem::path dir;
  Tokenizer tokenizer;
  Checkpoint checkpoint;
  std::optional<DatasetMeta> meta;
  std::variant<Transformer<float>, Transformer<double>> model;

  static LoadedModel load(const std::filesystem::path& dir);
  std::unique_ptr<Generator> generator(std::size_t max_new_tokens) const;
};

// Loads every file, then every *.tsv / *.jsonl in `dir` (sorted by name).
// Oracle mismatches are reported on `log` and skipped.
std::vector<TestCase> load_cases(const std::vector<std::string>& files, const std::string& dir, std::ostream& log);

std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir, const std::vector<std::string>& extensions);

Operation parse_op(const std::string& id);
Approach parse_approach(const std::string& id);

}  // namespace numlab::cli
