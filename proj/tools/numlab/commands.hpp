#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "numlab/model.hpp"
#include "numlab/remote.hpp"
#include "numlab/trainer.hpp"

namespace numlab::cli {

struct Globals {
  std::uint64_t seed = 1;
  std::filesystem::path out = "out";
  std::string precision = "standard";
  bool quiet = false;

  Precision resolved_precision() const { return parse_precision(precision); }
};

// Progress goes to stderr unless --quiet.
struct Context {
  const Globals& globals;
  std::ostream& out;
  std::ostream& log;
  // Resolved option dump of the running subcommand, written as
  // manifest.ini next to every output set.
  std::string manifest;

  void write_manifest(const std::filesystem::path& dir, const std::string& extra = {}) const;
};

struct GenerateOptions {
  std::vector<std::string> ops{"add"};
  std::vector<std::string> approaches{"decomposition"};
  bool all = false;
  std::string bands;  // empty = defaults per operation
  std::vector<std::string> exclude;
  std::size_t test_count = 0;

  void add_to(CLI::App& app);
  void run(const Context& ctx) const;
};

struct ModelOptions {
  ModelConfig model;
  TrainConfig train;
  std::size_t vocab = 100;
  std::string schedule = "constant";
  std::string loss_scope = "all";

  void add_to(CLI::App& app);
};

struct TrainOptions {
  std::string data;
  bool matrix = false;
  std::string data_dir;
  ModelOptions knobs;
  std::string resume;
  std::uint64_t stop_after = 0;

  void add_to(CLI::App& app);
  void run(const Context& ctx) const;
};

struct EvalOptions {
  std::string model_dir;
  std::vector<std::string> tests;
  std::string tests_dir;
  std::string approach;
  std::string fixture;  // oracle | empty
  bool oracle = false;
  bool matrix = false;
  std::string models_dir;
  std::size_t max_new_tokens = 192;
  unsigned workers = 1;
  std::string label;

  void add_to(CLI::App& app);
  void run(const Context& ctx) const;
};

struct SaliencyOptions {
  std::string model_dir;
  std::string prompt;
  std::int64_t n1 = 0;
  std::int64_t n2 = 0;
  std::string op = "add";
  std::vector<std::size_t> positions;
  std::size_t probe = 0;
  std::vector<std::string> tests;

  void add_to(CLI::App& app);
  void run(const Context& ctx) const;
};

struct RemoteOptions {
  RemoteConfig config;
  std::string style = "decomposition-fewshot";
  std::vector<std::string> tests;
  std::string replay;

  void add_to(CLI::App& app);
  void run(const Context& ctx) const;
};

struct ReportOptions {
  std::vector<std::string> inputs;
  std::vector<std::string> compare;
  std::string format = "text";
  std::string output;

  void add_to(CLI::App& app);
  void run(const Context& ctx) const;
};

// Entry point shared by the binary and the tests. Returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace numlab::cli
