#include <benchmark/benchmark.h>

#include "numlab/arith_format.hpp"
#include "numlab/datagen.hpp"
#include "numlab/eval.hpp"
#include "numlab/model.hpp"
#include "numlab/tokenizer.hpp"

using namespace numlab;

namespace {

std::vector<std::string> corpus(Approach a, int digits, std::size_t n) {
  std::vector<std::string> lines;
  for (const auto& p : sample_pairs({Operation::add(), {{digits, n}}, 1}))
    lines.push_back(render_observation(p.n1, p.n2, Operation::add(), a).text);
  return lines;
}

const Tokenizer& tokenizer() {
  static const Tokenizer tok = Tokenizer::train(corpus(Approach::decomposition(), 2, 3000), 100);
  return tok;
}

ModelConfig default_config() {
  ModelConfig c;
  c.vocab_size = static_cast<int>(tokenizer().vocab_size());
  return c;
}

std::vector<std::vector<TokenId>> batch(std::size_t n) {
  std::vector<std::vector<TokenId>> out;
  for (const auto& line : corpus(Approach::decomposition(), 2, n)) {
    std::vector<TokenId> ids{Tokenizer::kBos};
    const auto enc = tokenizer().encode(line);
    ids.insert(ids.end(), enc.begin(), enc.end());
    ids.push_back(Tokenizer::kEos);
    out.push_back(std::move(ids));
  }
  return out;
}

template <typename Scalar>
void BM_TrainStep(benchmark::State& state) {
  const auto m = Transformer<Scalar>::initialize(default_config(), 1);
  const auto b = batch(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(m.loss_and_grads(b).loss);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep<float>)->Arg(1)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TrainStep<double>)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Forward(benchmark::State& state) {
  const auto m = Transformer<float>::initialize(default_config(), 1);
  const auto ids = batch(1).front();
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(ids).data());
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMicrosecond);

void BM_GreedyDecode(benchmark::State& state) {
  const auto m = Transformer<float>::initialize(default_config(), 1);
  const auto prompt = prompt_prefix(47, 58, Operation::add(), Approach::decomposition());
  for (auto _ : state) benchmark::DoNotOptimize(greedy_decode(m, tokenizer(), prompt, 64).continuation);
}
BENCHMARK(BM_GreedyDecode)->Unit(benchmark::kMillisecond);

void BM_TokenizerEncode(benchmark::State& state) {
  const auto lines = corpus(Approach::decomposition(), 5, 100);
  std::size_t bytes = 0;
  for (const auto& l : lines) bytes += l.size();
  for (auto _ : state)
    for (const auto& l : lines) benchmark::DoNotOptimize(tokenizer().encode(l).data());
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes));
}
BENCHMARK(BM_TokenizerEncode);

void BM_TokenizerTrain(benchmark::State& state) {
  const auto lines = corpus(Approach::baseline(), 4, 3000);
  for (auto _ : state) benchmark::DoNotOptimize(Tokenizer::train(lines, 300).vocab_size());
}
BENCHMARK(BM_TokenizerTrain)->Unit(benchmark::kMillisecond);

void BM_RenderObservation(benchmark::State& state) {
  std::int64_t n = 10000;
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_observation(n, 99999 - n, Operation::add(), Approach::decomposition()).text);
    n = n == 99999 ? 10000 : n + 1;
  }
}
BENCHMARK(BM_RenderObservation);

}  // namespace

// The distro benchmark_main archive carries LTO bytecode from another compiler.
BENCHMARK_MAIN();
