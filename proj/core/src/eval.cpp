#include "numlab/eval.hpp"

#include <algorithm>
#include <thread>

#include "json.hpp"
#include "numlab/error.hpp"

namespace numlab {

namespace {

template <typename RowVector>
TokenId argmax_lowest(const RowVector& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i) {
    if (logits(i) > logits(best)) best = i;
  }
  return static_cast<TokenId>(best);
}

}  // namespace

template <typename Scalar>
std::vector<TokenId> greedy_decode_ids(const Transformer<Scalar>& model, std::span<const TokenId> prompt_ids,
                                       std::size_t max_new_tokens, const Tokenizer& tokenizer, bool* truncated) {
  const auto max_len = static_cast<std::size_t>(model.config().max_seq_len);
  std::vector<TokenId> ids{Tokenizer::kBos};
  ids.insert(ids.end(), prompt_ids.begin(), prompt_ids.end());
  if (ids.size() > max_len) {
    throw ValidationError("prompt of " + std::to_string(ids.size()) + " tokens exceeds max_seq_len " +
                          std::to_string(max_len));
  }
  typename Transformer<Scalar>::Decoder decoder(model);
  const typename Transformer<Scalar>::RowVector* logits = nullptr;
  for (const auto id : ids) logits = &decoder.push(id);

  bool cut = true;
  for (std::size_t produced = 0; produced < max_new_tokens; ++produced) {
    const TokenId next = argmax_lowest(*logits);
    if (next == Tokenizer::kEos || tokenizer.token(next).find('\n') != std::string::npos) {
      if (next != Tokenizer::kEos) ids.push_back(next);
      cut = false;
      break;
    }
    ids.push_back(next);
    if (ids.size() >= max_len) break;
    logits = &decoder.push(next);
  }
  if (truncated) *truncated = cut;
  return ids;
}

template <typename Scalar>
Generation greedy_decode(const Transformer<Scalar>& model, const Tokenizer& tokenizer, std::string_view prompt,
                         std::size_t max_new_tokens) {
  const auto prompt_ids = tokenizer.encode(prompt);
  bool truncated = false;
  const auto ids = greedy_decode_ids(model, prompt_ids, max_new_tokens, tokenizer, &truncated);
  Generation g;
  g.prompt = std::string(prompt);
  g.continuation = tokenizer.decode(std::span<const TokenId>(ids).subspan(1 + prompt_ids.size()));
  if (const auto nl = g.continuation.find('\n'); nl != std::string::npos) g.continuation.resize(nl);
  g.truncated = truncated;
  return g;
}

template Generation greedy_decode<float>(const Transformer<float>&, const Tokenizer&, std::string_view, std::size_t);
template Generation greedy_decode<double>(const Transformer<double>&, const Tokenizer&, std::string_view, std::size_t);
template std::vector<TokenId> greedy_decode_ids<float>(const Transformer<float>&, std::span<const TokenId>, std::size_t,
                                                       const Tokenizer&, bool*);
template std::vector<TokenId> greedy_decode_ids<double>(const Transformer<double>&, std::span<const TokenId>,
                                                        std::size_t, const Tokenizer&, bool*);

std::optional<PromptOperands> parse_prompt_prefix(std::string_view prompt) {
  for (const auto& approach : {Approach::decomposition(), Approach::baseline()}) {
    const std::string_view head =
        approach.kind == ApproachKind::kDecomposition ? "Compute with pipeline " : "Compute ";
    if (!prompt.starts_with(head) || !prompt.ends_with(".")) continue;
    const auto body = prompt.substr(head.size(), prompt.size() - head.size() - 1);
    const auto s1 = body.find(' ');
    const auto s2 = body.rfind(' ');
    if (s1 == std::string_view::npos || s1 == s2) continue;
    const auto op = Operation::from_word(body.substr(s1 + 1, s2 - s1 - 1));
    const auto a = extract_answer(body.substr(0, s1));
    const auto b = extract_answer(body.substr(s2 + 1));
    if (!op || !a || !b) continue;
    PromptOperands p{*a, *b, *op, approach};
    // Round-trip guards against stray text inside the numbers.
    if (prompt_prefix(p.n1, p.n2, p.op, approach) != prompt) continue;
    return p;
  }
  return std::nullopt;
}

Generation OracleGenerator::generate(const std::string& prompt) const {
  const auto p = parse_prompt_prefix(prompt);
  if (!p) return {prompt, "", false};
  // Baseline and spaced share the same prefix; the baseline continuation is
  // enough for scoring.
  const auto obs = render_observation(p->n1, p->n2, p->op, p->approach);
  return {prompt, std::string(obs.continuation()), false};
}

std::string task_key(Operation op, int band) {
  return std::to_string(band) + "D" + std::string(op.column_suffix());
}

const std::vector<std::string>& task_columns() {
  static const std::vector<std::string> cols = {"2D+", "3D+", "4D+", "5D+", "2D-", "3D-", "4D-", "5D-", "2Dx"};
  return cols;
}

EvalResult evaluate(const Generator& generator, const std::vector<TestCase>& cases, Approach approach,
                    unsigned workers) {
  EvalResult result;
  result.outcomes.resize(cases.size());
  auto run = [&](std::size_t i) {
    const auto& tc = cases[i];
    auto& out = result.outcomes[i];
    out.index = i;
    out.task = task_key(tc.op, tc.band());
    out.prompt = prompt_prefix(tc.n1, tc.n2, tc.op, approach);
    out.expected = tc.expected;
    const auto gen = generator.generate(out.prompt);
    out.generation = gen.continuation;
    out.truncated = gen.truncated;
    // Only generated text is scored: the prompt itself ends in an operand.
    out.extracted = extract_answer(gen.continuation);
    out.correct = out.extracted.has_value() && *out.extracted == tc.expected;
  };

  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(cases.size(), 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < cases.size(); ++i) run(i);
  } else {
    std::vector<std::jthread> pool;
    std::exception_ptr failure;
    std::mutex failure_mutex;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < cases.size(); i += workers) run(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    pool.clear();
    if (failure) std::rethrow_exception(failure);
  }

  for (const auto& o : result.outcomes) {
    auto& t = result.tasks[o.task];
    ++t.evaluated;
    t.correct += o.correct;
  }
  return result;
}

std::string failure_samples_jsonl(const EvalResult& result) {
  std::string out;
  for (const auto& o : result.outcomes) {
    if (o.correct) continue;
    nlohmann::json j;
    j["task"] = o.task;
    j["prompt"] = o.prompt;
    j["generation"] = o.generation;
    j["expected"] = o.expected;
    j["extracted"] = o.extracted ? nlohmann::json(*o.extracted) : nlohmann::json(nullptr);
    j["truncated"] = o.truncated;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace numlab
