#pragma once

// Decoder-only transformer (GPT-2 layout at desk scale): learned absolute
// position embeddings, pre-norm blocks, tanh-approximated GELU, untied
// output projection. Forward and backward passes are written out by hand
// and checked against finite differences in the test suite.

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "numlab/rng.hpp"
#include "numlab/tokenizer.hpp"

namespace numlab {

// Eigen's vectorized kernels peel differently depending on the address of
// mapped data, which changes summation order; keeping parameter and gradient
// buffers at a fixed alignment makes results independent of the allocator.
template <typename Scalar>
using AlignedVector = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

enum class Precision { kStandard, kWide };

std::string_view precision_id(Precision p);
Precision parse_precision(std::string_view s);

struct ModelConfig {
  int n_layers = 4;
  int n_heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int max_seq_len = 256;
  int vocab_size = 0;
  double dropout = 0.0;

  void validate() const;

  // V*d + S*d + L*(4*d^2 + 2*d*f + 9*d + f) + 2*d + d*V
  std::size_t parameter_count() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TensorInfo {
  std::string name;
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

// Named views into the flat parameter array, in storage order.
std::vector<TensorInfo> parameter_layout(const ModelConfig& config);

template <typename Scalar>
class Transformer {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  // Normal(0, 0.02) weights; residual output projections scaled by
  // 1/sqrt(2 * n_layers); layer-norm gains 1, biases 0.
  static Transformer initialize(const ModelConfig& config, std::uint64_t seed);

  Transformer(const ModelConfig& config, std::vector<Scalar> params);

  const ModelConfig& config() const { return config_; }
  const std::vector<TensorInfo>& layout() const { return layout_; }
  std::span<Scalar> params() { return params_; }
  std::span<const Scalar> params() const { return params_; }
  const TensorInfo& tensor_info(std::string_view name) const;
  ConstMatrixMap tensor(std::string_view name) const;

  // Logits for every position (T x vocab). Throws ValidationError when the
  // sequence is empty or longer than max_seq_len.
  Matrix forward(std::span<const TokenId> ids) const;

  struct LossAndGrads {
    double loss = 0.0;
    std::size_t target_count = 0;
    AlignedVector<Scalar> grads;  // parameter layout
  };

  // Mean next-token cross-entropy over all non-pad targets of the batch.
  // Each sequence is an input/target stream: position t predicts t+1.
  // Passing a generator enables dropout (if configured). If `loss_from` is
  // non-empty, targets of sequence b at indices below loss_from[b] are not
  // scored.
  LossAndGrads loss_and_grads(const std::vector<std::vector<TokenId>>& batch, Rng* dropout_rng = nullptr,
                              std::span<const std::size_t> loss_from = {}) const;

  // Loss only (no backward). Used by finite-difference checks.
  double loss(const std::vector<std::vector<TokenId>>& batch, std::span<const std::size_t> loss_from = {}) const;

  // Gradient of logits[position - 1][ids[position]] with respect to each
  // input token embedding, reduced to an L2 norm per input token and
  // normalized to sum to 1. Returns one score per token in ids[first..position).
  std::vector<double> saliency(std::span<const TokenId> ids, std::size_t position, std::size_t first = 0) const;

  // Incremental decoding with a per-layer key/value cache.
  class Decoder {
   public:
    explicit Decoder(const Transformer& model);
    // Appends one token and returns the logits predicting the next one.
    const RowVector& push(TokenId id);
    std::size_t length() const { return length_; }

   private:
    const Transformer* model_;
    std::vector<Matrix> keys_;
    std::vector<Matrix> values_;
    std::size_t length_ = 0;
    RowVector logits_;
  };

 private:
  struct Cache;

  void run_forward(const std::vector<std::vector<TokenId>>& batch, Cache& cache, Rng* dropout_rng) const;
  // Backpropagates d(objective)/d(logits) into parameter gradients (added to
  // grads) and returns d(objective)/d(input embedding) per row.
  Matrix run_backward(const Cache& cache, const Matrix& dlogits, AlignedVector<Scalar>& grads) const;

  ModelConfig config_;
  std::vector<TensorInfo> layout_;
  AlignedVector<Scalar> params_;
};

extern template class Transformer<float>;
extern template class Transformer<double>;

}  // namespace numlab
