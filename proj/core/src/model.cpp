#include "numlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "numlab/error.hpp"

namespace numlab {

std::string_view precision_id(Precision p) { return p == Precision::kWide ? "wide" : "standard"; }

Precision parse_precision(std::string_view s) {
  if (s == "wide" || s == "double" || s == "f64") return Precision::kWide;
  if (s == "standard" || s == "single" || s == "float" || s == "f32") return Precision::kStandard;
  throw ValidationError("unknown precision \"" + std::string(s) + "\" (expected standard|wide)");
}

void ModelConfig::validate() const {
  if (n_layers <= 0 || n_heads <= 0 || d_model <= 0 || d_ff <= 0 || max_seq_len <= 0 || vocab_size <= 0) {
    throw ValidationError("model dimensions must be positive (vocab_size " + std::to_string(vocab_size) + ")");
  }
  if (d_model % n_heads != 0) {
    throw ValidationError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                          std::to_string(n_heads));
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must be in [0, 1)");
}

std::size_t ModelConfig::parameter_count() const {
  const std::size_t V = static_cast<std::size_t>(vocab_size), S = static_cast<std::size_t>(max_seq_len);
  const std::size_t d = static_cast<std::size_t>(d_model), f = static_cast<std::size_t>(d_ff);
  const std::size_t L = static_cast<std::size_t>(n_layers);
  return V * d + S * d + L * (4 * d * d + 2 * d * f + 9 * d + f) + 2 * d + d * V;
}

std::vector<TensorInfo> parameter_layout(const ModelConfig& c) {
  std::vector<TensorInfo> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    out.push_back({std::move(name), offset, rows, cols});
    offset += out.back().size();
  };
  const int d = c.d_model;
  add("wte", c.vocab_size, d);
  add("wpe", c.max_seq_len, d);
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string p = "h" + std::to_string(l) + ".";
    add(p + "ln1.g", 1, d);
    add(p + "ln1.b", 1, d);
    add(p + "attn.qkv.w", d, 3 * d);
    add(p + "attn.qkv.b", 1, 3 * d);
    add(p + "attn.proj.w", d, d);
    add(p + "attn.proj.b", 1, d);
    add(p + "ln2.g", 1, d);
    add(p + "ln2.b", 1, d);
    add(p + "mlp.fc.w", d, c.d_ff);
    add(p + "mlp.fc.b", 1, c.d_ff);
    add(p + "mlp.proj.w", c.d_ff, d);
    add(p + "mlp.proj.b", 1, d);
  }
  add("ln_f.g", 1, d);
  add("ln_f.b", 1, d);
  add("lm_head.w", d, c.vocab_size);
  return out;
}

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr int kTensorsPerLayer = 12;

// Indices into parameter_layout() for one block.
enum LayerTensor {
  kLn1G, kLn1B, kQkvW, kQkvB, kProjW, kProjB, kLn2G, kLn2B, kFcW, kFcB, kFcProjW, kFcProjB,
};

std::size_t layer_index(int layer, LayerTensor t) {
  return 2 + static_cast<std::size_t>(layer) * kTensorsPerLayer + static_cast<std::size_t>(t);
}

}  // namespace

template <typename Scalar>
struct Transformer<Scalar>::Cache {
  using ColVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix xhat1;
    ColVector rstd1;
    Matrix a;
    Matrix qkv;
    AlignedVector<Scalar> probs;
    Matrix attn;
    Matrix attn_mask;
    Matrix xhat2;
    ColVector rstd2;
    Matrix c;
    Matrix pre_gelu;
    Matrix gelu_tanh;
    Matrix gelu;
    Matrix mlp_mask;
  };

  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> prob_offsets;
  std::vector<TokenId> inputs;
  std::vector<int> positions;
  Matrix emb_mask;
  std::vector<Layer> layers;
  Matrix xhatf;
  ColVector rstdf;
  Matrix z;
  Matrix logits;
  std::size_t rows = 0;
};

namespace {

template <typename Matrix, typename ColVector, typename RowVector>
void layer_norm(const Matrix& x, const RowVector& gain, const RowVector& bias, Matrix& xhat, ColVector& rstd,
                Matrix& out) {
  using Scalar = typename Matrix::Scalar;
  const ColVector mean = x.rowwise().mean();
  xhat = x.colwise() - mean;
  rstd = (xhat.array().square().rowwise().mean() + Scalar(kLayerNormEps)).rsqrt().matrix();
  xhat.array().colwise() *= rstd.array();
  out = (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
}

// dx from dy; accumulates dgain/dbias.
template <typename Matrix, typename ColVector, typename GainMap, typename GradMap>
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const ColVector& rstd, const GainMap& gain,
                           GradMap dgain, GradMap dbias) {
  dgain += (dy.array() * xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  using RowVector = Eigen::Matrix<typename Matrix::Scalar, 1, Eigen::Dynamic>;
  const RowVector g = gain;
  Matrix dxhat = dy.array().rowwise() * g.array();
  const ColVector m1 = dxhat.rowwise().mean();
  const ColVector m2 = (dxhat.array() * xhat.array()).rowwise().mean().matrix();
  Matrix dx = dxhat.colwise() - m1;
  dx -= (xhat.array().colwise() * m2.array()).matrix();
  dx.array().colwise() *= rstd.array();
  return dx;
}

template <typename Scalar>
constexpr Scalar kGeluK = Scalar(0.7978845608028654);  // sqrt(2/pi)
template <typename Scalar>
constexpr Scalar kGeluC = Scalar(0.044715);

template <typename Scalar>
Scalar gelu(Scalar x) {
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(kGeluK<Scalar> * (x + kGeluC<Scalar> * x * x * x)));
}

// Vectorized forms; the tanh term is kept for the backward pass.
template <typename Matrix>
void gelu_forward(const Matrix& x, Matrix& tanh_term, Matrix& out) {
  using Scalar = typename Matrix::Scalar;
  tanh_term = (kGeluK<Scalar> * (x.array() + kGeluC<Scalar> * x.array().cube())).tanh().matrix();
  out = (Scalar(0.5) * x.array() * (Scalar(1) + tanh_term.array())).matrix();
}

template <typename Matrix>
void gelu_backward(const Matrix& x, const Matrix& tanh_term, Matrix& grad) {
  using Scalar = typename Matrix::Scalar;
  const auto t = tanh_term.array();
  grad.array() *= Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x.array() * (Scalar(1) - t.square()) *
                                                      kGeluK<Scalar> *
                                                      (Scalar(1) + Scalar(3) * kGeluC<Scalar> * x.array().square());
}

template <typename Matrix>
void make_dropout_mask(Matrix& mask, Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  using Scalar = typename Matrix::Scalar;
  mask.resize(rows, cols);
  const Scalar keep_scale = Scalar(1.0 / (1.0 - p));
  const auto threshold = static_cast<std::uint64_t>(p * 18446744073709551616.0);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng() >= threshold ? keep_scale : Scalar(0);
}

}  // namespace

template <typename Scalar>
Transformer<Scalar> Transformer<Scalar>::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const auto layout = parameter_layout(config);
  std::vector<Scalar> params(config.parameter_count(), Scalar(0));
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  const double resid_scale = 1.0 / std::sqrt(2.0 * config.n_layers);
  for (const auto& t : layout) {
    const bool is_gain = t.name.ends_with(".g");
    const bool is_bias = t.name.ends_with(".b");
    const bool is_residual_proj = t.name.ends_with("attn.proj.w") || t.name.ends_with("mlp.proj.w");
    for (std::size_t i = 0; i < t.size(); ++i) {
      Scalar& v = params[t.offset + i];
      if (is_gain) {
        v = Scalar(1);
      } else if (is_bias) {
        v = Scalar(0);
      } else {
        v = static_cast<Scalar>(normal(rng) * (is_residual_proj ? resid_scale : 1.0));
      }
    }
  }
  return Transformer(config, std::move(params));
}

template <typename Scalar>
Transformer<Scalar>::Transformer(const ModelConfig& config, std::vector<Scalar> params)
    : config_(config), layout_(parameter_layout(config)), params_(params.begin(), params.end()) {
  config_.validate();
  if (params_.size() != config_.parameter_count()) {
    throw ValidationError("parameter array has " + std::to_string(params_.size()) + " values, config needs " +
                          std::to_string(config_.parameter_count()));
  }
}

template <typename Scalar>
const TensorInfo& Transformer<Scalar>::tensor_info(std::string_view name) const {
  for (const auto& t : layout_) {
    if (t.name == name) return t;
  }
  throw ValidationError("no parameter tensor named \"" + std::string(name) + "\"");
}

template <typename Scalar>
typename Transformer<Scalar>::ConstMatrixMap Transformer<Scalar>::tensor(std::string_view name) const {
  const auto& t = tensor_info(name);
  return ConstMatrixMap(params_.data() + t.offset, t.rows, t.cols);
}

template <typename Scalar>
void Transformer<Scalar>::run_forward(const std::vector<std::vector<TokenId>>& batch, Cache& cache,
                                      Rng* dropout_rng) const {
  using ColVector = typename Cache::ColVector;
  const int d = config_.d_model;
  const int H = config_.n_heads;
  const int dh = d / H;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const bool dropout = dropout_rng != nullptr && config_.dropout > 0.0;

  auto P = [&](std::size_t idx) {
    const auto& t = layout_[idx];
    return ConstMatrixMap(params_.data() + t.offset, t.rows, t.cols);
  };

  cache.offsets.clear();
  cache.lengths.clear();
  cache.prob_offsets.clear();
  cache.inputs.clear();
  cache.positions.clear();
  std::size_t rows = 0;
  std::size_t prob_total = 0;
  for (const auto& seq : batch) {
    if (seq.empty()) throw ValidationError("empty sequence in batch");
    if (seq.size() > static_cast<std::size_t>(config_.max_seq_len)) {
      throw ValidationError("sequence of " + std::to_string(seq.size()) + " tokens exceeds max_seq_len " +
                            std::to_string(config_.max_seq_len));
    }
    cache.offsets.push_back(rows);
    cache.lengths.push_back(seq.size());
    cache.prob_offsets.push_back(prob_total);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (seq[t] < 0 || seq[t] >= config_.vocab_size) {
        throw ValidationError("token id " + std::to_string(seq[t]) + " outside vocabulary");
      }
      cache.inputs.push_back(seq[t]);
      cache.positions.push_back(static_cast<int>(t));
    }
    rows += seq.size();
    prob_total += seq.size() * seq.size() * static_cast<std::size_t>(H);
  }
  cache.rows = rows;
  const auto N = static_cast<Eigen::Index>(rows);

  const auto wte = P(0);
  const auto wpe = P(1);
  Matrix h(N, d);
  for (Eigen::Index r = 0; r < N; ++r) {
    h.row(r) = wte.row(cache.inputs[static_cast<std::size_t>(r)]) + wpe.row(cache.positions[static_cast<std::size_t>(r)]);
  }
  if (dropout) {
    make_dropout_mask(cache.emb_mask, N, d, config_.dropout, *dropout_rng);
    h.array() *= cache.emb_mask.array();
  }

  cache.layers.resize(static_cast<std::size_t>(config_.n_layers));
  for (int l = 0; l < config_.n_layers; ++l) {
    auto& lc = cache.layers[static_cast<std::size_t>(l)];
    const RowVector ln1g = P(layer_index(l, kLn1G));
    const RowVector ln1b = P(layer_index(l, kLn1B));
    layer_norm(h, ln1g, ln1b, lc.xhat1, lc.rstd1, lc.a);

    lc.qkv.resize(N, 3 * d);
    lc.qkv.noalias() = lc.a * P(layer_index(l, kQkvW));
    lc.qkv.rowwise() += RowVector(P(layer_index(l, kQkvB)));

    lc.probs.resize(prob_total);
    lc.attn.resize(N, d);
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto off = static_cast<Eigen::Index>(cache.offsets[b]);
      const auto T = static_cast<Eigen::Index>(cache.lengths[b]);
      for (int head = 0; head < H; ++head) {
        const auto q = lc.qkv.block(off, head * dh, T, dh);
        const auto k = lc.qkv.block(off, d + head * dh, T, dh);
        const auto v = lc.qkv.block(off, 2 * d + head * dh, T, dh);
        MatrixMap prob(lc.probs.data() + cache.prob_offsets[b] + static_cast<std::size_t>(head * T * T), T, T);
        prob.noalias() = (q * k.transpose()) * scale;
        for (Eigen::Index i = 0; i < T; ++i) {
          auto row = prob.row(i);
          const Scalar mx = row.head(i + 1).maxCoeff();
          row.head(i + 1) = (row.head(i + 1).array() - mx).exp();
          row.head(i + 1) /= row.head(i + 1).sum();
          row.tail(T - i - 1).setZero();
        }
        lc.attn.block(off, head * dh, T, dh).noalias() = prob * v;
      }
    }
    Matrix y(N, d);
    y.noalias() = lc.attn * P(layer_index(l, kProjW));
    y.rowwise() += RowVector(P(layer_index(l, kProjB)));
    if (dropout) {
      make_dropout_mask(lc.attn_mask, N, d, config_.dropout, *dropout_rng);
      y.array() *= lc.attn_mask.array();
    }
    h += y;

    const RowVector ln2g = P(layer_index(l, kLn2G));
    const RowVector ln2b = P(layer_index(l, kLn2B));
    layer_norm(h, ln2g, ln2b, lc.xhat2, lc.rstd2, lc.c);
    lc.pre_gelu.resize(N, config_.d_ff);
    lc.pre_gelu.noalias() = lc.c * P(layer_index(l, kFcW));
    lc.pre_gelu.rowwise() += RowVector(P(layer_index(l, kFcB)));
    gelu_forward(lc.pre_gelu, lc.gelu_tanh, lc.gelu);
    Matrix m(N, d);
    m.noalias() = lc.gelu * P(layer_index(l, kFcProjW));
    m.rowwise() += RowVector(P(layer_index(l, kFcProjB)));
    if (dropout) {
      make_dropout_mask(lc.mlp_mask, N, d, config_.dropout, *dropout_rng);
      m.array() *= lc.mlp_mask.array();
    }
    h += m;
  }

  const std::size_t final_idx = 2 + static_cast<std::size_t>(config_.n_layers) * kTensorsPerLayer;
  const RowVector lnfg = P(final_idx);
  const RowVector lnfb = P(final_idx + 1);
  layer_norm(h, lnfg, lnfb, cache.xhatf, cache.rstdf, cache.z);
  cache.logits.resize(N, config_.vocab_size);
  cache.logits.noalias() = cache.z * P(final_idx + 2);
}

template <typename Scalar>
typename Transformer<Scalar>::Matrix Transformer<Scalar>::run_backward(const Cache& cache, const Matrix& dlogits,
                                                                      AlignedVector<Scalar>& grads) const {
  using ColVector = typename Cache::ColVector;
  const int d = config_.d_model;
  const int H = config_.n_heads;
  const int dh = d / H;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const auto N = static_cast<Eigen::Index>(cache.rows);

  auto P = [&](std::size_t idx) {
    const auto& t = layout_[idx];
    return ConstMatrixMap(params_.data() + t.offset, t.rows, t.cols);
  };
  auto G = [&](std::size_t idx) {
    const auto& t = layout_[idx];
    return MatrixMap(grads.data() + t.offset, t.rows, t.cols);
  };

  const std::size_t final_idx = 2 + static_cast<std::size_t>(config_.n_layers) * kTensorsPerLayer;
  G(final_idx + 2).noalias() += cache.z.transpose() * dlogits;
  Matrix dz(N, d);
  dz.noalias() = dlogits * P(final_idx + 2).transpose();
  Matrix dres = layer_norm_backward<Matrix, ColVector>(dz, cache.xhatf, cache.rstdf, P(final_idx), G(final_idx),
                                                     G(final_idx + 1));

  for (int l = config_.n_layers - 1; l >= 0; --l) {
    const auto& lc = cache.layers[static_cast<std::size_t>(l)];

    // MLP branch.
    Matrix dm = dres;
    if (lc.mlp_mask.size() != 0) dm.array() *= lc.mlp_mask.array();
    G(layer_index(l, kFcProjW)).noalias() += lc.gelu.transpose() * dm;
    G(layer_index(l, kFcProjB)) += dm.colwise().sum();
    Matrix dpre(N, config_.d_ff);
    dpre.noalias() = dm * P(layer_index(l, kFcProjW)).transpose();
    gelu_backward(lc.pre_gelu, lc.gelu_tanh, dpre);
    G(layer_index(l, kFcW)).noalias() += lc.c.transpose() * dpre;
    G(layer_index(l, kFcB)) += dpre.colwise().sum();
    Matrix dc(N, d);
    dc.noalias() = dpre * P(layer_index(l, kFcW)).transpose();
    dres += layer_norm_backward<Matrix, ColVector>(dc, lc.xhat2, lc.rstd2, P(layer_index(l, kLn2G)),
                                                 G(layer_index(l, kLn2G)), G(layer_index(l, kLn2B)));

    // Attention branch.
    Matrix dy = dres;
    if (lc.attn_mask.size() != 0) dy.array() *= lc.attn_mask.array();
    G(layer_index(l, kProjW)).noalias() += lc.attn.transpose() * dy;
    G(layer_index(l, kProjB)) += dy.colwise().sum();
    Matrix dattn(N, d);
    dattn.noalias() = dy * P(layer_index(l, kProjW)).transpose();

    Matrix dqkv(N, 3 * d);
    for (std::size_t b = 0; b < cache.offsets.size(); ++b) {
      const auto off = static_cast<Eigen::Index>(cache.offsets[b]);
      const auto T = static_cast<Eigen::Index>(cache.lengths[b]);
      for (int head = 0; head < H; ++head) {
        const auto q = lc.qkv.block(off, head * dh, T, dh);
        const auto k = lc.qkv.block(off, d + head * dh, T, dh);
        const auto v = lc.qkv.block(off, 2 * d + head * dh, T, dh);
        ConstMatrixMap prob(lc.probs.data() + cache.prob_offsets[b] + static_cast<std::size_t>(head * T * T), T, T);
        const auto dout = dattn.block(off, head * dh, T, dh);
        Matrix dprob(T, T);
        dprob.noalias() = dout * v.transpose();
        dqkv.block(off, 2 * d + head * dh, T, dh).noalias() = prob.transpose() * dout;
        const ColVector inner = (dprob.array() * prob.array()).rowwise().sum().matrix();
        Matrix dscore = prob.array() * (dprob.colwise() - inner).array();
        dscore *= scale;
        dqkv.block(off, head * dh, T, dh).noalias() = dscore * k;
        dqkv.block(off, d + head * dh, T, dh).noalias() = dscore.transpose() * q;
      }
    }
    G(layer_index(l, kQkvW)).noalias() += lc.a.transpose() * dqkv;
    G(layer_index(l, kQkvB)) += dqkv.colwise().sum();
    Matrix da(N, d);
    da.noalias() = dqkv * P(layer_index(l, kQkvW)).transpose();
    dres += layer_norm_backward<Matrix, ColVector>(da, lc.xhat1, lc.rstd1, P(layer_index(l, kLn1G)),
                                                 G(layer_index(l, kLn1G)), G(layer_index(l, kLn1B)));
  }

  if (cache.emb_mask.size() != 0) dres.array() *= cache.emb_mask.array();
  auto dwte = G(0);
  auto dwpe = G(1);
  for (Eigen::Index r = 0; r < N; ++r) {
    dwte.row(cache.inputs[static_cast<std::size_t>(r)]) += dres.row(r);
    dwpe.row(cache.positions[static_cast<std::size_t>(r)]) += dres.row(r);
  }
  return dres;
}

namespace {

// Softmax cross-entropy over valid targets. Writes d(mean loss)/d(logits)
// into dlogits and returns (summed loss, count).
template <typename Matrix>
std::pair<double, std::size_t> cross_entropy(const Matrix& logits, const std::vector<std::size_t>& offsets,
                                             const std::vector<std::size_t>& lengths,
                                             const std::vector<std::vector<TokenId>>& batch,
                                             std::span<const std::size_t> loss_from, Matrix* dlogits) {
  using Scalar = typename Matrix::Scalar;
  if (!loss_from.empty() && loss_from.size() != batch.size()) {
    throw ValidationError("loss_from has " + std::to_string(loss_from.size()) + " entries for a batch of " +
                          std::to_string(batch.size()));
  }
  auto scored = [&](std::size_t b, std::size_t t) {
    return batch[b][t + 1] != Tokenizer::kPad && (loss_from.empty() || t + 1 >= loss_from[b]);
  };
  std::size_t count = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t t = 0; t + 1 < lengths[b]; ++t) count += scored(b, t);
  }
  if (dlogits) dlogits->setZero(logits.rows(), logits.cols());
  if (count == 0) return {0.0, 0};
  double total = 0.0;
  const Scalar inv = Scalar(1.0 / static_cast<double>(count));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t t = 0; t + 1 < lengths[b]; ++t) {
      if (!scored(b, t)) continue;
      const TokenId target = batch[b][t + 1];
      const auto r = static_cast<Eigen::Index>(offsets[b] + t);
      const auto row = logits.row(r);
      const Scalar mx = row.maxCoeff();
      const auto shifted = (row.array() - mx).exp();
      const Scalar sum = shifted.sum();
      total += static_cast<double>(std::log(sum) + mx - row(target));
      if (dlogits) {
        dlogits->row(r) = (shifted / sum * inv).matrix();
        (*dlogits)(r, target) -= inv;
      }
    }
  }
  return {total, count};
}

}  // namespace

template <typename Scalar>
typename Transformer<Scalar>::Matrix Transformer<Scalar>::forward(std::span<const TokenId> ids) const {
  Cache cache;
  run_forward({std::vector<TokenId>(ids.begin(), ids.end())}, cache, nullptr);
  return std::move(cache.logits);
}

template <typename Scalar>
typename Transformer<Scalar>::LossAndGrads Transformer<Scalar>::loss_and_grads(
    const std::vector<std::vector<TokenId>>& batch, Rng* dropout_rng, std::span<const std::size_t> loss_from) const {
  if (batch.empty()) throw ValidationError("loss_and_grads called with an empty batch");
  Cache cache;
  run_forward(batch, cache, dropout_rng);
  Matrix dlogits;
  const auto [total, count] = cross_entropy(cache.logits, cache.offsets, cache.lengths, batch, loss_from, &dlogits);
  LossAndGrads out;
  out.grads.assign(params_.size(), Scalar(0));
  out.target_count = count;
  if (count == 0) return out;
  out.loss = total / static_cast<double>(count);
  run_backward(cache, dlogits, out.grads);
  return out;
}

template <typename Scalar>
double Transformer<Scalar>::loss(const std::vector<std::vector<TokenId>>& batch,
                                 std::span<const std::size_t> loss_from) const {
  if (batch.empty()) throw ValidationError("loss called with an empty batch");
  Cache cache;
  run_forward(batch, cache, nullptr);
  const auto [total, count] = cross_entropy<Matrix>(cache.logits, cache.offsets, cache.lengths, batch, loss_from, nullptr);
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

template <typename Scalar>
std::vector<double> Transformer<Scalar>::saliency(std::span<const TokenId> ids, std::size_t position,
                                                  std::size_t first) const {
  if (position == 0 || position >= ids.size()) {
    throw ValidationError("saliency position " + std::to_string(position) + " outside (0, " +
                          std::to_string(ids.size()) + ")");
  }
  if (first >= position) throw ValidationError("saliency range is empty");
  // Only the prefix feeding the target logit matters (causal model).
  const std::vector<TokenId> prefix(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(position));
  Cache cache;
  run_forward({prefix}, cache, nullptr);
  Matrix dlogits = Matrix::Zero(cache.logits.rows(), cache.logits.cols());
  dlogits(static_cast<Eigen::Index>(position - 1), ids[position]) = Scalar(1);
  AlignedVector<Scalar> scratch(params_.size(), Scalar(0));
  const Matrix demb = run_backward(cache, dlogits, scratch);

  std::vector<double> scores;
  scores.reserve(position - first);
  double total = 0.0;
  for (std::size_t i = first; i < position; ++i) {
    const double n = static_cast<double>(demb.row(static_cast<Eigen::Index>(i)).norm());
    scores.push_back(n);
    total += n;
  }
  if (total > 0.0) {
    for (auto& s : scores) s /= total;
  } else {
    std::fill(scores.begin(), scores.end(), 1.0 / static_cast<double>(scores.size()));
  }
  return scores;
}

// ------------------------------------------------------------------ Decoder

template <typename Scalar>
Transformer<Scalar>::Decoder::Decoder(const Transformer& model) : model_(&model) {
  const auto& c = model.config_;
  keys_.assign(static_cast<std::size_t>(c.n_layers), Matrix(c.max_seq_len, c.d_model));
  values_.assign(static_cast<std::size_t>(c.n_layers), Matrix(c.max_seq_len, c.d_model));
}

template <typename Scalar>
const typename Transformer<Scalar>::RowVector& Transformer<Scalar>::Decoder::push(TokenId id) {
  const auto& m = *model_;
  const auto& c = m.config_;
  if (length_ >= static_cast<std::size_t>(c.max_seq_len)) {
    throw ValidationError("decoder context full (max_seq_len " + std::to_string(c.max_seq_len) + ")");
  }
  if (id < 0 || id >= c.vocab_size) throw ValidationError("token id " + std::to_string(id) + " outside vocabulary");
  const int d = c.d_model;
  const int H = c.n_heads;
  const int dh = d / H;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
  const auto t = static_cast<Eigen::Index>(length_);
  auto P = [&](std::size_t idx) {
    const auto& ti = m.layout_[idx];
    return ConstMatrixMap(m.params_.data() + ti.offset, ti.rows, ti.cols);
  };
  auto norm = [](const RowVector& x, const auto& g, const auto& b) {
    const Scalar mean = x.mean();
    const RowVector xc = x.array() - mean;
    const Scalar rstd = Scalar(1) / std::sqrt(xc.squaredNorm() / static_cast<Scalar>(x.size()) + Scalar(kLayerNormEps));
    return RowVector((xc.array() * rstd * g.array() + b.array()).matrix());
  };

  RowVector h = P(0).row(id) + P(1).row(t);
  for (int l = 0; l < c.n_layers; ++l) {
    const RowVector a = norm(h, P(layer_index(l, kLn1G)), P(layer_index(l, kLn1B)));
    RowVector qkv = a * P(layer_index(l, kQkvW));
    qkv += P(layer_index(l, kQkvB));
    auto& K = keys_[static_cast<std::size_t>(l)];
    auto& V = values_[static_cast<std::size_t>(l)];
    K.row(t) = qkv.segment(d, d);
    V.row(t) = qkv.segment(2 * d, d);
    RowVector attn(d);
    for (int head = 0; head < H; ++head) {
      const auto q = qkv.segment(head * dh, dh);
      const auto k = K.block(0, head * dh, t + 1, dh);
      const auto v = V.block(0, head * dh, t + 1, dh);
      RowVector s = (q * k.transpose()) * scale;
      s = (s.array() - s.maxCoeff()).exp();
      s /= s.sum();
      attn.segment(head * dh, dh).noalias() = s * v;
    }
    RowVector y = attn * P(layer_index(l, kProjW));
    h += y + RowVector(P(layer_index(l, kProjB)));
    const RowVector cvec = norm(h, P(layer_index(l, kLn2G)), P(layer_index(l, kLn2B)));
    RowVector f = cvec * P(layer_index(l, kFcW));
    f += P(layer_index(l, kFcB));
    f = f.unaryExpr([](Scalar x) { return gelu(x); });
    RowVector mo = f * P(layer_index(l, kFcProjW));
    h += mo + RowVector(P(layer_index(l, kFcProjB)));
  }
  const std::size_t final_idx = 2 + static_cast<std::size_t>(c.n_layers) * kTensorsPerLayer;
  const RowVector z = norm(h, P(final_idx), P(final_idx + 1));
  logits_.noalias() = z * P(final_idx + 2);
  ++length_;
  return logits_;
}

template class Transformer<float>;
template class Transformer<double>;

}  // namespace numlab
