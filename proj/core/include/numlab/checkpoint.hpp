#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "numlab/adam.hpp"
#include "numlab/model.hpp"

namespace numlab {

// Model weights plus everything needed to resume training exactly.
//
// File layout (all integers and floats little-endian):
//   "NUMLABCK" | u32 version | u32 bytes-per-value (4 or 8)
//   i32 n_layers, n_heads, d_model, d_ff, max_seq_len, vocab_size | f64 dropout
//   u64 step | u64 seed | u32 tensor count
//   per tensor: u16 name length, name, i32 rows, i32 cols, u64 element offset
//   u64 element count | values
// Standard-precision checkpoints store 32-bit floats. Wide-precision ones
// store 64-bit values so that resumed training stays bit-identical.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig config;
  Precision precision = Precision::kStandard;
  std::vector<double> params;
  // Optimizer moments; empty when the checkpoint carries no optimizer state.
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;

  template <typename Scalar>
  static Checkpoint capture(const Transformer<Scalar>& model, const AdamState<Scalar>* adam, std::uint64_t seed);

  template <typename Scalar>
  Transformer<Scalar> model() const;
  template <typename Scalar>
  AdamState<Scalar> optimizer_state() const;

  std::vector<char> serialize() const;
  static Checkpoint deserialize(std::span<const char> bytes);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

}  // namespace numlab
