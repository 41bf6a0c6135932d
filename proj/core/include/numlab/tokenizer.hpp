#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace numlab {

using TokenId = std::int32_t;

// Byte-pair-merge tokenizer over a single-character base vocabulary.
//
// Text is first split into pieces at every space, each piece keeping its
// leading space (" units"). Merges apply inside a piece only, so a merged
// token never spans a space: "2503" may become one or two tokens while
// "2 5 0 3" always yields one token per digit.
//
// Id layout: 0 = <pad>, 1 = <bos>, 2 = <eos>, then base characters in byte
// order, then merged tokens in the order they were learned.
class Tokenizer {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr int kNumSpecial = 3;

  struct Merge {
    TokenId left = 0;
    TokenId right = 0;
    TokenId result = 0;
  };

  Tokenizer() = default;

  // Learns merges greedily by corpus pair frequency until the vocabulary
  // (specials included) reaches target_vocab or no pair occurs twice.
  // Frequency ties go to the lexicographically smallest (left, right) pair.
  static Tokenizer train(const std::vector<std::string>& corpus, std::size_t target_vocab);

  // Character-level tokenizer with no merges.
  static Tokenizer characters(std::string_view alphabet);

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t vocab_size() const { return tokens_.size(); }
  std::size_t base_size() const { return kNumSpecial + base_chars_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<Merge>& merges() const { return merges_; }
  const std::string& base_chars() const { return base_chars_; }
  bool is_special(TokenId id) const { return id >= 0 && id < kNumSpecial; }

  // Versioned text format: header, base characters (one escaped char per
  // line), merges in priority order (escaped left/right separated by a tab).
  std::string serialize() const;
  static Tokenizer deserialize(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Tokenizer load(const std::filesystem::path& path);

  friend bool operator==(const Tokenizer& a, const Tokenizer& b) {
    return a.base_chars_ == b.base_chars_ && a.tokens_ == b.tokens_;
  }

 private:
  void init_base(std::string chars);
  TokenId add_merge(TokenId left, TokenId right);
  void encode_piece(std::string_view piece, std::vector<TokenId>& out) const;

  std::string base_chars_;  // sorted, unique
  std::vector<std::string> tokens_;
  std::vector<Merge> merges_;
  std::array<TokenId, 256> char_ids_{};
  // (left, right) packed into 64 bits -> merge rank.
  std::unordered_map<std::uint64_t, std::uint32_t> merge_rank_;
};

}  // namespace numlab
