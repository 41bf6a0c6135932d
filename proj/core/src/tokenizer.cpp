#include "numlab/tokenizer.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <map>

#include "numlab/error.hpp"
#include "numlab/io.hpp"

namespace numlab {

namespace {

constexpr std::string_view kHeader = "numlab-tokenizer 1";

std::uint64_t pack(TokenId a, TokenId b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

// Splits at spaces; every piece after the first starts with its space.
template <typename F>
void for_each_piece(std::string_view text, F&& f) {
  std::size_t start = 0;
  for (std::size_t i = 1; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ' ') {
      if (i > start) f(text.substr(start, i - start));
      start = i;
    }
  }
}

std::string escape(std::string_view s) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (const char c : s) {
    const auto u = static_cast<unsigned char>(c);
    switch (c) {
      case '\\': out += "\\\\"; break;
      case ' ': out += "\\s"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (u < 0x20 || u >= 0x7f) {
          out += "\\x";
          out += kHex[u >> 4];
          out += kHex[u & 0xf];
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::string unescape(std::string_view s, std::size_t line) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (++i >= s.size()) throw ParseError("tokenizer file line " + std::to_string(line) + ": dangling escape", i);
    switch (s[i]) {
      case '\\': out += '\\'; break;
      case 's': out += ' '; break;
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case 'x': {
        unsigned v = 0;
        if (i + 2 >= s.size()) {
          throw ParseError("tokenizer file line " + std::to_string(line) + ": short \\x escape", i);
        }
        const auto [p, ec] = std::from_chars(s.data() + i + 1, s.data() + i + 3, v, 16);
        if (ec != std::errc{} || p != s.data() + i + 3) {
          throw ParseError("tokenizer file line " + std::to_string(line) + ": bad \\x escape", i);
        }
        out += static_cast<char>(v);
        i += 2;
        break;
      }
      default:
        throw ParseError("tokenizer file line " + std::to_string(line) + ": unknown escape", i);
    }
  }
  return out;
}

}  // namespace

void Tokenizer::init_base(std::string chars) {
  std::sort(chars.begin(), chars.end(),
            [](char a, char b) { return static_cast<unsigned char>(a) < static_cast<unsigned char>(b); });
  chars.erase(std::unique(chars.begin(), chars.end()), chars.end());
  base_chars_ = std::move(chars);
  tokens_ = {"<pad>", "<bos>", "<eos>"};
  merges_.clear();
  merge_rank_.clear();
  char_ids_.fill(-1);
  for (const char c : base_chars_) {
    char_ids_[static_cast<unsigned char>(c)] = static_cast<TokenId>(tokens_.size());
    tokens_.emplace_back(1, c);
  }
}

TokenId Tokenizer::add_merge(TokenId left, TokenId right) {
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token(left) + token(right));
  merge_rank_.emplace(pack(left, right), static_cast<std::uint32_t>(merges_.size()));
  merges_.push_back({left, right, id});
  return id;
}

Tokenizer Tokenizer::characters(std::string_view alphabet) {
  Tokenizer t;
  t.init_base(std::string(alphabet));
  return t;
}

Tokenizer Tokenizer::train(const std::vector<std::string>& corpus, std::size_t target_vocab) {
  std::string chars;
  std::map<std::string, std::size_t> piece_counts;
  {
    std::array<bool, 256> seen{};
    for (const auto& line : corpus) {
      for (const char c : line) {
        auto& s = seen[static_cast<unsigned char>(c)];
        if (!s) chars += c;
        s = true;
      }
      for_each_piece(line, [&](std::string_view p) { ++piece_counts[std::string(p)]; });
    }
  }
  if (chars.empty()) throw ValidationError("cannot train a tokenizer on an empty corpus");

  Tokenizer t;
  t.init_base(std::move(chars));
  if (target_vocab < t.base_size()) {
    throw ValidationError("target vocabulary " + std::to_string(target_vocab) + " is smaller than the base size " +
                          std::to_string(t.base_size()));
  }

  std::vector<std::vector<TokenId>> words;
  std::vector<std::size_t> counts;
  words.reserve(piece_counts.size());
  for (const auto& [piece, n] : piece_counts) {
    std::vector<TokenId> w;
    w.reserve(piece.size());
    for (const char c : piece) w.push_back(t.char_ids_[static_cast<unsigned char>(c)]);
    words.push_back(std::move(w));
    counts.push_back(n);
  }

  std::unordered_map<std::uint64_t, std::size_t> pair_counts;
  while (t.vocab_size() < target_vocab) {
    pair_counts.clear();
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& sym = words[w];
      for (std::size_t i = 0; i + 1 < sym.size(); ++i) pair_counts[pack(sym[i], sym[i + 1])] += counts[w];
    }
    std::uint64_t best = 0;
    std::size_t best_count = 0;
    for (const auto& [key, n] : pair_counts) {
      if (n < best_count) continue;
      if (n == best_count) {
        const auto l = static_cast<TokenId>(key >> 32), r = static_cast<TokenId>(key & 0xffffffffu);
        const auto bl = static_cast<TokenId>(best >> 32), br = static_cast<TokenId>(best & 0xffffffffu);
        if (std::tie(t.token(l), t.token(r)) >= std::tie(t.token(bl), t.token(br))) continue;
      }
      best = key;
      best_count = n;
    }
    if (best_count < 2) break;

    const auto left = static_cast<TokenId>(best >> 32);
    const auto right = static_cast<TokenId>(best & 0xffffffffu);
    const TokenId merged = t.add_merge(left, right);
    for (auto& sym : words) {
      if (sym.size() < 2) continue;
      std::size_t out = 0;
      for (std::size_t i = 0; i < sym.size(); ++i) {
        if (i + 1 < sym.size() && sym[i] == left && sym[i + 1] == right) {
          sym[out++] = merged;
          ++i;
        } else {
          sym[out++] = sym[i];
        }
      }
      sym.resize(out);
    }
  }
  return t;
}

void Tokenizer::encode_piece(std::string_view piece, std::vector<TokenId>& out) const {
  std::vector<TokenId> sym;
  sym.reserve(piece.size());
  for (const char c : piece) {
    const TokenId id = char_ids_[static_cast<unsigned char>(c)];
    if (id < 0) throw ValidationError("character '" + escape(std::string_view(&c, 1)) + "' is not in the tokenizer vocabulary");
    sym.push_back(id);
  }
  while (sym.size() > 1) {
    std::uint32_t best_rank = std::numeric_limits<std::uint32_t>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < sym.size(); ++i) {
      const auto it = merge_rank_.find(pack(sym[i], sym[i + 1]));
      if (it != merge_rank_.end() && it->second < best_rank) {
        best_rank = it->second;
        best_at = i;
      }
    }
    if (best_rank == std::numeric_limits<std::uint32_t>::max()) break;
    const auto& m = merges_[best_rank];
    // Merge every occurrence of the winning pair, left to right.
    std::size_t out_n = 0;
    for (std::size_t i = 0; i < sym.size(); ++i) {
      if (i >= best_at && i + 1 < sym.size() && sym[i] == m.left && sym[i + 1] == m.right) {
        sym[out_n++] = m.result;
        ++i;
      } else {
        sym[out_n++] = sym[i];
      }
    }
    sym.resize(out_n);
  }
  out.insert(out.end(), sym.begin(), sym.end());
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for_each_piece(text, [&](std::string_view p) { encode_piece(p, ids); });
  return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw ValidationError("token id " + std::to_string(id) + " out of vocabulary range");
    }
    if (is_special(id)) continue;
    out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

std::string Tokenizer::serialize() const {
  std::string out(kHeader);
  out += "\nbase " + std::to_string(base_chars_.size()) + "\n";
  for (const char c : base_chars_) out += escape(std::string_view(&c, 1)) + "\n";
  out += "merges " + std::to_string(merges_.size()) + "\n";
  for (const auto& m : merges_) out += escape(token(m.left)) + "\t" + escape(token(m.right)) + "\n";
  return out;
}

Tokenizer Tokenizer::deserialize(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < text.size();) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  std::size_t at = 0;
  auto next = [&]() -> std::string_view {
    if (at >= lines.size()) throw ParseError("tokenizer file truncated at line " + std::to_string(at + 1), 0);
    return lines[at++];
  };
  auto count_after = [&](std::string_view line, std::string_view key) {
    if (!line.starts_with(key)) throw ParseError("tokenizer file line " + std::to_string(at) + ": expected " + std::string(key), 0);
    std::size_t n = 0;
    const auto [p, ec] = std::from_chars(line.data() + key.size(), line.data() + line.size(), n);
    if (ec != std::errc{} || p != line.data() + line.size()) {
      throw ParseError("tokenizer file line " + std::to_string(at) + ": bad count", 0);
    }
    return n;
  };

  if (next() != kHeader) throw ParseError("not a numlab tokenizer file (bad header)", 0);
  const auto n_base = count_after(next(), "base ");
  std::string chars;
  for (std::size_t i = 0; i < n_base; ++i) {
    const auto c = unescape(next(), at);
    if (c.size() != 1) throw ParseError("tokenizer file line " + std::to_string(at) + ": base entry is not one char", 0);
    chars += c;
  }
  Tokenizer t;
  t.init_base(chars);
  if (t.base_chars_.size() != n_base) throw ParseError("duplicate base characters in tokenizer file", 0);

  std::unordered_map<std::string, TokenId> by_text;
  for (std::size_t i = 0; i < t.tokens_.size(); ++i) {
    if (!t.is_special(static_cast<TokenId>(i))) by_text.emplace(t.tokens_[i], static_cast<TokenId>(i));
  }
  const auto n_merges = count_after(next(), "merges ");
  for (std::size_t i = 0; i < n_merges; ++i) {
    const auto line = next();
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError("tokenizer file line " + std::to_string(at) + ": missing tab", 0);
    const auto l = by_text.find(unescape(line.substr(0, tab), at));
    const auto r = by_text.find(unescape(line.substr(tab + 1), at));
    if (l == by_text.end() || r == by_text.end()) {
      throw ParseError("tokenizer file line " + std::to_string(at) + ": merge references unknown token", 0);
    }
    const auto id = t.add_merge(l->second, r->second);
    by_text.emplace(t.tokens_[static_cast<std::size_t>(id)], id);
  }
  return t;
}

void Tokenizer::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

Tokenizer Tokenizer::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

}  // namespace numlab
