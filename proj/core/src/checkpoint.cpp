#include "numlab/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "numlab/error.hpp"
#include "numlab/io.hpp"

namespace numlab {

namespace {

constexpr char kMagic[8] = {'N', 'U', 'M', 'L', 'A', 'B', 'C', 'K'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    auto u = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<char>(u & 0xff));
      u = static_cast<U>(u >> 8);
    }
  }
  void bytes(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  std::vector<char> take() { return std::move(buf_); }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const char> data) : data_(data) {}

  template <typename T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                 std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
    need(sizeof(U));
    U u = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      u |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i));
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(u);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw ParseError("checkpoint truncated", pos_);
  }
  std::span<const char> data_;
  std::size_t pos_ = 0;
};

struct Entry {
  std::string name;
  int rows = 0;
  int cols = 0;
  const std::vector<double>* values = nullptr;
  std::size_t begin = 0;
};

}  // namespace

template <typename Scalar>
Checkpoint Checkpoint::capture(const Transformer<Scalar>& model, const AdamState<Scalar>* adam, std::uint64_t seed) {
  Checkpoint c;
  c.config = model.config();
  c.precision = std::is_same_v<Scalar, double> ? Precision::kWide : Precision::kStandard;
  c.params.assign(model.params().begin(), model.params().end());
  if (adam) {
    c.adam_m.assign(adam->m.begin(), adam->m.end());
    c.adam_v.assign(adam->v.begin(), adam->v.end());
    c.step = adam->step;
  }
  c.seed = seed;
  return c;
}

template <typename Scalar>
Transformer<Scalar> Checkpoint::model() const {
  return Transformer<Scalar>(config, std::vector<Scalar>(params.begin(), params.end()));
}

template <typename Scalar>
AdamState<Scalar> Checkpoint::optimizer_state() const {
  if (adam_m.empty()) return AdamState<Scalar>::zeros(params.size());
  return {std::vector<Scalar>(adam_m.begin(), adam_m.end()), std::vector<Scalar>(adam_v.begin(), adam_v.end()), step};
}

std::vector<char> Checkpoint::serialize() const {
  const bool wide = precision == Precision::kWide;
  std::vector<Entry> entries;
  for (const auto& t : parameter_layout(config)) entries.push_back({t.name, t.rows, t.cols, &params, t.offset});
  if (!adam_m.empty()) {
    const int n = static_cast<int>(params.size());
    entries.push_back({"adam.m", 1, n, &adam_m, 0});
    entries.push_back({"adam.v", 1, n, &adam_v, 0});
  }

  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kVersion);
  w.put<std::uint32_t>(wide ? 8 : 4);
  for (int v : {config.n_layers, config.n_heads, config.d_model, config.d_ff, config.max_seq_len, config.vocab_size}) {
    w.put<std::int32_t>(v);
  }
  w.put<double>(config.dropout);
  w.put<std::uint64_t>(step);
  w.put<std::uint64_t>(seed);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::int32_t>(e.rows);
    w.put<std::int32_t>(e.cols);
    w.put<std::uint64_t>(offset);
    offset += static_cast<std::uint64_t>(e.rows) * static_cast<std::uint64_t>(e.cols);
  }
  w.put<std::uint64_t>(offset);
  for (const auto& e : entries) {
    const std::size_t n = static_cast<std::size_t>(e.rows) * static_cast<std::size_t>(e.cols);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = (*e.values)[e.begin + i];
      if (wide) {
        w.put<double>(v);
      } else {
        w.put<float>(static_cast<float>(v));
      }
    }
  }
  return w.take();
}

Checkpoint Checkpoint::deserialize(std::span<const char> bytes) {
  Reader r(bytes);
  if (r.str(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) throw ParseError("not a numlab checkpoint", 0);
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version), 8);
  const auto width = r.get<std::uint32_t>();
  if (width != 4 && width != 8) throw ParseError("bad value width " + std::to_string(width), 12);

  Checkpoint c;
  c.precision = width == 8 ? Precision::kWide : Precision::kStandard;
  c.config.n_layers = r.get<std::int32_t>();
  c.config.n_heads = r.get<std::int32_t>();
  c.config.d_model = r.get<std::int32_t>();
  c.config.d_ff = r.get<std::int32_t>();
  c.config.max_seq_len = r.get<std::int32_t>();
  c.config.vocab_size = r.get<std::int32_t>();
  c.config.dropout = r.get<double>();
  c.config.validate();
  c.step = r.get<std::uint64_t>();
  c.seed = r.get<std::uint64_t>();

  const auto count = r.get<std::uint32_t>();
  struct Indexed {
    std::string name;
    std::uint64_t size;
    std::uint64_t offset;
  };
  std::vector<Indexed> index;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.get<std::uint16_t>();
    auto name = r.str(len);
    const auto rows = r.get<std::int32_t>();
    const auto cols = r.get<std::int32_t>();
    const auto off = r.get<std::uint64_t>();
    if (rows < 0 || cols < 0) throw ParseError("negative tensor shape for " + name, 0);
    index.push_back({std::move(name), static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols), off});
  }
  const auto total = r.get<std::uint64_t>();
  if (r.remaining() != total * width) throw ParseError("checkpoint data section has the wrong size", 0);

  std::vector<double> data(total);
  for (auto& v : data) v = width == 8 ? r.get<double>() : static_cast<double>(r.get<float>());

  auto find = [&](const std::string& name) -> const Indexed* {
    for (const auto& e : index) {
      if (e.name == name) return &e;
    }
    return nullptr;
  };
  c.params.assign(c.config.parameter_count(), 0.0);
  for (const auto& t : parameter_layout(c.config)) {
    const auto* e = find(t.name);
    if (!e) throw ParseError("checkpoint is missing tensor " + t.name, 0);
    if (e->size != t.size() || e->offset + e->size > total) throw ParseError("tensor " + t.name + " has the wrong shape", 0);
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(e->offset), t.size(),
                c.params.begin() + static_cast<std::ptrdiff_t>(t.offset));
  }
  for (const auto& v : c.params) {
    if (!std::isfinite(v)) throw ParseError("checkpoint contains a non-finite parameter", 0);
  }
  const auto* m = find("adam.m");
  const auto* v = find("adam.v");
  if (m && v) {
    if (m->size != c.params.size() || v->size != c.params.size()) throw ParseError("optimizer state size mismatch", 0);
    c.adam_m.assign(data.begin() + static_cast<std::ptrdiff_t>(m->offset),
                    data.begin() + static_cast<std::ptrdiff_t>(m->offset + m->size));
    c.adam_v.assign(data.begin() + static_cast<std::ptrdiff_t>(v->offset),
                    data.begin() + static_cast<std::ptrdiff_t>(v->offset + v->size));
  }
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  write_file_atomic(path, std::string_view(bytes.data(), bytes.size()));
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  const auto content = read_file(path);
  try {
    return deserialize(std::span<const char>(content.data(), content.size()));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.position());
  }
}

template Checkpoint Checkpoint::capture<float>(const Transformer<float>&, const AdamState<float>*, std::uint64_t);
template Checkpoint Checkpoint::capture<double>(const Transformer<double>&, const AdamState<double>*, std::uint64_t);
template Transformer<float> Checkpoint::model<float>() const;
template Transformer<double> Checkpoint::model<double>() const;
template AdamState<float> Checkpoint::optimizer_state<float>() const;
template AdamState<double> Checkpoint::optimizer_state<double>() const;

}  // namespace numlab
