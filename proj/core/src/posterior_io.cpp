#include "bmaforge/posterior_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "bmaforge/error.hpp"

namespace bmaforge {

namespace {

constexpr char kMagic[4] = {'B', 'M', 'A', 'F'};

class Writer {
 public:
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void doubles(const double* p, Index n) {
    for (Index i = 0; i < n; ++i) f64(p[i]);
  }

  std::vector<std::uint8_t> out;

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  void doubles(double* p, Index n) {
    need(static_cast<std::size_t>(n) * 8);
    for (Index i = 0; i < n; ++i) p[i] = f64();
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("posterior file is truncated");
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + static_cast<std::size_t>(i)]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t tag_of(const MixtureComponent& c) { return static_cast<std::uint32_t>(c.index()); }

void check_layout(const ParamVector& p, const ParamLayout& layout) {
  if (!(p.layout() == layout)) throw DimensionError("posterior component layout differs from the header");
}

void write_component(Writer& w, const MixtureComponent& c, const ParamLayout& layout) {
  if (const auto* d = std::get_if<DiracEnsemble>(&c)) {
    w.u64(d->members.size());
    for (const ParamVector& m : d->members) {
      check_layout(m, layout);
      w.doubles(m.values().data(), m.size());
    }
  } else if (const auto* q = std::get_if<FactorizedGaussian>(&c)) {
    check_layout(q->mean, layout);
    if (q->log_std.size() != q->mean.size()) throw DimensionError("log-std size mismatch");
    w.doubles(q->mean.values().data(), q->mean.size());
    w.doubles(q->log_std.data(), q->log_std.size());
  } else {
    const auto& s = std::get<SwagGaussian>(c);
    check_layout(s.mean, layout);
    const Index d = s.mean.size();
    if (s.diag_variance.size() != d || s.deviations.rows() != d) {
      throw DimensionError("SWAG moment sizes do not match the mean");
    }
    w.u64(static_cast<std::uint64_t>(s.rank()));
    w.doubles(s.mean.values().data(), d);
    w.doubles(s.diag_variance.data(), d);
    w.doubles(s.deviations.data(), s.deviations.size());
  }
}

MixtureComponent read_component(Reader& r, std::uint32_t tag, const ParamLayout& layout) {
  const Index d = layout.size();
  auto vec = [&] {
    Eigen::VectorXd v(d);
    r.doubles(v.data(), d);
    return v;
  };
  switch (tag) {
    case 0: {
      const std::uint64_t count = r.u64();
      r.need(count * static_cast<std::uint64_t>(d) * 8);
      DiracEnsemble e;
      for (std::uint64_t i = 0; i < count; ++i) e.members.emplace_back(layout, vec());
      return e;
    }
    case 1: {
      FactorizedGaussian q;
      q.mean = ParamVector(layout, vec());
      q.log_std = vec();
      return q;
    }
    case 2: {
      const std::uint64_t k = r.u64();
      SwagGaussian s;
      s.mean = ParamVector(layout, vec());
      s.diag_variance = vec();
      r.need(k * static_cast<std::uint64_t>(d) * 8);
      s.deviations.resize(d, static_cast<Index>(k));
      r.doubles(s.deviations.data(), s.deviations.size());
      return s;
    }
    default:
      throw ParseError(fmt::format("unknown posterior component tag {}", tag));
  }
}

}  // namespace

std::vector<std::uint8_t> serialize_posterior(const NetworkSpec& spec,
                                              const PosteriorApprox& posterior) {
  spec.validate();
  const ParamLayout layout(spec);
  Writer w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kPosteriorFormatVersion);
  w.u32(static_cast<std::uint32_t>(posterior.index()));
  w.u32(static_cast<std::uint32_t>(spec.num_layers()));
  for (int s : spec.layer_sizes) w.u32(static_cast<std::uint32_t>(s));
  for (bool b : spec.use_bias) w.u8(b ? 1 : 0);
  if (const auto* m = std::get_if<Mixture>(&posterior)) {
    w.u64(m->components.size());
    for (const MixtureComponent& c : m->components) {
      w.u32(tag_of(c));
      write_component(w, c, layout);
    }
  } else {
    std::visit(
        [&](const auto& p) {
          if constexpr (!std::is_same_v<std::decay_t<decltype(p)>, Mixture>) {
            write_component(w, MixtureComponent(p), layout);
          }
        },
        posterior);
  }
  return std::move(w.out);
}

StoredPosterior deserialize_posterior(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  for (char c : kMagic) {
    if (r.u8() != static_cast<std::uint8_t>(c)) throw ParseError("not a posterior file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kPosteriorFormatVersion) {
    throw ParseError(fmt::format("unsupported posterior format version {}", version));
  }
  const std::uint32_t tag = r.u32();
  const std::uint32_t layers = r.u32();
  if (layers == 0 || layers > 1024) throw ParseError(fmt::format("implausible layer count {}", layers));
  StoredPosterior out;
  for (std::uint32_t i = 0; i <= layers; ++i) out.spec.layer_sizes.push_back(static_cast<int>(r.u32()));
  for (std::uint32_t i = 0; i < layers; ++i) out.spec.use_bias.push_back(r.u8() != 0);
  try {
    out.spec.validate();
  } catch (const DimensionError& e) {
    throw ParseError(fmt::format("bad layout descriptor: {}", e.what()));
  }
  const ParamLayout layout(out.spec);
  if (tag == 3) {
    Mixture m;
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      const std::uint32_t t = r.u32();
      m.components.push_back(read_component(r, t, layout));
    }
    out.posterior = std::move(m);
  } else {
    MixtureComponent c = read_component(r, tag, layout);
    std::visit([&](auto&& p) { out.posterior = std::move(p); }, std::move(c));
  }
  if (!r.done()) throw ParseError("trailing bytes after posterior payload");
  return out;
}

void write_posterior(const NetworkSpec& spec, const PosteriorApprox& posterior,
                     const std::string& path) {
  const std::vector<std::uint8_t> bytes = serialize_posterior(spec, posterior);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open {} for writing", path));
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(fmt::format("failed writing {}", path));
}

StoredPosterior read_posterior(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(fmt::format("cannot open {}", path));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_posterior(bytes);
}

}  // namespace bmaforge
