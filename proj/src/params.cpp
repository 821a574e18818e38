#include "gicl/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace gicl {

Tensor& ModelParams::add(const std::string& name, Tensor t) {
  if (params_.count(name))
    throw std::invalid_argument("params: duplicate name '" + name + "'");
  order_.push_back(name);
  auto [it, ok] = params_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

const Tensor& ModelParams::get(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("params: unknown name '" + std::string(name) +
                                "'");
  return it->second;
}

bool ModelParams::contains(std::string_view name) const {
  return params_.find(name) != params_.end();
}

std::uint64_t ModelParams::content_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& name : order_) {
    mix(name.data(), name.size());
    const Tensor& t = get(name);
    for (std::size_t d : t.shape()) {
      std::uint64_t dd = d;
      mix(&dd, sizeof dd);
    }
    auto v = t.values();
    mix(v.data(), v.size() * sizeof(double));
  }
  return h;
}

NamedGrads collect_grads(const ModelParams& params, const GradientMap& gm) {
  NamedGrads out;
  for (const auto& name : params.names()) {
    const Tensor& t = params.get(name);
    if (gm.contains(t))
      out[name] = gm.grad(t);
    else
      out[name] = std::vector<double>(t.size(), 0.0);
  }
  return out;
}

void adamw_step(ModelParams& params, const NamedGrads& grads, AdamWState& state,
                const AdamWConfig& cfg) {
  for (const auto& name : params.names())
    if (!grads.count(name))
      throw std::invalid_argument("optimizer: missing gradient for parameter '" +
                                  name + "'");
  for (const auto& [name, g] : grads)
    if (!params.contains(name))
      throw std::invalid_argument("optimizer: gradient for unknown parameter '" +
                                  name + "'");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (const auto& name : params.names()) {
    Tensor t = params.get(name);
    auto p = t.mutable_values();
    const auto& g = grads.at(name);
    if (g.size() != p.size())
      throw std::invalid_argument("optimizer: gradient size mismatch for '" +
                                  name + "'");
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(p.size(), 0.0);
    if (v.empty()) v.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) +
                        cfg.weight_decay * p[i]);
    }
  }
}

namespace {

constexpr char kMagic[8] = {'G', 'I', 'C', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kSectionEnd = 0;
constexpr std::uint8_t kSectionTrainExtras = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  auto n = read_pod<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
  write_pod<std::uint64_t>(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& is) {
  auto n = read_pod<std::uint64_t>(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated values");
  return v;
}

void write_moment_map(std::ostream& os,
                      const std::map<std::string, std::vector<double>>& m) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.size()));
  for (const auto& [name, vals] : m) {
    write_string(os, name);
    write_doubles(os, vals);
  }
}

std::map<std::string, std::vector<double>> read_moment_map(std::istream& is) {
  std::map<std::string, std::vector<double>> m;
  auto n = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = read_string(is);
    m[name] = read_doubles(is);
  }
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os)
    throw std::runtime_error("checkpoint: cannot open for write: " +
                             path.string());
  os.write(kMagic, sizeof kMagic);
  write_pod(os, ck.header.format_version);
  write_pod(os, ck.header.embedding_dim);
  write_pod(os, ck.header.num_relations);
  write_pod(os, ck.header.rng_seed);

  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ck.params.count()));
  for (const auto& name : ck.params.names()) {
    const Tensor& t = ck.params.get(name);
    write_string(os, name);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape())
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    auto v = t.values();
    write_pod<std::uint64_t>(os, v.size());
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

  if (ck.extras) {
    write_pod(os, kSectionTrainExtras);
    write_pod(os, ck.extras->step);
    write_pod(os, ck.extras->opt.step);
    write_moment_map(os, ck.extras->opt.m);
    write_moment_map(os, ck.extras->opt.v);
    write_string(os, ck.extras->rng_state);
  }
  write_pod(os, kSectionEnd);
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw std::runtime_error("checkpoint: cannot open: " + path.string());
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());

  Checkpoint ck;
  ck.header.format_version = read_pod<std::uint32_t>(is);
  if (ck.header.format_version != 1)
    throw std::runtime_error("checkpoint: unsupported format version " +
                             std::to_string(ck.header.format_version));
  ck.header.embedding_dim = read_pod<std::uint32_t>(is);
  ck.header.num_relations = read_pod<std::uint32_t>(is);
  ck.header.rng_seed = read_pod<std::uint64_t>(is);

  auto count = read_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_string(is);
    auto rank = read_pod<std::uint32_t>(is);
    Shape shape(rank);
    for (auto& d : shape) d = read_pod<std::uint32_t>(is);
    auto n = read_pod<std::uint64_t>(is);
    std::vector<double> values(n);
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
    ck.params.add(name,
                  Tensor::from_values(std::move(shape), std::move(values),
                                      /*requires_grad=*/true));
  }

  auto section = read_pod<std::uint8_t>(is);
  if (section == kSectionTrainExtras) {
    TrainExtras ex;
    ex.step = read_pod<std::uint64_t>(is);
    ex.opt.step = read_pod<std::uint64_t>(is);
    ex.opt.m = read_moment_map(is);
    ex.opt.v = read_moment_map(is);
    ex.rng_state = read_string(is);
    ck.extras = std::move(ex);
    section = read_pod<std::uint8_t>(is);
  }
  if (section != kSectionEnd)
    throw std::runtime_error("checkpoint: unknown section id " +
                             std::to_string(section));
  return ck;
}

}  // namespace gicl
