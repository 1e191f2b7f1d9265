#include "hydroformer/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <fstream>
#include <sstream>

#include "hydroformer/errors.hpp"

namespace hydro::checkpoint {

namespace {

constexpr std::array<char, 8> kMagic = {'H', 'Y', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::array<char, 4> kTrailer = {'E', 'N', 'D', '\0'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
  template <typename U>
  void le(U v) {
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(buf, sizeof(U));
  }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(char* p, std::size_t n, const char* what) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
  }
  template <typename U>
  U le(const char* what) {
    unsigned char buf[sizeof(U)];
    bytes(reinterpret_cast<char*>(buf), sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
  }
  std::uint32_t u32(const char* what) { return le<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return le<std::uint64_t>(what); }
  double f64(const char* what) { return std::bit_cast<double>(le<std::uint64_t>(what)); }
  std::string str(const char* what) {
    const auto n = u32(what);
    if (n > (1u << 20)) throw FormatError(std::string("checkpoint string too long in ") + what);
    std::string s(n, '\0');
    bytes(s.data(), n, what);
    return s;
  }

 private:
  std::istream& in_;
};

}  // namespace

ModelConfig Checkpoint::model_config() const { return ModelConfig::from_kv(config); }

TransformerModel Checkpoint::restore_model() const {
  TransformerModel model(model_config(), 0);
  std::map<std::string, std::vector<real>> values;
  for (const auto& [name, param] : model.parameters()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape != param.shape()) throw FormatError("checkpoint tensor '" + name + "' has the wrong shape");
    values[name] = std::vector<real>(it->second.values.begin(), it->second.values.end());
  }
  for (const auto& [name, stored] : tensors) {
    if (!model.parameters().count(name)) throw FormatError("checkpoint has unexpected tensor '" + name + "'");
  }
  model.load_values(values);
  return model;
}

Checkpoint capture(const TransformerModel& model, const data::Normalizer& normalizer,
                   std::map<std::string, std::string> extra_config) {
  Checkpoint c;
  c.config = std::move(extra_config);
  for (auto& [k, v] : model.config().to_kv()) c.config[k] = v;
  c.normalizer = normalizer;
  for (const auto& [name, param] : model.parameters()) {
    const auto d = param.data();
    c.tensors[name] = StoredTensor{param.shape(), std::vector<double>(d.begin(), d.end())};
  }
  return c;
}

void write(std::ostream& out, const Checkpoint& ckpt) {
  Writer w(out);
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(ckpt.config.size()));
  for (const auto& [k, v] : ckpt.config) {
    w.str(k);
    w.str(v);
  }
  const auto& nz = ckpt.normalizer;
  w.u32(static_cast<std::uint32_t>(nz.size()));
  for (std::size_t i = 0; i < nz.size(); ++i) {
    w.str(nz.names().at(i));
    w.f64(nz.mean()[i]);
    w.f64(nz.stddev()[i]);
  }
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    for (double v : t.values) w.f64(v);
  }
  w.bytes(kTrailer.data(), kTrailer.size());
  if (!out) throw std::runtime_error("failed to write checkpoint");
}

Checkpoint read(std::istream& in) {
  Reader r(in);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError("not a checkpoint file (bad magic)");
  const auto version = r.u32("version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported checkpoint format version " + std::to_string(version) + " (this build reads " +
                      std::to_string(kFormatVersion) + ")");
  }
  Checkpoint c;
  const auto n_cfg = r.u32("config count");
  for (std::uint32_t i = 0; i < n_cfg; ++i) {
    auto k = r.str("config key");
    c.config[k] = r.str("config value");
  }
  const auto n_norm = r.u32("normalizer count");
  std::vector<std::string> names;
  std::vector<double> mean, sd;
  for (std::uint32_t i = 0; i < n_norm; ++i) {
    names.push_back(r.str("normalizer name"));
    mean.push_back(r.f64("normalizer mean"));
    sd.push_back(r.f64("normalizer std"));
  }
  c.normalizer = data::Normalizer(std::move(names), std::move(mean), std::move(sd));
  const auto n_tensors = r.u32("tensor count");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    StoredTensor t;
    const auto name = r.str("tensor name");
    const auto ndim = r.u32("tensor rank");
    if (ndim == 0 || ndim > 8) throw FormatError("tensor '" + name + "' has invalid rank");
    std::uint64_t count = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto dim = r.u64("tensor shape");
      if (dim == 0 || dim > kMaxElements || count * dim > kMaxElements) {
        throw FormatError("tensor '" + name + "' has invalid shape");
      }
      count *= dim;
      t.shape.push_back(static_cast<std::size_t>(dim));
    }
    t.values.resize(static_cast<std::size_t>(count));
    for (auto& v : t.values) v = r.f64("tensor values");
    c.tensors[name] = std::move(t);
  }
  std::array<char, 4> trailer{};
  r.bytes(trailer.data(), trailer.size(), "trailer");
  if (trailer != kTrailer) throw FormatError("checkpoint trailer missing or corrupt");
  return c;
}

void save(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write(out, ckpt);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read(in);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace hydro::checkpoint
