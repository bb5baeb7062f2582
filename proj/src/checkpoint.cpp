#include "vlcae/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vlcae/error.hpp"

namespace vlcae {

namespace {

constexpr char magic[8] = {'V', 'L', 'C', 'A', 'E', 'C', 'K', '1'};

class Writer {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }

  void u64(std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b, 8);
  }
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    raw(b, 4);
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  void doubles(const double* p, std::size_t n) {
    u64(n);
    for (std::size_t i = 0; i < n; ++i) f64(p[i]);
  }
  void vec(const Vector& v) { doubles(v.data(), static_cast<std::size_t>(v.size())); }

  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  void need(std::size_t n) {
    if (pos_ + n > in_.size()) throw ParseError("checkpoint truncated", 0);
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(std::size_t limit = 1u << 28) {
    const std::uint64_t n = u64();
    if (n > limit) throw ParseError("checkpoint field length out of range", 0);
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::size_t n = count();
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<double> doubles() {
    const std::size_t n = count();
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  Vector vec(Eigen::Index expected) {
    const auto v = doubles();
    if (static_cast<Eigen::Index>(v.size()) != expected) {
      throw ParseError("checkpoint vector size mismatch", 0);
    }
    return Eigen::Map<const Vector>(v.data(), expected);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::string& in_;
  std::size_t pos_ = 0;
};

void write_network(Writer& w, const Network& net) {
  w.f64(net.bn_config().momentum);
  w.f64(net.bn_config().epsilon);
  w.u64(net.layers().size());
  for (const auto& layer : net.layers()) {
    w.u32(static_cast<std::uint32_t>(layer.spec.input_dim));
    w.u32(static_cast<std::uint32_t>(layer.spec.output_dim));
    w.u32(static_cast<std::uint32_t>(layer.spec.activation));
    w.u32(layer.spec.batch_norm ? 1u : 0u);
    w.doubles(layer.weights.data(), static_cast<std::size_t>(layer.weights.size()));
    w.vec(layer.bias);
    if (layer.bn) {
      w.vec(layer.bn->gamma);
      w.vec(layer.bn->beta);
      w.vec(layer.bn->running_mean);
      w.vec(layer.bn->running_var);
      w.u32(layer.bn->trained ? 1u : 0u);
    }
  }
}

Network read_network(Reader& r) {
  BatchNormConfig bn;
  bn.momentum = r.f64();
  bn.epsilon = r.f64();
  const std::size_t n = r.count(1024);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < n; ++l) {
    DenseLayer layer;
    layer.spec.input_dim = static_cast<int>(r.u32());
    layer.spec.output_dim = static_cast<int>(r.u32());
    const std::uint32_t act = r.u32();
    if (act > static_cast<std::uint32_t>(Activation::encoder_output)) {
      throw ParseError("checkpoint has an unknown activation", 0);
    }
    layer.spec.activation = static_cast<Activation>(act);
    layer.spec.batch_norm = r.u32() != 0;
    const auto w = r.doubles();
    if (static_cast<long long>(w.size()) !=
        static_cast<long long>(layer.spec.input_dim) * layer.spec.output_dim) {
      throw ParseError("checkpoint weight size mismatch", 0);
    }
    layer.weights = Eigen::Map<const Matrix>(w.data(), layer.spec.output_dim, layer.spec.input_dim);
    layer.bias = r.vec(layer.spec.output_dim);
    if (layer.spec.batch_norm) {
      BatchNormState s;
      s.gamma = r.vec(layer.spec.output_dim);
      s.beta = r.vec(layer.spec.output_dim);
      s.running_mean = r.vec(layer.spec.output_dim);
      s.running_var = r.vec(layer.spec.output_dim);
      s.trained = r.u32() != 0;
      layer.bn = std::move(s);
    }
    layers.push_back(std::move(layer));
  }
  try {
    return Network(std::move(layers), bn);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint network is inconsistent: ") + e.what(), 0);
  }
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(magic, sizeof magic);
  w.u32(checkpoint_version);
  w.u32(static_cast<std::uint32_t>(c.params.codeword_length));
  w.u32(static_cast<std::uint32_t>(c.params.messages));
  w.u32(c.params.csi_input ? 1u : 0u);
  write_network(w, c.params.encoder);
  write_network(w, c.params.decoder);
  w.doubles(c.dimming_set.data(), c.dimming_set.size());
  w.doubles(c.duals.lambdas.data(), c.duals.lambdas.size());
  w.f64(c.duals.rho);
  w.f64(c.binarizer.bound());
  w.u32(static_cast<std::uint32_t>(c.binarizer.codeword_length()));
  w.u64(c.binarizer.offsets().size());
  for (const auto& [d, delta] : c.binarizer.offsets()) {
    w.f64(d);
    w.f64(delta);
  }
  w.u64(c.seed);
  w.str(c.config_text);
  return w.bytes();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof magic || std::memcmp(bytes.data(), magic, sizeof magic) != 0) {
    throw ParseError("not a vlcae checkpoint (bad magic)", 0);
  }
  const std::string body = bytes.substr(sizeof magic);
  Reader r(body);
  const std::uint32_t version = r.u32();
  if (version != checkpoint_version) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 0);
  }
  Checkpoint c;
  c.params.codeword_length = static_cast<int>(r.u32());
  c.params.messages = static_cast<int>(r.u32());
  c.params.csi_input = r.u32() != 0;
  c.params.encoder = read_network(r);
  c.params.decoder = read_network(r);
  c.dimming_set = r.doubles();
  c.duals.lambdas = r.doubles();
  c.duals.rho = r.f64();
  const double bound = r.f64();
  const int n = static_cast<int>(r.u32());
  const std::size_t entries = r.count(4096);
  std::map<double, double> offsets;
  for (std::size_t i = 0; i < entries; ++i) {
    const double d = r.f64();
    offsets[d] = r.f64();
  }
  c.binarizer = BinarizerSpec(std::move(offsets), n, bound);
  c.seed = r.u64();
  c.config_text = r.str();
  if (!r.done()) throw ParseError("trailing bytes after checkpoint", 0);
  try {
    validate_model(c.params);
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint model is inconsistent: ") + e.what(), 0);
  }
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace vlcae
