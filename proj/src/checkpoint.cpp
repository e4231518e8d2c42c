#include "plm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "plm/error.hpp"

namespace plm {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'P', 'L', 'M', '1'};

class Writer {
 public:
  template <typename T>
  void put(T value) {
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    out_.insert(out_.end(), raw, raw + sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void get_bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) throw DataError("checkpoint: truncated container");
  }
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::at(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw DataError("checkpoint: no tensor named '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return true;
  return false;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put<std::uint32_t>(Checkpoint::kVersion);
  std::string config;
  for (const auto& [k, v] : ckpt.config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw ContractError("checkpoint: config entries may not contain '=' in keys or newlines");
    config += k + "=" + v + "\n";
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(config.size()));
  w.put_bytes(config.data(), config.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.put_bytes(name.data(), name.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint64_t>(d);
    w.put_bytes(t.data().data(), t.numel() * sizeof(double));
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != Checkpoint::kVersion)
    throw DataError("checkpoint: unsupported format version " + std::to_string(version));

  Checkpoint ckpt;
  std::string config(r.get<std::uint32_t>(), '\0');
  r.get_bytes(config.data(), config.size());
  std::size_t start = 0;
  while (start < config.size()) {
    const std::size_t end = config.find('\n', start);
    const std::string line = config.substr(start, end - start);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: malformed config line");
    ckpt.config[line.substr(0, eq)] = line.substr(eq + 1);
    start = end == std::string::npos ? config.size() : end + 1;
  }

  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(r.get<std::uint32_t>(), '\0');
    r.get_bytes(name.data(), name.size());
    Shape shape(r.get<std::uint32_t>());
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    std::vector<double> values(numel(shape));
    r.get_bytes(values.data(), values.size() * sizeof(double));
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  if (!r.done()) throw DataError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

std::uint64_t tensor_checksum(const NamedTensors& tensors) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : tensors) {
    feed(name.data(), name.size());
    for (std::size_t d : t.shape()) feed(&d, sizeof(d));
    feed(t.data().data(), t.numel() * sizeof(double));
  }
  return h;
}

}  // namespace plm
