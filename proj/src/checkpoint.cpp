#include "has8/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "has8/errors.hpp"

namespace has8 {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'H', 'A', 'S', '8'};

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw DataError("cannot open '" + path + "' for writing");
  }
  template <typename U>
  void put(U v) { bytes(&v, sizeof v); }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw DataError("write to '" + path_ + "' failed");
  }
  void str(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw DataError("cannot open checkpoint '" + path + "'");
  }
  template <typename U>
  U get() {
    U v;
    bytes(&v, sizeof v);
    return v;
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw DataError("checkpoint '" + path_ + "' truncated at offset " + std::to_string(offset_));
    }
    offset_ += n;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 24)) throw DataError("implausible string length at offset " + std::to_string(offset_));
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::size_t offset() const { return offset_; }

 private:
  std::ifstream in_;
  std::string path_;
  std::size_t offset_ = 0;
};

std::string read_header(Reader& r) {
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a checkpoint: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  return r.str();
}

}  // namespace

template <typename T>
void save_checkpoint(const std::string& path, const std::string& spec_echo,
                     const std::vector<ParamRef<T>>& params) {
  Writer w(path);
  w.bytes(kMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.str(spec_echo);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.put<std::uint8_t>(p.trainable ? 0 : 1);
    w.put<std::uint8_t>(sizeof(T) == 8 ? 1 : 0);
    const Shape& shape = p.tensor->shape();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
    for (const auto d : shape) w.put<std::uint64_t>(d);
    const auto v = p.tensor->data();
    w.bytes(v.data(), v.size_bytes());
  }
}

std::string read_checkpoint_spec(const std::string& path) {
  Reader r(path);
  return read_header(r);
}

template <typename T>
void load_checkpoint(const std::string& path, const std::vector<ParamRef<T>>& params) {
  Reader r(path);
  read_header(r);
  std::map<std::string, const ParamRef<T>*> by_name;
  for (const auto& p : params) by_name[p.name] = &p;

  const auto count = r.get<std::uint32_t>();
  if (count != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, model has " +
                    std::to_string(params.size()));
  }
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string name = r.str();
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint tensor '" + name + "' has no model counterpart");
    const ParamRef<T>& p = *it->second;
    const auto kind = r.get<std::uint8_t>();
    const auto dtype = r.get<std::uint8_t>();
    if (kind != (p.trainable ? 0 : 1)) throw DataError("checkpoint tensor '" + name + "' has the wrong kind");
    if (dtype > 1) throw DataError("unknown dtype tag at offset " + std::to_string(r.offset()));
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (shape != p.tensor->shape()) {
      throw DataError("checkpoint tensor '" + name + "' has shape " + to_string(shape) + ", model expects " +
                      to_string(p.tensor->shape()));
    }
    auto dst = p.tensor->mutable_data();
    if (dtype == 1) {
      std::vector<double> buf(dst.size());
      r.bytes(buf.data(), buf.size() * sizeof(double));
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(buf[i]);
    } else {
      std::vector<float> buf(dst.size());
      r.bytes(buf.data(), buf.size() * sizeof(float));
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(buf[i]);
    }
  }
}

#define HAS8_INSTANTIATE(T)                                                                      \
  template void save_checkpoint<T>(const std::string&, const std::string&, const std::vector<ParamRef<T>>&); \
  template void load_checkpoint<T>(const std::string&, const std::vector<ParamRef<T>>&);

HAS8_INSTANTIATE(float)
HAS8_INSTANTIATE(double)
#undef HAS8_INSTANTIATE

}  // namespace has8
