#include "neurocodec/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "neurocodec/errors.hpp"

namespace neurocodec {

namespace {

constexpr char kMagic[4] = {'L', 'B', 'R', 'M'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw FormatError(std::string("truncated checkpoint while reading ") + what);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

template <typename S>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<S, float>) return DType::f32;
  else return DType::f64;
}

size_t dtype_size(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i64: return 8;
  }
  throw FormatError("unknown dtype tag");
}

}  // namespace

void write_checkpoint(const std::string& path, const std::string& config_kv,
                      const std::vector<TensorRecord>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_le<uint16_t>(os, kVersion);
  write_le<uint32_t>(os, static_cast<uint32_t>(config_kv.size()));
  os.write(config_kv.data(), static_cast<std::streamsize>(config_kv.size()));
  write_le<uint32_t>(os, static_cast<uint32_t>(records.size()));
  for (const auto& r : records) {
    write_le<uint16_t>(os, static_cast<uint16_t>(r.name.size()));
    os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    write_le<uint8_t>(os, static_cast<uint8_t>(r.dtype));
    write_le<uint8_t>(os, static_cast<uint8_t>(r.shape.size()));
    for (const int64_t d : r.shape) write_le<uint32_t>(os, static_cast<uint32_t>(d));
    os.write(reinterpret_cast<const char*>(r.bytes.data()),
             static_cast<std::streamsize>(r.bytes.size()));
  }
  if (!os) throw FormatError("checkpoint write failed: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic, not a LBRM checkpoint: " + path);
  const auto version = read_le<uint16_t>(is, "version");
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto cfg_len = read_le<uint32_t>(is, "config length");
  ckpt.config_kv.resize(cfg_len);
  is.read(ckpt.config_kv.data(), cfg_len);
  if (!is) throw FormatError("truncated config block");
  const auto count = read_le<uint32_t>(is, "tensor count");
  ckpt.records.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    TensorRecord r;
    const auto name_len = read_le<uint16_t>(is, "tensor name length");
    r.name.resize(name_len);
    is.read(r.name.data(), name_len);
    const auto dt = read_le<uint8_t>(is, "dtype");
    if (dt > 2) throw FormatError("bad dtype tag " + std::to_string(dt));
    r.dtype = static_cast<DType>(dt);
    const auto ndim = read_le<uint8_t>(is, "ndim");
    for (int d = 0; d < ndim; ++d) r.shape.push_back(read_le<uint32_t>(is, "dim"));
    const size_t nbytes = static_cast<size_t>(r.numel()) * dtype_size(r.dtype);
    r.bytes.resize(nbytes);
    is.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(nbytes));
    if (!is) throw FormatError("truncated tensor payload: " + r.name);
    ckpt.records.push_back(std::move(r));
  }
  return ckpt;
}

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

template <typename S>
TensorRecord record_from(const std::string& name, const Tensor<S>& t) {
  TensorRecord r;
  r.name = name;
  r.dtype = dtype_of<S>();
  r.shape = t.shape;
  r.bytes.resize(t.data.size() * sizeof(S));
  std::memcpy(r.bytes.data(), t.data.data(), r.bytes.size());
  return r;
}

TensorRecord record_from_i64(const std::string& name, const std::vector<int64_t>& v) {
  TensorRecord r;
  r.name = name;
  r.dtype = DType::i64;
  r.shape = {static_cast<int64_t>(v.size())};
  r.bytes.resize(v.size() * sizeof(int64_t));
  std::memcpy(r.bytes.data(), v.data(), r.bytes.size());
  return r;
}

template <typename S>
Tensor<S> tensor_from(const TensorRecord& rec) {
  if (rec.dtype != dtype_of<S>())
    throw FormatError("dtype mismatch for tensor " + rec.name +
                      " (checkpoint precision differs from the requested one)");
  Tensor<S> t(rec.shape);
  std::memcpy(t.data.data(), rec.bytes.data(), rec.bytes.size());
  return t;
}

std::vector<int64_t> i64_from(const TensorRecord& rec) {
  if (rec.dtype != DType::i64) throw FormatError("dtype mismatch for tensor " + rec.name);
  std::vector<int64_t> v(static_cast<size_t>(rec.numel()));
  std::memcpy(v.data(), rec.bytes.data(), rec.bytes.size());
  return v;
}

template <typename S>
std::vector<TensorRecord> records_from_store(const ParamStore<S>& store) {
  std::vector<TensorRecord> out;
  out.reserve(store.t.size());
  for (const auto& [name, tensor] : store.t) out.push_back(record_from(name, tensor));
  return out;
}

template <typename S>
ParamStore<S> store_from_records(const std::vector<TensorRecord>& records,
                                 const std::string& name_prefix) {
  ParamStore<S> store;
  for (const auto& r : records) {
    if (r.dtype == DType::i64) continue;  // side data, not model parameters
    if (r.name.rfind(name_prefix, 0) != 0) continue;
    store.t.emplace(r.name, tensor_from<S>(r));
  }
  return store;
}

template TensorRecord record_from(const std::string&, const Tensor<float>&);
template TensorRecord record_from(const std::string&, const Tensor<double>&);
template Tensor<float> tensor_from(const TensorRecord&);
template Tensor<double> tensor_from(const TensorRecord&);
template std::vector<TensorRecord> records_from_store(const ParamStore<float>&);
template std::vector<TensorRecord> records_from_store(const ParamStore<double>&);
template ParamStore<float> store_from_records(const std::vector<TensorRecord>&,
                                              const std::string&);
template ParamStore<double> store_from_records(const std::vector<TensorRecord>&,
                                               const std::string&);

}  // namespace neurocodec
