#ifndef NEUROCODEC_CHECKPOINT_HPP
#define NEUROCODEC_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "neurocodec/model.hpp"
#include "neurocodec/tensor.hpp"

namespace neurocodec {

// Checkpoint container:
//   magic "LBRM", version u16 = 1,
//   config block (u32 byte length + UTF-8 key=value lines),
//   tensor count u32, then per tensor:
//     name (u16 length + bytes), dtype u8 (0=f32, 1=f64, 2=i64),
//     ndim u8, dims u32 each, payload little-endian.

enum class DType : uint8_t { f32 = 0, f64 = 1, i64 = 2 };

struct TensorRecord {
  std::string name;
  DType dtype;
  std::vector<int64_t> shape;
  std::vector<unsigned char> bytes;

  int64_t numel() const {
    int64_t n = 1;
    for (const int64_t d : shape) n *= d;
    return n;
  }
};

void write_checkpoint(const std::string& path, const std::string& config_kv,
                      const std::vector<TensorRecord>& records);

struct Checkpoint {
  std::string config_kv;
  std::vector<TensorRecord> records;

  const TensorRecord* find(const std::string& name) const;
};

Checkpoint read_checkpoint(const std::string& path);

template <typename S>
TensorRecord record_from(const std::string& name, const Tensor<S>& t);
TensorRecord record_from_i64(const std::string& name, const std::vector<int64_t>& v);

template <typename S>
Tensor<S> tensor_from(const TensorRecord& rec);  // throws FormatError on dtype mismatch
std::vector<int64_t> i64_from(const TensorRecord& rec);

template <typename S>
std::vector<TensorRecord> records_from_store(const ParamStore<S>& store);
template <typename S>
ParamStore<S> store_from_records(const std::vector<TensorRecord>& records,
                                 const std::string& name_prefix = "");

extern template TensorRecord record_from(const std::string&, const Tensor<float>&);
extern template TensorRecord record_from(const std::string&, const Tensor<double>&);
extern template Tensor<float> tensor_from(const TensorRecord&);
extern template Tensor<double> tensor_from(const TensorRecord&);
extern template std::vector<TensorRecord> records_from_store(const ParamStore<float>&);
extern template std::vector<TensorRecord> records_from_store(const ParamStore<double>&);
extern template ParamStore<float> store_from_records(const std::vector<TensorRecord>&,
                                                     const std::string&);
extern template ParamStore<double> store_from_records(const std::vector<TensorRecord>&,
                                                      const std::string&);

}  // namespace neurocodec

#endif
