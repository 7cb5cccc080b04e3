#ifndef NEUROCODEC_TENSOR_HPP
#define NEUROCODEC_TENSOR_HPP

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace neurocodec {

// Dense row-major tensor. Shapes are small (<= 3 dims in practice); all the
// heavy lifting happens in free functions that take raw pointers.
template <typename S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shp) : shape(std::move(shp)) {
    data.assign(static_cast<size_t>(numel_of(shape)), S(0));
  }
  Tensor(std::vector<int64_t> shp, std::vector<S> d) : shape(std::move(shp)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor: data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& shp) {
    int64_t n = 1;
    for (const int64_t d : shp) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  S* ptr() { return data.data(); }
  const S* ptr() const { return data.data(); }

  S& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  const S& at(int64_t i) const { return data[static_cast<size_t>(i)]; }

  // 2-D accessors (row-major).
  S& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  const S& at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

template <typename S>
std::string shape_str(const Tensor<S>& t) {
  std::string s = "(";
  for (size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + ")";
}

}  // namespace neurocodec

#endif
