#ifndef NEUROCODEC_AUTODIFF_HPP
#define NEUROCODEC_AUTODIFF_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "neurocodec/tensor.hpp"

namespace neurocodec {

using Var = int32_t;

// Reverse-mode tape. One tape per forward pass; node indices are topological
// by construction, so backward() is a simple reverse sweep. Not thread-safe;
// use one tape per thread.
template <typename S>
class Tape {
 public:
  const Tensor<S>& val(Var v) const {
    const Node& n = nodes_[static_cast<size_t>(v)];
    return n.ext ? *n.ext : n.val;
  }
  // Gradient buffer, allocated (zeros) on first touch.
  Tensor<S>& gbuf(Var v);
  bool grad_ready(Var v) const { return !nodes_[static_cast<size_t>(v)].grad.data.empty(); }
  bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v)].needs_grad; }
  size_t size() const { return nodes_.size(); }

  // Leaves. leaf() copies; leaf_external() borrows (caller keeps the tensor
  // alive for the tape's lifetime) — used for model parameters.
  Var leaf(Tensor<S> v, bool needs_grad = false);
  Var leaf_external(const Tensor<S>* v, bool needs_grad);

  void backward(Var root);

  // --- elementwise / shape ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);
  Var add_rowvec(Var x, Var v);    // (N,D) + (D)
  Var scale_cols(Var x, Var v);    // (N,D) * v[j]
  Var reshape(Var x, std::vector<int64_t> shape);
  Var slice_cols(Var x, int64_t c0, int64_t len);
  Var concat_cols(const std::vector<Var>& xs);
  Var detach(Var x);

  // --- linear algebra ---
  Var matmul(Var a, Var b);     // (m,k)x(k,n)
  Var matmul_nt(Var a, Var b);  // (m,k)x(n,k)^T -> (m,n)

  // --- nonlinearities / norms ---
  Var gelu(Var x);  // exact erf form
  Var softmax_rows(Var x);
  Var layer_norm(Var x, Var gain, Var bias, double eps);
  Var group_norm(Var x, Var gain, Var bias, int groups, double eps);  // (N,C,L)
  Var conv1d(Var x, Var w, Var b, int stride, int pad);               // (N,Ci,L)*(Co,Ci,K)
  Var l2norm_rows(Var x, double clamp, std::vector<int>* clamped_rows = nullptr);

  // --- gather / masking / pooling ---
  Var gather_rows(Var table, std::vector<int> idx);
  Var replace_rows(Var x, std::vector<uint8_t> mask, Var row);
  Var mean_rows(Var x);  // (N,D) -> (1,D)

  // --- losses (scalar outputs, shape {1}) ---
  Var sum_sq_diff(Var a, Var b);
  // weight * sum over masked rows of -log softmax(logits)[target].
  Var masked_ce(Var logits, std::vector<int> targets, std::vector<uint8_t> mask, double weight);
  // weight * smoothed cross-entropy, one row of logits per labeled row.
  Var ce_smoothed(Var logits, std::vector<int> labels, double eps_smooth, double weight);
  // weight * sum of binary cross-entropies on logits (B,1) vs labels in {0,1}.
  Var bce_logits(Var logits, std::vector<float> labels, double weight);

 private:
  struct Node {
    Tensor<S> val;
    const Tensor<S>* ext = nullptr;
    Tensor<S> grad;
    bool needs_grad = false;
    std::function<void(Tape&, Var)> back;
  };

  Var push(Tensor<S> val, bool needs_grad, std::function<void(Tape&, Var)> back);
  void add_to(Var target, const Tensor<S>& delta);

  std::vector<Node> nodes_;
};

// Row-wise argmax (utility, not differentiable).
template <typename S>
std::vector<int> argmax_rows(const Tensor<S>& t);

extern template class Tape<float>;
extern template class Tape<double>;
extern template std::vector<int> argmax_rows(const Tensor<float>&);
extern template std::vector<int> argmax_rows(const Tensor<double>&);

}  // namespace neurocodec

#endif
