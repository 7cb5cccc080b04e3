#include "neurocodec/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace neurocodec {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440084436210485;
constexpr double kInvSqrt2Pi = 0.39894228040143267793994605993438;
}  // namespace

template <typename S>
Tensor<S>& Tape<S>::gbuf(Var v) {
  Node& n = nodes_[static_cast<size_t>(v)];
  if (n.grad.data.empty()) {
    n.grad.shape = val(v).shape;
    n.grad.data.assign(val(v).data.size(), S(0));
  }
  return n.grad;
}

template <typename S>
Var Tape<S>::leaf(Tensor<S> v, bool needs_grad) {
  Node n;
  n.val = std::move(v);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

template <typename S>
Var Tape<S>::leaf_external(const Tensor<S>* v, bool needs_grad) {
  Node n;
  n.ext = v;
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

template <typename S>
Var Tape<S>::push(Tensor<S> val, bool needs_grad, std::function<void(Tape&, Var)> back) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size() - 1);
}

template <typename S>
void Tape<S>::add_to(Var target, const Tensor<S>& delta) {
  if (!nodes_[static_cast<size_t>(target)].needs_grad) return;
  Tensor<S>& g = gbuf(target);
  for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += delta.data[i];
}

template <typename S>
void Tape<S>::backward(Var root) {
  if (val(root).numel() != 1) throw std::logic_error("backward: root must be scalar");
  gbuf(root).data[0] = S(1);
  for (Var i = root; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.needs_grad && n.back && !n.grad.data.empty()) n.back(*this, i);
  }
}

// ---------------------------------------------------------------------------
// elementwise / shape

template <typename S>
Var Tape<S>::add(Var a, Var b) {
  const Tensor<S>& va = val(a);
  const Tensor<S>& vb = val(b);
  Tensor<S> out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b](Tape& t, Var self) {
    const Tensor<S>& go = t.gbuf(self);
    t.add_to(a, go);
    t.add_to(b, go);
  });
}

template <typename S>
Var Tape<S>::sub(Var a, Var b) {
  const Tensor<S>& va = val(a);
  const Tensor<S>& vb = val(b);
  Tensor<S> out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b](Tape& t, Var self) {
    const Tensor<S>& go = t.gbuf(self);
    t.add_to(a, go);
    if (t.needs_grad(b)) {
      Tensor<S>& g = t.gbuf(b);
      for (size_t i = 0; i < g.data.size(); ++i) g.data[i] -= go.data[i];
    }
  });
}

template <typename S>
Var Tape<S>::scale(Var a, double c) {
  Tensor<S> out = val(a);
  const S cs = static_cast<S>(c);
  for (S& v : out.data) v *= cs;
  return push(std::move(out), needs_grad(a), [a, cs](Tape& t, Var self) {
    if (!t.needs_grad(a)) return;
    const Tensor<S>& go = t.gbuf(self);
    Tensor<S>& g = t.gbuf(a);
    for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += cs * go.data[i];
  });
}

template <typename S>
Var Tape<S>::add_rowvec(Var x, Var v) {
  const Tensor<S>& vx = val(x);
  const Tensor<S>& vv = val(v);
  const int64_t N = vx.dim(0), D = vx.dim(1);
  Tensor<S> out = vx;
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < D; ++j) out.at(i, j) += vv.at(j);
  const bool ng = needs_grad(x) || needs_grad(v);
  return push(std::move(out), ng, [x, v, N, D](Tape& t, Var self) {
    const Tensor<S>& go = t.gbuf(self);
    t.add_to(x, go);
    if (t.needs_grad(v)) {
      Tensor<S>& gv = t.gbuf(v);
      for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < D; ++j) gv.at(j) += go.data[static_cast<size_t>(i * D + j)];
    }
  });
}

template <typename S>
Var Tape<S>::scale_cols(Var x, Var v) {
  const Tensor<S>& vx = val(x);
  const Tensor<S>& vv = val(v);
  const int64_t N = vx.dim(0), D = vx.dim(1);
  Tensor<S> out = vx;
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < D; ++j) out.at(i, j) *= vv.at(j);
  const bool ng = needs_grad(x) || needs_grad(v);
  return push(std::move(out), ng, [x, v, N, D](Tape& t, Var self) {
    const Tensor<S>& go = t.gbuf(self);
    const Tensor<S>& vx2 = t.val(x);
    const Tensor<S>& vv2 = t.val(v);
    if (t.needs_grad(x)) {
      Tensor<S>& gx = t.gbuf(x);
      for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < D; ++j) gx.at(i, j) += go.at(i, j) * vv2.at(j);
    }
    if (t.needs_grad(v)) {
      Tensor<S>& gv = t.gbuf(v);
      for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < D; ++j) gv.at(j) += go.at(i, j) * vx2.at(i, j);
    }
  });
}

template <typename S>
Var Tape<S>::reshape(Var x, std::vector<int64_t> shape) {
  Tensor<S> out(std::move(shape), val(x).data);
  return push(std::move(out), needs_grad(x), [x](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Tensor<S>& go = t.gbuf(self);
    Tensor<S>& gx = t.gbuf(x);
    for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += go.data[i];
  });
}

template <typename S>
Var Tape<S>::slice_cols(Var x, int64_t c0, int64_t len) {
  const Tensor<S>& vx = val(x);
  const int64_t N = vx.dim(0), D = vx.dim(1);
  Tensor<S> out({N, len});
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < len; ++j) out.at(i, j) = vx.at(i, c0 + j);
  return push(std::move(out), needs_grad(x), [x, c0, len, N, D](Tape& t, Var self) {
    (void)D;
    if (!t.needs_grad(x)) return;
    const Tensor<S>& go = t.gbuf(self);
    Tensor<S>& gx = t.gbuf(x);
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < len; ++j) gx.at(i, c0 + j) += go.at(i, j);
  });
}

template <typename S>
Var Tape<S>::concat_cols(const std::vector<Var>& xs) {
  const int64_t N = val(xs[0]).dim(0);
  int64_t D = 0;
  bool ng = false;
  for (const Var x : xs) {
    D += val(x).dim(1);
    ng = ng || needs_grad(x);
  }
  Tensor<S> out({N, D});
  int64_t off = 0;
  for (const Var x : xs) {
    const Tensor<S>& vx = val(x);
    const int64_t d = vx.dim(1);
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < d; ++j) out.at(i, off + j) = vx.at(i, j);
    off += d;
  }
  std::vector<Var> parents = xs;
  return push(std::move(out), ng, [parents, N](Tape& t, Var self) {
    const Tensor<S>& go = t.gbuf(self);
    int64_t off2 = 0;
    for (const Var x : parents) {
      const int64_t d = t.val(x).dim(1);
      if (t.needs_grad(x)) {
        Tensor<S>& gx = t.gbuf(x);
        for (int64_t i = 0; i < N; ++i)
          for (int64_t j = 0; j < d; ++j) gx.at(i, j) += go.at(i, off2 + j);
      }
      off2 += d;
    }
  });
}

template <typename S>
Var Tape<S>::detach(Var x) {
  return leaf(val(x), false);
}

// ---------------------------------------------------------------------------
// linear algebra

template <typename S>
Var Tape<S>::matmul(Var a, Var b) {
  const Tensor<S>& va = val(a);
  const Tensor<S>& vb = val(b);
  const int64_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
  Tensor<S> out({m, n});
  const S* pa = va.ptr();
  const S* pb = vb.ptr();
  S* po = out.ptr();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t kk = 0; kk < k; ++kk) {
      const S aik = pa[i * k + kk];
      const S* brow = pb + kk * n;
      S* orow = po + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b, m, k, n](Tape& t, Var self) {
    const Tensor<S>& go = t.gbuf(self);
    const Tensor<S>& va2 = t.val(a);
    const Tensor<S>& vb2 = t.val(b);
    if (t.needs_grad(a)) {
      // ga += go * b^T, as row dot products to stay contiguous
      Tensor<S>& ga = t.gbuf(a);
      for (int64_t i = 0; i < m; ++i) {
        const S* grow = go.ptr() + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
          const S* brow = vb2.ptr() + kk * n;
          S acc = 0;
          for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga.at(i, kk) += acc;
        }
      }
    }
    if (t.needs_grad(b)) {
      // gb += a^T * go
      Tensor<S>& gb = t.gbuf(b);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t kk = 0; kk < k; ++kk) {
          const S av = va2.at(i, kk);
          for (int64_t j = 0; j < n; ++j) gb.at(kk, j) += av * go.at(i, j);
        }
    }
  });
}

template <typename S>
Var Tape<S>::matmul_nt(Var a, Var b) {
  const Tensor<S>& va = val(a);
  const Tensor<S>& vb = val(b);
  const int64_t m = va.dim(0), k = va.dim(1), n = vb.dim(0);
  Tensor<S> out({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      S acc = 0;
      const S* pa = va.ptr() + i * k;
      const S* pb = vb.ptr() + j * k;
      for (int64_t kk = 0; kk < k; ++kk) acc += pa[kk] * pb[kk];
      out.at(i, j) = acc;
    }
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b, m, k, n](Tape& t, Var self) {
    const Tensor<S>& go = t.gbuf(self);
    const Tensor<S>& va2 = t.val(a);
    const Tensor<S>& vb2 = t.val(b);
    if (t.needs_grad(a)) {
      Tensor<S>& ga = t.gbuf(a);  // ga += go * b
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          const S g = go.at(i, j);
          for (int64_t kk = 0; kk < k; ++kk) ga.at(i, kk) += g * vb2.at(j, kk);
        }
    }
    if (t.needs_grad(b)) {
      Tensor<S>& gb = t.gbuf(b);  // gb += go^T * a
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          const S g = go.at(i, j);
          for (int64_t kk = 0; kk < k; ++kk) gb.at(j, kk) += g * va2.at(i, kk);
        }
    }
  });
}

// ---------------------------------------------------------------------------
// nonlinearities / norms

template <typename S>
Var Tape<S>::gelu(Var x) {
  const Tensor<S>& vx = val(x);
  Tensor<S> out = vx;
  for (S& v : out.data) {
    const double xv = static_cast<double>(v);
    v = static_cast<S>(xv * 0.5 * (1.0 + std::erf(xv * kInvSqrt2)));
  }
  return push(std::move(out), needs_grad(x), [x](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Tensor<S>& go = t.gbuf(self);
    const Tensor<S>& vx2 = t.val(x);
    Tensor<S>& gx = t.gbuf(x);
    for (size_t i = 0; i < gx.data.size(); ++i) {
      const double xv = static_cast<double>(vx2.data[i]);
      const double phi = 0.5 * (1.0 + std::erf(xv * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * xv * xv);
      gx.data[i] += go.data[i] * static_cast<S>(phi + xv * pdf);
    }
  });
}

template <typename S>
Var Tape<S>::softmax_rows(Var x) {
  const Tensor<S>& vx = val(x);
  const int64_t N = vx.dim(0), D = vx.dim(1);
  Tensor<S> out({N, D});
  for (int64_t i = 0; i < N; ++i) {
    S mx = vx.at(i, 0);
    for (int64_t j = 1; j < D; ++j) mx = std::max(mx, vx.at(i, j));
    S sum = 0;
    for (int64_t j = 0; j < D; ++j) {
      const S e = static_cast<S>(std::exp(static_cast<double>(vx.at(i, j) - mx)));
      out.at(i, j) = e;
      sum += e;
    }
    const S inv = S(1) / sum;
    for (int64_t j = 0; j < D; ++j) out.at(i, j) *= inv;
  }
  return push(std::move(out), needs_grad(x), [x, N, D](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Tensor<S>& go = t.gbuf(self);
    const Tensor<S>& y = t.val(self);
    Tensor<S>& gx = t.gbuf(x);
    for (int64_t i = 0; i < N; ++i) {
      S dot = 0;
      for (int64_t j = 0; j < D; ++j) dot += go.at(i, j) * y.at(i, j);
      for (int64_t j = 0; j < D; ++j) gx.at(i, j) += y.at(i, j) * (go.at(i, j) - dot);
    }
  });
}

template <typename S>
Var Tape<S>::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor<S>& vx = val(x);
  const int64_t N = vx.dim(0), D = vx.dim(1);
  Tensor<S> out({N, D});
  std::vector<S> istd(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) {
    S mean = 0;
    for (int64_t j = 0; j < D; ++j) mean += vx.at(i, j);
    mean /= static_cast<S>(D);
    S var = 0;
    for (int64_t j = 0; j < D; ++j) {
      const S d = vx.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<S>(D);
    const S is = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + eps));
    istd[static_cast<size_t>(i)] = is;
    for (int64_t j = 0; j < D; ++j) out.at(i, j) = (vx.at(i, j) - mean) * is;
  }
  const Tensor<S>& vg = val(gain);
  const Tensor<S>& vb = val(bias);
  Tensor<S> xhat = out;  // keep normalized values for backward
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < D; ++j) out.at(i, j) = out.at(i, j) * vg.at(j) + vb.at(j);
  const bool ng = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
  return push(std::move(out), ng,
              [x, gain, bias, N, D, xhat = std::move(xhat), istd = std::move(istd)](Tape& t, Var self) {
                const Tensor<S>& go = t.gbuf(self);
                const Tensor<S>& vg2 = t.val(gain);
                if (t.needs_grad(gain)) {
                  Tensor<S>& gg = t.gbuf(gain);
                  for (int64_t i = 0; i < N; ++i)
                    for (int64_t j = 0; j < D; ++j) gg.at(j) += go.at(i, j) * xhat.at(i, j);
                }
                if (t.needs_grad(bias)) {
                  Tensor<S>& gb = t.gbuf(bias);
                  for (int64_t i = 0; i < N; ++i)
                    for (int64_t j = 0; j < D; ++j) gb.at(j) += go.at(i, j);
                }
                if (t.needs_grad(x)) {
                  Tensor<S>& gx = t.gbuf(x);
                  for (int64_t i = 0; i < N; ++i) {
                    S m1 = 0, m2 = 0;
                    for (int64_t j = 0; j < D; ++j) {
                      const S dxh = go.at(i, j) * vg2.at(j);
                      m1 += dxh;
                      m2 += dxh * xhat.at(i, j);
                    }
                    m1 /= static_cast<S>(D);
                    m2 /= static_cast<S>(D);
                    const S is = istd[static_cast<size_t>(i)];
                    for (int64_t j = 0; j < D; ++j) {
                      const S dxh = go.at(i, j) * vg2.at(j);
                      gx.at(i, j) += is * (dxh - m1 - xhat.at(i, j) * m2);
                    }
                  }
                }
              });
}

template <typename S>
Var Tape<S>::group_norm(Var x, Var gain, Var bias, int groups, double eps) {
  const Tensor<S>& vx = val(x);
  const int64_t N = vx.dim(0), C = vx.dim(1), L = vx.dim(2);
  const int64_t Cg = C / groups;
  if (Cg * groups != C) throw std::invalid_argument("group_norm: channels not divisible by groups");
  Tensor<S> xhat({N, C, L});
  std::vector<S> istd(static_cast<size_t>(N * groups));
  const int64_t M = Cg * L;  // elements per group
  for (int64_t n = 0; n < N; ++n) {
    for (int g = 0; g < groups; ++g) {
      const int64_t base = n * C * L + g * Cg * L;
      S mean = 0;
      for (int64_t e = 0; e < M; ++e) mean += vx.at(base + e);
      mean /= static_cast<S>(M);
      S var = 0;
      for (int64_t e = 0; e < M; ++e) {
        const S d = vx.at(base + e) - mean;
        var += d * d;
      }
      var /= static_cast<S>(M);
      const S is = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + eps));
      istd[static_cast<size_t>(n * groups + g)] = is;
      for (int64_t e = 0; e < M; ++e) xhat.at(base + e) = (vx.at(base + e) - mean) * is;
    }
  }
  const Tensor<S>& vg = val(gain);
  const Tensor<S>& vb = val(bias);
  Tensor<S> out({N, C, L});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t l = 0; l < L; ++l)
        out.at(n * C * L + c * L + l) = xhat.at(n * C * L + c * L + l) * vg.at(c) + vb.at(c);
  const bool ng = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
  return push(std::move(out), ng,
              [x, gain, bias, groups, N, C, L, Cg, M, xhat = std::move(xhat),
               istd = std::move(istd)](Tape& t, Var self) {
                const Tensor<S>& go = t.gbuf(self);
                const Tensor<S>& vg2 = t.val(gain);
                if (t.needs_grad(gain)) {
                  Tensor<S>& gg = t.gbuf(gain);
                  for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < C; ++c)
                      for (int64_t l = 0; l < L; ++l)
                        gg.at(c) += go.at(n * C * L + c * L + l) * xhat.at(n * C * L + c * L + l);
                }
                if (t.needs_grad(bias)) {
                  Tensor<S>& gb = t.gbuf(bias);
                  for (int64_t n = 0; n < N; ++n)
                    for (int64_t c = 0; c < C; ++c)
                      for (int64_t l = 0; l < L; ++l) gb.at(c) += go.at(n * C * L + c * L + l);
                }
                if (t.needs_grad(x)) {
                  Tensor<S>& gx = t.gbuf(x);
                  for (int64_t n = 0; n < N; ++n) {
                    for (int g = 0; g < groups; ++g) {
                      const int64_t base = n * C * L + g * Cg * L;
                      S m1 = 0, m2 = 0;
                      for (int64_t e = 0; e < M; ++e) {
                        const int64_t c = g * Cg + e / L;
                        const S dxh = go.at(base + e) * vg2.at(c);
                        m1 += dxh;
                        m2 += dxh * xhat.at(base + e);
                      }
                      m1 /= static_cast<S>(M);
                      m2 /= static_cast<S>(M);
                      const S is = istd[static_cast<size_t>(n * groups + g)];
                      for (int64_t e = 0; e < M; ++e) {
                        const int64_t c = g * Cg + e / L;
                        const S dxh = go.at(base + e) * vg2.at(c);
                        gx.at(base + e) += is * (dxh - m1 - xhat.at(base + e) * m2);
                      }
                    }
                  }
                }
              });
}

template <typename S>
Var Tape<S>::conv1d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor<S>& vx = val(x);
  const Tensor<S>& vw = val(w);
  const Tensor<S>& vb = val(b);
  const int64_t N = vx.dim(0), Ci = vx.dim(1), L = vx.dim(2);
  const int64_t Co = vw.dim(0), K = vw.dim(2);
  const int64_t Lo = (L + 2 * pad - K) / stride + 1;
  if (Lo < 1) throw std::invalid_argument("conv1d: non-positive output length");
  Tensor<S> out({N, Co, Lo});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t co = 0; co < Co; ++co)
      for (int64_t ol = 0; ol < Lo; ++ol) {
        S acc = vb.at(co);
        const int64_t start = ol * stride - pad;
        const int64_t k_lo = std::max<int64_t>(0, -start);
        const int64_t k_hi = std::min<int64_t>(K, L - start);
        for (int64_t ci = 0; ci < Ci; ++ci) {
          const S* wrow = vw.ptr() + co * Ci * K + ci * K;
          const S* xrow = vx.ptr() + n * Ci * L + ci * L + start;
          for (int64_t k = k_lo; k < k_hi; ++k) acc += wrow[k] * xrow[k];
        }
        out.at(n * Co * Lo + co * Lo + ol) = acc;
      }
  const bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
  return push(std::move(out), ng, [x, w, b, stride, pad, N, Ci, L, Co, K, Lo](Tape& t, Var self) {
    const Tensor<S>& go = t.gbuf(self);
    const Tensor<S>& vx2 = t.val(x);
    const Tensor<S>& vw2 = t.val(w);
    const bool gx_on = t.needs_grad(x);
    const bool gw_on = t.needs_grad(w);
    if (t.needs_grad(b)) {
      Tensor<S>& gb = t.gbuf(b);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Co; ++co)
          for (int64_t ol = 0; ol < Lo; ++ol) gb.at(co) += go.at(n * Co * Lo + co * Lo + ol);
    }
    if (!gx_on && !gw_on) return;
    Tensor<S>* gx = gx_on ? &t.gbuf(x) : nullptr;
    Tensor<S>* gw = gw_on ? &t.gbuf(w) : nullptr;
    for (int64_t n = 0; n < N; ++n)
      for (int64_t co = 0; co < Co; ++co)
        for (int64_t ol = 0; ol < Lo; ++ol) {
          const S g = go.at(n * Co * Lo + co * Lo + ol);
          const int64_t start = ol * stride - pad;
          const int64_t k_lo = std::max<int64_t>(0, -start);
          const int64_t k_hi = std::min<int64_t>(K, L - start);
          for (int64_t ci = 0; ci < Ci; ++ci) {
            const S* wrow = vw2.ptr() + co * Ci * K + ci * K;
            const S* xrow = vx2.ptr() + n * Ci * L + ci * L + start;
            if (gx) {
              S* gxrow = gx->ptr() + n * Ci * L + ci * L + start;
              for (int64_t k = k_lo; k < k_hi; ++k) gxrow[k] += g * wrow[k];
            }
            if (gw) {
              S* gwrow = gw->ptr() + co * Ci * K + ci * K;
              for (int64_t k = k_lo; k < k_hi; ++k) gwrow[k] += g * xrow[k];
            }
          }
        }
  });
}

template <typename S>
Var Tape<S>::l2norm_rows(Var x, double clamp, std::vector<int>* clamped_rows) {
  const Tensor<S>& vx = val(x);
  const int64_t N = vx.dim(0), D = vx.dim(1);
  Tensor<S> out({N, D});
  std::vector<S> radius(static_cast<size_t>(N));
  std::vector<uint8_t> clamped(static_cast<size_t>(N), 0);
  for (int64_t i = 0; i < N; ++i) {
    double ss = 0;
    for (int64_t j = 0; j < D; ++j) {
      const double v = static_cast<double>(vx.at(i, j));
      ss += v * v;
    }
    double r = std::sqrt(ss);
    if (r < clamp) {
      r = clamp;
      clamped[static_cast<size_t>(i)] = 1;
      if (clamped_rows) clamped_rows->push_back(static_cast<int>(i));
    }
    radius[static_cast<size_t>(i)] = static_cast<S>(r);
    const S inv = static_cast<S>(1.0 / r);
    for (int64_t j = 0; j < D; ++j) out.at(i, j) = vx.at(i, j) * inv;
  }
  return push(std::move(out), needs_grad(x),
              [x, N, D, radius = std::move(radius), clamped = std::move(clamped)](Tape& t, Var self) {
                if (!t.needs_grad(x)) return;
                const Tensor<S>& go = t.gbuf(self);
                const Tensor<S>& y = t.val(self);
                Tensor<S>& gx = t.gbuf(x);
                for (int64_t i = 0; i < N; ++i) {
                  const S inv = S(1) / radius[static_cast<size_t>(i)];
                  if (clamped[static_cast<size_t>(i)]) {
                    for (int64_t j = 0; j < D; ++j) gx.at(i, j) += go.at(i, j) * inv;
                  } else {
                    S dot = 0;
                    for (int64_t j = 0; j < D; ++j) dot += go.at(i, j) * y.at(i, j);
                    for (int64_t j = 0; j < D; ++j)
                      gx.at(i, j) += (go.at(i, j) - y.at(i, j) * dot) * inv;
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// gather / masking / pooling

template <typename S>
Var Tape<S>::gather_rows(Var table, std::vector<int> idx) {
  const Tensor<S>& vt = val(table);
  const int64_t D = vt.dim(1);
  const int64_t N = static_cast<int64_t>(idx.size());
  Tensor<S> out({N, D});
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < D; ++j) out.at(i, j) = vt.at(idx[static_cast<size_t>(i)], j);
  return push(std::move(out), needs_grad(table),
              [table, idx = std::move(idx), N, D](Tape& t, Var self) {
                if (!t.needs_grad(table)) return;
                const Tensor<S>& go = t.gbuf(self);
                Tensor<S>& gt = t.gbuf(table);
                for (int64_t i = 0; i < N; ++i)
                  for (int64_t j = 0; j < D; ++j) gt.at(idx[static_cast<size_t>(i)], j) += go.at(i, j);
              });
}

template <typename S>
Var Tape<S>::replace_rows(Var x, std::vector<uint8_t> mask, Var row) {
  const Tensor<S>& vx = val(x);
  const Tensor<S>& vr = val(row);
  const int64_t N = vx.dim(0), D = vx.dim(1);
  Tensor<S> out = vx;
  for (int64_t i = 0; i < N; ++i)
    if (mask[static_cast<size_t>(i)])
      for (int64_t j = 0; j < D; ++j) out.at(i, j) = vr.at(j);
  const bool ng = needs_grad(x) || needs_grad(row);
  return push(std::move(out), ng, [x, row, mask = std::move(mask), N, D](Tape& t, Var self) {
    const Tensor<S>& go = t.gbuf(self);
    if (t.needs_grad(x)) {
      Tensor<S>& gx = t.gbuf(x);
      for (int64_t i = 0; i < N; ++i)
        if (!mask[static_cast<size_t>(i)])
          for (int64_t j = 0; j < D; ++j) gx.at(i, j) += go.at(i, j);
    }
    if (t.needs_grad(row)) {
      Tensor<S>& gr = t.gbuf(row);
      for (int64_t i = 0; i < N; ++i)
        if (mask[static_cast<size_t>(i)])
          for (int64_t j = 0; j < D; ++j) gr.at(j) += go.at(i, j);
    }
  });
}

template <typename S>
Var Tape<S>::mean_rows(Var x) {
  const Tensor<S>& vx = val(x);
  const int64_t N = vx.dim(0), D = vx.dim(1);
  Tensor<S> out({1, D});
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < D; ++j) out.at(0, j) += vx.at(i, j);
  const S inv = S(1) / static_cast<S>(N);
  for (int64_t j = 0; j < D; ++j) out.at(0, j) *= inv;
  return push(std::move(out), needs_grad(x), [x, N, D, inv](Tape& t, Var self) {
    if (!t.needs_grad(x)) return;
    const Tensor<S>& go = t.gbuf(self);
    Tensor<S>& gx = t.gbuf(x);
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < D; ++j) gx.at(i, j) += go.at(0, j) * inv;
  });
}

// ---------------------------------------------------------------------------
// losses

template <typename S>
Var Tape<S>::sum_sq_diff(Var a, Var b) {
  const Tensor<S>& va = val(a);
  const Tensor<S>& vb = val(b);
  S acc = 0;
  for (size_t i = 0; i < va.data.size(); ++i) {
    const S d = va.data[i] - vb.data[i];
    acc += d * d;
  }
  Tensor<S> out({1});
  out.at(0) = acc;
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(std::move(out), ng, [a, b](Tape& t, Var self) {
    const S g0 = t.gbuf(self).at(0);
    const Tensor<S>& va2 = t.val(a);
    const Tensor<S>& vb2 = t.val(b);
    if (t.needs_grad(a)) {
      Tensor<S>& ga = t.gbuf(a);
      for (size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] += g0 * S(2) * (va2.data[i] - vb2.data[i]);
    }
    if (t.needs_grad(b)) {
      Tensor<S>& gb = t.gbuf(b);
      for (size_t i = 0; i < gb.data.size(); ++i)
        gb.data[i] -= g0 * S(2) * (va2.data[i] - vb2.data[i]);
    }
  });
}

namespace {

// Row log-softmax denominators; returns per-row (max, log sum exp).
template <typename S>
void row_lse(const Tensor<S>& logits, int64_t i, S& mx, S& lse) {
  const int64_t K = logits.dim(1);
  mx = logits.at(i, 0);
  for (int64_t j = 1; j < K; ++j) mx = std::max(mx, logits.at(i, j));
  double sum = 0;
  for (int64_t j = 0; j < K; ++j) sum += std::exp(static_cast<double>(logits.at(i, j) - mx));
  lse = static_cast<S>(std::log(sum));
}

}  // namespace

template <typename S>
Var Tape<S>::masked_ce(Var logits, std::vector<int> targets, std::vector<uint8_t> mask,
                       double weight) {
  const Tensor<S>& vl = val(logits);
  const int64_t N = vl.dim(0), K = vl.dim(1);
  double acc = 0;
  for (int64_t i = 0; i < N; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    S mx, lse;
    row_lse(vl, i, mx, lse);
    acc += static_cast<double>(mx + lse - vl.at(i, targets[static_cast<size_t>(i)]));
  }
  Tensor<S> out({1});
  out.at(0) = static_cast<S>(acc * weight);
  return push(std::move(out), needs_grad(logits),
              [logits, targets = std::move(targets), mask = std::move(mask), weight, N,
               K](Tape& t, Var self) {
                if (!t.needs_grad(logits)) return;
                const S g0 = t.gbuf(self).at(0);
                const Tensor<S>& vl2 = t.val(logits);
                Tensor<S>& gl = t.gbuf(logits);
                const S w = static_cast<S>(weight) * g0;
                for (int64_t i = 0; i < N; ++i) {
                  if (!mask[static_cast<size_t>(i)]) continue;
                  S mx, lse;
                  row_lse(vl2, i, mx, lse);
                  for (int64_t j = 0; j < K; ++j) {
                    const S p = static_cast<S>(std::exp(static_cast<double>(vl2.at(i, j) - mx - lse)));
                    gl.at(i, j) += w * (p - S(j == targets[static_cast<size_t>(i)] ? 1 : 0));
                  }
                }
              });
}

template <typename S>
Var Tape<S>::ce_smoothed(Var logits, std::vector<int> labels, double eps_smooth, double weight) {
  const Tensor<S>& vl = val(logits);
  const int64_t B = vl.dim(0), K = vl.dim(1);
  double acc = 0;
  for (int64_t i = 0; i < B; ++i) {
    S mx, lse;
    row_lse(vl, i, mx, lse);
    // -(1-eps) log p_y - eps/K sum_c log p_c
    const double logp_y = static_cast<double>(vl.at(i, labels[static_cast<size_t>(i)]) - mx - lse);
    double sum_logp = 0;
    for (int64_t j = 0; j < K; ++j) sum_logp += static_cast<double>(vl.at(i, j) - mx - lse);
    acc += -(1.0 - eps_smooth) * logp_y - (eps_smooth / static_cast<double>(K)) * sum_logp;
  }
  Tensor<S> out({1});
  out.at(0) = static_cast<S>(acc * weight);
  return push(std::move(out), needs_grad(logits),
              [logits, labels = std::move(labels), eps_smooth, weight, B, K](Tape& t, Var self) {
                if (!t.needs_grad(logits)) return;
                const S g0 = t.gbuf(self).at(0);
                const Tensor<S>& vl2 = t.val(logits);
                Tensor<S>& gl = t.gbuf(logits);
                const S w = static_cast<S>(weight) * g0;
                for (int64_t i = 0; i < B; ++i) {
                  S mx, lse;
                  row_lse(vl2, i, mx, lse);
                  for (int64_t j = 0; j < K; ++j) {
                    const S p = static_cast<S>(std::exp(static_cast<double>(vl2.at(i, j) - mx - lse)));
                    const S q = static_cast<S>(
                        (j == labels[static_cast<size_t>(i)] ? 1.0 - eps_smooth : 0.0) +
                        eps_smooth / static_cast<double>(K));
                    gl.at(i, j) += w * (p - q);
                  }
                }
              });
}

template <typename S>
Var Tape<S>::bce_logits(Var logits, std::vector<float> labels, double weight) {
  const Tensor<S>& vl = val(logits);
  const int64_t B = vl.dim(0);
  double acc = 0;
  for (int64_t i = 0; i < B; ++i) {
    const double z = static_cast<double>(vl.at(i));
    const double y = static_cast<double>(labels[static_cast<size_t>(i)]);
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
  }
  Tensor<S> out({1});
  out.at(0) = static_cast<S>(acc * weight);
  return push(std::move(out), needs_grad(logits),
              [logits, labels = std::move(labels), weight, B](Tape& t, Var self) {
                if (!t.needs_grad(logits)) return;
                const S g0 = t.gbuf(self).at(0);
                const Tensor<S>& vl2 = t.val(logits);
                Tensor<S>& gl = t.gbuf(logits);
                for (int64_t i = 0; i < B; ++i) {
                  const double z = static_cast<double>(vl2.at(i));
                  const double sig = 1.0 / (1.0 + std::exp(-z));
                  gl.at(i) += g0 * static_cast<S>(weight * (sig - static_cast<double>(labels[static_cast<size_t>(i)])));
                }
              });
}

template <typename S>
std::vector<int> argmax_rows(const Tensor<S>& t) {
  const int64_t N = t.dim(0), D = t.dim(1);
  std::vector<int> out(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) {
    int best = 0;
    for (int64_t j = 1; j < D; ++j)
      if (t.at(i, j) > t.at(i, best)) best = static_cast<int>(j);
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

template class Tape<float>;
template class Tape<double>;
template std::vector<int> argmax_rows(const Tensor<float>&);
template std::vector<int> argmax_rows(const Tensor<double>&);

}  // namespace neurocodec
