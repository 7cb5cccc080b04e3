#ifndef NEUROCODEC_MODEL_HPP
#define NEUROCODEC_MODEL_HPP

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "neurocodec/autodiff.hpp"
#include "neurocodec/eeg.hpp"
#include "neurocodec/tensor.hpp"

namespace neurocodec {

struct ConvBlockSpec {
  int in_ch = 1;
  int out_ch = 8;
  int kernel = 15;
  int stride = 8;
  int pad = 7;
};

struct ModelConfig {
  int hidden_d = 200;
  int layers = 12;
  int heads = 10;
  int mlp_d = 800;
  int tmax = 16;
  int registry_size = 70;
  int patch_w = 200;
  std::vector<ConvBlockSpec> conv = {{1, 8, 15, 8, 7}, {8, 8, 3, 1, 1}, {8, 8, 3, 1, 1}};
  int gn_groups = 4;
  double layer_scale_init = 0.1;
  bool mask_token = true;
  double ln_eps = 1e-6;
  // The q/k norms only strip scale; a tiny epsilon keeps the logit-level
  // scale-invariance property exact to 1e-9.
  double qk_ln_eps = 1e-12;
  double drop_path = 0.0;  // stochastic depth rate, fine-tuning only

  // "base" mirrors the published pre-training table; "tiny" is the desk-scale
  // preset used by the test and acceptance suites.
  static ModelConfig preset(const std::string& name);

  int head_dim() const { return hidden_d / heads; }
  int conv_out_len() const;    // temporal length after the conv chain
  int flatten_width() const;   // last out_ch * conv_out_len
  bool needs_proj() const { return flatten_width() != hidden_d; }
  void validate() const;

  std::string to_kv() const;
  static ModelConfig from_kv(const std::string& text);
};

template <typename S>
struct ParamStore {
  std::map<std::string, Tensor<S>> t;

  Tensor<S>& add(const std::string& name, std::vector<int64_t> shape) {
    auto [it, fresh] = t.emplace(name, Tensor<S>(std::move(shape)));
    if (!fresh) throw std::logic_error("duplicate parameter: " + name);
    return it->second;
  }
  Tensor<S>& at(const std::string& name) {
    const auto it = t.find(name);
    if (it == t.end()) throw std::logic_error("missing parameter: " + name);
    return it->second;
  }
  const Tensor<S>& at(const std::string& name) const {
    const auto it = t.find(name);
    if (it == t.end()) throw std::logic_error("missing parameter: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return t.count(name) != 0; }
  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& [k, v] : t) n += v.numel();
    return n;
  }
};

// Fills `store` with backbone tensors ("enc.*", "emb.*", "blk<i>.*",
// "final_ln.*"). Each tensor's init stream is keyed by its name, so adding
// parameters never reshuffles existing ones.
template <typename S>
void init_backbone_params(ParamStore<S>& store, const ModelConfig& cfg, uint64_t seed);

// Adds one transformer block's parameters under `prefix` (used for both the
// encoder blocks and the tokenizer's decoder blocks).
template <typename S>
void init_block_params(ParamStore<S>& store, const ModelConfig& cfg, const std::string& prefix,
                       uint64_t seed);

template <typename S>
void init_linear(ParamStore<S>& store, const std::string& name, int64_t in, int64_t out,
                 bool bias, uint64_t seed);

// Parameters registered on a tape for one forward pass.
struct VarMap {
  std::map<std::string, Var> m;
  Var at(const std::string& name) const {
    const auto it = m.find(name);
    if (it == m.end()) throw std::logic_error("missing parameter var: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return m.count(name) != 0; }
};

template <typename S>
VarMap register_params(Tape<S>& tape, const ParamStore<S>& store,
                       const std::function<bool(const std::string&)>& trainable);

template <typename S>
VarMap register_params_frozen(Tape<S>& tape, const ParamStore<S>& store);

// Optional probes into attention internals for tests.
struct AttnProbe {
  std::vector<Var> logits;   // per head, pre-softmax (N,N)
  std::vector<Var> weights;  // per head, post-softmax
};

struct ForwardOpts {
  const std::vector<uint8_t>* corrupt = nullptr;  // mask bits, length N
  // Per-block residual branch scale {attn, mlp}: 1 normally, 0 or 1/(1-p)
  // under stochastic depth.
  const std::vector<std::array<double, 2>>* branch_scale = nullptr;
};

template <typename S>
Var temporal_encode(Tape<S>& tape, const VarMap& vars, const ModelConfig& cfg,
                    const PatchGrid& grid);

template <typename S>
Var add_embeddings(Tape<S>& tape, const VarMap& vars, const ModelConfig& cfg, Var x,
                   const PatchGrid& grid);

// Pre-norm residual block with LN-QK attention and layer-scale.
template <typename S>
Var transformer_block(Tape<S>& tape, const VarMap& vars, const ModelConfig& cfg, Var x,
                      const std::string& prefix, std::array<double, 2> branch_scale = {1.0, 1.0},
                      AttnProbe* probe = nullptr);

// temporal_encode -> (mask-token substitution) -> add_embeddings -> blocks ->
// final layer norm. Returns the N x d hidden matrix.
template <typename S>
Var encoder_forward(Tape<S>& tape, const VarMap& vars, const ModelConfig& cfg,
                    const PatchGrid& grid, const ForwardOpts& opts = {});

// Mean over tokens followed by a linear head at `prefix` (w/b).
template <typename S>
Var pool_head(Tape<S>& tape, const VarMap& vars, Var hidden, const std::string& prefix);

template <typename S>
Tensor<S> grid_to_tensor(const PatchGrid& grid);

extern template void init_backbone_params(ParamStore<float>&, const ModelConfig&, uint64_t);
extern template void init_backbone_params(ParamStore<double>&, const ModelConfig&, uint64_t);

}  // namespace neurocodec

#endif
