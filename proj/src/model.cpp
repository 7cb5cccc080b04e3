#include "neurocodec/model.hpp"

#include <cmath>
#include <sstream>

#include "neurocodec/errors.hpp"
#include "neurocodec/rng.hpp"

namespace neurocodec {

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig cfg;
  if (name == "base") {
    cfg.hidden_d = 200;
    cfg.layers = 12;
    cfg.heads = 10;
    cfg.mlp_d = 800;
    cfg.layer_scale_init = 0.1;
  } else if (name == "tiny") {
    cfg.hidden_d = 64;
    cfg.layers = 2;
    cfg.heads = 4;
    cfg.mlp_d = 256;
    cfg.layer_scale_init = 0.1;
  } else {
    throw ConfigError("unknown model preset: " + name);
  }
  return cfg;
}

int ModelConfig::conv_out_len() const {
  int len = patch_w;
  for (const auto& c : conv) {
    const int span = len + 2 * c.pad - c.kernel;
    if (span < 0) throw ConfigError("conv spec incompatible with patch width");
    len = span / c.stride + 1;
  }
  return len;
}

int ModelConfig::flatten_width() const { return conv.back().out_ch * conv_out_len(); }

void ModelConfig::validate() const {
  if (hidden_d % heads != 0) throw ConfigError("hidden_d must be divisible by heads");
  if (conv.empty()) throw ConfigError("temporal encoder needs at least one conv block");
  for (size_t i = 0; i + 1 < conv.size(); ++i)
    if (conv[i].out_ch != conv[i + 1].in_ch) throw ConfigError("conv channel chain mismatch");
  if (conv.front().in_ch != 1) throw ConfigError("first conv block must take 1 input channel");
  for (const auto& c : conv)
    if (c.out_ch % gn_groups != 0) throw ConfigError("conv channels not divisible by gn_groups");
  conv_out_len();  // throws if non-positive
  if (tmax < 1 || layers < 1 || registry_size < 1) throw ConfigError("bad model dimensions");
}

std::string ModelConfig::to_kv() const {
  std::ostringstream os;
  os << "hidden_d=" << hidden_d << "\nlayers=" << layers << "\nheads=" << heads
     << "\nmlp_d=" << mlp_d << "\ntmax=" << tmax << "\nregistry_size=" << registry_size
     << "\npatch_w=" << patch_w << "\ngn_groups=" << gn_groups << "\nlayer_scale_init="
     << layer_scale_init << "\nmask_token=" << (mask_token ? 1 : 0) << "\nln_eps=" << ln_eps << "\nqk_ln_eps=" << qk_ln_eps
     << "\ndrop_path=" << drop_path << "\nconv=";
  for (size_t i = 0; i < conv.size(); ++i) {
    if (i) os << ",";
    os << conv[i].in_ch << ":" << conv[i].out_ch << ":" << conv[i].kernel << ":" << conv[i].stride
       << ":" << conv[i].pad;
  }
  os << "\n";
  return os.str();
}

ModelConfig ModelConfig::from_kv(const std::string& text) {
  ModelConfig cfg;
  cfg.conv.clear();
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "hidden_d") cfg.hidden_d = std::stoi(val);
    else if (key == "layers") cfg.layers = std::stoi(val);
    else if (key == "heads") cfg.heads = std::stoi(val);
    else if (key == "mlp_d") cfg.mlp_d = std::stoi(val);
    else if (key == "tmax") cfg.tmax = std::stoi(val);
    else if (key == "registry_size") cfg.registry_size = std::stoi(val);
    else if (key == "patch_w") cfg.patch_w = std::stoi(val);
    else if (key == "gn_groups") cfg.gn_groups = std::stoi(val);
    else if (key == "layer_scale_init") cfg.layer_scale_init = std::stod(val);
    else if (key == "mask_token") cfg.mask_token = val != "0";
    else if (key == "ln_eps") cfg.ln_eps = std::stod(val);
    else if (key == "qk_ln_eps") cfg.qk_ln_eps = std::stod(val);
    else if (key == "drop_path") cfg.drop_path = std::stod(val);
    else if (key == "conv") {
      std::istringstream cs(val);
      std::string part;
      while (std::getline(cs, part, ',')) {
        ConvBlockSpec b;
        if (std::sscanf(part.c_str(), "%d:%d:%d:%d:%d", &b.in_ch, &b.out_ch, &b.kernel, &b.stride,
                        &b.pad) != 5)
          throw FormatError("bad conv spec: " + part);
        cfg.conv.push_back(b);
      }
    } else {
      throw FormatError("unknown model config key: " + key);
    }
  }
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// parameter init

namespace {

template <typename S>
void fill_trunc_normal(Tensor<S>& t, uint64_t seed, double std_dev) {
  Rng rng(seed);
  for (S& v : t.data) v = static_cast<S>(rng.next_trunc_normal(std_dev));
}

}  // namespace

template <typename S>
void init_linear(ParamStore<S>& store, const std::string& name, int64_t in, int64_t out, bool bias,
                 uint64_t seed) {
  Tensor<S>& w = store.add(name + ".w", {in, out});
  fill_trunc_normal(w, derive_seed(seed, name + ".w"), 0.02);
  if (bias) store.add(name + ".b", {out});  // zeros
}

template <typename S>
void init_block_params(ParamStore<S>& store, const ModelConfig& cfg, const std::string& prefix,
                       uint64_t seed) {
  const int64_t d = cfg.hidden_d;
  const int64_t dh = cfg.head_dim();
  auto norm_pair = [&](const std::string& n, int64_t dim) {
    store.add(n + ".g", {dim}).fill(S(1));
    store.add(n + ".b", {dim});
  };
  norm_pair(prefix + "ln1", d);
  for (const char* w : {"wq", "wk", "wv"}) {
    Tensor<S>& t = store.add(prefix + "attn." + w, {d, d});
    fill_trunc_normal(t, derive_seed(seed, prefix + "attn." + w), 0.02);
  }
  norm_pair(prefix + "attn.qln", dh);
  norm_pair(prefix + "attn.kln", dh);
  init_linear(store, prefix + "attn.wo", d, d, true, seed);
  store.add(prefix + "ls1", {d}).fill(static_cast<S>(cfg.layer_scale_init));
  norm_pair(prefix + "ln2", d);
  init_linear(store, prefix + "mlp.fc1", d, cfg.mlp_d, true, seed);
  init_linear(store, prefix + "mlp.fc2", cfg.mlp_d, d, true, seed);
  store.add(prefix + "ls2", {d}).fill(static_cast<S>(cfg.layer_scale_init));
}

template <typename S>
void init_backbone_params(ParamStore<S>& store, const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  for (size_t i = 0; i < cfg.conv.size(); ++i) {
    const auto& c = cfg.conv[i];
    const std::string base = "enc.conv" + std::to_string(i + 1);
    Tensor<S>& w = store.add(base + ".w", {c.out_ch, c.in_ch, c.kernel});
    fill_trunc_normal(w, derive_seed(seed, base + ".w"), 0.02);
    store.add(base + ".b", {c.out_ch});
    store.add("enc.gn" + std::to_string(i + 1) + ".g", {c.out_ch}).fill(S(1));
    store.add("enc.gn" + std::to_string(i + 1) + ".b", {c.out_ch});
  }
  if (cfg.needs_proj()) init_linear(store, "enc.proj", cfg.flatten_width(), cfg.hidden_d, false, seed);
  Tensor<S>& te = store.add("emb.te", {cfg.tmax, cfg.hidden_d});
  fill_trunc_normal(te, derive_seed(seed, "emb.te"), 0.02);
  Tensor<S>& se = store.add("emb.se", {cfg.registry_size, cfg.hidden_d});
  fill_trunc_normal(se, derive_seed(seed, "emb.se"), 0.02);
  if (cfg.mask_token) {
    Tensor<S>& mt = store.add("emb.mask", {1, cfg.hidden_d});
    fill_trunc_normal(mt, derive_seed(seed, "emb.mask"), 0.02);
  }
  for (int i = 1; i <= cfg.layers; ++i)
    init_block_params(store, cfg, "blk" + std::to_string(i) + ".", seed);
  store.add("final_ln.g", {cfg.hidden_d}).fill(S(1));
  store.add("final_ln.b", {cfg.hidden_d});
}

// ---------------------------------------------------------------------------
// forward

template <typename S>
VarMap register_params(Tape<S>& tape, const ParamStore<S>& store,
                       const std::function<bool(const std::string&)>& trainable) {
  VarMap vars;
  for (const auto& [name, tensor] : store.t)
    vars.m[name] = tape.leaf_external(&tensor, trainable(name));
  return vars;
}

template <typename S>
VarMap register_params_frozen(Tape<S>& tape, const ParamStore<S>& store) {
  return register_params(tape, store, [](const std::string&) { return false; });
}

template <typename S>
Tensor<S> grid_to_tensor(const PatchGrid& grid) {
  return grid.patches.template cast<S>();
}

template <typename S>
Var temporal_encode(Tape<S>& tape, const VarMap& vars, const ModelConfig& cfg,
                    const PatchGrid& grid) {
  if (grid.w != cfg.patch_w)
    throw ConfigError("patch width " + std::to_string(grid.w) + " does not match model patch_w " +
                      std::to_string(cfg.patch_w));
  const int64_t N = grid.n();
  Var x = tape.leaf(grid_to_tensor<S>(grid), false);
  x = tape.reshape(x, {N, 1, grid.w});
  for (size_t i = 0; i < cfg.conv.size(); ++i) {
    const auto& c = cfg.conv[i];
    const std::string idx = std::to_string(i + 1);
    x = tape.conv1d(x, vars.at("enc.conv" + idx + ".w"), vars.at("enc.conv" + idx + ".b"), c.stride,
                    c.pad);
    x = tape.group_norm(x, vars.at("enc.gn" + idx + ".g"), vars.at("enc.gn" + idx + ".b"),
                        cfg.gn_groups, cfg.ln_eps);
    x = tape.gelu(x);
  }
  x = tape.reshape(x, {N, cfg.flatten_width()});
  if (cfg.needs_proj()) x = tape.matmul(x, vars.at("enc.proj.w"));
  return x;
}

template <typename S>
Var add_embeddings(Tape<S>& tape, const VarMap& vars, const ModelConfig& cfg, Var x,
                   const PatchGrid& grid) {
  const int64_t N = grid.n();
  std::vector<int> te_idx(static_cast<size_t>(N)), se_idx(static_cast<size_t>(N));
  for (int64_t i = 0; i < N; ++i) {
    const int k = grid.tag_time[static_cast<size_t>(i)];
    const int c = grid.tag_channel[static_cast<size_t>(i)];
    if (k < 1 || k > cfg.tmax)
      throw ConfigError("time index " + std::to_string(k) + " outside [1, tmax=" +
                        std::to_string(cfg.tmax) + "]");
    if (c < 0 || c >= cfg.registry_size)
      throw ConfigError("channel index " + std::to_string(c) + " outside registry");
    te_idx[static_cast<size_t>(i)] = k - 1;
    se_idx[static_cast<size_t>(i)] = c;
  }
  const Var te = tape.gather_rows(vars.at("emb.te"), std::move(te_idx));
  const Var se = tape.gather_rows(vars.at("emb.se"), std::move(se_idx));
  return tape.add(tape.add(x, te), se);
}

template <typename S>
Var transformer_block(Tape<S>& tape, const VarMap& vars, const ModelConfig& cfg, Var x,
                      const std::string& prefix, std::array<double, 2> branch_scale,
                      AttnProbe* probe) {
  const int64_t d = cfg.hidden_d;
  const int64_t dh = cfg.head_dim();
  const double logit_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Var xn = tape.layer_norm(x, vars.at(prefix + "ln1.g"), vars.at(prefix + "ln1.b"), cfg.ln_eps);
  const Var q = tape.matmul(xn, vars.at(prefix + "attn.wq"));
  const Var k = tape.matmul(xn, vars.at(prefix + "attn.wk"));
  const Var v = tape.matmul(xn, vars.at(prefix + "attn.wv"));
  std::vector<Var> head_outs;
  head_outs.reserve(static_cast<size_t>(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h) {
    const int64_t c0 = h * dh;
    Var qh = tape.slice_cols(q, c0, dh);
    Var kh = tape.slice_cols(k, c0, dh);
    const Var vh = tape.slice_cols(v, c0, dh);
    qh = tape.layer_norm(qh, vars.at(prefix + "attn.qln.g"), vars.at(prefix + "attn.qln.b"),
                         cfg.qk_ln_eps);
    kh = tape.layer_norm(kh, vars.at(prefix + "attn.kln.g"), vars.at(prefix + "attn.kln.b"),
                         cfg.qk_ln_eps);
    const Var logits = tape.scale(tape.matmul_nt(qh, kh), logit_scale);
    const Var weights = tape.softmax_rows(logits);
    if (probe) {
      probe->logits.push_back(logits);
      probe->weights.push_back(weights);
    }
    head_outs.push_back(tape.matmul(weights, vh));
  }
  Var attn = tape.concat_cols(head_outs);
  attn = tape.add_rowvec(tape.matmul(attn, vars.at(prefix + "attn.wo.w")),
                         vars.at(prefix + "attn.wo.b"));
  attn = tape.scale_cols(attn, vars.at(prefix + "ls1"));
  if (branch_scale[0] != 1.0) attn = tape.scale(attn, branch_scale[0]);
  x = tape.add(x, attn);

  Var mn = tape.layer_norm(x, vars.at(prefix + "ln2.g"), vars.at(prefix + "ln2.b"), cfg.ln_eps);
  mn = tape.add_rowvec(tape.matmul(mn, vars.at(prefix + "mlp.fc1.w")), vars.at(prefix + "mlp.fc1.b"));
  mn = tape.gelu(mn);
  mn = tape.add_rowvec(tape.matmul(mn, vars.at(prefix + "mlp.fc2.w")), vars.at(prefix + "mlp.fc2.b"));
  mn = tape.scale_cols(mn, vars.at(prefix + "ls2"));
  if (branch_scale[1] != 1.0) mn = tape.scale(mn, branch_scale[1]);
  (void)d;
  return tape.add(x, mn);
}

template <typename S>
Var encoder_forward(Tape<S>& tape, const VarMap& vars, const ModelConfig& cfg,
                    const PatchGrid& grid, const ForwardOpts& opts) {
  Var x = temporal_encode(tape, vars, cfg, grid);
  if (opts.corrupt) {
    if (static_cast<int64_t>(opts.corrupt->size()) != grid.n())
      throw ConfigError("corrupt mask length does not match patch count");
    x = tape.replace_rows(x, *opts.corrupt, vars.at("emb.mask"));
  }
  x = add_embeddings(tape, vars, cfg, x, grid);
  for (int i = 1; i <= cfg.layers; ++i) {
    std::array<double, 2> bs = {1.0, 1.0};
    if (opts.branch_scale) bs = (*opts.branch_scale)[static_cast<size_t>(i - 1)];
    x = transformer_block(tape, vars, cfg, x, "blk" + std::to_string(i) + ".", bs);
  }
  return tape.layer_norm(x, vars.at("final_ln.g"), vars.at("final_ln.b"), cfg.ln_eps);
}

template <typename S>
Var pool_head(Tape<S>& tape, const VarMap& vars, Var hidden, const std::string& prefix) {
  const Var pooled = tape.mean_rows(hidden);
  return tape.add_rowvec(tape.matmul(pooled, vars.at(prefix + ".w")), vars.at(prefix + ".b"));
}

// explicit instantiations
#define NC_INSTANTIATE(S)                                                                        \
  template void init_backbone_params(ParamStore<S>&, const ModelConfig&, uint64_t);             \
  template void init_block_params(ParamStore<S>&, const ModelConfig&, const std::string&,       \
                                  uint64_t);                                                    \
  template void init_linear(ParamStore<S>&, const std::string&, int64_t, int64_t, bool,         \
                            uint64_t);                                                          \
  template VarMap register_params(Tape<S>&, const ParamStore<S>&,                               \
                                  const std::function<bool(const std::string&)>&);              \
  template VarMap register_params_frozen(Tape<S>&, const ParamStore<S>&);                       \
  template Tensor<S> grid_to_tensor(const PatchGrid&);                                          \
  template Var temporal_encode(Tape<S>&, const VarMap&, const ModelConfig&, const PatchGrid&);  \
  template Var add_embeddings(Tape<S>&, const VarMap&, const ModelConfig&, Var,                 \
                              const PatchGrid&);                                                \
  template Var transformer_block(Tape<S>&, const VarMap&, const ModelConfig&, Var,              \
                                 const std::string&, std::array<double, 2>, AttnProbe*);        \
  template Var encoder_forward(Tape<S>&, const VarMap&, const ModelConfig&, const PatchGrid&,   \
                               const ForwardOpts&);                                             \
  template Var pool_head(Tape<S>&, const VarMap&, Var, const std::string&);

NC_INSTANTIATE(float)
NC_INSTANTIATE(double)
#undef NC_INSTANTIATE

}  // namespace neurocodec
