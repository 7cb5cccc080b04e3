#include "neurocodec/tokenizer.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "neurocodec/csvlog.hpp"
#include "neurocodec/data.hpp"
#include "neurocodec/errors.hpp"
#include "neurocodec/optim.hpp"
#include "neurocodec/rng.hpp"
#include "neurocodec/threads.hpp"

namespace neurocodec {

TokenizerConfig TokenizerConfig::preset(const std::string& name) {
  TokenizerConfig cfg;
  cfg.enc = ModelConfig::preset(name);
  cfg.enc.mask_token = false;
  if (name == "base") {
    cfg.decoder_layers = 3;
    cfg.codebook_k = 8192;
    cfg.codebook_d = 64;
  } else {  // tiny
    cfg.decoder_layers = 2;
    cfg.codebook_k = 64;
    cfg.codebook_d = 32;
  }
  return cfg;
}

std::string TokenizerConfig::to_kv() const {
  std::ostringstream os;
  std::istringstream enc_kv(enc.to_kv());
  std::string line;
  while (std::getline(enc_kv, line))
    if (!line.empty()) os << "enc." << line << "\n";
  os << "decoder_layers=" << decoder_layers << "\ncodebook_k=" << codebook_k << "\ncodebook_d="
     << codebook_d << "\nema_gamma=" << ema_gamma << "\nema_codebook=" << (ema_codebook ? 1 : 0)
     << "\nrevive_age=" << revive_age << "\n";
  return os.str();
}

TokenizerConfig TokenizerConfig::from_kv(const std::string& text) {
  TokenizerConfig cfg;
  std::string enc_kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("enc.", 0) == 0) {
      enc_kv += line.substr(4) + "\n";
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "decoder_layers") cfg.decoder_layers = std::stoi(val);
    else if (key == "codebook_k") cfg.codebook_k = std::stoll(val);
    else if (key == "codebook_d") cfg.codebook_d = std::stoll(val);
    else if (key == "ema_gamma") cfg.ema_gamma = std::stod(val);
    else if (key == "ema_codebook") cfg.ema_codebook = val != "0";
    else if (key == "revive_age") cfg.revive_age = std::stoll(val);
    else throw FormatError("unknown tokenizer config key: " + key);
  }
  cfg.enc = ModelConfig::from_kv(enc_kv);
  return cfg;
}

template <typename S>
TokenizerModel<S> TokenizerModel<S>::init(const TokenizerConfig& cfg, uint64_t seed) {
  TokenizerModel<S> model;
  model.cfg = cfg;
  init_backbone_params(model.params, cfg.enc, seed);
  init_linear(model.params, "tok.down", cfg.enc.hidden_d, cfg.codebook_d, false, seed);
  init_linear(model.params, "dec.up", cfg.codebook_d, cfg.enc.hidden_d, false, seed);
  for (int i = 1; i <= cfg.decoder_layers; ++i)
    init_block_params(model.params, cfg.enc, "dec.blk" + std::to_string(i) + ".", seed);
  model.params.add("dec.final_ln.g", {cfg.enc.hidden_d}).fill(S(1));
  model.params.add("dec.final_ln.b", {cfg.enc.hidden_d});
  const int64_t B = cfg.spectrum_b();
  init_linear(model.params, "head.amp", cfg.enc.hidden_d, B, true, seed);
  init_linear(model.params, "head.phase", cfg.enc.hidden_d, B, true, seed);
  model.codebook = Codebook<S>::init(cfg.codebook_k, cfg.codebook_d, cfg.ema_gamma, seed);
  return model;
}

template <typename S>
std::vector<TensorRecord> TokenizerModel<S>::to_records() const {
  std::vector<TensorRecord> recs = records_from_store(params);
  recs.push_back(record_from("vq.vectors", codebook.vectors));
  recs.push_back(record_from("vq.ema_counts", codebook.ema_counts));
  recs.push_back(record_from("vq.ema_sums", codebook.ema_sums));
  recs.push_back(record_from_i64("vq.usage_age", codebook.usage_age));
  return recs;
}

template <typename S>
TokenizerModel<S> TokenizerModel<S>::from_checkpoint(const Checkpoint& ckpt) {
  TokenizerModel<S> model;
  model.cfg = TokenizerConfig::from_kv(ckpt.config_kv);
  model.params = store_from_records<S>(ckpt.records);
  // vq.* live in the codebook, not the parameter store
  for (const char* n : {"vq.vectors", "vq.ema_counts", "vq.ema_sums"}) model.params.t.erase(n);
  const TensorRecord* vec = ckpt.find("vq.vectors");
  const TensorRecord* cnt = ckpt.find("vq.ema_counts");
  const TensorRecord* sum = ckpt.find("vq.ema_sums");
  const TensorRecord* age = ckpt.find("vq.usage_age");
  if (!vec || !cnt || !sum || !age) throw FormatError("checkpoint lacks vq tensors");
  model.codebook.vectors = tensor_from<S>(*vec);
  model.codebook.ema_counts = tensor_from<S>(*cnt);
  model.codebook.ema_sums = tensor_from<S>(*sum);
  model.codebook.usage_age = i64_from(*age);
  model.codebook.gamma = model.cfg.ema_gamma;
  return model;
}

template <typename S>
void TokenizerModel<S>::save(const std::string& path) const {
  write_checkpoint(path, cfg.to_kv(), to_records());
}

template <typename S>
TokenizerModel<S> TokenizerModel<S>::load(const std::string& path) {
  return from_checkpoint(read_checkpoint(path));
}

template <typename S>
VarMap register_tokenizer_params(Tape<S>& tape, TokenizerModel<S>& model, bool trainable) {
  VarMap vars = register_params(tape, model.params,
                                [trainable](const std::string&) { return trainable; });
  vars.m["vq.vectors"] = tape.leaf_external(&model.codebook.vectors,
                                            trainable && !model.cfg.ema_codebook);
  return vars;
}

template <typename S>
TokenizerForwardVars tokenizer_forward(Tape<S>& tape, const VarMap& vars,
                                       TokenizerModel<S>& model, const PatchGrid& grid) {
  const TokenizerConfig& cfg = model.cfg;
  std::atomic_ref<int64_t>(model.encoder_forward_count).fetch_add(1, std::memory_order_relaxed);
  const Var h = encoder_forward(tape, vars, cfg.enc, grid);
  const Var p = tape.matmul(h, vars.at("tok.down.w"));
  TokenizerForwardVars fw;
  fw.reps_l2 = tape.l2norm_rows(p, 1e-12, &fw.clamped_rows);

  Var bridge;
  if (model.quantizer_identity) {
    fw.indices.assign(static_cast<size_t>(grid.n()), 0);
    fw.quant_l2 = fw.reps_l2;
    bridge = fw.reps_l2;
  } else {
    QuantizeResult q = quantize(tape.val(p), model.codebook);
    fw.indices = std::move(q.indices);
    fw.quant_l2 = tape.l2norm_rows(tape.gather_rows(vars.at("vq.vectors"), fw.indices), 1e-12);
    // Straight-through: forward value is the code, gradient flows to the reps.
    bridge = tape.add(tape.detach(tape.sub(fw.quant_l2, fw.reps_l2)), fw.reps_l2);
  }

  Var x = tape.matmul(bridge, vars.at("dec.up.w"));
  for (int i = 1; i <= cfg.decoder_layers; ++i)
    x = transformer_block(tape, vars, cfg.enc, x, "dec.blk" + std::to_string(i) + ".");
  x = tape.layer_norm(x, vars.at("dec.final_ln.g"), vars.at("dec.final_ln.b"), cfg.enc.ln_eps);
  fw.amp = tape.add_rowvec(tape.matmul(x, vars.at("head.amp.w")), vars.at("head.amp.b"));
  fw.phase = tape.add_rowvec(tape.matmul(x, vars.at("head.phase.w")), vars.at("head.phase.b"));
  return fw;
}

template <typename S>
TokenizedSample<S> tokenize(TokenizerModel<S>& model, const PatchGrid& grid) {
  Tape<S> tape;
  const VarMap vars = register_params_frozen(tape, model.params);
  std::atomic_ref<int64_t>(model.encoder_forward_count).fetch_add(1, std::memory_order_relaxed);
  const Var h = encoder_forward(tape, vars, model.cfg.enc, grid);
  const Var p = tape.matmul(h, vars.at("tok.down.w"));
  TokenizedSample<S> out;
  out.encoder_reps = tape.val(p);
  QuantizeResult q = quantize(out.encoder_reps, model.codebook);
  out.indices = std::move(q.indices);
  out.clamped_rows = std::move(q.clamped_rows);
  const int64_t D = model.cfg.codebook_d;
  out.quantized = Tensor<S>({grid.n(), D});
  for (int64_t i = 0; i < grid.n(); ++i)
    for (int64_t j = 0; j < D; ++j)
      out.quantized.at(i, j) = model.codebook.vectors.at(out.indices[static_cast<size_t>(i)], j);
  return out;
}

template <typename S>
Var tokenizer_loss(Tape<S>& tape, const TokenizerForwardVars& fw, const Tensor<S>& amp_target,
                   const Tensor<S>& phase_target, bool ema_codebook, double grad_weight,
                   TokenizerLossParts* parts) {
  const Var amp_t = tape.leaf(amp_target, false);
  const Var phase_t = tape.leaf(phase_target, false);
  const Var amp_term = tape.sum_sq_diff(fw.amp, amp_t);
  const Var phase_term = tape.sum_sq_diff(fw.phase, phase_t);
  // Pull term trains the codebook; under EMA it is value-only.
  const Var pull = ema_codebook
                       ? tape.sum_sq_diff(tape.detach(fw.reps_l2), tape.detach(fw.quant_l2))
                       : tape.sum_sq_diff(tape.detach(fw.reps_l2), fw.quant_l2);
  const Var commit = tape.sum_sq_diff(fw.reps_l2, tape.detach(fw.quant_l2));
  Var total = tape.add(tape.add(amp_term, phase_term), tape.add(pull, commit));
  if (parts) {
    parts->amp_mse = static_cast<double>(tape.val(amp_term).at(0));
    parts->phase_mse = static_cast<double>(tape.val(phase_term).at(0));
    parts->codebook_pull = static_cast<double>(tape.val(pull).at(0));
    parts->commitment = static_cast<double>(tape.val(commit).at(0));
    parts->total = static_cast<double>(tape.val(total).at(0));
  }
  if (grad_weight != 1.0) total = tape.scale(total, grad_weight);
  return total;
}

// ---------------------------------------------------------------------------
// training

namespace {

template <typename S>
void accumulate_grads(Tape<S>& tape, const VarMap& vars, GradMap<S>& out) {
  for (const auto& [name, var] : vars.m) {
    if (!tape.needs_grad(var) || !tape.grad_ready(var)) continue;
    const Tensor<S>& g = tape.gbuf(var);
    auto it = out.find(name);
    if (it == out.end()) {
      out.emplace(name, g);
    } else {
      Tensor<S>& acc = it->second;
      for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += g.data[i];
    }
  }
}

}  // namespace

template <typename S>
std::vector<TokenizerEpochStats> train_tokenizer(TokenizerModel<S>& model,
                                                 const std::vector<const PatchGrid*>& samples,
                                                 const TokenizerTrainOptions& opts) {
  if (samples.empty()) throw DataError("train_tokenizer: empty sample list");
  // Cache spectrum targets (deterministic per sample).
  std::vector<Tensor<S>> amp_targets(samples.size()), phase_targets(samples.size());
  parallel_for(static_cast<int64_t>(samples.size()), opts.threads, [&](int64_t i) {
    const SpectrumTarget t = build_target(*samples[static_cast<size_t>(i)]);
    amp_targets[static_cast<size_t>(i)] = t.amplitude.template cast<S>();
    phase_targets[static_cast<size_t>(i)] = t.phase.template cast<S>();
  });

  const int64_t steps_per_epoch =
      (static_cast<int64_t>(samples.size()) + opts.batch_size - 1) / opts.batch_size;
  const int64_t total_steps = steps_per_epoch * opts.epochs;
  const int64_t warmup_steps = steps_per_epoch * opts.warmup_epochs;

  AdamW<S> opt, opt_vq;
  AdamWConfig ocfg;
  ocfg.beta1 = opts.beta1;
  ocfg.beta2 = opts.beta2;
  ocfg.weight_decay = opts.weight_decay;

  CsvWriter csv;
  if (!opts.csv_path.empty())
    csv.open(opts.csv_path, opts.csv_header, "epoch,L_T,amp_mse,phase_mse,commit,perplexity");

  std::vector<TokenizerEpochStats> history;
  int64_t step = 0;
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    const auto batches = plan_batches(samples, opts.batch_size,
                                      derive_seed(opts.seed, "tok-epoch", static_cast<uint64_t>(epoch)));
    TokenizerEpochStats es;
    std::vector<int64_t> hist(static_cast<size_t>(model.codebook.K()), 0);
    int64_t n_seen = 0;

    for (const auto& batch : batches) {
      ++step;
      ocfg.lr = cosine_lr(step, total_steps, warmup_steps, opts.peak_lr, opts.floor_lr);

      int64_t batch_patches = 0;
      for (const int si : batch) batch_patches += samples[static_cast<size_t>(si)]->n();
      const double grad_weight = 1.0 / static_cast<double>(batch_patches);

      const int n_threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(batch.size())));
      std::vector<GradMap<S>> partial(static_cast<size_t>(n_threads));
      std::vector<TokenizerLossParts> parts(batch.size());
      std::vector<std::vector<int>> batch_indices(batch.size());
      std::vector<Tensor<S>> batch_reps(batch.size());
      std::vector<std::thread> workers;
      for (int w = 0; w < n_threads; ++w) {
        const size_t lo = batch.size() * static_cast<size_t>(w) / static_cast<size_t>(n_threads);
        const size_t hi = batch.size() * static_cast<size_t>(w + 1) / static_cast<size_t>(n_threads);
        auto task = [&, lo, hi, w] {
          for (size_t b = lo; b < hi; ++b) {
            const int si = batch[b];
            Tape<S> tape;
            VarMap vars = register_tokenizer_params(tape, model, true);
            TokenizerForwardVars fw =
                tokenizer_forward(tape, vars, model, *samples[static_cast<size_t>(si)]);
            const Var loss =
                tokenizer_loss(tape, fw, amp_targets[static_cast<size_t>(si)],
                               phase_targets[static_cast<size_t>(si)], model.cfg.ema_codebook,
                               grad_weight, &parts[b]);
            tape.backward(loss);
            accumulate_grads(tape, vars, partial[static_cast<size_t>(w)]);
            batch_indices[b] = fw.indices;
            batch_reps[b] = tape.val(fw.reps_l2);
          }
        };
        if (n_threads == 1) task();
        else workers.emplace_back(task);
      }
      for (auto& t : workers) t.join();

      GradMap<S> grads = std::move(partial[0]);
      for (int w = 1; w < n_threads; ++w)
        for (auto& [name, g] : partial[static_cast<size_t>(w)]) {
          auto it = grads.find(name);
          if (it == grads.end()) grads.emplace(name, std::move(g));
          else
            for (size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
        }
      if (opts.clip > 0) clip_global_norm(grads, opts.clip);

      // Codebook learning: either EMA maintenance or a gradient step.
      if (model.cfg.ema_codebook) {
        int64_t total_reps = 0;
        for (const auto& r : batch_reps) total_reps += r.dim(0);
        Tensor<S> reps({total_reps, model.cfg.codebook_d});
        std::vector<int> idx;
        idx.reserve(static_cast<size_t>(total_reps));
        int64_t row = 0;
        for (size_t b = 0; b < batch.size(); ++b) {
          const Tensor<S>& r = batch_reps[b];
          std::copy(r.data.begin(), r.data.end(),
                    reps.data.begin() + row * model.cfg.codebook_d);
          row += r.dim(0);
          idx.insert(idx.end(), batch_indices[b].begin(), batch_indices[b].end());
        }
        ema_update(model.codebook, idx, reps);
        Rng revive_rng(derive_seed(opts.seed, "revive", static_cast<uint64_t>(step)));
        revive_dead_codes(model.codebook, reps, model.cfg.revive_age, revive_rng);
      } else {
        auto it = grads.find("vq.vectors");
        if (it != grads.end()) {
          ParamStore<S> vq_store;
          vq_store.t.emplace("vq.vectors", std::move(model.codebook.vectors));
          GradMap<S> vq_grads;
          vq_grads.emplace("vq.vectors", std::move(it->second));
          grads.erase(it);
          AdamWConfig vq_cfg = ocfg;
          vq_cfg.weight_decay = 0.0;
          opt_vq.update(vq_store, vq_grads, vq_cfg);
          model.codebook.vectors = std::move(vq_store.t.at("vq.vectors"));
          l2_normalize_rows_inplace(model.codebook.vectors);
        }
      }
      opt.update(model.params, grads, ocfg);

      for (size_t b = 0; b < batch.size(); ++b) {
        es.lt += parts[b].total;
        es.amp_mse += parts[b].amp_mse;
        es.phase_mse += parts[b].phase_mse;
        es.commit += parts[b].commitment;
        es.pull += parts[b].codebook_pull;
        for (const int k : batch_indices[b]) ++hist[static_cast<size_t>(k)];
        ++n_seen;
      }
    }

    es.lt /= static_cast<double>(n_seen);
    es.amp_mse /= static_cast<double>(n_seen);
    es.phase_mse /= static_cast<double>(n_seen);
    es.commit /= static_cast<double>(n_seen);
    es.pull /= static_cast<double>(n_seen);
    es.perplexity = codebook_perplexity(hist);
    es.lr = ocfg.lr;
    history.push_back(es);
    if (csv.is_open())
      csv.row({std::to_string(epoch), fmt_g(es.lt), fmt_g(es.amp_mse), fmt_g(es.phase_mse),
               fmt_g(es.commit), fmt_g(es.perplexity)});
    if (opts.on_epoch) opts.on_epoch(epoch, es);
  }
  return history;
}

#define NC_TOK_INSTANTIATE(S)                                                                   \
  template struct TokenizerModel<S>;                                                           \
  template VarMap register_tokenizer_params(Tape<S>&, TokenizerModel<S>&, bool);               \
  template TokenizerForwardVars tokenizer_forward(Tape<S>&, const VarMap&, TokenizerModel<S>&, \
                                                  const PatchGrid&);                           \
  template TokenizedSample<S> tokenize(TokenizerModel<S>&, const PatchGrid&);                  \
  template Var tokenizer_loss(Tape<S>&, const TokenizerForwardVars&, const Tensor<S>&,         \
                              const Tensor<S>&, bool, double, TokenizerLossParts*);            \
  template std::vector<TokenizerEpochStats> train_tokenizer(                                   \
      TokenizerModel<S>&, const std::vector<const PatchGrid*>&, const TokenizerTrainOptions&);

NC_TOK_INSTANTIATE(float)
NC_TOK_INSTANTIATE(double)
#undef NC_TOK_INSTANTIATE

}  // namespace neurocodec
