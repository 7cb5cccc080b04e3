#include "neurocodec/pretrain.hpp"

#include <cmath>
#include <sstream>
#include <thread>

#include "neurocodec/csvlog.hpp"
#include "neurocodec/data.hpp"
#include "neurocodec/errors.hpp"
#include "neurocodec/optim.hpp"
#include "neurocodec/rng.hpp"
#include "neurocodec/threads.hpp"

namespace neurocodec {

int64_t MaskSpec::popcount() const {
  int64_t c = 0;
  for (const uint8_t b : bits) c += b;
  return c;
}

MaskSpec generate_mask(int64_t n, double r, uint64_t seed) {
  if (n < 1) throw MaskError("mask length must be >= 1");
  if (r <= 0.0 || r >= 1.0) throw MaskError("mask ratio must be in (0,1)");
  const int64_t k = std::max<int64_t>(1, static_cast<int64_t>(r * static_cast<double>(n)));
  MaskSpec m;
  m.bits.assign(static_cast<size_t>(n), 0);
  m.ratio = r;
  m.seed = seed;
  Rng rng(seed);
  for (const int i : rng.sample_without_replacement(static_cast<int>(n), static_cast<int>(k)))
    m.bits[static_cast<size_t>(i)] = 1;
  return m;
}

MaskSpec invert_mask(const MaskSpec& m) {
  MaskSpec inv = m;
  for (auto& b : inv.bits) b = b ? 0 : 1;
  inv.ratio = 1.0 - m.ratio;
  return inv;
}

template <typename S>
PretrainModel<S> PretrainModel<S>::init(const ModelConfig& cfg, int64_t codebook_k,
                                        uint64_t seed) {
  PretrainModel<S> model;
  model.cfg = cfg;
  model.cfg.mask_token = true;
  model.codebook_k = codebook_k;
  init_backbone_params(model.params, model.cfg, seed);
  init_linear(model.params, "mem.cls", cfg.hidden_d, codebook_k, true, seed);
  return model;
}

template <typename S>
std::string PretrainModel<S>::config_kv() const {
  std::ostringstream os;
  std::istringstream enc_kv(cfg.to_kv());
  std::string line;
  while (std::getline(enc_kv, line))
    if (!line.empty()) os << "enc." << line << "\n";
  os << "codebook_k=" << codebook_k << "\n";
  return os.str();
}

template <typename S>
void PretrainModel<S>::save(const std::string& path) const {
  write_checkpoint(path, config_kv(), records_from_store(params));
}

template <typename S>
PretrainModel<S> PretrainModel<S>::load(const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  PretrainModel<S> model;
  std::string enc_kv;
  std::istringstream is(ckpt.config_kv);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("enc.", 0) == 0) enc_kv += line.substr(4) + "\n";
    else if (line.rfind("codebook_k=", 0) == 0) model.codebook_k = std::stoll(line.substr(11));
  }
  model.cfg = ModelConfig::from_kv(enc_kv);
  model.params = store_from_records<S>(ckpt.records);
  return model;
}

template <typename S>
Var mem_loss(Tape<S>& tape, const VarMap& vars, const PretrainModel<S>& model,
             const PatchGrid& grid, const MaskSpec& mask, const std::vector<int>& targets,
             double weight, MemLossStats* stats) {
  if (mask.n() != grid.n()) throw MaskError("mask length does not match patch count");
  if (mask.popcount() == 0) throw MaskError("mask selects no positions; loss undefined");
  ForwardOpts opts;
  opts.corrupt = &mask.bits;
  const Var h = encoder_forward(tape, vars, model.cfg, grid, opts);
  const Var logits = tape.add_rowvec(tape.matmul(h, vars.at("mem.cls.w")), vars.at("mem.cls.b"));
  if (stats) {
    const auto pred = argmax_rows(tape.val(logits));
    for (int64_t i = 0; i < grid.n(); ++i) {
      if (!mask.bits[static_cast<size_t>(i)]) continue;
      ++stats->masked;
      if (pred[static_cast<size_t>(i)] == targets[static_cast<size_t>(i)]) ++stats->correct;
    }
  }
  const Var loss = tape.masked_ce(logits, targets, mask.bits, weight);
  if (stats) stats->loss_sum = static_cast<double>(tape.val(loss).at(0)) / weight;
  return loss;
}

namespace {

template <typename S>
void accumulate_grads(Tape<S>& tape, const VarMap& vars, GradMap<S>& out) {
  for (const auto& [name, var] : vars.m) {
    if (!tape.needs_grad(var) || !tape.grad_ready(var)) continue;
    const Tensor<S>& g = tape.gbuf(var);
    auto it = out.find(name);
    if (it == out.end()) out.emplace(name, g);
    else
      for (size_t i = 0; i < g.data.size(); ++i) it->second.data[i] += g.data[i];
  }
}

}  // namespace

template <typename S>
PretrainBatchResult pretrain_step(PretrainModel<S>& model, TokenizerModel<S>& tokenizer,
                                  const std::vector<const PatchGrid*>& batch, AdamW<S>& opt,
                                  double lr, const PretrainOptions& opts, uint64_t step_seed) {
  const size_t B = batch.size();
  // Targets and masks are fixed before any forward pass; both symmetric
  // passes share one tokenizer forward per sample.
  std::vector<std::vector<int>> targets(B);
  std::vector<MaskSpec> masks(B);
  parallel_for(static_cast<int64_t>(B), opts.threads, [&](int64_t b) {
    targets[static_cast<size_t>(b)] =
        tokenize(tokenizer, *batch[static_cast<size_t>(b)]).indices;
    masks[static_cast<size_t>(b)] = generate_mask(
        batch[static_cast<size_t>(b)]->n(), opts.mask_ratio,
        derive_seed(step_seed, "mask", static_cast<uint64_t>(b)));
  });

  int64_t masked_primary = 0, masked_sym = 0;
  for (size_t b = 0; b < B; ++b) {
    masked_primary += masks[b].popcount();
    if (opts.symmetric) masked_sym += batch[b]->n() - masks[b].popcount();
  }
  const double w_primary = opts.average_masked ? 1.0 / static_cast<double>(masked_primary) : 1.0;
  const double w_sym =
      opts.symmetric && masked_sym > 0 && opts.average_masked
          ? 1.0 / static_cast<double>(masked_sym)
          : 1.0;

  const int n_threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(B)));
  std::vector<GradMap<S>> partial(static_cast<size_t>(n_threads));
  std::vector<MemLossStats> stats_p(B), stats_s(B);
  std::vector<std::thread> workers;
  for (int w = 0; w < n_threads; ++w) {
    const size_t lo = B * static_cast<size_t>(w) / static_cast<size_t>(n_threads);
    const size_t hi = B * static_cast<size_t>(w + 1) / static_cast<size_t>(n_threads);
    auto task = [&, lo, hi, w] {
      for (size_t b = lo; b < hi; ++b) {
        {
          Tape<S> tape;
          VarMap vars = register_params(tape, model.params,
                                        [](const std::string&) { return true; });
          const Var loss = mem_loss(tape, vars, model, *batch[b], masks[b], targets[b], w_primary,
                                    &stats_p[b]);
          tape.backward(loss);
          accumulate_grads(tape, vars, partial[static_cast<size_t>(w)]);
        }
        if (opts.symmetric) {
          Tape<S> tape;
          VarMap vars = register_params(tape, model.params,
                                        [](const std::string&) { return true; });
          const MaskSpec inv = invert_mask(masks[b]);
          const Var loss =
              mem_loss(tape, vars, model, *batch[b], inv, targets[b], w_sym, &stats_s[b]);
          tape.backward(loss);
          accumulate_grads(tape, vars, partial[static_cast<size_t>(w)]);
        }
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

  AdamWConfig ocfg;
  ocfg.lr = lr;
  ocfg.beta1 = opts.beta1;
  ocfg.beta2 = opts.beta2;
  ocfg.weight_decay = opts.weight_decay;
  opt.update(model.params, grads, ocfg);

  PretrainBatchResult res;
  res.lr = lr;
  double sum_p = 0, sum_s = 0;
  int64_t corr = 0, masked = 0;
  for (size_t b = 0; b < B; ++b) {
    sum_p += stats_p[b].loss_sum;
    corr += stats_p[b].correct;
    masked += stats_p[b].masked;
    if (opts.symmetric) {
      sum_s += stats_s[b].loss_sum;
      corr += stats_s[b].correct;
      masked += stats_s[b].masked;
    }
  }
  res.loss = opts.average_masked ? sum_p / static_cast<double>(masked_primary) : sum_p;
  res.loss_sym = opts.symmetric
                     ? (opts.average_masked ? sum_s / static_cast<double>(masked_sym) : sum_s)
                     : 0.0;
  res.mem_accuracy = masked > 0 ? static_cast<double>(corr) / static_cast<double>(masked) : 0.0;
  return res;
}

template <typename S>
double evaluate_mem_accuracy(PretrainModel<S>& model, TokenizerModel<S>& tokenizer,
                             const std::vector<const PatchGrid*>& samples,
                             const PretrainOptions& opts) {
  std::vector<int64_t> correct(samples.size(), 0), masked(samples.size(), 0);
  parallel_for(static_cast<int64_t>(samples.size()), opts.threads, [&](int64_t i) {
    const PatchGrid& grid = *samples[static_cast<size_t>(i)];
    const auto targets = tokenize(tokenizer, grid).indices;
    const MaskSpec mask = generate_mask(grid.n(), opts.mask_ratio,
                                        derive_seed(opts.seed, "eval-mask", static_cast<uint64_t>(i)));
    Tape<S> tape;
    VarMap vars = register_params_frozen(tape, model.params);
    MemLossStats st;
    mem_loss(tape, vars, model, grid, mask, targets, 1.0, &st);
    correct[static_cast<size_t>(i)] = st.correct;
    masked[static_cast<size_t>(i)] = st.masked;
  });
  int64_t c = 0, m = 0;
  for (size_t i = 0; i < samples.size(); ++i) {
    c += correct[i];
    m += masked[i];
  }
  return m > 0 ? static_cast<double>(c) / static_cast<double>(m) : 0.0;
}

template <typename S>
std::vector<PretrainEpochStats> pretrain(PretrainModel<S>& model, TokenizerModel<S>& tokenizer,
                                         const std::vector<const PatchGrid*>& train,
                                         const std::vector<const PatchGrid*>& held_out,
                                         const PretrainOptions& opts) {
  if (train.empty()) throw DataError("pretrain: empty training set");
  const int64_t steps_per_epoch =
      (static_cast<int64_t>(train.size()) + opts.batch_size - 1) / opts.batch_size;
  const int64_t total_steps = steps_per_epoch * opts.epochs;
  const int64_t warmup_steps = steps_per_epoch * opts.warmup_epochs;

  AdamW<S> opt;
  CsvWriter csv;
  if (!opts.csv_path.empty())
    csv.open(opts.csv_path, opts.csv_header, "epoch,loss,loss_sym,mem_accuracy,lr");

  std::vector<PretrainEpochStats> history;
  int64_t step = 0;
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    const auto batches = plan_batches(train, opts.batch_size,
                                      derive_seed(opts.seed, "pre-epoch", static_cast<uint64_t>(epoch)));
    PretrainEpochStats es;
    int64_t n_batches = 0;
    for (const auto& batch_idx : batches) {
      ++step;
      const double lr = cosine_lr(step, total_steps, warmup_steps, opts.peak_lr, opts.floor_lr);
      std::vector<const PatchGrid*> batch;
      batch.reserve(batch_idx.size());
      for (const int i : batch_idx) batch.push_back(train[static_cast<size_t>(i)]);
      const PretrainBatchResult r = pretrain_step(model, tokenizer, batch, opt, lr, opts,
                                                  derive_seed(opts.seed, "step", static_cast<uint64_t>(step)));
      es.loss += r.loss;
      es.loss_sym += r.loss_sym;
      es.mem_accuracy += r.mem_accuracy;
      es.lr = lr;
      ++n_batches;
    }
    es.loss /= static_cast<double>(n_batches);
    es.loss_sym /= static_cast<double>(n_batches);
    es.mem_accuracy /= static_cast<double>(n_batches);
    if (!held_out.empty())
      es.held_out_accuracy = evaluate_mem_accuracy(model, tokenizer, held_out, opts);
    history.push_back(es);
    if (csv.is_open())
      csv.row({std::to_string(epoch), fmt_g(es.loss), fmt_g(es.loss_sym), fmt_g(es.mem_accuracy),
               fmt_g(es.lr)});
    if (opts.on_epoch) {
      PretrainBatchResult mean;
      mean.loss = es.loss;
      mean.loss_sym = es.loss_sym;
      mean.mem_accuracy = es.mem_accuracy;
      mean.lr = es.lr;
      opts.on_epoch(epoch, mean);
    }
  }
  return history;
}

#define NC_PRE_INSTANTIATE(S)                                                                   \
  template struct PretrainModel<S>;                                                            \
  template Var mem_loss(Tape<S>&, const VarMap&, const PretrainModel<S>&, const PatchGrid&,    \
                        const MaskSpec&, const std::vector<int>&, double, MemLossStats*);      \
  template PretrainBatchResult pretrain_step(PretrainModel<S>&, TokenizerModel<S>&,            \
                                             const std::vector<const PatchGrid*>&, AdamW<S>&,  \
                                             double, const PretrainOptions&, uint64_t);        \
  template double evaluate_mem_accuracy(PretrainModel<S>&, TokenizerModel<S>&,                 \
                                        const std::vector<const PatchGrid*>&,                  \
                                        const PretrainOptions&);                               \
  template std::vector<PretrainEpochStats> pretrain(PretrainModel<S>&, TokenizerModel<S>&,     \
                                                    const std::vector<const PatchGrid*>&,      \
                                                    const std::vector<const PatchGrid*>&,      \
                                                    const PretrainOptions&);

NC_PRE_INSTANTIATE(float)
NC_PRE_INSTANTIATE(double)
#undef NC_PRE_INSTANTIATE

}  // namespace neurocodec
