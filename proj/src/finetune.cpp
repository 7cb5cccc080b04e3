#include "neurocodec/finetune.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "neurocodec/csvlog.hpp"
#include "neurocodec/data.hpp"
#include "neurocodec/errors.hpp"
#include "neurocodec/rng.hpp"
#include "neurocodec/threads.hpp"

namespace neurocodec {

int TaskSpec::head_dim() const {
  switch (kind) {
    case TaskKind::binary: return 1;
    case TaskKind::multiclass: return classes;
    case TaskKind::regression: return classes;
  }
  return classes;
}

void TaskSpec::validate() const {
  if (classes < 1) throw ConfigError("task: classes/targets must be >= 1");
  switch (kind) {
    case TaskKind::binary:
      if (loss != LossKind::bce) throw ConfigError("binary task requires bce loss");
      if (monitor != "auroc") throw ConfigError("binary task monitors auroc");
      break;
    case TaskKind::multiclass:
      if (loss != LossKind::ce) throw ConfigError("multiclass task requires ce loss");
      if (monitor != "kappa") throw ConfigError("multiclass task monitors kappa");
      if (classes < 2) throw ConfigError("multiclass needs >= 2 classes");
      break;
    case TaskKind::regression:
      if (loss != LossKind::mse) throw ConfigError("regression task requires mse loss");
      if (monitor != "r2") throw ConfigError("regression task monitors r2");
      break;
  }
}

std::string TaskSpec::to_kv() const {
  std::ostringstream os;
  os << "kind=" << (kind == TaskKind::binary ? "binary"
                    : kind == TaskKind::multiclass ? "multiclass" : "regression")
     << "\nclasses=" << classes << "\nloss="
     << (loss == LossKind::bce ? "bce" : loss == LossKind::ce ? "ce" : "mse")
     << "\nlabel_smoothing=" << label_smoothing << "\nmonitor=" << monitor
     << "\nangle_norm=" << (angle_norm ? 1 : 0) << "\n";
  return os.str();
}

TaskSpec TaskSpec::from_kv(const std::string& text) {
  TaskSpec t;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("task spec line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "kind") {
      if (val == "binary") t.kind = TaskKind::binary;
      else if (val == "multiclass") t.kind = TaskKind::multiclass;
      else if (val == "regression") t.kind = TaskKind::regression;
      else throw ConfigError("unknown task kind: " + val);
    } else if (key == "classes") t.classes = std::stoi(val);
    else if (key == "loss") {
      if (val == "bce") t.loss = LossKind::bce;
      else if (val == "ce") t.loss = LossKind::ce;
      else if (val == "mse") t.loss = LossKind::mse;
      else throw ConfigError("unknown loss: " + val);
    } else if (key == "label_smoothing") t.label_smoothing = std::stod(val);
    else if (key == "monitor") t.monitor = val;
    else if (key == "angle_norm") t.angle_norm = val != "0";
    else if (key == "freeze") { /* parsed by the CLI into FinetuneOptions */ }
    else throw ConfigError("unknown task spec key: " + key);
  }
  t.validate();
  return t;
}

TaskSpec TaskSpec::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open task spec: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return from_kv(ss.str());
}

std::function<bool(const std::string&)> FreezeSpec::predicate(int layers) const {
  const Mode m = mode;
  const int keep_from = layers - k + 1;  // blocks >= keep_from stay trainable
  return [m, keep_from](const std::string& name) {
    if (name.rfind("task.head", 0) == 0) return true;
    if (m == Mode::linear_probe) return false;
    if (m == Mode::all) return true;
    if (name.rfind("final_ln", 0) == 0) return true;
    if (name.rfind("blk", 0) == 0) {
      const int i = std::stoi(name.substr(3, name.find('.') - 3));
      return i >= keep_from;
    }
    return false;
  };
}

FreezeSpec FreezeSpec::parse(const std::string& text) {
  FreezeSpec f;
  if (text == "all") {
    f.mode = Mode::all;
  } else if (text == "linear-probe") {
    f.mode = Mode::linear_probe;
  } else if (text.rfind("last-", 0) == 0) {
    f.mode = Mode::last_k;
    f.k = std::stoi(text.substr(5));
    if (f.k < 1) throw ConfigError("freeze last-k needs k >= 1");
  } else {
    throw ConfigError("unknown freeze spec: " + text + " (all | last-<k> | linear-probe)");
  }
  return f;
}

std::string FreezeSpec::str() const {
  switch (mode) {
    case Mode::all: return "all";
    case Mode::linear_probe: return "linear-probe";
    case Mode::last_k: return "last-" + std::to_string(k);
  }
  return "all";
}

double layer_lr_multiplier(const std::string& name, int layers, double decay) {
  if (decay == 1.0) return 1.0;
  int exponent;
  if (name.rfind("task.head", 0) == 0 || name.rfind("final_ln", 0) == 0) {
    exponent = 0;
  } else if (name.rfind("blk", 0) == 0) {
    const int i = std::stoi(name.substr(3, name.find('.') - 3));
    exponent = layers - i + 1;
  } else {
    exponent = layers + 1;  // temporal encoder, embeddings, mask token
  }
  return std::pow(decay, exponent);
}

template <typename S>
FinetuneModel<S> FinetuneModel<S>::from_pretrained(const PretrainModel<S>& pre,
                                                   const TaskSpec& task, uint64_t seed) {
  task.validate();
  FinetuneModel<S> model;
  model.cfg = pre.cfg;
  model.task = task;
  model.params = pre.params;
  model.params.t.erase("mem.cls.w");
  model.params.t.erase("mem.cls.b");
  init_linear(model.params, "task.head", model.cfg.hidden_d, task.head_dim(), true, seed);
  return model;
}

template <typename S>
FinetuneModel<S> FinetuneModel<S>::fresh(const ModelConfig& cfg, const TaskSpec& task,
                                         uint64_t seed) {
  task.validate();
  FinetuneModel<S> model;
  model.cfg = cfg;
  model.task = task;
  init_backbone_params(model.params, cfg, seed);
  init_linear(model.params, "task.head", cfg.hidden_d, task.head_dim(), true, seed);
  return model;
}

template <typename S>
std::string FinetuneModel<S>::config_kv() const {
  std::ostringstream os;
  std::istringstream enc_kv(cfg.to_kv());
  std::string line;
  while (std::getline(enc_kv, line))
    if (!line.empty()) os << "enc." << line << "\n";
  std::istringstream task_kv(task.to_kv());
  while (std::getline(task_kv, line))
    if (!line.empty()) os << "task." << line << "\n";
  return os.str();
}

template <typename S>
void FinetuneModel<S>::save(const std::string& path) const {
  write_checkpoint(path, config_kv(), records_from_store(params));
}

template <typename S>
FinetuneModel<S> FinetuneModel<S>::load(const std::string& path) {
  const Checkpoint ckpt = read_checkpoint(path);
  FinetuneModel<S> model;
  std::string enc_kv, task_kv;
  std::istringstream is(ckpt.config_kv);
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("enc.", 0) == 0) enc_kv += line.substr(4) + "\n";
    else if (line.rfind("task.", 0) == 0) task_kv += line.substr(5) + "\n";
  }
  model.cfg = ModelConfig::from_kv(enc_kv);
  model.task = TaskSpec::from_kv(task_kv);
  model.params = store_from_records<S>(ckpt.records);
  return model;
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

// Per-block stochastic-depth scales; rate ramps linearly with depth.
std::vector<std::array<double, 2>> drop_path_scales(int layers, double rate, Rng& rng) {
  std::vector<std::array<double, 2>> out(static_cast<size_t>(layers), {1.0, 1.0});
  if (rate <= 0) return out;
  for (int i = 0; i < layers; ++i) {
    const double p = layers > 1 ? rate * static_cast<double>(i) / static_cast<double>(layers - 1)
                                : rate;
    for (int br = 0; br < 2; ++br) {
      const bool keep = rng.next_double() >= p;
      out[static_cast<size_t>(i)][static_cast<size_t>(br)] = keep ? 1.0 / (1.0 - p) : 0.0;
    }
  }
  return out;
}

template <typename S>
Var task_forward(Tape<S>& tape, const VarMap& vars, const FinetuneModel<S>& model,
                 const PatchGrid& grid, const ForwardOpts& fopts) {
  const Var h = encoder_forward(tape, vars, model.cfg, grid, fopts);
  return pool_head(tape, vars, h, "task.head");
}

template <typename S>
Var task_loss(Tape<S>& tape, const FinetuneModel<S>& model, Var logits, const LabeledGrid& item,
              double weight) {
  switch (model.task.kind) {
    case TaskKind::binary:
      return tape.bce_logits(logits, {static_cast<float>(item.label)}, weight);
    case TaskKind::multiclass:
      return tape.ce_smoothed(logits, {item.label}, model.task.label_smoothing, weight);
    case TaskKind::regression: {
      Tensor<S> target({1, static_cast<int64_t>(item.targets.size())});
      const double scale = model.task.angle_norm ? 1.0 / 90.0 : 1.0;
      for (size_t j = 0; j < item.targets.size(); ++j)
        target.at(0, static_cast<int64_t>(j)) = static_cast<S>(item.targets[j] * scale);
      const Var t = tape.leaf(std::move(target), false);
      // mean over targets, then batch weight
      return tape.scale(tape.sum_sq_diff(logits, t),
                        weight / static_cast<double>(item.targets.size()));
    }
  }
  throw ConfigError("unreachable task kind");
}

}  // namespace

template <typename S>
double finetune_step(FinetuneModel<S>& model, const std::vector<LabeledGrid>& batch, AdamW<S>& opt,
                     double lr, const FinetuneOptions& opts, uint64_t step_seed) {
  const size_t B = batch.size();
  const double weight = 1.0 / static_cast<double>(B);
  auto trainable = opts.freeze.predicate(model.cfg.layers);
  if (opts.zero_spatial_embedding) {
    auto inner = trainable;
    trainable = [inner](const std::string& name) {
      return name != "emb.se" && inner(name);
    };
  }

  const int n_threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(B)));
  std::vector<GradMap<S>> partial(static_cast<size_t>(n_threads));
  std::vector<double> losses(B, 0.0);
  std::vector<std::thread> workers;
  for (int w = 0; w < n_threads; ++w) {
    const size_t lo = B * static_cast<size_t>(w) / static_cast<size_t>(n_threads);
    const size_t hi = B * static_cast<size_t>(w + 1) / static_cast<size_t>(n_threads);
    auto task = [&, lo, hi, w] {
      for (size_t b = lo; b < hi; ++b) {
        Tape<S> tape;
        VarMap vars = register_params(tape, model.params, trainable);
        Rng dp_rng(derive_seed(step_seed, "droppath", static_cast<uint64_t>(b)));
        const auto scales = drop_path_scales(model.cfg.layers, opts.drop_path, dp_rng);
        ForwardOpts fopts;
        fopts.branch_scale = &scales;
        const Var logits = task_forward(tape, vars, model, *batch[b].grid, fopts);
        const Var loss = task_loss(tape, model, logits, batch[b], weight);
        losses[b] = static_cast<double>(tape.val(loss).at(0)) / weight;
        tape.backward(loss);
        accumulate_grads(tape, vars, partial[static_cast<size_t>(w)]);
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
  ocfg.weight_decay =
      opts.freeze.mode == FreezeSpec::Mode::linear_probe ? 0.0 : opts.weight_decay;
  const int layers = model.cfg.layers;
  const double decay = opts.layer_decay;
  const std::function<double(const std::string&)> mult = [layers, decay](const std::string& n) {
    return layer_lr_multiplier(n, layers, decay);
  };
  opt.update(model.params, grads, ocfg, &mult);

  double mean = 0;
  for (const double l : losses) mean += l;
  return mean / static_cast<double>(B);
}

template <typename S>
EvalOutputs evaluate_model(const FinetuneModel<S>& model, const std::vector<LabeledGrid>& samples,
                           int threads) {
  EvalOutputs out;
  const size_t n = samples.size();
  std::vector<int> preds(n, 0);
  std::vector<double> scores(n, 0.0);
  std::vector<std::vector<double>> reg_pred(n);
  parallel_for(static_cast<int64_t>(n), threads, [&](int64_t i) {
    Tape<S> tape;
    const VarMap vars = register_params_frozen(tape, model.params);
    const Var logits = task_forward(tape, vars, model, *samples[static_cast<size_t>(i)].grid, {});
    const Tensor<S>& lv = tape.val(logits);
    switch (model.task.kind) {
      case TaskKind::binary: {
        const double z = static_cast<double>(lv.at(0));
        scores[static_cast<size_t>(i)] = 1.0 / (1.0 + std::exp(-z));
        preds[static_cast<size_t>(i)] = z > 0 ? 1 : 0;
        break;
      }
      case TaskKind::multiclass:
        preds[static_cast<size_t>(i)] = argmax_rows(lv)[0];
        break;
      case TaskKind::regression: {
        std::vector<double> p(static_cast<size_t>(lv.numel()));
        for (int64_t j = 0; j < lv.numel(); ++j) p[static_cast<size_t>(j)] =
            static_cast<double>(lv.at(j));
        reg_pred[static_cast<size_t>(i)] = std::move(p);
        break;
      }
    }
  });
  if (model.task.kind == TaskKind::regression) {
    const size_t T = samples.empty() ? 0 : samples[0].targets.size();
    const double scale = model.task.angle_norm ? 1.0 / 90.0 : 1.0;
    out.reg_true.assign(T, {});
    out.reg_pred.assign(T, {});
    for (size_t i = 0; i < n; ++i)
      for (size_t t = 0; t < T; ++t) {
        out.reg_true[t].push_back(samples[i].targets[t] * scale);
        out.reg_pred[t].push_back(reg_pred[i][t]);
      }
  } else {
    for (size_t i = 0; i < n; ++i) {
      out.y_true.push_back(samples[i].label);
      out.y_pred.push_back(preds[i]);
    }
    if (model.task.kind == TaskKind::binary) out.scores = std::move(scores);
  }
  return out;
}

template <typename S>
double evaluate_monitor(const FinetuneModel<S>& model, const std::vector<LabeledGrid>& samples,
                        int threads) {
  const EvalOutputs out = evaluate_model(model, samples, threads);
  const std::string& m = model.task.monitor;
  if (m == "auroc") return auroc(out.y_true, out.scores);
  if (m == "kappa") return cohen_kappa(out.y_true, out.y_pred);
  if (m == "balanced_accuracy") return balanced_accuracy(out.y_true, out.y_pred);
  if (m == "r2") {
    const RegressionMetrics rm = regression_metrics_multi(out.reg_true, out.reg_pred);
    if (!rm.r2) throw MetricUndefined("monitor r2 undefined");
    return *rm.r2;
  }
  throw ConfigError("unknown monitor: " + m);
}

template <typename S>
FinetuneResult finetune(FinetuneModel<S>& model, const std::vector<LabeledGrid>& train,
                        const std::vector<LabeledGrid>& valid, const FinetuneOptions& opts) {
  if (train.empty()) throw DataError("finetune: empty training set");
  if (opts.zero_spatial_embedding) model.params.at("emb.se").fill(S(0));

  const int64_t steps_per_epoch =
      (static_cast<int64_t>(train.size()) + opts.batch_size - 1) / opts.batch_size;
  int64_t total_steps = steps_per_epoch * opts.epochs;
  if (opts.max_steps > 0) total_steps = std::min<int64_t>(total_steps, opts.max_steps);
  const int64_t warmup_steps = steps_per_epoch * opts.warmup_epochs;

  CsvWriter csv;
  if (!opts.csv_path.empty())
    csv.open(opts.csv_path, opts.csv_header, "epoch,train_loss,monitor,lr");

  AdamW<S> opt;
  FinetuneResult res;
  res.epoch_monitor.push_back(valid.empty() ? 0.0 : evaluate_monitor(model, valid, opts.threads));
  res.best_epoch = 0;
  res.best_monitor = res.epoch_monitor[0];
  ParamStore<S> best_params = model.params;

  std::vector<const PatchGrid*> train_grids;
  train_grids.reserve(train.size());
  for (const auto& s : train) train_grids.push_back(s.grid);

  int64_t step = 0;
  bool out_of_steps = false;
  for (int epoch = 1; epoch <= opts.epochs && !out_of_steps; ++epoch) {
    const auto batches = plan_batches(train_grids, opts.batch_size,
                                      derive_seed(opts.seed, "ft-epoch", static_cast<uint64_t>(epoch)));
    double epoch_loss = 0;
    int64_t n_batches = 0;
    double lr = 0;
    for (const auto& batch_idx : batches) {
      if (opts.max_steps > 0 && step >= opts.max_steps) {
        out_of_steps = true;
        break;
      }
      ++step;
      lr = cosine_lr(step, total_steps, warmup_steps, opts.peak_lr, opts.floor_lr);
      std::vector<LabeledGrid> batch;
      batch.reserve(batch_idx.size());
      for (const int i : batch_idx) batch.push_back(train[static_cast<size_t>(i)]);
      epoch_loss += finetune_step(model, batch, opt, lr, opts,
                                  derive_seed(opts.seed, "ft-step", static_cast<uint64_t>(step)));
      ++n_batches;
    }
    if (n_batches == 0) break;
    epoch_loss /= static_cast<double>(n_batches);
    res.epoch_loss.push_back(epoch_loss);
    const double monitor =
        valid.empty() ? 0.0 : evaluate_monitor(model, valid, opts.threads);
    res.epoch_monitor.push_back(monitor);
    if (monitor > res.best_monitor) {
      res.best_monitor = monitor;
      res.best_epoch = epoch;
      best_params = model.params;
    }
    if (csv.is_open())
      csv.row({std::to_string(epoch), fmt_g(epoch_loss), fmt_g(monitor), fmt_g(lr)});
  }
  if (!valid.empty()) model.params = std::move(best_params);
  return res;
}

#define NC_FT_INSTANTIATE(S)                                                                     \
  template struct FinetuneModel<S>;                                                             \
  template double finetune_step(FinetuneModel<S>&, const std::vector<LabeledGrid>&, AdamW<S>&,  \
                                double, const FinetuneOptions&, uint64_t);                      \
  template EvalOutputs evaluate_model(const FinetuneModel<S>&, const std::vector<LabeledGrid>&, \
                                      int);                                                     \
  template double evaluate_monitor(const FinetuneModel<S>&, const std::vector<LabeledGrid>&,    \
                                   int);                                                        \
  template FinetuneResult finetune(FinetuneModel<S>&, const std::vector<LabeledGrid>&,          \
                                   const std::vector<LabeledGrid>&, const FinetuneOptions&);

NC_FT_INSTANTIATE(float)
NC_FT_INSTANTIATE(double)
#undef NC_FT_INSTANTIATE

}  // namespace neurocodec
