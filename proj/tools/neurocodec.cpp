// neurocodec: synthetic-EEG codec/pretraining pipelines behind one binary.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "neurocodec/channels.hpp"
#include "neurocodec/config.hpp"
#include "neurocodec/csvlog.hpp"
#include "neurocodec/data.hpp"
#include "neurocodec/errors.hpp"
#include "neurocodec/finetune.hpp"
#include "neurocodec/hashutil.hpp"
#include "neurocodec/pretrain.hpp"
#include "neurocodec/spectrum.hpp"
#include "neurocodec/tokenizer.hpp"

namespace nc = neurocodec;

namespace {

struct GlobalOpts {
  uint64_t seed = 42;
  int threads = 1;
  std::string precision = "f32";
};

const std::set<std::string> kDataKeys = {
    "data.dir",          "data.sample_t",   "data.stride",     "data.patch_w",
    "data.preprocess",   "data.band_lo",    "data.band_hi",    "data.notch_hz",
    "data.notch_halfwidth", "data.transition", "data.target_rate", "data.unit_volts",
    "data.split_train",  "data.split_valid", "data.split_test", "data.split_seed"};

const std::set<std::string> kModelKeys = {
    "model.preset", "model.hidden_d", "model.layers",           "model.heads",
    "model.mlp_d",  "model.tmax",     "model.layer_scale_init", "model.gn_groups"};

nc::DataConfig data_config_from(const nc::RunConfig& cfg) {
  nc::DataConfig d;
  d.sample_t = cfg.get_i64("data.sample_t", 800);
  d.stride_s = cfg.get_i64("data.stride", 800);
  d.patch_w = cfg.get_i64("data.patch_w", 200);
  d.run_preprocess = cfg.get_bool("data.preprocess", true);
  d.pre.band_lo_hz = cfg.get_double("data.band_lo", 0.1);
  d.pre.band_hi_hz = cfg.get_double("data.band_hi", 75.0);
  d.pre.notch_hz = cfg.get_double("data.notch_hz", 50.0);
  d.pre.notch_halfwidth_hz = cfg.get_double("data.notch_halfwidth", 1.0);
  d.pre.transition_hz = cfg.get_double("data.transition", 1.0);
  d.pre.target_rate_hz = cfg.get_double("data.target_rate", 200.0);
  d.pre.unit_volts = cfg.get_double("data.unit_volts", 1e-4);
  return d;
}

nc::ModelConfig model_config_from(const nc::RunConfig& cfg) {
  nc::ModelConfig m = nc::ModelConfig::preset(cfg.get_str("model.preset", "base"));
  m.hidden_d = cfg.get_int("model.hidden_d", m.hidden_d);
  m.layers = cfg.get_int("model.layers", m.layers);
  m.heads = cfg.get_int("model.heads", m.heads);
  m.mlp_d = cfg.get_int("model.mlp_d", m.mlp_d);
  m.tmax = cfg.get_int("model.tmax", m.tmax);
  m.layer_scale_init = cfg.get_double("model.layer_scale_init", m.layer_scale_init);
  m.gn_groups = cfg.get_int("model.gn_groups", m.gn_groups);
  m.registry_size = nc::registry_size();
  m.patch_w = static_cast<int>(cfg.get_i64("data.patch_w", 200));
  m.validate();
  return m;
}

std::vector<double> split_ratios_from(const nc::RunConfig& cfg) {
  return {cfg.get_double("data.split_train", 0.6), cfg.get_double("data.split_valid", 0.2),
          cfg.get_double("data.split_test", 0.2)};
}

std::vector<std::string> repro_header(const std::string& command, const nc::RunConfig& cfg,
                                      const GlobalOpts& g,
                                      const std::vector<std::pair<std::string, std::string>>&
                                          input_hashes) {
  std::vector<std::string> lines;
  lines.push_back("neurocodec " + command);
  lines.push_back("config_sha1=" + nc::blob_hash(cfg.raw_text));
  lines.push_back("seed=" + std::to_string(g.seed));
  lines.push_back("threads=" + std::to_string(g.threads));
  lines.push_back("precision=" + g.precision);
  for (const auto& [name, hash] : input_hashes) lines.push_back(name + "_sha1=" + hash);
  return lines;
}

nc::Corpus load_corpus(const nc::RunConfig& cfg) {
  const std::string dir = cfg.get_path("data.dir", "");
  if (dir.empty()) throw nc::ConfigError("data.dir is required");
  return nc::load_corpus_dir(dir, data_config_from(cfg));
}

std::vector<nc::LabeledGrid> labeled(const nc::Corpus& corpus, const std::vector<int>& idx) {
  std::vector<nc::LabeledGrid> out;
  out.reserve(idx.size());
  for (const int i : idx) {
    nc::LabeledGrid g;
    g.grid = &corpus.samples[static_cast<size_t>(i)].grid;
    g.label = corpus.samples[static_cast<size_t>(i)].label;
    out.push_back(g);
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& config_path, const std::string& out_dir, const GlobalOpts& g) {
  const auto cfg = nc::RunConfig::from_file(config_path);
  std::set<std::string> known = {"synth.classes",  "synth.recordings", "synth.rate",
                                 "synth.duration", "synth.noise_std",  "synth.pink_scale",
                                 "synth.channels", "synth.spatial",    "synth.bands"};
  cfg.check_known(known);
  nc::SynthConfig sc;
  sc.n_classes = cfg.get_int("synth.classes", 4);
  sc.n_recordings = cfg.get_int("synth.recordings", 1024);
  sc.rate_hz = cfg.get_double("synth.rate", 200.0);
  sc.duration_s = cfg.get_double("synth.duration", 8.0);
  sc.noise_std = cfg.get_double("synth.noise_std", 0.1);
  sc.pink_scale = cfg.get_double("synth.pink_scale", 0.3);
  sc.channel_options = cfg.get_int_list("synth.channels", {4, 6});
  sc.spatial_mode = cfg.get_bool("synth.spatial", false);
  if (cfg.has("synth.bands")) {
    sc.class_bands.clear();
    std::istringstream ss(cfg.get_str("synth.bands", ""));
    std::string part;
    while (std::getline(ss, part, ',')) {
      double lo, hi;
      if (std::sscanf(part.c_str(), "%lf:%lf", &lo, &hi) != 2)
        throw nc::ConfigError("bad synth.bands entry: " + part);
      sc.class_bands.emplace_back(lo, hi);
    }
  }
  sc.seed = g.seed;
  const auto recs = nc::synth_generate(sc);
  nc::write_corpus_dir(out_dir, recs);
  std::cout << "wrote " << recs.size() << " recordings to " << out_dir << "\n";
  return 0;
}

template <typename S>
int cmd_train_tokenizer(const nc::RunConfig& cfg, const GlobalOpts& g) {
  std::set<std::string> known = kDataKeys;
  known.insert(kModelKeys.begin(), kModelKeys.end());
  for (const char* k :
       {"tokenizer.decoder_layers", "tokenizer.codebook_k", "tokenizer.codebook_d",
        "tokenizer.ema_gamma", "tokenizer.ema", "tokenizer.revive_age", "tokenizer.epochs",
        "tokenizer.batch_size", "tokenizer.peak_lr", "tokenizer.floor_lr",
        "tokenizer.warmup_epochs", "tokenizer.beta1", "tokenizer.beta2",
        "tokenizer.weight_decay", "tokenizer.clip", "tokenizer.out_ckpt", "tokenizer.csv"})
    known.insert(k);
  cfg.check_known(known);

  nc::TokenizerConfig tc;
  tc.enc = model_config_from(cfg);
  tc.enc.mask_token = false;
  tc.decoder_layers = cfg.get_int("tokenizer.decoder_layers", 3);
  tc.codebook_k = cfg.get_i64("tokenizer.codebook_k", 8192);
  tc.codebook_d = cfg.get_i64("tokenizer.codebook_d", 64);
  tc.ema_gamma = cfg.get_double("tokenizer.ema_gamma", 0.99);
  tc.ema_codebook = cfg.get_bool("tokenizer.ema", true);
  tc.revive_age = cfg.get_i64("tokenizer.revive_age", 256);

  const nc::Corpus corpus = load_corpus(cfg);
  std::vector<const nc::PatchGrid*> grids;
  grids.reserve(corpus.samples.size());
  for (const auto& s : corpus.samples) grids.push_back(&s.grid);

  nc::TokenizerTrainOptions opts;
  // Appendix-table defaults for the published config; desk configs override.
  opts.epochs = cfg.get_int("tokenizer.epochs", 100);
  opts.batch_size = cfg.get_int("tokenizer.batch_size", 1024);
  opts.peak_lr = cfg.get_double("tokenizer.peak_lr", 5e-5);
  opts.floor_lr = cfg.get_double("tokenizer.floor_lr", 1e-5);
  opts.warmup_epochs = cfg.get_int("tokenizer.warmup_epochs", 10);
  opts.beta1 = cfg.get_double("tokenizer.beta1", 0.9);
  opts.beta2 = cfg.get_double("tokenizer.beta2", 0.99);
  opts.weight_decay = cfg.get_double("tokenizer.weight_decay", 1e-4);
  opts.clip = cfg.get_double("tokenizer.clip", 0.0);
  opts.seed = g.seed;
  opts.threads = g.threads;
  opts.csv_path = cfg.get_path("tokenizer.csv", "tokenizer_train.csv");
  opts.csv_header = repro_header("train-tokenizer", cfg, g,
                                 {{"data", nc::dir_content_hash(cfg.get_path("data.dir", ""))}});
  opts.on_epoch = [](int epoch, const nc::TokenizerEpochStats& es) {
    std::printf("epoch %3d  L_T %.4f  amp %.4f  phase %.4f  commit %.4f  perplexity %.2f\n",
                epoch, es.lt, es.amp_mse, es.phase_mse, es.commit, es.perplexity);
  };

  auto model = nc::TokenizerModel<S>::init(tc, g.seed);
  nc::train_tokenizer(model, grids, opts);
  const std::string out = cfg.get_path("tokenizer.out_ckpt", "tokenizer.ckpt");
  model.save(out);
  std::cout << "saved tokenizer checkpoint to " << out << "\n";
  return 0;
}

template <typename S>
int cmd_pretrain(const nc::RunConfig& cfg, const std::string& tokenizer_ckpt,
                 const GlobalOpts& g) {
  std::set<std::string> known = kDataKeys;
  known.insert(kModelKeys.begin(), kModelKeys.end());
  for (const char* k :
       {"pretrain.mask_ratio", "pretrain.symmetric", "pretrain.epochs", "pretrain.batch_size",
        "pretrain.peak_lr", "pretrain.floor_lr", "pretrain.warmup_epochs", "pretrain.beta1",
        "pretrain.beta2", "pretrain.weight_decay", "pretrain.clip", "pretrain.average_masked",
        "pretrain.out_ckpt", "pretrain.csv", "pretrain.ckpt_every"})
    known.insert(k);
  cfg.check_known(known);

  auto tokenizer = nc::TokenizerModel<S>::load(tokenizer_ckpt);
  const nc::Corpus corpus = load_corpus(cfg);
  const auto split = nc::split_by_recording(corpus.recording_of_samples(), split_ratios_from(cfg),
                                            cfg.get_u64("data.split_seed", g.seed));
  std::vector<const nc::PatchGrid*> train;
  for (const int i : split.train) train.push_back(&corpus.samples[static_cast<size_t>(i)].grid);

  nc::PretrainOptions opts;
  opts.mask_ratio = cfg.get_double("pretrain.mask_ratio", 0.5);
  opts.symmetric = cfg.get_bool("pretrain.symmetric", true);
  opts.epochs = cfg.get_int("pretrain.epochs", 50);
  opts.batch_size = cfg.get_int("pretrain.batch_size", 512);
  opts.peak_lr = cfg.get_double("pretrain.peak_lr", 5e-4);
  opts.floor_lr = cfg.get_double("pretrain.floor_lr", 1e-5);
  opts.warmup_epochs = cfg.get_int("pretrain.warmup_epochs", 5);
  opts.beta1 = cfg.get_double("pretrain.beta1", 0.9);
  opts.beta2 = cfg.get_double("pretrain.beta2", 0.98);
  opts.weight_decay = cfg.get_double("pretrain.weight_decay", 0.05);
  opts.clip = cfg.get_double("pretrain.clip", 3.0);
  opts.average_masked = cfg.get_bool("pretrain.average_masked", true);
  opts.seed = g.seed;
  opts.threads = g.threads;
  opts.csv_path = cfg.get_path("pretrain.csv", "pretrain.csv");
  opts.csv_header =
      repro_header("pretrain", cfg, g,
                   {{"data", nc::dir_content_hash(cfg.get_path("data.dir", ""))},
                    {"tokenizer_ckpt", nc::blob_hash_file(tokenizer_ckpt)}});

  auto model = nc::PretrainModel<S>::init(model_config_from(cfg), tokenizer.cfg.codebook_k, g.seed);
  const std::string out = cfg.get_path("pretrain.out_ckpt", "pretrain.ckpt");
  const int ckpt_every = cfg.get_int("pretrain.ckpt_every", 0);
  opts.on_epoch = [&](int epoch, const nc::PretrainBatchResult& r) {
    std::printf("epoch %3d  loss %.4f  loss_sym %.4f  mem_acc %.4f\n", epoch, r.loss, r.loss_sym,
                r.mem_accuracy);
    if (ckpt_every > 0 && epoch % ckpt_every == 0)
      model.save(out + ".epoch" + std::to_string(epoch));
  };
  nc::pretrain(model, tokenizer, train, {}, opts);
  model.save(out);
  std::cout << "saved pretrained checkpoint to " << out << "\n";
  return 0;
}

template <typename S>
int cmd_finetune(const nc::RunConfig& cfg, const std::string& ckpt, const std::string& task_path,
                 bool from_scratch, const GlobalOpts& g) {
  std::set<std::string> known = kDataKeys;
  known.insert(kModelKeys.begin(), kModelKeys.end());
  for (const char* k :
       {"finetune.epochs", "finetune.batch_size", "finetune.peak_lr", "finetune.floor_lr",
        "finetune.warmup_epochs", "finetune.beta1", "finetune.beta2", "finetune.weight_decay",
        "finetune.clip", "finetune.layer_decay", "finetune.drop_path", "finetune.freeze",
        "finetune.zero_se", "finetune.max_steps", "finetune.out_ckpt", "finetune.csv"})
    known.insert(k);
  cfg.check_known(known);

  std::ifstream task_is(task_path);
  if (!task_is) throw nc::ConfigError("cannot open task spec: " + task_path);
  std::ostringstream task_ss;
  task_ss << task_is.rdbuf();
  const std::string task_text = task_ss.str();
  nc::TaskSpec task = nc::TaskSpec::from_kv(task_text);

  nc::FinetuneOptions opts;
  opts.epochs = cfg.get_int("finetune.epochs", 50);
  opts.batch_size = cfg.get_int("finetune.batch_size", 512);
  opts.peak_lr = cfg.get_double("finetune.peak_lr", 5e-4);
  opts.floor_lr = cfg.get_double("finetune.floor_lr", 1e-6);
  opts.warmup_epochs = cfg.get_int("finetune.warmup_epochs", 5);
  opts.beta1 = cfg.get_double("finetune.beta1", 0.9);
  opts.beta2 = cfg.get_double("finetune.beta2", 0.999);
  opts.weight_decay = cfg.get_double("finetune.weight_decay", 0.05);
  opts.clip = cfg.get_double("finetune.clip", 3.0);
  opts.layer_decay = cfg.get_double("finetune.layer_decay", 0.65);
  opts.drop_path = cfg.get_double("finetune.drop_path", 0.1);
  opts.zero_spatial_embedding = cfg.get_bool("finetune.zero_se", false);
  opts.max_steps = cfg.get_int("finetune.max_steps", 0);
  opts.seed = g.seed;
  opts.threads = g.threads;
  // freeze: task-file line wins over the config key
  std::string freeze_str = cfg.get_str("finetune.freeze", "all");
  std::istringstream tf(task_text);
  std::string line;
  while (std::getline(tf, line))
    if (line.rfind("freeze=", 0) == 0) freeze_str = line.substr(7);
  opts.freeze = nc::FreezeSpec::parse(freeze_str);

  const nc::Corpus corpus = load_corpus(cfg);
  const auto split = nc::split_by_recording(corpus.recording_of_samples(), split_ratios_from(cfg),
                                            cfg.get_u64("data.split_seed", g.seed));
  const auto train = labeled(corpus, split.train);
  const auto valid = labeled(corpus, split.valid);
  const auto test = labeled(corpus, split.test);

  std::vector<std::pair<std::string, std::string>> hashes = {
      {"data", nc::dir_content_hash(cfg.get_path("data.dir", ""))},
      {"task", nc::blob_hash(task_text)}};
  if (!from_scratch) hashes.emplace_back("ckpt", nc::blob_hash_file(ckpt));
  opts.csv_path = cfg.get_path("finetune.csv", "finetune.csv");
  opts.csv_header = repro_header("finetune", cfg, g, hashes);

  nc::FinetuneModel<S> model =
      from_scratch
          ? nc::FinetuneModel<S>::fresh(model_config_from(cfg), task,
                                        nc::derive_seed(g.seed, "ft-fresh"))
          : nc::FinetuneModel<S>::from_pretrained(nc::PretrainModel<S>::load(ckpt), task,
                                                  nc::derive_seed(g.seed, "ft-head"));

  const nc::FinetuneResult res = nc::finetune(model, train, valid, opts);
  std::printf("best epoch %d  monitor(%s) %.4f\n", res.best_epoch, task.monitor.c_str(),
              res.best_monitor);

  if (!test.empty()) {
    const nc::EvalOutputs out = nc::evaluate_model(model, test, g.threads);
    if (task.kind == nc::TaskKind::regression) {
      const auto rm = nc::regression_metrics_multi(out.reg_true, out.reg_pred);
      std::printf("test  pearson %.4f  r2 %.4f  rmse %.4f\n",
                  rm.pearson.value_or(std::nan("")), rm.r2.value_or(std::nan("")), rm.rmse);
    } else {
      const auto cm = nc::classification_metrics(out.y_true, out.y_pred, out.scores);
      std::printf("test  balanced_acc %.4f  kappa %.4f  weighted_f1 %.4f", cm.balanced_accuracy,
                  cm.kappa, cm.weighted_f1);
      if (cm.auroc >= 0) std::printf("  auroc %.4f  auc_pr %.4f", cm.auroc, cm.auc_pr);
      std::printf("\n");
    }
  }
  const std::string out_ckpt = cfg.get_path("finetune.out_ckpt", "finetune.ckpt");
  model.save(out_ckpt);
  std::cout << "saved fine-tuned checkpoint to " << out_ckpt << "\n";
  return 0;
}

template <typename S>
int cmd_eval(const std::string& ckpt, const std::string& data_dir, const std::string& out_csv,
             const GlobalOpts& g) {
  auto model = nc::FinetuneModel<S>::load(ckpt);
  nc::DataConfig dc;
  dc.patch_w = model.cfg.patch_w;
  const nc::Corpus corpus = nc::load_corpus_dir(data_dir, dc);
  std::vector<nc::LabeledGrid> samples;
  for (const auto& s : corpus.samples) {
    nc::LabeledGrid lg;
    lg.grid = &s.grid;
    lg.label = s.label;
    samples.push_back(lg);
  }
  const nc::EvalOutputs out = nc::evaluate_model(model, samples, g.threads);
  std::vector<std::pair<std::string, double>> rows;
  if (model.task.kind == nc::TaskKind::regression) {
    const auto rm = nc::regression_metrics_multi(out.reg_true, out.reg_pred);
    rows = {{"pearson", rm.pearson.value_or(std::nan(""))},
            {"r2", rm.r2.value_or(std::nan(""))},
            {"rmse", rm.rmse}};
  } else {
    const auto cm = nc::classification_metrics(out.y_true, out.y_pred, out.scores);
    rows = {{"balanced_accuracy", cm.balanced_accuracy},
            {"kappa", cm.kappa},
            {"weighted_f1", cm.weighted_f1}};
    if (cm.auroc >= 0) {
      rows.emplace_back("auroc", cm.auroc);
      rows.emplace_back("auc_pr", cm.auc_pr);
    }
  }
  std::printf("%-20s %s\n", "metric", "value");
  for (const auto& [name, value] : rows) std::printf("%-20s %.6f\n", name.c_str(), value);
  if (!out_csv.empty()) {
    nc::CsvWriter csv;
    GlobalOpts g2 = g;
    nc::RunConfig empty;
    csv.open(out_csv,
             {"neurocodec eval", "ckpt_sha1=" + nc::blob_hash_file(ckpt),
              "data_sha1=" + nc::dir_content_hash(data_dir), "seed=" + std::to_string(g2.seed)},
             "metric,value");
    for (const auto& [name, value] : rows) csv.row({name, nc::fmt_g(value)});
  }
  return 0;
}

int cmd_inspect(const std::string& path) {
  const nc::EEGRecording rec = nc::read_recording(path);
  std::cout << "magic=EEGR\nversion=1\n";
  std::cout << "channels=" << rec.channels.size() << "\n";
  std::cout << "rate_hz=" << nc::fmt_g(rec.rate_hz) << "\n";
  std::cout << "samples=" << rec.n_samples() << "\n";
  std::string labels;
  for (size_t i = 0; i < rec.channels.size(); ++i) {
    if (i) labels += ",";
    labels += rec.channels[i].name;
  }
  std::cout << "labels=" << labels << "\n";
  for (const auto& [k, v] : rec.meta) std::cout << "meta." << k << "=" << v << "\n";
  return 0;
}

int cmd_describe_ckpt(const std::string& path) {
  const nc::Checkpoint ckpt = nc::read_checkpoint(path);
  std::cout << "magic=LBRM\nversion=1\n--- config ---\n" << ckpt.config_kv << "--- tensors ---\n";
  for (const auto& r : ckpt.records) {
    std::cout << r.name << "  dtype="
              << (r.dtype == nc::DType::f32 ? "f32" : r.dtype == nc::DType::f64 ? "f64" : "i64")
              << "  shape=(";
    for (size_t i = 0; i < r.shape.size(); ++i) {
      if (i) std::cout << ",";
      std::cout << r.shape[i];
    }
    std::cout << ")\n";
  }
  std::cout << "tensor_count=" << ckpt.records.size() << "\n";
  return 0;
}

int cmd_spectrum(const std::string& path, const std::string& out_csv, int64_t patch_w,
                 bool zscore) {
  const nc::EEGRecording rec = nc::read_recording(path);
  const int64_t t = (rec.n_samples() / patch_w) * patch_w;
  if (t < patch_w) throw nc::DataError("recording shorter than one patch");
  const auto samples = nc::segment(rec, t, t);
  const nc::PatchGrid grid = nc::patchify(samples[0], patch_w);
  nc::CsvWriter csv;
  csv.open(out_csv, {"neurocodec spectrum", "input_sha1=" + nc::blob_hash_file(path)},
           "patch,channel,time,bin,amplitude,phase");
  if (zscore) {
    const nc::SpectrumTarget target = nc::build_target(grid);
    const int64_t B = target.amplitude.dim(1);
    for (int64_t i = 0; i < grid.n(); ++i)
      for (int64_t m = 0; m < B; ++m)
        csv.row({std::to_string(i), std::to_string(grid.tag_channel[static_cast<size_t>(i)]),
                 std::to_string(grid.tag_time[static_cast<size_t>(i)]), std::to_string(m),
                 nc::fmt_g(target.amplitude.at(i, m)), nc::fmt_g(target.phase.at(i, m))});
  } else {
    std::vector<double> patch(static_cast<size_t>(patch_w));
    for (int64_t i = 0; i < grid.n(); ++i) {
      for (int64_t j = 0; j < patch_w; ++j) patch[static_cast<size_t>(j)] = grid.patches.at(i, j);
      const nc::AmpPhase ap = nc::amp_phase(nc::dft(patch));
      for (size_t m = 0; m < ap.amplitude.size(); ++m)
        csv.row({std::to_string(i), std::to_string(grid.tag_channel[static_cast<size_t>(i)]),
                 std::to_string(grid.tag_time[static_cast<size_t>(i)]), std::to_string(m),
                 nc::fmt_g(ap.amplitude[m]), nc::fmt_g(ap.phase[m])});
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neurocodec: vector-quantized neural spectrum tokenizer and masked-EEG pipelines"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand

  GlobalOpts g;
  app.add_option("--seed", g.seed, "global RNG seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads")->capture_default_str();
  app.add_option("--precision", g.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();

  std::string config_path, out_dir, tokenizer_ckpt, ckpt, task_path, data_dir, out_csv, file;
  bool from_scratch = false;
  bool zscore = false;
  int64_t patch_w = 200;

  auto* synth = app.add_subcommand("synth", "generate a synthetic EEGR corpus");
  synth->add_option("--config", config_path)->required();
  synth->add_option("--out", out_dir)->required();

  auto* tok = app.add_subcommand("train-tokenizer", "train the neural spectrum tokenizer");
  tok->add_option("--config", config_path)->required();

  auto* pre = app.add_subcommand("pretrain", "masked EEG modeling pre-training");
  pre->add_option("--config", config_path)->required();
  pre->add_option("--tokenizer-ckpt", tokenizer_ckpt)->required();

  auto* ft = app.add_subcommand("finetune", "supervised fine-tuning");
  ft->add_option("--config", config_path)->required();
  ft->add_option("--ckpt", ckpt);
  ft->add_option("--task", task_path)->required();
  ft->add_flag("--from-scratch", from_scratch, "random init instead of a checkpoint");

  auto* ev = app.add_subcommand("eval", "evaluate a fine-tuned checkpoint");
  ev->add_option("--ckpt", ckpt)->required();
  ev->add_option("--data", data_dir)->required();
  ev->add_option("--out", out_csv);

  auto* ins = app.add_subcommand("inspect", "print an EEGR header");
  ins->add_option("file", file)->required();

  auto* desc = app.add_subcommand("describe-ckpt", "print a checkpoint's config and tensors");
  desc->add_option("file", file)->required();

  auto* spec = app.add_subcommand("spectrum", "dump per-patch amplitude/phase rows");
  spec->add_option("file", file)->required();
  spec->add_option("--out", out_csv)->required();
  spec->add_option("--patch-w", patch_w)->capture_default_str();
  spec->add_flag("--zscore", zscore, "dump z-scored targets instead of raw spectra");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(config_path, out_dir, g);
    if (ins->parsed()) return cmd_inspect(file);
    if (desc->parsed()) return cmd_describe_ckpt(file);
    if (spec->parsed()) return cmd_spectrum(file, out_csv, patch_w, zscore);

    const bool f64 = g.precision == "f64";
    if (tok->parsed()) {
      const auto cfg = nc::RunConfig::from_file(config_path);
      return f64 ? cmd_train_tokenizer<double>(cfg, g) : cmd_train_tokenizer<float>(cfg, g);
    }
    if (pre->parsed()) {
      const auto cfg = nc::RunConfig::from_file(config_path);
      return f64 ? cmd_pretrain<double>(cfg, tokenizer_ckpt, g)
                 : cmd_pretrain<float>(cfg, tokenizer_ckpt, g);
    }
    if (ft->parsed()) {
      if (!from_scratch && ckpt.empty())
        throw nc::ConfigError("finetune needs --ckpt or --from-scratch");
      const auto cfg = nc::RunConfig::from_file(config_path);
      return f64 ? cmd_finetune<double>(cfg, ckpt, task_path, from_scratch, g)
                 : cmd_finetune<float>(cfg, ckpt, task_path, from_scratch, g);
    }
    if (ev->parsed()) return f64 ? cmd_eval<double>(ckpt, data_dir, out_csv, g)
                                 : cmd_eval<float>(ckpt, data_dir, out_csv, g);
  } catch (const nc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const nc::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const nc::MetricUndefined& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const nc::NumericsError& e) {
    std::cerr << "numerics error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
