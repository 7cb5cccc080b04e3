#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "neurocodec/errors.hpp"
#include "neurocodec/finetune.hpp"
#include "neurocodec/rng.hpp"

using namespace neurocodec;

namespace {

ModelConfig unit_model_cfg() {
  ModelConfig cfg = ModelConfig::preset("tiny");
  cfg.patch_w = 40;
  cfg.conv = {{1, 8, 7, 4, 3}, {8, 8, 3, 1, 1}};
  cfg.tmax = 8;
  return cfg;
}

PatchGrid class_grid(int label, int C, int slots, int64_t w, uint64_t seed) {
  // Distinct per-class tone frequencies so the task is learnable.
  Rng rng(seed);
  PatchGrid g;
  g.w = w;
  g.patches = Tensor<float>({static_cast<int64_t>(C * slots), w});
  const double freq = 2.0 + 3.0 * label;
  int64_t p = 0;
  for (int c = 0; c < C; ++c)
    for (int k = 1; k <= slots; ++k, ++p) {
      const double phase = rng.next_double() * 2 * M_PI;
      for (int64_t j = 0; j < w; ++j)
        g.patches.at(p, j) = static_cast<float>(
            std::sin(2.0 * M_PI * freq * static_cast<double>(j) / static_cast<double>(w) + phase) +
            0.1 * rng.next_normal());
      g.tag_channel.push_back(c + 1);
      g.tag_time.push_back(k);
    }
  return g;
}

TaskSpec multiclass_task(int n) {
  TaskSpec t;
  t.kind = TaskKind::multiclass;
  t.classes = n;
  t.loss = LossKind::ce;
  t.monitor = "kappa";
  return t;
}

}  // namespace

TEST_CASE("task spec: kv round trip and validation") {
  TaskSpec t = multiclass_task(4);
  const TaskSpec back = TaskSpec::from_kv(t.to_kv());
  CHECK(back.classes == 4);
  CHECK(back.kind == TaskKind::multiclass);

  TaskSpec bad = t;
  bad.monitor = "auroc";
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  TaskSpec reg;
  reg.kind = TaskKind::regression;
  reg.classes = 12;
  reg.loss = LossKind::mse;
  reg.monitor = "r2";
  reg.validate();
  CHECK(reg.head_dim() == 12);

  TaskSpec bin;
  bin.kind = TaskKind::binary;
  bin.loss = LossKind::bce;
  bin.monitor = "auroc";
  bin.validate();
  CHECK(bin.head_dim() == 1);
}

TEST_CASE("freeze spec: parsing and predicates") {
  const FreezeSpec all = FreezeSpec::parse("all");
  const FreezeSpec probe = FreezeSpec::parse("linear-probe");
  const FreezeSpec last1 = FreezeSpec::parse("last-1");
  CHECK_THROWS_AS(FreezeSpec::parse("everything"), ConfigError);

  auto p_all = all.predicate(2);
  auto p_probe = probe.predicate(2);
  auto p_last1 = last1.predicate(2);
  CHECK(p_all("blk1.attn.wq"));
  CHECK(p_all("emb.se"));
  CHECK(p_probe("task.head.w"));
  CHECK_FALSE(p_probe("blk2.mlp.fc1.w"));
  CHECK_FALSE(p_probe("final_ln.g"));
  CHECK(p_last1("blk2.attn.wq"));
  CHECK_FALSE(p_last1("blk1.attn.wq"));
  CHECK(p_last1("final_ln.g"));
  CHECK_FALSE(p_last1("enc.conv1.w"));
}

TEST_CASE("layer-wise lr decay: geometric formula") {
  CHECK(layer_lr_multiplier("task.head.w", 2, 0.65) == doctest::Approx(1.0));
  CHECK(layer_lr_multiplier("final_ln.g", 2, 0.65) == doctest::Approx(1.0));
  CHECK(layer_lr_multiplier("blk2.attn.wq", 2, 0.65) == doctest::Approx(0.65));
  CHECK(layer_lr_multiplier("blk1.attn.wq", 2, 0.65) == doctest::Approx(0.4225));
  CHECK(layer_lr_multiplier("enc.conv1.w", 2, 0.65) == doctest::Approx(0.65 * 0.4225));
  CHECK(layer_lr_multiplier("emb.se", 2, 0.65) == doctest::Approx(0.65 * 0.4225));
}

TEST_CASE("label smoothing: uniform logits cost ln n") {
  Tape<double> tape;
  Tensor<double> logits({1, 4});
  const Var loss = tape.ce_smoothed(tape.leaf(logits, false), {2}, 0.1, 1.0);
  CHECK(tape.val(loss).at(0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("linear probe: non-head tensors stay bitwise frozen") {
  const ModelConfig cfg = unit_model_cfg();
  auto model = FinetuneModel<float>::fresh(cfg, multiclass_task(3), 3);
  const auto snapshot = model.params;

  std::vector<PatchGrid> grids;
  std::vector<LabeledGrid> batch;
  for (int i = 0; i < 6; ++i) grids.push_back(class_grid(i % 3, 2, 2, cfg.patch_w, 50 + i));
  for (int i = 0; i < 6; ++i) batch.push_back({&grids[static_cast<size_t>(i)], i % 3, {}});

  FinetuneOptions opts;
  opts.freeze = FreezeSpec::parse("linear-probe");
  opts.drop_path = 0.0;
  AdamW<float> opt;
  for (int step = 1; step <= 10; ++step)
    finetune_step(model, batch, opt, 1e-3, opts, static_cast<uint64_t>(step));

  bool head_changed = false;
  for (const auto& [name, tensor] : model.params.t) {
    if (name.rfind("task.head", 0) == 0) {
      head_changed = head_changed || tensor.data != snapshot.at(name).data;
    } else {
      CHECK(tensor.data == snapshot.at(name).data);
    }
  }
  CHECK(head_changed);
}

TEST_CASE("finetune: multiclass learning on an easy synthetic task") {
  const ModelConfig cfg = unit_model_cfg();
  auto model = FinetuneModel<float>::fresh(cfg, multiclass_task(2), 4);

  std::vector<PatchGrid> grids;
  std::vector<LabeledGrid> train, valid;
  for (int i = 0; i < 48; ++i) grids.push_back(class_grid(i % 2, 2, 2, cfg.patch_w, 900 + i));
  for (int i = 0; i < 48; ++i) {
    const LabeledGrid lg{&grids[static_cast<size_t>(i)], i % 2, {}};
    if (i < 36) train.push_back(lg);
    else valid.push_back(lg);
  }

  FinetuneOptions opts;
  opts.epochs = 4;
  opts.batch_size = 12;
  opts.peak_lr = 2e-3;
  opts.drop_path = 0.0;
  opts.layer_decay = 0.9;
  opts.seed = 5;
  const FinetuneResult res = finetune(model, train, valid, opts);
  CHECK(res.best_monitor >= res.epoch_monitor[0]);  // never below initialization
  CHECK(res.epoch_loss.front() > res.epoch_loss.back());
  const double acc = balanced_accuracy(
      evaluate_model(model, valid, 1).y_true, evaluate_model(model, valid, 1).y_pred);
  CHECK(acc >= 0.75);
}

TEST_CASE("finetune: zero-SE ablation zeroes and freezes the table") {
  const ModelConfig cfg = unit_model_cfg();
  auto model = FinetuneModel<float>::fresh(cfg, multiclass_task(2), 6);
  std::vector<PatchGrid> grids;
  std::vector<LabeledGrid> train;
  for (int i = 0; i < 8; ++i) {
    grids.push_back(class_grid(i % 2, 2, 2, cfg.patch_w, 300 + i));
  }
  for (int i = 0; i < 8; ++i) train.push_back({&grids[static_cast<size_t>(i)], i % 2, {}});
  FinetuneOptions opts;
  opts.epochs = 1;
  opts.batch_size = 4;
  opts.zero_spatial_embedding = true;
  opts.drop_path = 0.0;
  finetune(model, train, {}, opts);
  for (const float v : model.params.at("emb.se").data) CHECK(v == 0.0f);
}

TEST_CASE("finetune: binary and regression heads run end to end") {
  const ModelConfig cfg = unit_model_cfg();

  TaskSpec bin;
  bin.kind = TaskKind::binary;
  bin.loss = LossKind::bce;
  bin.monitor = "auroc";
  auto bmodel = FinetuneModel<float>::fresh(cfg, bin, 7);
  std::vector<PatchGrid> grids;
  for (int i = 0; i < 8; ++i) grids.push_back(class_grid(i % 2, 2, 2, cfg.patch_w, 400 + i));
  std::vector<LabeledGrid> data;
  for (int i = 0; i < 8; ++i) data.push_back({&grids[static_cast<size_t>(i)], i % 2, {}});
  FinetuneOptions opts;
  opts.epochs = 1;
  opts.batch_size = 4;
  opts.drop_path = 0.0;
  finetune(bmodel, data, data, opts);
  const EvalOutputs bo = evaluate_model(bmodel, data, 1);
  CHECK(bo.scores.size() == 8);
  for (const double s : bo.scores) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }

  TaskSpec reg;
  reg.kind = TaskKind::regression;
  reg.classes = 3;
  reg.loss = LossKind::mse;
  reg.monitor = "r2";
  reg.angle_norm = true;
  auto rmodel = FinetuneModel<float>::fresh(cfg, reg, 8);
  std::vector<LabeledGrid> rdata;
  Rng rng(9);
  for (int i = 0; i < 8; ++i) {
    LabeledGrid lg{&grids[static_cast<size_t>(i)], -1, {}};
    for (int t = 0; t < 3; ++t) lg.targets.push_back(rng.next_double() * 90.0);
    rdata.push_back(lg);
  }
  AdamW<float> opt;
  const double loss1 = finetune_step(rmodel, rdata, opt, 1e-3, opts, 1);
  double loss2 = loss1;
  for (int s = 2; s <= 20; ++s) loss2 = finetune_step(rmodel, rdata, opt, 1e-3, opts, s);
  CHECK(loss2 < loss1);
  const EvalOutputs ro = evaluate_model(rmodel, rdata, 1);
  REQUIRE(ro.reg_true.size() == 3);
  // angle_norm divides the stored targets by 90
  CHECK(ro.reg_true[0][0] == doctest::Approx(rdata[0].targets[0] / 90.0));
}

TEST_CASE("finetune model: checkpoint round trip with task head") {
  const ModelConfig cfg = unit_model_cfg();
  auto model = FinetuneModel<float>::fresh(cfg, multiclass_task(3), 11);
  const std::string path =
      (std::filesystem::temp_directory_path() / "ft_unit.ckpt").string();
  model.save(path);
  auto loaded = FinetuneModel<float>::load(path);
  CHECK(loaded.task.classes == 3);
  CHECK(loaded.cfg.hidden_d == cfg.hidden_d);
  REQUIRE(loaded.params.t.size() == model.params.t.size());
  for (const auto& [name, tensor] : model.params.t)
    CHECK(loaded.params.at(name).data == tensor.data);
}
