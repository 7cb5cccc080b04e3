#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "neurocodec/codebook.hpp"
#include "neurocodec/gradcheck.hpp"
#include "neurocodec/rng.hpp"
#include "neurocodec/tokenizer.hpp"

using namespace neurocodec;

namespace {

TokenizerConfig unit_tok_cfg() {
  TokenizerConfig cfg = TokenizerConfig::preset("tiny");
  cfg.enc.patch_w = 40;
  cfg.enc.conv = {{1, 8, 7, 4, 3}, {8, 8, 3, 1, 1}};
  cfg.enc.tmax = 8;
  cfg.codebook_k = 16;
  cfg.codebook_d = 8;
  cfg.decoder_layers = 1;
  return cfg;
}

PatchGrid random_grid(int C, int slots, int64_t w, uint64_t seed) {
  Rng rng(seed);
  PatchGrid g;
  g.w = w;
  g.patches = Tensor<float>({static_cast<int64_t>(C * slots), w});
  for (float& v : g.patches.data) v = static_cast<float>(rng.next_normal());
  for (int c = 0; c < C; ++c)
    for (int k = 1; k <= slots; ++k) {
      g.tag_channel.push_back(c + 1);
      g.tag_time.push_back(k);
    }
  return g;
}

// Independent oracle: argmax cosine similarity with explicit normalization.
int cosine_argmax(const double* p, const Tensor<double>& codebook, int64_t D) {
  double pn = 0;
  for (int64_t j = 0; j < D; ++j) pn += p[j] * p[j];
  pn = std::max(std::sqrt(pn), 1e-12);
  int best = 0;
  double best_sim = -2;
  for (int64_t k = 0; k < codebook.dim(0); ++k) {
    double vn = 0, dot = 0;
    for (int64_t j = 0; j < D; ++j) {
      vn += codebook.at(k, j) * codebook.at(k, j);
      dot += p[j] * codebook.at(k, j);
    }
    vn = std::max(std::sqrt(vn), 1e-12);
    const double sim = dot / (pn * vn);
    if (sim > best_sim) {
      best_sim = sim;
      best = static_cast<int>(k);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("quantize: scaled codebook vector maps to its own index") {
  auto cb = Codebook<double>::init(8, 4, 0.99, 11);
  Tensor<double> reps({1, 4});
  for (int64_t j = 0; j < 4; ++j) reps.at(0, j) = 2.0 * cb.vectors.at(3, j);
  CHECK(quantize(reps, cb).indices[0] == 3);
}

TEST_CASE("quantize: matches brute-force cosine argmax on random draws") {
  Rng rng(13);
  auto cb = Codebook<double>::init(8, 4, 0.99, 17);
  Tensor<double> reps({100, 4});
  for (double& v : reps.data) v = rng.next_normal();
  const auto result = quantize(reps, cb);
  for (int64_t i = 0; i < 100; ++i)
    CHECK(result.indices[static_cast<size_t>(i)] ==
          cosine_argmax(reps.ptr() + i * 4, cb.vectors, 4));
}

TEST_CASE("quantize: exact duplicate codes tie-break to the lowest index") {
  auto cb = Codebook<double>::init(8, 4, 0.99, 19);
  for (int64_t j = 0; j < 4; ++j) cb.vectors.at(4, j) = cb.vectors.at(0, j);
  Tensor<double> reps({1, 4});
  for (int64_t j = 0; j < 4; ++j) reps.at(0, j) = cb.vectors.at(0, j) * 1.5;
  CHECK(quantize(reps, cb).indices[0] == 0);
}

TEST_CASE("quantize: scale invariance") {
  Rng rng(23);
  auto cb = Codebook<float>::init(32, 8, 0.99, 29);
  Tensor<float> reps({50, 8});
  for (float& v : reps.data) v = static_cast<float>(rng.next_normal());
  const auto base = quantize(reps, cb);
  for (const double alpha : {2.0, 0.5, 7.3, 0.01}) {
    Tensor<float> scaled = reps;
    for (float& v : scaled.data) v = static_cast<float>(v * alpha);
    CHECK(quantize(scaled, cb).indices == base.indices);
  }
}

TEST_CASE("quantize: zero-norm rep is clamped and flagged") {
  auto cb = Codebook<double>::init(4, 3, 0.99, 31);
  Tensor<double> reps({2, 3});
  reps.at(1, 0) = 1.0;
  const auto result = quantize(reps, cb);
  REQUIRE(result.clamped_rows.size() == 1);
  CHECK(result.clamped_rows[0] == 0);
  CHECK(result.indices.size() == 2);
}

TEST_CASE("ema_update: decay-free mean") {
  auto cb = Codebook<double>::init(4, 3, 0.0, 37);
  Rng rng(41);
  Tensor<double> reps({2, 3});
  for (double& v : reps.data) v = rng.next_normal();
  l2_normalize_rows_inplace(reps);
  ema_update(cb, {2, 2}, reps);
  // vectors_2 = l2((u + w) / 2)
  double mean[3], ss = 0;
  for (int64_t j = 0; j < 3; ++j) {
    mean[j] = (reps.at(0, j) + reps.at(1, j)) / 2;
    ss += mean[j] * mean[j];
  }
  for (int64_t j = 0; j < 3; ++j)
    CHECK(cb.vectors.at(2, j) == doctest::Approx(mean[j] / std::sqrt(ss)).epsilon(1e-9));
  CHECK(cb.usage_age[2] == 0);
  CHECK(cb.usage_age[0] == 1);
}

TEST_CASE("ema_update: no assignments leaves vectors bitwise unchanged") {
  auto cb = Codebook<float>::init(4, 3, 0.99, 43);
  const auto before = cb.vectors.data;
  ema_update(cb, {}, Tensor<float>({0, 3}));
  CHECK(cb.vectors.data == before);
  for (const auto age : cb.usage_age) CHECK(age == 1);
}

TEST_CASE("ema_update: converges to the constant rep") {
  auto cb = Codebook<double>::init(4, 3, 0.99, 47);
  Rng rng(53);
  Tensor<double> rep({1, 3});
  for (double& v : rep.data) v = rng.next_normal();
  l2_normalize_rows_inplace(rep);
  for (int step = 0; step < 1000; ++step) ema_update(cb, {1}, rep);
  for (int64_t j = 0; j < 3; ++j)
    CHECK(std::fabs(cb.vectors.at(1, j) - rep.at(0, j)) < 1e-6);
}

TEST_CASE("ema_update: stored vectors stay unit norm") {
  auto cb = Codebook<double>::init(8, 5, 0.9, 59);
  Rng rng(61);
  for (int step = 0; step < 50; ++step) {
    Tensor<double> reps({4, 5});
    for (double& v : reps.data) v = rng.next_normal();
    l2_normalize_rows_inplace(reps);
    std::vector<int> idx;
    for (int i = 0; i < 4; ++i) idx.push_back(static_cast<int>(rng.next_below(8)));
    ema_update(cb, idx, reps);
    for (int64_t k = 0; k < 8; ++k) {
      double ss = 0;
      for (int64_t j = 0; j < 5; ++j) ss += cb.vectors.at(k, j) * cb.vectors.at(k, j);
      CHECK(std::fabs(std::sqrt(ss) - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("dead-code revival keeps every age at or below the threshold") {
  auto cb = Codebook<double>::init(8, 4, 0.99, 67);
  Rng rng(71);
  Tensor<double> rep({1, 4});
  rep.at(0, 0) = 1.0;
  Rng revive_rng(73);
  for (int step = 1; step <= 300; ++step) {
    ema_update(cb, {0}, rep);  // only code 0 ever assigned
    revive_dead_codes(cb, rep, 256, revive_rng);
    for (const auto age : cb.usage_age) CHECK(age <= 256);
  }
}

TEST_CASE("codebook_perplexity: hand cases") {
  CHECK(codebook_perplexity({1, 1, 1, 1, 1, 1, 1, 1}) == doctest::Approx(8.0));
  CHECK(codebook_perplexity({10, 0, 0, 0}) == doctest::Approx(1.0));
  CHECK(codebook_perplexity({5, 5, 0, 0}) == doctest::Approx(2.0));
}

TEST_CASE("tokenizer_forward: shape contract and determinism of indices") {
  const TokenizerConfig cfg = unit_tok_cfg();
  auto model = TokenizerModel<double>::init(cfg, 5);
  PatchGrid grid = random_grid(2, 3, cfg.enc.patch_w, 81);
  // duplicate patch 0 into patch 1
  for (int64_t j = 0; j < grid.w; ++j) grid.patches.at(1, j) = grid.patches.at(0, j);
  grid.tag_channel[1] = grid.tag_channel[0];
  grid.tag_time[1] = grid.tag_time[0];

  Tape<double> tape;
  VarMap vars = register_tokenizer_params(tape, model, false);
  const auto fw = tokenizer_forward(tape, vars, model, grid);
  const int64_t B = cfg.spectrum_b();
  CHECK(tape.val(fw.amp).dim(0) == grid.n());
  CHECK(tape.val(fw.amp).dim(1) == B);
  CHECK(tape.val(fw.phase).dim(1) == B);
  CHECK(static_cast<int64_t>(fw.indices.size()) == grid.n());
  CHECK(fw.indices[0] == fw.indices[1]);  // identical patches, identical codes
}

TEST_CASE("tokenizer: identity-quantizer debug mode runs as a plain autoencoder") {
  const TokenizerConfig cfg = unit_tok_cfg();
  auto model = TokenizerModel<double>::init(cfg, 6);
  model.quantizer_identity = true;
  const PatchGrid grid = random_grid(2, 2, cfg.enc.patch_w, 82);
  const SpectrumTarget target = build_target(grid);
  Tape<double> tape;
  VarMap vars = register_tokenizer_params(tape, model, true);
  const auto fw = tokenizer_forward(tape, vars, model, grid);
  TokenizerLossParts parts;
  const Var loss = tokenizer_loss(tape, fw, target.amplitude.cast<double>(),
                                  target.phase.cast<double>(), cfg.ema_codebook, 1.0, &parts);
  CHECK(std::isfinite(parts.total));
  CHECK(parts.codebook_pull == doctest::Approx(0.0));  // bridge equals reps
  tape.backward(loss);
  SUBCASE("gradients exist for encoder and decoder") {
    CHECK(tape.grad_ready(vars.at("tok.down.w")));
    CHECK(tape.grad_ready(vars.at("head.amp.w")));
  }
}

TEST_CASE("tokenizer_loss: vanishes when predictions and codes are perfect") {
  // Crafted graph: o == targets, reps on the code exactly.
  Tape<double> tape;
  Rng rng(91);
  Tensor<double> amp({3, 5}), phase({3, 5}), reps({3, 4});
  for (double& v : amp.data) v = rng.next_normal();
  for (double& v : phase.data) v = rng.next_normal();
  for (double& v : reps.data) v = rng.next_normal();
  TokenizerForwardVars fw;
  fw.amp = tape.leaf(amp, false);
  fw.phase = tape.leaf(phase, false);
  fw.reps_l2 = tape.l2norm_rows(tape.leaf(reps, false), 1e-12);
  fw.quant_l2 = fw.reps_l2;
  fw.indices = {0, 1, 2};
  TokenizerLossParts parts;
  tokenizer_loss(tape, fw, amp, phase, true, 1.0, &parts);
  CHECK(parts.total == doctest::Approx(0.0));
}

TEST_CASE("tokenizer_loss: commitment isolation with orthogonal code") {
  Tape<double> tape;
  Tensor<double> amp({1, 3}), phase({1, 3});
  amp.data = {0.5, -1.0, 2.0};
  phase.data = {0.1, 0.2, 0.3};
  Tensor<double> p({1, 2}), v({1, 2});
  p.data = {1.0, 0.0};
  v.data = {0.0, 1.0};
  TokenizerForwardVars fw;
  fw.amp = tape.leaf(amp, false);
  fw.phase = tape.leaf(phase, false);
  fw.reps_l2 = tape.l2norm_rows(tape.leaf(p, false), 1e-12);
  fw.quant_l2 = tape.l2norm_rows(tape.leaf(v, false), 1e-12);
  fw.indices = {0};
  TokenizerLossParts parts;
  tokenizer_loss(tape, fw, amp, phase, true, 1.0, &parts);
  // ||l2 p - l2 v||^2 = 2 for orthogonal unit vectors; pull + commit = 4.
  CHECK(parts.amp_mse == doctest::Approx(0.0));
  CHECK(parts.phase_mse == doctest::Approx(0.0));
  CHECK(parts.codebook_pull == doctest::Approx(2.0));
  CHECK(parts.commitment == doctest::Approx(2.0));
  CHECK(parts.total == doctest::Approx(4.0));
}

TEST_CASE("tokenizer_loss: matches an independent straight-sum reference") {
  const TokenizerConfig cfg = unit_tok_cfg();
  auto model = TokenizerModel<double>::init(cfg, 7);
  const PatchGrid grid = random_grid(2, 2, cfg.enc.patch_w, 83);
  const SpectrumTarget target = build_target(grid);
  const Tensor<double> amp_t = target.amplitude;
  const Tensor<double> phase_t = target.phase;

  Tape<double> tape;
  VarMap vars = register_tokenizer_params(tape, model, false);
  const auto fw = tokenizer_forward(tape, vars, model, grid);
  TokenizerLossParts parts;
  tokenizer_loss(tape, fw, amp_t, phase_t, cfg.ema_codebook, 1.0, &parts);

  // Reference: straight sums over the tape's forward values.
  const auto& amp = tape.val(fw.amp);
  const auto& phase = tape.val(fw.phase);
  const auto& reps = tape.val(fw.reps_l2);
  const auto& quant = tape.val(fw.quant_l2);
  double ref = 0;
  for (int64_t i = 0; i < amp.numel(); ++i) {
    const double da = amp.at(i) - amp_t.at(i);
    const double dp = phase.at(i) - phase_t.at(i);
    ref += da * da + dp * dp;
  }
  for (int64_t i = 0; i < reps.numel(); ++i) {
    const double dv = reps.at(i) - quant.at(i);
    ref += 2.0 * dv * dv;  // pull + commitment share the same residual
  }
  CHECK(std::fabs(parts.total - ref) < 1e-10);
}

TEST_CASE("tokenizer gradients: full loss with the identity bridge") {
  TokenizerConfig cfg = unit_tok_cfg();
  auto model = TokenizerModel<double>::init(cfg, 8);
  model.quantizer_identity = true;
  const PatchGrid grid = random_grid(1, 3, cfg.enc.patch_w, 84);
  const SpectrumTarget target = build_target(grid);
  const Tensor<double> amp_t = target.amplitude;
  const Tensor<double> phase_t = target.phase;

  LossFn<double> loss_fn = [&](const ParamStore<double>& p, GradMap<double>* grads) {
    TokenizerModel<double> m = model;
    m.params = p;
    Tape<double> tape;
    VarMap vars = register_tokenizer_params(tape, m, true);
    const auto fw = tokenizer_forward(tape, vars, m, grid);
    const Var loss = tokenizer_loss(tape, fw, amp_t, phase_t, cfg.ema_codebook, 1.0, nullptr);
    if (grads) {
      tape.backward(loss);
      for (const auto& [name, var] : vars.m)
        if (tape.grad_ready(var)) (*grads)[name] = tape.gbuf(var);
    }
    return static_cast<double>(tape.val(loss).at(0));
  };
  const GradCheckResult res = grad_check<double>(loss_fn, model.params, 1e-4, 200, 123);
  CAPTURE(res.worst_param);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("tokenizer gradients: quantized path checks downstream of the bridge") {
  // With a hard argmin upstream, finite differences are valid for the decoder,
  // heads, and (in gradient mode) the codebook pull term.
  TokenizerConfig cfg = unit_tok_cfg();
  cfg.ema_codebook = false;
  auto model = TokenizerModel<double>::init(cfg, 9);
  const PatchGrid grid = random_grid(1, 3, cfg.enc.patch_w, 85);
  const SpectrumTarget target = build_target(grid);
  const Tensor<double> amp_t = target.amplitude;
  const Tensor<double> phase_t = target.phase;

  // The codebook participates via a store entry so grad_check can perturb it.
  ParamStore<double> probe = model.params;
  probe.t.emplace("vq.vectors", model.codebook.vectors);

  LossFn<double> loss_fn = [&](const ParamStore<double>& p, GradMap<double>* grads) {
    TokenizerModel<double> m = model;
    m.params = p;
    m.params.t.erase("vq.vectors");
    m.codebook.vectors = p.at("vq.vectors");
    Tape<double> tape;
    VarMap vars = register_tokenizer_params(tape, m, true);
    const auto fw = tokenizer_forward(tape, vars, m, grid);
    const Var loss = tokenizer_loss(tape, fw, amp_t, phase_t, false, 1.0, nullptr);
    if (grads) {
      tape.backward(loss);
      for (const auto& [name, var] : vars.m)
        if (tape.grad_ready(var)) (*grads)[name] = tape.gbuf(var);
    }
    return static_cast<double>(tape.val(loss).at(0));
  };
  auto downstream = [](const std::string& name) {
    return name.rfind("dec.", 0) == 0 || name.rfind("head.", 0) == 0;
  };
  const GradCheckResult res = grad_check<double>(loss_fn, probe, 1e-4, 200, 321, downstream);
  CAPTURE(res.worst_param);
  CHECK(res.max_rel_err < 1e-5);

  // The codebook's finite-difference check must isolate the pull term: the
  // straight-through bridge deliberately detaches the decoder path from v.
  LossFn<double> pull_fn = [&](const ParamStore<double>& p, GradMap<double>* grads) {
    TokenizerModel<double> m = model;
    m.params = p;
    m.params.t.erase("vq.vectors");
    m.codebook.vectors = p.at("vq.vectors");
    Tape<double> tape;
    VarMap vars = register_tokenizer_params(tape, m, true);
    const auto fw = tokenizer_forward(tape, vars, m, grid);
    const Var pull = tape.sum_sq_diff(tape.detach(fw.reps_l2), fw.quant_l2);
    if (grads) {
      tape.backward(pull);
      for (const auto& [name, var] : vars.m)
        if (tape.grad_ready(var)) (*grads)[name] = tape.gbuf(var);
    }
    return static_cast<double>(tape.val(pull).at(0));
  };
  const GradCheckResult pull_res = grad_check<double>(
      pull_fn, probe, 1e-4, 100, 654,
      [](const std::string& n) { return n == "vq.vectors"; });
  CAPTURE(pull_res.worst_param);
  CHECK(pull_res.max_rel_err < 1e-5);
}

TEST_CASE("tokenizer gradients: stop-gradient terms stay silent") {
  // Pull term alone must not touch encoder-side parameters (EMA mode); the
  // commitment term alone must not touch the codebook.
  TokenizerConfig cfg = unit_tok_cfg();
  cfg.ema_codebook = false;
  auto model = TokenizerModel<double>::init(cfg, 10);
  const PatchGrid grid = random_grid(1, 2, cfg.enc.patch_w, 86);

  Tape<double> tape;
  VarMap vars = register_tokenizer_params(tape, model, true);
  const auto fw = tokenizer_forward(tape, vars, model, grid);
  const Var commit_only = tape.sum_sq_diff(fw.reps_l2, tape.detach(fw.quant_l2));
  tape.backward(commit_only);
  CHECK_FALSE(tape.grad_ready(vars.at("vq.vectors")));
  CHECK(tape.grad_ready(vars.at("tok.down.w")));

  Tape<double> tape2;
  VarMap vars2 = register_tokenizer_params(tape2, model, true);
  const auto fw2 = tokenizer_forward(tape2, vars2, model, grid);
  const Var pull_only = tape2.sum_sq_diff(tape2.detach(fw2.reps_l2), fw2.quant_l2);
  tape2.backward(pull_only);
  CHECK(tape2.grad_ready(vars2.at("vq.vectors")));
  CHECK_FALSE(tape2.grad_ready(vars2.at("tok.down.w")));
}

TEST_CASE("tokenizer: checkpoint round trip preserves tokenize() output") {
  const TokenizerConfig cfg = unit_tok_cfg();
  auto model = TokenizerModel<float>::init(cfg, 12);
  const PatchGrid grid = random_grid(2, 2, cfg.enc.patch_w, 87);
  const auto before = tokenize(model, grid);
  const std::string path =
      (std::filesystem::temp_directory_path() / "tok_unit.ckpt").string();
  model.save(path);
  auto loaded = TokenizerModel<float>::load(path);
  const auto after = tokenize(loaded, grid);
  CHECK(before.indices == after.indices);
  CHECK(before.encoder_reps.data == after.encoder_reps.data);
}

TEST_CASE("tokenizer training: short run reduces the loss") {
  TokenizerConfig cfg = unit_tok_cfg();
  auto model = TokenizerModel<float>::init(cfg, 13);
  std::vector<PatchGrid> grids;
  for (int i = 0; i < 24; ++i) grids.push_back(random_grid(2, 2, cfg.enc.patch_w, 900 + i));
  std::vector<const PatchGrid*> ptrs;
  for (const auto& g : grids) ptrs.push_back(&g);
  TokenizerTrainOptions opts;
  opts.epochs = 4;
  opts.batch_size = 8;
  opts.peak_lr = 3e-3;
  opts.warmup_epochs = 1;
  opts.seed = 5;
  const auto history = train_tokenizer(model, ptrs, opts);
  REQUIRE(history.size() == 4);
  CHECK(history.back().lt < history.front().lt);
  CHECK(history.back().perplexity >= 1.0);
}
