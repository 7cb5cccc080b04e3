// End-to-end checks of the neurocodec binary (path via NEUROCODEC_BIN).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

void check(bool ok, const std::string& what) {
  if (ok) {
    std::printf("[ ok ] %s\n", what.c_str());
  } else {
    std::printf("[FAIL] %s\n", what.c_str());
    ++failures;
  }
}

struct RunResult {
  int exit_code;
  std::string output;
};

RunResult run(const std::string& cmd) {
  const std::string full = cmd + " 2>&1";
  FILE* pipe = popen(full.c_str(), "r");
  if (!pipe) return {-1, ""};
  std::string out;
  char buf[4096];
  while (fgets(buf, sizeof(buf), pipe)) out += buf;
  const int status = pclose(pipe);
  return {WEXITSTATUS(status), out};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
}

}  // namespace

int main() {
  const char* bin_env = std::getenv("NEUROCODEC_BIN");
  if (!bin_env) {
    std::fprintf(stderr, "NEUROCODEC_BIN not set\n");
    return 1;
  }
  const std::string bin = bin_env;
  const fs::path work = fs::temp_directory_path() / "neurocodec_cli_tests";
  fs::remove_all(work);
  fs::create_directories(work);

  // --- synth + inspect round trip ---
  write_file(work / "synth.cfg",
             "synth.classes=4\nsynth.recordings=24\nsynth.duration=8\nsynth.channels=4,6\n");
  auto r = run(bin + " synth --config " + (work / "synth.cfg").string() + " --out " +
               (work / "corpus").string() + " --seed 11");
  check(r.exit_code == 0, "synth exits 0");
  check(fs::exists(work / "corpus" / "labels.csv"), "synth writes labels.csv");

  r = run(bin + " inspect " + (work / "corpus" / "rec_00000.eegr").string());
  check(r.exit_code == 0, "inspect exits 0");
  check(r.output.find("rate_hz=200") != std::string::npos, "inspect prints the configured rate");
  check(r.output.find("channels=4") != std::string::npos ||
            r.output.find("channels=6") != std::string::npos,
        "inspect prints a configured channel count");

  // --- missing config file: exit 1, message names the path ---
  r = run(bin + " pretrain --config " + (work / "missing.cfg").string() +
          " --tokenizer-ckpt nowhere.ckpt");
  check(r.exit_code == 1, "missing config exits 1");
  check(r.output.find("missing.cfg") != std::string::npos, "error names the config path");

  // --- unknown config key: exit 1 ---
  write_file(work / "bad.cfg", "data.dir=corpus\ntokenizer.epoochs=2\n");
  r = run(bin + " train-tokenizer --config " + (work / "bad.cfg").string());
  check(r.exit_code == 1, "unknown config key exits 1");
  check(r.output.find("epoochs") != std::string::npos, "error names the unknown key");

  // --- tokenizer training determinism: identical CSV bytes ---
  const std::string tok_cfg =
      "data.dir=corpus\n"
      "model.preset=tiny\nmodel.tmax=8\n"
      "tokenizer.codebook_k=16\ntokenizer.codebook_d=8\ntokenizer.decoder_layers=1\n"
      "tokenizer.epochs=2\ntokenizer.batch_size=16\ntokenizer.peak_lr=1e-3\n"
      "tokenizer.warmup_epochs=1\n";
  write_file(work / "tok_a.cfg", tok_cfg + "tokenizer.out_ckpt=tok_a.ckpt\ntokenizer.csv=tok_a.csv\n");
  write_file(work / "tok_b.cfg", tok_cfg + "tokenizer.out_ckpt=tok_b.ckpt\ntokenizer.csv=tok_b.csv\n");
  r = run(bin + " train-tokenizer --config " + (work / "tok_a.cfg").string() + " --seed 3");
  check(r.exit_code == 0, "train-tokenizer exits 0");
  r = run(bin + " train-tokenizer --config " + (work / "tok_b.cfg").string() + " --seed 3");
  check(r.exit_code == 0, "train-tokenizer (second run) exits 0");
  const std::string csv_a = slurp(work / "tok_a.csv");
  std::string csv_b = slurp(work / "tok_b.csv");
  // Config hashes differ (different output names); compare bodies.
  auto body = [](const std::string& csv) {
    std::istringstream is(csv);
    std::string line, out;
    while (std::getline(is, line))
      if (line.empty() || line[0] != '#') out += line + "\n";
    return out;
  };
  check(!body(csv_a).empty(), "tokenizer CSV has a body");
  check(body(csv_a) == body(csv_b), "identical seeds reproduce tokenizer CSV bodies");

  // --- describe-ckpt on the tokenizer checkpoint ---
  r = run(bin + " describe-ckpt " + (work / "tok_a.ckpt").string());
  check(r.exit_code == 0, "describe-ckpt exits 0");
  check(r.output.find("vq.vectors") != std::string::npos, "checkpoint lists vq.vectors");
  check(r.output.find("enc.hidden_d=64") != std::string::npos, "checkpoint embeds the config");

  // --- pretrain (very short) ---
  write_file(work / "pre.cfg",
             "data.dir=corpus\nmodel.preset=tiny\nmodel.tmax=8\n"
             "pretrain.epochs=1\npretrain.batch_size=16\npretrain.warmup_epochs=0\n"
             "pretrain.out_ckpt=pre.ckpt\npretrain.csv=pre.csv\n");
  r = run(bin + " pretrain --config " + (work / "pre.cfg").string() + " --tokenizer-ckpt " +
          (work / "tok_a.ckpt").string() + " --seed 3");
  check(r.exit_code == 0, "pretrain exits 0");
  check(fs::exists(work / "pre.ckpt"), "pretrain writes a checkpoint");
  const std::string pre_csv = slurp(work / "pre.csv");
  check(pre_csv.find("epoch,loss,loss_sym,mem_accuracy,lr") != std::string::npos,
        "pretrain CSV carries the documented columns");
  check(pre_csv.find("config_sha1=") != std::string::npos, "CSV header carries the config hash");

  // --- finetune from the pretrained checkpoint + eval ---
  write_file(work / "task.cfg", "kind=multiclass\nclasses=4\nloss=ce\nmonitor=kappa\nfreeze=all\n");
  write_file(work / "ft.cfg",
             "data.dir=corpus\nmodel.preset=tiny\nmodel.tmax=8\n"
             "finetune.epochs=2\nfinetune.batch_size=16\nfinetune.peak_lr=2e-3\n"
             "finetune.warmup_epochs=0\nfinetune.drop_path=0\n"
             "finetune.out_ckpt=ft.ckpt\nfinetune.csv=ft.csv\n");
  r = run(bin + " finetune --config " + (work / "ft.cfg").string() + " --ckpt " +
          (work / "pre.ckpt").string() + " --task " + (work / "task.cfg").string() + " --seed 3");
  check(r.exit_code == 0, "finetune exits 0");
  check(fs::exists(work / "ft.ckpt"), "finetune writes a checkpoint");

  r = run(bin + " eval --ckpt " + (work / "ft.ckpt").string() + " --data " +
          (work / "corpus").string() + " --out " + (work / "eval.csv").string());
  check(r.exit_code == 0, "eval exits 0");
  check(r.output.find("balanced_accuracy") != std::string::npos, "eval prints a metric table");
  check(fs::exists(work / "eval.csv"), "eval writes a CSV");

  // --- spectrum ---
  r = run(bin + " spectrum " + (work / "corpus" / "rec_00001.eegr").string() + " --out " +
          (work / "spec.csv").string());
  check(r.exit_code == 0, "spectrum exits 0");
  check(slurp(work / "spec.csv").find("patch,channel,time,bin,amplitude,phase") !=
            std::string::npos,
        "spectrum CSV has the documented columns");

  // --- data error exit code ---
  r = run(bin + " inspect " + (work / "synth.cfg").string());
  check(r.exit_code == 2, "inspect on a non-EEGR file exits 2");

  std::printf("%s\n", failures == 0 ? "ALL CLI TESTS PASSED" : "CLI TESTS FAILED");
  return failures == 0 ? 0 : 1;
}
