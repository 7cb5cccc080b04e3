#include "neurocodec/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "neurocodec/errors.hpp"
#include "neurocodec/fft.hpp"
#include "neurocodec/rng.hpp"

namespace neurocodec {

namespace {

// Preferred montage order for synthetic recordings; the first k labels form a
// k-channel cap. Front half / back half are the spatial-mode groups.
const std::vector<std::string>& synth_montage() {
  static const std::vector<std::string> m = {"F3", "F4", "C3", "C4", "O1", "O2",
                                             "P3", "P4", "FZ", "CZ", "PZ", "OZ"};
  return m;
}

std::vector<double> pink_background(int64_t n, double rate, Rng& rng) {
  std::vector<fft::cplx> spec(static_cast<size_t>(n), fft::cplx(0, 0));
  const int64_t half = n / 2;
  for (int64_t m = 1; m <= half; ++m) {
    const double f = static_cast<double>(m) * rate / static_cast<double>(n);
    const double mag = 1.0 / std::sqrt(std::max(f, 1.0));
    const double re = rng.next_normal() * mag;
    const double im = rng.next_normal() * mag;
    spec[static_cast<size_t>(m)] = fft::cplx(re, im);
    if (m != n - m) spec[static_cast<size_t>(n - m)] = std::conj(spec[static_cast<size_t>(m)]);
  }
  auto x = fft::inverse_real(spec);
  double ss = 0;
  for (const double v : x) ss += v * v;
  const double sd = std::sqrt(ss / static_cast<double>(n));
  if (sd > 0)
    for (double& v : x) v /= sd;
  return x;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_classes < 2) throw ConfigError("synth: n_classes must be >= 2");
  const size_t bands_needed =
      spatial_mode ? static_cast<size_t>((n_classes + 1) / 2) : static_cast<size_t>(n_classes);
  if (class_bands.size() < bands_needed)
    throw ConfigError("synth: not enough class bands configured");
  for (size_t i = 0; i < bands_needed; ++i) {
    const auto& [lo, hi] = class_bands[i];
    if (lo >= hi || lo <= 0.1 || hi >= 75.0)
      throw ConfigError("synth: class band must be inside (0.1, 75) Hz");
    for (size_t j = 0; j < i; ++j) {
      const auto& [lo2, hi2] = class_bands[j];
      if (std::max(lo, lo2) < std::min(hi, hi2))
        throw ConfigError("synth: class bands must be disjoint");
    }
  }
  if (channel_options.empty()) throw ConfigError("synth: no channel options");
  for (const int c : channel_options)
    if (c < 1 || c > static_cast<int>(synth_montage().size()))
      throw ConfigError("synth: unsupported channel count");
  if (rate_hz <= 150.0) throw ConfigError("synth: rate must exceed 150 Hz for preprocessing");
}

std::vector<std::pair<EEGRecording, int>> synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const int64_t T = static_cast<int64_t>(std::llround(cfg.duration_s * cfg.rate_hz));
  std::vector<std::pair<EEGRecording, int>> out;
  out.reserve(static_cast<size_t>(cfg.n_recordings));
  for (int r = 0; r < cfg.n_recordings; ++r) {
    Rng rng(derive_seed(cfg.seed, "synth-rec", static_cast<uint64_t>(r)));
    const int label = r % cfg.n_classes;
    const int n_ch = cfg.channel_options[rng.next_below(cfg.channel_options.size())];
    std::vector<std::string> labels(synth_montage().begin(), synth_montage().begin() + n_ch);

    int band_idx = label;
    int tone_half = -1;  // -1: all channels
    if (cfg.spatial_mode) {
      band_idx = label / 2;
      tone_half = label % 2;
    }
    const auto& [lo, hi] = cfg.class_bands[static_cast<size_t>(band_idx)];
    const double freq = lo + rng.next_double() * (hi - lo);

    Tensor<float> data({n_ch, T});
    const double A = cfg.amplitude_volts;
    for (int c = 0; c < n_ch; ++c) {
      const double phase = rng.next_double() * 2.0 * M_PI;
      double tone_gain = 1.0;
      if (tone_half >= 0) {
        const bool in_front_half = c < n_ch / 2;
        tone_gain = (in_front_half == (tone_half == 0)) ? 1.0 : 0.0;
      }
      auto pink = pink_background(T, cfg.rate_hz, rng);
      for (int64_t n = 0; n < T; ++n) {
        const double tone =
            tone_gain * std::sin(2.0 * M_PI * freq * static_cast<double>(n) / cfg.rate_hz + phase);
        const double v = A * (tone + cfg.pink_scale * pink[static_cast<size_t>(n)] +
                              cfg.noise_std * rng.next_normal());
        data.at(c, n) = static_cast<float>(v);
      }
    }
    EEGRecording rec = make_recording(labels, cfg.rate_hz, std::move(data));
    rec.meta["id"] = "synth-" + std::to_string(r);
    rec.meta["label"] = std::to_string(label);
    out.emplace_back(std::move(rec), label);
  }
  return out;
}

int band_power_classify(const EEGRecording& rec,
                        const std::vector<std::pair<double, double>>& bands) {
  const int64_t C = rec.n_channels();
  const int64_t T = rec.n_samples();
  std::vector<double> power(bands.size(), 0.0);
  std::vector<double> x(static_cast<size_t>(T));
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < T; ++i) x[static_cast<size_t>(i)] = rec.data.at(c, i);
    const auto spec = fft::forward_real(x);
    for (int64_t m = 1; m <= T / 2; ++m) {
      const double f = static_cast<double>(m) * rec.rate_hz / static_cast<double>(T);
      for (size_t b = 0; b < bands.size(); ++b) {
        if (f >= bands[b].first && f <= bands[b].second)
          power[b] += std::norm(spec[static_cast<size_t>(m)]);
      }
    }
  }
  return static_cast<int>(std::max_element(power.begin(), power.end()) - power.begin());
}

DatasetSplit split_by_recording(const std::vector<int>& sample_to_recording,
                                const std::vector<double>& ratios, uint64_t seed) {
  if (ratios.empty() || ratios.size() > 3) throw SplitError("split expects 1..3 ratios");
  double total = 0;
  for (const double r : ratios) total += r;
  if (std::fabs(total - 1.0) > 1e-9) throw SplitError("split ratios must sum to 1");

  int n_rec = 0;
  for (const int r : sample_to_recording) n_rec = std::max(n_rec, r + 1);
  int nonzero = 0;
  for (const double r : ratios)
    if (r > 0) ++nonzero;
  if (n_rec < nonzero) throw SplitError("fewer recordings than nonzero ratio buckets");

  std::vector<int> order(static_cast<size_t>(n_rec));
  for (int i = 0; i < n_rec; ++i) order[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order);

  // Bucket boundaries by cumulative ratio over recordings.
  std::vector<int> bucket_of(static_cast<size_t>(n_rec), 0);
  double cum = 0;
  int start = 0;
  for (size_t b = 0; b < ratios.size(); ++b) {
    cum += ratios[b];
    const int end = (b + 1 == ratios.size())
                        ? n_rec
                        : static_cast<int>(std::llround(cum * static_cast<double>(n_rec)));
    for (int i = start; i < end; ++i) bucket_of[static_cast<size_t>(order[static_cast<size_t>(i)])] =
        static_cast<int>(b);
    start = end;
  }

  DatasetSplit split;
  for (size_t s = 0; s < sample_to_recording.size(); ++s) {
    const int b = bucket_of[static_cast<size_t>(sample_to_recording[s])];
    if (b == 0) split.train.push_back(static_cast<int>(s));
    else if (b == 1) split.valid.push_back(static_cast<int>(s));
    else split.test.push_back(static_cast<int>(s));
  }
  return split;
}

std::vector<int> Corpus::recording_of_samples() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.recording);
  return out;
}

Corpus corpus_from_recordings(const std::vector<std::pair<EEGRecording, int>>& recs,
                              const DataConfig& cfg) {
  Corpus corpus;
  corpus.n_recordings = static_cast<int>(recs.size());
  for (size_t r = 0; r < recs.size(); ++r) {
    const EEGRecording* rec = &recs[r].first;
    EEGRecording processed;
    if (cfg.run_preprocess) {
      processed = preprocess(*rec, cfg.pre);
      rec = &processed;
    }
    for (auto& smp : segment(*rec, cfg.sample_t, cfg.stride_s)) {
      CorpusSample cs;
      cs.grid = patchify(smp, cfg.patch_w);
      cs.label = recs[r].second;
      cs.recording = static_cast<int>(r);
      corpus.n_classes = std::max(corpus.n_classes, cs.label + 1);
      corpus.samples.push_back(std::move(cs));
    }
  }
  return corpus;
}

void write_corpus_dir(const std::string& dir,
                      const std::vector<std::pair<EEGRecording, int>>& recs) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream labels(fs::path(dir) / "labels.csv");
  if (!labels) throw FormatError("cannot write labels.csv in " + dir);
  labels << "filename,label\n";
  char name[32];
  for (size_t r = 0; r < recs.size(); ++r) {
    std::snprintf(name, sizeof(name), "rec_%05zu.eegr", r);
    write_recording((fs::path(dir) / name).string(), recs[r].first);
    labels << name << "," << recs[r].second << "\n";
  }
}

Corpus load_corpus_dir(const std::string& dir, const DataConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path labels_path = fs::path(dir) / "labels.csv";
  std::ifstream labels(labels_path);
  if (!labels) throw FormatError("cannot open " + labels_path.string());
  std::string line;
  std::getline(labels, line);  // header
  std::vector<std::pair<EEGRecording, int>> recs;
  while (std::getline(labels, line)) {
    if (line.empty()) continue;
    const size_t comma = line.rfind(',');
    if (comma == std::string::npos) throw FormatError("bad labels.csv line: " + line);
    const std::string fname = line.substr(0, comma);
    const int label = std::stoi(line.substr(comma + 1));
    recs.emplace_back(read_recording((fs::path(dir) / fname).string()), label);
  }
  if (recs.empty()) throw DataError("no recordings listed in " + labels_path.string());
  return corpus_from_recordings(recs, cfg);
}

std::vector<std::vector<int>> plan_batches(const std::vector<const PatchGrid*>& grids,
                                           int batch_size, uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  // Group key: (channel count, patches per channel).
  std::map<std::pair<int, int>, std::vector<int>> groups;
  for (size_t i = 0; i < grids.size(); ++i) {
    int per_channel = 0;
    for (const int k : grids[i]->tag_time) per_channel = std::max(per_channel, k);
    const int C = per_channel > 0 ? static_cast<int>(grids[i]->n()) / per_channel : 0;
    groups[{C, per_channel}].push_back(static_cast<int>(i));
  }
  std::vector<std::vector<int>> batches;
  uint64_t group_tag = 0;
  for (auto& [key, idx] : groups) {
    Rng rng(derive_seed(seed, "batch-group", group_tag++));
    rng.shuffle(idx);
    for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(batch_size)) {
      const size_t end = std::min(idx.size(), start + static_cast<size_t>(batch_size));
      batches.emplace_back(idx.begin() + static_cast<int64_t>(start),
                           idx.begin() + static_cast<int64_t>(end));
    }
  }
  Rng rng(derive_seed(seed, "batch-order"));
  rng.shuffle(batches);
  return batches;
}

}  // namespace neurocodec
