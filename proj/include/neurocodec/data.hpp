#ifndef NEUROCODEC_DATA_HPP
#define NEUROCODEC_DATA_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "neurocodec/eeg.hpp"

namespace neurocodec {

// Synthetic EEG with controllable spectral class structure. Each recording is
// a class-band sinusoid (random frequency in the band, random phase per
// channel) over a 1/f-ish background plus white noise, scaled to +-1e-4 V.
struct SynthConfig {
  int n_classes = 4;
  std::vector<int> channel_options = {4, 6};
  double rate_hz = 200.0;
  double duration_s = 8.0;
  // canonical theta / alpha / beta / gamma
  std::vector<std::pair<double, double>> class_bands = {{4, 8}, {8, 13}, {13, 30}, {30, 50}};
  double noise_std = 0.1;   // white noise std relative to tone amplitude
  double pink_scale = 0.3;  // 1/f background std relative to tone amplitude
  int n_recordings = 1024;
  uint64_t seed = 1;
  double amplitude_volts = 1e-4;
  // When set, classes come in band-sharing pairs distinguished by which half
  // of the channels carries the tone. Channel identity then becomes part of
  // the label, which a channel-agnostic model cannot recover.
  bool spatial_mode = false;

  void validate() const;
};

std::vector<std::pair<EEGRecording, int>> synth_generate(const SynthConfig& cfg);

// Band-power rule classifier used to calibrate the corpus: argmax of summed
// spectral power over each class band.
int band_power_classify(const EEGRecording& rec,
                        const std::vector<std::pair<double, double>>& bands);

// Recording-level split: all samples of a recording land in one bucket.
struct DatasetSplit {
  std::vector<int> train, valid, test;
};

DatasetSplit split_by_recording(const std::vector<int>& sample_to_recording,
                                const std::vector<double>& ratios, uint64_t seed);

// ---------------------------------------------------------------------------
// corpus loading

struct DataConfig {
  int64_t sample_t = 800;   // 4 s at 200 Hz
  int64_t stride_s = 800;
  int64_t patch_w = 200;
  bool run_preprocess = true;
  PreprocessConfig pre;
};

struct CorpusSample {
  PatchGrid grid;
  int label = -1;
  int recording = -1;
};

struct Corpus {
  std::vector<CorpusSample> samples;
  int n_recordings = 0;
  int n_classes = 0;

  std::vector<int> recording_of_samples() const;
};

Corpus corpus_from_recordings(const std::vector<std::pair<EEGRecording, int>>& recs,
                              const DataConfig& cfg);

// Dataset directory layout: flat EEGR files + labels.csv (filename,label).
void write_corpus_dir(const std::string& dir,
                      const std::vector<std::pair<EEGRecording, int>>& recs);
Corpus load_corpus_dir(const std::string& dir, const DataConfig& cfg);

// ---------------------------------------------------------------------------
// shape-homogeneous batching

// Groups samples by identical (channel count, patches per channel), shuffles
// within groups and across batches, never pads or truncates.
std::vector<std::vector<int>> plan_batches(const std::vector<const PatchGrid*>& grids,
                                           int batch_size, uint64_t seed);

}  // namespace neurocodec

#endif
