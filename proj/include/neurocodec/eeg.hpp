#ifndef NEUROCODEC_EEG_HPP
#define NEUROCODEC_EEG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "neurocodec/channels.hpp"
#include "neurocodec/tensor.hpp"

namespace neurocodec {

// A named multichannel recording. Values are stored in volts; unit scaling to
// 0.1 mV happens only in preprocess(), so files stay physical.
struct EEGRecording {
  std::vector<ChannelLabel> channels;
  double rate_hz = 0.0;
  Tensor<float> data;  // C x T, volts
  std::map<std::string, std::string> meta;

  int64_t n_channels() const { return data.shape.empty() ? 0 : data.dim(0); }
  int64_t n_samples() const { return data.ndim() < 2 ? 0 : data.dim(1); }
};

EEGRecording make_recording(const std::vector<std::string>& labels, double rate_hz,
                            Tensor<float> data);

// EEGR container (little-endian):
//   magic "EEGR", version u16=1, channel count u16, rate_hz f64,
//   per-channel label (u8 length + ASCII bytes),
//   meta block (u32 byte length, UTF-8 key=value lines),
//   payload C x T f32 row-major.
EEGRecording read_recording(const std::string& path);
void write_recording(const std::string& path, const EEGRecording& rec);

struct PreprocessConfig {
  double band_lo_hz = 0.1;
  double band_hi_hz = 75.0;
  double notch_hz = 50.0;        // 0 disables the notch
  double notch_halfwidth_hz = 1.0;
  double transition_hz = 1.0;    // raised-cosine transition width
  double target_rate_hz = 200.0;
  double unit_volts = 1e-4;      // output unit (0.1 mV)
};

// Zero-phase frequency-domain band-pass + notch, then resampling to the
// target rate (integer decimation when the ratio divides, spectral resample
// otherwise), then division by unit_volts.
EEGRecording preprocess(const EEGRecording& rec, const PreprocessConfig& cfg);

// A windowed cut of a recording; values are dimensionless after preprocess.
struct Sample {
  std::vector<ChannelLabel> channels;
  Tensor<float> data;  // C x t
  std::string source_id;
  int64_t offset = 0;  // column offset into the source recording
};

// Fixed-width channel patches. Patch i covers channel tag_channel[i]
// (registry index) at time slot tag_time[i] in [1, t/w].
struct PatchGrid {
  int64_t w = 0;
  Tensor<float> patches;         // N x w
  std::vector<int> tag_channel;  // registry indices
  std::vector<int> tag_time;     // 1-based time slots
  int64_t n() const { return patches.shape.empty() ? 0 : patches.dim(0); }
};

constexpr int64_t kMaxPatches = 256;

std::vector<Sample> segment(const EEGRecording& rec, int64_t t, int64_t s);
PatchGrid patchify(const Sample& sample, int64_t w);

}  // namespace neurocodec

#endif
