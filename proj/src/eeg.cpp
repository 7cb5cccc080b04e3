#include "neurocodec/eeg.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "neurocodec/errors.hpp"
#include "neurocodec/fft.hpp"

namespace neurocodec {

namespace {

constexpr char kMagic[4] = {'E', 'E', 'G', 'R'};
constexpr uint16_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
  // Build the byte image explicitly so the format is endian-stable.
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw FormatError(std::string("truncated file while reading ") + what);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

void validate_recording(const EEGRecording& rec) {
  std::set<std::string> seen;
  for (const auto& ch : rec.channels) {
    if (!registry_contains(ch.name))
      throw RegistryError("channel label not in registry: " + ch.name);
    if (!seen.insert(ch.name).second)
      throw FormatError("duplicate channel label: " + ch.name);
  }
  if (rec.data.ndim() != 2) throw FormatError("recording data must be a C x T matrix");
  if (rec.data.dim(0) != static_cast<int64_t>(rec.channels.size()))
    throw FormatError("data row count does not match channel count");
  if (rec.data.dim(1) < 1) throw FormatError("recording must have T >= 1");
}

}  // namespace

EEGRecording make_recording(const std::vector<std::string>& labels, double rate_hz,
                            Tensor<float> data) {
  EEGRecording rec;
  rec.channels.reserve(labels.size());
  for (const auto& l : labels) rec.channels.push_back(resolve_channel(l));
  rec.rate_hz = rate_hz;
  rec.data = std::move(data);
  validate_recording(rec);
  return rec;
}

void write_recording(const std::string& path, const EEGRecording& rec) {
  validate_recording(rec);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_le<uint16_t>(os, kVersion);
  write_le<uint16_t>(os, static_cast<uint16_t>(rec.channels.size()));
  write_le<double>(os, rec.rate_hz);
  for (const auto& ch : rec.channels) {
    if (ch.name.size() > 255) throw FormatError("channel label too long");
    write_le<uint8_t>(os, static_cast<uint8_t>(ch.name.size()));
    os.write(ch.name.data(), static_cast<std::streamsize>(ch.name.size()));
  }
  std::string meta;
  for (const auto& [k, v] : rec.meta) meta += k + "=" + v + "\n";
  write_le<uint32_t>(os, static_cast<uint32_t>(meta.size()));
  os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  os.write(reinterpret_cast<const char*>(rec.data.ptr()),
           static_cast<std::streamsize>(rec.data.numel() * sizeof(float)));
  if (!os) throw FormatError("write failed: " + path);
}

EEGRecording read_recording(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad magic, not an EEGR file: " + path);
  const auto version = read_le<uint16_t>(is, "version");
  if (version != kVersion)
    throw FormatError("unsupported EEGR version " + std::to_string(version));
  const auto n_channels = read_le<uint16_t>(is, "channel count");
  if (n_channels == 0) throw FormatError("EEGR file declares zero channels");
  const double rate = read_le<double>(is, "rate_hz");

  EEGRecording rec;
  rec.rate_hz = rate;
  for (int c = 0; c < n_channels; ++c) {
    const auto len = read_le<uint8_t>(is, "label length");
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw FormatError("truncated channel label");
    rec.channels.push_back(resolve_channel(name));  // RegistryError on unknown
  }
  const auto meta_len = read_le<uint32_t>(is, "meta length");
  std::string meta(meta_len, '\0');
  is.read(meta.data(), meta_len);
  if (!is) throw FormatError("truncated meta block");
  size_t pos = 0;
  while (pos < meta.size()) {
    size_t eol = meta.find('\n', pos);
    if (eol == std::string::npos) eol = meta.size();
    const std::string line = meta.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("meta line without '=': " + line);
    rec.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }

  const std::streampos payload_start = is.tellg();
  is.seekg(0, std::ios::end);
  const int64_t payload_bytes = static_cast<int64_t>(is.tellg() - payload_start);
  is.seekg(payload_start);
  const int64_t row_bytes = static_cast<int64_t>(n_channels) * static_cast<int64_t>(sizeof(float));
  if (payload_bytes <= 0 || payload_bytes % row_bytes != 0)
    throw FormatError("payload size " + std::to_string(payload_bytes) +
                      " is not a positive multiple of " + std::to_string(row_bytes));
  const int64_t T = payload_bytes / row_bytes;
  rec.data = Tensor<float>({n_channels, T});
  is.read(reinterpret_cast<char*>(rec.data.ptr()),
          static_cast<std::streamsize>(payload_bytes));
  if (!is) throw FormatError("truncated payload");
  validate_recording(rec);
  return rec;
}

namespace {

// Raised-cosine pass mask: 0 outside [lo, hi], smooth transitions of width tr
// just inside the band edges.
double band_gain(double f, double lo, double hi, double tr) {
  if (f <= lo || f >= hi) return 0.0;
  if (f < lo + tr) return 0.5 * (1.0 - std::cos(M_PI * (f - lo) / tr));
  if (f > hi - tr) return 0.5 * (1.0 - std::cos(M_PI * (hi - f) / tr));
  return 1.0;
}

double notch_gain(double f, double f0, double hw, double tr) {
  const double d = std::fabs(f - f0);
  if (d <= hw) return 0.0;
  if (d < hw + tr) return 0.5 * (1.0 - std::cos(M_PI * (d - hw) / tr));
  return 1.0;
}

std::vector<double> filter_channel(const std::vector<double>& x, double rate,
                                   const PreprocessConfig& cfg) {
  const size_t n = x.size();
  auto spec = fft::forward_real(x);
  for (size_t m = 0; m < n; ++m) {
    // Frequency of bin m, folded to [0, rate/2].
    double f = static_cast<double>(m) * rate / static_cast<double>(n);
    if (f > rate / 2.0) f = rate - f;
    double g = band_gain(f, cfg.band_lo_hz, cfg.band_hi_hz, cfg.transition_hz);
    if (cfg.notch_hz > 0.0) g *= notch_gain(f, cfg.notch_hz, cfg.notch_halfwidth_hz, cfg.transition_hz);
    spec[m] *= g;
  }
  return fft::inverse_real(spec);
}

// Spectral resample of a band-limited signal to n2 samples. The caller
// guarantees no content at or above the new Nyquist.
std::vector<double> spectral_resample(const std::vector<double>& x, int64_t n2) {
  const int64_t n1 = static_cast<int64_t>(x.size());
  auto X = fft::forward_real(x);
  std::vector<fft::cplx> Y(static_cast<size_t>(n2), fft::cplx(0, 0));
  const double s = static_cast<double>(n2) / static_cast<double>(n1);
  const int64_t half = std::min((n1 - 1) / 2, (n2 - 1) / 2);
  Y[0] = X[0] * s;
  for (int64_t m = 1; m <= half; ++m) {
    Y[static_cast<size_t>(m)] = X[static_cast<size_t>(m)] * s;
    Y[static_cast<size_t>(n2 - m)] = X[static_cast<size_t>(n1 - m)] * s;
  }
  return fft::inverse_real(Y);
}

}  // namespace

EEGRecording preprocess(const EEGRecording& rec, const PreprocessConfig& cfg) {
  if (cfg.band_lo_hz >= cfg.band_hi_hz)
    throw ConfigError("band edges inverted: lo >= hi");
  if (cfg.band_hi_hz >= rec.rate_hz / 2.0)
    throw ConfigError("band upper edge must stay below the input Nyquist frequency");
  if (cfg.target_rate_hz > rec.rate_hz)
    throw ResampleError("target rate exceeds input rate (upsampling unsupported)");
  if (cfg.target_rate_hz <= 0.0) throw ConfigError("target rate must be positive");

  const int64_t C = rec.n_channels();
  const int64_t T = rec.n_samples();
  const double ratio = rec.rate_hz / cfg.target_rate_hz;
  const int64_t int_ratio = static_cast<int64_t>(std::llround(ratio));
  const bool integer = std::fabs(ratio - static_cast<double>(int_ratio)) < 1e-9;
  const int64_t T2 = integer ? (T + int_ratio - 1) / int_ratio
                             : static_cast<int64_t>(std::llround(
                                   static_cast<double>(T) * cfg.target_rate_hz / rec.rate_hz));
  if (T2 < 1) throw ResampleError("recording too short to resample");

  EEGRecording out;
  out.channels = rec.channels;
  out.rate_hz = cfg.target_rate_hz;
  out.meta = rec.meta;
  out.data = Tensor<float>({C, T2});

  std::vector<double> row(static_cast<size_t>(T));
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < T; ++i) row[static_cast<size_t>(i)] = rec.data.at(c, i);
    std::vector<double> filtered = filter_channel(row, rec.rate_hz, cfg);
    std::vector<double> resampled;
    if (integer && int_ratio == 1) {
      resampled = std::move(filtered);
    } else if (integer) {
      resampled.reserve(static_cast<size_t>(T2));
      for (int64_t i = 0; i < T; i += int_ratio) resampled.push_back(filtered[static_cast<size_t>(i)]);
    } else {
      resampled = spectral_resample(filtered, T2);
    }
    for (int64_t i = 0; i < T2; ++i)
      out.data.at(c, i) = static_cast<float>(resampled[static_cast<size_t>(i)] / cfg.unit_volts);
  }
  return out;
}

std::vector<Sample> segment(const EEGRecording& rec, int64_t t, int64_t s) {
  const int64_t T = rec.n_samples();
  if (t < 1 || s < 1) throw SegmentError("window and stride must be >= 1");
  if (t > T) throw SegmentError("window t=" + std::to_string(t) + " exceeds T=" + std::to_string(T));
  const int64_t count = (T - t) / s + 1;
  std::vector<Sample> out;
  out.reserve(static_cast<size_t>(count));
  const int64_t C = rec.n_channels();
  const auto id_it = rec.meta.find("id");
  const std::string rec_id = id_it != rec.meta.end() ? id_it->second : std::string("recording");
  for (int64_t i = 0; i < count; ++i) {
    Sample smp;
    smp.channels = rec.channels;
    smp.data = Tensor<float>({C, t});
    const int64_t off = i * s;
    for (int64_t c = 0; c < C; ++c)
      std::memcpy(&smp.data.at(c, 0), &rec.data.at(c, off), static_cast<size_t>(t) * sizeof(float));
    smp.source_id = rec_id;
    smp.offset = off;
    out.push_back(std::move(smp));
  }
  return out;
}

PatchGrid patchify(const Sample& sample, int64_t w) {
  if (w < 1) throw SegmentError("patch width must be >= 1");
  const int64_t C = sample.data.dim(0);
  const int64_t t = sample.data.dim(1);
  if (t < w) throw SegmentError("sample shorter than patch width");
  const int64_t per_channel = t / w;
  const int64_t N = C * per_channel;
  if (N > kMaxPatches)
    throw SequenceLengthError("patch count " + std::to_string(N) + " exceeds cap " +
                              std::to_string(kMaxPatches));
  PatchGrid grid;
  grid.w = w;
  grid.patches = Tensor<float>({N, w});
  grid.tag_channel.resize(static_cast<size_t>(N));
  grid.tag_time.resize(static_cast<size_t>(N));
  int64_t p = 0;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t k = 1; k <= per_channel; ++k, ++p) {
      std::memcpy(&grid.patches.at(p, 0), &sample.data.at(c, (k - 1) * w),
                  static_cast<size_t>(w) * sizeof(float));
      grid.tag_channel[static_cast<size_t>(p)] = sample.channels[static_cast<size_t>(c)].registry_index;
      grid.tag_time[static_cast<size_t>(p)] = static_cast<int>(k);
    }
  }
  return grid;
}

}  // namespace neurocodec
