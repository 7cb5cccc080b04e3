#include "neurocodec/channels.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "neurocodec/errors.hpp"

namespace neurocodec {

namespace {

// 70 labels: ESI NeuroScan 62-channel montage + TUH's A1/A2/T1-T6, sorted.
constexpr std::array<const char*, 70> kRegistry = {
    "A1",  "A2",  "AF3", "AF4", "C1",  "C2",  "C3",  "C4",  "C5",  "C6",
    "CB1", "CB2", "CP1", "CP2", "CP3", "CP4", "CP5", "CP6", "CPZ", "CZ",
    "F1",  "F2",  "F3",  "F4",  "F5",  "F6",  "F7",  "F8",  "FC1", "FC2",
    "FC3", "FC4", "FC5", "FC6", "FCZ", "FP1", "FP2", "FPZ", "FT7", "FT8",
    "FZ",  "O1",  "O2",  "OZ",  "P1",  "P2",  "P3",  "P4",  "P5",  "P6",
    "P7",  "P8",  "PO3", "PO4", "PO5", "PO6", "PO7", "PO8", "POZ", "PZ",
    "T1",  "T2",  "T3",  "T4",  "T5",  "T6",  "T7",  "T8",  "TP7", "TP8"};

std::string canonical(std::string_view name) {
  std::string up(name);
  std::transform(up.begin(), up.end(), up.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return up;
}

int find_index(const std::string& up) {
  const auto it = std::lower_bound(kRegistry.begin(), kRegistry.end(), up,
                                   [](const char* a, const std::string& b) { return std::string_view(a) < b; });
  if (it != kRegistry.end() && up == *it) return static_cast<int>(it - kRegistry.begin());
  return -1;
}

}  // namespace

int registry_size() { return static_cast<int>(kRegistry.size()); }

const std::vector<std::string>& registry_labels() {
  static const std::vector<std::string> labels(kRegistry.begin(), kRegistry.end());
  return labels;
}

ChannelLabel resolve_channel(std::string_view name) {
  const std::string up = canonical(name);
  const int idx = find_index(up);
  if (idx < 0) throw RegistryError("channel label not in registry: " + std::string(name));
  return ChannelLabel{up, idx};
}

bool registry_contains(std::string_view name) { return find_index(canonical(name)) >= 0; }

std::string registry_file_text() {
  std::string out;
  for (const char* l : kRegistry) {
    out += l;
    out += '\n';
  }
  return out;
}

}  // namespace neurocodec
