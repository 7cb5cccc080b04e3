#ifndef NEUROCODEC_CHANNELS_HPP
#define NEUROCODEC_CHANNELS_HPP

#include <string>
#include <string_view>
#include <vector>

namespace neurocodec {

// Universal channel registry: the 62-channel extended 10-20 montage of the
// ESI NeuroScan system merged with the 23 TUH channel names, deduplicated and
// frozen in alphabetical order. registry_index is the position in this list.
struct ChannelLabel {
  std::string name;    // canonical uppercase form, e.g. "FP1", "CZ"
  int registry_index;  // stable index in [0, registry_size())
};

int registry_size();
const std::vector<std::string>& registry_labels();

// Canonicalizes (uppercases) and resolves a label. Throws RegistryError for
// names outside the registry.
ChannelLabel resolve_channel(std::string_view name);
bool registry_contains(std::string_view name);

// The same list as a text blob, one label per line (contents of the shipped
// registry file).
std::string registry_file_text();

}  // namespace neurocodec

#endif
