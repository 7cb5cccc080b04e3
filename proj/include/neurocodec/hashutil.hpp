#ifndef NEUROCODEC_HASHUTIL_HPP
#define NEUROCODEC_HASHUTIL_HPP

#include <string>
#include <vector>

namespace neurocodec {

// Git-style content hash: SHA-1 over "blob <len>\0<bytes>", hex-encoded.
std::string blob_hash(const std::string& bytes);
std::string blob_hash_file(const std::string& path);

// Combined hash of a dataset directory: hash of the sorted
// "<name> <file-hash>\n" listing.
std::string dir_content_hash(const std::string& dir);

}  // namespace neurocodec

#endif
