#include "neurocodec/hashutil.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "neurocodec/errors.hpp"

namespace neurocodec {

namespace {

std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

}  // namespace

std::string blob_hash(const std::string& bytes) {
  std::string prefixed = "blob " + std::to_string(bytes.size());
  prefixed.push_back('\0');
  prefixed += bytes;
  return sha1_hex(prefixed);
}

std::string blob_hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open for hashing: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return blob_hash(ss.str());
}

std::string dir_content_hash(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  std::string listing;
  for (const auto& n : names)
    listing += n + " " + blob_hash_file((fs::path(dir) / n).string()) + "\n";
  return blob_hash(listing);
}

}  // namespace neurocodec
