#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "neurocodec/channels.hpp"
#include "neurocodec/config.hpp"
#include "neurocodec/errors.hpp"
#include "neurocodec/hashutil.hpp"

using namespace neurocodec;

TEST_CASE("config: parsing, comments, defaults") {
  const RunConfig cfg = RunConfig::from_text(
      "# a comment\n"
      "data.dir = corpus   # trailing comment\n"
      "model.layers=2\n"
      "pretrain.mask_ratio=0.5\n"
      "\n",
      "/base");
  CHECK(cfg.get_str("data.dir", "") == "corpus");
  CHECK(cfg.get_int("model.layers", 0) == 2);
  CHECK(cfg.get_double("pretrain.mask_ratio", 0) == doctest::Approx(0.5));
  CHECK(cfg.get_int("missing.key", 42) == 42);
  CHECK(cfg.get_path("data.dir", "") == "/base/corpus");
}

TEST_CASE("config: unknown keys are hard errors") {
  const RunConfig cfg = RunConfig::from_text("model.layers=2\nmodel.depht=3\n", "");
  CHECK_THROWS_WITH_AS(cfg.check_known({"model.layers"}),
                       "unknown config key: model.depht", ConfigError);
}

TEST_CASE("config: duplicate keys and malformed lines rejected") {
  CHECK_THROWS_AS(RunConfig::from_text("a=1\na=2\n", ""), ConfigError);
  CHECK_THROWS_AS(RunConfig::from_text("just a line\n", ""), ConfigError);
}

TEST_CASE("config: typed getters validate") {
  const RunConfig cfg = RunConfig::from_text("x=abc\nb=true\nlist=4,6\n", "");
  CHECK_THROWS_AS(cfg.get_int("x", 0), ConfigError);
  CHECK(cfg.get_bool("b", false));
  CHECK(cfg.get_int_list("list", {}) == std::vector<int>{4, 6});
}

TEST_CASE("registry: frozen, sorted, and matches the shipped file") {
  CHECK(registry_size() == 70);
  const auto& labels = registry_labels();
  REQUIRE(labels.size() == 70);
  for (size_t i = 1; i < labels.size(); ++i) CHECK(labels[i - 1] < labels[i]);

  CHECK(resolve_channel("FP1").name == "FP1");
  CHECK(resolve_channel("fp1").name == "FP1");  // canonicalized
  CHECK(resolve_channel("CZ").registry_index ==
        static_cast<int>(std::find(labels.begin(), labels.end(), "CZ") - labels.begin()));
  CHECK_THROWS_AS(resolve_channel("XX99"), RegistryError);
  CHECK(registry_contains("T3"));   // TUH-only label
  CHECK(registry_contains("CB2"));  // NeuroScan-only label

  // Embedded registry matches the shipped text file.
  std::ifstream file(std::string(NEUROCODEC_SOURCE_DIR) + "/assets/channel_registry.txt");
  REQUIRE(file.good());
  std::string file_text((std::istreambuf_iterator<char>(file)),
                        std::istreambuf_iterator<char>());
  CHECK(file_text == registry_file_text());
}

TEST_CASE("hash: git-style blob hash matches the known empty-ish vector") {
  // sha1("blob 0\0") is the well-known empty-blob hash.
  CHECK(blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}
