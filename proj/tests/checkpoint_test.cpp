#include <filesystem>

#include "core/nn/checkpoint.hpp"
#include "core/nn/layers.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ftc;
using namespace ftc_test;

namespace {

nn::ParamStore sample_store(uint64_t seed) {
  nn::ParamStore s;
  Rng rng(seed);
  nn::mlp_register(s, "net", {{4, 6, 2}}, rng);
  return s;
}

}  // namespace

TEST_CASE("checkpoint: round-trips values, order and metadata") {
  TempDir dir("ckpt");
  nn::ParamStore s = sample_store(1);
  nlohmann::json meta;
  meta["note"] = "round trip";
  meta["steps"] = 12345;
  const std::string prefix = dir.str() + "/model";
  nn::save_checkpoint(prefix, s, meta);
  CHECK(std::filesystem::exists(prefix + ".json"));
  CHECK(std::filesystem::exists(prefix + ".bin"));

  nn::ParamStore loaded;
  const nlohmann::json back = nn::load_checkpoint(prefix, loaded);
  CHECK(back["note"] == "round trip");
  CHECK(back["steps"] == 12345);
  REQUIRE(loaded.count() == s.count());
  for (int i = 0; i < s.count(); ++i) {
    CHECK(loaded.entry(i).name == s.entry(i).name);
    CHECK(loaded.entry(i).value.shape == s.entry(i).value.shape);
    CHECK(nn::tensors_identical(s, loaded, s.entry(i).name));
  }
}

TEST_CASE("checkpoint: hash is stable for equal content and moves when a value does") {
  TempDir dir("hash");
  nn::ParamStore s = sample_store(2);
  const std::string p1 = dir.str() + "/a";
  const std::string p2 = dir.str() + "/b";
  nn::save_checkpoint(p1, s, {});
  nn::save_checkpoint(p2, s, {});
  const std::string h1 = nn::checkpoint_hash(p1);
  CHECK(h1.size() == 64);
  CHECK(h1 == nn::checkpoint_hash(p2));

  s.value("net.l0.w").data[0] += 1.0f;
  const std::string p3 = dir.str() + "/c";
  nn::save_checkpoint(p3, s, {});
  CHECK(nn::checkpoint_hash(p3) != h1);
}

TEST_CASE("checkpoint: missing files are reported as missing artifacts") {
  nn::ParamStore s;
  CHECK_THROWS_AS(nn::load_checkpoint("/nonexistent/model", s), Error);
  CHECK_THROWS_AS(nn::checkpoint_hash("/nonexistent/model"), Error);
}

TEST_CASE("checkpoint: truncated blob is rejected") {
  TempDir dir("trunc");
  nn::ParamStore s = sample_store(3);
  const std::string prefix = dir.str() + "/model";
  nn::save_checkpoint(prefix, s, {});
  std::filesystem::resize_file(prefix + ".bin",
                               std::filesystem::file_size(prefix + ".bin") / 2);
  nn::ParamStore loaded;
  CHECK_THROWS_AS(nn::load_checkpoint(prefix, loaded), Error);
}

TEST_CASE("checkpoint: tensors_identical sees single-bit differences") {
  nn::ParamStore a = sample_store(4);
  nn::ParamStore b = sample_store(4);
  CHECK(nn::tensors_identical(a, b, "net.l0.w"));
  b.value("net.l0.w").data[3] = std::nextafter(b.value("net.l0.w").data[3], 1.0f);
  CHECK(!nn::tensors_identical(a, b, "net.l0.w"));
}
