#include <cstring>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

#include "medsuggest/checkpoint.hpp"

using namespace medsuggest;

namespace {

Checkpoint sample_checkpoint() {
  const auto world = testsupport::tiny_world();
  Rng rng(11);
  Checkpoint c{init_params(NetConfig::for_world(world, {7, 5}, 3), rng), 42, false};
  // awkward bit patterns: subnormal, negative zero, large magnitude
  auto v = c.params.mutable_values();
  v[0] = 4.9e-324;
  v[1] = -0.0;
  v[2] = 1.0e300;
  v[3] = 0.1;
  return c;
}

std::string serialize(const Checkpoint& c) {
  std::ostringstream out;
  write_checkpoint(c, out);
  return out.str();
}

Checkpoint deserialize(const std::string& bytes) {
  std::istringstream in(bytes);
  return read_checkpoint(in);
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("round trip is bit-exact") {
  const auto c = sample_checkpoint();
  const auto back = deserialize(serialize(c));
  CHECK(back == c);
  REQUIRE(back.params.size() == c.params.size());
  CHECK(std::memcmp(back.params.values().data(), c.params.values().data(), c.params.size() * sizeof(double)) == 0);
  CHECK(std::signbit(back.params.values()[1]));
  CHECK(back.step == 42);
  CHECK_FALSE(back.tests_enabled);
  CHECK(serialize(back) == serialize(c));
}

TEST_CASE("files round trip and fingerprints track content") {
  const auto c = sample_checkpoint();
  const auto path = std::filesystem::temp_directory_path() / "medsuggest_ckpt_test.bin";
  save_checkpoint(c, path);
  CHECK(load_checkpoint(path) == c);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), CheckpointError);

  const auto fp = checkpoint_fingerprint(c);
  CHECK(fp.size() == 16);
  CHECK(fp.find_first_not_of("0123456789abcdef") == std::string::npos);
  auto other = c;
  other.params.mutable_values()[5] += 1e-12;
  CHECK(checkpoint_fingerprint(other) != fp);
  CHECK(checkpoint_fingerprint(deserialize(serialize(c))) == fp);
}

TEST_CASE("corruption is detected") {
  const auto bytes = serialize(sample_checkpoint());
  SUBCASE("bad magic") {
    auto b = bytes;
    b[0] = 'X';
    CHECK_THROWS_WITH_AS(deserialize(b), doctest::Contains("magic"), CheckpointError);
  }
  SUBCASE("flipped parameter bit") {
    auto b = bytes;
    b[b.size() - 20] ^= 0x01;
    CHECK_THROWS_WITH_AS(deserialize(b), doctest::Contains("checksum"), CheckpointError);
  }
  SUBCASE("truncation") {
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1})
      CHECK_THROWS_AS(deserialize(bytes.substr(0, cut)), CheckpointError);
  }
  SUBCASE("trailing bytes") {
    CHECK_THROWS_AS(deserialize(bytes + "x"), CheckpointError);
  }
}

}  // TEST_SUITE
