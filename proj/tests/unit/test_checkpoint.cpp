#include <doctest.h>

#include <cstring>

#include "fixtures.hpp"
#include "nextmin/checkpoint.hpp"
#include "nextmin/error.hpp"
#include "random_inputs.hpp"

using namespace nextmin;
using namespace nextmin::testing;

namespace {

ErrorCode decode_error(std::string_view bytes, std::optional<std::uint64_t> hash = std::nullopt) {
  try {
    decode_checkpoint(bytes, hash);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("decode unexpectedly succeeded");
  return ErrorCode::io;
}

}  // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("save and load give bit-identical predictions") {
  TempDir dir("ckpt");
  const auto bundle = warmed_bundle(21);
  save_checkpoint(dir.path() / "m.ckpt", bundle);
  const auto loaded = load_checkpoint(dir.path() / "m.ckpt", bundle.catalog_hash);

  CHECK(loaded.model.shape() == bundle.model.shape());
  CHECK(loaded.model.parameters() == bundle.model.parameters());
  CHECK(loaded.model.buffers() == bundle.model.buffers());
  CHECK(loaded.mask == bundle.mask);
  CHECK(loaded.stats == bundle.stats);
  CHECK(loaded.k == bundle.k);
  CHECK(loaded.sample_seed == bundle.sample_seed);
  CHECK(loaded.thresholds == bundle.thresholds);
  CHECK(loaded.optimizer == bundle.optimizer);

  const auto& layout = bundle.model.shape().input;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto b = random_batch(layout, 7, 1 + i % 5, 1000 + i);
    REQUIRE(loaded.model.predict(b) == bundle.model.predict(b));
  }
}

TEST_CASE("encoding is deterministic") {
  const auto bundle = warmed_bundle(3);
  CHECK(encode_checkpoint(bundle) == encode_checkpoint(bundle));
  CHECK(encode_checkpoint(decode_checkpoint(encode_checkpoint(bundle))) == encode_checkpoint(bundle));
}

TEST_CASE("damaged checkpoints are rejected") {
  const auto bytes = encode_checkpoint(warmed_bundle(4));
  CHECK(decode_error(std::string_view(bytes).substr(0, bytes.size() / 2)) == ErrorCode::corrupt);
  CHECK(decode_error(std::string_view(bytes).substr(0, 5)) == ErrorCode::corrupt);

  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  CHECK(decode_error(flipped) == ErrorCode::corrupt);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK(decode_error(magic) == ErrorCode::corrupt);

  auto version = bytes;
  const std::uint32_t v = kCheckpointVersion + 1;
  std::memcpy(version.data() + 8, &v, sizeof v);
  CHECK(decode_error(version) == ErrorCode::version_mismatch);

  CHECK(decode_error(bytes + "x") == ErrorCode::corrupt);
}

TEST_CASE("a different catalog is refused") {
  const auto bundle = warmed_bundle(5);
  const auto bytes = encode_checkpoint(bundle);
  CHECK(decode_error(bytes, bundle.catalog_hash + 1) == ErrorCode::catalog_mismatch);
  CHECK_NOTHROW(decode_checkpoint(bytes, bundle.catalog_hash));
}

TEST_CASE("missing file") {
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/dir/m.ckpt"), Error);
}

}
