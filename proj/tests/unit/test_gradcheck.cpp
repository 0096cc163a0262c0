#include <doctest.h>

#include "nextmin/error.hpp"
#include "nextmin/gradcheck.hpp"

using namespace nextmin;

TEST_SUITE("gradcheck") {

TEST_CASE("random model passes with the standard step") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto fx = make_gradcheck_fixture(seed);
    const auto r = grad_check(fx.model, fx.batch, fx.targets, fx.loss, {1e-5, 100000, seed});
    // Every coordinate except the frozen PAD row.
    const auto& table = fx.model.parameters()[fx.model.embedding_index()];
    CHECK(r.checked == fx.model.parameter_count() - table.cols);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("linear-only model with gamma 0 is nearly exact") {
  auto fx = make_gradcheck_fixture(4, 12, {}, 5, 3, 0.0, false);
  const auto r = grad_check(fx.model, fx.batch, fx.targets, fx.loss, {1e-5, 100000, 4});
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("parameters and running statistics are restored") {
  auto fx = make_gradcheck_fixture(5);
  const auto params = fx.model.parameters();
  const auto buffers = fx.model.buffers();
  grad_check(fx.model, fx.batch, fx.targets, fx.loss, {1e-5, 50, 5});
  CHECK(fx.model.parameters() == params);
  CHECK(fx.model.buffers() == buffers);
}

TEST_CASE("degenerate step is rejected") {
  auto fx = make_gradcheck_fixture(6);
  CHECK_THROWS_AS(grad_check(fx.model, fx.batch, fx.targets, fx.loss, {0.0, 10, 0}), Error);
}

}
