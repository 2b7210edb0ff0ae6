#include <cmath>
#include <numeric>

#include "doctest.h"
#include "support.hpp"

#include "medsuggest/net.hpp"

using namespace medsuggest;

namespace {

NetConfig desk32() {
  NetConfig c;
  c.input_dim = 32;
  c.encoder = {32, 16};
  c.decoder_hidden = 12;
  c.head_out = {9, 5, 6, 12};
  return c;
}

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * (2.0 * rng.uniform() - 1.0);
  return v;
}

// Scalar objective whose gradient w.r.t. each head's logits is `c`.
double linear_objective(const Params& params, std::span<const double> obs, const HeadGradients& c) {
  const auto fr = forward(params, obs);
  double sum = 0.0;
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    const auto logits = fr.cache.logits(static_cast<Head>(h));
    for (std::size_t i = 0; i < c[h].size(); ++i) sum += c[h][i] * logits[i];
  }
  return sum;
}

}  // namespace

TEST_SUITE("net") {

TEST_CASE("parameter count in closed form") {
  NetConfig c;
  c.input_dim = 32;
  c.encoder = {64, 32};
  c.decoder_hidden = 16;
  c.head_out = {22, 6, 10, 26};
  std::size_t expected = (32 * 64 + 64) + (64 * 32 + 32);
  for (auto out : c.head_out) expected += (32 * 16 + 16) + (16 * out + out);
  CHECK(parameter_count(c) == expected);
  CHECK(Params(c).size() == expected);

  const auto shapes = layer_shapes(c);
  CHECK(shapes[0].in == 32);
  CHECK(shapes[hidden_layer(Head::Dis)].in == 32);
  CHECK(shapes[output_layer(Head::Dis)].out == 10);
  for (std::size_t l = 1; l < kNumLayers; ++l)
    CHECK(shapes[l].weight_offset == shapes[l - 1].bias_offset + shapes[l - 1].out);
}

TEST_CASE("parameter count is linear in the number of tests") {
  const auto world_doc = testsupport::tiny_world_doc();
  auto count_for = [&](std::size_t tests) {
    NetConfig c = desk32();
    c.head_out[static_cast<std::size_t>(Head::Med)] = tests;
    return static_cast<long>(parameter_count(c));
  };
  const long d1 = count_for(11) - count_for(10);
  CHECK(count_for(20) - count_for(10) == 10 * d1);
  CHECK(count_for(100) - count_for(10) == 90 * d1);
  CHECK(d1 == static_cast<long>(12 + 1));
}

TEST_CASE("config from a world and validation") {
  const auto world = testsupport::tiny_world();
  const auto c = NetConfig::for_world(world, {8, 4}, 3);
  CHECK(c.input_dim == 3 + 1 + 2);
  CHECK(c.head_out == std::array<std::size_t, 4>{5, 1, 2, 4});
  CHECK(NetConfig::full(world).encoder == std::array<std::size_t, 2>{2048, 1024});
  CHECK(NetConfig::full(world).decoder_hidden == 1024);
  CHECK(NetConfig::desk(world).encoder == std::array<std::size_t, 2>{256, 128});
  auto bad = c;
  bad.encoder[1] = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  auto mismatch = c;
  mismatch.head_out[2] = 3;
  CHECK_THROWS_AS(mismatch.check_matches(world), std::invalid_argument);
}

TEST_CASE("initialization") {
  const auto c = desk32();
  Rng a(9), b(9);
  const auto pa = init_params(c, a);
  CHECK(pa == init_params(c, b));
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    const auto& shape = pa.layers()[l];
    const double bound = std::sqrt(6.0 / static_cast<double>(shape.in + shape.out));
    double max_abs = 0.0;
    for (double w : pa.weights(l)) max_abs = std::max(max_abs, std::abs(w));
    CHECK(max_abs <= bound);
    CHECK(max_abs > 0.5 * bound);
    for (double v : pa.bias(l)) CHECK(v == 0.0);
  }
}

TEST_CASE("zero params give uniform heads") {
  const auto c = desk32();
  const Params zero(c);
  Rng rng(1);
  const auto fr = forward(zero, random_vec(rng, 32));
  for (double p : fr.outputs.pi_sym) CHECK(p == doctest::Approx(1.0 / 9.0));
  for (double p : fr.outputs.pi_dis) CHECK(p == doctest::Approx(1.0 / 6.0));
  for (double p : fr.outputs.pi_med.values()) CHECK(p == 0.5);
  for (double p : fr.outputs.z) CHECK(p == 0.5);
}

TEST_CASE("output invariants for random params and inputs") {
  const auto c = desk32();
  Rng rng(2);
  for (int rep = 0; rep < 50; ++rep) {
    auto params = init_params(c, rng);
    auto vals = params.mutable_values();
    for (auto& v : vals) v *= 1.0 + 4.0 * rng.uniform();
    const auto fr = forward(params, random_vec(rng, 32, 3.0));
    CHECK(std::accumulate(fr.outputs.pi_sym.begin(), fr.outputs.pi_sym.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::accumulate(fr.outputs.pi_dis.begin(), fr.outputs.pi_dis.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    for (double p : fr.outputs.pi_med.values()) CHECK((p > 0.0 && p < 1.0));
    // z is an unclamped sigmoid and may saturate in double precision
    for (double p : fr.outputs.z) CHECK((p >= 0.0 && p <= 1.0));
  }
}

TEST_CASE("scaling the input by zero equals the zero vector") {
  const auto c = desk32();
  Rng rng(3);
  const auto params = init_params(c, rng);
  auto obs = random_vec(rng, 32);
  for (auto& x : obs) x *= 0.0;
  const auto a = forward(params, obs);
  const auto b = forward(params, std::vector<double>(32, 0.0));
  CHECK(a.outputs.pi_sym == b.outputs.pi_sym);
  CHECK(a.outputs.z == b.outputs.z);
}

TEST_CASE("shape mismatch and stale caches are rejected") {
  const auto c = desk32();
  Rng rng(4);
  auto params = init_params(c, rng);
  CHECK_THROWS_AS(forward(params, std::vector<double>(31, 0.0)), std::invalid_argument);
  const auto fr = forward(params, random_vec(rng, 32));
  HeadGradients hg;
  hg[0] = std::vector<double>(9, 1.0);
  CHECK_NOTHROW(backward(params, fr.cache, hg));
  params.mutable_values()[0] += 1.0;
  CHECK_THROWS_AS(backward(params, fr.cache, hg), StaleCache);
  const Params other = init_params(c, rng);
  const auto fr2 = forward(other, random_vec(rng, 32));
  CHECK_THROWS_AS(backward(params, fr2.cache, hg), StaleCache);
  HeadGradients wrong;
  wrong[1] = std::vector<double>(3, 1.0);
  const auto fr3 = forward(params, random_vec(rng, 32));
  CHECK_THROWS_AS(backward(params, fr3.cache, wrong), std::invalid_argument);
}

TEST_CASE("backward: zero and linearity") {
  const auto c = desk32();
  Rng rng(5);
  const auto params = init_params(c, rng);
  const auto fr = forward(params, random_vec(rng, 32));
  const auto zero = backward(params, fr.cache, HeadGradients{});
  CHECK(std::all_of(zero.begin(), zero.end(), [](double g) { return g == 0.0; }));

  HeadGradients one, two;
  one[2] = random_vec(rng, 6);
  two[2] = one[2];
  for (auto& x : two[2]) x *= 2.0;
  const auto g1 = backward(params, fr.cache, one);
  const auto g2 = backward(params, fr.cache, two);
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-14));

  // heads accumulate additively into the shared encoder
  HeadGradients a, b, ab;
  a[0] = random_vec(rng, 9);
  b[3] = random_vec(rng, 12);
  ab[0] = a[0];
  ab[3] = b[3];
  const auto ga = backward(params, fr.cache, a), gb = backward(params, fr.cache, b), gab = backward(params, fr.cache, ab);
  for (std::size_t i = 0; i < gab.size(); ++i) CHECK(gab[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));
}

TEST_CASE("backward matches central finite differences on a 32-unit net") {
  const auto c = desk32();
  Rng rng(6);
  auto params = init_params(c, rng);
  {
    auto vals = params.mutable_values();
    for (auto& v : vals) v += 0.05 * (2.0 * rng.uniform() - 1.0);  // nonzero biases
  }
  const auto obs = random_vec(rng, 32);
  HeadGradients coef;
  for (std::size_t h = 0; h < kNumHeads; ++h) coef[h] = random_vec(rng, c.head_out[h]);
  const auto fr = forward(params, obs);
  const auto grads = backward(params, fr.cache, coef);

  std::size_t probes = 0;
  double worst = 0.0;
  for (std::size_t l = 0; l < kNumLayers; ++l) {
    const auto& shape = params.layers()[l];
    for (int rep = 0; rep < 8; ++rep) {
      const bool bias = rep % 4 == 3;
      const std::size_t idx = bias ? shape.bias_offset + rng.index(shape.out)
                                   : shape.weight_offset + rng.index(shape.in * shape.out);
      const double h = 1e-6;
      Params up = params, dn = params;
      up.mutable_values()[idx] += h;
      dn.mutable_values()[idx] -= h;
      const double fd = (linear_objective(up, obs, coef) - linear_objective(dn, obs, coef)) / (2 * h);
      const double err = std::abs(fd - grads[idx]) / std::max({std::abs(fd), std::abs(grads[idx]), 1e-3});
      worst = std::max(worst, err);
      ++probes;
    }
  }
  CHECK(probes >= 50);
  CHECK(worst <= 1e-4);
}

TEST_CASE("policy_for_stage") {
  const auto c = desk32();
  Rng rng(7);
  const auto params = init_params(c, rng);
  const auto out = forward(params, random_vec(rng, 32)).outputs;
  CHECK(policy_for_stage(out, Stage::Sym).categorical == out.pi_sym);
  CHECK(policy_for_stage(out, Stage::Dis).categorical == out.pi_dis);
  CHECK(policy_for_stage(out, Stage::Med).bernoulli.values()[0] == out.pi_med[0]);

  std::vector<std::uint8_t> blocked(9, 0);
  blocked[2] = 1;
  const auto masked = policy_for_stage(out, Stage::Sym, blocked).categorical;
  CHECK(masked[2] == 0.0);
  CHECK(std::accumulate(masked.begin(), masked.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  const double keep = 1.0 - out.pi_sym[2];
  for (std::size_t i = 0; i < 9; ++i)
    if (i != 2) CHECK(masked[i] == doctest::Approx(out.pi_sym[i] / keep).epsilon(1e-12));
  CHECK_THROWS(policy_for_stage(out, Stage::Terminal));
}

}  // TEST_SUITE
