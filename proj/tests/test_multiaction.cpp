#include <cmath>
#include <map>

#include "doctest.h"
#include "support.hpp"

#include "medsuggest/multiaction.hpp"

using namespace medsuggest;

namespace {

std::vector<double> random_probs(Rng& rng, std::size_t n, double lo = 0.0, double hi = 1.0) {
  std::vector<double> p(n);
  for (auto& x : p) x = lo + (hi - lo) * rng.uniform();
  return p;
}

// Product over mask bits, written independently of the library.
double oracle_prob(const std::vector<double>& p, std::uint64_t mask) {
  double prod = 1.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    const double pa = std::clamp(p[a], kProbFloor, 1.0 - kProbFloor);
    prod *= (mask >> a) & 1 ? pa : 1.0 - pa;
  }
  return prod;
}

}  // namespace

TEST_SUITE("multiaction") {

TEST_CASE("subset probability examples") {
  const BernoulliVector p({0.9, 0.2});
  CHECK(subset_prob(p, ActionSet::of(2, {0})) == doctest::Approx(0.72).epsilon(1e-15));
  const BernoulliVector nearly_one({1.0, 1.0, 1.0});
  CHECK(nearly_one[0] == 1.0 - kProbFloor);
  CHECK(subset_prob(nearly_one, ActionSet::all(3)) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(subset_prob(nearly_one, ActionSet::all(3)) < 1.0);
}

TEST_CASE("universe mismatch is rejected") {
  const BernoulliVector p({0.5, 0.5});
  CHECK_THROWS_AS(subset_prob(p, ActionSet(3)), std::invalid_argument);
  CHECK_THROWS_AS(BernoulliVector({0.5, std::nan("")}), std::invalid_argument);
}

TEST_CASE("normalization by enumeration for universes up to 12") {
  Rng rng(1);
  for (std::size_t n = 1; n <= 12; ++n)
    for (int rep = 0; rep < 5; ++rep) {
      const BernoulliVector p(random_probs(rng, n));
      double total = 0.0;
      for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) total += subset_prob(p, ActionSet::from_mask(n, mask));
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
}

TEST_CASE("subset_prob agrees with the oracle product") {
  Rng rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.index(10);
    const auto raw = random_probs(rng, n);
    const BernoulliVector p(raw);
    const std::uint64_t mask = rng.next_u64() & ((1ULL << n) - 1);
    CHECK(subset_prob(p, ActionSet::from_mask(n, mask)) == doctest::Approx(oracle_prob(raw, mask)).epsilon(1e-14));
  }
}

TEST_CASE("argmax examples") {
  CHECK(argmax_subset(BernoulliVector({0.6, 0.5, 0.3})) == ActionSet::of(3, {0, 1}));
  CHECK(argmax_subset(BernoulliVector({0.49, 0.1, 0.0})).empty());
  CHECK(argmax_subset(BernoulliVector({1.0, 0.99})) == ActionSet::all(2));
}

TEST_CASE("argmax attains the enumerated maximum, ties included") {
  Rng rng(3);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t n = 1 + rng.index(12);
    auto raw = random_probs(rng, n);
    for (auto& x : raw)
      if (rng.bernoulli(0.25)) x = 0.5;
    const BernoulliVector p(raw);
    double best = 0.0;
    for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) best = std::max(best, oracle_prob(raw, mask));
    const auto chosen = argmax_subset(p);
    CHECK(std::abs(subset_prob(p, chosen) - best) <= 1e-12);
    for (std::size_t a = 0; a < n; ++a) CHECK(chosen.contains(a) == (p[a] >= 0.5));
  }
}

TEST_CASE("log_subset_prob") {
  const BernoulliVector half({0.5, 0.5});
  for (std::uint64_t m = 0; m < 4; ++m)
    CHECK(log_subset_prob(half, ActionSet::from_mask(2, m)) == doctest::Approx(-1.3862943611198906).epsilon(1e-14));
  Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 1 + rng.index(12);
    const BernoulliVector p(random_probs(rng, n));
    const auto set = sample_subset(p, rng);
    CHECK(std::abs(std::exp(log_subset_prob(p, set)) - subset_prob(p, set)) <= 1e-12);
  }
  // stays finite at the clamp
  const BernoulliVector extreme({0.0, 1.0});
  CHECK(std::isfinite(log_subset_prob(extreme, ActionSet::of(2, {0}))));
}

TEST_CASE("entropy") {
  CHECK(entropy_sum(BernoulliVector({0.5})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(entropy_sum(BernoulliVector({0.0})) < 2e-6);
  CHECK(entropy_sum(BernoulliVector({0.0})) >= 0.0);

  Rng rng(5);
  for (std::size_t n = 1; n <= 10; ++n) {
    const auto raw = random_probs(rng, n);
    const BernoulliVector p(raw);
    double joint = 0.0;
    for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
      const double q = oracle_prob(raw, mask);
      joint -= q * std::log(q);
    }
    CHECK(std::abs(entropy_sum(p) - joint) < 1e-9);
    CHECK(entropy_sum(p) <= static_cast<double>(n) * std::log(2.0) + 1e-12);
  }
}

TEST_CASE("sampling frequencies") {
  SUBCASE("p = [delta, delta] gives the empty set") {
    Rng rng(6);
    const BernoulliVector p({0.0, 0.0});
    std::size_t nonempty = 0;
    for (int i = 0; i < 10000; ++i) nonempty += !sample_subset(p, rng).empty();
    CHECK(nonempty == 0);
  }
  SUBCASE("p = 0.5^3: each subset 1/8 within 3 sigma") {
    // per-bin 3 sigma over 8 bins fails ~2% of seeds for an exact sampler
    Rng rng(17);
    const BernoulliVector p({0.5, 0.5, 0.5});
    std::vector<std::size_t> counts(8, 0);
    const std::size_t n = 100000;
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = sample_subset(p, rng);
      std::size_t mask = 0;
      for (auto a : s.members()) mask |= std::size_t{1} << a;
      ++counts[mask];
    }
    for (auto c : counts) CHECK(testsupport::within_binomial(c, n, 0.125));
  }
  SUBCASE("chi-square against the product formula for a skewed vector") {
    Rng rng(8);
    const std::vector<double> raw{0.8, 0.3, 0.55};
    const BernoulliVector p(raw);
    std::vector<std::size_t> counts(8, 0);
    for (int i = 0; i < 100000; ++i) {
      const auto s = sample_subset(p, rng);
      std::size_t mask = 0;
      for (auto a : s.members()) mask |= std::size_t{1} << a;
      ++counts[mask];
    }
    std::vector<double> probs(8);
    for (std::uint64_t m = 0; m < 8; ++m) probs[m] = oracle_prob(raw, m);
    CHECK(testsupport::chi_square_p(counts, probs) > 0.01);
  }
}

TEST_CASE("grad_coefficients") {
  Rng rng(9);
  const BernoulliVector p(random_probs(rng, 6, 0.05, 0.95));
  CHECK(grad_coefficients(p, ActionSet::of(6, {1, 4}), 0.0) == std::vector<double>(6, 0.0));

  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 1 + rng.index(8);
    auto raw = random_probs(rng, n, 0.05, 0.95);
    const BernoulliVector base(raw);
    const auto set = sample_subset(base, rng);
    const double weight = 2.0 * rng.uniform() - 1.0;
    const auto g = grad_coefficients(base, set, weight);
    for (std::size_t a = 0; a < n; ++a) {
      const double h = 1e-5;
      auto up = raw, dn = raw;
      up[a] += h;
      dn[a] -= h;
      const double fd =
          weight * (log_subset_prob(BernoulliVector(up), set) - log_subset_prob(BernoulliVector(dn), set)) / (2 * h);
      CHECK(testsupport::rel_err(g[a], fd) <= 1e-6);
      // sign: weight * (positive inside, negative outside)
      if (weight != 0.0) CHECK(((g[a] > 0) == (weight > 0)) == set.contains(a));
    }
  }
}

TEST_CASE("entropy gradient matches finite differences") {
  Rng rng(10);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 1 + rng.index(8);
    const auto raw = random_probs(rng, n, 0.05, 0.95);
    const auto g = entropy_sum_gradient(BernoulliVector(raw));
    for (std::size_t a = 0; a < n; ++a) {
      const double h = 1e-5;
      auto up = raw, dn = raw;
      up[a] += h;
      dn[a] -= h;
      const double fd = (entropy_sum(BernoulliVector(up)) - entropy_sum(BernoulliVector(dn))) / (2 * h);
      CHECK(std::abs(g[a] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
  // maximum at 0.5
  CHECK(std::abs(entropy_sum_gradient(BernoulliVector({0.5}))[0]) < 1e-15);
}

TEST_CASE("linear passes: one visit per action") {
  Rng rng(11);
  for (std::size_t n : {1, 2, 7, 64, 500}) {
    const BernoulliVector p(random_probs(rng, n));
    ActionSet set(n);
    OpCounter a, b, c, d;
    subset_prob(p, set, &a);
    log_subset_prob(p, set, &b);
    argmax_subset(p, &c);
    entropy_sum(p, &d);
    CHECK(a.visits == n);
    CHECK(b.visits == n);
    CHECK(c.visits == n);
    CHECK(d.visits == n);
  }
}

TEST_CASE("action set basics") {
  auto s = ActionSet::of(5, {0, 3});
  CHECK(s.count() == 2);
  CHECK(s.members() == std::vector<std::size_t>{0, 3});
  s.insert(4);
  s.erase(0);
  CHECK(s == ActionSet::from_mask(5, 0b11000));
  CHECK_THROWS(s.contains(5));
  CHECK_THROWS_AS(ActionSet::from_mask(65, 1), std::invalid_argument);
  CHECK(ActionSet::all(3).count() == 3);
}

}  // TEST_SUITE
