#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "medsuggest/rng.hpp"

namespace medsuggest {

/// Probabilities are kept inside [kProbFloor, 1 - kProbFloor] before any log.
inline constexpr double kProbFloor = 1e-7;

double clamp_probability(double p);

/// Per-action inclusion probabilities of a factorized subset policy.
class BernoulliVector {
 public:
  BernoulliVector() = default;
  /// Clamps every entry into [kProbFloor, 1 - kProbFloor].
  explicit BernoulliVector(std::vector<double> p);

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t a) const { return p_[a]; }
  std::span<const double> values() const { return p_; }

 private:
  std::vector<double> p_;
};

/// Subset of an action universe {0, ..., n-1}.
class ActionSet {
 public:
  ActionSet() = default;
  explicit ActionSet(std::size_t universe) : bits_(universe, 0) {}

  /// Bit a of `mask` selects action a; universe must be <= 64.
  static ActionSet from_mask(std::size_t universe, std::uint64_t mask);
  static ActionSet all(std::size_t universe);
  static ActionSet of(std::size_t universe, std::initializer_list<std::size_t> members);

  std::size_t universe() const { return bits_.size(); }
  bool contains(std::size_t a) const { return bits_.at(a) != 0; }
  void insert(std::size_t a) { bits_.at(a) = 1; }
  void erase(std::size_t a) { bits_.at(a) = 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  std::vector<std::size_t> members() const;

  friend bool operator==(const ActionSet&, const ActionSet&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Counts elementary per-action steps; lets tests assert linear work.
struct OpCounter {
  std::size_t visits = 0;
};

/// prod_{a in set} p_a * prod_{a not in set} (1 - p_a)
double subset_prob(const BernoulliVector& p, const ActionSet& set, OpCounter* ops = nullptr);

double log_subset_prob(const BernoulliVector& p, const ActionSet& set, OpCounter* ops = nullptr);

/// Independent Bernoulli draw per action.
ActionSet sample_subset(const BernoulliVector& p, Rng& rng);

/// {a : p_a >= 1/2}; the most probable subset, found in one pass.
ActionSet argmax_subset(const BernoulliVector& p, OpCounter* ops = nullptr);

/// Joint entropy of the independent components (sum of Bernoulli entropies).
double entropy_sum(const BernoulliVector& p, OpCounter* ops = nullptr);

/// d/dp_a of weight * log_subset_prob(p, set): weight/p_a inside the set,
/// -weight/(1-p_a) outside.
std::vector<double> grad_coefficients(const BernoulliVector& p, const ActionSet& set, double weight);

/// d/dp_a of entropy_sum(p): log((1-p_a)/p_a).
std::vector<double> entropy_sum_gradient(const BernoulliVector& p);

}  // namespace medsuggest
