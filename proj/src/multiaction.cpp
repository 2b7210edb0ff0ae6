#include "medsuggest/multiaction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace medsuggest {

double clamp_probability(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

BernoulliVector::BernoulliVector(std::vector<double> p) : p_(std::move(p)) {
  for (double& x : p_) {
    if (std::isnan(x)) throw std::invalid_argument("BernoulliVector: NaN probability");
    x = clamp_probability(x);
  }
}

ActionSet ActionSet::from_mask(std::size_t universe, std::uint64_t mask) {
  if (universe > 64) throw std::invalid_argument("ActionSet::from_mask: universe exceeds 64");
  ActionSet s(universe);
  for (std::size_t a = 0; a < universe; ++a)
    if ((mask >> a) & 1u) s.bits_[a] = 1;
  return s;
}

ActionSet ActionSet::all(std::size_t universe) {
  ActionSet s(universe);
  std::fill(s.bits_.begin(), s.bits_.end(), std::uint8_t{1});
  return s;
}

ActionSet ActionSet::of(std::size_t universe, std::initializer_list<std::size_t> members) {
  ActionSet s(universe);
  for (auto a : members) s.insert(a);
  return s;
}

std::size_t ActionSet::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> ActionSet::members() const {
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < bits_.size(); ++a)
    if (bits_[a]) out.push_back(a);
  return out;
}

namespace {

void check_universe(const BernoulliVector& p, const ActionSet& set) {
  if (p.size() != set.universe()) throw std::invalid_argument("action set universe does not match policy size");
}

}  // namespace

double subset_prob(const BernoulliVector& p, const ActionSet& set, OpCounter* ops) {
  check_universe(p, set);
  double prob = 1.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    prob *= set.contains(a) ? p[a] : 1.0 - p[a];
    if (ops) ++ops->visits;
  }
  return prob;
}

double log_subset_prob(const BernoulliVector& p, const ActionSet& set, OpCounter* ops) {
  check_universe(p, set);
  double lp = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    lp += set.contains(a) ? std::log(p[a]) : std::log1p(-p[a]);
    if (ops) ++ops->visits;
  }
  return lp;
}

ActionSet sample_subset(const BernoulliVector& p, Rng& rng) {
  ActionSet set(p.size());
  for (std::size_t a = 0; a < p.size(); ++a)
    if (rng.bernoulli(p[a])) set.insert(a);
  return set;
}

ActionSet argmax_subset(const BernoulliVector& p, OpCounter* ops) {
  ActionSet set(p.size());
  for (std::size_t a = 0; a < p.size(); ++a) {
    if (p[a] >= 0.5) set.insert(a);
    if (ops) ++ops->visits;
  }
  return set;
}

double entropy_sum(const BernoulliVector& p, OpCounter* ops) {
  double h = 0.0;
  for (std::size_t a = 0; a < p.size(); ++a) {
    const double q = p[a];
    h -= q * std::log(q) + (1.0 - q) * std::log1p(-q);
    if (ops) ++ops->visits;
  }
  return h;
}

std::vector<double> grad_coefficients(const BernoulliVector& p, const ActionSet& set, double weight) {
  check_universe(p, set);
  std::vector<double> g(p.size());
  for (std::size_t a = 0; a < p.size(); ++a)
    g[a] = set.contains(a) ? weight / p[a] : -weight / (1.0 - p[a]);
  return g;
}

std::vector<double> entropy_sum_gradient(const BernoulliVector& p) {
  std::vector<double> g(p.size());
  for (std::size_t a = 0; a < p.size(); ++a) g[a] = std::log1p(-p[a]) - std::log(p[a]);
  return g;
}

}  // namespace medsuggest
