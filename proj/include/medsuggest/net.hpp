#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "medsuggest/env.hpp"
#include "medsuggest/multiaction.hpp"
#include "medsuggest/rng.hpp"

namespace medsuggest {

/// The four decoders on top of the shared encoder.
enum class Head : std::size_t { Sym = 0, Med = 1, Dis = 2, Rebuild = 3 };
inline constexpr std::size_t kNumHeads = 4;

struct NetConfig {
  std::size_t input_dim = 0;
  std::array<std::size_t, 2> encoder{256, 128};
  std::size_t decoder_hidden = 128;
  std::array<std::size_t, kNumHeads> head_out{};  // sym, med, dis, rebuild

  std::size_t out(Head h) const { return head_out[static_cast<std::size_t>(h)]; }

  /// Head sizes derived from a world: |symptoms|+2, |tests|, |diseases|,
  /// |symptoms|+|tests|.
  static NetConfig for_world(const WorldModel& world, std::array<std::size_t, 2> encoder,
                             std::size_t decoder_hidden);
  static NetConfig desk(const WorldModel& world) { return for_world(world, {256, 128}, 128); }
  static NetConfig full(const WorldModel& world) { return for_world(world, {2048, 1024}, 1024); }

  /// Throws std::invalid_argument on a zero width.
  void validate() const;
  /// Throws std::invalid_argument if head sizes disagree with the world.
  void check_matches(const WorldModel& world) const;

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Location of one affine layer inside the flat parameter vector; weights are
/// row-major out x in.
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

/// Layer order: encoder 0, encoder 1, then (hidden, output) for each head.
inline constexpr std::size_t kNumLayers = 2 + 2 * kNumHeads;
inline constexpr std::size_t hidden_layer(Head h) { return 2 + 2 * static_cast<std::size_t>(h); }
inline constexpr std::size_t output_layer(Head h) { return 3 + 2 * static_cast<std::size_t>(h); }

std::array<LayerShape, kNumLayers> layer_shapes(const NetConfig& config);
std::size_t parameter_count(const NetConfig& config);

/// Network weights as one flat vector. `version` changes whenever the values
/// are modified through mutable_values(), which invalidates forward caches.
class Params {
 public:
  Params() = default;
  explicit Params(NetConfig config);  // all zeros

  const NetConfig& config() const { return config_; }
  const std::array<LayerShape, kNumLayers>& layers() const { return layers_; }
  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() {
    ++version_;
    return values_;
  }
  std::size_t size() const { return values_.size(); }
  std::uint64_t version() const { return version_; }

  std::span<const double> weights(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;

  friend bool operator==(const Params& a, const Params& b) {
    return a.config_ == b.config_ && a.values_ == b.values_;
  }

 private:
  NetConfig config_;
  std::array<LayerShape, kNumLayers> layers_{};
  std::vector<double> values_;
  std::uint64_t version_ = 0;
};

/// Scaled uniform fan-in initialization, bound sqrt(6/(fan_in+fan_out)); zero biases.
Params init_params(const NetConfig& config, Rng& rng);

struct PolicyOutputs {
  std::vector<double> pi_sym;  // softmax over queries, q1, q2
  BernoulliVector pi_med;      // sigmoid per test
  std::vector<double> pi_dis;  // softmax over diseases
  std::vector<double> z;       // sigmoid rebuild vector
};

class StaleCache : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Activations retained by forward() for backward().
struct ForwardCache {
  const Params* params = nullptr;
  std::uint64_t params_version = 0;
  std::vector<double> input;
  std::array<std::vector<double>, kNumLayers> activations;  // post-ReLU for hidden, logits for outputs

  std::span<const double> logits(Head h) const { return activations[output_layer(h)]; }
};

struct ForwardResult {
  PolicyOutputs outputs;
  ForwardCache cache;
};

ForwardResult forward(const Params& params, std::span<const double> obs);

/// Gradients with respect to each head's logits; an empty vector means zero.
using HeadGradients = std::array<std::vector<double>, kNumHeads>;

/// Accumulates d(objective)/d(params) into `grads` (same layout as params).
void backward(const Params& params, const ForwardCache& cache, const HeadGradients& head_grads,
              std::span<double> grads);
std::vector<double> backward(const Params& params, const ForwardCache& cache, const HeadGradients& head_grads);

/// The distribution acting in a stage. For SYM, entries of `sym_blocked`
/// that are nonzero are zeroed and the rest renormalized.
struct StagePolicy {
  Stage stage = Stage::Sym;
  std::vector<double> categorical;  // SYM and DIS
  BernoulliVector bernoulli;        // MED
};

StagePolicy policy_for_stage(const PolicyOutputs& outputs, Stage stage,
                             std::span<const std::uint8_t> sym_blocked = {});

}  // namespace medsuggest
