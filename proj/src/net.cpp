#include "medsuggest/net.hpp"

#include <algorithm>
#include <cmath>

#include "medsuggest/kernels.hpp"

namespace medsuggest {

NetConfig NetConfig::for_world(const WorldModel& world, std::array<std::size_t, 2> encoder,
                               std::size_t decoder_hidden) {
  const auto& schema = world.schema();
  NetConfig c;
  c.input_dim = schema.observation_dim();
  c.encoder = encoder;
  c.decoder_hidden = decoder_hidden;
  c.head_out = {schema.num_symptoms() + 2, schema.num_tests(), world.num_diseases(),
                schema.num_abnormality_slots()};
  return c;
}

void NetConfig::validate() const {
  if (input_dim == 0 || encoder[0] == 0 || encoder[1] == 0 || decoder_hidden == 0)
    throw std::invalid_argument("NetConfig: all widths must be >= 1");
  if (head_out[0] < 3 || head_out[2] == 0 || head_out[3] == 0)
    throw std::invalid_argument("NetConfig: head sizes are inconsistent");
}

void NetConfig::check_matches(const WorldModel& world) const {
  const auto expected = for_world(world, encoder, decoder_hidden);
  if (expected.input_dim != input_dim || expected.head_out != head_out)
    throw std::invalid_argument("NetConfig: network shape does not match the world schema");
}

std::array<LayerShape, kNumLayers> layer_shapes(const NetConfig& c) {
  std::array<LayerShape, kNumLayers> layers{};
  std::size_t offset = 0;
  auto place = [&](std::size_t idx, std::size_t in, std::size_t out) {
    layers[idx] = {in, out, offset, offset + in * out};
    offset += in * out + out;
  };
  place(0, c.input_dim, c.encoder[0]);
  place(1, c.encoder[0], c.encoder[1]);
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    place(2 + 2 * h, c.encoder[1], c.decoder_hidden);
    place(3 + 2 * h, c.decoder_hidden, c.head_out[h]);
  }
  return layers;
}

std::size_t parameter_count(const NetConfig& c) {
  const auto layers = layer_shapes(c);
  return layers.back().bias_offset + layers.back().out;
}

Params::Params(NetConfig config) : config_(config) {
  config_.validate();
  layers_ = layer_shapes(config_);
  values_.assign(parameter_count(config_), 0.0);
}

std::span<const double> Params::weights(std::size_t layer) const {
  const auto& l = layers_.at(layer);
  return std::span<const double>(values_).subspan(l.weight_offset, l.in * l.out);
}

std::span<const double> Params::bias(std::size_t layer) const {
  const auto& l = layers_.at(layer);
  return std::span<const double>(values_).subspan(l.bias_offset, l.out);
}

Params init_params(const NetConfig& config, Rng& rng) {
  Params p(config);
  auto values = p.mutable_values();
  for (const auto& l : p.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    for (std::size_t i = 0; i < l.in * l.out; ++i) values[l.weight_offset + i] = bound * (2.0 * rng.uniform() - 1.0);
  }
  return p;
}

namespace {

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

}  // namespace

ForwardResult forward(const Params& params, std::span<const double> obs) {
  const auto& cfg = params.config();
  if (obs.size() != cfg.input_dim)
    throw std::invalid_argument("forward: observation length " + std::to_string(obs.size()) + " != input dim " +
                                std::to_string(cfg.input_dim));
  const auto& k = kernels::active();
  const auto& layers = params.layers();
  const auto theta = params.values();

  ForwardResult r;
  auto& cache = r.cache;
  cache.params = &params;
  cache.params_version = params.version();
  cache.input.assign(obs.begin(), obs.end());

  auto apply = [&](std::size_t idx, const std::vector<double>& x, bool rectify) {
    const auto& l = layers[idx];
    auto& y = cache.activations[idx];
    y.resize(l.out);
    k.affine(theta.data() + l.weight_offset, theta.data() + l.bias_offset, x.data(), y.data(), l.out, l.in);
    if (rectify) relu_inplace(y);
  };
  apply(0, cache.input, true);
  apply(1, cache.activations[0], true);
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    apply(2 + 2 * h, cache.activations[1], true);
    apply(3 + 2 * h, cache.activations[2 + 2 * h], false);
  }

  auto& out = r.outputs;
  out.pi_sym = softmax(cache.logits(Head::Sym));
  out.pi_dis = softmax(cache.logits(Head::Dis));
  const auto med = cache.logits(Head::Med);
  std::vector<double> med_p(med.size());
  for (std::size_t i = 0; i < med.size(); ++i) med_p[i] = sigmoid(med[i]);
  out.pi_med = BernoulliVector(std::move(med_p));
  const auto z = cache.logits(Head::Rebuild);
  out.z.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out.z[i] = sigmoid(z[i]);
  return r;
}

void backward(const Params& params, const ForwardCache& cache, const HeadGradients& head_grads,
              std::span<double> grads) {
  if (cache.params != &params || cache.params_version != params.version())
    throw StaleCache("backward: cache was produced by different or since-modified parameters");
  if (grads.size() != params.size()) throw std::invalid_argument("backward: gradient buffer has wrong size");
  const auto& k = kernels::active();
  const auto& layers = params.layers();
  const auto theta = params.values();
  const auto& cfg = params.config();

  std::vector<double> d_enc1(cfg.encoder[1], 0.0);
  bool any_head = false;
  std::vector<double> d_hidden(cfg.decoder_hidden);
  for (std::size_t h = 0; h < kNumHeads; ++h) {
    const auto& dlogit = head_grads[h];
    if (dlogit.empty()) continue;
    const auto& lo = layers[3 + 2 * h];
    const auto& lh = layers[2 + 2 * h];
    if (dlogit.size() != lo.out) throw std::invalid_argument("backward: head gradient has wrong length");
    any_head = true;
    const auto& hidden = cache.activations[2 + 2 * h];
    k.accumulate_outer(dlogit.data(), hidden.data(), grads.data() + lo.weight_offset, grads.data() + lo.bias_offset,
                       lo.out, lo.in);
    std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
    k.affine_backward_input(theta.data() + lo.weight_offset, dlogit.data(), d_hidden.data(), lo.out, lo.in);
    for (std::size_t i = 0; i < d_hidden.size(); ++i)
      if (hidden[i] <= 0.0) d_hidden[i] = 0.0;
    k.accumulate_outer(d_hidden.data(), cache.activations[1].data(), grads.data() + lh.weight_offset,
                       grads.data() + lh.bias_offset, lh.out, lh.in);
    k.affine_backward_input(theta.data() + lh.weight_offset, d_hidden.data(), d_enc1.data(), lh.out, lh.in);
  }
  if (!any_head) return;

  const auto& l1 = layers[1];
  const auto& l0 = layers[0];
  for (std::size_t i = 0; i < d_enc1.size(); ++i)
    if (cache.activations[1][i] <= 0.0) d_enc1[i] = 0.0;
  k.accumulate_outer(d_enc1.data(), cache.activations[0].data(), grads.data() + l1.weight_offset,
                     grads.data() + l1.bias_offset, l1.out, l1.in);
  std::vector<double> d_enc0(cfg.encoder[0], 0.0);
  k.affine_backward_input(theta.data() + l1.weight_offset, d_enc1.data(), d_enc0.data(), l1.out, l1.in);
  for (std::size_t i = 0; i < d_enc0.size(); ++i)
    if (cache.activations[0][i] <= 0.0) d_enc0[i] = 0.0;
  k.accumulate_outer(d_enc0.data(), cache.input.data(), grads.data() + l0.weight_offset,
                     grads.data() + l0.bias_offset, l0.out, l0.in);
}

std::vector<double> backward(const Params& params, const ForwardCache& cache, const HeadGradients& head_grads) {
  std::vector<double> grads(params.size(), 0.0);
  backward(params, cache, head_grads, grads);
  return grads;
}

StagePolicy policy_for_stage(const PolicyOutputs& outputs, Stage stage, std::span<const std::uint8_t> sym_blocked) {
  StagePolicy p;
  p.stage = stage;
  switch (stage) {
    case Stage::Sym: {
      p.categorical = outputs.pi_sym;
      if (!sym_blocked.empty()) {
        if (sym_blocked.size() != p.categorical.size())
          throw std::invalid_argument("policy_for_stage: mask length does not match pi_sym");
        double total = 0.0;
        for (std::size_t i = 0; i < p.categorical.size(); ++i) {
          if (sym_blocked[i]) p.categorical[i] = 0.0;
          total += p.categorical[i];
        }
        if (!(total > 0.0)) throw std::invalid_argument("policy_for_stage: every action is masked");
        for (double& x : p.categorical) x /= total;
      }
      break;
    }
    case Stage::Med: p.bernoulli = outputs.pi_med; break;
    case Stage::Dis: p.categorical = outputs.pi_dis; break;
    case Stage::Terminal: throw IllegalAction("policy_for_stage: terminal state has no policy");
  }
  return p;
}

}  // namespace medsuggest
