#pragma once

#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "maso/layers.hpp"

namespace maso::detail {

// Calls f(layer_index, name, span) for every trainable array, in the order
// shared by parameters() and Gradients.
template <class Net, class F>
void for_each_param(Net& net, F&& f) {
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    auto& layer = net.layers[i];
    const std::string p = "layer" + std::to_string(i) + ".";
    auto conv = [&](auto& c, const std::string& prefix) {
      f(i, prefix + "filters", c.filters.data());
      f(i, prefix + "bias", std::span(c.bias));
    };
    if (auto* d = std::get_if<Dense>(&layer)) {
      f(i, p + "weight", d->weight.data());
      f(i, p + "bias", std::span(d->bias));
    } else if (auto* c = std::get_if<Conv>(&layer)) {
      conv(*c, p);
    } else if (auto* a = std::get_if<Activation>(&layer)) {
      if (!a->beta_logit.empty()) f(i, p + "beta_logit", std::span(a->beta_logit));
    } else if (auto* bn = std::get_if<BatchNorm>(&layer)) {
      f(i, p + "scale", std::span(bn->scale));
      f(i, p + "shift", std::span(bn->shift));
    } else if (auto* s = std::get_if<SkipBlock>(&layer)) {
      conv(s->conv, p + "conv.");
      if (!s->activation.beta_logit.empty()) f(i, p + "activation.beta_logit", std::span(s->activation.beta_logit));
      conv(s->skip, p + "skip.");
      if (!s->skip_bias.empty()) f(i, p + "skip_bias", std::span(s->skip_bias));
    }
  }
}

/// Index of the first gradient slot of every layer (one past the end appended).
inline std::vector<std::size_t> param_offsets(const Network& net) {
  std::vector<std::size_t> counts(net.layers.size() + 1, 0);
  for_each_param(net, [&](std::size_t i, const std::string&, auto) { ++counts[i + 1]; });
  for (std::size_t i = 1; i < counts.size(); ++i) counts[i] += counts[i - 1];
  return counts;
}

/// Off-diagonal Gram energy Σ_{i≠j} <row_i,row_j>² of a row-major block.
double row_gram_energy(std::span<const double> rows, std::size_t count, std::size_t dim);

/// Adds λ·∂(energy)/∂rows into grad and returns the unweighted energy.
double add_row_gram_penalty(std::span<const double> rows, std::size_t count, std::size_t dim, double weight,
                            std::span<double> grad);

}  // namespace maso::detail
