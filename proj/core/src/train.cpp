#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "learn_detail.hpp"
#include "maso/errors.hpp"
#include "maso/learn.hpp"

namespace maso {

namespace {

constexpr double kBnMomentum = 0.9;

bool gs_eligible(const LayerSpec& layer) {
  const auto* d = std::get_if<Dense>(&layer);
  return d != nullptr && d->weight.rows() <= d->weight.cols();
}

void check_config(const TrainConfig& c) {
  if (!(c.adam.learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  if (c.epochs < 1) throw DomainError("epochs must be at least 1");
  if (c.batch_size < 1) throw DomainError("batch size must be at least 1");
  if (c.gamma < 0.0 || c.lambda < 0.0) throw DomainError("penalty weights must be nonnegative");
  if (!(c.lr_decay > 0.0)) throw DomainError("learning-rate decay must be positive");
}

void check_data(const Network& net, const Dataset& data) {
  if (data.size() == 0) throw DomainError("empty dataset");
  if (data.features() != numel(net.input_shape)) {
    throw ShapeError("dataset has " + std::to_string(data.features()) + " features, network expects " +
                     std::to_string(numel(net.input_shape)));
  }
  if (data.labels.size() != data.size()) throw ShapeError("one label per point is required");
  if (!all_finite(data.points.data())) throw DomainError("dataset contains non-finite features");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] >= net.class_count) {
      throw DomainError("label " + std::to_string(data.labels[i]) + " of point " + std::to_string(i) +
                        " exceeds the class count");
    }
  }
}

void attach_beta_logits(Network& net) {
  const auto shapes = layer_shapes(net);
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (auto* a = std::get_if<Activation>(&net.layers[i])) {
      if (a->beta_logit.empty()) a->beta_logit.assign(numel(shapes[i]), 0.0);
    } else if (auto* s = std::get_if<SkipBlock>(&net.layers[i])) {
      if (s->activation.beta_logit.empty()) s->activation.beta_logit.assign(numel(shapes[i]), 0.0);
    }
  }
}

bool has_batchnorm(const Network& net) {
  return std::any_of(net.layers.begin(), net.layers.end(),
                     [](const LayerSpec& l) { return std::holds_alternative<BatchNorm>(l); });
}

// Network actually evaluated: Gram-Schmidt applied to eligible dense weights.
Network effective(const Network& net, bool gs) {
  Network out = net;
  if (!gs) return out;
  for (auto& layer : out.layers)
    if (gs_eligible(layer)) {
      auto& d = std::get<Dense>(layer);
      d.weight = gram_schmidt(d.weight);
    }
  return out;
}

// Replaces every batch-norm's statistics in `work` by those of the batch and
// folds them into the running averages of `net`.
void batch_statistics(Network& work, Network& net, const Dataset& data, std::span<const std::size_t> batch,
                      const Inference& inf) {
  const auto shapes = layer_shapes(work);
  std::vector<Vec> acts;
  acts.reserve(batch.size());
  for (auto idx : batch) {
    const auto row = data.points.row(idx);
    acts.emplace_back(row.begin(), row.end());
  }
  Shape in = work.input_shape;
  for (std::size_t i = 0; i < work.layers.size(); ++i) {
    if (auto* bn = std::get_if<BatchNorm>(&work.layers[i])) {
      const std::size_t m = bn->mean.size();
      Vec sum(m, 0.0), sq(m, 0.0), count(m, 0.0);
      for (const auto& a : acts)
        for (std::size_t f = 0; f < a.size(); ++f) {
          const std::size_t s = bn_stat_index(*bn, in, f);
          sum[s] += a[f];
          count[s] += 1.0;
        }
      for (std::size_t s = 0; s < m; ++s) sum[s] /= count[s];
      for (const auto& a : acts)
        for (std::size_t f = 0; f < a.size(); ++f) {
          const std::size_t s = bn_stat_index(*bn, in, f);
          const double d = a[f] - sum[s];
          sq[s] += d * d;
        }
      for (std::size_t s = 0; s < m; ++s) sq[s] /= count[s];
      bn->mean = sum;
      bn->var = sq;
      auto& run = std::get<BatchNorm>(net.layers[i]);
      for (std::size_t s = 0; s < m; ++s) {
        run.mean[s] = kBnMomentum * run.mean[s] + (1.0 - kBnMomentum) * sum[s];
        run.var[s] = kBnMomentum * run.var[s] + (1.0 - kBnMomentum) * sq[s];
      }
    }
    bool later_bn = false;
    for (std::size_t j = i + 1; j < work.layers.size(); ++j) later_bn |= std::holds_alternative<BatchNorm>(work.layers[j]);
    if (!later_bn) break;
    for (auto& a : acts) a = evaluate_layer(work.layers[i], in, a, inf).output;
    in = shapes[i];
  }
}

double filter_energy(const Network& net) {
  double e = 0.0;
  for (const auto& layer : net.layers) {
    if (const auto* d = std::get_if<Dense>(&layer)) {
      e += detail::row_gram_energy(d->weight.data(), d->weight.rows(), d->weight.cols());
    } else if (const auto* c = std::get_if<Conv>(&layer)) {
      e += detail::row_gram_energy(c->filters.data(), c->filters.extent(0), c->filters.size() / c->filters.extent(0));
    } else if (const auto* s = std::get_if<SkipBlock>(&layer)) {
      const auto& f = s->conv.filters;
      e += detail::row_gram_energy(f.data(), f.extent(0), f.size() / f.extent(0));
    }
  }
  return e;
}

// Adds the weighted penalty gradients of `work` into grads.
void add_penalties(const Network& work, const std::vector<std::size_t>& offsets, double gamma, double lambda,
                   Gradients& grads) {
  auto& G = grads.values;
  if (gamma > 0.0) {
    const auto& d = std::get<Dense>(work.layers.back());
    detail::add_row_gram_penalty(d.weight.data(), d.weight.rows(), d.weight.cols(), gamma, G[offsets[work.layers.size() - 1]]);
  }
  if (lambda > 0.0) {
    for (std::size_t i = 0; i < work.layers.size(); ++i) {
      const auto& layer = work.layers[i];
      if (const auto* d = std::get_if<Dense>(&layer)) {
        detail::add_row_gram_penalty(d->weight.data(), d->weight.rows(), d->weight.cols(), lambda, G[offsets[i]]);
      } else if (const auto* c = std::get_if<Conv>(&layer)) {
        const auto& f = c->filters;
        detail::add_row_gram_penalty(f.data(), f.extent(0), f.size() / f.extent(0), lambda, G[offsets[i]]);
      } else if (const auto* s = std::get_if<SkipBlock>(&layer)) {
        const auto& f = s->conv.filters;
        detail::add_row_gram_penalty(f.data(), f.extent(0), f.size() / f.extent(0), lambda, G[offsets[i]]);
      }
    }
  }
}

}  // namespace

double template_gram_energy(const Network& net) {
  if (net.layers.empty()) return 0.0;
  const auto* d = std::get_if<Dense>(&net.layers.back());
  if (d == nullptr) throw StructureError("last layer is not dense");
  return detail::row_gram_energy(d->weight.data(), d->weight.rows(), d->weight.cols());
}

double accuracy(const Network& net, const Dataset& data, const Inference& inf) {
  if (data.size() == 0) throw DomainError("empty dataset");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto out = network_forward(net, data.points.row(i), inf);
    if (argmax(out.output) == data.labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

TrainResult train(Network net, const Dataset& data, const TrainConfig& config) {
  check_config(config);
  validate(net);
  check_data(net, data);
  Inference inf = config.inference;
  if (config.learnable_beta) {
    attach_beta_logits(net);
    inf.mode = Inference::Mode::beta;
  }
  const bool template_term = config.gamma > 0.0;
  if (template_term && (net.layers.empty() || !std::holds_alternative<Dense>(net.layers.back()))) {
    throw StructureError("template penalty needs a dense last layer");
  }
  const bool bn = has_batchnorm(net);
  const bool direct = !bn && !config.gram_schmidt;
  const auto offsets = detail::param_offsets(net);

  auto params = parameters(net);
  AdamState state = adam_init(params);
  AdamConfig adam = config.adam;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      Network work;
      if (!direct) {
        work = effective(net, config.gram_schmidt);
        if (bn) batch_statistics(work, net, data, batch, inf);
      }
      const Network& eval = direct ? net : work;
      Gradients grads = Gradients::zeros_like(net);
      double batch_loss = 0.0;
      for (auto idx : batch) {
        BackwardResult br = backward(eval, data.points.row(idx), data.labels[idx], inf);
        batch_loss += br.loss;
        grads.add(br.grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("loss is not finite at epoch " + std::to_string(epoch + 1) + ", batch starting at " +
                              std::to_string(start));
      }
      loss_sum += batch_loss;
      grads.scale(1.0 / static_cast<double>(batch.size()));
      add_penalties(eval, offsets, config.gamma, config.lambda, grads);
      if (config.gram_schmidt) {
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
          if (!gs_eligible(net.layers[i])) continue;
          const auto& W = std::get<Dense>(net.layers[i]).weight;
          Vec& gw = grads.values[offsets[i]];
          const Matrix g = gram_schmidt_vjp(W, Matrix(W.rows(), W.cols(), gw));
          gw = g.values();
        }
      }
      for (const auto& g : grads.values)
        if (!all_finite(g)) throw DivergenceError("gradient is not finite at epoch " + std::to_string(epoch + 1));
      adam_step(params, grads, state, adam);
    }
    const Network eval = effective(net, config.gram_schmidt);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = loss_sum / static_cast<double>(data.size());
    rec.accuracy = accuracy(eval, data, inf);
    rec.template_penalty = std::holds_alternative<Dense>(eval.layers.back()) ? template_gram_energy(eval) : 0.0;
    rec.filter_penalty = filter_energy(eval);
    result.history.push_back(rec);
    adam.learning_rate *= config.lr_decay;
  }
  result.net = effective(net, config.gram_schmidt);
  return result;
}

}  // namespace maso
