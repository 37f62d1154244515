#include "maso/analysis.hpp"

#include <random>

#include "maso/errors.hpp"

namespace maso {

namespace {

const HardSelection* codes_for(const ForwardResult& fw, std::size_t layer) {
  for (const auto& s : fw.selections)
    if (s.layer == layer) return &s.hard;
  return nullptr;
}

}  // namespace

AffineForm decompose(const Network& net, std::span<const double> x, std::optional<std::size_t> upto_layer) {
  const auto shapes = layer_shapes(net);
  const std::size_t n = upto_layer ? std::min(*upto_layer, net.layers.size()) : net.layers.size();
  const ForwardResult fw = network_forward(net, x, Inference::hard(), n);
  const std::size_t d = x.size();
  AffineForm f{Matrix::identity(d), Vec(d, 0.0)};
  Shape in = net.input_shape;
  for (std::size_t i = 0; i < n; ++i) {
    apply_selected_affine(net.layers[i], in, codes_for(fw, i), f.A, f.b);
    in = shapes[i];
  }
  return f;
}

ClassTemplates class_templates(const Network& net, std::span<const double> x) {
  if (net.layers.empty() || !std::holds_alternative<Dense>(net.layers.back())) {
    throw StructureError("class templates need a final dense layer");
  }
  const auto& last = std::get<Dense>(net.layers.back());
  const AffineForm f = decompose(net, x, net.layers.size() - 1);
  ClassTemplates t{matmul(last.weight, f.A), matvec(last.weight, f.b)};
  for (std::size_t c = 0; c < t.biases.size(); ++c) t.biases[c] += last.bias[c];
  return t;
}

std::vector<Matrix> resnet_ensemble_terms(const Network& net, std::span<const double> x) {
  const auto shapes = layer_shapes(net);
  std::size_t blocks = net.layers.size();
  const Dense* head = nullptr;
  if (!net.layers.empty() && std::holds_alternative<Dense>(net.layers.back())) {
    head = &std::get<Dense>(net.layers.back());
    --blocks;
  }
  for (std::size_t i = 0; i < blocks; ++i) {
    if (!std::holds_alternative<SkipBlock>(net.layers[i])) {
      throw StructureError("layer " + std::to_string(i) + " is not a skip block");
    }
  }
  if (blocks == 0) throw StructureError("no skip blocks to expand");
  if (blocks > 11) throw DomainError("too many skip blocks to enumerate the ensemble");

  const ForwardResult fw = network_forward(net, x, Inference::hard(), blocks);
  // Per block: the skip matrix and the activation-gated main matrix.
  std::vector<Matrix> skip_mats, act_mats;
  Shape in = net.input_shape;
  for (std::size_t i = 0; i < blocks; ++i) {
    const auto& blk = std::get<SkipBlock>(net.layers[i]);
    const HardSelection* sel = codes_for(fw, i);
    const auto [c0, c1] = activation_slopes(blk.activation);
    skip_mats.push_back(conv_to_matrix(blk.skip, in));
    Matrix gated = conv_to_matrix(blk.conv, in);
    for (std::size_t r = 0; r < gated.rows(); ++r) {
      const double c = sel->codes[r] == 0 ? c0 : c1;
      for (double& v : gated.row(r)) v *= c;
    }
    act_mats.push_back(std::move(gated));
    in = shapes[i];
  }

  std::vector<Matrix> terms;
  const std::size_t count = std::size_t{1} << blocks;
  for (std::size_t mask = 0; mask < count; ++mask) {
    Matrix prod = Matrix::identity(x.size());
    for (std::size_t i = 0; i < blocks; ++i) prod = matmul((mask >> i) & 1U ? act_mats[i] : skip_mats[i], prod);
    if (head != nullptr) prod = matmul(head->weight, prod);
    terms.push_back(std::move(prod));
  }
  return terms;
}

Vec partial_product_norms(const Network& net, std::span<const double> x) {
  const auto shapes = layer_shapes(net);
  const ForwardResult fw = network_forward(net, x, Inference::hard());
  Matrix A = Matrix::identity(x.size());
  Vec b(x.size(), 0.0);
  Vec norms;
  Shape in = net.input_shape;
  for (std::size_t i = 0; i + 1 < net.layers.size(); ++i) {
    apply_selected_affine(net.layers[i], in, codes_for(fw, i), A, b);
    norms.push_back(frobenius_norm(A));
    in = shapes[i];
  }
  return norms;
}

ConvexityReport convexity_probe(const Network& net, std::size_t samples, std::uint64_t seed) {
  validate(net);
  const std::size_t d = numel(net.input_shape);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ConvexityReport rep{Vec(net.class_count, 0.0), samples};
  Vec u(d), v(d), mid(d);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < d; ++i) {
      u[i] = normal(rng);
      v[i] = normal(rng);
      mid[i] = 0.5 * (u[i] + v[i]);
    }
    const Vec fu = network_forward(net, u).output;
    const Vec fv = network_forward(net, v).output;
    const Vec fm = network_forward(net, mid).output;
    for (std::size_t k = 0; k < fm.size(); ++k)
      if (fm[k] <= 0.5 * fu[k] + 0.5 * fv[k] + 1e-9) rep.pass_fraction[k] += 1.0;
  }
  if (samples > 0)
    for (double& p : rep.pass_fraction) p /= static_cast<double>(samples);
  return rep;
}

}  // namespace maso
