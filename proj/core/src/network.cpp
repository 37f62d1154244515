#include <algorithm>
#include <cmath>

#include "maso/errors.hpp"
#include "maso/layers.hpp"

namespace maso {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

struct UnitChoice {
  Vec output;
  HardSelection hard;
  std::optional<SoftSelection> soft;
};

// Hard codes are always recorded; soft weights only under soft/β inference.
UnitChoice choose(const Matrix& scores, const Inference& inf, const Activation* act) {
  UnitChoice c;
  c.hard.regions = scores.cols();
  c.hard.codes = row_argmax(scores);
  c.output.resize(scores.rows());
  if (inf.mode == Inference::Mode::hard) {
    for (std::size_t k = 0; k < scores.rows(); ++k) c.output[k] = scores(k, c.hard.codes[k]);
    return c;
  }
  const Vec eta = layer_eta(inf, act, scores.rows());
  c.soft = soft_select(scores, eta);
  for (std::size_t k = 0; k < scores.rows(); ++k) {
    double s = 0.0;
    for (std::size_t r = 0; r < scores.cols(); ++r) s += c.soft->weights(k, r) * scores(k, r);
    c.output[k] = s;
  }
  return c;
}

Matrix activation_scores(const Activation& act, std::span<const double> u) {
  const auto [c0, c1] = activation_slopes(act);
  Matrix s(u.size(), 2);
  for (std::size_t k = 0; k < u.size(); ++k) {
    s(k, 0) = c0 * u[k];
    s(k, 1) = c1 * u[k];
  }
  return s;
}

Matrix pool_scores(const std::vector<std::vector<std::size_t>>& padded, std::span<const double> z) {
  Matrix s(padded.size(), padded.front().size());
  for (std::size_t k = 0; k < padded.size(); ++k)
    for (std::size_t r = 0; r < padded[k].size(); ++r) s(k, r) = z[padded[k][r]];
  return s;
}

Vec avg_pool(const AvgPool& p, std::span<const double> z) {
  Vec out(p.regions.size());
  for (std::size_t k = 0; k < p.regions.size(); ++k) {
    const double w = 1.0 / static_cast<double>(p.regions[k].size());
    double s = 0.0;
    for (auto i : p.regions[k]) s += w * z[i];
    out[k] = s;
  }
  return out;
}

Matrix affine_rows(const Matrix& M, const Matrix& A) { return matmul(M, A); }

}  // namespace

std::pair<double, double> activation_slopes(const Activation& act) {
  switch (act.kind) {
    case ActivationKind::relu:
      return {0.0, 1.0};
    case ActivationKind::lrelu:
      return {act.nu, 1.0};
    case ActivationKind::abs:
      return {-1.0, 1.0};
  }
  throw DomainError("unknown activation kind");
}

Vec layer_eta(const Inference& inf, const Activation* act, std::size_t units) {
  switch (inf.mode) {
    case Inference::Mode::hard:
      return {};
    case Inference::Mode::soft:
      return {1.0};
    case Inference::Mode::beta: {
      if (act != nullptr && !act->beta_logit.empty()) {
        const BetaParam b = BetaParam::from_logits(act->beta_logit);
        Vec eta(b.size());
        for (std::size_t i = 0; i < eta.size(); ++i) eta[i] = b.ratio(i);
        if (eta.size() != 1 && eta.size() != units) throw ShapeError("beta logits must be shared or one per unit");
        return eta;
      }
      return {BetaParam(inf.beta).ratio(0)};
    }
  }
  throw DomainError("unknown inference mode");
}

LayerEval evaluate_layer(const LayerSpec& layer, const Shape& in, std::span<const double> z, const Inference& inf) {
  if (z.size() != numel(in)) throw ShapeError("layer input length does not match its shape");
  LayerEval ev;
  ev.out_shape = layer_output_shape(layer, in);
  std::visit(overloaded{
                 [&](const Dense& d) {
                   ev.output = matvec(d.weight, z);
                   for (std::size_t i = 0; i < ev.output.size(); ++i) ev.output[i] += d.bias[i];
                 },
                 [&](const Conv& c) { ev.output = conv_forward(c, in, z); },
                 [&](const BatchNorm& bn) {
                   const FoldedAffine f = bn_fold_broadcast(bn, in);
                   ev.output.resize(z.size());
                   for (std::size_t i = 0; i < z.size(); ++i) ev.output[i] = f.scale[i] * z[i] + f.shift[i];
                 },
                 [&](const AvgPool& p) { ev.output = avg_pool(p, z); },
                 [&](const Activation& a) {
                   auto c = choose(activation_scores(a, z), inf, &a);
                   ev.output = std::move(c.output);
                   ev.hard = std::move(c.hard);
                   ev.soft = std::move(c.soft);
                 },
                 [&](const MaxPool& p) {
                   auto c = choose(pool_scores(pad_regions(p.regions), z), inf, nullptr);
                   ev.output = std::move(c.output);
                   ev.hard = std::move(c.hard);
                   ev.soft = std::move(c.soft);
                 },
                 [&](const SkipBlock& s) {
                   const Vec u = conv_forward(s.conv, in, z);
                   auto c = choose(activation_scores(s.activation, u), inf, &s.activation);
                   ev.output = conv_forward(s.skip, in, z);
                   for (std::size_t i = 0; i < ev.output.size(); ++i) {
                     ev.output[i] += c.output[i];
                     if (!s.skip_bias.empty()) ev.output[i] += s.skip_bias[i];
                   }
                   ev.hard = std::move(c.hard);
                   ev.soft = std::move(c.soft);
                 },
             },
             layer);
  return ev;
}

ForwardResult network_forward(const Network& net, std::span<const double> x, const Inference& inf,
                              std::optional<std::size_t> upto) {
  if (x.size() != numel(net.input_shape)) {
    throw ShapeError("input has " + std::to_string(x.size()) + " values, network expects " +
                     std::to_string(numel(net.input_shape)));
  }
  const std::size_t n = upto ? std::min(*upto, net.layers.size()) : net.layers.size();
  ForwardResult res;
  res.output.assign(x.begin(), x.end());
  res.out_shape = net.input_shape;
  for (std::size_t i = 0; i < n; ++i) {
    LayerEval ev = evaluate_layer(net.layers[i], res.out_shape, res.output, inf);
    if (ev.hard) res.selections.push_back({i, std::move(*ev.hard)});
    res.output = std::move(ev.output);
    res.out_shape = std::move(ev.out_shape);
  }
  return res;
}

Vec skip_block_forward(const SkipBlock& blk, const Shape& in, std::span<const double> z, const Inference& inf) {
  return evaluate_layer(LayerSpec{blk}, in, z, inf).output;
}

void apply_selected_affine(const LayerSpec& layer, const Shape& in, const HardSelection* codes, Matrix& A, Vec& b) {
  const std::size_t n = numel(in);
  if (A.rows() != n || b.size() != n) throw ShapeError("affine state does not match the layer input");
  auto need_codes = [&](std::size_t units) -> const HardSelection& {
    if (codes == nullptr || codes->units() != units) throw ShapeError("nonlinear layer needs one code per unit");
    return *codes;
  };
  std::visit(
      overloaded{
          [&](const Dense& d) {
            A = affine_rows(d.weight, A);
            b = matvec(d.weight, b);
            for (std::size_t i = 0; i < b.size(); ++i) b[i] += d.bias[i];
          },
          [&](const Conv& c) {
            const Matrix M = conv_to_matrix(c, in);
            const Vec bias = conv_bias_broadcast(c, conv_output_shape(c, in));
            A = affine_rows(M, A);
            b = matvec(M, b);
            for (std::size_t i = 0; i < b.size(); ++i) b[i] += bias[i];
          },
          [&](const BatchNorm& bn) {
            const FoldedAffine f = bn_fold_broadcast(bn, in);
            for (std::size_t i = 0; i < n; ++i) {
              for (double& v : A.row(i)) v *= f.scale[i];
              b[i] = f.scale[i] * b[i] + f.shift[i];
            }
          },
          [&](const AvgPool& p) {
            Matrix out(p.regions.size(), A.cols());
            Vec bo(p.regions.size());
            for (std::size_t k = 0; k < p.regions.size(); ++k) {
              const double w = 1.0 / static_cast<double>(p.regions[k].size());
              for (auto i : p.regions[k]) {
                for (std::size_t j = 0; j < A.cols(); ++j) out(k, j) += w * A(i, j);
                bo[k] += w * b[i];
              }
            }
            A = std::move(out);
            b = std::move(bo);
          },
          [&](const Activation& a) {
            const auto& sel = need_codes(n);
            const auto [c0, c1] = activation_slopes(a);
            for (std::size_t i = 0; i < n; ++i) {
              const double c = sel.codes[i] == 0 ? c0 : c1;
              for (double& v : A.row(i)) v *= c;
              b[i] *= c;
            }
          },
          [&](const MaxPool& p) {
            const auto padded = pad_regions(p.regions);
            const auto& sel = need_codes(padded.size());
            Matrix out(padded.size(), A.cols());
            Vec bo(padded.size());
            for (std::size_t k = 0; k < padded.size(); ++k) {
              const std::size_t src = padded[k].at(sel.codes[k]);
              std::copy(A.row(src).begin(), A.row(src).end(), out.row(k).begin());
              bo[k] = b[src];
            }
            A = std::move(out);
            b = std::move(bo);
          },
          [&](const SkipBlock& s) {
            const Shape out_shape = conv_output_shape(s.conv, in);
            const std::size_t m = numel(out_shape);
            const auto& sel = need_codes(m);
            const auto [c0, c1] = activation_slopes(s.activation);
            const Matrix Mc = conv_to_matrix(s.conv, in);
            const Matrix Ms = conv_to_matrix(s.skip, in);
            const Vec bc = conv_bias_broadcast(s.conv, out_shape);
            const Vec bs = conv_bias_broadcast(s.skip, out_shape);
            Matrix main = affine_rows(Mc, A);
            Vec main_b = matvec(Mc, b);
            Matrix side = affine_rows(Ms, A);
            Vec side_b = matvec(Ms, b);
            for (std::size_t i = 0; i < m; ++i) {
              const double c = sel.codes[i] == 0 ? c0 : c1;
              for (std::size_t j = 0; j < side.cols(); ++j) side(i, j) += c * main(i, j);
              side_b[i] += bs[i] + c * (main_b[i] + bc[i]);
              if (!s.skip_bias.empty()) side_b[i] += s.skip_bias[i];
            }
            A = std::move(side);
            b = std::move(side_b);
          },
      },
      layer);
}

MasoParams layer_as_maso(const LayerSpec& layer, const Shape& in) {
  const std::size_t n = numel(in);
  return std::visit(
      overloaded{
          [&](const Dense& d) { return dense_as_maso(d.weight, d.bias); },
          [&](const Conv& c) {
            return dense_as_maso(conv_to_matrix(c, in), conv_bias_broadcast(c, conv_output_shape(c, in)));
          },
          [&](const BatchNorm& bn) {
            const FoldedAffine f = bn_fold_broadcast(bn, in);
            MasoParams p(n, 1, n);
            for (std::size_t i = 0; i < n; ++i) {
              p.slope(i, 0)[i] = f.scale[i];
              p.offset(i, 0) = f.shift[i];
            }
            return p;
          },
          [&](const AvgPool& p) { return pool_as_maso(p.regions, n, PoolKind::avg); },
          [&](const MaxPool& p) { return pool_as_maso(p.regions, n, PoolKind::max); },
          [&](const Activation& a) { return activation_as_maso(a.kind, n, a.nu); },
          [&](const SkipBlock& s) {
            const Shape out_shape = conv_output_shape(s.conv, in);
            const std::size_t m = numel(out_shape);
            const auto [c0, c1] = activation_slopes(s.activation);
            const Matrix Mc = conv_to_matrix(s.conv, in);
            const Matrix Ms = conv_to_matrix(s.skip, in);
            const Vec bc = conv_bias_broadcast(s.conv, out_shape);
            const Vec bs = conv_bias_broadcast(s.skip, out_shape);
            MasoParams p(m, 2, n);
            for (std::size_t k = 0; k < m; ++k) {
              for (std::size_t r = 0; r < 2; ++r) {
                const double c = r == 0 ? c0 : c1;
                auto dst = p.slope(k, r);
                for (std::size_t j = 0; j < n; ++j) dst[j] = Ms(k, j) + c * Mc(k, j);
                p.offset(k, r) = bs[k] + c * bc[k] + (s.skip_bias.empty() ? 0.0 : s.skip_bias[k]);
              }
            }
            return p;
          },
      },
      layer);
}

std::vector<MasoParams> network_as_masos(const Network& net) {
  const auto shapes = layer_shapes(net);
  std::vector<MasoParams> out;
  std::optional<MasoParams> pending;
  Shape in = net.input_shape;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    MasoParams m = layer_as_maso(net.layers[i], in);
    if (m.regions() == 1 && !is_nonlinear(net.layers[i])) {
      pending = pending ? compose_layer_maso(*pending, m) : std::move(m);
    } else {
      out.push_back(pending ? compose_layer_maso(*pending, m) : std::move(m));
      pending.reset();
    }
    in = shapes[i];
  }
  if (pending) out.push_back(std::move(*pending));
  return out;
}

}  // namespace maso
