#include "maso/learn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "learn_detail.hpp"
#include "maso/errors.hpp"

namespace maso {

namespace detail {

double row_gram_energy(std::span<const double> rows, std::size_t count, std::size_t dim) {
  double e = 0.0;
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = i + 1; j < count; ++j) {
      const double g = dot(rows.subspan(i * dim, dim), rows.subspan(j * dim, dim));
      e += 2.0 * g * g;
    }
  return e;
}

double add_row_gram_penalty(std::span<const double> rows, std::size_t count, std::size_t dim, double weight,
                            std::span<double> grad) {
  double e = 0.0;
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = i + 1; j < count; ++j) {
      const auto ri = rows.subspan(i * dim, dim);
      const auto rj = rows.subspan(j * dim, dim);
      const double g = dot(ri, rj);
      e += 2.0 * g * g;
      if (weight == 0.0) continue;
      const double c = 4.0 * weight * g;
      for (std::size_t t = 0; t < dim; ++t) {
        grad[i * dim + t] += c * rj[t];
        grad[j * dim + t] += c * ri[t];
      }
    }
  return e;
}

}  // namespace detail

namespace {

double eta_at(const Vec& eta, std::size_t k) { return eta.size() == 1 ? eta[0] : eta[k]; }

bool near_tie(const Matrix& scores, std::size_t k) {
  if (scores.cols() < 2) return false;
  double top = -INFINITY, second = -INFINITY;
  for (double s : scores.row(k)) {
    if (s > top) {
      second = top;
      top = s;
    } else if (s > second) {
      second = s;
    }
  }
  return top - second < 1e-9 * (1.0 + std::abs(top));
}

// ∂loss/∂scores from ∂loss/∂out; ∂loss/∂η_k goes to geta when given.
Matrix select_backward(const Matrix& scores, const LayerEval& ev, const Vec& eta, std::span<const double> gout,
                       Vec* geta, bool& boundary) {
  Matrix gs(scores.rows(), scores.cols());
  if (!ev.soft) {
    for (std::size_t k = 0; k < scores.rows(); ++k) {
      gs(k, ev.hard->codes[k]) = gout[k];
      if (near_tie(scores, k)) boundary = true;
    }
    return gs;
  }
  const Matrix& T = ev.soft->weights;
  for (std::size_t k = 0; k < scores.rows(); ++k) {
    const double out = ev.output[k];
    const double e = eta_at(eta, k);
    double de = 0.0;
    for (std::size_t r = 0; r < scores.cols(); ++r) {
      const double d = scores(k, r) - out;
      gs(k, r) = gout[k] * T(k, r) * (1.0 + e * d);
      de += T(k, r) * scores(k, r) * d;
    }
    if (geta != nullptr) (*geta)[k] += gout[k] * de;
  }
  return gs;
}

// Activation unit backward; returns ∂loss/∂u and accumulates β-logit gradients.
Vec activation_backward(const Activation& act, std::span<const double> u, const LayerEval& ev,
                        const Inference& inf, std::span<const double> gout, Vec* glogit, bool& boundary) {
  const auto [c0, c1] = activation_slopes(act);
  Matrix scores(u.size(), 2);
  for (std::size_t k = 0; k < u.size(); ++k) {
    scores(k, 0) = c0 * u[k];
    scores(k, 1) = c1 * u[k];
  }
  const Vec eta = layer_eta(inf, &act, u.size());
  const bool learn_beta = inf.mode == Inference::Mode::beta && !act.beta_logit.empty() && glogit != nullptr;
  Vec geta(learn_beta ? u.size() : 0, 0.0);
  const Matrix gs = select_backward(scores, ev, eta, gout, learn_beta ? &geta : nullptr, boundary);
  Vec gu(u.size());
  for (std::size_t k = 0; k < u.size(); ++k) gu[k] = gs(k, 0) * c0 + gs(k, 1) * c1;
  if (learn_beta) {
    // η = exp(logit), so ∂η/∂logit = η.
    for (std::size_t k = 0; k < u.size(); ++k) (*glogit)[act.beta_logit.size() == 1 ? 0 : k] += geta[k] * eta_at(eta, k);
  }
  return gu;
}

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::vector<ParamRef> parameters(Network& net) {
  std::vector<ParamRef> out;
  detail::for_each_param(net, [&](std::size_t, const std::string& name, std::span<double> s) {
    out.push_back({name, s});
  });
  return out;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  detail::for_each_param(net, [&](std::size_t, const std::string&, std::span<const double> s) {
    g.values.emplace_back(s.size(), 0.0);
  });
  return g;
}

void Gradients::scale(double s) {
  for (auto& v : values)
    for (double& x : v) x *= s;
}

void Gradients::add(const Gradients& other) {
  if (other.values.size() != values.size()) throw ShapeError("gradient sets differ in length");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (other.values[i].size() != values[i].size()) throw ShapeError("gradient arrays differ in size");
    for (std::size_t j = 0; j < values[i].size(); ++j) values[i][j] += other.values[i][j];
  }
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw DomainError("label " + std::to_string(label) + " out of range for " + std::to_string(logits.size()) +
                      " classes");
  }
  return logsumexp(logits) - logits[label];
}

BackwardResult backward(const Network& net, std::span<const double> x, std::size_t label, const Inference& inf) {
  const auto shapes = layer_shapes(net);
  if (x.size() != numel(net.input_shape)) throw ShapeError("input length does not match the network input shape");
  const std::size_t L = net.layers.size();

  std::vector<Vec> inputs(L);
  std::vector<LayerEval> evals(L);
  Vec z(x.begin(), x.end());
  Shape in = net.input_shape;
  for (std::size_t i = 0; i < L; ++i) {
    evals[i] = evaluate_layer(net.layers[i], in, z, inf);
    inputs[i] = std::move(z);
    z = evals[i].output;
    in = shapes[i];
  }

  BackwardResult res;
  res.logits = z;
  res.loss = cross_entropy(z, label);
  res.grads = Gradients::zeros_like(net);
  const auto offsets = detail::param_offsets(net);

  Vec g = softmax(z);
  g[label] -= 1.0;
  for (std::size_t ii = L; ii-- > 0;) {
    const Shape& lin = ii == 0 ? net.input_shape : shapes[ii - 1];
    const Vec& zin = inputs[ii];
    const LayerEval& ev = evals[ii];
    std::size_t slot = offsets[ii];
    auto& G = res.grads.values;
    Vec gin;
    std::visit(
        overloaded{
            [&](const Dense& d) {
              auto& gw = G[slot];
              auto& gb = G[slot + 1];
              for (std::size_t r = 0; r < d.weight.rows(); ++r) {
                gb[r] += g[r];
                for (std::size_t c = 0; c < d.weight.cols(); ++c) gw[r * d.weight.cols() + c] += g[r] * zin[c];
              }
              gin = matvec_transposed(d.weight, g);
            },
            [&](const Conv& c) { gin = conv_backward(c, lin, zin, g, G[slot], G[slot + 1]); },
            [&](const BatchNorm& bn) {
              const FoldedAffine f = bn_fold_broadcast(bn, lin);
              gin.resize(zin.size());
              for (std::size_t i = 0; i < zin.size(); ++i) {
                const std::size_t s = bn_stat_index(bn, lin, i);
                const double inv = 1.0 / std::sqrt(bn.var[s] + bn.epsilon);
                G[slot][s] += g[i] * (zin[i] - bn.mean[s]) * inv;
                G[slot + 1][s] += g[i];
                gin[i] = g[i] * f.scale[i];
              }
            },
            [&](const AvgPool& p) {
              gin.assign(zin.size(), 0.0);
              for (std::size_t k = 0; k < p.regions.size(); ++k) {
                const double w = 1.0 / static_cast<double>(p.regions[k].size());
                for (auto i : p.regions[k]) gin[i] += w * g[k];
              }
            },
            [&](const MaxPool& p) {
              const auto padded = pad_regions(p.regions);
              Matrix scores(padded.size(), padded.front().size());
              for (std::size_t k = 0; k < padded.size(); ++k)
                for (std::size_t r = 0; r < padded[k].size(); ++r) scores(k, r) = zin[padded[k][r]];
              const Vec eta = layer_eta(inf, nullptr, padded.size());
              const Matrix gs = select_backward(scores, ev, eta, g, nullptr, res.near_boundary);
              gin.assign(zin.size(), 0.0);
              for (std::size_t k = 0; k < padded.size(); ++k)
                for (std::size_t r = 0; r < padded[k].size(); ++r) gin[padded[k][r]] += gs(k, r);
            },
            [&](const Activation& a) {
              Vec* gl = a.beta_logit.empty() ? nullptr : &G[slot];
              gin = activation_backward(a, zin, ev, inf, g, gl, res.near_boundary);
            },
            [&](const SkipBlock& s) {
              const std::size_t has_beta = s.activation.beta_logit.empty() ? 0 : 1;
              const std::size_t skip_slot = slot + 2 + has_beta;
              if (!s.skip_bias.empty())
                for (std::size_t i = 0; i < g.size(); ++i) G[skip_slot + 2][i] += g[i];
              gin = conv_backward(s.skip, lin, zin, g, G[skip_slot], G[skip_slot + 1]);
              const Vec u = conv_forward(s.conv, lin, zin);
              // The block's selection fields describe its activation stage;
              // rebuild the activation-only output for the soft derivative.
              LayerEval act_ev = evaluate_layer(LayerSpec{s.activation}, {u.size()}, u, inf);
              Vec* gl = has_beta ? &G[slot + 2] : nullptr;
              const Vec gu = activation_backward(s.activation, u, act_ev, inf, g, gl, res.near_boundary);
              const Vec gmain = conv_backward(s.conv, lin, zin, gu, G[slot], G[slot + 1]);
              for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gmain[i];
            },
        },
        net.layers[ii]);
    g = std::move(gin);
  }
  return res;
}

Penalty ortho_penalty_templates(const Matrix& W, double gamma) {
  if (gamma < 0.0) throw DomainError("template penalty weight must be nonnegative");
  Penalty p{0.0, Matrix(W.rows(), W.cols())};
  p.value = gamma * detail::add_row_gram_penalty(W.data(), W.rows(), W.cols(), gamma, p.gradient.data());
  return p;
}

Penalty ortho_penalty_filters(const Matrix& W, double lambda) {
  if (lambda < 0.0) throw DomainError("filter penalty weight must be nonnegative");
  Penalty p{0.0, Matrix(W.rows(), W.cols())};
  p.value = lambda * detail::add_row_gram_penalty(W.data(), W.rows(), W.cols(), lambda, p.gradient.data());
  return p;
}

MasoPenalty ortho_penalty_filters(const MasoParams& p, double lambda) {
  if (lambda < 0.0) throw DomainError("filter penalty weight must be nonnegative");
  const std::size_t K = p.units(), R = p.regions(), D = p.input_dim();
  MasoPenalty out{0.0, Vec(p.slopes().size(), 0.0)};
  double energy = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t k2 = k + 1; k2 < K; ++k2)
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t r2 = 0; r2 < R; ++r2) {
          const auto a = p.slope(k, r);
          const auto b = p.slope(k2, r2);
          const double g = dot(a, b);
          energy += 2.0 * g * g;
          const double c = 4.0 * lambda * g;
          double* ga = out.gradient.data() + (k * R + r) * D;
          double* gb = out.gradient.data() + (k2 * R + r2) * D;
          for (std::size_t t = 0; t < D; ++t) {
            ga[t] += c * b[t];
            gb[t] += c * a[t];
          }
        }
  out.value = lambda * energy;
  return out;
}

Matrix gram_schmidt(const Matrix& M) {
  Matrix Q = M;
  const std::size_t n = M.rows();
  Vec norms(n);
  for (std::size_t k = 0; k < n; ++k) {
    auto q = Q.row(k);
    // Modified form: project against the partially reduced row; equal to the
    // classical formula in exact arithmetic, better conditioned in floating point.
    for (std::size_t j = 0; j < k; ++j) {
      const auto p = Q.row(j);
      const double c = dot(p, q) / norms[j];
      for (std::size_t t = 0; t < q.size(); ++t) q[t] -= c * p[t];
    }
    norms[k] = squared_norm(q);
    const double orig = std::sqrt(squared_norm(M.row(k)));
    if (!(std::sqrt(norms[k]) > 1e-10 * std::max(1.0, orig))) {
      throw DegeneracyError("row " + std::to_string(k) + " is linearly dependent on the previous rows");
    }
  }
  return Q;
}

Matrix gram_schmidt_vjp(const Matrix& M, const Matrix& grad_out) {
  if (grad_out.rows() != M.rows() || grad_out.cols() != M.cols()) throw ShapeError("gradient shape differs from M");
  const Matrix Q = gram_schmidt(M);
  const std::size_t n = M.rows(), d = M.cols();
  Vec norms(n);
  for (std::size_t k = 0; k < n; ++k) norms[k] = squared_norm(Q.row(k));
  Matrix gq = grad_out;  // running ∂L/∂q_k
  Matrix gm(n, d);
  // q_k = m_k − Σ_{j<k} (<q_j, m_k>/‖q_j‖²) q_j, reversed row by row.
  for (std::size_t k = n; k-- > 0;) {
    const auto gk = gq.row(k);
    const auto mk = M.row(k);
    for (std::size_t t = 0; t < d; ++t) gm(k, t) += gk[t];
    for (std::size_t j = 0; j < k; ++j) {
      const auto qj = Q.row(j);
      const double a = dot(qj, mk);
      const double c = a / norms[j];
      const double gc = -dot(gk, qj);
      auto gj = gq.row(j);
      for (std::size_t t = 0; t < d; ++t) {
        gj[t] += -c * gk[t] + gc * (mk[t] / norms[j] - 2.0 * a * qj[t] / (norms[j] * norms[j]));
        gm(k, t) += gc * qj[t] / norms[j];
      }
    }
  }
  return gm;
}

AdamState adam_init(const std::vector<ParamRef>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.values.size(), 0.0);
    s.v.emplace_back(p.values.size(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<ParamRef>& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config) {
  if (grads.values.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("optimizer state does not match the parameters");
  }
  if (!(config.learning_rate > 0.0)) throw DomainError("learning rate must be positive");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values;
    const Vec& g = grads.values[i];
    Vec& m = state.m[i];
    Vec& v = state.v[i];
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw ShapeError("optimizer state does not match parameter " + params[i].name);
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      p[j] -= config.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.epsilon);
    }
  }
}

void init_gaussian(Network& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&](std::span<double> w, std::size_t fan_in) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1))));
    for (double& v : w) v = dist(rng);
  };
  auto conv = [&](Conv& c) {
    fill(c.filters.data(), c.filters.extent(1) * c.filters.extent(2) * c.filters.extent(3));
    std::fill(c.bias.begin(), c.bias.end(), 0.0);
  };
  for (auto& layer : net.layers) {
    if (auto* d = std::get_if<Dense>(&layer)) {
      fill(d->weight.data(), d->weight.cols());
      std::fill(d->bias.begin(), d->bias.end(), 0.0);
    } else if (auto* c = std::get_if<Conv>(&layer)) {
      conv(*c);
    } else if (auto* s = std::get_if<SkipBlock>(&layer)) {
      conv(s->conv);
      conv(s->skip);
      std::fill(s->skip_bias.begin(), s->skip_bias.end(), 0.0);
    }
  }
}

Network make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t classes,
                 ActivationKind kind, std::uint64_t seed, double nu) {
  if (input_dim == 0 || classes == 0) throw DomainError("network needs inputs and classes");
  Network net;
  net.input_shape = {input_dim};
  net.class_count = classes;
  std::size_t prev = input_dim;
  for (auto h : hidden) {
    if (h == 0) throw DomainError("hidden layer width must be positive");
    net.layers.emplace_back(Dense{Matrix(h, prev), Vec(h, 0.0)});
    net.layers.emplace_back(Activation{kind, kind == ActivationKind::lrelu ? nu : 0.0, {}});
    prev = h;
  }
  net.layers.emplace_back(Dense{Matrix(classes, prev), Vec(classes, 0.0)});
  init_gaussian(net, seed);
  return net;
}

bool has_orthogonal_units(const MasoParams& p, double tol) {
  for (std::size_t k = 0; k < p.units(); ++k)
    for (std::size_t k2 = k + 1; k2 < p.units(); ++k2)
      for (std::size_t r = 0; r < p.regions(); ++r)
        for (std::size_t r2 = 0; r2 < p.regions(); ++r2)
          if (std::abs(dot(p.slope(k, r), p.slope(k2, r2))) > tol) return false;
  return true;
}

HardSelection joint_map_factorial(const MasoParams& p, std::span<const double> z) {
  if (!has_orthogonal_units(p)) throw PreconditionError("slopes of different units are not orthogonal");
  return forward_hard(p, z).selection;
}

}  // namespace maso
