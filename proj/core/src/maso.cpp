#include "maso/maso.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "maso/errors.hpp"

namespace maso {

namespace {

void check_input(const MasoParams& p, std::span<const double> z) {
  if (z.size() != p.input_dim()) {
    throw ShapeError("MASO expects input of dimension " + std::to_string(p.input_dim()) + ", got " +
                     std::to_string(z.size()));
  }
}

}  // namespace

MasoParams::MasoParams(std::size_t units, std::size_t regions, std::size_t input_dim)
    : K_(units), R_(regions), D_(input_dim), A_(units * regions * input_dim, 0.0), B_(units * regions, 0.0) {
  if (regions == 0) throw DomainError("a MASO needs at least one region per unit");
}

MasoParams::MasoParams(std::size_t units, std::size_t regions, std::size_t input_dim, Vec slopes, Vec offsets)
    : K_(units), R_(regions), D_(input_dim), A_(std::move(slopes)), B_(std::move(offsets)) {
  if (regions == 0) throw DomainError("a MASO needs at least one region per unit");
  if (A_.size() != K_ * R_ * D_) throw ShapeError("slope tensor does not have K*R*D entries");
  if (B_.size() != K_ * R_) throw ShapeError("offset matrix does not have K*R entries");
  if (!all_finite(A_) || !all_finite(B_)) throw DomainError("MASO parameters must be finite");
}

BetaParam::BetaParam(double shared) : BetaParam(Vec{shared}) {}

BetaParam::BetaParam(Vec per_unit) : betas_(std::move(per_unit)) {
  if (betas_.empty()) throw DomainError("beta needs at least one value");
  ratios_.reserve(betas_.size());
  for (double b : betas_) {
    if (!(b > 0.0 && b < 1.0)) throw DomainError("beta must lie strictly inside (0,1), got " + std::to_string(b));
    ratios_.push_back(b / (1.0 - b));
  }
}

BetaParam BetaParam::from_logits(std::span<const double> logits) {
  if (logits.empty()) throw DomainError("beta needs at least one value");
  // Built directly: for large |logit| the logistic rounds to 0 or 1 while
  // exp(logit) still gives a usable finite ratio.
  BetaParam out;
  for (double l : logits) {
    if (!std::isfinite(l)) throw DomainError("beta logit must be finite");
    out.betas_.push_back(1.0 / (1.0 + std::exp(-l)));
    out.ratios_.push_back(std::exp(l));
  }
  return out;
}

double BetaParam::ratio(std::size_t unit) const { return ratios_.size() == 1 ? ratios_[0] : ratios_.at(unit); }

Matrix region_scores(const MasoParams& p, std::span<const double> z) {
  check_input(p, z);
  Matrix s(p.units(), p.regions());
  for (std::size_t k = 0; k < p.units(); ++k)
    for (std::size_t r = 0; r < p.regions(); ++r) s(k, r) = dot(p.slope(k, r), z) + p.offset(k, r);
  return s;
}

HardOutput forward_hard(const MasoParams& p, std::span<const double> z) {
  const Matrix s = region_scores(p, z);
  HardOutput out;
  out.selection.regions = p.regions();
  out.selection.codes = row_argmax(s);
  out.output.resize(p.units());
  for (std::size_t k = 0; k < p.units(); ++k) out.output[k] = s(k, out.selection.codes[k]);
  return out;
}

SoftSelection soft_select(const Matrix& scores, std::span<const double> eta) {
  if (eta.size() != 1 && eta.size() != scores.rows()) throw ShapeError("soft_select: one eta per unit expected");
  SoftSelection t{Matrix(scores.rows(), scores.cols())};
  for (std::size_t k = 0; k < scores.rows(); ++k) {
    const Vec row = softmax(scores.row(k), eta.size() == 1 ? eta[0] : eta[k]);
    std::copy(row.begin(), row.end(), t.weights.row(k).begin());
  }
  return t;
}

SoftSelection svq_infer(const MasoParams& p, std::span<const double> z) {
  return SoftSelection{row_softmax(region_scores(p, z), 1.0)};
}

SoftSelection beta_vq_infer(const MasoParams& p, std::span<const double> z, const BetaParam& beta) {
  if (beta.size() != 1 && beta.size() != p.units()) throw ShapeError("beta must be shared or per unit");
  Vec eta(p.units());
  for (std::size_t k = 0; k < p.units(); ++k) eta[k] = beta.ratio(k);
  return soft_select(region_scores(p, z), eta);
}

Vec forward_with_selection(const MasoParams& p, std::span<const double> z, const SoftSelection& t) {
  if (t.units() != p.units() || t.regions() != p.regions()) throw ShapeError("selection shape does not match MASO");
  const Matrix s = region_scores(p, z);
  Vec out(p.units(), 0.0);
  for (std::size_t k = 0; k < p.units(); ++k)
    for (std::size_t r = 0; r < p.regions(); ++r) out[k] += t.weights(k, r) * s(k, r);
  return out;
}

Vec forward_with_selection(const MasoParams& p, std::span<const double> z, const HardSelection& t) {
  check_input(p, z);
  if (t.units() != p.units()) throw ShapeError("selection shape does not match MASO");
  Vec out(p.units());
  for (std::size_t k = 0; k < p.units(); ++k) {
    const std::size_t r = t.codes[k];
    if (r >= p.regions()) throw DomainError("region code out of range");
    out[k] = dot(p.slope(k, r), z) + p.offset(k, r);
  }
  return out;
}

SelectedAffine selection_to_affine(const MasoParams& p, const HardSelection& sel) {
  if (sel.units() != p.units()) throw ShapeError("selection shape does not match MASO");
  SelectedAffine a{Matrix(p.units(), p.input_dim()), Vec(p.units())};
  for (std::size_t k = 0; k < p.units(); ++k) {
    const std::size_t r = sel.codes[k];
    if (r >= p.regions()) throw DomainError("region code " + std::to_string(r) + " out of range");
    const auto row = p.slope(k, r);
    std::copy(row.begin(), row.end(), a.slope.row(k).begin());
    a.offset[k] = p.offset(k, r);
  }
  return a;
}

double entropy(std::span<const double> t) {
  double h = 0.0;
  for (double x : t)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

double entropy_objective_row(std::span<const double> scores, std::span<const double> t, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("entropy objective needs beta in [0,1]");
  return beta * dot(t, scores) + (1.0 - beta) * entropy(t);
}

Vec entropy_objective(const MasoParams& p, std::span<const double> z, const SoftSelection& t,
                      std::span<const double> beta) {
  if (t.units() != p.units() || t.regions() != p.regions()) throw ShapeError("selection shape does not match MASO");
  if (beta.size() != 1 && beta.size() != p.units()) throw ShapeError("beta must be shared or per unit");
  const Matrix s = region_scores(p, z);
  Vec out(p.units());
  for (std::size_t k = 0; k < p.units(); ++k)
    out[k] = entropy_objective_row(s.row(k), t.weights.row(k), beta.size() == 1 ? beta[0] : beta[k]);
  return out;
}

Matrix region_prior(const MasoParams& p) {
  Matrix logits(p.units(), p.regions());
  for (std::size_t k = 0; k < p.units(); ++k)
    for (std::size_t r = 0; r < p.regions(); ++r)
      logits(k, r) = p.offset(k, r) + 0.5 * squared_norm(p.slope(k, r));
  return row_softmax(logits, 1.0);
}

bool has_kmeans_bias(const MasoParams& p, double tol) {
  for (std::size_t k = 0; k < p.units(); ++k)
    for (std::size_t r = 0; r < p.regions(); ++r)
      if (std::abs(p.offset(k, r) + 0.5 * squared_norm(p.slope(k, r))) > tol) return false;
  return true;
}

HardSelection kmeans_codes(const MasoParams& p, std::span<const double> z) {
  check_input(p, z);
  if (!has_kmeans_bias(p)) throw PreconditionError("offsets do not satisfy B = -1/2 ||A||^2");
  HardSelection sel{std::vector<std::size_t>(p.units()), p.regions()};
  Vec dist(p.regions());
  for (std::size_t k = 0; k < p.units(); ++k) {
    for (std::size_t r = 0; r < p.regions(); ++r) {
      const auto c = p.slope(k, r);
      double d = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) d += (c[i] - z[i]) * (c[i] - z[i]);
      dist[r] = -d;
    }
    sel.codes[k] = argmax(dist);
  }
  return sel;
}

HardSelection codes_from_offset_perturbation(const MasoParams& p, std::span<const double> z, double eps) {
  if (!(eps > 0.0)) throw DomainError("perturbation size must be positive");
  Matrix s = region_scores(p, z);
  HardSelection sel{std::vector<std::size_t>(p.units()), p.regions()};
  for (std::size_t k = 0; k < p.units(); ++k) {
    auto row = s.row(k);
    const double base = *std::max_element(row.begin(), row.end());
    if (p.regions() > 1) {
      Vec sorted(row.begin(), row.end());
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      if (sorted[0] - sorted[1] <= 2.0 * eps) {
        throw AmbiguityError("unit " + std::to_string(k) + " lies within 2*eps of a region boundary");
      }
    }
    std::size_t hits = 0;
    for (std::size_t r = 0; r < p.regions(); ++r) {
      const double saved = row[r];
      row[r] += eps;
      const double bumped = *std::max_element(row.begin(), row.end());
      row[r] = saved;
      // The output moves by exactly eps for the active region and not at all otherwise.
      if (bumped - base > 0.5 * eps) {
        sel.codes[k] = r;
        ++hits;
      }
    }
    if (hits != 1) throw AmbiguityError("unit " + std::to_string(k) + " has no unique sensitive region");
  }
  return sel;
}

}  // namespace maso
