#include "maso/splinefit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "maso/errors.hpp"

namespace maso {

namespace {

struct Piece {
  Vec slope;
  double offset = 0.0;
};

double piece_value(const Piece& p, std::span<const double> x) { return dot(p.slope, x) + p.offset; }

MasoParams to_params(const std::vector<Piece>& pieces, std::size_t D) {
  MasoParams out(1, pieces.size(), D);
  for (std::size_t r = 0; r < pieces.size(); ++r) {
    std::copy(pieces[r].slope.begin(), pieces[r].slope.end(), out.slope(0, r).begin());
    out.offset(0, r) = pieces[r].offset;
  }
  return out;
}

std::vector<Piece> from_params(const MasoParams& p) {
  std::vector<Piece> out(p.regions());
  for (std::size_t r = 0; r < p.regions(); ++r) {
    const auto s = p.slope(0, r);
    out[r].slope.assign(s.begin(), s.end());
    out[r].offset = p.offset(0, r);
  }
  return out;
}

// Centered least squares on the given samples; constant fit when singular.
Piece least_squares(const FitProblem& prob, std::span<const std::size_t> idx) {
  const std::size_t D = prob.points.cols();
  Piece p{Vec(D, 0.0), 0.0};
  if (idx.empty()) return p;
  Vec xm(D, 0.0);
  double ym = 0.0;
  for (auto i : idx) {
    const auto x = prob.points.row(i);
    for (std::size_t d = 0; d < D; ++d) xm[d] += x[d];
    ym += prob.values[i];
  }
  const double n = static_cast<double>(idx.size());
  for (double& v : xm) v /= n;
  ym /= n;
  Matrix S(D, D);
  Vec rhs(D, 0.0);
  for (auto i : idx) {
    const auto x = prob.points.row(i);
    const double dy = prob.values[i] - ym;
    for (std::size_t a = 0; a < D; ++a) {
      const double da = x[a] - xm[a];
      rhs[a] += da * dy;
      for (std::size_t b = 0; b < D; ++b) S(a, b) += da * (x[b] - xm[b]);
    }
  }
  try {
    p.slope = solve(S, rhs, 1e-12);
  } catch (const DegeneracyError&) {
    p.slope.assign(D, 0.0);
  }
  p.offset = ym - dot(p.slope, xm);
  return p;
}

std::vector<std::size_t> assign(const FitProblem& prob, const std::vector<Piece>& pieces) {
  std::vector<std::size_t> a(prob.values.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = prob.points.row(i);
    std::size_t best = 0;
    double bv = piece_value(pieces[0], x);
    for (std::size_t r = 1; r < pieces.size(); ++r) {
      const double v = piece_value(pieces[r], x);
      if (v > bv) {
        bv = v;
        best = r;
      }
    }
    a[i] = best;
  }
  return a;
}

double pieces_sup_error(const FitProblem& prob, const std::vector<Piece>& pieces, std::size_t* worst = nullptr) {
  double e = 0.0;
  for (std::size_t i = 0; i < prob.values.size(); ++i) {
    const auto x = prob.points.row(i);
    double v = piece_value(pieces[0], x);
    for (std::size_t r = 1; r < pieces.size(); ++r) v = std::max(v, piece_value(pieces[r], x));
    const double d = std::abs(v - prob.values[i]);
    if (d > e || (worst != nullptr && i == 0)) {
      e = std::max(e, d);
      if (worst != nullptr) *worst = i;
    }
  }
  return e;
}

// The ~n/R samples closest to sample `center`.
std::vector<std::size_t> neighborhood(const FitProblem& prob, std::size_t center, std::size_t count) {
  const std::size_t n = prob.values.size();
  std::vector<std::pair<double, std::size_t>> d(n);
  const auto c = prob.points.row(center);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = prob.points.row(i);
    double s = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) s += (x[t] - c[t]) * (x[t] - c[t]);
    d[i] = {s, i};
  }
  count = std::clamp<std::size_t>(count, std::min<std::size_t>(n, prob.points.cols() + 1), n);
  std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(count), d.end());
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = d[i].second;
  std::sort(out.begin(), out.end());
  return out;
}

void check_problem(const FitProblem& prob) {
  if (prob.regions < 1) throw DomainError("region budget must be at least 1");
  if (prob.points.rows() != prob.values.size()) throw ShapeError("one value per sample point is required");
  if (prob.points.cols() == 0) throw ShapeError("sample points need at least one coordinate");
  if (!all_finite(prob.points.data()) || !all_finite(prob.values)) throw DomainError("samples must be finite");
  std::set<Vec> distinct;
  for (std::size_t i = 0; i < prob.points.rows(); ++i) {
    const auto x = prob.points.row(i);
    distinct.emplace(x.begin(), x.end());
  }
  if (distinct.size() < prob.regions) {
    throw DomainError(std::to_string(distinct.size()) + " distinct samples cannot support " +
                      std::to_string(prob.regions) + " pieces");
  }
}

std::vector<Piece> initial_pieces(const FitProblem& prob) {
  const std::size_t n = prob.values.size(), D = prob.points.cols(), R = prob.regions;
  std::vector<Piece> pieces;
  if (D == 1) {
    // Secants between R+1 quantile knots.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return prob.points(a, 0) < prob.points(b, 0); });
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t i0 = order[r * (n - 1) / R];
      const std::size_t i1 = order[(r + 1) * (n - 1) / R];
      const double x0 = prob.points(i0, 0), x1 = prob.points(i1, 0);
      Piece p{Vec(1, 0.0), prob.values[i0]};
      if (x1 > x0) {
        p.slope[0] = (prob.values[i1] - prob.values[i0]) / (x1 - x0);
        p.offset = prob.values[i0] - p.slope[0] * x0;
      }
      pieces.push_back(p);
    }
    return pieces;
  }
  // Nearest-seed groups around R random samples.
  std::mt19937_64 rng(prob.seed);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::shuffle(all.begin(), all.end(), rng);
  for (std::size_t r = 0; r < R; ++r) pieces.push_back(least_squares(prob, neighborhood(prob, all[r], n / R)));
  return pieces;
}

MasoParams run(const FitProblem& prob, std::vector<Piece> pieces) {
  const std::size_t n = prob.values.size(), D = prob.points.cols();
  std::vector<Piece> best = pieces;
  double best_err = pieces_sup_error(prob, pieces);
  std::vector<std::size_t> prev;
  for (std::size_t it = 0; it < prob.max_iterations; ++it) {
    const auto a = assign(prob, pieces);
    if (a == prev) break;
    std::vector<std::vector<std::size_t>> groups(pieces.size());
    for (std::size_t i = 0; i < n; ++i) groups[a[i]].push_back(i);
    for (std::size_t r = 0; r < pieces.size(); ++r)
      if (!groups[r].empty()) pieces[r] = least_squares(prob, groups[r]);
    for (std::size_t r = 0; r < pieces.size(); ++r) {
      if (!groups[r].empty()) continue;
      std::size_t worst = 0;
      (void)pieces_sup_error(prob, pieces, &worst);
      pieces[r] = least_squares(prob, neighborhood(prob, worst, std::max<std::size_t>(n / pieces.size(), D + 1)));
    }
    const double e = pieces_sup_error(prob, pieces);
    if (e < best_err) {
      best_err = e;
      best = pieces;
    }
    prev = a;
  }
  return to_params(best, D);
}

}  // namespace

FitProblem grid_problem(const std::function<double(double)>& f, double lo, double hi, std::size_t count,
                        std::size_t regions) {
  if (count < 2 || !(hi > lo)) throw DomainError("grid needs at least two points on a nonempty interval");
  FitProblem p;
  p.points = Matrix(count, 1);
  p.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
    p.points(i, 0) = x;
    p.values[i] = f(x);
  }
  p.regions = regions;
  return p;
}

MasoParams fit_max_affine(const FitProblem& prob) {
  check_problem(prob);
  return run(prob, initial_pieces(prob));
}

MasoParams fit_max_affine_warm(const FitProblem& prob, const MasoParams& previous) {
  if (previous.units() != 1 || previous.input_dim() != prob.points.cols()) {
    throw ShapeError("warm start must be a scalar spline on the same domain");
  }
  FitProblem p = prob;
  p.regions = previous.regions() + 1;
  check_problem(p);
  // Duplicate the piece active at the worst sample: same function, one more
  // piece for the iterations to split off.
  auto pieces = from_params(previous);
  std::size_t worst = 0;
  (void)pieces_sup_error(p, pieces, &worst);
  const auto a = assign(p, pieces);
  pieces.push_back(pieces[a[worst]]);
  return run(p, std::move(pieces));
}

Vec spline_values(const MasoParams& spline, const Matrix& points) {
  if (spline.units() < 1 || spline.input_dim() != points.cols()) throw ShapeError("spline and points disagree");
  Vec out(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double v = -INFINITY;
    for (std::size_t r = 0; r < spline.regions(); ++r)
      v = std::max(v, dot(spline.slope(0, r), points.row(i)) + spline.offset(0, r));
    out[i] = v;
  }
  return out;
}

double sup_error(const Matrix& points, std::span<const double> values, const MasoParams& spline) {
  if (values.size() != points.rows()) throw ShapeError("one value per sample point is required");
  const Vec s = spline_values(spline, points);
  return max_abs_diff(s, values);
}

double sup_error(const FitProblem& prob, const MasoParams& spline) {
  return sup_error(prob.points, prob.values, spline);
}

UniversalityCurve universality_curve(const std::function<double(double)>& f, const std::vector<std::size_t>& regions,
                                     double lo, double hi, std::size_t grid) {
  if (regions.empty()) throw DomainError("no region counts given");
  for (std::size_t i = 1; i < regions.size(); ++i)
    if (regions[i] <= regions[i - 1]) throw DomainError("region counts must increase");
  UniversalityCurve curve;
  double scale = 0.0;
  for (auto R : regions) {
    FitProblem p = grid_problem(f, lo, hi, grid, R);
    if (scale == 0.0) scale = max_abs(p.values);
    const MasoParams s = fit_max_affine(p);
    const double e = sup_error(p, s);
    curve.points.push_back({R, e});
    curve.c = std::max(curve.c, e * static_cast<double>(R));
  }
  const double floor = 1e-9 * (1.0 + scale);
  curve.degenerate = std::any_of(curve.points.begin(), curve.points.end(),
                                 [&](const CurvePoint& p) { return p.sup_error <= floor; }) ||
                     curve.points.size() < 2;
  if (!curve.degenerate) {
    double mx = 0.0, my = 0.0;
    for (const auto& p : curve.points) {
      mx += std::log(static_cast<double>(p.regions));
      my += std::log(p.sup_error);
    }
    const double n = static_cast<double>(curve.points.size());
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (const auto& p : curve.points) {
      const double dx = std::log(static_cast<double>(p.regions)) - mx;
      sxy += dx * (std::log(p.sup_error) - my);
      sxx += dx * dx;
    }
    curve.loglog_slope = sxy / sxx;
  }
  return curve;
}

}  // namespace maso
