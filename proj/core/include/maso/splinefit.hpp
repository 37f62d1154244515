#pragma once

// Fitting convex functions by a single max-affine spline unit.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "maso/maso.hpp"

namespace maso {

struct FitProblem {
  Matrix points;  // n × D sample locations
  Vec values;     // f at each sample
  std::size_t regions = 1;
  std::size_t max_iterations = 200;
  std::uint64_t seed = 0;  // initialization for D > 1
};

/// 1-D problem sampling f at `count` evenly spaced points of [lo, hi].
FitProblem grid_problem(const std::function<double(double)>& f, double lo, double hi, std::size_t count,
                        std::size_t regions);

/// Alternating argmax assignment / least-squares refit. Returns the iterate
/// with the lowest sup error (K = 1, R = prob.regions).
MasoParams fit_max_affine(const FitProblem& prob);

/// Starts from `previous` plus one extra piece; the result never has a larger
/// sup error than `previous`.
MasoParams fit_max_affine_warm(const FitProblem& prob, const MasoParams& previous);

/// Spline value max_r <A_r, x> + B_r of the first unit at every sample.
Vec spline_values(const MasoParams& spline, const Matrix& points);

double sup_error(const Matrix& points, std::span<const double> values, const MasoParams& spline);
double sup_error(const FitProblem& prob, const MasoParams& spline);

struct CurvePoint {
  std::size_t regions = 0;
  double sup_error = 0.0;
};

struct UniversalityCurve {
  std::vector<CurvePoint> points;
  /// Least-squares slope of log error against log R; empty when degenerate.
  std::optional<double> loglog_slope;
  /// max over R of error·R.
  double c = 0.0;
  bool degenerate = false;
};

/// Fits f on a 2001-point grid of [lo, hi] for every R in the increasing list.
UniversalityCurve universality_curve(const std::function<double(double)>& f, const std::vector<std::size_t>& regions,
                                     double lo = -1.0, double hi = 1.0, std::size_t grid = 2001);

}  // namespace maso
