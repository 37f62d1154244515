#pragma once

// Tabular emitters. Every CSV has a header row, '.' decimals and LF endings.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "maso/learn.hpp"
#include "maso/maso.hpp"
#include "maso/partition.hpp"
#include "maso/splinefit.hpp"

namespace maso {

struct ActivationRow {
  double u = 0.0;
  double beta = 0.0;
  double hard = 0.0;  // argmax selection
  double soft = 0.0;  // softmax selection (β = 0.5)
  double beta_value = 0.0;
};

/// Evaluates a scalar-input MASO (K = D = 1) under the three inference
/// regimes for every (β, u) pair, β outermost. β must lie in (0, 1).
std::vector<ActivationRow> activation_table(const MasoParams& unit, std::span<const double> betas,
                                            std::span<const double> u_grid);
std::vector<ActivationRow> activation_table(ActivationKind kind, std::span<const double> betas,
                                            std::span<const double> u_grid, double nu = 0.1);

/// `count` evenly spaced values from lo to hi inclusive.
Vec linspace(double lo, double hi, std::size_t count);

std::string activation_table_csv(const std::vector<ActivationRow>& rows);
std::string history_csv(const std::vector<EpochRecord>& history);
std::string curve_csv(const UniversalityCurve& curve);
/// x1,…,xD,code_id per lattice point.
std::string grid_csv(const GridScan& scan);
/// rank,count with rank 1 the most occupied region.
std::string histogram_csv(const RegionStats& stats);
std::string matrix_csv(const Matrix& m, const std::string& row_label = "row");

}  // namespace maso
