#pragma once

// Input-space partition analytics. A region is identified by the joint hard
// codes of every nonlinear layer within a layer prefix.

#include <cstddef>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "maso/dataset.hpp"
#include "maso/layers.hpp"

namespace maso {

struct LayerCode {
  std::vector<HardSelection> layers;

  std::size_t units() const;
  /// All codes concatenated in layer order.
  std::vector<std::size_t> flat() const;
  bool operator==(const LayerCode&) const = default;
};

/// Joint codes of the nonlinear layers among the first `layer_prefix` layers.
LayerCode layer_code(const Network& net, std::span<const double> x, std::size_t layer_prefix);

struct RegionEntry {
  LayerCode code;
  std::size_t count = 0;
  std::size_t representative = 0;  // index of the first point seen in the region
};

struct RegionTable {
  std::vector<RegionEntry> regions;  // in order of first appearance
  std::size_t total = 0;
};

/// Groups codes into regions; `ids` receives the region id of each code.
RegionTable build_region_table(const std::vector<LayerCode>& codes, std::vector<std::size_t>* ids = nullptr);

struct GridScan {
  RegionTable table;
  Matrix points;                   // one lattice point per row, first dimension slowest
  std::vector<std::size_t> code_ids;
};

/// Scans a regular lattice (input dimension ≤ 3, resolution ≥ 2 per dimension).
GridScan grid_scan(const Network& net, const std::vector<std::pair<double, double>>& bounds,
                   const std::vector<std::size_t>& resolution, std::size_t layer_prefix);

struct RegionStats {
  std::size_t nonempty_count = 0;
  std::vector<std::size_t> occupancy;  // sorted descending
};

RegionStats region_stats(const Network& net, const Matrix& points, std::size_t layer_prefix);

/// Fraction of units whose codes differ; 0 iff every unit agrees.
double vq_distance(const LayerCode& a, const LayerCode& b);

/// The k dataset points closest to `query_index` in VQ distance at the given
/// prefix, ties broken by Euclidean distance and then index. Excludes the query.
std::vector<std::size_t> nearest_neighbors(const Network& net, std::size_t layer_prefix, std::size_t query_index,
                                           const Matrix& points, std::size_t k);

}  // namespace maso
