#include "maso/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maso/errors.hpp"

namespace maso {

std::size_t LayerCode::units() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.units();
  return n;
}

std::vector<std::size_t> LayerCode::flat() const {
  std::vector<std::size_t> out;
  out.reserve(units());
  for (const auto& l : layers) out.insert(out.end(), l.codes.begin(), l.codes.end());
  return out;
}

LayerCode layer_code(const Network& net, std::span<const double> x, std::size_t layer_prefix) {
  if (layer_prefix > net.layers.size()) throw DomainError("layer prefix exceeds the network depth");
  ForwardResult fw = network_forward(net, x, Inference::hard(), layer_prefix);
  LayerCode code;
  for (auto& s : fw.selections) code.layers.push_back(std::move(s.hard));
  return code;
}

RegionTable build_region_table(const std::vector<LayerCode>& codes, std::vector<std::size_t>* ids) {
  RegionTable table;
  std::map<std::vector<std::size_t>, std::size_t> index;
  if (ids) ids->assign(codes.size(), 0);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    auto [it, inserted] = index.try_emplace(codes[i].flat(), table.regions.size());
    if (inserted) table.regions.push_back({codes[i], 0, i});
    ++table.regions[it->second].count;
    if (ids) (*ids)[i] = it->second;
  }
  table.total = codes.size();
  return table;
}

GridScan grid_scan(const Network& net, const std::vector<std::pair<double, double>>& bounds,
                   const std::vector<std::size_t>& resolution, std::size_t layer_prefix) {
  const std::size_t d = numel(net.input_shape);
  if (d > 3) throw DomainError("grid scans are limited to inputs of dimension 3 or less");
  if (bounds.size() != d || resolution.size() != d) throw ShapeError("one bound and resolution per input dimension");
  std::size_t total = 1;
  for (std::size_t i = 0; i < d; ++i) {
    if (resolution[i] < 2) throw DomainError("grid resolution must be at least 2");
    if (!(bounds[i].second > bounds[i].first)) throw DomainError("grid bounds must satisfy lo < hi");
    total *= resolution[i];
  }
  GridScan scan;
  scan.points = Matrix(total, d);
  std::vector<LayerCode> codes(total);
  for (std::size_t p = 0; p < total; ++p) {
    std::size_t rem = p;
    for (std::size_t i = d; i-- > 0;) {
      const std::size_t step = rem % resolution[i];
      rem /= resolution[i];
      const double t = static_cast<double>(step) / static_cast<double>(resolution[i] - 1);
      scan.points(p, i) = bounds[i].first + t * (bounds[i].second - bounds[i].first);
    }
    codes[p] = layer_code(net, scan.points.row(p), layer_prefix);
  }
  scan.table = build_region_table(codes, &scan.code_ids);
  return scan;
}

RegionStats region_stats(const Network& net, const Matrix& points, std::size_t layer_prefix) {
  if (points.rows() == 0) throw DomainError("region statistics need a nonempty dataset");
  std::vector<LayerCode> codes(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) codes[i] = layer_code(net, points.row(i), layer_prefix);
  const RegionTable t = build_region_table(codes);
  RegionStats s;
  s.nonempty_count = t.regions.size();
  for (const auto& r : t.regions) s.occupancy.push_back(r.count);
  std::sort(s.occupancy.begin(), s.occupancy.end(), std::greater<>());
  return s;
}

double vq_distance(const LayerCode& a, const LayerCode& b) {
  if (a.layers.size() != b.layers.size()) throw ShapeError("codes come from different layer prefixes");
  std::size_t units = 0, differ = 0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& ca = a.layers[l].codes;
    const auto& cb = b.layers[l].codes;
    if (ca.size() != cb.size()) throw ShapeError("layer " + std::to_string(l) + " unit counts differ");
    for (std::size_t k = 0; k < ca.size(); ++k) differ += ca[k] != cb[k];
    units += ca.size();
  }
  return units == 0 ? 0.0 : static_cast<double>(differ) / static_cast<double>(units);
}

std::vector<std::size_t> nearest_neighbors(const Network& net, std::size_t layer_prefix, std::size_t query_index,
                                           const Matrix& points, std::size_t k) {
  const std::size_t n = points.rows();
  if (query_index >= n) throw DomainError("query index out of range");
  if (k + 1 > n) throw DomainError("k must be at most the dataset size minus one");
  std::vector<LayerCode> codes(n);
  for (std::size_t i = 0; i < n; ++i) codes[i] = layer_code(net, points.row(i), layer_prefix);
  struct Cand {
    double vq, euclid;
    std::size_t index;
  };
  std::vector<Cand> cands;
  cands.reserve(n - 1);
  const auto q = points.row(query_index);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == query_index) continue;
    double e = 0.0;
    const auto p = points.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) e += (p[j] - q[j]) * (p[j] - q[j]);
    cands.push_back({vq_distance(codes[query_index], codes[i]), e, i});
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.vq != b.vq) return a.vq < b.vq;
    if (a.euclid != b.euclid) return a.euclid < b.euclid;
    return a.index < b.index;
  });
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = cands[i].index;
  return out;
}

}  // namespace maso
