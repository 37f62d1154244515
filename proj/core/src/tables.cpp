#include "maso/tables.hpp"

#include "maso/errors.hpp"
#include "maso/io.hpp"
#include "maso/layers.hpp"

namespace maso {

std::vector<ActivationRow> activation_table(const MasoParams& unit, std::span<const double> betas,
                                            std::span<const double> u_grid) {
  if (unit.units() != 1 || unit.input_dim() != 1) throw ShapeError("activation table needs a scalar MASO unit");
  std::vector<BetaParam> params;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw DomainError("beta " + format_double(b) + " is outside (0, 1)");
    params.emplace_back(b);
  }
  std::vector<ActivationRow> rows;
  rows.reserve(betas.size() * u_grid.size());
  for (std::size_t bi = 0; bi < betas.size(); ++bi) {
    for (double u : u_grid) {
      const double z[1] = {u};
      ActivationRow r;
      r.u = u;
      r.beta = betas[bi];
      r.hard = forward_hard(unit, z).output[0];
      r.soft = forward_with_selection(unit, z, svq_infer(unit, z))[0];
      r.beta_value = forward_with_selection(unit, z, beta_vq_infer(unit, z, params[bi]))[0];
      rows.push_back(r);
    }
  }
  return rows;
}

std::vector<ActivationRow> activation_table(ActivationKind kind, std::span<const double> betas,
                                            std::span<const double> u_grid, double nu) {
  return activation_table(activation_as_maso(kind, 1, nu), betas, u_grid);
}

Vec linspace(double lo, double hi, std::size_t count) {
  if (count == 0) return {};
  if (count == 1) return {lo};
  Vec out(count);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  out.back() = hi;
  return out;
}

std::string activation_table_csv(const std::vector<ActivationRow>& rows) {
  std::string out = "u,beta,hard,soft,beta_value\n";
  for (const auto& r : rows) {
    out += format_double(r.u) + "," + format_double(r.beta) + "," + format_double(r.hard) + "," +
           format_double(r.soft) + "," + format_double(r.beta_value) + "\n";
  }
  return out;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,loss,accuracy,template_penalty,filter_penalty\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch) + "," + format_double(h.loss) + "," + format_double(h.accuracy) + "," +
           format_double(h.template_penalty) + "," + format_double(h.filter_penalty) + "\n";
  }
  return out;
}

std::string curve_csv(const UniversalityCurve& curve) {
  std::string out = "R,sup_error\n";
  for (const auto& p : curve.points) out += std::to_string(p.regions) + "," + format_double(p.sup_error) + "\n";
  return out;
}

std::string grid_csv(const GridScan& scan) {
  std::string out;
  for (std::size_t j = 0; j < scan.points.cols(); ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "code_id\n";
  for (std::size_t i = 0; i < scan.points.rows(); ++i) {
    for (double v : scan.points.row(i)) out += format_double(v) + ",";
    out += std::to_string(scan.code_ids[i]) + "\n";
  }
  return out;
}

std::string histogram_csv(const RegionStats& stats) {
  std::string out = "rank,count\n";
  for (std::size_t i = 0; i < stats.occupancy.size(); ++i)
    out += std::to_string(i + 1) + "," + std::to_string(stats.occupancy[i]) + "\n";
  return out;
}

std::string matrix_csv(const Matrix& m, const std::string& row_label) {
  std::string out = row_label;
  for (std::size_t j = 0; j < m.cols(); ++j) out += ",c" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out += std::to_string(i);
    for (double v : m.row(i)) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

}  // namespace maso
