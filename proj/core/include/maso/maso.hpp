#pragma once

// Max-affine spline operators (MASOs) and their three vector-quantization
// inference regimes: hard (argmax), soft (softmax posterior) and β-weighted.
//
// A MASO with K units, R regions per unit and input dimension D computes
//
//   out[k] = max_r  <A[k,r,:], z> + B[k,r]
//
// Region 0 of every activation MASO built by this library is the inactive
// (negative) branch. Ties always resolve to the lowest region index.

#include <cstddef>
#include <span>
#include <vector>

#include "maso/ndcore.hpp"

namespace maso {

class MasoParams {
 public:
  MasoParams() = default;
  /// Zero slopes and offsets.
  MasoParams(std::size_t units, std::size_t regions, std::size_t input_dim);
  /// `slopes` is K*R*D row-major, `offsets` is K*R row-major.
  MasoParams(std::size_t units, std::size_t regions, std::size_t input_dim, Vec slopes, Vec offsets);

  std::size_t units() const { return K_; }
  std::size_t regions() const { return R_; }
  std::size_t input_dim() const { return D_; }

  std::span<double> slope(std::size_t k, std::size_t r) { return {A_.data() + (k * R_ + r) * D_, D_}; }
  std::span<const double> slope(std::size_t k, std::size_t r) const {
    return {A_.data() + (k * R_ + r) * D_, D_};
  }
  double& offset(std::size_t k, std::size_t r) { return B_[k * R_ + r]; }
  double offset(std::size_t k, std::size_t r) const { return B_[k * R_ + r]; }

  const Vec& slopes() const { return A_; }
  const Vec& offsets() const { return B_; }
  Vec& slopes() { return A_; }
  Vec& offsets() { return B_; }

  bool operator==(const MasoParams&) const = default;

 private:
  std::size_t K_ = 0;
  std::size_t R_ = 1;
  std::size_t D_ = 0;
  Vec A_;
  Vec B_;
};

/// One region index per unit (the one-hot rows of T_H).
struct HardSelection {
  std::vector<std::size_t> codes;
  std::size_t regions = 1;

  std::size_t units() const { return codes.size(); }
  bool operator==(const HardSelection&) const = default;
};

/// K×R matrix whose rows lie on the probability simplex.
struct SoftSelection {
  Matrix weights;

  std::size_t units() const { return weights.rows(); }
  std::size_t regions() const { return weights.cols(); }
};

/// β ∈ (0,1), either shared by every unit or given per unit.
class BetaParam {
 public:
  explicit BetaParam(double shared);
  explicit BetaParam(Vec per_unit);
  /// β = logistic(logit); η = β/(1−β) = exp(logit).
  static BetaParam from_logits(std::span<const double> logits);

  double value(std::size_t unit) const { return betas_.size() == 1 ? betas_[0] : betas_.at(unit); }
  /// η_k = β_k/(1−β_k), the inverse temperature of the β-VQ softmax.
  double ratio(std::size_t unit) const;
  std::size_t size() const { return betas_.size(); }

 private:
  BetaParam() = default;

  Vec betas_;
  Vec ratios_;
};

struct HardOutput {
  Vec output;
  HardSelection selection;
};

struct SelectedAffine {
  Matrix slope;
  Vec offset;
};

/// K×R matrix of affine scores <A[k,r,:], z> + B[k,r].
Matrix region_scores(const MasoParams& p, std::span<const double> z);

HardOutput forward_hard(const MasoParams& p, std::span<const double> z);

/// Posterior region probabilities: row softmax of the scores.
SoftSelection svq_infer(const MasoParams& p, std::span<const double> z);

/// Closed-form maximizer of β<t,score> + (1−β)H(t): softmax of η·score.
SoftSelection beta_vq_infer(const MasoParams& p, std::span<const double> z, const BetaParam& beta);

/// Row softmax of η_k·scores[k,:] with one inverse temperature per row.
SoftSelection soft_select(const Matrix& scores, std::span<const double> eta);

Vec forward_with_selection(const MasoParams& p, std::span<const double> z, const SoftSelection& t);
Vec forward_with_selection(const MasoParams& p, std::span<const double> z, const HardSelection& t);

/// Slope rows and offsets picked out by a hard selection; forward_hard(z)
/// equals slope·z + offset for the z that produced the selection.
SelectedAffine selection_to_affine(const MasoParams& p, const HardSelection& sel);

/// Shannon entropy with natural log and 0·log 0 = 0.
double entropy(std::span<const double> t);

/// β·<t, scores> + (1−β)·H(t) for one unit. β may be 0 or 1 here.
double entropy_objective_row(std::span<const double> scores, std::span<const double> t, double beta);

/// Per-unit β-VQ objective. `beta` holds one value per unit or a single
/// shared value, each in the closed interval [0,1].
Vec entropy_objective(const MasoParams& p, std::span<const double> z, const SoftSelection& t,
                      std::span<const double> beta);

/// Region prior of the Gaussian-mixture reading (unit variance):
/// π[k,r] ∝ exp(B[k,r] + ½‖A[k,r,:]‖²).
Matrix region_prior(const MasoParams& p);

/// True when B[k,r] = −½‖A[k,r,:]‖² for every unit and region.
bool has_kmeans_bias(const MasoParams& p, double tol = 1e-9);

/// Nearest-centroid codes. Requires the K-means bias condition.
HardSelection kmeans_codes(const MasoParams& p, std::span<const double> z);

/// Recovers hard codes by bumping each offset by `eps` and observing which
/// bump moves the unit output by `eps`. Throws AmbiguityError when the top
/// two scores of a unit are within 2·eps.
HardSelection codes_from_offset_perturbation(const MasoParams& p, std::span<const double> z, double eps);

}  // namespace maso
