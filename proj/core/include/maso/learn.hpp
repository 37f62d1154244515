#pragma once

// Training: cross-entropy, exact backpropagation through hard, soft and β
// selections, Adam, orthogonality penalties and Gram-Schmidt
// reparametrization.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "maso/dataset.hpp"
#include "maso/layers.hpp"

namespace maso {

/// A named view of one trainable array inside a Network.
struct ParamRef {
  std::string name;
  std::span<double> values;
};

/// Trainable arrays in a fixed order: dense weight and bias, conv filters
/// and bias, batch-norm scale and shift, β logits when present, and for skip
/// blocks the main conv, its β logits, the skip conv and skip_bias.
std::vector<ParamRef> parameters(Network& net);

/// Gradient arrays aligned with parameters(net).
struct Gradients {
  std::vector<Vec> values;

  static Gradients zeros_like(const Network& net);
  void scale(double s);
  void add(const Gradients& other);
};

/// −logits[label] + logsumexp(logits).
double cross_entropy(std::span<const double> logits, std::size_t label);

struct BackwardResult {
  double loss = 0.0;
  Vec logits;
  Gradients grads;
  /// Hard mode only: some unit sat within 1e-9 of a region boundary, so the
  /// returned gradient is the tie-rule side of a kink.
  bool near_boundary = false;
};

BackwardResult backward(const Network& net, std::span<const double> x, std::size_t label,
                        const Inference& inf = Inference::hard());

struct Penalty {
  double value = 0.0;
  Matrix gradient;
};

/// γ Σ_{c1≠c2} <W_c1, W_c2>² over ordered pairs of rows.
Penalty ortho_penalty_templates(const Matrix& W, double gamma);

/// λ Σ_k Σ_{k'≠k} <w_k, w_k'>² for the rows of a layer weight.
Penalty ortho_penalty_filters(const Matrix& W, double lambda);

struct MasoPenalty {
  double value = 0.0;
  Vec gradient;  // same layout as MasoParams::slopes()
};

/// λ Σ_k Σ_{k'≠k} Σ_{r,r'} <A[k,r], A[k',r']>²; same-unit pairs excluded.
MasoPenalty ortho_penalty_filters(const MasoParams& p, double lambda);

/// Classical Gram-Schmidt on the rows without renormalization:
/// w'_k = w_k − Σ_{j<k} (<w'_j, w_k>/‖w'_j‖²) w'_j.
/// Throws DegeneracyError when a row is (numerically) in the span of the previous ones.
Matrix gram_schmidt(const Matrix& M);

/// Vector-Jacobian product of gram_schmidt at M.
Matrix gram_schmidt_vjp(const Matrix& M, const Matrix& grad_out);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<Vec> m;
  std::vector<Vec> v;
  std::size_t step = 0;
};

AdamState adam_init(const std::vector<ParamRef>& params);
void adam_step(const std::vector<ParamRef>& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  AdamConfig adam;
  /// Multiplies the learning rate after every epoch.
  double lr_decay = 1.0;
  double gamma = 0.0;   // template orthogonality weight (last dense layer)
  double lambda = 0.0;  // filter orthogonality weight (all dense/conv weights)
  Inference inference;
  /// Attach per-unit β logits (initialized to β = 0.5) to every activation
  /// and train them; forces β-VQ inference.
  bool learnable_beta = false;
  /// Reparametrize dense weights with at most as many rows as columns
  /// through gram_schmidt.
  bool gram_schmidt = false;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean cross-entropy over the epoch's examples
  double accuracy = 0.0;
  double template_penalty = 0.0;  // unweighted template Gram off-diagonal energy
  double filter_penalty = 0.0;    // unweighted filter Gram off-diagonal energy
};

struct TrainResult {
  Network net;
  std::vector<EpochRecord> history;
};

TrainResult train(Network net, const Dataset& data, const TrainConfig& config);

double accuracy(const Network& net, const Dataset& data, const Inference& inf = Inference::hard());

/// Σ_{c1≠c2} <W_c1, W_c2>² of the last dense layer.
double template_gram_energy(const Network& net);

/// Gaussian weights with standard deviation 1/√fan-in and zero biases.
void init_gaussian(Network& net, std::uint64_t seed);

/// Dense → activation → … → Dense, Gaussian-initialized.
Network make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t classes,
                 ActivationKind kind, std::uint64_t seed, double nu = 0.1);

/// True when <A[k,r], A[k',r']> vanishes (within tol) for all k ≠ k'.
bool has_orthogonal_units(const MasoParams& p, double tol = 1e-9);

/// Joint MAP codes of the factorial mixture, computed unit by unit. Requires
/// cross-unit slope orthogonality.
HardSelection joint_map_factorial(const MasoParams& p, std::span<const double> z);

}  // namespace maso
