#pragma once

// Deep-network operators and their exact rewriting as MASOs.
//
// Feature maps are flattened row-major as (channel, row, column). A network
// is an ordered list of LayerSpec values; every layer is either affine
// (a degenerate MASO with one region) or a MASO with R > 1 regions per unit.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "maso/maso.hpp"
#include "maso/ndcore.hpp"

namespace maso {

struct Dense {
  Matrix weight;  // out × in
  Vec bias;
};

enum class Padding { valid, same_zero };

struct Conv {
  Tensor filters;  // out-ch × in-ch × h × w
  Vec bias;        // one per output channel
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  Padding padding = Padding::valid;
};

enum class ActivationKind { relu, lrelu, abs };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double nu = 0.0;  // leaky slope, lrelu only
  /// Optional learnable β pre-parameters (one shared value or one per unit);
  /// β = logistic(logit). Only consulted under β-VQ inference.
  Vec beta_logit;
};

struct MaxPool {
  std::vector<std::vector<std::size_t>> regions;  // indices into the flattened input
  Shape out_shape;                                // empty: flat {regions.size()}
};

struct AvgPool {
  std::vector<std::vector<std::size_t>> regions;
  Shape out_shape;
};

struct BatchNorm {
  Vec mean;
  Vec var;
  Vec scale;  // γ
  Vec shift;  // β_bn
  double epsilon = 1e-5;
};

/// z' = C_skip z + σ(C z + b_C) + b_skip, with b_skip the skip convolution
/// bias plus the per-feature `skip_bias` (empty means zero).
struct SkipBlock {
  Conv conv;
  Activation activation;
  Conv skip;
  Vec skip_bias;
};

using LayerSpec = std::variant<Dense, Conv, Activation, MaxPool, AvgPool, BatchNorm, SkipBlock>;

std::string layer_name(const LayerSpec& layer);
/// True for layers with more than one region per unit.
bool is_nonlinear(const LayerSpec& layer);

struct Network {
  Shape input_shape;
  std::size_t class_count = 0;
  std::vector<LayerSpec> layers;
};

/// Output shape of every layer. Throws ShapeError when dimensions do not
/// chain or the last layer does not emit `class_count` values.
std::vector<Shape> layer_shapes(const Network& net);
Shape layer_output_shape(const LayerSpec& layer, const Shape& in);
void validate(const Network& net);

// ---------------------------------------------------------------------------
// MASO builders

MasoParams dense_as_maso(const Matrix& weight, std::span<const double> bias);
MasoParams activation_as_maso(ActivationKind kind, std::size_t dim, double nu = 0.0);
enum class PoolKind { max, avg };
MasoParams pool_as_maso(const std::vector<std::vector<std::size_t>>& regions, std::size_t input_dim, PoolKind kind);

/// Folds an R=1 MASO (the linear operator) into the MASO that follows it.
MasoParams compose_layer_maso(const MasoParams& linear, const MasoParams& nonlinear);

/// Exact MASO form of a single layer acting on the flattened input.
MasoParams layer_as_maso(const LayerSpec& layer, const Shape& in);

/// Groups the network into the MASO layers of the spline view: each run of
/// affine operators is merged into the next nonlinear operator; a trailing
/// affine run becomes a degenerate MASO.
std::vector<MasoParams> network_as_masos(const Network& net);

bool slope_nonnegativity(const MasoParams& p);

// ---------------------------------------------------------------------------
// Convolution

Shape conv_output_shape(const Conv& conv, const Shape& in);
/// Explicit D_out × D_in matrix; conv_forward(x) = M·x + broadcast bias.
Matrix conv_to_matrix(const Conv& conv, const Shape& in);
/// Direct sliding-window evaluation (bias included).
Vec conv_forward(const Conv& conv, const Shape& in, std::span<const double> x);
/// Accumulates filter and bias gradients; returns the input gradient.
Vec conv_backward(const Conv& conv, const Shape& in, std::span<const double> x, std::span<const double> grad_out,
                  std::span<double> grad_filters, std::span<double> grad_bias);
/// Per-output-feature bias vector.
Vec conv_bias_broadcast(const Conv& conv, const Shape& out);

// ---------------------------------------------------------------------------
// Batch normalization

struct FoldedAffine {
  Vec scale;
  Vec shift;
};

/// scale = γ/√(var+ε), shift = β_bn − γ·mean/√(var+ε).
FoldedAffine bn_fold_affine(const BatchNorm& bn);
/// The folded affine broadcast to every flattened feature of `in`
/// (statistics are per feature, or per channel for rank-3 inputs).
FoldedAffine bn_fold_broadcast(const BatchNorm& bn, const Shape& in);
/// Index of the statistic used by flattened feature `i`.
std::size_t bn_stat_index(const BatchNorm& bn, const Shape& in, std::size_t i);

// ---------------------------------------------------------------------------
// Pooling helpers

/// Non-overlapping ph×pw windows on a (C,H,W) map; output shape (C,H/ph,W/pw).
MaxPool spatial_max_pool(const Shape& in, std::size_t ph, std::size_t pw);
AvgPool spatial_avg_pool(const Shape& in, std::size_t ph, std::size_t pw);
/// Regions that gather `group` consecutive channels at each pixel (maxout).
MaxPool channel_max_pool(const Shape& in, std::size_t group);

/// Regions padded to a uniform size by repeating the last index.
std::vector<std::vector<std::size_t>> pad_regions(const std::vector<std::vector<std::size_t>>& regions);

// ---------------------------------------------------------------------------
// Evaluation

struct Inference {
  enum class Mode { hard, soft, beta };
  Mode mode = Mode::hard;
  double beta = 0.5;  // β-VQ only

  static Inference hard() { return {}; }
  static Inference soft() { return {Mode::soft, 0.5}; }
  static Inference beta_vq(double b) { return {Mode::beta, b}; }
};

/// Per-unit region slopes (c0, c1) of an elementwise activation.
std::pair<double, double> activation_slopes(const Activation& act);

/// Inverse temperatures used by a nonlinear layer with `units` units.
Vec layer_eta(const Inference& inf, const Activation* act, std::size_t units);

struct LayerEval {
  Vec output;
  Shape out_shape;
  std::optional<HardSelection> hard;  // nonlinear layers only
  std::optional<SoftSelection> soft;  // nonlinear layers under soft/β inference
};

LayerEval evaluate_layer(const LayerSpec& layer, const Shape& in, std::span<const double> z,
                         const Inference& inf = {});

struct LayerSelection {
  std::size_t layer = 0;
  HardSelection hard;
};

struct ForwardResult {
  Vec output;
  Shape out_shape;
  /// Hard codes of every nonlinear layer evaluated, in order.
  std::vector<LayerSelection> selections;
};

/// Runs the first `upto` layers (all when empty).
ForwardResult network_forward(const Network& net, std::span<const double> x, const Inference& inf = {},
                              std::optional<std::size_t> upto = std::nullopt);

Vec skip_block_forward(const SkipBlock& blk, const Shape& in, std::span<const double> z,
                       const Inference& inf = {});

/// Maps (A, b) to (Asel·A, Asel·b + bsel) for one layer at the given codes.
/// `codes` is ignored for affine layers.
void apply_selected_affine(const LayerSpec& layer, const Shape& in, const HardSelection* codes, Matrix& A, Vec& b);

// ---------------------------------------------------------------------------
// Apodization

/// Sums every unit-stride patch of `image` (H×W or C×H×W) weighted by the
/// patch-shaped `window`, placing each patch back at its position. On the
/// fully covered interior the result equals the image when the window sums
/// to one. Throws WindowError otherwise.
Tensor apodized_reconstruct(const Tensor& image, std::size_t patch_h, std::size_t patch_w, const Tensor& window);

/// Boxcar window rescaled to unit sum.
Tensor boxcar_window(std::size_t patch_h, std::size_t patch_w);

}  // namespace maso
