#pragma once

// Input-conditioned affine views of whole networks.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "maso/layers.hpp"

namespace maso {

/// f(x) = A·x + b on the region containing x.
struct AffineForm {
  Matrix A;
  Vec b;
};

/// Chains the selected affine map of every layer (hard inference) up to
/// `upto_layer` layers, or the whole network. At inputs exactly on a region
/// boundary the tie rule picks the lowest region, so the form is one-sided.
AffineForm decompose(const Network& net, std::span<const double> x,
                     std::optional<std::size_t> upto_layer = std::nullopt);

struct ClassTemplates {
  Matrix templates;  // C × D
  Vec biases;
};

/// Rows of W_last·A[x]: the input-conditioned matched filters whose inner
/// product with x gives the logits. Requires a final Dense layer.
ClassTemplates class_templates(const Network& net, std::span<const double> x);

/// Expands Π_ℓ (C_skip + A_σ[x]·C) over the skip blocks into its 2^L terms
/// (multiplied by a final Dense weight when present). Term index bit ℓ set
/// means block ℓ contributes its activation branch. The terms sum to
/// decompose(net, x).A.
std::vector<Matrix> resnet_ensemble_terms(const Network& net, std::span<const double> x);

/// Frobenius norms of the partial products of selected layer matrices for
/// depths 1..L−1.
Vec partial_product_norms(const Network& net, std::span<const double> x);

struct ConvexityReport {
  Vec pass_fraction;  // one per output dimension
  std::size_t samples = 0;
};

/// Midpoint test f((u+v)/2) ≤ (f(u)+f(v))/2 + 1e-9 on `samples` Gaussian pairs.
ConvexityReport convexity_probe(const Network& net, std::size_t samples, std::uint64_t seed);

}  // namespace maso
