#pragma once

// The 2-D four-class toy problem and its small ReLU classifier.

#include <cstddef>
#include <cstdint>

#include "maso/dataset.hpp"
#include "maso/layers.hpp"

namespace maso {

struct ToyConfig {
  std::size_t per_class = 5000;
  double ring_radius = 1.0;
  double radial_sigma = 0.3;
  double tangential_sigma = 0.15;
  double box = 2.0;  // points are kept inside [-box, box]²
};

/// Four anisotropic Gaussian blobs centred on a ring at angles c·π/2;
/// samples outside the box are redrawn. Points are grouped by class.
Dataset generate_toy_dataset(std::uint64_t seed, const ToyConfig& config = {});

/// 2 → 45 ReLU → 3 ReLU → 4 dense classifier, Gaussian-initialized.
Network toy_network(std::uint64_t seed);

}  // namespace maso
