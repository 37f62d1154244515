#include "maso/toydata.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "maso/errors.hpp"
#include "maso/learn.hpp"

namespace maso {

Dataset generate_toy_dataset(std::uint64_t seed, const ToyConfig& config) {
  if (config.per_class == 0) throw DomainError("need at least one point per class");
  if (!(config.box > 0.0) || !(config.radial_sigma > 0.0) || !(config.tangential_sigma > 0.0)) {
    throw DomainError("toy box and spreads must be positive");
  }
  constexpr std::size_t kClasses = 4;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  d.class_count = kClasses;
  d.points = Matrix(kClasses * config.per_class, 2);
  d.labels.resize(kClasses * config.per_class);
  std::size_t row = 0;
  for (std::size_t c = 0; c < kClasses; ++c) {
    const double angle = static_cast<double>(c) * std::numbers::pi / 2.0;
    const double ux = std::cos(angle), uy = std::sin(angle);
    for (std::size_t i = 0; i < config.per_class; ++i, ++row) {
      double x = 0.0, y = 0.0;
      do {
        const double r = config.ring_radius + config.radial_sigma * normal(rng);
        const double t = config.tangential_sigma * normal(rng);
        x = r * ux - t * uy;
        y = r * uy + t * ux;
      } while (std::abs(x) > config.box || std::abs(y) > config.box);
      d.points(row, 0) = x;
      d.points(row, 1) = y;
      d.labels[row] = c;
    }
  }
  return d;
}

Network toy_network(std::uint64_t seed) { return make_mlp(2, {45, 3}, 4, ActivationKind::relu, seed); }

}  // namespace maso
