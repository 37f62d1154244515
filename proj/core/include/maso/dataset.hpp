#pragma once

#include <cstddef>
#include <vector>

#include "maso/ndcore.hpp"

namespace maso {

/// Labelled points, one row of `points` per example.
struct Dataset {
  Matrix points;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;

  std::size_t size() const { return points.rows(); }
  std::size_t features() const { return points.cols(); }
};

}  // namespace maso
