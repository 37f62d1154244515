#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "maso/analysis.hpp"
#include "maso/errors.hpp"
#include "maso/partition.hpp"
#include "maso/toydata.hpp"
#include "testkit.hpp"

using namespace maso;

namespace {

Network relu_layer(const Matrix& W) {
  Network net;
  net.input_shape = {W.cols()};
  net.class_count = W.rows();
  net.layers.emplace_back(Dense{W, Vec(W.rows(), 0.0)});
  net.layers.emplace_back(Activation{ActivationKind::relu, 0.0, {}});
  return net;
}

LayerCode code_of(std::vector<std::size_t> a, std::size_t R = 2) {
  LayerCode c;
  c.layers.push_back(HardSelection{std::move(a), R});
  return c;
}

}  // namespace

TEST(GridScan, QuadrantsOfIdentityRelu) {
  const GridScan g = grid_scan(relu_layer(Matrix::identity(2)), {{-1, 1}, {-1, 1}}, {101, 101}, 2);
  EXPECT_EQ(g.table.regions.size(), 4u);
  EXPECT_EQ(g.points.rows(), 101u * 101u);
  EXPECT_EQ(g.code_ids.size(), g.points.rows());
}

TEST(GridScan, SingleUnitHasTwoCodes) {
  const GridScan g = grid_scan(relu_layer(Matrix{{1.0}}), {{-1, 1}}, {50}, 2);
  EXPECT_EQ(g.table.regions.size(), 2u);
}

TEST(GridScan, TooManyDimensionsThrows) {
  const Network net = relu_layer(Matrix::identity(4));
  EXPECT_THROW(grid_scan(net, {{-1, 1}, {-1, 1}, {-1, 1}, {-1, 1}}, {3, 3, 3, 3}, 2), DomainError);
}

TEST(GridScan, CountBoundedAndOrderInvariant) {
  const Network net = toy_network(3);
  const GridScan g = grid_scan(net, {{-2, 2}, {-2, 2}}, {60, 60}, 2);
  EXPECT_GT(g.table.regions.size(), 1u);
  EXPECT_LT(g.table.regions.size(), 200u);

  std::vector<LayerCode> codes;
  for (std::size_t i = 0; i < g.points.rows(); ++i) codes.push_back(layer_code(net, g.points.row(i), 2));
  std::reverse(codes.begin(), codes.end());
  EXPECT_EQ(build_region_table(codes).regions.size(), g.table.regions.size());
}

TEST(RegionStats, Examples) {
  const Network net = relu_layer(Matrix::identity(2));
  RegionStats s = region_stats(net, Matrix{{0.5, 0.5}}, 2);
  EXPECT_EQ(s.nonempty_count, 1u);
  s = region_stats(net, Matrix{{0.5, 0.5}, {0.1, 0.9}}, 2);
  EXPECT_EQ(s.nonempty_count, 1u);
  EXPECT_EQ(s.occupancy, std::vector<std::size_t>{2});
  s = region_stats(net, Matrix{{0.5, 0.5}, {0.1, 0.9}, {-1, 1}}, 2);
  EXPECT_EQ(s.occupancy, (std::vector<std::size_t>{2, 1}));
}

TEST(VqDistance, Examples) {
  EXPECT_EQ(vq_distance(code_of({0, 1, 1, 0}), code_of({0, 1, 1, 0})), 0.0);
  EXPECT_EQ(vq_distance(code_of({0, 1, 1, 0}), code_of({1, 0, 0, 1})), 1.0);
  EXPECT_EQ(vq_distance(code_of({0, 1, 1, 0}), code_of({0, 0, 1, 1})), 0.5);
  EXPECT_THROW(vq_distance(code_of({0, 1}), code_of({0, 1, 1})), ShapeError);
}

TEST(VqDistance, Pseudometric) {
  testkit::Rng rng(1);
  auto rnd = [&] {
    std::vector<std::size_t> c(6);
    for (auto& v : c) v = rng.index(3);
    return code_of(c, 3);
  };
  for (int t = 0; t < 2000; ++t) {
    const LayerCode a = rnd(), b = rnd(), c = rnd();
    EXPECT_EQ(vq_distance(a, b), vq_distance(b, a));
    EXPECT_EQ(vq_distance(a, a), 0.0);
    // Six units: compare mismatch counts, since k/6 is not exact in binary.
    auto count = [](double d) { return std::lround(d * 6.0); };
    EXPECT_LE(count(vq_distance(a, c)), count(vq_distance(a, b)) + count(vq_distance(b, c)));
  }
}

TEST(NearestNeighbors, DuplicateComesFirst) {
  testkit::Rng rng(2);
  const Network net = toy_network(2);
  Matrix pts = rng.matrix(30, 2);
  pts(17, 0) = pts(4, 0);
  pts(17, 1) = pts(4, 1);
  const auto nn = nearest_neighbors(net, 2, 4, pts, 5);
  ASSERT_EQ(nn.size(), 5u);
  EXPECT_EQ(nn[0], 17u);
}

TEST(NearestNeighbors, EmptyPrefixIsEuclidean) {
  testkit::Rng rng(3);
  const Network net = toy_network(3);
  const Matrix pts = rng.matrix(25, 2);
  const auto nn = nearest_neighbors(net, 0, 0, pts, 24);
  std::vector<std::pair<double, std::size_t>> ref;
  for (std::size_t i = 1; i < 25; ++i) {
    const double dx = pts(i, 0) - pts(0, 0), dy = pts(i, 1) - pts(0, 1);
    ref.push_back({dx * dx + dy * dy, i});
  }
  std::sort(ref.begin(), ref.end());
  for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(nn[i], ref[i].second);
}

TEST(NearestNeighbors, TooManyThrows) {
  const Network net = toy_network(4);
  EXPECT_THROW(nearest_neighbors(net, 2, 0, Matrix(5, 2), 5), DomainError);
}

TEST(LayerCode, SameCodeSameAffineMap) {
  testkit::Rng rng(5);
  const Network net = toy_network(5);
  const std::size_t L = net.layers.size();
  int compared = 0;
  for (int t = 0; t < 200; ++t) {
    const Vec x = rng.normals(2);
    Vec y = x;
    y[0] += rng.normal(1e-3);
    if (!(layer_code(net, x, L) == layer_code(net, y, L))) continue;
    ++compared;
    const AffineForm a = decompose(net, x), b = decompose(net, y);
    EXPECT_EQ(a.A, b.A);
    EXPECT_EQ(a.b, b.b);
  }
  EXPECT_GT(compared, 50);
}
