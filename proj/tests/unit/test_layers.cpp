#include <gtest/gtest.h>

#include "maso/errors.hpp"
#include "maso/layers.hpp"
#include "testkit.hpp"

using namespace maso;

TEST(DenseAsMaso, Examples) {
  const MasoParams id = dense_as_maso(Matrix::identity(2), Vec{0, 0});
  EXPECT_EQ(forward_hard(id, Vec{3, -4}).output, (Vec{3, -4}));
  const MasoParams p = dense_as_maso(Matrix{{2, 0}}, Vec{1});
  EXPECT_EQ(p.regions(), 1u);
  EXPECT_EQ(forward_hard(p, Vec{3, 5}).output, Vec{7});
}

TEST(ActivationAsMaso, Examples) {
  EXPECT_EQ(forward_hard(activation_as_maso(ActivationKind::relu, 2), Vec{-2, 3}).output, (Vec{0, 3}));
  EXPECT_NEAR(forward_hard(activation_as_maso(ActivationKind::lrelu, 1, 0.1), Vec{-2}).output[0], -0.2, 1e-15);
  EXPECT_EQ(forward_hard(activation_as_maso(ActivationKind::abs, 2), Vec{-2, 2}).output, (Vec{2, 2}));
}

TEST(PoolAsMaso, Examples) {
  const HardOutput m = forward_hard(pool_as_maso({{0, 1}}, 2, PoolKind::max), Vec{1, 4});
  EXPECT_EQ(m.output, Vec{4});
  EXPECT_EQ(m.selection.codes, std::vector<std::size_t>{1});
  EXPECT_EQ(forward_hard(pool_as_maso({{0, 1, 2, 3}}, 4, PoolKind::avg), Vec{1, 2, 3, 6}).output, Vec{3});
}

TEST(PoolAsMaso, UnequalRegionsRepeatLastIndex) {
  const MasoParams p = pool_as_maso({{0}, {1, 2, 3}}, 4, PoolKind::max);
  EXPECT_EQ(p.regions(), 3u);
  EXPECT_EQ(forward_hard(p, Vec{-5, 1, 2, 0}).output, (Vec{-5, 2}));
}

TEST(PoolAsMaso, EmptyRegionThrows) {
  EXPECT_THROW(pool_as_maso({{0}, {}}, 2, PoolKind::max), DomainError);
}

TEST(ComposeLayerMaso, ReluOfDense) {
  const MasoParams p = compose_layer_maso(dense_as_maso(Matrix{{1, -1}}, Vec{0.5}),
                                          activation_as_maso(ActivationKind::relu, 1));
  EXPECT_EQ(p.regions(), 2u);
  EXPECT_EQ(p.slope(0, 0)[0], 0.0);
  EXPECT_EQ(p.slope(0, 1)[0], 1.0);
  EXPECT_EQ(p.slope(0, 1)[1], -1.0);
  EXPECT_EQ(p.offset(0, 0), 0.0);
  EXPECT_EQ(p.offset(0, 1), 0.5);
  EXPECT_EQ(forward_hard(p, Vec{2, 1}).output, Vec{1.5});
}

TEST(ComposeLayerMaso, IdentityLinearLeavesAbsUnchanged) {
  const MasoParams abs = activation_as_maso(ActivationKind::abs, 3);
  EXPECT_EQ(compose_layer_maso(dense_as_maso(Matrix::identity(3), Vec(3, 0.0)), abs), abs);
}

TEST(ComposeLayerMaso, MatchesSequentialEvaluation) {
  testkit::Rng rng(1);
  for (auto kind : {ActivationKind::relu, ActivationKind::lrelu, ActivationKind::abs}) {
    const Dense d = testkit::random_dense(rng, 5, 4, 1.0);
    const MasoParams act = activation_as_maso(kind, 5, 0.2);
    const MasoParams c = compose_layer_maso(dense_as_maso(d.weight, d.bias), act);
    for (int t = 0; t < 50; ++t) {
      const Vec x = rng.normals(4);
      Vec u = matvec(d.weight, x);
      for (std::size_t i = 0; i < 5; ++i) u[i] += d.bias[i];
      EXPECT_LE(max_abs_diff(forward_hard(c, x).output, forward_hard(act, u).output), 1e-12);
    }
  }
}

TEST(ConvToMatrix, OneDimensionalFilter) {
  Conv c;
  c.filters = Tensor({1, 1, 1, 2}, Vec{1, 2});
  c.bias = {0.0};
  const Matrix m = conv_to_matrix(c, {1, 1, 3});
  EXPECT_EQ(m, (Matrix{{1, 2, 0}, {0, 1, 2}}));
  EXPECT_EQ(matvec(m, Vec{1, 1, 1}), (Vec{3, 3}));
}

TEST(ConvToMatrix, MatchesDirectConvolution) {
  testkit::Rng rng(2);
  for (auto pad : {Padding::valid, Padding::same_zero}) {
    for (std::size_t stride : {1u, 2u}) {
      Conv c = testkit::random_conv(rng, 3, 2, 3, 3);
      c.padding = pad;
      c.stride_h = c.stride_w = stride;
      const Shape in{2, 7, 6};
      const Matrix m = conv_to_matrix(c, in);
      const Vec bias = conv_bias_broadcast(c, conv_output_shape(c, in));
      for (int t = 0; t < 20; ++t) {
        const Vec x = rng.normals(numel(in));
        Vec y = matvec(m, x);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias[i];
        const Vec ref = testkit::direct_conv(c, 2, 7, 6, x);
        EXPECT_LE(max_abs_diff(y, ref), 1e-10);
        EXPECT_LE(max_abs_diff(conv_forward(c, in, x), ref), 1e-10);
      }
    }
  }
}

TEST(ConvToMatrix, IncompatibleGeometryThrows) {
  testkit::Rng rng(3);
  const Conv c = testkit::random_conv(rng, 1, 2, 5, 5);
  EXPECT_THROW(conv_to_matrix(c, {2, 3, 3}), ShapeError);
  EXPECT_THROW(conv_to_matrix(c, {1, 8, 8}), ShapeError);
}

TEST(NetworkForward, IdentityNet) {
  Network net;
  net.input_shape = {3};
  net.class_count = 3;
  net.layers.emplace_back(Dense{Matrix::identity(3), Vec(3, 0.0)});
  net.layers.emplace_back(Dense{Matrix::identity(3), Vec(3, 0.0)});
  const Vec x{0.3, -1.2, 4.0};
  EXPECT_EQ(network_forward(net, x).output, x);
}

TEST(NetworkForward, RecordsSelectionsForNonlinearLayers) {
  const Network net = testkit::conv_relu_pool_dense(4);
  testkit::Rng rng(4);
  const ForwardResult r = network_forward(net, rng.normals(64));
  ASSERT_EQ(r.selections.size(), 2u);
  EXPECT_EQ(r.selections[0].layer, 1u);
  EXPECT_EQ(r.selections[1].layer, 2u);
  EXPECT_EQ(r.output.size(), 3u);
}

TEST(BatchNorm, FoldExamples) {
  BatchNorm bn{{0.0}, {1.0}, {2.0}, {1.0}, 0.0};
  FoldedAffine f = bn_fold_affine(bn);
  EXPECT_DOUBLE_EQ(f.scale[0], 2.0);
  EXPECT_DOUBLE_EQ(f.shift[0], 1.0);
  bn = BatchNorm{{0.0, 0.0}, {1.0, 1.0}, {1.0, 1.0}, {0.0, 0.0}, 0.0};
  f = bn_fold_affine(bn);
  EXPECT_EQ(f.scale, (Vec{1, 1}));
  EXPECT_EQ(f.shift, (Vec{0, 0}));
}

TEST(BatchNorm, NonPositiveVarianceThrows) {
  const BatchNorm bn{{0.0}, {-1.0}, {1.0}, {0.0}, 0.5};
  EXPECT_THROW(bn_fold_affine(bn), DomainError);
}

TEST(SkipBlock, IdentitySkipZeroConv) {
  SkipBlock blk;
  blk.conv.filters = Tensor({1, 1, 1, 1}, 0.0);
  blk.conv.bias = {0.7};
  blk.activation = Activation{};
  blk.skip.filters = Tensor({1, 1, 1, 1}, 1.0);
  blk.skip.bias = {0.0};
  blk.skip_bias = {0.1, 0.2, 0.3, 0.4};
  const Vec z{1, -2, 3, -4};
  const Vec y = skip_block_forward(blk, {1, 2, 2}, z);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y[i], z[i] + 0.7 + blk.skip_bias[i]);
}

TEST(SkipBlock, ZeroSkipReducesToConvActivation) {
  testkit::Rng rng(5);
  SkipBlock blk;
  blk.conv = testkit::random_conv(rng, 2, 2, 3, 3);
  blk.conv.padding = Padding::same_zero;
  blk.activation = Activation{ActivationKind::relu, 0.0, {}};
  blk.skip.filters = Tensor({2, 2, 1, 1}, 0.0);
  blk.skip.bias = {0.0, 0.0};
  const Shape in{2, 4, 4};
  const Vec z = rng.normals(32);
  const Vec u = testkit::direct_conv(blk.conv, 2, 4, 4, z);
  const Vec y = skip_block_forward(blk, in, z);
  for (std::size_t i = 0; i < 32; ++i) EXPECT_NEAR(y[i], testkit::relu(u[i]), 1e-12);
}

TEST(Apodization, ConstantImage) {
  const Tensor img({6, 6}, 2.5);
  const Tensor rec = apodized_reconstruct(img, 3, 3, boxcar_window(3, 3));
  for (std::size_t i = 2; i <= 3; ++i)
    for (std::size_t j = 2; j <= 3; ++j) EXPECT_NEAR(rec[i * 6 + j], 2.5, 1e-12);
}

TEST(Apodization, RandomImageDirectSum) {
  testkit::Rng rng(6);
  const Tensor img({8, 8}, rng.normals(64));
  const Tensor w({3, 3}, Vec(9, 1.0 / 9.0));
  const Tensor rec = apodized_reconstruct(img, 3, 3, w);
  // Direct overlap-add of every windowed patch.
  Vec acc(64, 0.0);
  for (std::size_t r = 0; r + 3 <= 8; ++r)
    for (std::size_t c = 0; c + 3 <= 8; ++c)
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) acc[(r + a) * 8 + c + b] += w[a * 3 + b] * img[(r + a) * 8 + c + b];
  for (std::size_t i = 2; i <= 5; ++i)
    for (std::size_t j = 2; j <= 5; ++j) {
      EXPECT_NEAR(rec[i * 8 + j], img[i * 8 + j], 1e-9);
      EXPECT_NEAR(rec[i * 8 + j], acc[i * 8 + j], 1e-12);
    }
}

TEST(Apodization, WindowSummingToTwoThrows) {
  const Tensor img({5, 5}, 1.0);
  EXPECT_THROW(apodized_reconstruct(img, 3, 3, Tensor({3, 3}, Vec(9, 2.0 / 9.0))), WindowError);
}

TEST(SlopeNonnegativity, Examples) {
  EXPECT_TRUE(slope_nonnegativity(activation_as_maso(ActivationKind::relu, 3)));
  EXPECT_FALSE(slope_nonnegativity(activation_as_maso(ActivationKind::abs, 3)));
  const MasoParams lr = compose_layer_maso(dense_as_maso(Matrix{{1, -0.5}}, Vec{0}),
                                           activation_as_maso(ActivationKind::lrelu, 1, 0.1));
  EXPECT_FALSE(slope_nonnegativity(lr));
}

TEST(Monotonicity, NonnegativeDeepSlopesGiveMonotoneNetwork) {
  testkit::Rng rng(7);
  Network net;
  net.input_shape = {3};
  net.class_count = 2;
  net.layers.emplace_back(testkit::random_dense(rng, 6, 3, 1.0));
  net.layers.emplace_back(Activation{ActivationKind::relu, 0.0, {}});
  Dense d = testkit::random_dense(rng, 2, 6, 1.0);
  for (double& w : d.weight.data()) w = std::abs(w);
  net.layers.emplace_back(d);
  const auto masos = network_as_masos(net);
  for (std::size_t i = 1; i < masos.size(); ++i) ASSERT_TRUE(slope_nonnegativity(masos[i]));

  // Layers 2..L are increasing, so a nonnegative shift of their input can
  // only raise the output.
  Network tail;
  tail.input_shape = {6};
  tail.class_count = 2;
  tail.layers.assign(net.layers.begin() + 1, net.layers.end());
  for (int t = 0; t < 200; ++t) {
    const Vec h = rng.normals(6);
    Vec h2 = h;
    for (double& v : h2) v += std::abs(rng.normal());
    const Vec a = network_forward(tail, h).output, b = network_forward(tail, h2).output;
    for (std::size_t k = 0; k < 2; ++k) EXPECT_GE(b[k], a[k] - 1e-12);
  }
}

TEST(LayerShapes, TracksConvAndPool) {
  const Network net = testkit::conv_relu_pool_dense(8);
  const auto shapes = layer_shapes(net);
  EXPECT_EQ(shapes[0], (Shape{2, 6, 6}));
  EXPECT_EQ(shapes[2], (Shape{2, 3, 3}));
  EXPECT_EQ(shapes[3], (Shape{3}));
}

TEST(Validate, RejectsMismatchedDense) {
  Network net;
  net.input_shape = {4};
  net.class_count = 2;
  net.layers.emplace_back(Dense{Matrix(2, 3), Vec(2, 0.0)});
  EXPECT_THROW(validate(net), ShapeError);
}
