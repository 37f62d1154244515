#include <gtest/gtest.h>

#include <cmath>

#include "maso/analysis.hpp"
#include "maso/errors.hpp"
#include "testkit.hpp"

using namespace maso;

namespace {

Network single_dense(const Matrix& W, const Vec& b) {
  Network net;
  net.input_shape = {W.cols()};
  net.class_count = W.rows();
  net.layers.emplace_back(Dense{W, b});
  return net;
}

Vec evaluate_form(const AffineForm& f, const Vec& x) {
  Vec y = matvec(f.A, x);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += f.b[i];
  return y;
}

Network skip_net(testkit::Rng& rng, std::size_t blocks, bool zero_skips = false) {
  Network net;
  net.input_shape = {1, 4, 4};
  net.class_count = 2;
  for (std::size_t i = 0; i < blocks; ++i) {
    SkipBlock s;
    s.conv = testkit::random_conv(rng, 1, 1, 3, 3, 0.6);
    s.conv.padding = Padding::same_zero;
    s.activation = Activation{ActivationKind::relu, 0.0, {}};
    s.skip = testkit::random_conv(rng, 1, 1, 1, 1, 0.9);
    if (zero_skips) s.skip.filters = Tensor({1, 1, 1, 1}, 0.0);
    net.layers.emplace_back(s);
  }
  net.layers.emplace_back(testkit::random_dense(rng, 2, 16, 0.5));
  return net;
}

}  // namespace

TEST(Decompose, IdentityNet) {
  const Network net = single_dense(Matrix::identity(3), Vec(3, 0.0));
  const AffineForm f = decompose(net, Vec{1, 2, 3});
  EXPECT_EQ(f.A, Matrix::identity(3));
  EXPECT_EQ(f.b, Vec(3, 0.0));
}

TEST(Decompose, SingleDenseIndependentOfInput) {
  const Matrix W{{1, 2}, {3, -4}, {0.5, 0}};
  const Vec b{0.1, 0.2, 0.3};
  const Network net = single_dense(W, b);
  for (const Vec& x : std::vector<Vec>{{0, 0}, {-7, 3}}) {
    const AffineForm f = decompose(net, x);
    EXPECT_EQ(f.A, W);
    EXPECT_EQ(f.b, b);
  }
}

TEST(Decompose, ReproducesForward) {
  const Network net = testkit::conv_relu_pool_dense(3);
  testkit::Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    const Vec x = rng.normals(64);
    const Vec f = network_forward(net, x).output;
    EXPECT_LE(max_abs_diff(evaluate_form(decompose(net, x), x), f), 1e-6 * (1.0 + max_abs(f)));
  }
}

TEST(Decompose, PrefixMatchesTruncatedForward) {
  const Network net = testkit::conv_relu_pool_dense(4);
  testkit::Rng rng(4);
  const Vec x = rng.normals(64);
  for (std::size_t upto = 0; upto <= net.layers.size(); ++upto) {
    const Vec f = network_forward(net, x, {}, upto).output;
    EXPECT_LE(max_abs_diff(evaluate_form(decompose(net, x, upto), x), f), 1e-10);
  }
}

TEST(Decompose, LocallyConstant) {
  const Network net = testkit::conv_relu_pool_dense(5);
  testkit::Rng rng(5);
  int compared = 0;
  for (int t = 0; t < 50; ++t) {
    const Vec x = rng.normals(64);
    Vec x2 = x;
    for (double& v : x2) v += rng.normal(1e-9);
    if (network_forward(net, x).selections.size() != network_forward(net, x2).selections.size()) continue;
    bool same = true;
    const auto s1 = network_forward(net, x).selections, s2 = network_forward(net, x2).selections;
    for (std::size_t i = 0; i < s1.size(); ++i) same = same && s1[i].hard == s2[i].hard;
    if (!same) continue;
    ++compared;
    const AffineForm a = decompose(net, x), b = decompose(net, x2);
    EXPECT_EQ(a.A, b.A);
    EXPECT_EQ(a.b, b.b);
  }
  EXPECT_GT(compared, 40);
}

TEST(Decompose, HandlesEveryLayerKind) {
  testkit::Rng rng(6);
  Network net;
  net.input_shape = {1, 6, 6};
  net.class_count = 2;
  Conv c = testkit::random_conv(rng, 2, 1, 3, 3);
  c.padding = Padding::same_zero;
  net.layers.emplace_back(c);
  net.layers.emplace_back(BatchNorm{{0.1, -0.1}, {1.5, 0.7}, {1.2, 0.8}, {0.0, 0.3}, 1e-5});
  net.layers.emplace_back(Activation{ActivationKind::abs, 0.0, {}});
  net.layers.emplace_back(spatial_avg_pool({2, 6, 6}, 2, 2));
  net.layers.emplace_back(channel_max_pool({2, 3, 3}, 2));
  net.layers.emplace_back(testkit::random_dense(rng, 2, 9));
  for (int t = 0; t < 20; ++t) {
    const Vec x = rng.normals(36);
    const Vec f = network_forward(net, x).output;
    EXPECT_LE(max_abs_diff(evaluate_form(decompose(net, x), x), f), 1e-10);
  }
}

TEST(ClassTemplates, SingleDenseGivesWeights) {
  const Matrix W{{1, 2}, {3, 4}};
  const ClassTemplates t = class_templates(single_dense(W, Vec{0.5, -0.5}), Vec{1, 1});
  EXPECT_EQ(t.templates, W);
  EXPECT_EQ(t.biases, (Vec{0.5, -0.5}));
}

TEST(ClassTemplates, ReconstructLogits) {
  const Network net = testkit::conv_relu_pool_dense(7);
  testkit::Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    const Vec x = rng.normals(64);
    const ClassTemplates ct = class_templates(net, x);
    Vec y = matvec(ct.templates, x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += ct.biases[i];
    const Vec f = network_forward(net, x).output;
    EXPECT_LE(max_abs_diff(y, f), 1e-6 * (1.0 + max_abs(f)));
  }
}

TEST(ClassTemplates, RequiresFinalDense) {
  Network net;
  net.input_shape = {2};
  net.class_count = 2;
  net.layers.emplace_back(Activation{});
  EXPECT_THROW(class_templates(net, Vec{1, 2}), StructureError);
}

TEST(ResnetEnsemble, OneBlockTwoTerms) {
  testkit::Rng rng(8);
  const Network net = skip_net(rng, 1);
  const Vec x = rng.normals(16);
  const auto terms = resnet_ensemble_terms(net, x);
  ASSERT_EQ(terms.size(), 2u);
  Matrix sum = add(terms[0], terms[1]);
  EXPECT_LE(max_abs_diff(sum.data(), decompose(net, x).A.data()), 1e-12);
}

TEST(ResnetEnsemble, SumMatchesDecomposition) {
  testkit::Rng rng(9);
  for (std::size_t blocks = 2; blocks <= 5; ++blocks) {
    const Network net = skip_net(rng, blocks);
    const Vec x = rng.normals(16);
    const auto terms = resnet_ensemble_terms(net, x);
    ASSERT_EQ(terms.size(), std::size_t{1} << blocks);
    Matrix sum(terms[0].rows(), terms[0].cols());
    for (const auto& m : terms) sum = add(sum, m);
    EXPECT_LE(max_abs_diff(sum.data(), decompose(net, x).A.data()), 1e-9);
  }
}

TEST(ResnetEnsemble, ZeroSkipsLeaveOnlyPlainProduct) {
  testkit::Rng rng(10);
  const Network net = skip_net(rng, 3, true);
  const Vec x = rng.normals(16);
  const auto terms = resnet_ensemble_terms(net, x);
  std::size_t nonzero = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (max_abs(terms[i].data()) > 0.0) {
      ++nonzero;
      EXPECT_EQ(i, terms.size() - 1);
    }
  }
  EXPECT_LE(nonzero, 1u);
  EXPECT_LE(max_abs_diff(terms.back().data(), decompose(net, x).A.data()), 1e-12);
}

TEST(ResnetEnsemble, RejectsNonSkipLayers) {
  const Network net = testkit::conv_relu_pool_dense(11);
  EXPECT_THROW(resnet_ensemble_terms(net, Vec(64, 0.0)), StructureError);
}

TEST(PartialProductNorms, IdentityAndContractiveLayers) {
  Network net;
  net.input_shape = {4};
  net.class_count = 4;
  for (int i = 0; i < 4; ++i) net.layers.emplace_back(Dense{Matrix::identity(4), Vec(4, 0.0)});
  for (double n : partial_product_norms(net, Vec(4, 1.0))) EXPECT_NEAR(n, 2.0, 1e-15);

  Matrix half = Matrix::identity(4);
  for (double& v : half.data()) v *= 0.5;
  for (auto& l : net.layers) std::get<Dense>(l).weight = half;
  const Vec norms = partial_product_norms(net, Vec(4, 1.0));
  ASSERT_GE(norms.size(), 2u);
  for (std::size_t i = 1; i < norms.size(); ++i) EXPECT_NEAR(norms[i], 0.5 * norms[i - 1], 1e-15);
}

TEST(ConvexityProbe, AbsLayerIsConvex) {
  Network net;
  net.input_shape = {3};
  net.class_count = 3;
  net.layers.emplace_back(Activation{ActivationKind::abs, 0.0, {}});
  const ConvexityReport r = convexity_probe(net, 2000, 1);
  ASSERT_EQ(r.pass_fraction.size(), 3u);
  for (double f : r.pass_fraction) EXPECT_EQ(f, 1.0);
}

TEST(ConvexityProbe, SignedNetworkHasWitness) {
  testkit::Rng rng(12);
  Network net;
  net.input_shape = {2};
  net.class_count = 1;
  net.layers.emplace_back(testkit::random_dense(rng, 8, 2, 1.0));
  net.layers.emplace_back(Activation{ActivationKind::relu, 0.0, {}});
  Dense d = testkit::random_dense(rng, 1, 8, 1.0);
  for (std::size_t j = 0; j < 8; ++j) d.weight(0, j) = (j % 2 == 0 ? -1.0 : 1.0) * std::abs(d.weight(0, j));
  net.layers.emplace_back(d);
  const ConvexityReport r = convexity_probe(net, 5000, 2);
  EXPECT_LT(r.pass_fraction[0], 1.0);
}
