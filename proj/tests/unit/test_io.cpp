#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "maso/errors.hpp"
#include "maso/io.hpp"
#include "maso/learn.hpp"
#include "maso/tables.hpp"
#include "maso/toydata.hpp"
#include "testkit.hpp"

using namespace maso;

TEST(DatasetCsv, SingleRow) {
  const Dataset d = parse_dataset_csv("1.0,2.0,0\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.features(), 2u);
  EXPECT_EQ(d.points(0, 1), 2.0);
  EXPECT_EQ(d.labels[0], 0u);
}

TEST(DatasetCsv, HeaderIsSkipped) {
  const Dataset d = parse_dataset_csv("x1,x2,label\n0.5,-1,1\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.class_count, 2u);
}

TEST(DatasetCsv, Errors) {
  try {
    parse_dataset_csv("1.0,x,0\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  EXPECT_THROW(parse_dataset_csv("1,2,0\n1,0\n"), ParseError);
  EXPECT_THROW(parse_dataset_csv("1,2,5\n", 3), ParseError);
  EXPECT_THROW(parse_dataset_csv("1,2,-1\n"), ParseError);
}

TEST(DatasetCsv, ToyRoundTripIsBitExact) {
  ToyConfig cfg;
  cfg.per_class = 200;
  const Dataset d = generate_toy_dataset(3, cfg);
  const Dataset back = parse_dataset_csv(format_dataset_csv(d), 4);
  EXPECT_EQ(back.points, d.points);
  EXPECT_EQ(back.labels, d.labels);

  const auto path = std::filesystem::temp_directory_path() / "maso_io_roundtrip.csv";
  save_dataset_csv(path, d);
  EXPECT_EQ(load_dataset_csv(path).points, d.points);
  std::filesystem::remove(path);
}

TEST(NetworkJson, MinimalDenseDocument) {
  const Network net = parse_network_json(R"({"input_shape":[2],"class_count":2,
    "layers":[{"type":"dense","weight":{"shape":[2,2],"data":[1,2,3,4]},"bias":[0.5,-0.5]}]})");
  EXPECT_EQ(network_forward(net, Vec{1, 1}).output, (Vec{3.5, 6.5}));
}

TEST(NetworkJson, RoundTripSeededCnn) {
  testkit::Rng rng(5);
  Network net = testkit::conv_relu_pool_dense(5);
  net.layers.insert(net.layers.begin() + 1, BatchNorm{{0.1, 0.2}, {1.1, 0.9}, {1.0, 1.5}, {0.0, -0.2}, 1e-5});
  for (bool b64 : {false, true}) {
    const Network back = parse_network_json(format_network_json(net, b64));
    for (int t = 0; t < 10; ++t) {
      const Vec x = rng.normals(64);
      EXPECT_LE(max_abs_diff(network_forward(back, x).output, network_forward(net, x).output), 1e-15);
    }
  }
}

TEST(NetworkJson, SkipBlockAndBetaRoundTrip) {
  testkit::Rng rng(6);
  Network net;
  net.input_shape = {1, 4, 4};
  net.class_count = 2;
  SkipBlock s;
  s.conv = testkit::random_conv(rng, 1, 1, 3, 3);
  s.conv.padding = Padding::same_zero;
  s.activation = Activation{ActivationKind::lrelu, 0.2, rng.normals(16)};
  s.skip = testkit::random_conv(rng, 1, 1, 1, 1);
  s.skip_bias = rng.normals(16);
  net.layers.emplace_back(s);
  net.layers.emplace_back(spatial_avg_pool({1, 4, 4}, 2, 2));
  net.layers.emplace_back(testkit::random_dense(rng, 2, 4));
  const Network back = parse_network_json(format_network_json(net));
  const Vec x = rng.normals(16);
  EXPECT_EQ(network_forward(back, x, Inference::beta_vq(0.5)).output,
            network_forward(net, x, Inference::beta_vq(0.5)).output);
}

TEST(NetworkJson, SchemaErrors) {
  const char* stride0 = R"({"input_shape":[1,4,4],"class_count":1,"layers":[
    {"type":"conv","filters":{"shape":[1,1,2,2],"data":[1,1,1,1]},"bias":[0],"stride":0}]})";
  EXPECT_THROW(parse_network_json(stride0), SchemaError);
  const char* unknown = R"({"input_shape":[2],"class_count":2,"layers":[{"type":"lstm"}]})";
  try {
    parse_network_json(unknown);
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("layer 0"), std::string::npos);
  }
  const char* mismatch = R"({"input_shape":[3],"class_count":2,
    "layers":[{"type":"dense","weight":{"shape":[2,2],"data":[1,2,3,4]},"bias":[0,0]}]})";
  EXPECT_THROW(parse_network_json(mismatch), SchemaError);
}

TEST(MasoJson, RoundTrip) {
  testkit::Rng rng(7);
  const MasoParams p = testkit::random_maso(rng, 2, 3, 4);
  EXPECT_EQ(parse_maso_json(format_maso_json(p)), p);
}

TEST(Base64, RoundTripIsExact) {
  const Vec v{0.0, -1.5, 1e-300, 3.141592653589793, -0.0};
  const Vec back = base64_decode(base64_encode(v));
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(std::signbit(back[i]), std::signbit(v[i]));
  EXPECT_EQ(back, v);
}

TEST(FormatDouble, ReadsBackExactly) {
  testkit::Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const double v = rng.normal(1e3);
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(ToyData, CountsBoxAndDeterminism) {
  const Dataset a = generate_toy_dataset(11), b = generate_toy_dataset(11);
  EXPECT_EQ(a.size(), 20000u);
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.labels, b.labels);
  std::size_t counts[4] = {0, 0, 0, 0};
  double mean[4][2] = {};
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++counts[a.labels[i]];
    EXPECT_LE(std::abs(a.points(i, 0)), 2.0);
    EXPECT_LE(std::abs(a.points(i, 1)), 2.0);
    mean[a.labels[i]][0] += a.points(i, 0);
    mean[a.labels[i]][1] += a.points(i, 1);
  }
  for (auto c : counts) EXPECT_EQ(c, 5000u);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < i; ++j) {
      const double dx = (mean[i][0] - mean[j][0]) / 5000, dy = (mean[i][1] - mean[j][1]) / 5000;
      EXPECT_GT(std::hypot(dx, dy), 0.5);
    }
}

TEST(ActivationTable, Examples) {
  const Vec half{0.5}, high{0.999}, u1{1.0}, pm{-1.0, 1.0}, zero{0.0};
  auto rows = activation_table(ActivationKind::relu, half, u1);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_NEAR(rows[0].beta_value, 0.7311, 1e-4);
  EXPECT_NEAR(rows[0].soft, rows[0].beta_value, 1e-15);
  rows = activation_table(ActivationKind::relu, high, pm);
  EXPECT_NEAR(rows[0].beta_value, 0.0, 1e-2);
  EXPECT_NEAR(rows[1].beta_value, 1.0, 1e-2);
  rows = activation_table(ActivationKind::abs, half, zero);
  EXPECT_EQ(rows[0].beta_value, 0.0);
  EXPECT_THROW(activation_table(ActivationKind::relu, Vec{1.0}, u1), DomainError);
}

TEST(Csv, HeadersAndLineEndings) {
  const auto rows = activation_table(ActivationKind::relu, Vec{0.25, 0.75}, linspace(-1, 1, 5));
  const std::string csv = activation_table_csv(rows);
  EXPECT_EQ(csv.find('\r'), std::string::npos);
  EXPECT_EQ(csv.back(), '\n');
  EXPECT_EQ(csv.substr(0, 2), "u,");
  std::size_t lines = 0;
  for (char c : csv) lines += c == '\n';
  EXPECT_EQ(lines, 11u);

  UniversalityCurve curve;
  curve.points = {{2, 0.5}, {4, 0.125}};
  EXPECT_EQ(curve_csv(curve).substr(0, 12), "R,sup_error\n");
  RegionStats stats{2, {5, 1}};
  EXPECT_EQ(histogram_csv(stats), "rank,count\n1,5\n2,1\n");
}

TEST(Linspace, Endpoints) {
  const Vec v = linspace(-10, 10, 2001);
  EXPECT_EQ(v.front(), -10.0);
  EXPECT_EQ(v.back(), 10.0);
  EXPECT_NEAR(v[1000], 0.0, 1e-12);
}
