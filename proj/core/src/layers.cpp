#include "maso/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "maso/errors.hpp"

namespace maso {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + ")";
}

struct Geometry {
  std::size_t channels, height, width;
};

Geometry as_image(const Shape& in) {
  switch (in.size()) {
    case 1:
      return {1, 1, in[0]};
    case 2:
      return {1, in[0], in[1]};
    case 3:
      return {in[0], in[1], in[2]};
    default:
      throw ShapeError("convolution input must have rank 1, 2 or 3, got " + shape_str(in));
  }
}

struct ConvGeometry {
  Geometry in;
  std::size_t out_ch, kh, kw, out_h, out_w, pad_top, pad_left;
};

ConvGeometry conv_geometry(const Conv& conv, const Shape& in) {
  if (conv.filters.rank() != 4) throw ShapeError("convolution filters must be out×in×h×w");
  if (conv.stride_h == 0 || conv.stride_w == 0) throw ShapeError("convolution stride must be positive");
  ConvGeometry g{};
  g.in = as_image(in);
  g.out_ch = conv.filters.extent(0);
  g.kh = conv.filters.extent(2);
  g.kw = conv.filters.extent(3);
  if (conv.filters.extent(1) != g.in.channels) {
    throw ShapeError("filters expect " + std::to_string(conv.filters.extent(1)) + " input channels, input " +
                     shape_str(in) + " has " + std::to_string(g.in.channels));
  }
  if (conv.bias.size() != g.out_ch) throw ShapeError("convolution bias needs one entry per output channel");
  if (g.kh == 0 || g.kw == 0) throw ShapeError("empty convolution kernel");
  if (conv.padding == Padding::valid) {
    if (g.in.height < g.kh || g.in.width < g.kw) throw ShapeError("kernel larger than input under valid padding");
    g.out_h = (g.in.height - g.kh) / conv.stride_h + 1;
    g.out_w = (g.in.width - g.kw) / conv.stride_w + 1;
  } else {
    g.out_h = (g.in.height + conv.stride_h - 1) / conv.stride_h;
    g.out_w = (g.in.width + conv.stride_w - 1) / conv.stride_w;
    const std::size_t need_h = (g.out_h - 1) * conv.stride_h + g.kh;
    const std::size_t need_w = (g.out_w - 1) * conv.stride_w + g.kw;
    g.pad_top = need_h > g.in.height ? (need_h - g.in.height) / 2 : 0;
    g.pad_left = need_w > g.in.width ? (need_w - g.in.width) / 2 : 0;
  }
  return g;
}

void check_regions(const std::vector<std::vector<std::size_t>>& regions, std::size_t input_dim) {
  if (regions.empty()) throw DomainError("pooling needs at least one region");
  for (std::size_t k = 0; k < regions.size(); ++k) {
    if (regions[k].empty()) throw DomainError("pooling region " + std::to_string(k) + " is empty");
    for (auto i : regions[k])
      if (i >= input_dim) throw DomainError("pooling region " + std::to_string(k) + " indexes past the input");
  }
}

Shape pool_shape(const std::vector<std::vector<std::size_t>>& regions, const Shape& out_shape, const Shape& in) {
  check_regions(regions, numel(in));
  if (out_shape.empty()) return {regions.size()};
  if (numel(out_shape) != regions.size()) throw ShapeError("pool out_shape does not match the region count");
  return out_shape;
}

}  // namespace

std::string layer_name(const LayerSpec& layer) {
  return std::visit(overloaded{[](const Dense&) { return std::string("dense"); },
                               [](const Conv&) { return std::string("conv"); },
                               [](const Activation&) { return std::string("activation"); },
                               [](const MaxPool&) { return std::string("maxpool"); },
                               [](const AvgPool&) { return std::string("avgpool"); },
                               [](const BatchNorm&) { return std::string("batchnorm"); },
                               [](const SkipBlock&) { return std::string("skip"); }},
                    layer);
}

bool is_nonlinear(const LayerSpec& layer) {
  return std::holds_alternative<Activation>(layer) || std::holds_alternative<MaxPool>(layer) ||
         std::holds_alternative<SkipBlock>(layer);
}

Shape conv_output_shape(const Conv& conv, const Shape& in) {
  const auto g = conv_geometry(conv, in);
  return {g.out_ch, g.out_h, g.out_w};
}

Shape layer_output_shape(const LayerSpec& layer, const Shape& in) {
  const std::size_t n = numel(in);
  return std::visit(
      overloaded{
          [&](const Dense& d) -> Shape {
            if (d.weight.cols() != n) {
              throw ShapeError("dense layer expects " + std::to_string(d.weight.cols()) + " inputs, got " +
                               std::to_string(n));
            }
            if (d.bias.size() != d.weight.rows()) throw ShapeError("dense bias length differs from output size");
            return {d.weight.rows()};
          },
          [&](const Conv& c) -> Shape { return conv_output_shape(c, in); },
          [&](const Activation& a) -> Shape {
            if (a.kind == ActivationKind::lrelu && !(a.nu > 0.0)) throw DomainError("leaky ReLU needs nu > 0");
            if (!a.beta_logit.empty() && a.beta_logit.size() != 1 && a.beta_logit.size() != n) {
              throw ShapeError("beta logits must be shared or one per unit");
            }
            return in;
          },
          [&](const MaxPool& p) -> Shape { return pool_shape(p.regions, p.out_shape, in); },
          [&](const AvgPool& p) -> Shape { return pool_shape(p.regions, p.out_shape, in); },
          [&](const BatchNorm& bn) -> Shape {
            (void)bn_fold_broadcast(bn, in);
            return in;
          },
          [&](const SkipBlock& s) -> Shape {
            const Shape main = conv_output_shape(s.conv, in);
            const Shape side = conv_output_shape(s.skip, in);
            if (main != side) throw ShapeError("skip and main branches produce different shapes");
            if (!s.skip_bias.empty() && s.skip_bias.size() != numel(main)) {
              throw ShapeError("skip_bias needs one entry per output feature");
            }
            if (s.activation.kind == ActivationKind::lrelu && !(s.activation.nu > 0.0)) {
              throw DomainError("leaky ReLU needs nu > 0");
            }
            return main;
          },
      },
      layer);
}

std::vector<Shape> layer_shapes(const Network& net) {
  if (net.input_shape.empty() || numel(net.input_shape) == 0) throw ShapeError("network input shape is empty");
  std::vector<Shape> shapes;
  Shape cur = net.input_shape;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    try {
      cur = layer_output_shape(net.layers[i], cur);
    } catch (const Error& e) {
      throw ShapeError("layer " + std::to_string(i) + " (" + layer_name(net.layers[i]) + "): " + e.what());
    }
    shapes.push_back(cur);
  }
  if (net.class_count == 0 || numel(cur) != net.class_count) {
    throw ShapeError("network emits " + std::to_string(numel(cur)) + " values but class_count is " +
                     std::to_string(net.class_count));
  }
  return shapes;
}

void validate(const Network& net) { (void)layer_shapes(net); }

// ---------------------------------------------------------------------------

MasoParams dense_as_maso(const Matrix& weight, std::span<const double> bias) {
  if (bias.size() != weight.rows()) throw ShapeError("dense bias length differs from output size");
  MasoParams p(weight.rows(), 1, weight.cols());
  for (std::size_t k = 0; k < weight.rows(); ++k) {
    std::copy(weight.row(k).begin(), weight.row(k).end(), p.slope(k, 0).begin());
    p.offset(k, 0) = bias[k];
  }
  return p;
}

MasoParams activation_as_maso(ActivationKind kind, std::size_t dim, double nu) {
  if (dim == 0) throw DomainError("activation dimension must be positive");
  double c0 = 0.0;
  switch (kind) {
    case ActivationKind::relu:
      c0 = 0.0;
      break;
    case ActivationKind::lrelu:
      if (!(nu > 0.0)) throw DomainError("leaky ReLU needs nu > 0");
      c0 = nu;
      break;
    case ActivationKind::abs:
      c0 = -1.0;
      break;
    default:
      throw DomainError("unknown activation kind");
  }
  MasoParams p(dim, 2, dim);
  for (std::size_t k = 0; k < dim; ++k) {
    p.slope(k, 0)[k] = c0;
    p.slope(k, 1)[k] = 1.0;
  }
  return p;
}

std::vector<std::vector<std::size_t>> pad_regions(const std::vector<std::vector<std::size_t>>& regions) {
  std::size_t R = 0;
  for (const auto& r : regions) R = std::max(R, r.size());
  auto out = regions;
  for (auto& r : out)
    while (!r.empty() && r.size() < R) r.push_back(r.back());
  return out;
}

MasoParams pool_as_maso(const std::vector<std::vector<std::size_t>>& regions, std::size_t input_dim, PoolKind kind) {
  check_regions(regions, input_dim);
  if (kind == PoolKind::avg) {
    MasoParams p(regions.size(), 1, input_dim);
    for (std::size_t k = 0; k < regions.size(); ++k) {
      const double w = 1.0 / static_cast<double>(regions[k].size());
      for (auto i : regions[k]) p.slope(k, 0)[i] += w;
    }
    return p;
  }
  const auto padded = pad_regions(regions);
  MasoParams p(regions.size(), padded.front().size(), input_dim);
  for (std::size_t k = 0; k < padded.size(); ++k)
    for (std::size_t r = 0; r < padded[k].size(); ++r) p.slope(k, r)[padded[k][r]] = 1.0;
  return p;
}

MasoParams compose_layer_maso(const MasoParams& linear, const MasoParams& nonlinear) {
  if (linear.regions() != 1) throw DomainError("the inner operator of a layer must be a degenerate MASO");
  if (linear.units() != nonlinear.input_dim()) throw ShapeError("linear output does not match nonlinear input");
  const std::size_t K = nonlinear.units(), R = nonlinear.regions(), D = linear.input_dim();
  MasoParams out(K, R, D);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t r = 0; r < R; ++r) {
      const auto a = nonlinear.slope(k, r);
      auto dst = out.slope(k, r);
      double off = nonlinear.offset(k, r);
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j] == 0.0) continue;
        const auto w = linear.slope(j, 0);
        for (std::size_t d = 0; d < D; ++d) dst[d] += a[j] * w[d];
        off += a[j] * linear.offset(j, 0);
      }
      out.offset(k, r) = off;
    }
  }
  return out;
}

bool slope_nonnegativity(const MasoParams& p) {
  return std::all_of(p.slopes().begin(), p.slopes().end(), [](double a) { return a >= 0.0; });
}

// ---------------------------------------------------------------------------

Matrix conv_to_matrix(const Conv& conv, const Shape& in) {
  const auto g = conv_geometry(conv, in);
  const std::size_t H = g.in.height, W = g.in.width, C = g.in.channels;
  Matrix m(g.out_ch * g.out_h * g.out_w, C * H * W);
  for (std::size_t o = 0; o < g.out_ch; ++o)
    for (std::size_t y = 0; y < g.out_h; ++y)
      for (std::size_t x = 0; x < g.out_w; ++x) {
        const std::size_t row = (o * g.out_h + y) * g.out_w + x;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ki = 0; ki < g.kh; ++ki) {
            const auto iy = static_cast<std::ptrdiff_t>(y * conv.stride_h + ki) - static_cast<std::ptrdiff_t>(g.pad_top);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
              const auto ix =
                  static_cast<std::ptrdiff_t>(x * conv.stride_w + kj) - static_cast<std::ptrdiff_t>(g.pad_left);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              m(row, (c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)) +=
                  conv.filters[((o * C + c) * g.kh + ki) * g.kw + kj];
            }
          }
      }
  return m;
}

Vec conv_forward(const Conv& conv, const Shape& in, std::span<const double> xin) {
  const auto g = conv_geometry(conv, in);
  const std::size_t H = g.in.height, W = g.in.width, C = g.in.channels;
  if (xin.size() != C * H * W) throw ShapeError("convolution input length does not match its shape");
  Vec out(g.out_ch * g.out_h * g.out_w);
  for (std::size_t o = 0; o < g.out_ch; ++o)
    for (std::size_t y = 0; y < g.out_h; ++y)
      for (std::size_t x = 0; x < g.out_w; ++x) {
        // Terms are visited in increasing flattened input index, the same
        // order matvec uses on the lowered matrix.
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ki = 0; ki < g.kh; ++ki) {
            const auto iy = static_cast<std::ptrdiff_t>(y * conv.stride_h + ki) - static_cast<std::ptrdiff_t>(g.pad_top);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
              const auto ix =
                  static_cast<std::ptrdiff_t>(x * conv.stride_w + kj) - static_cast<std::ptrdiff_t>(g.pad_left);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              s += conv.filters[((o * C + c) * g.kh + ki) * g.kw + kj] *
                   xin[(c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix)];
            }
          }
        out[(o * g.out_h + y) * g.out_w + x] = s + conv.bias[o];
      }
  return out;
}

Vec conv_backward(const Conv& conv, const Shape& in, std::span<const double> xin, std::span<const double> grad_out,
                  std::span<double> grad_filters, std::span<double> grad_bias) {
  const auto g = conv_geometry(conv, in);
  const std::size_t H = g.in.height, W = g.in.width, C = g.in.channels;
  if (xin.size() != C * H * W || grad_out.size() != g.out_ch * g.out_h * g.out_w ||
      grad_filters.size() != conv.filters.size() || grad_bias.size() != conv.bias.size()) {
    throw ShapeError("convolution gradient buffers do not match the layer");
  }
  Vec gin(xin.size());
  for (std::size_t o = 0; o < g.out_ch; ++o)
    for (std::size_t y = 0; y < g.out_h; ++y)
      for (std::size_t x = 0; x < g.out_w; ++x) {
        const double go = grad_out[(o * g.out_h + y) * g.out_w + x];
        grad_bias[o] += go;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t ki = 0; ki < g.kh; ++ki) {
            const auto iy = static_cast<std::ptrdiff_t>(y * conv.stride_h + ki) - static_cast<std::ptrdiff_t>(g.pad_top);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
              const auto ix =
                  static_cast<std::ptrdiff_t>(x * conv.stride_w + kj) - static_cast<std::ptrdiff_t>(g.pad_left);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              const std::size_t fi = ((o * C + c) * g.kh + ki) * g.kw + kj;
              const std::size_t xi = (c * H + static_cast<std::size_t>(iy)) * W + static_cast<std::size_t>(ix);
              grad_filters[fi] += go * xin[xi];
              gin[xi] += go * conv.filters[fi];
            }
          }
      }
  return gin;
}

Vec conv_bias_broadcast(const Conv& conv, const Shape& out) {
  const std::size_t per = numel(out) / conv.bias.size();
  Vec b(numel(out));
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = conv.bias[i / per];
  return b;
}

// ---------------------------------------------------------------------------

FoldedAffine bn_fold_affine(const BatchNorm& bn) {
  const std::size_t n = bn.mean.size();
  if (bn.var.size() != n || bn.scale.size() != n || bn.shift.size() != n) {
    throw ShapeError("batch-norm vectors must share one length");
  }
  FoldedAffine f{Vec(n), Vec(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const double denom = bn.var[i] + bn.epsilon;
    if (!(denom > 0.0)) throw DomainError("batch-norm variance plus epsilon must be positive");
    const double inv = 1.0 / std::sqrt(denom);
    f.scale[i] = bn.scale[i] * inv;
    f.shift[i] = bn.shift[i] - bn.scale[i] * bn.mean[i] * inv;
  }
  return f;
}

std::size_t bn_stat_index(const BatchNorm& bn, const Shape& in, std::size_t i) {
  const std::size_t n = numel(in);
  if (bn.mean.size() == n) return i;
  if (in.size() == 3 && bn.mean.size() == in[0]) return i / (in[1] * in[2]);
  throw ShapeError("batch-norm statistics match neither the features nor the channels of " + shape_str(in));
}

FoldedAffine bn_fold_broadcast(const BatchNorm& bn, const Shape& in) {
  const FoldedAffine f = bn_fold_affine(bn);
  const std::size_t n = numel(in);
  FoldedAffine out{Vec(n), Vec(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = bn_stat_index(bn, in, i);
    out.scale[i] = f.scale[s];
    out.shift[i] = f.shift[s];
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::size_t>> spatial_regions(const Shape& in, std::size_t ph, std::size_t pw, Shape& out) {
  if (in.size() != 3) throw ShapeError("spatial pooling needs a (C,H,W) input");
  if (ph == 0 || pw == 0 || ph > in[1] || pw > in[2]) throw DomainError("invalid pooling window");
  const std::size_t C = in[0], H = in[1], W = in[2], oh = H / ph, ow = W / pw;
  std::vector<std::vector<std::size_t>> regions;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        std::vector<std::size_t> r;
        for (std::size_t i = 0; i < ph; ++i)
          for (std::size_t j = 0; j < pw; ++j) r.push_back((c * H + y * ph + i) * W + x * pw + j);
        regions.push_back(std::move(r));
      }
  out = {C, oh, ow};
  return regions;
}

}  // namespace

MaxPool spatial_max_pool(const Shape& in, std::size_t ph, std::size_t pw) {
  MaxPool p;
  p.regions = spatial_regions(in, ph, pw, p.out_shape);
  return p;
}

AvgPool spatial_avg_pool(const Shape& in, std::size_t ph, std::size_t pw) {
  AvgPool p;
  p.regions = spatial_regions(in, ph, pw, p.out_shape);
  return p;
}

MaxPool channel_max_pool(const Shape& in, std::size_t group) {
  if (in.size() != 3) throw ShapeError("channel pooling needs a (C,H,W) input");
  if (group == 0 || in[0] % group != 0) throw DomainError("channel count must be a multiple of the group size");
  const std::size_t C = in[0], HW = in[1] * in[2];
  MaxPool p;
  for (std::size_t g = 0; g < C / group; ++g)
    for (std::size_t px = 0; px < HW; ++px) {
      std::vector<std::size_t> r;
      for (std::size_t c = 0; c < group; ++c) r.push_back((g * group + c) * HW + px);
      p.regions.push_back(std::move(r));
    }
  p.out_shape = {C / group, in[1], in[2]};
  return p;
}

// ---------------------------------------------------------------------------

Tensor boxcar_window(std::size_t patch_h, std::size_t patch_w) {
  if (patch_h == 0 || patch_w == 0) throw DomainError("empty patch");
  return Tensor({patch_h, patch_w}, 1.0 / static_cast<double>(patch_h * patch_w));
}

Tensor apodized_reconstruct(const Tensor& image, std::size_t ph, std::size_t pw, const Tensor& window) {
  if (window.shape() != Shape{ph, pw}) throw ShapeError("window must have the patch shape");
  const Geometry g = image.rank() == 2   ? Geometry{1, image.extent(0), image.extent(1)}
                     : image.rank() == 3 ? Geometry{image.extent(0), image.extent(1), image.extent(2)}
                                         : throw ShapeError("image must be H×W or C×H×W");
  if (ph == 0 || pw == 0 || ph > g.height || pw > g.width) throw ShapeError("patch does not fit the image");
  double coverage = 0.0;
  for (double w : window.values()) {
    if (w < 0.0) throw WindowError("apodization window must be nonnegative");
    coverage += w;
  }
  if (std::abs(coverage - 1.0) > 1e-9) {
    throw WindowError("interior coverage is " + std::to_string(coverage) + ", expected 1");
  }
  Tensor out(image.shape(), 0.0);
  const std::size_t H = g.height, W = g.width;
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t pi = 0; pi + ph <= H; ++pi)
      for (std::size_t pj = 0; pj + pw <= W; ++pj)
        for (std::size_t u = 0; u < ph; ++u)
          for (std::size_t v = 0; v < pw; ++v) {
            const std::size_t idx = (c * H + pi + u) * W + pj + v;
            out[idx] += image[idx] * window[u * pw + v];
          }
  return out;
}

}  // namespace maso
