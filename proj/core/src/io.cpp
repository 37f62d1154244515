#include "maso/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "maso/errors.hpp"

namespace maso {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DomainError("failed writing " + path.string());
}

// ---------------------------------------------------------------------------
// CSV

Dataset parse_dataset_csv(std::string_view text, std::optional<std::size_t> class_count) {
  Vec values;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> label_lines;
  std::size_t features = 0;
  bool have_rows = false;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find('\n', start);
    std::string_view line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    ++line_no;
    start = end == std::string_view::npos ? text.size() + 1 : end + 1;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (!have_rows && labels.empty() && line_no == 1) {
      bool any_numeric = false;
      for (auto c : cells) any_numeric |= parse_number(c).has_value();
      if (!any_numeric) continue;  // header
    }
    if (cells.size() < 2) throw ParseError(line_no, "need at least one feature and a label");
    if (!have_rows) {
      features = cells.size() - 1;
      have_rows = true;
    } else if (cells.size() - 1 != features) {
      throw ParseError(line_no, "expected " + std::to_string(features + 1) + " cells, found " +
                                    std::to_string(cells.size()));
    }
    for (std::size_t i = 0; i < features; ++i) {
      const auto v = parse_number(cells[i]);
      if (!v || !std::isfinite(*v)) throw ParseError(line_no, "non-numeric cell '" + std::string(trim(cells[i])) + "'");
      values.push_back(*v);
    }
    const auto lab = trim(cells.back());
    std::size_t label = 0;
    const auto [ptr, ec] = std::from_chars(lab.data(), lab.data() + lab.size(), label);
    if (lab.empty() || ec != std::errc() || ptr != lab.data() + lab.size()) {
      throw ParseError(line_no, "label '" + std::string(lab) + "' is not a nonnegative integer");
    }
    labels.push_back(label);
    label_lines.push_back(line_no);
  }
  Dataset d;
  d.points = Matrix(labels.size(), features, std::move(values));
  d.labels = std::move(labels);
  std::size_t max_label = 0;
  for (auto l : d.labels) max_label = std::max(max_label, l);
  d.class_count = class_count ? *class_count : (d.labels.empty() ? 0 : max_label + 1);
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    if (d.labels[i] >= d.class_count) {
      throw ParseError(label_lines[i], "label " + std::to_string(d.labels[i]) + " is not below the class count " +
                                           std::to_string(d.class_count));
    }
  }
  return d;
}

Dataset load_dataset_csv(const std::filesystem::path& path, std::optional<std::size_t> class_count) {
  return parse_dataset_csv(read_text(path), class_count);
}

std::string format_dataset_csv(const Dataset& data) {
  if (data.labels.size() != data.size()) throw ShapeError("one label per point is required");
  std::string out;
  for (std::size_t j = 0; j < data.features(); ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "label\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.points.row(i)) {
      out += format_double(v);
      out += ',';
    }
    out += std::to_string(data.labels[i]);
    out += '\n';
  }
  return out;
}

void save_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
  write_text(path, format_dataset_csv(data));
}

// ---------------------------------------------------------------------------
// base64 of little-endian float64

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

}  // namespace

std::string base64_encode(std::span<const double> values) {
  std::vector<std::uint8_t> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t u = 0;
    std::memcpy(&u, &values[i], 8);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<std::uint8_t>(u >> (8 * b));
  }
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (std::size_t i = 0; i < bytes.size(); i += 3) {
    const std::uint32_t n = (std::uint32_t{bytes[i]} << 16) |
                            (i + 1 < bytes.size() ? std::uint32_t{bytes[i + 1]} << 8 : 0u) |
                            (i + 2 < bytes.size() ? std::uint32_t{bytes[i + 2]} : 0u);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += i + 1 < bytes.size() ? kAlphabet[(n >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? kAlphabet[n & 63] : '=';
  }
  return out;
}

Vec base64_decode(std::string_view text) {
  std::vector<std::uint8_t> bytes;
  std::uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r' || c == ' ') continue;
    const int v = b64_value(c);
    if (v < 0) throw SchemaError(std::string("invalid base64 character '") + c + "'");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      bytes.push_back(static_cast<std::uint8_t>(acc >> bits));
      acc &= (1u << bits) - 1;
    }
  }
  if (bytes.size() % 8 != 0) throw SchemaError("base64 payload is not a whole number of float64 values");
  Vec out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= std::uint64_t{bytes[i * 8 + b]} << (8 * b);
    std::memcpy(&out[i], &u, 8);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network JSON

namespace {

struct Array {
  Shape shape;  // empty for plain lists
  Vec data;
};

Array read_array(const json& j, const char* what) {
  Array a;
  if (j.is_array()) {
    for (const auto& v : j) {
      if (!v.is_number()) throw SchemaError(std::string(what) + " must hold numbers");
      a.data.push_back(v.get<double>());
    }
    return a;
  }
  if (!j.is_object() || !j.contains("shape")) throw SchemaError(std::string(what) + " must be a list or {shape, data}");
  a.shape = j.at("shape").get<Shape>();
  if (j.contains("base64")) {
    a.data = base64_decode(j.at("base64").get<std::string>());
  } else if (j.contains("data")) {
    a.data = read_array(j.at("data"), what).data;
  } else {
    throw SchemaError(std::string(what) + " needs data or base64");
  }
  if (numel(a.shape) != a.data.size()) {
    throw SchemaError(std::string(what) + " holds " + std::to_string(a.data.size()) + " values for its shape");
  }
  return a;
}

Vec read_vec(const json& j, const char* key) {
  if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
  return read_array(j.at(key), key).data;
}

Vec read_vec_or_empty(const json& j, const char* key) { return j.contains(key) ? read_vec(j, key) : Vec{}; }

json write_array(std::span<const double> v, const Shape& shape, bool b64) {
  if (b64) return {{"shape", shape}, {"base64", base64_encode(v)}};
  if (shape.size() <= 1) return json(Vec(v.begin(), v.end()));
  return {{"shape", shape}, {"data", Vec(v.begin(), v.end())}};
}

Conv read_conv(const json& j) {
  Conv c;
  const Array f = read_array(j.at("filters"), "filters");
  if (f.shape.size() != 4) throw SchemaError("filters need a 4-d shape (out, in, h, w)");
  c.filters = Tensor(f.shape, f.data);
  c.bias = read_vec(j, "bias");
  if (j.contains("stride")) {
    const auto s = j.at("stride");
    if (s.is_number()) {
      c.stride_h = c.stride_w = s.get<std::size_t>();
    } else {
      const auto v = s.get<std::vector<std::size_t>>();
      if (v.size() != 2) throw SchemaError("stride must be a number or [sh, sw]");
      c.stride_h = v[0];
      c.stride_w = v[1];
    }
  }
  if (c.stride_h == 0 || c.stride_w == 0) throw SchemaError("stride must be positive");
  const std::string pad = j.value("padding", std::string("valid"));
  if (pad == "valid") {
    c.padding = Padding::valid;
  } else if (pad == "same") {
    c.padding = Padding::same_zero;
  } else {
    throw SchemaError("unknown padding '" + pad + "'");
  }
  return c;
}

json write_conv(const Conv& c, bool b64) {
  return {{"filters", write_array(c.filters.data(), c.filters.shape(), b64)},
          {"bias", write_array(c.bias, {c.bias.size()}, b64)},
          {"stride", {c.stride_h, c.stride_w}},
          {"padding", c.padding == Padding::valid ? "valid" : "same"}};
}

Activation read_activation(const json& j) {
  Activation a;
  const std::string kind = j.value("kind", std::string("relu"));
  if (kind == "relu") {
    a.kind = ActivationKind::relu;
  } else if (kind == "lrelu") {
    a.kind = ActivationKind::lrelu;
    a.nu = j.value("nu", 0.01);
  } else if (kind == "abs") {
    a.kind = ActivationKind::abs;
  } else {
    throw SchemaError("unknown activation kind '" + kind + "'");
  }
  a.beta_logit = read_vec_or_empty(j, "beta_logit");
  return a;
}

json write_activation(const Activation& a, bool b64) {
  json j;
  j["kind"] = a.kind == ActivationKind::relu ? "relu" : a.kind == ActivationKind::lrelu ? "lrelu" : "abs";
  if (a.kind == ActivationKind::lrelu) j["nu"] = a.nu;
  if (!a.beta_logit.empty()) j["beta_logit"] = write_array(a.beta_logit, {a.beta_logit.size()}, b64);
  return j;
}

std::vector<std::vector<std::size_t>> read_regions(const json& j) {
  return j.at("regions").get<std::vector<std::vector<std::size_t>>>();
}

LayerSpec read_layer(const json& j, const Shape& in) {
  if (!j.is_object() || !j.contains("type")) throw SchemaError("layer must be an object with a type");
  const std::string type = j.at("type").get<std::string>();
  if (type == "dense") {
    const Array w = read_array(j.at("weight"), "weight");
    if (w.shape.size() != 2) throw SchemaError("weight needs a 2-d shape (out, in)");
    return Dense{Matrix(w.shape[0], w.shape[1], w.data), read_vec(j, "bias")};
  }
  if (type == "conv") return read_conv(j);
  if (type == "activation") return read_activation(j);
  if (type == "maxpool" || type == "avgpool") {
    const bool is_max = type == "maxpool";
    if (j.contains("window")) {
      const auto w = j.at("window").get<std::vector<std::size_t>>();
      if (w.size() != 2 || w[0] == 0 || w[1] == 0) throw SchemaError("window must be [ph, pw] with positive entries");
      if (in.size() != 3) throw SchemaError("window pooling needs a (C, H, W) input");
      if (is_max) return spatial_max_pool(in, w[0], w[1]);
      return spatial_avg_pool(in, w[0], w[1]);
    }
    Shape out = j.contains("out_shape") ? j.at("out_shape").get<Shape>() : Shape{};
    if (is_max) return MaxPool{read_regions(j), out};
    return AvgPool{read_regions(j), out};
  }
  if (type == "batchnorm") {
    BatchNorm bn{read_vec(j, "mean"), read_vec(j, "var"), read_vec(j, "scale"), read_vec(j, "shift"),
                 j.value("epsilon", 1e-5)};
    return bn;
  }
  if (type == "skip") {
    SkipBlock s;
    s.conv = read_conv(j.at("conv"));
    s.activation = read_activation(j.value("activation", json::object()));
    s.skip = read_conv(j.at("skip"));
    s.skip_bias = read_vec_or_empty(j, "skip_bias");
    return s;
  }
  throw SchemaError("unknown layer type '" + type + "'");
}

json write_layer(const LayerSpec& layer, bool b64) {
  json j;
  if (const auto* d = std::get_if<Dense>(&layer)) {
    j["type"] = "dense";
    j["weight"] = write_array(d->weight.data(), {d->weight.rows(), d->weight.cols()}, b64);
    j["bias"] = write_array(d->bias, {d->bias.size()}, b64);
  } else if (const auto* c = std::get_if<Conv>(&layer)) {
    j = write_conv(*c, b64);
    j["type"] = "conv";
  } else if (const auto* a = std::get_if<Activation>(&layer)) {
    j = write_activation(*a, b64);
    j["type"] = "activation";
  } else if (const auto* m = std::get_if<MaxPool>(&layer)) {
    j["type"] = "maxpool";
    j["regions"] = m->regions;
    if (!m->out_shape.empty()) j["out_shape"] = m->out_shape;
  } else if (const auto* p = std::get_if<AvgPool>(&layer)) {
    j["type"] = "avgpool";
    j["regions"] = p->regions;
    if (!p->out_shape.empty()) j["out_shape"] = p->out_shape;
  } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
    j["type"] = "batchnorm";
    j["mean"] = write_array(bn->mean, {bn->mean.size()}, b64);
    j["var"] = write_array(bn->var, {bn->var.size()}, b64);
    j["scale"] = write_array(bn->scale, {bn->scale.size()}, b64);
    j["shift"] = write_array(bn->shift, {bn->shift.size()}, b64);
    j["epsilon"] = bn->epsilon;
  } else if (const auto* s = std::get_if<SkipBlock>(&layer)) {
    j["type"] = "skip";
    j["conv"] = write_conv(s->conv, b64);
    j["activation"] = write_activation(s->activation, b64);
    j["skip"] = write_conv(s->skip, b64);
    if (!s->skip_bias.empty()) j["skip_bias"] = write_array(s->skip_bias, {s->skip_bias.size()}, b64);
  }
  return j;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

Network parse_network_json(std::string_view text) {
  const json doc = parse_json(text);
  Network net;
  try {
    if (!doc.is_object()) throw SchemaError("network document must be an object");
    net.input_shape = doc.at("input_shape").get<Shape>();
    net.class_count = doc.at("class_count").get<std::size_t>();
    if (!doc.at("layers").is_array()) throw SchemaError("layers must be an array");
  } catch (const json::exception& e) {
    throw SchemaError(std::string("network header: ") + e.what());
  }
  Shape in = net.input_shape;
  const auto& layers = doc.at("layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string type = layers[i].is_object() ? layers[i].value("type", std::string("?")) : std::string("?");
    const std::string where = "layer " + std::to_string(i) + " (" + type + "): ";
    try {
      net.layers.push_back(read_layer(layers[i], in));
      in = layer_output_shape(net.layers.back(), in);
    } catch (const json::exception& e) {
      throw SchemaError(where + e.what());
    } catch (const Error& e) {
      throw SchemaError(where + e.what());
    }
  }
  try {
    validate(net);
  } catch (const Error& e) {
    throw SchemaError(e.what());
  }
  return net;
}

Network load_network(const std::filesystem::path& path) { return parse_network_json(read_text(path)); }

std::string format_network_json(const Network& net, bool base64) {
  json doc;
  doc["input_shape"] = net.input_shape;
  doc["class_count"] = net.class_count;
  doc["layers"] = json::array();
  for (const auto& l : net.layers) doc["layers"].push_back(write_layer(l, base64));
  return doc.dump(1) + "\n";
}

void save_network(const std::filesystem::path& path, const Network& net, bool base64) {
  write_text(path, format_network_json(net, base64));
}

MasoParams parse_maso_json(std::string_view text) {
  const json doc = parse_json(text);
  try {
    const auto K = doc.at("K").get<std::size_t>();
    const auto R = doc.at("R").get<std::size_t>();
    const auto D = doc.at("D").get<std::size_t>();
    return MasoParams(K, R, D, read_vec(doc, "A"), read_vec(doc, "B"));
  } catch (const json::exception& e) {
    throw SchemaError(std::string("MASO document: ") + e.what());
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(std::string("MASO document: ") + e.what());
  }
}

MasoParams load_maso(const std::filesystem::path& path) { return parse_maso_json(read_text(path)); }

std::string format_maso_json(const MasoParams& p) {
  json doc{{"K", p.units()}, {"R", p.regions()}, {"D", p.input_dim()}, {"A", p.slopes()}, {"B", p.offsets()}};
  return doc.dump(1) + "\n";
}

}  // namespace maso
