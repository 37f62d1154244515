// masotool: data generation, training and spline-view analyses of small
// networks. Every subcommand writes CSV (or JSON for networks) to --out, or
// to stdout when --out is omitted.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "maso/analysis.hpp"
#include "maso/errors.hpp"
#include "maso/io.hpp"
#include "maso/learn.hpp"
#include "maso/partition.hpp"
#include "maso/splinefit.hpp"
#include "maso/tables.hpp"
#include "maso/toydata.hpp"

namespace {

using namespace maso;

struct Options {
  std::string net, data, out, mode = "hard", beta = "0.5", bounds = "-2,2,-2,2", kind = "relu", func = "x2",
                               history, betas = "0.25,0.5,0.75", regions = "2,4,8,16,32";
  std::uint64_t seed = 0;
  std::size_t epochs = 200, batch = 64, layer = 0, resolution = 200, k = 5, index = 0, per_class = 5000, grid = 2001;
  double lr = 1e-2, gamma = 0.0, lambda = 0.0, lr_decay = 1.0;
  bool gram_schmidt = false, base64 = false;
};

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
  } else {
    write_text(o.out, text);
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::logic_error&) {
      throw DomainError("'" + cell + "' is not a number");
    }
  }
  return out;
}

Inference inference(const Options& o) {
  if (o.mode == "hard") return Inference::hard();
  if (o.mode == "soft") return Inference::soft();
  if (o.mode == "beta") {
    if (o.beta == "learnable") return Inference::beta_vq(0.5);
    const auto b = parse_list(o.beta);
    if (b.size() != 1 || !(b[0] > 0.0 && b[0] < 1.0)) throw DomainError("--beta must be one value in (0, 1)");
    return Inference::beta_vq(b[0]);
  }
  throw DomainError("--mode must be hard, soft or beta");
}

Network need_net(const Options& o) {
  if (o.net.empty()) throw DomainError("--net is required");
  return load_network(o.net);
}

Dataset need_data(const Options& o, const Network* net = nullptr) {
  if (o.data.empty()) throw DomainError("--data is required");
  return load_dataset_csv(o.data, net ? std::optional<std::size_t>(net->class_count) : std::nullopt);
}

std::span<const double> point(const Dataset& d, std::size_t index) {
  if (index >= d.size()) throw DomainError("--index " + std::to_string(index) + " past the dataset end");
  return d.points.row(index);
}

void cmd_gen_data(const Options& o) {
  ToyConfig c;
  c.per_class = o.per_class;
  emit(o, format_dataset_csv(generate_toy_dataset(o.seed, c)));
}

void cmd_train(const Options& o) {
  const Dataset data = need_data(o);
  Network net = o.net.empty() ? toy_network(o.seed) : load_network(o.net);
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.adam.learning_rate = o.lr;
  cfg.lr_decay = o.lr_decay;
  cfg.gamma = o.gamma;
  cfg.lambda = o.lambda;
  cfg.inference = inference(o);
  cfg.learnable_beta = o.mode == "beta" && o.beta == "learnable";
  cfg.gram_schmidt = o.gram_schmidt;
  cfg.seed = o.seed;
  const TrainResult r = train(std::move(net), data, cfg);
  if (!o.history.empty()) write_text(o.history, history_csv(r.history));
  emit(o, format_network_json(r.net, o.base64));
  const auto& last = r.history.back();
  std::fprintf(stderr, "epochs %zu  loss %.6f  accuracy %.4f\n", last.epoch, last.loss, last.accuracy);
}

void cmd_eval(const Options& o) {
  const Network net = need_net(o);
  const Dataset data = need_data(o, &net);
  const Inference inf = inference(o);
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i)
    loss += cross_entropy(network_forward(net, data.points.row(i), inf).output, data.labels[i]);
  std::ostringstream s;
  s << "metric,value\n"
    << "accuracy," << format_double(accuracy(net, data, inf)) << "\n"
    << "loss," << format_double(loss / static_cast<double>(data.size())) << "\n";
  emit(o, s.str());
}

void cmd_decompose(const Options& o) {
  const Network net = need_net(o);
  const Dataset data = need_data(o, &net);
  const AffineForm f = decompose(net, point(data, o.index));
  Matrix Ab(f.A.rows(), f.A.cols() + 1);
  for (std::size_t i = 0; i < f.A.rows(); ++i) {
    for (std::size_t j = 0; j < f.A.cols(); ++j) Ab(i, j) = f.A(i, j);
    Ab(i, f.A.cols()) = f.b[i];
  }
  emit(o, matrix_csv(Ab, "output"));
}

void cmd_templates(const Options& o) {
  const Network net = need_net(o);
  const Dataset data = need_data(o, &net);
  const ClassTemplates t = class_templates(net, point(data, o.index));
  Matrix m(t.templates.rows(), t.templates.cols() + 1);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < t.templates.cols(); ++j) m(i, j) = t.templates(i, j);
    m(i, t.templates.cols()) = t.biases[i];
  }
  emit(o, matrix_csv(m, "class"));
}

std::size_t prefix(const Options& o, const Network& net) { return o.layer == 0 ? net.layers.size() : o.layer; }

void cmd_partition(const Options& o) {
  const Network net = need_net(o);
  const auto b = parse_list(o.bounds);
  if (b.size() % 2 != 0 || b.size() / 2 != numel(net.input_shape)) {
    throw DomainError("--bounds needs lo,hi per input dimension");
  }
  std::vector<std::pair<double, double>> bounds;
  for (std::size_t i = 0; i < b.size(); i += 2) bounds.emplace_back(b[i], b[i + 1]);
  const GridScan scan = grid_scan(net, bounds, std::vector<std::size_t>(bounds.size(), o.resolution), prefix(o, net));
  emit(o, grid_csv(scan));
  std::fprintf(stderr, "regions %zu\n", scan.table.regions.size());
}

void cmd_stats(const Options& o) {
  const Network net = need_net(o);
  const Dataset data = need_data(o, &net);
  const RegionStats s = region_stats(net, data.points, prefix(o, net));
  emit(o, histogram_csv(s));
  std::fprintf(stderr, "nonempty regions %zu\n", s.nonempty_count);
}

void cmd_nn(const Options& o) {
  const Network net = need_net(o);
  const Dataset data = need_data(o, &net);
  const std::size_t p = prefix(o, net);
  const auto nbrs = nearest_neighbors(net, p, o.index, data.points, o.k);
  const LayerCode q = layer_code(net, point(data, o.index), p);
  std::string out = "rank,index,label,vq_distance\n";
  for (std::size_t r = 0; r < nbrs.size(); ++r) {
    const double d = vq_distance(q, layer_code(net, data.points.row(nbrs[r]), p));
    out += std::to_string(r + 1) + "," + std::to_string(nbrs[r]) + "," + std::to_string(data.labels[nbrs[r]]) + "," +
           format_double(d) + "\n";
  }
  emit(o, out);
}

void cmd_norms(const Options& o) {
  const Network net = need_net(o);
  const Dataset data = need_data(o, &net);
  const Vec n = partial_product_norms(net, point(data, o.index));
  std::string out = "depth,frobenius_norm\n";
  for (std::size_t i = 0; i < n.size(); ++i) out += std::to_string(i + 1) + "," + format_double(n[i]) + "\n";
  emit(o, out);
}

void cmd_ensemble(const Options& o) {
  const Network net = need_net(o);
  const Dataset data = need_data(o, &net);
  const auto terms = resnet_ensemble_terms(net, point(data, o.index));
  std::string out = "term,active_branches,frobenius_norm\n";
  for (std::size_t t = 0; t < terms.size(); ++t) {
    out += std::to_string(t) + "," + std::to_string(__builtin_popcountll(t)) + "," +
           format_double(frobenius_norm(terms[t])) + "\n";
  }
  emit(o, out);
}

void cmd_splinefit(const Options& o) {
  std::function<double(double)> f;
  if (o.func == "x2") {
    f = [](double x) { return x * x; };
  } else if (o.func == "abs") {
    f = [](double x) { return std::abs(x); };
  } else if (o.func == "exp") {
    f = [](double x) { return std::exp(x); };
  } else if (o.func == "affine") {
    f = [](double x) { return 2.0 * x + 1.0; };
  } else {
    throw DomainError("--func must be x2, abs, exp or affine");
  }
  std::vector<std::size_t> rs;
  for (double r : parse_list(o.regions)) {
    if (!(r >= 1.0) || r != std::floor(r)) throw DomainError("--regions must list positive integers");
    rs.push_back(static_cast<std::size_t>(r));
  }
  const UniversalityCurve c = universality_curve(f, rs, -1.0, 1.0, o.grid);
  emit(o, curve_csv(c));
  if (c.loglog_slope) {
    std::fprintf(stderr, "log-log slope %.4f  c %.6g\n", *c.loglog_slope, c.c);
  } else {
    std::fprintf(stderr, "degenerate curve (errors at machine precision)\n");
  }
}

void cmd_act_table(const Options& o) {
  const auto betas = parse_list(o.betas);
  const Vec u = linspace(-5.0, 5.0, o.resolution < 2 ? 2 : o.resolution + 1);
  std::vector<ActivationRow> rows;
  if (o.kind == "relu") {
    rows = activation_table(ActivationKind::relu, betas, u);
  } else if (o.kind == "abs") {
    rows = activation_table(ActivationKind::abs, betas, u);
  } else if (o.kind == "lrelu") {
    rows = activation_table(ActivationKind::lrelu, betas, u, 0.1);
  } else {
    rows = activation_table(load_maso(o.kind), betas, u);
  }
  emit(o, activation_table_csv(rows));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"max-affine spline tools for small networks"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--out", o.out, "output path (stdout when omitted)");
    c->add_option("--seed", o.seed, "random seed");
  };
  auto add_net_data = [&](CLI::App* c) {
    c->add_option("--net", o.net, "network JSON");
    c->add_option("--data", o.data, "dataset CSV");
  };
  auto add_mode = [&](CLI::App* c) {
    c->add_option("--mode", o.mode, "hard | soft | beta");
    c->add_option("--beta", o.beta, "beta in (0,1), or 'learnable'");
  };

  auto* gen = app.add_subcommand("gen-data", "generate the 4-class toy dataset");
  add_common(gen);
  gen->add_option("--per-class", o.per_class, "points per class");
  gen->callback([&] { cmd_gen_data(o); });

  auto* tr = app.add_subcommand("train", "train a network (toy 45-3 ReLU net when --net is omitted)");
  add_common(tr);
  add_net_data(tr);
  add_mode(tr);
  tr->add_option("--epochs", o.epochs, "epochs");
  tr->add_option("--lr", o.lr, "Adam learning rate");
  tr->add_option("--lr-decay", o.lr_decay, "per-epoch learning-rate factor");
  tr->add_option("--batch", o.batch, "batch size");
  tr->add_option("--gamma", o.gamma, "template orthogonality weight");
  tr->add_option("--lambda", o.lambda, "filter orthogonality weight");
  tr->add_flag("--gram-schmidt", o.gram_schmidt, "orthogonalize dense weights by Gram-Schmidt");
  tr->add_option("--history", o.history, "per-epoch history CSV");
  tr->add_flag("--base64", o.base64, "store weights as base64 float64");
  tr->callback([&] { cmd_train(o); });

  auto* ev = app.add_subcommand("eval", "accuracy and mean loss");
  add_common(ev);
  add_net_data(ev);
  add_mode(ev);
  ev->callback([&] { cmd_eval(o); });

  auto add_point = [&](CLI::App* c) {
    add_common(c);
    add_net_data(c);
    c->add_option("--index", o.index, "dataset row to analyse");
  };
  auto* dec = app.add_subcommand("decompose", "input-conditioned affine map A[x], b[x]");
  add_point(dec);
  dec->callback([&] { cmd_decompose(o); });
  auto* tpl = app.add_subcommand("templates", "class templates of the last dense layer");
  add_point(tpl);
  tpl->callback([&] { cmd_templates(o); });
  auto* nrm = app.add_subcommand("norms", "norms of partial slope products by depth");
  add_point(nrm);
  nrm->callback([&] { cmd_norms(o); });
  auto* ens = app.add_subcommand("ensemble", "skip-block ensemble expansion");
  add_point(ens);
  ens->callback([&] { cmd_ensemble(o); });

  auto* part = app.add_subcommand("partition", "region ids on a regular input lattice");
  add_common(part);
  add_net_data(part);
  part->add_option("--layer", o.layer, "layer prefix (0 = whole network)");
  part->add_option("--bounds", o.bounds, "lo,hi per input dimension");
  part->add_option("--resolution", o.resolution, "lattice points per dimension");
  part->callback([&] { cmd_partition(o); });

  auto* st = app.add_subcommand("stats", "region occupancy histogram of a dataset");
  add_common(st);
  add_net_data(st);
  st->add_option("--layer", o.layer, "layer prefix (0 = whole network)");
  st->callback([&] { cmd_stats(o); });

  auto* nn = app.add_subcommand("nn", "nearest neighbours in VQ distance");
  add_point(nn);
  nn->add_option("--layer", o.layer, "layer prefix (0 = whole network)");
  nn->add_option("--k", o.k, "neighbour count");
  nn->callback([&] { cmd_nn(o); });

  auto* sf = app.add_subcommand("splinefit", "max-affine fits and sup error per region budget");
  add_common(sf);
  sf->add_option("--func", o.func, "x2 | abs | exp | affine");
  sf->add_option("--regions", o.regions, "increasing region budgets");
  sf->add_option("--resolution", o.grid, "grid points on [-1, 1]");
  sf->callback([&] { cmd_splinefit(o); });

  auto* at = app.add_subcommand("act-table", "activation values under hard, soft and beta inference");
  add_common(at);
  at->add_option("--kind", o.kind, "relu | abs | lrelu | path to a MASO JSON");
  at->add_option("--beta", o.betas, "comma-separated betas in (0,1)");
  at->add_option("--resolution", o.resolution, "grid intervals on [-5, 5]");
  at->callback([&] { cmd_act_table(o); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const maso::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
