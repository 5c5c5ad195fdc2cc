#include "rashomon/introspect/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <regex>
#include <sstream>
#include <tuple>

#include "json.hpp"

#include "rashomon/autodiff/layers.hpp"
#include "rashomon/common/error.hpp"
#include "rashomon/common/io.hpp"

namespace rashomon::introspect {

namespace {

void sort_edges(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.layer, a.from, a.to) < std::tie(b.layer, b.from, b.to);
  });
}

using Flags = std::vector<std::vector<char>>;

Flags make_flags(const NetGraph& g) {
  Flags f(g.layers());
  for (std::size_t l = 0; l < g.layers(); ++l) f[l].assign(g.widths[l], 0);
  return f;
}

// Neurons reachable from the seeded ones, walking edges forwards.
void reach_forward(const NetGraph& g, Flags& f) {
  for (const auto& e : g.edges)
    if (f[e.layer][e.from]) f[e.layer + 1][e.to] = 1;
}

void reach_backward(const NetGraph& g, Flags& f) {
  for (auto it = g.edges.rbegin(); it != g.edges.rend(); ++it)
    if (f[it->layer + 1][it->to]) f[it->layer][it->from] = 1;
}

std::string node_name(std::size_t layer, std::size_t index) {
  return "L" + std::to_string(layer) + "_" + std::to_string(index);
}

}  // namespace

NetGraph NetGraph::empty(std::vector<std::size_t> widths) {
  NetGraph g;
  g.bias.resize(widths.size());
  for (std::size_t l = 0; l < widths.size(); ++l) g.bias[l].assign(widths[l], 0.0);
  g.widths = std::move(widths);
  return g;
}

NetGraph NetGraph::from_head(const heads::HeadModel& model) {
  if (!model.batchnorms().empty()) throw ConfigError("network graph: batch-norm heads are not supported");
  const auto& layers = model.head_layers();
  std::vector<std::size_t> widths{layers.front().in()};
  for (const auto& l : layers) widths.push_back(l.out());
  NetGraph g = empty(widths);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weight;
    const std::size_t n_out = w.value.dim(1);
    g.bias[l + 1] = layers[l].bias.value.data();
    for (std::size_t i = 0; i < w.value.dim(0); ++i)
      for (std::size_t j = 0; j < n_out; ++j) {
        const std::size_t k = i * n_out + j;
        if (w.active(k)) g.edges.push_back({l, i, j, w.value[k]});
      }
  }
  return g;
}

void NetGraph::validate() const {
  if (widths.size() < 2) throw ShapeError("network graph needs at least 2 layers");
  if (widths.back() != 1) throw ShapeError("network graph must have exactly one output neuron");
  if (bias.size() != widths.size()) throw ShapeError("network graph: bias layers do not match widths");
  for (std::size_t l = 0; l < widths.size(); ++l)
    if (bias[l].size() != widths[l]) throw ShapeError("network graph: bias width mismatch at layer " + std::to_string(l));
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    if (e.layer + 1 >= widths.size() || e.from >= widths[e.layer] || e.to >= widths[e.layer + 1])
      throw ShapeError("network graph: edge " + std::to_string(k) + " out of range");
    if (k > 0 && std::tie(edges[k - 1].layer, edges[k - 1].from, edges[k - 1].to) >= std::tie(e.layer, e.from, e.to))
      throw ShapeError("network graph: edges must be sorted and unique");
  }
}

std::size_t NetGraph::in_degree(NeuronRef n) const {
  if (n.layer == 0) return 0;
  return static_cast<std::size_t>(std::count_if(
      edges.begin(), edges.end(), [&](const Edge& e) { return e.layer + 1 == n.layer && e.to == n.index; }));
}

std::size_t NetGraph::out_degree(NeuronRef n) const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [&](const Edge& e) { return e.layer == n.layer && e.from == n.index; }));
}

double NetGraph::evaluate(std::span<const double> x) const {
  validate();
  if (x.size() != widths.front())
    throw ShapeError("network graph expects " + std::to_string(widths.front()) + " inputs, got " +
                     std::to_string(x.size()));
  std::vector<double> h(x.begin(), x.end());
  std::size_t k = 0;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    std::vector<double> y(widths[l], 0.0);
    for (; k < edges.size() && edges[k].layer + 1 == l; ++k) y[edges[k].to] += h[edges[k].from] * edges[k].weight;
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += bias[l][j];
    if (l + 1 < widths.size())
      for (auto& v : y) v = ad::mish(v);
    h = std::move(y);
  }
  return h[0];
}

long dense_head_expression_size(std::span<const std::size_t> widths, int scheme) {
  if (widths.size() < 2) throw ConfigError("expression size needs at least 2 layer widths");
  if (scheme != 1 && scheme != 2) throw ConfigError("dense expression size is defined for schemes 1 and 2");
  const std::size_t I = widths.size();
  long e = static_cast<long>(widths[I - 1] * (4 * widths[I - 2] + 1));
  for (std::size_t i = 0; i + 2 < I; ++i) {
    const long n = static_cast<long>(widths[i]), next = static_cast<long>(widths[i + 1]);
    e += scheme == 2 ? 8 * next * (n + 1) : next * (8 * n + 30);
  }
  return e;
}

long sparse_expression_size(const NetGraph& g, SparseSizeRule rule) {
  g.validate();
  long e = 0;
  for (std::size_t l = 1; l < g.layers(); ++l)
    for (std::size_t j = 0; j < g.widths[l]; ++j) {
      const NeuronRef n{l, j};
      const long m = static_cast<long>(g.in_degree(n));
      if (l + 1 == g.layers()) {
        e += 4 * m + 1;
        continue;
      }
      const std::size_t out = g.out_degree(n);
      if (m > 0 && out == 0)
        throw Error("sparse expression size: neuron " + node_name(l, j) + " has no outgoing connections (run post-pruning)");
      if (m == 0 && out > 0)
        throw Error("sparse expression size: neuron " + node_name(l, j) + " has no incoming connections (run post-pruning)");
      if (m == 0) continue;
      e += rule == SparseSizeRule::Printed ? 8 * m + 1 : 8 * (m + 1);
    }
  return e;
}

std::size_t count_active_params(const NetGraph& g) {
  return g.edges.size();
}

NetGraph extract_stream(const NetGraph& g, std::span<const std::size_t> inputs) {
  g.validate();
  if (inputs.empty()) throw ConfigError("extract_stream: input subset is empty");
  Flags fwd = make_flags(g), bwd = make_flags(g);
  for (auto i : inputs) {
    if (i >= g.widths[0]) throw ConfigError("extract_stream: input " + std::to_string(i) + " out of range");
    fwd[0][i] = 1;
  }
  reach_forward(g, fwd);
  bwd.back()[0] = 1;
  reach_backward(g, bwd);
  NetGraph s = g;
  s.edges.clear();
  for (const auto& e : g.edges)
    if (fwd[e.layer][e.from] && bwd[e.layer + 1][e.to]) s.edges.push_back(e);
  return s;
}

std::vector<NeuronRef> suggest_cuts(const NetGraph& g) {
  g.validate();
  std::vector<std::vector<int>> streams(g.layers());
  for (std::size_t l = 0; l < g.layers(); ++l) streams[l].assign(g.widths[l], 0);
  for (std::size_t i = 0; i < g.widths[0]; ++i) {
    const std::size_t one[] = {i};
    const NetGraph s = extract_stream(g, one);
    Flags on = make_flags(g);
    for (const auto& e : s.edges) on[e.layer + 1][e.to] = 1;
    for (std::size_t l = 1; l + 1 < g.layers(); ++l)
      for (std::size_t j = 0; j < g.widths[l]; ++j) streams[l][j] += on[l][j];
  }
  std::vector<NeuronRef> out;
  for (std::size_t l = 1; l + 1 < g.layers(); ++l)
    for (std::size_t j = 0; j < g.widths[l]; ++j)
      if (streams[l][j] >= 2) out.push_back({l, j});
  return out;
}

std::vector<double> default_grid() {
  std::vector<double> grid(61);
  for (int i = 0; i < 61; ++i) grid[static_cast<std::size_t>(i)] = -3.0 + 0.1 * i;
  return grid;
}

ResponseMap subnetwork_response(const NetGraph& g, NeuronRef cut, std::span<const std::size_t> swept,
                                std::span<const double> grid, std::span<const double> fixed) {
  g.validate();
  if (swept.empty() || swept.size() > 2) throw ConfigError("response map sweeps 1 or 2 inputs");
  if (grid.empty()) throw ConfigError("response map grid is empty");
  if (fixed.size() != g.widths[0])
    throw ShapeError("response map: fixed values need " + std::to_string(g.widths[0]) + " entries");
  if (cut.layer == 0 || cut.layer >= g.layers() || cut.index >= g.widths[cut.layer])
    throw ConfigError("response map: cut " + node_name(cut.layer, cut.index) + " is not a hidden or output neuron");
  Flags anc = make_flags(g);
  anc[cut.layer][cut.index] = 1;
  reach_backward(g, anc);
  for (auto d : swept) {
    if (d >= g.widths[0]) throw ConfigError("response map: input " + std::to_string(d) + " out of range");
    if (!anc[0][d])
      throw Error("response map: cut " + node_name(cut.layer, cut.index) + " is unreachable from input " +
                  std::to_string(d));
  }
  if (swept.size() == 2 && swept[0] == swept[1]) throw ConfigError("response map: swept inputs must differ");

  ResponseMap m;
  m.dims.assign(swept.begin(), swept.end());
  m.grid.assign(grid.begin(), grid.end());
  m.fixed.assign(fixed.begin(), fixed.end());
  m.cut = cut;
  std::vector<double> x(fixed.begin(), fixed.end());
  auto value_at = [&] {
    std::vector<double> h(x), y;
    std::size_t k = 0;
    for (std::size_t l = 1; l <= cut.layer; ++l) {
      y.assign(g.widths[l], 0.0);
      for (; k < g.edges.size() && g.edges[k].layer + 1 == l; ++k) {
        const auto& e = g.edges[k];
        if (anc[l][e.to]) y[e.to] += h[e.from] * e.weight;
      }
      for (std::size_t j = 0; j < y.size(); ++j) y[j] += g.bias[l][j];
      if (l == cut.layer) break;
      for (auto& v : y) v = ad::mish(v);
      h = std::move(y);
    }
    return y[cut.index];
  };
  if (swept.size() == 1) {
    for (double a : grid) {
      x[swept[0]] = a;
      m.response.push_back(value_at());
    }
  } else {
    for (double a : grid)
      for (double b : grid) {
        x[swept[0]] = a;
        x[swept[1]] = b;
        m.response.push_back(value_at());
      }
  }
  return m;
}

std::string ResponseMap::csv() const {
  std::string out = "dim1,dim2,response\n";
  const std::size_t n = grid.size();
  for (std::size_t k = 0; k < response.size(); ++k) {
    if (dims.size() == 1) {
      out += io::format_double(grid[k]) + ",," + io::format_double(response[k]) + "\n";
    } else {
      out += io::format_double(grid[k / n]) + "," + io::format_double(grid[k % n]) + "," +
             io::format_double(response[k]) + "\n";
    }
  }
  return out;
}

std::string export_dot(const NetGraph& g) {
  g.validate();
  double wmax = 0.0;
  for (const auto& e : g.edges) wmax = std::max(wmax, std::abs(e.weight));
  std::ostringstream out;
  out << "digraph head {\n  rankdir=TB;\n";
  for (std::size_t l = 0; l < g.layers(); ++l) {
    out << "  { rank=same;";
    for (std::size_t j = 0; j < g.widths[l]; ++j) {
      out << " \"" << node_name(l, j) << "\" [label=\"";
      if (l == 0) {
        out << "z" << j;
      } else {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4g", g.bias[l][j]);
        out << node_name(l, j) << "\\nb=" << buf;
      }
      out << "\"];";
    }
    out << " }\n";
  }
  for (const auto& e : g.edges) {
    if (e.weight == 0.0) continue;
    char pen[32];
    std::snprintf(pen, sizeof pen, "%.4f", 4.0 * std::abs(e.weight) / wmax);
    out << "  \"" << node_name(e.layer, e.from) << "\" -> \"" << node_name(e.layer + 1, e.to)
        << "\" [color=" << (e.weight > 0.0 ? "blue" : "red") << ", penwidth=" << pen << ", comment=\"w="
        << io::format_double(e.weight) << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

std::vector<Edge> parse_dot_edges(std::string_view dot) {
  static const std::regex edge_re(R"re("L(\d+)_(\d+)"\s*->\s*"L(\d+)_(\d+)"\s*\[[^\]]*comment="w=([^"]+)")re");
  std::vector<Edge> edges;
  const std::string text(dot);
  for (std::sregex_iterator it(text.begin(), text.end(), edge_re), end; it != end; ++it) {
    const auto& m = *it;
    const std::size_t la = std::stoul(m[1]), lb = std::stoul(m[3]);
    if (lb != la + 1) throw Error("dot: edge skips layers");
    edges.push_back({la, std::stoul(m[2]), std::stoul(m[4]), std::stod(m[5])});
  }
  sort_edges(edges);
  return edges;
}

std::string size_report_json(int scheme, const heads::HeadModel& model) {
  const auto& widths = model.config().widths;
  long size = 0;
  std::size_t active = model.active_head_weights();
  if (scheme == 1 || scheme == 2) {
    size = dense_head_expression_size(widths, scheme);
  } else if (scheme == 3) {
    const NetGraph g = NetGraph::from_head(model);
    size = sparse_expression_size(g);
    active = count_active_params(g);
  } else {
    throw ConfigError("size report: scheme must be 1, 2 or 3");
  }
  nlohmann::json j{{"scheme", scheme}, {"widths", widths}, {"active_params", active}, {"expression_size", size}};
  return j.dump() + "\n";
}

}  // namespace rashomon::introspect
