#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rashomon/heads/model.hpp"

namespace rashomon::introspect {

struct NeuronRef {
  std::size_t layer = 0;
  std::size_t index = 0;
  auto operator<=>(const NeuronRef&) const = default;
};

struct Edge {
  std::size_t layer = 0;  // source layer; the target lives in layer + 1
  std::size_t from = 0;
  std::size_t to = 0;
  double weight = 0.0;
  bool operator==(const Edge&) const = default;
};

/// Layered network with explicit active connections. Layer 0 holds the inputs
/// (their biases are unused), the last layer holds the single output neuron.
/// Hidden neurons apply Mish; the output is affine.
struct NetGraph {
  std::vector<std::size_t> widths;
  std::vector<std::vector<double>> bias;
  std::vector<Edge> edges;

  static NetGraph empty(std::vector<std::size_t> widths);
  /// Head layers of a model, skipping masked weights. Batch-norm heads are
  /// rejected since their neurons are not plain affine + Mish.
  static NetGraph from_head(const heads::HeadModel& model);

  void validate() const;
  std::size_t layers() const { return widths.size(); }
  std::size_t in_degree(NeuronRef n) const;
  std::size_t out_degree(NeuronRef n) const;
  /// Output value of the network for one input vector.
  double evaluate(std::span<const double> x) const;
};

/// Expression-tree size of a dense head with the given layer widths.
/// Scheme 2 is plain Mish; scheme 1 adds a batch-norm subtree to each hidden
/// neuron.
long dense_head_expression_size(std::span<const std::size_t> widths, int scheme);

enum class SparseSizeRule {
  Printed,    // 8M+1 per hidden neuron
  PerNeuron,  // 8(M+1) per hidden neuron
};

/// Sum of 4M+1 over the output and a per-hidden-neuron term over active hidden
/// neurons, M being the in-degree. Throws on graphs that still contain leaf or
/// bias-only hidden neurons.
long sparse_expression_size(const NetGraph& g, SparseSizeRule rule = SparseSizeRule::Printed);

std::size_t count_active_params(const NetGraph& g);

/// Edges on some directed path from a selected input to the output.
NetGraph extract_stream(const NetGraph& g, std::span<const std::size_t> inputs);

/// Hidden neurons lying on the streams of at least two distinct inputs.
std::vector<NeuronRef> suggest_cuts(const NetGraph& g);

struct ResponseMap {
  std::vector<std::size_t> dims;
  std::vector<double> grid;
  // Row-major over dims: response[i * grid.size() + j] for two dims.
  std::vector<double> response;
  std::vector<double> fixed;
  NeuronRef cut;

  std::string csv() const;
};

std::vector<double> default_grid();

/// Sweeps one or two inputs over `grid` (others held at `fixed`) and records
/// the pre-activation of `cut`, or the output value when cut is the output
/// neuron. Only edges on paths into `cut` take part.
ResponseMap subnetwork_response(const NetGraph& g, NeuronRef cut, std::span<const std::size_t> swept,
                                std::span<const double> grid, std::span<const double> fixed);

std::string export_dot(const NetGraph& g);
/// Recovers the edge list written by export_dot.
std::vector<Edge> parse_dot_edges(std::string_view dot);

/// `{"scheme":s,"widths":[...],"active_params":n,"expression_size":e}`
std::string size_report_json(int scheme, const heads::HeadModel& model);

}  // namespace rashomon::introspect
