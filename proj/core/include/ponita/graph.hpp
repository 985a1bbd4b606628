#pragma once

// Geometric graphs. A GraphBatch is the disjoint union of one or more graphs;
// node_graph maps every node to its graph. Edges are (receiver, sender) pairs
// and messages flow sender -> receiver.
//
// Forms:
//   bundle       grids present (one per graph, or the model's default grid)
//   point cloud  per-node orientations present
//   R^n          neither

#include "ponita/geometry.hpp"
#include "ponita/ops.hpp"
#include "ponita/sphere_grid.hpp"
#include "ponita/tensor.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace ponita::graph {

using geometry::Matrix;

struct GraphBatch {
  int dim = 3;
  Matrix positions;                     // [P, n]
  std::vector<std::uint32_t> node_graph;  // [P]
  std::size_t num_graphs = 1;
  ad::Index receivers, senders;         // [E]
  Matrix edge_extra;                    // [E, X], X may be 0
  ad::Array<double> scalars;            // [P, S]
  ad::Array<double> vectors;            // [P, n, V]
  std::vector<grids::SphereGrid> grids;  // empty or one per graph
  std::optional<Matrix> orientations;   // [P, n] for the point-cloud form

  std::size_t num_nodes() const { return static_cast<std::size_t>(positions.rows()); }
  std::size_t num_edges() const { return receivers.size(); }
  std::size_t num_scalars() const { return scalars.rank() == 2 ? scalars.shape[1] : 0; }
  std::size_t num_vectors() const { return vectors.rank() == 3 ? vectors.shape[2] : 0; }
  std::size_t edge_extra_dim() const { return static_cast<std::size_t>(edge_extra.cols()); }

  /// Throws std::invalid_argument describing the first inconsistency.
  void validate() const;
};

/// A single graph with the given node data and no edges.
GraphBatch make_graph(const Matrix& positions, ad::Array<double> scalars = {}, ad::Array<double> vectors = {});

/// All ordered pairs (i, j), i != j unless self_loops, within each graph.
void connect_fully(GraphBatch& g, bool self_loops = false);
/// Pairs within each graph with |p_i - p_j| <= radius, never i == j.
void connect_radius(GraphBatch& g, double radius);

/// Disjoint union; grids are concatenated when every part has them.
GraphBatch concat(const std::vector<const GraphBatch*>& parts);
GraphBatch concat(const std::vector<GraphBatch>& parts);

/// Applies g to positions, vectors and orientations. Grids are rotated too
/// when co_rotate_grids is set (the co-rotated setting in which the discrete
/// network is exactly equivariant).
GraphBatch transform(const GraphBatch& graph, const geometry::RigidMotion& g, bool co_rotate_grids);

/// Relabels nodes: new node k is old node perm[k]. Edges follow.
GraphBatch permute_nodes(const GraphBatch& graph, const std::vector<std::uint32_t>& perm);

/// Per-node grid tensor [P, N, n] built from per-graph grids, or from
/// `fallback` for every graph when the batch carries none.
ad::Array<double> node_grids(const GraphBatch& g, const grids::SphereGrid& fallback);

/// The grid of graph 0, or fallback.
const grids::SphereGrid& reference_grid(const GraphBatch& g, const grids::SphereGrid& fallback);

}  // namespace ponita::graph
