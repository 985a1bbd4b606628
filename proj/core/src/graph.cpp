#include "ponita/graph.hpp"

#include <stdexcept>
#include <string>

namespace ponita::graph {

namespace {

[[noreturn]] void bad(const std::string& what) { throw std::invalid_argument("graph: " + what); }

std::vector<std::vector<std::uint32_t>> members(const GraphBatch& g) {
  std::vector<std::vector<std::uint32_t>> m(g.num_graphs);
  for (std::uint32_t i = 0; i < g.node_graph.size(); ++i) m.at(g.node_graph[i]).push_back(i);
  return m;
}

}  // namespace

void GraphBatch::validate() const {
  const std::size_t p = num_nodes();
  if (dim != 2 && dim != 3) bad("dimension must be 2 or 3");
  if (positions.cols() != dim) bad("positions must be [P, " + std::to_string(dim) + "]");
  if (node_graph.size() != p) bad("node_graph must have one entry per node");
  for (auto k : node_graph) {
    if (k >= num_graphs) bad("node_graph entry out of range");
  }
  if (receivers.size() != senders.size()) bad("receivers and senders differ in length");
  for (std::size_t e = 0; e < receivers.size(); ++e) {
    if (receivers[e] >= p || senders[e] >= p) bad("edge " + std::to_string(e) + " has an out-of-range index");
    if (node_graph[receivers[e]] != node_graph[senders[e]]) bad("edge " + std::to_string(e) + " crosses graphs");
  }
  if (edge_extra.cols() > 0 && static_cast<std::size_t>(edge_extra.rows()) != receivers.size()) {
    bad("edge_extra must have one row per edge");
  }
  if (scalars.rank() != 0 && (scalars.rank() != 2 || scalars.shape[0] != p)) bad("scalars must be [P, S]");
  if (vectors.rank() != 0 &&
      (vectors.rank() != 3 || vectors.shape[0] != p || vectors.shape[1] != static_cast<std::size_t>(dim))) {
    bad("vectors must be [P, n, V]");
  }
  if (!grids.empty()) {
    if (grids.size() != num_graphs) bad("need one grid per graph");
    for (const auto& gr : grids) {
      if (gr.dim() != dim || gr.size() != grids[0].size()) bad("grids must share dimension and size");
    }
  }
  if (orientations) {
    if (!grids.empty()) bad("a graph carries either grids or per-node orientations, not both");
    if (orientations->rows() != positions.rows() || orientations->cols() != dim) bad("orientations must be [P, n]");
  }
}

GraphBatch make_graph(const Matrix& positions, ad::Array<double> scalars, ad::Array<double> vectors) {
  GraphBatch g;
  g.dim = static_cast<int>(positions.cols());
  g.positions = positions;
  g.node_graph.assign(static_cast<std::size_t>(positions.rows()), 0);
  g.num_graphs = 1;
  const std::size_t p = g.num_nodes();
  g.scalars = scalars.rank() == 0 ? ad::Array<double>(ad::Shape{p, 0}) : std::move(scalars);
  g.vectors = vectors.rank() == 0 ? ad::Array<double>(ad::Shape{p, static_cast<std::size_t>(g.dim), 0})
                                  : std::move(vectors);
  g.edge_extra = Matrix(0, 0);
  g.validate();
  return g;
}

void connect_fully(GraphBatch& g, bool self_loops) {
  g.receivers.clear();
  g.senders.clear();
  for (const auto& nodes : members(g)) {
    for (auto i : nodes) {
      for (auto j : nodes) {
        if (i == j && !self_loops) continue;
        g.receivers.push_back(i);
        g.senders.push_back(j);
      }
    }
  }
  g.edge_extra = Matrix(0, 0);
}

void connect_radius(GraphBatch& g, double radius) {
  g.receivers.clear();
  g.senders.clear();
  for (const auto& nodes : members(g)) {
    for (auto i : nodes) {
      for (auto j : nodes) {
        if (i == j) continue;
        if ((g.positions.row(i) - g.positions.row(j)).norm() <= radius) {
          g.receivers.push_back(i);
          g.senders.push_back(j);
        }
      }
    }
  }
  g.edge_extra = Matrix(0, 0);
}

GraphBatch concat(const std::vector<const GraphBatch*>& parts) {
  if (parts.empty()) bad("concat of zero graphs");
  const GraphBatch& first = *parts[0];
  GraphBatch out;
  out.dim = first.dim;
  std::size_t p = 0, e = 0, graphs = 0;
  bool all_grids = true, all_ori = true;
  for (const auto* g : parts) {
    if (g->dim != first.dim) bad("concat: dimension mismatch");
    if (g->num_scalars() != first.num_scalars() || g->num_vectors() != first.num_vectors() ||
        g->edge_extra_dim() != first.edge_extra_dim()) {
      bad("concat: feature layout mismatch");
    }
    p += g->num_nodes();
    e += g->num_edges();
    graphs += g->num_graphs;
    all_grids = all_grids && !g->grids.empty();
    all_ori = all_ori && g->orientations.has_value();
  }
  const std::size_t s = first.num_scalars(), v = first.num_vectors(), x = first.edge_extra_dim();
  const auto n = static_cast<std::size_t>(first.dim);
  out.positions.resize(static_cast<Eigen::Index>(p), first.dim);
  out.scalars = ad::Array<double>(ad::Shape{p, s});
  out.vectors = ad::Array<double>(ad::Shape{p, n, v});
  out.edge_extra = Matrix(static_cast<Eigen::Index>(x == 0 ? 0 : e), static_cast<Eigen::Index>(x));
  if (all_ori) out.orientations = Matrix(static_cast<Eigen::Index>(p), first.dim);
  out.num_graphs = graphs;
  std::size_t node_off = 0, edge_off = 0, graph_off = 0;
  for (const auto* g : parts) {
    const std::size_t gp = g->num_nodes();
    out.positions.middleRows(static_cast<Eigen::Index>(node_off), static_cast<Eigen::Index>(gp)) = g->positions;
    if (all_ori) {
      out.orientations->middleRows(static_cast<Eigen::Index>(node_off), static_cast<Eigen::Index>(gp)) =
          *g->orientations;
    }
    std::copy(g->scalars.data.begin(), g->scalars.data.end(), out.scalars.data.begin() + node_off * s);
    std::copy(g->vectors.data.begin(), g->vectors.data.end(), out.vectors.data.begin() + node_off * n * v);
    for (auto k : g->node_graph) out.node_graph.push_back(static_cast<std::uint32_t>(k + graph_off));
    for (std::size_t k = 0; k < g->num_edges(); ++k) {
      out.receivers.push_back(static_cast<std::uint32_t>(g->receivers[k] + node_off));
      out.senders.push_back(static_cast<std::uint32_t>(g->senders[k] + node_off));
    }
    if (x > 0) {
      out.edge_extra.middleRows(static_cast<Eigen::Index>(edge_off), static_cast<Eigen::Index>(g->num_edges())) =
          g->edge_extra;
    }
    if (all_grids) out.grids.insert(out.grids.end(), g->grids.begin(), g->grids.end());
    node_off += gp;
    edge_off += g->num_edges();
    graph_off += g->num_graphs;
  }
  return out;
}

GraphBatch concat(const std::vector<GraphBatch>& parts) {
  std::vector<const GraphBatch*> ptrs;
  ptrs.reserve(parts.size());
  for (const auto& g : parts) ptrs.push_back(&g);
  return concat(ptrs);
}

GraphBatch transform(const GraphBatch& graph, const geometry::RigidMotion& g, bool co_rotate_grids) {
  if (g.dim() != graph.dim) throw geometry::DimensionError("transform: dimension mismatch");
  GraphBatch out = graph;
  const Matrix& r = g.rotation.matrix();
  out.positions = (graph.positions * r.transpose()).rowwise() + g.translation.transpose();
  if (graph.orientations) out.orientations = *graph.orientations * r.transpose();
  const std::size_t n = static_cast<std::size_t>(graph.dim), v = graph.num_vectors();
  for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
    for (std::size_t c = 0; c < v; ++c) {
      for (std::size_t a = 0; a < n; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          acc += r(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) * graph.vectors.data[(i * n + b) * v + c];
        }
        out.vectors.data[(i * n + a) * v + c] = acc;
      }
    }
  }
  if (co_rotate_grids) {
    for (auto& gr : out.grids) gr = grids::rotate_grid(gr, g.rotation);
  }
  return out;
}

GraphBatch permute_nodes(const GraphBatch& graph, const std::vector<std::uint32_t>& perm) {
  const std::size_t p = graph.num_nodes();
  if (perm.size() != p) bad("permutation length mismatch");
  std::vector<std::uint32_t> inv(p, static_cast<std::uint32_t>(p));
  for (std::uint32_t k = 0; k < p; ++k) {
    if (perm[k] >= p || inv[perm[k]] != p) bad("not a permutation");
    inv[perm[k]] = k;
  }
  GraphBatch out = graph;
  const std::size_t s = graph.num_scalars(), v = graph.num_vectors(), n = static_cast<std::size_t>(graph.dim);
  for (std::size_t k = 0; k < p; ++k) {
    const std::size_t old = perm[k];
    out.positions.row(static_cast<Eigen::Index>(k)) = graph.positions.row(static_cast<Eigen::Index>(old));
    if (graph.orientations) {
      out.orientations->row(static_cast<Eigen::Index>(k)) = graph.orientations->row(static_cast<Eigen::Index>(old));
    }
    out.node_graph[k] = graph.node_graph[old];
    std::copy_n(graph.scalars.data.begin() + old * s, s, out.scalars.data.begin() + k * s);
    std::copy_n(graph.vectors.data.begin() + old * n * v, n * v, out.vectors.data.begin() + k * n * v);
  }
  for (std::size_t e = 0; e < graph.num_edges(); ++e) {
    out.receivers[e] = inv[graph.receivers[e]];
    out.senders[e] = inv[graph.senders[e]];
  }
  return out;
}

const grids::SphereGrid& reference_grid(const GraphBatch& g, const grids::SphereGrid& fallback) {
  return g.grids.empty() ? fallback : g.grids[0];
}

ad::Array<double> node_grids(const GraphBatch& g, const grids::SphereGrid& fallback) {
  const std::size_t p = g.num_nodes(), n = static_cast<std::size_t>(g.dim);
  const std::size_t count = reference_grid(g, fallback).size();
  ad::Array<double> out(ad::Shape{p, count, n});
  for (std::size_t i = 0; i < p; ++i) {
    const auto& gr = g.grids.empty() ? fallback : g.grids.at(g.node_graph[i]);
    if (gr.size() != count || gr.dim() != g.dim) bad("grid shape mismatch");
    for (std::size_t o = 0; o < count; ++o) {
      for (std::size_t a = 0; a < n; ++a) {
        out.data[(i * count + o) * n + a] = gr.points()(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(a));
      }
    }
  }
  return out;
}

}  // namespace ponita::graph
