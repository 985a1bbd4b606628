#pragma once

// Convolution layers over GeomGraphs.
//   bundle features       f [P, N, C]  (N grid orientations per node)
//   point-cloud features  f [P, C]     (one orientation per node)

#include "ponita/graph.hpp"
#include "ponita/ops.hpp"

namespace ponita::nn {

using ad::Var;

enum class Aggregation { Sum, Mean };

/// f1[i, o] = sum_{j in N(i)} k1[e, o] * f[j, o] per channel, e = (i, j).
/// k1 is [E, N, C] because the spatial invariants depend on o.
template <class T>
Var<T> spatial_gconv(const graph::GraphBatch& g, const Var<T>& f, const Var<T>& k1,
                     Aggregation agg = Aggregation::Sum);

/// f2[i, o] = sum_{o'} K2[o, o'] * f[i, o'] per channel.
template <class T>
Var<T> spherical_gconv(const Var<T>& f, const Var<T>& k2);

/// out[i] = sum_{j in N(i)} K[e] f[j] with a full [C_out, C_in] kernel per
/// edge. Requires per-node orientations on the graph.
template <class T>
Var<T> pointcloud_gconv(const graph::GraphBatch& g, const Var<T>& f, const Var<T>& kernel,
                        Aggregation agg = Aggregation::Sum);

/// [P, S] -> [P, N, S], constant over orientations.
template <class T>
Var<T> scalar_to_sphere(const Var<T>& s, std::size_t n);
/// v [P, n, V] with grid [N, n] (shared) or [P, N, n] (per node) -> [P, N, V],
/// f[i, o] = v_i . o.
template <class T>
Var<T> vec_to_sphere(const Var<T>& v, const Var<T>& grid);
/// [P, N, C] -> [P, C], plain sum over orientations.
template <class T>
Var<T> sphere_to_scalar(const Var<T>& f);
/// [P, N, C] -> [P, n, C], v_i = sum_o f[i, o] o.
template <class T>
Var<T> sphere_to_vec(const Var<T>& f, const Var<T>& grid);

/// In-degree of every node (for mean aggregation).
std::vector<double> in_degree(const graph::GraphBatch& g);

}  // namespace ponita::nn
