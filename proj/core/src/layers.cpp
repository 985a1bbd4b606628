#include "ponita/layers.hpp"

#include <stdexcept>

namespace ponita::nn {

namespace {

template <class T>
Var<T> scale_by_inverse_degree(const graph::GraphBatch& g, const Var<T>& out) {
  const auto deg = in_degree(g);
  ad::Shape s(out.rank(), 1);
  s[0] = g.num_nodes();
  ad::Array<T> inv(s);
  for (std::size_t i = 0; i < deg.size(); ++i) inv.data[i] = deg[i] > 0 ? T(1) / static_cast<T>(deg[i]) : T(0);
  return ad::mul(out, out.tape().constant(std::move(inv)));
}

template <class T>
Var<T> aggregate(const graph::GraphBatch& g, const Var<T>& messages, Aggregation agg) {
  Var<T> out = ad::segment_sum(messages, g.receivers, g.num_nodes());
  return agg == Aggregation::Sum ? out : scale_by_inverse_degree(g, out);
}

template <class T>
Var<T> grid_as_batch(const Var<T>& grid) {
  if (grid.rank() == 2) return ad::reshape(grid, ad::Shape{1, grid.dim(0), grid.dim(1)});
  if (grid.rank() != 3) throw ad::ShapeError("grid must be [N, n] or [P, N, n], got " + ad::shape_string(grid.shape()));
  return grid;
}

}  // namespace

std::vector<double> in_degree(const graph::GraphBatch& g) {
  std::vector<double> deg(g.num_nodes(), 0.0);
  for (auto r : g.receivers) deg[r] += 1.0;
  return deg;
}

template <class T>
Var<T> spatial_gconv(const graph::GraphBatch& g, const Var<T>& f, const Var<T>& k1, Aggregation agg) {
  if (g.orientations) throw std::invalid_argument("spatial_gconv: point-cloud graph; use pointcloud_gconv");
  if (f.rank() != 3) {
    throw ad::ShapeError("spatial_gconv expects bundle features [P, N, C], got " + ad::shape_string(f.shape()));
  }
  if (f.dim(0) != g.num_nodes()) throw ad::ShapeError("spatial_gconv: feature rows do not match node count");
  const ad::Shape want{g.num_edges(), f.dim(1), f.dim(2)};
  if (k1.shape() != want) {
    throw ad::ShapeError("spatial_gconv: kernel " + ad::shape_string(k1.shape()) + " vs expected " +
                         ad::shape_string(want));
  }
  Var<T> out = ad::edge_message_sum(k1, f, g.receivers, g.senders, g.num_nodes());
  return agg == Aggregation::Sum ? out : scale_by_inverse_degree(g, out);
}

template <class T>
Var<T> spherical_gconv(const Var<T>& f, const Var<T>& k2) {
  return ad::contract_channelwise(k2, f);
}

template <class T>
Var<T> pointcloud_gconv(const graph::GraphBatch& g, const Var<T>& f, const Var<T>& kernel, Aggregation agg) {
  if (!g.orientations) throw std::invalid_argument("pointcloud_gconv: graph has no per-node orientations");
  if (f.rank() != 2 || f.dim(0) != g.num_nodes()) {
    throw ad::ShapeError("pointcloud_gconv expects features [P, C], got " + ad::shape_string(f.shape()));
  }
  const std::size_t e = g.num_edges(), cin = f.dim(1);
  if (kernel.rank() != 3 || kernel.dim(0) != e || kernel.dim(2) != cin) {
    throw ad::ShapeError("pointcloud_gconv: kernel " + ad::shape_string(kernel.shape()) + " vs features " +
                         ad::shape_string(f.shape()));
  }
  const std::size_t cout = kernel.dim(1);
  Var<T> fj = ad::reshape(ad::gather(f, g.senders), ad::Shape{e, cin, 1});
  Var<T> msg = ad::reshape(ad::bmm(kernel, fj), ad::Shape{e, cout});
  return aggregate(g, msg, agg);
}

template <class T>
Var<T> scalar_to_sphere(const Var<T>& s, std::size_t n) {
  if (s.rank() != 2) throw ad::ShapeError("scalar_to_sphere expects [P, S], got " + ad::shape_string(s.shape()));
  const std::size_t p = s.dim(0), c = s.dim(1);
  return ad::broadcast_to(ad::reshape(s, ad::Shape{p, 1, c}), ad::Shape{p, n, c});
}

template <class T>
Var<T> vec_to_sphere(const Var<T>& v, const Var<T>& grid) {
  if (v.rank() != 3) throw ad::ShapeError("vec_to_sphere expects [P, n, V], got " + ad::shape_string(v.shape()));
  return ad::bmm(grid_as_batch(grid), v);
}

template <class T>
Var<T> sphere_to_scalar(const Var<T>& f) {
  if (f.rank() != 3) throw ad::ShapeError("sphere_to_scalar expects [P, N, C], got " + ad::shape_string(f.shape()));
  return ad::sum(f, 1);
}

template <class T>
Var<T> sphere_to_vec(const Var<T>& f, const Var<T>& grid) {
  if (f.rank() != 3) throw ad::ShapeError("sphere_to_vec expects [P, N, C], got " + ad::shape_string(f.shape()));
  return ad::bmm(ad::transpose_last(grid_as_batch(grid)), f);
}

#define PONITA_INSTANTIATE_LAYERS(T)                                                                       \
  template Var<T> spatial_gconv<T>(const graph::GraphBatch&, const Var<T>&, const Var<T>&, Aggregation);   \
  template Var<T> spherical_gconv<T>(const Var<T>&, const Var<T>&);                                        \
  template Var<T> pointcloud_gconv<T>(const graph::GraphBatch&, const Var<T>&, const Var<T>&, Aggregation); \
  template Var<T> scalar_to_sphere<T>(const Var<T>&, std::size_t);                                         \
  template Var<T> vec_to_sphere<T>(const Var<T>&, const Var<T>&);                                          \
  template Var<T> sphere_to_scalar<T>(const Var<T>&);                                                      \
  template Var<T> sphere_to_vec<T>(const Var<T>&, const Var<T>&);

PONITA_INSTANTIATE_LAYERS(float)
PONITA_INSTANTIATE_LAYERS(double)

}  // namespace ponita::nn
