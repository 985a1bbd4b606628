#include "ponita/models.hpp"

#include <stdexcept>

namespace ponita::nn {

namespace {

using ad::Array;
using ad::Shape;
using ad::Tape;

template <class T>
ad::Parameter<T>* filled(ad::ParameterStore<T>& store, const std::string& name, std::size_t n, double value) {
  return &store.add(name, Array<T>(Shape{n}, static_cast<T>(value)));
}

void check_graph(const ModelConfig& cfg, const graph::GraphBatch& g) {
  g.validate();
  if (g.dim != cfg.dim) throw std::invalid_argument("model/graph dimension mismatch");
  if (g.num_scalars() != cfg.scalar_inputs || g.num_vectors() != cfg.vector_inputs) {
    throw std::invalid_argument("graph carries " + std::to_string(g.num_scalars()) + " scalar and " +
                                std::to_string(g.num_vectors()) + " vector inputs, model expects " +
                                std::to_string(cfg.scalar_inputs) + " and " + std::to_string(cfg.vector_inputs));
  }
  if (g.edge_extra_dim() != cfg.edge_extra) throw std::invalid_argument("edge conditioning width mismatch");
}

template <class T>
Var<T> edge_differences(const graph::GraphBatch& g, const Var<T>& pos) {
  return ad::sub(ad::gather(pos, g.senders), ad::gather(pos, g.receivers));
}

template <class T>
Var<T> extra_var(Tape<T>& tape, const graph::GraphBatch& g) {
  const std::size_t e = g.num_edges(), x = g.edge_extra_dim();
  Array<T> a(Shape{e, x});
  for (std::size_t r = 0; r < e; ++r) {
    for (std::size_t c = 0; c < x; ++c) {
      a.data[r * x + c] = static_cast<T>(g.edge_extra(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
  }
  return tape.constant(std::move(a));
}

// One ConvNeXt residual update given the convolved features.
template <class T, class Block>
Var<T> convnext_tail(Tape<T>& tape, const Block& b, const Var<T>& f, const Var<T>& conv) {
  Var<T> h = ad::layer_norm(conv, tape.param(*b.gamma), tape.param(*b.beta));
  h = b.project(tape, ad::gelu(b.expand(tape, h)));
  h = ad::mul(h, tape.param(*b.scale));
  return ad::add(f, h);
}

template <class T>
Var<T> per_graph_sum(const graph::GraphBatch& g, const Var<T>& node_values) {
  return ad::segment_sum(node_values, g.node_graph, g.num_graphs);
}

}  // namespace

void ModelConfig::validate() const {
  if (dim != 2 && dim != 3) throw std::invalid_argument("model dimension must be 2 or 3");
  if (scalar_inputs + vector_inputs == 0) throw std::invalid_argument("model needs at least one input feature");
  if (channels == 0 || basis_dim == 0 || degree == 0 || widening == 0) {
    throw std::invalid_argument("channels, basis_dim, degree and widening must be positive");
  }
  if (grid_size == 0) throw std::invalid_argument("grid size must be positive");
  if (!(length_scale > 0.0)) throw std::invalid_argument("length scale must be positive");
}

std::map<std::string, double> ModelConfig::to_meta() const {
  return {{"dim", dim},
          {"scalar_inputs", static_cast<double>(scalar_inputs)},
          {"vector_inputs", static_cast<double>(vector_inputs)},
          {"edge_extra", static_cast<double>(edge_extra)},
          {"layers", static_cast<double>(layers)},
          {"channels", static_cast<double>(channels)},
          {"grid_size", static_cast<double>(grid_size)},
          {"basis_dim", static_cast<double>(basis_dim)},
          {"degree", static_cast<double>(degree)},
          {"widening", static_cast<double>(widening)},
          {"readout", readout == Readout::Scalar ? 0.0 : 1.0},
          {"aggregation", aggregation == Aggregation::Sum ? 0.0 : 1.0},
          {"length_scale", length_scale},
          {"layer_scale_init", layer_scale_init},
          {"seed", static_cast<double>(seed)},
          {"grid_seed", static_cast<double>(grid_seed)}};
}

ModelConfig ModelConfig::from_meta(const std::map<std::string, double>& meta) {
  auto get = [&](const char* k) {
    auto it = meta.find(k);
    if (it == meta.end()) throw std::runtime_error(std::string("model metadata is missing ") + k);
    return it->second;
  };
  auto count = [&](const char* k) { return static_cast<std::size_t>(get(k)); };
  ModelConfig c;
  c.dim = static_cast<int>(get("dim"));
  c.scalar_inputs = count("scalar_inputs");
  c.vector_inputs = count("vector_inputs");
  c.edge_extra = count("edge_extra");
  c.layers = count("layers");
  c.channels = count("channels");
  c.grid_size = count("grid_size");
  c.basis_dim = count("basis_dim");
  c.degree = count("degree");
  c.widening = count("widening");
  c.readout = get("readout") == 0.0 ? Readout::Scalar : Readout::Vector;
  c.aggregation = get("aggregation") == 0.0 ? Aggregation::Sum : Aggregation::Mean;
  c.length_scale = get("length_scale");
  c.layer_scale_init = get("layer_scale_init");
  c.seed = static_cast<std::uint64_t>(get("seed"));
  c.grid_seed = static_cast<std::uint64_t>(get("grid_seed"));
  return c;
}

template <class T>
ad::Array<T> positions_array(const graph::GraphBatch& g) {
  const std::size_t p = g.num_nodes(), n = static_cast<std::size_t>(g.dim);
  Array<T> a(Shape{p, n});
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      a.data[i * n + k] = static_cast<T>(g.positions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
    }
  }
  return a;
}

// ---------------------------------------------------------------- Ponita

template <class T>
Ponita<T>::Ponita(const ModelConfig& cfg)
    : Ponita(cfg, (cfg.validate(), grids::default_grid(cfg.dim, cfg.grid_size, cfg.grid_seed, cfg.cache_grid))) {}

template <class T>
Ponita<T>::Ponita(const ModelConfig& cfg, grids::SphereGrid grid) : cfg_(cfg), grid_(std::move(grid)) {
  cfg_.validate();
  if (grid_.dim() != cfg_.dim || grid_.size() != cfg_.grid_size) {
    throw std::invalid_argument("grid does not match the model configuration");
  }
  build();
}

template <class T>
void Ponita<T>::build() {
  std::mt19937_64 rng(cfg_.seed);
  const std::size_t c = cfg_.channels, b = cfg_.basis_dim;
  embed_ = Linear<T>::create(params_, "embed", cfg_.scalar_inputs + cfg_.vector_inputs, c, rng);
  spatial_basis_ = KernelBasis<T>::create(params_, "basis.spatial", 2 + cfg_.edge_extra, cfg_.degree, b, rng);
  spherical_basis_ = KernelBasis<T>::create(params_, "basis.spherical", 1, cfg_.degree, b, rng);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    Block blk;
    blk.spatial = Linear<T>::create(params_, p + "spatial", b, c, rng);
    blk.spherical = Linear<T>::create(params_, p + "spherical", b, c, rng);
    blk.gamma = filled(params_, p + "norm.gamma", c, 1.0);
    blk.beta = filled(params_, p + "norm.beta", c, 0.0);
    blk.expand = Linear<T>::create(params_, p + "expand", c, cfg_.widening * c, rng);
    blk.project = Linear<T>::create(params_, p + "project", cfg_.widening * c, c, rng);
    blk.scale = filled(params_, p + "scale", c, cfg_.layer_scale_init);
    blk.readout = Linear<T>::create(params_, p + "readout", c, 1, rng);
    blocks_.push_back(blk);
  }
  if (cfg_.layers == 0) readout0_ = Linear<T>::create(params_, "readout", c, 1, rng);
}

template <class T>
Output<T> Ponita<T>::forward(Tape<T>& tape, const graph::GraphBatch& g) const {
  return forward(tape, g, tape.constant(positions_array<T>(g)));
}

template <class T>
Output<T> Ponita<T>::forward(Tape<T>& tape, const graph::GraphBatch& g, const Var<T>& positions) const {
  check_graph(cfg_, g);
  if (g.orientations) throw std::invalid_argument("Ponita runs on the bundle form; graph has per-node orientations");
  const std::size_t p = g.num_nodes(), e = g.num_edges(), n = static_cast<std::size_t>(g.dim);
  const std::size_t big_n = cfg_.grid_size;
  if (!g.grids.empty() && g.grids[0].size() != big_n) throw std::invalid_argument("graph grid size mismatch");
  if (positions.shape() != Shape{p, n}) throw ad::ShapeError("positions must be [P, n]");

  Var<T> node_grid = tape.constant(graph::node_grids(g, grid_).template cast<T>());  // [P, N, n]

  // Spatial invariants per (edge, orientation): a = o.d, b = |d - a o|.
  Var<T> d = ad::reshape(edge_differences(g, positions), Shape{e, 1, n});
  Var<T> edge_grid = ad::gather(node_grid, g.receivers);  // [E, N, n]
  Var<T> a = ad::sum(ad::mul(d, edge_grid), 2, true);       // [E, N, 1]
  Var<T> b = ad::sqrt(ad::sum(ad::square(ad::sub(d, ad::mul(a, edge_grid))), 2, true));
  const T inv_len = static_cast<T>(1.0 / cfg_.length_scale);
  std::vector<Var<T>> parts{ad::scale(a, inv_len), ad::scale(b, inv_len)};
  if (cfg_.edge_extra > 0) {
    Var<T> x = ad::reshape(extra_var(tape, g), Shape{e, 1, cfg_.edge_extra});
    parts.push_back(ad::broadcast_to(x, Shape{e, big_n, cfg_.edge_extra}));
  }
  Var<T> attrs = ad::reshape(ad::concat(parts, 2), Shape{e * big_n, 2 + cfg_.edge_extra});
  Var<T> spatial_basis = spatial_basis_.eval(tape, attrs);  // [E N, B]
  spatial_basis = ad::reshape(spatial_basis, Shape{e, big_n, spatial_basis.dim(1)});
  Var<T> gram = tape.constant(gram_attributes(graph::reference_grid(g, grid_)).template cast<T>());
  Var<T> spherical_basis = spherical_basis_.eval(tape, gram);  // [N N, B]
  spherical_basis = ad::reshape(spherical_basis, Shape{big_n, big_n, spherical_basis.dim(1)});

  std::vector<Var<T>> lifted;
  if (cfg_.scalar_inputs > 0) lifted.push_back(scalar_to_sphere(tape.constant(g.scalars.template cast<T>()), big_n));
  if (cfg_.vector_inputs > 0) lifted.push_back(vec_to_sphere(tape.constant(g.vectors.template cast<T>()), node_grid));
  Var<T> f = embed_(tape, lifted.size() == 1 ? lifted[0] : ad::concat(lifted, 2));  // [P, N, C]

  std::vector<Var<T>> heads;
  if (blocks_.empty()) heads.push_back(readout0_(tape, f));
  for (const auto& blk : blocks_) {
    Var<T> k1 = blk.spatial(tape, spatial_basis);      // [E, N, C]
    Var<T> k2 = blk.spherical(tape, spherical_basis);  // [N, N, C]
    Var<T> conv = spherical_gconv(spatial_gconv(g, f, k1, cfg_.aggregation), k2);
    f = convnext_tail(tape, blk, f, conv);
    heads.push_back(blk.readout(tape, f));  // [P, N, 1]
  }

  Output<T> out;
  Var<T> total = heads[0];
  for (std::size_t k = 1; k < heads.size(); ++k) total = ad::add(total, heads[k]);
  if (cfg_.readout == Readout::Scalar) {
    Var<T> node = ad::reshape(sphere_to_scalar(total), Shape{p});
    out.scalar = per_graph_sum(g, node);
  } else {
    Var<T> v = sphere_to_vec(total, node_grid);  // [P, n, 1]
    out.vector = ad::scale(ad::reshape(v, Shape{p, n}), static_cast<T>(1.0 / static_cast<double>(heads.size())));
  }
  return out;
}

// ----------------------------------------------------------------- Pnita

template <class T>
Pnita<T>::Pnita(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const std::size_t c = cfg_.channels, b = cfg_.basis_dim;
  embed_ = Linear<T>::create(params_, "embed", cfg_.scalar_inputs + cfg_.vector_inputs, c, rng);
  basis_ = KernelBasis<T>::create(params_, "basis.spatial", 1 + cfg_.edge_extra, cfg_.degree, b, rng);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    Block blk;
    blk.spatial = Linear<T>::create(params_, p + "spatial", b, c, rng);
    blk.gamma = filled(params_, p + "norm.gamma", c, 1.0);
    blk.beta = filled(params_, p + "norm.beta", c, 0.0);
    blk.expand = Linear<T>::create(params_, p + "expand", c, cfg_.widening * c, rng);
    blk.project = Linear<T>::create(params_, p + "project", cfg_.widening * c, c, rng);
    blk.scale = filled(params_, p + "scale", c, cfg_.layer_scale_init);
    if (cfg_.readout == Readout::Scalar) {
      blk.readout = Linear<T>::create(params_, p + "readout", c, 1, rng);
    } else {
      blk.edge_head = Linear<T>::create(params_, p + "edge_head", b, c, rng);
      blk.edge_weight = Linear<T>::create(params_, p + "edge_weight", c, 1, rng);
      blk.vector_weight = Linear<T>::create(params_, p + "vector_weight", c, std::max<std::size_t>(cfg_.vector_inputs, 1), rng);
    }
    blocks_.push_back(blk);
  }
  if (cfg_.layers == 0) readout0_ = Linear<T>::create(params_, "readout", c, 1, rng);
}

template <class T>
typename Pnita<T>::Trunk Pnita<T>::trunk(Tape<T>& tape, const graph::GraphBatch& g, const Var<T>& positions) const {
  check_graph(cfg_, g);
  const std::size_t p = g.num_nodes(), e = g.num_edges(), n = static_cast<std::size_t>(g.dim);
  if (positions.shape() != Shape{p, n}) throw ad::ShapeError("positions must be [P, n]");
  Trunk t;
  t.d = edge_differences(g, positions);
  Var<T> dist = ad::sqrt(ad::sum(ad::square(t.d), 1, true));  // [E, 1]
  std::vector<Var<T>> parts{ad::scale(dist, static_cast<T>(1.0 / cfg_.length_scale))};
  if (cfg_.edge_extra > 0) parts.push_back(extra_var(tape, g));
  t.basis = basis_.eval(tape, parts.size() == 1 ? parts[0] : ad::concat(parts, 1));

  // Invariant node inputs: scalars and vector norms.
  std::vector<Var<T>> inputs;
  if (cfg_.scalar_inputs > 0) inputs.push_back(tape.constant(g.scalars.template cast<T>()));
  if (cfg_.vector_inputs > 0) {
    Var<T> v = tape.constant(g.vectors.template cast<T>());
    inputs.push_back(ad::sqrt(ad::sum(ad::square(v), 1)));  // [P, V]
  }
  Var<T> f = embed_(tape, inputs.size() == 1 ? inputs[0] : ad::concat(inputs, 1));
  if (blocks_.empty()) t.states.push_back(f);
  for (const auto& blk : blocks_) {
    Var<T> k1 = blk.spatial(tape, t.basis);  // [E, C]
    Var<T> msg = ad::mul(k1, ad::gather(f, g.senders));
    Var<T> conv = ad::segment_sum(msg, g.receivers, p);
    if (cfg_.aggregation == Aggregation::Mean) {
      const auto deg = in_degree(g);
      Array<T> inv(Shape{p, 1});
      for (std::size_t i = 0; i < p; ++i) inv.data[i] = deg[i] > 0 ? T(1) / static_cast<T>(deg[i]) : T(0);
      conv = ad::mul(conv, tape.constant(std::move(inv)));
    }
    f = convnext_tail(tape, blk, f, conv);
    t.states.push_back(f);
  }
  (void)e;
  return t;
}

template <class T>
Output<T> Pnita<T>::forward(Tape<T>& tape, const graph::GraphBatch& g) const {
  return forward(tape, g, tape.constant(positions_array<T>(g)));
}

template <class T>
Output<T> Pnita<T>::forward(Tape<T>& tape, const graph::GraphBatch& g, const Var<T>& positions) const {
  if (cfg_.readout == Readout::Vector) {
    throw std::invalid_argument(
        "PNITA features are position-only and carry no direction, so a vector readout is not provided "
        "(see relative_vector_readout for the baseline head)");
  }
  Trunk t = trunk(tape, g, positions);
  const std::size_t p = g.num_nodes();
  Var<T> total;
  for (std::size_t k = 0; k < t.states.size(); ++k) {
    const Linear<T>& head = blocks_.empty() ? readout0_ : blocks_[k].readout;
    Var<T> r = head(tape, t.states[k]);
    total = total.valid() ? ad::add(total, r) : r;
  }
  Output<T> out;
  out.scalar = per_graph_sum(g, ad::reshape(total, Shape{p}));
  return out;
}

template <class T>
Output<T> Pnita<T>::relative_vector_readout(Tape<T>& tape, const graph::GraphBatch& g) const {
  if (cfg_.readout != Readout::Vector) throw std::invalid_argument("relative_vector_readout needs a vector config");
  if (blocks_.empty()) throw std::invalid_argument("relative_vector_readout needs at least one block");
  Trunk t = trunk(tape, g, tape.constant(positions_array<T>(g)));
  const std::size_t p = g.num_nodes(), e = g.num_edges(), n = static_cast<std::size_t>(g.dim);
  const std::size_t v = cfg_.vector_inputs;
  Var<T> vectors = v > 0 ? tape.constant(g.vectors.template cast<T>()) : Var<T>();
  Var<T> total;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& blk = blocks_[l];
    const Var<T>& h = t.states[l];
    Var<T> kr = blk.edge_head(tape, t.basis);                                       // [E, C]
    Var<T> s = blk.edge_weight(tape, ad::mul(kr, ad::gather(h, g.senders)));       // [E, 1]
    Var<T> vel = ad::segment_sum(ad::mul(s, t.d), g.receivers, p);                  // [P, n]
    if (v > 0) {
      Var<T> w = ad::reshape(blk.vector_weight(tape, h), Shape{p, v, 1});         // [P, V, 1]
      vel = ad::add(vel, ad::reshape(ad::bmm(vectors, w), Shape{p, n}));          // [P, n, V] x [P, V, 1]
    }
    total = total.valid() ? ad::add(total, vel) : vel;
  }
  (void)e;
  Output<T> out;
  out.vector = ad::scale(total, static_cast<T>(1.0 / static_cast<double>(blocks_.size())));
  return out;
}

// ------------------------------------------------------ energy and forces

template <class Model>
EnergyForces energy_and_forces(const Model& model, const graph::GraphBatch& g) {
  using T = typename std::remove_cvref_t<decltype(model.params())>::value_type;
  Tape<T> tape;
  Var<T> pos = tape.leaf(positions_array<T>(g));
  Output<T> out = model.forward(tape, g, pos);
  tape.backward(ad::sum_all(out.scalar));
  const Array<T> grad = tape.grad(pos);
  EnergyForces ef;
  ef.energy.resize(static_cast<Eigen::Index>(g.num_graphs));
  for (std::size_t k = 0; k < g.num_graphs; ++k) ef.energy(static_cast<Eigen::Index>(k)) = out.scalar.value().data[k];
  ef.forces.resize(g.positions.rows(), g.positions.cols());
  const auto n = static_cast<std::size_t>(g.dim);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      ef.forces(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = -static_cast<double>(grad.data[i * n + k]);
    }
  }
  return ef;
}

template ad::Array<float> positions_array<float>(const graph::GraphBatch&);
template ad::Array<double> positions_array<double>(const graph::GraphBatch&);
template class Ponita<float>;
template class Ponita<double>;
template class Pnita<float>;
template class Pnita<double>;
template EnergyForces energy_and_forces<Ponita<float>>(const Ponita<float>&, const graph::GraphBatch&);
template EnergyForces energy_and_forces<Ponita<double>>(const Ponita<double>&, const graph::GraphBatch&);
template EnergyForces energy_and_forces<Pnita<float>>(const Pnita<float>&, const graph::GraphBatch&);
template EnergyForces energy_and_forces<Pnita<double>>(const Pnita<double>&, const graph::GraphBatch&);

}  // namespace ponita::nn
