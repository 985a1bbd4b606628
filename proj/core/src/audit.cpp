#include "ponita/audit.hpp"

#include "ponita/kernel_nets.hpp"
#include "ponita/layers.hpp"
#include "ponita/ops.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <span>
#include <sstream>

namespace ponita::audit {

namespace {

using ad::Array;
using ad::Shape;
using ad::Tape;
using ad::Var;
using attributes::SpaceTag;
using geometry::Matrix;

Array<double> normal_array(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Array<double> a(std::move(shape));
  for (auto& v : a.data) v = nd(rng);
  return a;
}

Matrix normal_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
  return m;
}

Matrix to_matrix(const Array<double>& a, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = a.data[static_cast<std::size_t>(i * cols + k)];
  }
  return m;
}

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double relative(double diff, double scale) { return scale > 0.0 ? diff / scale : diff; }

void with_model_grids(graph::GraphBatch& g, const grids::SphereGrid& grid) {
  g.grids.assign(g.num_graphs, grid);
}

Check make_check(std::string name, double value, double tol, std::string detail = {}) {
  return Check{std::move(name), value, tol, value < tol, std::move(detail)};
}

nn::ModelConfig small_config(std::uint64_t seed) {
  nn::ModelConfig cfg;
  cfg.scalar_inputs = 2;
  cfg.vector_inputs = 1;
  cfg.edge_extra = 1;
  cfg.layers = 3;
  cfg.channels = 32;
  cfg.basis_dim = 32;
  cfg.grid_size = 12;
  cfg.seed = seed;
  return cfg;
}

Var<double> weighted_sum(Tape<double>& tape, const Var<double>& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Array<double> w = normal_array(rng, x.shape());
  return ad::scale(ad::sum_all(ad::mul(x, tape.constant(std::move(w)))), 1.0 / static_cast<double>(x.size()));
}

}  // namespace

bool Report::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::string Report::format() const {
  std::ostringstream out;
  std::size_t width = 0;
  for (const auto& c : checks) width = std::max(width, c.name.size());
  for (const auto& c : checks) {
    out << (c.passed ? "PASS " : "FAIL ") << std::left << std::setw(static_cast<int>(width)) << c.name << "  "
        << std::scientific << std::setprecision(3) << c.value << "  (tol " << c.tolerance << ")";
    if (!c.detail.empty()) out << "  " << c.detail;
    out << '\n';
  }
  return out.str();
}

std::vector<SpaceCase> attribute_spaces() {
  return {{SpaceTag::Rn, 2, "R2"},       {SpaceTag::Rn, 3, "R3"},       {SpaceTag::R2xS1, 2, "R2xS1"},
          {SpaceTag::R3xS2, 3, "R3xS2"}, {SpaceTag::SE2, 2, "SE2"},     {SpaceTag::SE3, 3, "SE3"}};
}

double attribute_invariance(const SpaceCase& s, std::size_t pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const auto xi = attributes::random_point(s.tag, rng, s.dim);
    const auto xj = attributes::random_point(s.tag, rng, s.dim);
    const auto g = geometry::random_motion(s.dim, rng);
    const auto a = attributes::attribute(s.tag, xi, xj);
    const auto b = attributes::attribute(s.tag, geometry::act(g, xi), geometry::act(g, xj));
    worst = std::max(worst, attributes::max_abs_diff(a, b));
  }
  return worst;
}

double attribute_roundtrip(const SpaceCase& s, std::size_t pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const auto xi = attributes::random_point(s.tag, rng, s.dim);
    const auto xj = attributes::random_point(s.tag, rng, s.dim);
    const auto a = attributes::attribute(s.tag, xi, xj);
    const auto rep = attributes::representative_from_attr(a, s.dim);
    const auto back = attributes::attribute(s.tag, attributes::origin(s.tag, s.dim), rep);
    worst = std::max(worst, attributes::max_abs_diff(a, back));
  }
  return worst;
}

graph::GraphBatch random_graph(std::mt19937_64& rng, int dim, std::size_t nodes, std::size_t scalars,
                               std::size_t vectors, std::size_t edge_extra) {
  const auto n = static_cast<std::size_t>(dim);
  graph::GraphBatch g = graph::make_graph(normal_matrix(rng, static_cast<Eigen::Index>(nodes), dim),
                                          normal_array(rng, Shape{nodes, scalars}),
                                          normal_array(rng, Shape{nodes, n, vectors}));
  graph::connect_fully(g);
  if (edge_extra > 0) g.edge_extra = normal_matrix(rng, static_cast<Eigen::Index>(g.num_edges()),
                                                   static_cast<Eigen::Index>(edge_extra));
  return g;
}

Equivariance corotated_equivariance(const nn::ModelConfig& cfg, std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ModelConfig sc = cfg, vc = cfg;
  sc.readout = nn::Readout::Scalar;
  vc.readout = nn::Readout::Vector;
  nn::Ponita<double> scalar_model(sc);
  nn::Ponita<double> vector_model(vc, scalar_model.grid());
  Equivariance eq;
  for (std::size_t t = 0; t < trials; ++t) {
    graph::GraphBatch g = random_graph(rng, cfg.dim, 8, cfg.scalar_inputs, cfg.vector_inputs, cfg.edge_extra);
    with_model_grids(g, scalar_model.grid());
    const auto motion = geometry::random_motion(cfg.dim, rng);
    const graph::GraphBatch h = graph::transform(g, motion, true);

    Tape<double> tape;
    const auto s0 = scalar_model.forward(tape, g).scalar.value().data;
    const auto s1 = scalar_model.forward(tape, h).scalar.value().data;
    double ds = 0.0;
    for (std::size_t k = 0; k < s0.size(); ++k) ds = std::max(ds, std::abs(s0[k] - s1[k]));
    eq.scalar = std::max(eq.scalar, relative(ds, max_abs(s0)));

    const auto p = static_cast<Eigen::Index>(g.num_nodes());
    const Matrix v0 = to_matrix(vector_model.forward(tape, g).vector.value(), p, cfg.dim);
    const Matrix v1 = to_matrix(vector_model.forward(tape, h).vector.value(), p, cfg.dim);
    const Matrix rotated = v0 * motion.rotation.matrix().transpose();
    eq.vector = std::max(eq.vector, relative((v1 - rotated).cwiseAbs().maxCoeff(), v0.cwiseAbs().maxCoeff()));
  }
  return eq;
}

double fixed_grid_deviation(const nn::ModelConfig& cfg, std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ModelConfig sc = cfg;
  sc.readout = nn::Readout::Scalar;
  nn::Ponita<double> model(sc);
  double total = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    graph::GraphBatch g = random_graph(rng, cfg.dim, 8, cfg.scalar_inputs, cfg.vector_inputs, cfg.edge_extra);
    const auto motion = geometry::random_motion(cfg.dim, rng);
    const graph::GraphBatch h = graph::transform(g, motion, false);
    Tape<double> tape;
    const auto s0 = model.forward(tape, g).scalar.value().data;
    const auto s1 = model.forward(tape, h).scalar.value().data;
    double ds = 0.0;
    for (std::size_t k = 0; k < s0.size(); ++k) ds = std::max(ds, std::abs(s0[k] - s1[k]));
    total += relative(ds, max_abs(s0));
  }
  return trials == 0 ? 0.0 : total / static_cast<double>(trials);
}

double pnita_invariance(const nn::ModelConfig& cfg, std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ModelConfig sc = cfg;
  sc.readout = nn::Readout::Scalar;
  nn::Pnita<double> model(sc);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    graph::GraphBatch g = random_graph(rng, cfg.dim, 8, cfg.scalar_inputs, cfg.vector_inputs, cfg.edge_extra);
    const auto motion = geometry::random_motion(cfg.dim, rng);
    const graph::GraphBatch h = graph::transform(g, motion, false);
    Tape<double> tape;
    const auto s0 = model.forward(tape, g).scalar.value().data;
    const auto s1 = model.forward(tape, h).scalar.value().data;
    double ds = 0.0;
    for (std::size_t k = 0; k < s0.size(); ++k) ds = std::max(ds, std::abs(s0[k] - s1[k]));
    worst = std::max(worst, relative(ds, max_abs(s0)));
  }
  return worst;
}

double separable_equivalence(std::size_t draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  const std::size_t c_in = 4, c_out = 3, basis = 8;
  for (std::size_t draw = 0; draw < draws; ++draw) {
    const std::size_t p = 4 + draw % 3;
    graph::GraphBatch g = random_graph(rng, 3, p, 0, 0, 0);
    const grids::SphereGrid grid = grids::rotate_grid(grids::platonic_grid(12), geometry::random_rotation(3, rng));
    const std::size_t big_n = grid.size(), e = g.num_edges();
    const Matrix& o = grid.points();

    ad::ParameterStore<double> store;
    auto spatial = nn::KernelBasis<double>::create(store, "spatial", 2, 3, basis, rng);
    auto spherical = nn::KernelBasis<double>::create(store, "spherical", 1, 3, basis, rng);
    auto k1_head = nn::Linear<double>::create(store, "k1", basis, c_in, rng);
    auto k2_head = nn::Linear<double>::create(store, "k2", basis, c_in, rng);
    auto mix = nn::Linear<double>::create(store, "mix", c_in, c_out, rng, false);
    const Array<double> f = normal_array(rng, Shape{p, big_n, c_in});

    // Separable pipeline on the bundle.
    Tape<double> tape;
    Array<double> attrs(Shape{e * big_n, 2});
    for (std::size_t q = 0; q < e; ++q) {
      const Eigen::Vector3d d = (g.positions.row(g.senders[q]) - g.positions.row(g.receivers[q])).transpose();
      for (std::size_t a = 0; a < big_n; ++a) {
        const Eigen::Vector3d oa = o.row(static_cast<Eigen::Index>(a)).transpose();
        const double along = oa.dot(d);
        attrs.data[(q * big_n + a) * 2] = along;
        attrs.data[(q * big_n + a) * 2 + 1] = (d - along * oa).norm();
      }
    }
    Var<double> k1 = ad::reshape(k1_head(tape, spatial.eval(tape, tape.constant(attrs))), Shape{e, big_n, c_in});
    Var<double> k2 = ad::reshape(k2_head(tape, spherical.eval(tape, tape.constant(nn::gram_attributes(grid)))),
                                 Shape{big_n, big_n, c_in});
    Var<double> fv = tape.constant(f);
    Var<double> sep = mix(tape, nn::spherical_gconv(nn::spatial_gconv(g, fv, k1), k2));

    // Full kernel on the point cloud of (position, orientation) pairs:
    // K[(i, o) <- (j, o')] = W^T (k2(o . o') * k1(spatial invariants of d_ij w.r.t. o')).
    graph::GraphBatch pc;
    pc.dim = 3;
    pc.positions.resize(static_cast<Eigen::Index>(p * big_n), 3);
    Matrix orient(static_cast<Eigen::Index>(p * big_n), 3);
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t a = 0; a < big_n; ++a) {
        pc.positions.row(static_cast<Eigen::Index>(i * big_n + a)) = g.positions.row(static_cast<Eigen::Index>(i));
        orient.row(static_cast<Eigen::Index>(i * big_n + a)) = o.row(static_cast<Eigen::Index>(a));
      }
    }
    pc.orientations = orient;
    pc.node_graph.assign(p * big_n, 0);
    pc.scalars = Array<double>(Shape{p * big_n, 0});
    pc.vectors = Array<double>(Shape{p * big_n, 3, 0});
    pc.edge_extra = Matrix(0, 0);
    Array<double> pc_spatial(Shape{e * big_n * big_n, 2});
    Array<double> pc_spherical(Shape{e * big_n * big_n, 1});
    std::size_t row = 0;
    for (std::size_t q = 0; q < e; ++q) {
      const Eigen::Vector3d d = (g.positions.row(g.senders[q]) - g.positions.row(g.receivers[q])).transpose();
      for (std::size_t a = 0; a < big_n; ++a) {
        for (std::size_t b = 0; b < big_n; ++b, ++row) {
          pc.receivers.push_back(static_cast<std::uint32_t>(g.receivers[q] * big_n + a));
          pc.senders.push_back(static_cast<std::uint32_t>(g.senders[q] * big_n + b));
          const Eigen::Vector3d ob = o.row(static_cast<Eigen::Index>(b)).transpose();
          const double along = ob.dot(d);
          pc_spatial.data[row * 2] = along;
          pc_spatial.data[row * 2 + 1] = (d - along * ob).norm();
          pc_spherical.data[row] = o.row(static_cast<Eigen::Index>(a)).dot(o.row(static_cast<Eigen::Index>(b)));
        }
      }
    }
    pc.validate();
    const std::size_t ee = row;
    Var<double> kk = ad::mul(k1_head(tape, spatial.eval(tape, tape.constant(pc_spatial))),
                             k2_head(tape, spherical.eval(tape, tape.constant(pc_spherical))));  // [E', C_in]
    Var<double> wt = ad::reshape(ad::transpose_last(tape.param(*mix.weight)), Shape{1, c_out, c_in});
    Var<double> kernel = ad::mul(ad::reshape(kk, Shape{ee, 1, c_in}), wt);  // [E', C_out, C_in]
    Var<double> full = nn::pointcloud_gconv(pc, ad::reshape(fv, Shape{p * big_n, c_in}), kernel);

    const auto& a = sep.value().data;
    const auto& b = full.value().data;
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, std::abs(a[k] - b[k]));
  }
  return worst;
}

double readout_identity(std::size_t grid_size, std::size_t vectors, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const grids::SphereGrid grid = grids::platonic_grid(grid_size);
  const std::size_t n = static_cast<std::size_t>(grid.dim()), p = 5;
  Tape<double> tape;
  Array<double> g(Shape{grid.size(), n});
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (std::size_t a = 0; a < n; ++a) g.data[k * n + a] = grid.points()(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(a));
  }
  Var<double> gv = tape.constant(std::move(g));
  const Array<double> v = normal_array(rng, Shape{p, n, vectors});
  Var<double> back = nn::sphere_to_vec(nn::vec_to_sphere(tape.constant(v), gv), gv);
  const double factor = static_cast<double>(grid.size()) / static_cast<double>(n);
  double worst = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) worst = std::max(worst, std::abs(back.value().data[k] - factor * v.data[k]));
  return worst;
}

Report run(const Options& opt) {
  Report rep;
  const auto& tol = opt.tol;
  std::uint64_t s = opt.seed;
  for (const auto& sp : attribute_spaces()) {
    rep.checks.push_back(make_check("attribute invariance " + sp.name,
                                    attribute_invariance(sp, opt.attribute_pairs, ++s), tol.attribute_invariance));
  }
  for (const auto& sp : attribute_spaces()) {
    rep.checks.push_back(make_check("attribute round trip " + sp.name, attribute_roundtrip(sp, opt.attribute_pairs, ++s),
                                    tol.attribute_roundtrip));
  }
  for (const auto& sp : attribute_spaces()) {
    rep.checks.push_back(make_check("stabilizer independence " + sp.name,
                                    attributes::stabilizer_invariance_check(sp.tag, opt.attribute_pairs, ++s, sp.dim),
                                    tol.stabilizer));
  }
  const nn::ModelConfig cfg = small_config(opt.seed);
  const auto eq = corotated_equivariance(cfg, opt.trials, ++s);
  rep.checks.push_back(make_check("co-rotated invariance (scalar readout)", eq.scalar, tol.corotated));
  rep.checks.push_back(make_check("co-rotated equivariance (vector readout)", eq.vector, tol.corotated));

  std::ostringstream detail;
  double worst_step = -1.0;
  double previous = 0.0;
  const std::size_t sizes[] = {4, 12, 20, 60};
  const std::uint64_t trend_seed = ++s;
  for (std::size_t k = 0; k < std::size(sizes); ++k) {
    nn::ModelConfig c = cfg;
    c.grid_size = sizes[k];
    const double dev = fixed_grid_deviation(c, opt.trials, trend_seed);
    detail << (k ? " " : "") << "N=" << sizes[k] << ":" << std::scientific << std::setprecision(2) << dev;
    if (k > 0) worst_step = k == 1 ? dev - previous : std::max(worst_step, dev - previous);
    previous = dev;
  }
  rep.checks.push_back(make_check("fixed-grid deviation decreases with N", worst_step, 0.0, detail.str()));

  nn::ModelConfig pc = cfg;
  rep.checks.push_back(make_check("pnita invariance", pnita_invariance(pc, opt.trials, ++s), tol.pnita_rotation));
  rep.checks.push_back(make_check("separable == full convolution", separable_equivalence(10, ++s), tol.separable));
  rep.checks.push_back(make_check("vec_to_sphere/sphere_to_vec = N/3 on icosahedron", readout_identity(12, 3, ++s),
                                  tol.readout_identity));
  return rep;
}

// ---------------------------------------------------------------- gradients

GradCheck check_gradient(const std::string& name,
                         const std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>& loss,
                         std::vector<Array<double>> inputs, ad::ParameterStore<double>* params,
                         std::size_t coordinates, std::uint64_t seed, double h, double floor) {
  // Tape gradients.
  std::vector<Array<double>> input_grads;
  if (params) params->zero_grad();
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& a : inputs) vars.push_back(tape.leaf(a));
    tape.backward(loss(tape, vars));
    for (const auto& v : vars) input_grads.push_back(tape.grad(v));
  }
  auto evaluate = [&]() {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& a : inputs) vars.push_back(tape.constant(a));
    return loss(tape, vars).value().item();
  };

  // (tensor, entry): tensors are the inputs followed by the parameters.
  std::vector<Array<double>*> values;
  std::vector<const Array<double>*> grads;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    values.push_back(&inputs[k]);
    grads.push_back(&input_grads[k]);
  }
  const std::size_t n_inputs = values.size();
  if (params) {
    for (auto& prm : *params) {
      values.push_back(&prm.value);
      grads.push_back(&prm.grad);
    }
  }
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) -> std::pair<std::size_t, std::size_t> {
    std::size_t total = 0;
    for (std::size_t k = lo; k < hi; ++k) total += values[k]->size();
    std::size_t r = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
    for (std::size_t k = lo; k < hi; ++k) {
      if (r < values[k]->size()) return {k, r};
      r -= values[k]->size();
    }
    return {hi - 1, 0};
  };
  const bool have_inputs = n_inputs > 0, have_params = values.size() > n_inputs;
  GradCheck res{name, 0.0, 0};
  for (std::size_t c = 0; c < coordinates; ++c) {
    const bool from_inputs = have_inputs && (!have_params || c % 2 == 0);
    const auto [t, i] = from_inputs ? pick(0, n_inputs) : pick(n_inputs, values.size());
    double& x = values[t]->data[i];
    const double saved = x;
    x = saved + h;
    const double up = evaluate();
    x = saved - h;
    const double down = evaluate();
    x = saved;
    const double fd = (up - down) / (2.0 * h);
    const double an = grads[t]->data[i];
    const double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
    res.max_rel_error = std::max(res.max_rel_error, err);
    ++res.coordinates;
  }
  return res;
}

std::vector<GradCheck> gradient_suite(std::size_t coordinates, std::uint64_t seed, double h) {
  std::vector<GradCheck> out;
  std::mt19937_64 rng(seed);
  std::uint64_t s = seed;
  auto next = [&]() { return ++s; };

  {
    ad::ParameterStore<double> store;
    auto lin = nn::Linear<double>::create(store, "lin", 4, 3, rng);
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "Linear", [&](Tape<double>& t, const auto& v) { return weighted_sum(t, lin(t, v[0]), w); },
        {normal_array(rng, Shape{5, 4})}, &store, coordinates, next(), h));
  }
  {
    ad::ParameterStore<double> store;
    auto basis = nn::KernelBasis<double>::create(store, "basis", 3, 3, 8, rng);
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "KernelBasis", [&](Tape<double>& t, const auto& v) { return weighted_sum(t, basis.eval(t, v[0]), w); },
        {normal_array(rng, Shape{6, 3})}, &store, coordinates, next(), h));
  }
  {
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "GELU", [&](Tape<double>& t, const auto& v) { return weighted_sum(t, ad::gelu(v[0]), w); },
        {normal_array(rng, Shape{4, 5})}, nullptr, coordinates, next(), h));
  }
  {
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "LayerNorm",
        [&](Tape<double>& t, const auto& v) { return weighted_sum(t, ad::layer_norm(v[0], v[1], v[2]), w); },
        {normal_array(rng, Shape{4, 3, 5}), normal_array(rng, Shape{5}), normal_array(rng, Shape{5})}, nullptr,
        coordinates, next(), h));
  }
  graph::GraphBatch g = random_graph(rng, 3, 5, 2, 2, 1);
  const std::size_t p = g.num_nodes(), e = g.num_edges(), big_n = 6, c = 3;
  {
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "SpatialGConv",
        [&](Tape<double>& t, const auto& v) { return weighted_sum(t, nn::spatial_gconv(g, v[0], v[1]), w); },
        {normal_array(rng, Shape{p, big_n, c}), normal_array(rng, Shape{e, big_n, c})}, nullptr, coordinates, next(),
        h));
  }
  {
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "SpatialGConv (mean)",
        [&](Tape<double>& t, const auto& v) {
          return weighted_sum(t, nn::spatial_gconv(g, v[0], v[1], nn::Aggregation::Mean), w);
        },
        {normal_array(rng, Shape{p, big_n, c}), normal_array(rng, Shape{e, big_n, c})}, nullptr, coordinates, next(),
        h));
  }
  {
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "SphericalGConv",
        [&](Tape<double>& t, const auto& v) { return weighted_sum(t, nn::spherical_gconv(v[0], v[1]), w); },
        {normal_array(rng, Shape{p, big_n, c}), normal_array(rng, Shape{big_n, big_n, c})}, nullptr, coordinates,
        next(), h));
  }
  {
    graph::GraphBatch pcg = g;
    pcg.orientations = normal_matrix(rng, static_cast<Eigen::Index>(p), 3).rowwise().normalized();
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "PointCloudGConv",
        [&](Tape<double>& t, const auto& v) { return weighted_sum(t, nn::pointcloud_gconv(pcg, v[0], v[1]), w); },
        {normal_array(rng, Shape{p, c}), normal_array(rng, Shape{e, 2, c})}, nullptr, coordinates, next(), h));
  }
  {
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "ScalarToSphere",
        [&](Tape<double>& t, const auto& v) { return weighted_sum(t, nn::scalar_to_sphere(v[0], big_n), w); },
        {normal_array(rng, Shape{p, c})}, nullptr, coordinates, next(), h));
  }
  {
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "VecToSphere", [&](Tape<double>& t, const auto& v) { return weighted_sum(t, nn::vec_to_sphere(v[0], v[1]), w); },
        {normal_array(rng, Shape{p, 3, 2}), normal_array(rng, Shape{big_n, 3})}, nullptr, coordinates, next(), h));
  }
  {
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "SphereToScalar", [&](Tape<double>& t, const auto& v) { return weighted_sum(t, nn::sphere_to_scalar(v[0]), w); },
        {normal_array(rng, Shape{p, big_n, c})}, nullptr, coordinates, next(), h));
  }
  {
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "SphereToVec", [&](Tape<double>& t, const auto& v) { return weighted_sum(t, nn::sphere_to_vec(v[0], v[1]), w); },
        {normal_array(rng, Shape{p, big_n, c}), normal_array(rng, Shape{p, big_n, 3})}, nullptr, coordinates, next(),
        h));
  }

  nn::ModelConfig cfg;
  cfg.scalar_inputs = 2;
  cfg.vector_inputs = 2;
  cfg.edge_extra = 1;
  cfg.layers = 2;
  cfg.channels = 8;
  cfg.basis_dim = 8;
  cfg.grid_size = 12;
  cfg.seed = next();
  const Array<double> pos = nn::positions_array<double>(g);
  for (auto readout : {nn::Readout::Scalar, nn::Readout::Vector}) {
    cfg.readout = readout;
    nn::Ponita<double> model(cfg);
    const std::uint64_t w = next();
    const bool scalar = readout == nn::Readout::Scalar;
    out.push_back(check_gradient(
        scalar ? "Ponita (scalar readout)" : "Ponita (vector readout)",
        [&](Tape<double>& t, const auto& v) {
          auto o = model.forward(t, g, v[0]);
          return weighted_sum(t, scalar ? o.scalar : o.vector, w);
        },
        {pos}, &model.params(), coordinates, next(), h));
  }
  {
    cfg.readout = nn::Readout::Scalar;
    nn::Pnita<double> model(cfg);
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "Pnita (scalar readout)",
        [&](Tape<double>& t, const auto& v) { return weighted_sum(t, model.forward(t, g, v[0]).scalar, w); }, {pos},
        &model.params(), coordinates, next(), h));
  }
  {
    cfg.readout = nn::Readout::Vector;
    nn::Pnita<double> model(cfg);
    const std::uint64_t w = next();
    out.push_back(check_gradient(
        "Pnita (relative vector readout)",
        [&](Tape<double>& t, const auto&) { return weighted_sum(t, model.relative_vector_readout(t, g).vector, w); },
        {}, &model.params(), coordinates, next(), h));
  }
  return out;
}

namespace {

template <class Model>
ForceCheck force_check(const std::string& name, const Model& model, const graph::GraphBatch& g,
                       std::size_t coordinates, std::uint64_t seed, double h) {
  const auto ef = nn::energy_and_forces(model, g);
  auto total_energy = [&](const Matrix& positions) {
    Tape<double> tape;
    graph::GraphBatch moved = g;
    moved.positions = positions;
    return ad::sum_all(model.forward(tape, moved, tape.constant(nn::positions_array<double>(moved)))
                           .scalar)
        .value()
        .item();
  };
  ForceCheck res{name, 0.0, 0.0};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> row(0, g.positions.rows() - 1), col(0, g.positions.cols() - 1);
  for (std::size_t k = 0; k < coordinates; ++k) {
    const Eigen::Index i = row(rng), a = col(rng);
    Matrix up = g.positions, down = g.positions;
    up(i, a) += h;
    down(i, a) -= h;
    const double fd = -(total_energy(up) - total_energy(down)) / (2.0 * h);
    const double an = ef.forces(i, a);
    res.max_rel_error = std::max(res.max_rel_error, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-4}));
  }
  Matrix net = Matrix::Zero(static_cast<Eigen::Index>(g.num_graphs), g.positions.cols());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) net.row(g.node_graph[i]) += ef.forces.row(static_cast<Eigen::Index>(i));
  res.net_force = net.cwiseAbs().maxCoeff();
  return res;
}

}  // namespace

std::vector<ForceCheck> force_suite(std::size_t coordinates, std::uint64_t seed, double h) {
  std::mt19937_64 rng(seed);
  const graph::GraphBatch a = random_graph(rng, 3, 5, 2, 0, 0);
  const graph::GraphBatch b = random_graph(rng, 3, 4, 2, 0, 0);
  const graph::GraphBatch g = graph::concat(std::vector<graph::GraphBatch>{a, b});
  nn::ModelConfig cfg;
  cfg.scalar_inputs = 2;
  cfg.layers = 2;
  cfg.channels = 8;
  cfg.basis_dim = 8;
  cfg.seed = seed;
  std::vector<ForceCheck> out;
  out.push_back(force_check("Ponita forces", nn::Ponita<double>(cfg), g, coordinates, seed + 1, h));
  out.push_back(force_check("Pnita forces", nn::Pnita<double>(cfg), g, coordinates, seed + 2, h));
  return out;
}

Report gradient_report(std::size_t coordinates, std::uint64_t seed, const Tolerances& tol) {
  Report rep;
  for (const auto& gc : gradient_suite(coordinates, seed)) {
    rep.checks.push_back(make_check("gradient " + gc.name, gc.max_rel_error, tol.gradient));
  }
  for (const auto& fc : force_suite(coordinates, seed + 1000)) {
    rep.checks.push_back(make_check(fc.name + " vs finite differences", fc.max_rel_error, tol.gradient));
    rep.checks.push_back(make_check(fc.name + " sum to zero", fc.net_force, tol.force_sum));
  }
  return rep;
}

}  // namespace ponita::audit
