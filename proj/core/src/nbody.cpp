#include "ponita/nbody.hpp"

#include <cmath>
#include <stdexcept>

namespace ponita::nbody {

Matrix accelerations(const State& s, const Physics& phys) {
  const auto k = s.positions.rows();
  Matrix a = Matrix::Zero(k, s.positions.cols());
  const double eps2 = phys.softening * phys.softening;
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const Eigen::RowVectorXd d = s.positions.row(i) - s.positions.row(j);
      const double r2 = d.squaredNorm() + eps2;
      const Eigen::RowVectorXd f = phys.coulomb * s.charges(i) * s.charges(j) * d / (r2 * std::sqrt(r2));
      a.row(i) += f;
      a.row(j) -= f;
    }
  }
  return a;
}

double kinetic_energy(const State& s) { return 0.5 * s.velocities.squaredNorm(); }

double potential_energy(const State& s, const Physics& phys) {
  const double eps2 = phys.softening * phys.softening;
  double u = 0.0;
  for (Eigen::Index i = 0; i < s.positions.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < s.positions.rows(); ++j) {
      u += phys.coulomb * s.charges(i) * s.charges(j) /
           std::sqrt((s.positions.row(i) - s.positions.row(j)).squaredNorm() + eps2);
    }
  }
  return u;
}

Eigen::VectorXd momentum(const State& s) { return s.velocities.colwise().sum().transpose(); }

State integrate(State s, const Physics& phys, std::size_t steps) {
  const double h = phys.dt;
  Matrix a = accelerations(s, phys);
  for (std::size_t t = 0; t < steps; ++t) {
    s.velocities += 0.5 * h * a;
    s.positions += h * s.velocities;
    a = accelerations(s, phys);
    s.velocities += 0.5 * h * a;
  }
  return s;
}

State random_state(std::mt19937_64& rng, std::size_t particles, double position_scale, double velocity_scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const auto k = static_cast<Eigen::Index>(particles);
  State s;
  s.positions.resize(k, 3);
  s.velocities.resize(k, 3);
  s.charges.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (int c = 0; c < 3; ++c) s.positions(i, c) = position_scale * normal(rng);
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    for (int c = 0; c < 3; ++c) s.velocities(i, c) = velocity_scale * normal(rng);
  }
  for (Eigen::Index i = 0; i < k; ++i) s.charges(i) = coin(rng) ? 1.0 : -1.0;
  return s;
}

io::PointCloud to_point_cloud(const State& initial, const Matrix& final_positions) {
  io::PointCloud pc;
  pc.positions = initial.positions;
  pc.scalars["charge"] = io::Field::flat(initial.charges);
  pc.vectors["velocity"] = initial.velocities;
  pc.targets["positions"] = io::Field::table(final_positions);
  return pc;
}

State state_from(const io::PointCloud& pc) {
  auto c = pc.scalars.find("charge");
  auto v = pc.vectors.find("velocity");
  if (c == pc.scalars.end() || v == pc.vectors.end()) {
    throw std::runtime_error("n-body sample needs a 'charge' scalar and a 'velocity' vector");
  }
  if (pc.dim() != 3) throw std::runtime_error("n-body samples are three-dimensional");
  State s;
  s.positions = pc.positions;
  s.velocities = v->second;
  s.charges = c->second.data.col(0);
  return s;
}

Matrix target_positions(const io::PointCloud& pc) {
  auto it = pc.targets.find("positions");
  if (it == pc.targets.end()) throw std::runtime_error("n-body sample has no 'positions' target");
  if (it->second.data.rows() != pc.positions.rows() || it->second.data.cols() != 3) {
    throw std::runtime_error("n-body target must be [K, 3]");
  }
  return it->second.data;
}

io::Dataset generate(std::size_t count, std::uint64_t seed, const Physics& phys) {
  if (count < 1) throw std::invalid_argument("nbody generate: count must be >= 1");
  std::mt19937_64 rng(seed);
  io::Dataset ds;
  ds.kind = "nbody";
  ds.meta = {{"seed", static_cast<double>(seed)},
             {"dt", phys.dt},
             {"steps", static_cast<double>(phys.steps)},
             {"softening", phys.softening},
             {"coulomb", phys.coulomb}};
  ds.samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    State s = random_state(rng);
    State end = integrate(s, phys, phys.steps);
    ds.samples.push_back(to_point_cloud(s, end.positions));
  }
  return ds;
}

graph::GraphBatch featurize(const State& s) {
  const std::size_t k = s.size();
  ad::Array<double> scalars(ad::Shape{k, 2});
  ad::Array<double> vectors(ad::Shape{k, 3, 2});
  const Eigen::RowVectorXd centroid = s.positions.colwise().mean();
  for (std::size_t i = 0; i < k; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    scalars.data[i * 2 + 0] = s.charges(r);
    scalars.data[i * 2 + 1] = s.velocities.row(r).norm();
    for (std::size_t a = 0; a < 3; ++a) {
      const auto c = static_cast<Eigen::Index>(a);
      vectors.data[(i * 3 + a) * 2 + 0] = s.velocities(r, c);
      vectors.data[(i * 3 + a) * 2 + 1] = centroid(c) - s.positions(r, c);
    }
  }
  graph::GraphBatch g = graph::make_graph(s.positions, std::move(scalars), std::move(vectors));
  graph::connect_fully(g);
  g.edge_extra.resize(static_cast<Eigen::Index>(g.num_edges()), 1);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    g.edge_extra(static_cast<Eigen::Index>(e), 0) = s.charges(g.receivers[e]) * s.charges(g.senders[e]);
  }
  return g;
}

graph::GraphBatch featurize(const io::PointCloud& pc) { return featurize(state_from(pc)); }

}  // namespace ponita::nbody
