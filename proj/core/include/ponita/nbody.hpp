#pragma once

// Charged N-body toy system: Coulomb forces with softening,
//   F_i = k sum_j c_i c_j (p_i - p_j) / (|p_i - p_j|^2 + eps^2)^{3/2},
// unit masses, kick-drift-kick leapfrog.

#include "ponita/graph.hpp"
#include "ponita/point_cloud_io.hpp"

#include <cstdint>
#include <random>

namespace ponita::nbody {

using geometry::Matrix;

struct Physics {
  double coulomb = 1.0;
  double softening = 0.1;
  double dt = 1e-3;
  std::size_t steps = 1000;
};

struct State {
  Matrix positions;   // [K, 3]
  Matrix velocities;  // [K, 3]
  Eigen::VectorXd charges;

  std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }
};

Matrix accelerations(const State& s, const Physics& phys);
double kinetic_energy(const State& s);
double potential_energy(const State& s, const Physics& phys);
Eigen::VectorXd momentum(const State& s);

/// Advances `steps` leapfrog steps of size phys.dt.
State integrate(State s, const Physics& phys, std::size_t steps);

/// Positions and velocities ~ N(0, scale^2) per coordinate, charges +-1.
State random_state(std::mt19937_64& rng, std::size_t particles = 5, double position_scale = 0.5,
                   double velocity_scale = 0.5);

io::PointCloud to_point_cloud(const State& initial, const Matrix& final_positions);
State state_from(const io::PointCloud& pc);

/// `count` samples of (initial state, positions after phys.steps steps).
io::Dataset generate(std::size_t count, std::uint64_t seed, const Physics& phys = {});

/// Fully connected graph. Scalars: charge, |v|. Vectors: v and (centroid - p).
/// Edge conditioning: c_i c_j.
graph::GraphBatch featurize(const State& s);
graph::GraphBatch featurize(const io::PointCloud& pc);

/// Target positions of a sample as [K, 3].
Matrix target_positions(const io::PointCloud& pc);

}  // namespace ponita::nbody
