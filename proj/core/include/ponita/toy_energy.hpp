#pragma once

// Small molecule-like clusters with a species-dependent Morse pair potential
//   U = sum_{i<j} D_ab [(1 - exp(-alpha (r - r0)))^2 - 1]
// used as a desk-scale energy/force regression task.

#include "ponita/graph.hpp"
#include "ponita/point_cloud_io.hpp"

#include <cstdint>
#include <random>

namespace ponita::toy {

using geometry::Matrix;

struct Potential {
  double alpha = 1.5;
  double r0 = 1.0;
  double depth[2][2] = {{1.0, 0.8}, {0.8, 0.6}};
};

double energy(const Matrix& positions, const std::vector<int>& species, const Potential& pot = {});
Matrix forces(const Matrix& positions, const std::vector<int>& species, const Potential& pot = {});

/// Clusters of `atoms` atoms grown by attaching each new atom 0.8..1.4 away
/// from a random earlier one, keeping every pair at least 0.7 apart.
io::Dataset generate(std::size_t count, std::uint64_t seed, std::size_t atoms = 6, const Potential& pot = {});

std::vector<int> species_of(const io::PointCloud& pc);

/// Fully connected graph with the one-hot species as scalar inputs.
graph::GraphBatch featurize(const io::PointCloud& pc);

double target_energy(const io::PointCloud& pc);
Matrix target_forces(const io::PointCloud& pc);

}  // namespace ponita::toy
