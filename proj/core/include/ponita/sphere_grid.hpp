#pragma once

// Orientation grids on S^1 and S^2. S^1 grids are exact (equally spaced); S^2
// grids come from a Thomson-style repulsion or, for the platonic counts, from
// the analytic solids.

#include "ponita/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace ponita::grids {

using geometry::Matrix;
using geometry::Rotation;
using geometry::Vector;

class SphereGrid {
 public:
  /// Rows of `points` are unit vectors; validated to 1e-10.
  SphereGrid(Matrix points, std::uint64_t seed = 0);

  int dim() const { return static_cast<int>(points_.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  std::uint64_t seed() const { return seed_; }
  const Matrix& points() const { return points_; }
  Vector point(std::size_t k) const { return points_.row(static_cast<Eigen::Index>(k)).transpose(); }

 private:
  Matrix points_;  // [N, n]
  std::uint64_t seed_;
};

struct RepulsionOptions {
  std::size_t steps = 2000;
  double step_size = 0.01;
  double decay = 0.999;
  double tolerance = 1e-9;  // stop once the largest accepted displacement falls below this
};

struct RepulsionTrace {
  std::vector<double> energies;  // energy after every accepted step, starting with the initial one
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  bool converged = false;
};

SphereGrid repulsion_grid(int n, std::size_t count, std::uint64_t seed, const RepulsionOptions& options = {},
                          RepulsionTrace* trace = nullptr);

/// Points at angles offset + 2 pi k / N.
SphereGrid circle_grid(std::size_t count, double offset = 0.0);

/// Tetrahedron, octahedron, cube, icosahedron or dodecahedron vertices.
SphereGrid platonic_grid(std::size_t count);

SphereGrid rotate_grid(const SphereGrid& grid, const Rotation& r);

/// G[o][o'] = o_o . o_o'
Matrix gram_matrix(const SphereGrid& grid);

double repulsion_energy(const Matrix& points);
double min_pairwise_angle(const SphereGrid& grid);
/// sum_o o o^T
Matrix second_moment(const SphereGrid& grid);

// Binary grid cache ("SGRD" little-endian; see README).
void write_grid(const SphereGrid& grid, const std::filesystem::path& file);
SphereGrid read_grid(const std::filesystem::path& file);

/// $PONITA_GRID_CACHE if set, otherwise ./.ponita_grids.
std::filesystem::path grid_cache_dir();
std::filesystem::path grid_cache_file(const std::filesystem::path& dir, int n, std::size_t count,
                                      std::uint64_t seed);

/// Loads the grid from the cache directory or generates and stores it.
SphereGrid cached_grid(int n, std::size_t count, std::uint64_t seed,
                       std::optional<std::filesystem::path> dir = std::nullopt);

/// The grid networks use by default: exact for S^1, cached repulsion for S^2.
SphereGrid default_grid(int n, std::size_t count, std::uint64_t seed = 0, bool use_cache = true);

}  // namespace ponita::grids
