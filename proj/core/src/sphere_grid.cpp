#include "ponita/sphere_grid.hpp"

#include "ponita/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ponita::grids {

namespace {

constexpr std::uint32_t kGridVersion = 1;

Matrix normalized_rows(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.row(i).normalize();
  return m;
}

// Tangential Coulomb forces -dE/dx_i projected onto the sphere at x_i.
Matrix tangent_forces(const Matrix& x) {
  const Eigen::Index n = x.rows();
  Matrix f = Matrix::Zero(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Eigen::RowVectorXd d = x.row(i) - x.row(j);
      const double r = d.norm();
      const Eigen::RowVectorXd push = d / (r * r * r);
      f.row(i) += push;
      f.row(j) -= push;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) f.row(i) -= f.row(i).dot(x.row(i)) * x.row(i);
  return f;
}

}  // namespace

SphereGrid::SphereGrid(Matrix points, std::uint64_t seed) : points_(std::move(points)), seed_(seed) {
  if (points_.cols() != 2 && points_.cols() != 3) {
    throw geometry::DimensionError("sphere grids live in R^2 or R^3");
  }
  for (Eigen::Index i = 0; i < points_.rows(); ++i) {
    if (std::abs(points_.row(i).norm() - 1.0) > 1e-10) {
      throw std::invalid_argument("sphere grid point " + std::to_string(i) + " is not a unit vector");
    }
  }
}

double repulsion_energy(const Matrix& points) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < points.rows(); ++j) e += 1.0 / (points.row(i) - points.row(j)).norm();
  }
  return e;
}

SphereGrid repulsion_grid(int n, std::size_t count, std::uint64_t seed, const RepulsionOptions& options,
                          RepulsionTrace* trace) {
  if (count < 2) throw std::invalid_argument("repulsion_grid: need at least 2 points");
  if (n == 2) {
    // Equal spacing is the exact optimum on the circle; the seed picks the offset.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> offset(0.0, 2.0 * std::numbers::pi / static_cast<double>(count));
    SphereGrid g = circle_grid(count, offset(rng));
    if (trace != nullptr) {
      *trace = RepulsionTrace{{repulsion_energy(g.points())}, 0, 0, true};
    }
    return SphereGrid(g.points(), seed);
  }
  if (n != 3) throw geometry::DimensionError("repulsion_grid: n must be 2 or 3");

  std::mt19937_64 rng(seed);
  Matrix x(static_cast<Eigen::Index>(count), 3);
  for (std::size_t i = 0; i < count; ++i) x.row(static_cast<Eigen::Index>(i)) = geometry::random_unit_vector(3, rng).transpose();

  RepulsionTrace local;
  RepulsionTrace& tr = trace != nullptr ? *trace : local;
  tr = RepulsionTrace{};
  double energy = repulsion_energy(x);
  tr.energies.push_back(energy);
  double eta = options.step_size;

  for (std::size_t step = 0; step < options.steps; ++step) {
    const Matrix f = tangent_forces(x);
    const double fmax = f.rowwise().norm().maxCoeff();
    if (fmax == 0.0) {
      tr.converged = true;
      break;
    }
    const Matrix proposal = normalized_rows(x + (eta / fmax) * f);
    const double e_new = repulsion_energy(proposal);
    if (e_new <= energy) {
      const double disp = (proposal - x).rowwise().norm().maxCoeff();
      x = proposal;
      energy = e_new;
      tr.energies.push_back(energy);
      ++tr.accepted;
      if (disp < options.tolerance) {
        tr.converged = true;
        break;
      }
    } else {
      ++tr.rejected;
      eta *= 0.5;
      if (eta < options.tolerance) {
        tr.converged = true;
        break;
      }
    }
    eta *= options.decay;
  }
  return SphereGrid(normalized_rows(x), seed);
}

SphereGrid circle_grid(std::size_t count, double offset) {
  if (count < 1) throw std::invalid_argument("circle_grid: need at least 1 point");
  Matrix pts(static_cast<Eigen::Index>(count), 2);
  for (std::size_t k = 0; k < count; ++k) {
    const double a = offset + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
    pts(static_cast<Eigen::Index>(k), 0) = std::cos(a);
    pts(static_cast<Eigen::Index>(k), 1) = std::sin(a);
  }
  return SphereGrid(pts);
}

SphereGrid platonic_grid(std::size_t count) {
  const double phi = std::numbers::phi;
  std::vector<Eigen::RowVector3d> v;
  switch (count) {
    case 4:
      v = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
      break;
    case 6:
      v = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      break;
    case 8:
      for (int sx : {-1, 1}) {
        for (int sy : {-1, 1}) {
          for (int sz : {-1, 1}) v.emplace_back(sx, sy, sz);
        }
      }
      break;
    case 12:
      for (int s1 : {-1, 1}) {
        for (int s2 : {-1, 1}) {
          v.emplace_back(0, s1, s2 * phi);
          v.emplace_back(s1, s2 * phi, 0);
          v.emplace_back(s2 * phi, 0, s1);
        }
      }
      break;
    case 20:
      for (int sx : {-1, 1}) {
        for (int sy : {-1, 1}) {
          for (int sz : {-1, 1}) v.emplace_back(sx, sy, sz);
        }
      }
      for (int s1 : {-1, 1}) {
        for (int s2 : {-1, 1}) {
          v.emplace_back(0, s1 / phi, s2 * phi);
          v.emplace_back(s1 / phi, s2 * phi, 0);
          v.emplace_back(s2 * phi, 0, s1 / phi);
        }
      }
      break;
    default:
      throw std::invalid_argument("platonic_grid: count must be one of 4, 6, 8, 12, 20");
  }
  Matrix pts(static_cast<Eigen::Index>(v.size()), 3);
  for (std::size_t i = 0; i < v.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = v[i].normalized();
  return SphereGrid(pts);
}

SphereGrid rotate_grid(const SphereGrid& grid, const Rotation& r) {
  if (r.dim() != grid.dim()) throw geometry::DimensionError("rotate_grid: dimension mismatch");
  return SphereGrid(grid.points() * r.matrix().transpose(), grid.seed());
}

Matrix gram_matrix(const SphereGrid& grid) { return grid.points() * grid.points().transpose(); }

double min_pairwise_angle(const SphereGrid& grid) {
  const Matrix g = gram_matrix(grid);
  double best = -1.0;
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < g.cols(); ++j) best = std::max(best, g(i, j));
  }
  return std::acos(std::clamp(best, -1.0, 1.0));
}

Matrix second_moment(const SphereGrid& grid) { return grid.points().transpose() * grid.points(); }

void write_grid(const SphereGrid& grid, const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + file.string() + " for writing");
  binary::write_magic(os, "SGRD");
  binary::write_le<std::uint32_t>(os, kGridVersion);
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(grid.dim()));
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(grid.size()));
  binary::write_le<std::uint64_t>(os, grid.seed());
  for (Eigen::Index i = 0; i < grid.points().rows(); ++i) {
    for (Eigen::Index k = 0; k < grid.points().cols(); ++k) binary::write_le<double>(os, grid.points()(i, k));
  }
  if (!os) throw std::runtime_error("failed writing " + file.string());
}

SphereGrid read_grid(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + file.string());
  binary::expect_magic(is, "SGRD");
  const auto version = binary::read_le<std::uint32_t>(is);
  if (version != kGridVersion) throw std::runtime_error("unsupported grid file version " + std::to_string(version));
  const auto n = binary::read_le<std::uint32_t>(is);
  const auto count = binary::read_le<std::uint32_t>(is);
  const auto seed = binary::read_le<std::uint64_t>(is);
  if (n != 2 && n != 3) throw std::runtime_error("grid file has invalid dimension");
  Matrix pts(count, n);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t k = 0; k < n; ++k) pts(i, k) = binary::read_le<double>(is);
  }
  return SphereGrid(pts, seed);
}

std::filesystem::path grid_cache_dir() {
  if (const char* env = std::getenv("PONITA_GRID_CACHE"); env != nullptr && *env != '\0') return env;
  return std::filesystem::path(".ponita_grids");
}

std::filesystem::path grid_cache_file(const std::filesystem::path& dir, int n, std::size_t count,
                                      std::uint64_t seed) {
  std::ostringstream name;
  name << "grid_n" << n << "_N" << count << "_s" << seed << ".sgrd";
  return dir / name.str();
}

SphereGrid cached_grid(int n, std::size_t count, std::uint64_t seed, std::optional<std::filesystem::path> dir) {
  const auto root = dir.value_or(grid_cache_dir());
  const auto file = grid_cache_file(root, n, count, seed);
  std::error_code ec;
  if (std::filesystem::exists(file, ec)) {
    try {
      SphereGrid g = read_grid(file);
      if (g.dim() == n && g.size() == count && g.seed() == seed) return g;
    } catch (const std::exception&) {
      // unreadable cache entry: regenerate below
    }
  }
  SphereGrid g = repulsion_grid(n, count, seed);
  std::filesystem::create_directories(root, ec);
  if (!ec) {
    try {
      write_grid(g, file);
    } catch (const std::exception&) {
      // a read-only cache is not fatal
    }
  }
  return g;
}

SphereGrid default_grid(int n, std::size_t count, std::uint64_t seed, bool use_cache) {
  if (n == 2) return circle_grid(count, 0.0);
  if (count == 1) {
    Matrix pole = Matrix::Zero(1, 3);
    pole(0, 2) = 1.0;
    return SphereGrid(pole, seed);
  }
  return use_cache ? cached_grid(n, count, seed) : repulsion_grid(n, count, seed);
}

}  // namespace ponita::grids
