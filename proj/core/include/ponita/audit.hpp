#pragma once

// Property battery: attribute invariance, stabilizer independence,
// equivariance of the networks, separable vs full convolution, readout
// identities and finite-difference gradient checks. Every check reports the
// largest deviation it saw next to its tolerance.

#include "ponita/attributes.hpp"
#include "ponita/models.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ponita::audit {

struct Tolerances {
  double attribute_invariance = 1e-10;
  double attribute_roundtrip = 1e-10;
  double stabilizer = 1e-12;
  double corotated = 1e-9;  // relative
  double pnita_rotation = 1e-10;
  double separable = 1e-8;
  double readout_identity = 1e-6;
  double gradient = 1e-5;  // relative
  double force_sum = 1e-7;
};

struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string detail;
};

struct Report {
  std::vector<Check> checks;
  bool passed() const;
  std::string format() const;
};

struct Options {
  std::size_t trials = 100;            // network transforms per equivariance check
  std::size_t attribute_pairs = 1000;  // random pairs per space
  std::uint64_t seed = 0;
  Tolerances tol;
};

/// The spaces covered by the attribute checks, with their ambient dimension.
struct SpaceCase {
  attributes::SpaceTag tag;
  int dim;
  std::string name;
};
std::vector<SpaceCase> attribute_spaces();

/// Max |a(g x_i, g x_j) - a(x_i, x_j)| over random pairs and motions.
double attribute_invariance(const SpaceCase& s, std::size_t pairs, std::uint64_t seed);
/// Max |a(x_0, rep(a)) - a| over random pairs.
double attribute_roundtrip(const SpaceCase& s, std::size_t pairs, std::uint64_t seed);

/// A fully connected random graph of `nodes` nodes (positions ~ N(0, 1)).
graph::GraphBatch random_graph(std::mt19937_64& rng, int dim, std::size_t nodes, std::size_t scalars,
                               std::size_t vectors, std::size_t edge_extra);

struct Equivariance {
  double scalar = 0.0;  // max relative deviation of the scalar readout
  double vector = 0.0;  // max relative deviation of R v against v(g x)
};

/// Ponita with the grid co-rotated along with the input.
Equivariance corotated_equivariance(const nn::ModelConfig& cfg, std::size_t trials, std::uint64_t seed);
/// Mean relative scalar deviation under random rotations with the grid held fixed.
double fixed_grid_deviation(const nn::ModelConfig& cfg, std::size_t trials, std::uint64_t seed);
/// Max relative deviation of the Pnita scalar readout under random motions.
double pnita_invariance(const nn::ModelConfig& cfg, std::size_t trials, std::uint64_t seed);
/// Max |pointcloud_gconv(full kernel) - Linear(SphericalGConv(SpatialGConv))|
/// over random graphs and kernel networks.
double separable_equivalence(std::size_t draws, std::uint64_t seed);
/// Max |sphere_to_vec(vec_to_sphere(v)) - (N / n) v| on an exact platonic grid.
double readout_identity(std::size_t grid_size, std::size_t vectors, std::uint64_t seed);

Report run(const Options& opt);

// ---------------------------------------------------------------- gradients

struct GradCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
};

/// Central differences on `coordinates` random entries of the inputs and of
/// the parameters `loss` touches, compared with the tape gradient. The error
/// of an entry is |g_tape - g_fd| / max(|g_tape|, |g_fd|, floor).
GradCheck check_gradient(const std::string& name,
                         const std::function<ad::Var<double>(ad::Tape<double>&, const std::vector<ad::Var<double>>&)>& loss,
                         std::vector<ad::Array<double>> inputs, ad::ParameterStore<double>* params,
                         std::size_t coordinates, std::uint64_t seed, double h = 1e-6, double floor = 1e-4);

/// Every layer and both networks.
std::vector<GradCheck> gradient_suite(std::size_t coordinates, std::uint64_t seed, double h = 1e-6);

struct ForceCheck {
  std::string name;
  double max_rel_error = 0.0;  // forces against central differences of the energy
  double net_force = 0.0;      // max |sum_i F_i| per graph
};
std::vector<ForceCheck> force_suite(std::size_t coordinates, std::uint64_t seed, double h = 1e-6);

/// The gradient and force checks as a report.
Report gradient_report(std::size_t coordinates, std::uint64_t seed, const Tolerances& tol = {});

}  // namespace ponita::audit
