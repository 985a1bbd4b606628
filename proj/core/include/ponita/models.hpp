#pragma once

// Full networks.
//
// Ponita (position-orientation, bundle form):
//   embed:  [ScalarToSphere(s) | VecToSphere(v)] -> Linear -> f [P, N, C]
//   block:  f + gamma * Linear(GELU(Linear(LayerNorm(SphericalGConv(SpatialGConv(f))))))
//   readout after every block: scalar -> summed over blocks, orientations and
//   nodes per graph; vector -> SphereToVec of a 1-channel head, averaged over
//   blocks.
//
// Pnita (positions only): the same blocks with distance-conditioned kernels
// and no spherical convolution; scalar readout only.

#include "ponita/graph.hpp"
#include "ponita/kernel_nets.hpp"
#include "ponita/layers.hpp"
#include "ponita/sphere_grid.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ponita::nn {

enum class Readout { Scalar, Vector };

struct ModelConfig {
  int dim = 3;
  std::size_t scalar_inputs = 0;
  std::size_t vector_inputs = 0;
  std::size_t edge_extra = 0;
  std::size_t layers = 5;
  std::size_t channels = 64;
  std::size_t grid_size = 12;
  std::size_t basis_dim = 64;
  std::size_t degree = 3;
  std::size_t widening = 4;
  Readout readout = Readout::Scalar;
  Aggregation aggregation = Aggregation::Sum;
  double length_scale = 1.0;
  double layer_scale_init = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t grid_seed = 0;
  bool cache_grid = true;

  void validate() const;
  std::map<std::string, double> to_meta() const;
  static ModelConfig from_meta(const std::map<std::string, double>& meta);
};

template <class T>
struct Output {
  Var<T> scalar;  // [G]
  Var<T> vector;  // [P, n]
};

template <class T>
class Ponita {
 public:
  explicit Ponita(const ModelConfig& cfg);
  Ponita(const ModelConfig& cfg, grids::SphereGrid grid);

  Output<T> forward(ad::Tape<T>& tape, const graph::GraphBatch& g) const;
  /// `positions` [P, n] may be a leaf so that forces flow back to it.
  Output<T> forward(ad::Tape<T>& tape, const graph::GraphBatch& g, const Var<T>& positions) const;

  ad::ParameterStore<T>& params() { return params_; }
  const ad::ParameterStore<T>& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }
  const grids::SphereGrid& grid() const { return grid_; }

 private:
  struct Block {
    KernelHead<T> spatial, spherical;
    ad::Parameter<T>* gamma = nullptr;
    ad::Parameter<T>* beta = nullptr;
    Linear<T> expand, project;
    ad::Parameter<T>* scale = nullptr;
    Linear<T> readout;
  };

  void build();

  ModelConfig cfg_;
  grids::SphereGrid grid_;
  ad::ParameterStore<T> params_;
  Linear<T> embed_;
  KernelBasis<T> spatial_basis_, spherical_basis_;
  std::vector<Block> blocks_;
  Linear<T> readout0_;
};

template <class T>
class Pnita {
 public:
  explicit Pnita(const ModelConfig& cfg);

  /// Scalar readout. Throws for a vector-readout config: there are no
  /// directional features to read a vector from.
  Output<T> forward(ad::Tape<T>& tape, const graph::GraphBatch& g) const;
  Output<T> forward(ad::Tape<T>& tape, const graph::GraphBatch& g, const Var<T>& positions) const;

  /// Baseline vector head for a vector-readout config: per block,
  /// v_i += sum_j s_ij (p_j - p_i) + sum_k w_ik v_ik with invariant weights
  /// s_ij (from the kernel basis and sender features) and w_ik (from node
  /// features), averaged over blocks. Node inputs are the scalars plus the
  /// norms of the input vectors.
  Output<T> relative_vector_readout(ad::Tape<T>& tape, const graph::GraphBatch& g) const;

  ad::ParameterStore<T>& params() { return params_; }
  const ad::ParameterStore<T>& params() const { return params_; }
  const ModelConfig& config() const { return cfg_; }

 private:
  struct Block {
    KernelHead<T> spatial;
    ad::Parameter<T>* gamma = nullptr;
    ad::Parameter<T>* beta = nullptr;
    Linear<T> expand, project;
    ad::Parameter<T>* scale = nullptr;
    Linear<T> readout;
    KernelHead<T> edge_head;
    Linear<T> edge_weight, vector_weight;
  };

  struct Trunk {
    Var<T> d;                   // [E, n]
    std::vector<Var<T>> states;  // after each block (or the embedding when L = 0)
    Var<T> basis;               // [E, B]
  };
  Trunk trunk(ad::Tape<T>& tape, const graph::GraphBatch& g, const Var<T>& positions) const;

  ModelConfig cfg_;
  ad::ParameterStore<T> params_;
  Linear<T> embed_;
  KernelBasis<T> basis_;
  std::vector<Block> blocks_;
  Linear<T> readout0_;
};

struct EnergyForces {
  Eigen::VectorXd energy;  // per graph
  geometry::Matrix forces;  // [P, n], -dE/dp
};

/// E from the scalar readout and F = -dE/dp through the whole network,
/// attribute computation included.
template <class Model>
EnergyForces energy_and_forces(const Model& model, const graph::GraphBatch& g);

/// Node positions of the graph as a [P, n] array.
template <class T>
ad::Array<T> positions_array(const graph::GraphBatch& g);

}  // namespace ponita::nn
