#pragma once

// Continuous kernels as small neural fields on invariant attributes:
//   attributes -> PolynomialEmbedding -> Linear -> GELU -> Linear -> GELU -> basis
// The basis is computed once per forward pass and shared; each layer reads
// its own kernel off the basis with a linear head.

#include "ponita/ops.hpp"
#include "ponita/sphere_grid.hpp"
#include "ponita/tensor.hpp"

#include <cstddef>
#include <random>
#include <string>
#include <vector>

namespace ponita::nn {

using ad::Array;
using ad::ParameterStore;
using ad::Tape;
using ad::Var;

/// All monomials of total degree 1..degree in graded-lexicographic order:
/// by degree, then lexicographically decreasing exponent vectors, so (x, y)
/// at degree 2 gives (x, y, x^2, xy, y^2).
class PolynomialEmbedding {
 public:
  PolynomialEmbedding(std::size_t input_dim, std::size_t degree);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t degree() const { return degree_; }
  std::size_t output_dim() const { return monomials_.size(); }
  const std::vector<std::vector<unsigned>>& monomials() const { return monomials_; }

  std::vector<double> embed(const std::vector<double>& x) const;
  /// x [R, input_dim] -> [R, output_dim], differentiable in x.
  template <class T>
  Var<T> apply(const Var<T>& x) const;

 private:
  std::size_t input_dim_, degree_;
  std::vector<std::vector<unsigned>> monomials_;
};

/// y = x W + b with W [in, out]. Weights start uniform in +-1/sqrt(in).
template <class T>
struct Linear {
  ad::Parameter<T>* weight = nullptr;
  ad::Parameter<T>* bias = nullptr;
  std::size_t in = 0, out = 0;

  static Linear create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                       std::mt19937_64& rng, bool with_bias = true);
  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const;
};

template <class T>
struct KernelBasis {
  PolynomialEmbedding embedding{1, 1};
  Linear<T> first, second;

  static KernelBasis create(ParameterStore<T>& store, const std::string& name, std::size_t attr_dim,
                            std::size_t degree, std::size_t basis_dim, std::mt19937_64& rng);
  std::size_t basis_dim() const { return second.out; }
  /// attrs [R, attr_dim] -> [R, basis_dim]. R = 0 is allowed.
  Var<T> eval(Tape<T>& tape, const Var<T>& attrs) const;
};

template <class T>
using KernelHead = Linear<T>;

/// basis [E, B] -> [E, C] for a head B -> C.
template <class T>
Var<T> eval_spatial_kernel(Tape<T>& tape, const KernelHead<T>& head, const Var<T>& basis);

/// Gram matrix entries o.o' of the grid as an [N*N, 1] attribute array.
Array<double> gram_attributes(const grids::SphereGrid& grid);

/// K2[o][o'][c] = head(basis(o.o'))[c] as a differentiable [N, N, C] tensor.
template <class T>
Var<T> spherical_kernel(Tape<T>& tape, const KernelBasis<T>& basis, const KernelHead<T>& head,
                        const grids::SphereGrid& grid);

/// Detached K2 for inference.
template <class T>
Array<T> precompute_spherical_kernel(const KernelBasis<T>& basis, const KernelHead<T>& head,
                                     const grids::SphereGrid& grid);

}  // namespace ponita::nn
