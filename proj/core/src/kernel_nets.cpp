#include "ponita/kernel_nets.hpp"

#include <cmath>
#include <functional>

namespace ponita::nn {

namespace {

template <class T>
T ipow(T x, unsigned e) {
  T r = T(1);
  for (unsigned k = 0; k < e; ++k) r *= x;
  return r;
}

// Exponent vectors of total degree d, lexicographically decreasing.
void exponents_of_degree(std::size_t dim, unsigned d, std::vector<std::vector<unsigned>>& out) {
  std::vector<unsigned> e(dim, 0);
  std::function<void(std::size_t, unsigned)> rec = [&](std::size_t k, unsigned left) {
    if (k + 1 == dim) {
      e[k] = left;
      out.push_back(e);
      return;
    }
    for (unsigned v = left + 1; v-- > 0;) {
      e[k] = v;
      rec(k + 1, left - v);
    }
  };
  rec(0, d);
}

}  // namespace

PolynomialEmbedding::PolynomialEmbedding(std::size_t input_dim, std::size_t degree)
    : input_dim_(input_dim), degree_(degree) {
  if (input_dim == 0 || degree == 0) throw std::invalid_argument("PolynomialEmbedding: need input_dim, degree >= 1");
  for (unsigned d = 1; d <= degree; ++d) exponents_of_degree(input_dim, d, monomials_);
}

std::vector<double> PolynomialEmbedding::embed(const std::vector<double>& x) const {
  if (x.size() != input_dim_) throw ad::ShapeError("poly_embed: expected " + std::to_string(input_dim_) + " inputs");
  std::vector<double> out(monomials_.size());
  for (std::size_t m = 0; m < monomials_.size(); ++m) {
    double v = 1.0;
    for (std::size_t k = 0; k < input_dim_; ++k) v *= ipow(x[k], monomials_[m][k]);
    out[m] = v;
  }
  return out;
}

template <class T>
Var<T> PolynomialEmbedding::apply(const Var<T>& x) const {
  const auto& xs = x.shape();
  if (xs.size() != 2 || xs[1] != input_dim_) {
    throw ad::ShapeError("poly_embed: expected [R, " + std::to_string(input_dim_) + "], got " + ad::shape_string(xs));
  }
  const std::size_t rows = xs[0], dim = input_dim_, out_dim = monomials_.size();
  Array<T> out(ad::Shape{rows, out_dim});
  const T* xv = x.value().data.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t m = 0; m < out_dim; ++m) {
      T v = T(1);
      for (std::size_t k = 0; k < dim; ++k) v *= ipow(xv[r * dim + k], monomials_[m][k]);
      out.data[r * out_dim + m] = v;
    }
  }
  const std::size_t id = x.id();
  auto monos = monomials_;
  return x.tape().record(std::move(out), {x}, [=, monos = std::move(monos)](Tape<T>& t, const Array<T>& g) {
    Array<T>* gx = t.grad_sink(id);
    if (!gx) return;
    const T* xv = t.value(id).data.data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = xv + r * dim;
      for (std::size_t m = 0; m < out_dim; ++m) {
        const T dz = g.data[r * out_dim + m];
        if (dz == T(0)) continue;
        for (std::size_t k = 0; k < dim; ++k) {
          const unsigned ek = monos[m][k];
          if (ek == 0) continue;
          T d = static_cast<T>(ek) * ipow(row[k], ek - 1);
          for (std::size_t q = 0; q < dim; ++q) {
            if (q != k) d *= ipow(row[q], monos[m][q]);
          }
          gx->data[r * dim + k] += dz * d;
        }
      }
    }
  });
}

template <class T>
Linear<T> Linear<T>::create(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
                            std::mt19937_64& rng, bool with_bias) {
  const double bound = in == 0 ? 0.0 : 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Array<T> w(ad::Shape{in, out});
  for (auto& v : w.data) v = static_cast<T>(u(rng));
  Linear lin;
  lin.in = in;
  lin.out = out;
  lin.weight = &store.add(name + ".weight", std::move(w));
  if (with_bias) {
    Array<T> b(ad::Shape{out});
    for (auto& v : b.data) v = static_cast<T>(u(rng));
    lin.bias = &store.add(name + ".bias", std::move(b));
  }
  return lin;
}

template <class T>
Var<T> Linear<T>::operator()(Tape<T>& tape, const Var<T>& x) const {
  if (bias != nullptr) return ad::linear(x, tape.param(*weight), tape.param(*bias));
  return ad::matmul(x, tape.param(*weight));
}

template <class T>
KernelBasis<T> KernelBasis<T>::create(ParameterStore<T>& store, const std::string& name, std::size_t attr_dim,
                                      std::size_t degree, std::size_t basis_dim, std::mt19937_64& rng) {
  KernelBasis kb;
  kb.embedding = PolynomialEmbedding(attr_dim, degree);
  kb.first = Linear<T>::create(store, name + ".0", kb.embedding.output_dim(), basis_dim, rng);
  kb.second = Linear<T>::create(store, name + ".1", basis_dim, basis_dim, rng);
  return kb;
}

template <class T>
Var<T> KernelBasis<T>::eval(Tape<T>& tape, const Var<T>& attrs) const {
  Var<T> h = embedding.apply(attrs);
  h = ad::gelu(first(tape, h));
  return ad::gelu(second(tape, h));
}

template <class T>
Var<T> eval_spatial_kernel(Tape<T>& tape, const KernelHead<T>& head, const Var<T>& basis) {
  return head(tape, basis);
}

Array<double> gram_attributes(const grids::SphereGrid& grid) {
  const auto g = grids::gram_matrix(grid);
  const std::size_t n = grid.size();
  Array<double> out(ad::Shape{n * n, 1});
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      out.data[a * n + b] = g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  return out;
}

template <class T>
Var<T> spherical_kernel(Tape<T>& tape, const KernelBasis<T>& basis, const KernelHead<T>& head,
                        const grids::SphereGrid& grid) {
  const std::size_t n = grid.size();
  Var<T> attrs = tape.constant(gram_attributes(grid).template cast<T>());
  Var<T> k = head(tape, basis.eval(tape, attrs));
  return ad::reshape(k, ad::Shape{n, n, head.out});
}

template <class T>
Array<T> precompute_spherical_kernel(const KernelBasis<T>& basis, const KernelHead<T>& head,
                                     const grids::SphereGrid& grid) {
  Tape<T> tape;
  return spherical_kernel(tape, basis, head, grid).value();
}

#define PONITA_INSTANTIATE_KERNELS(T)                                                                         \
  template Var<T> PolynomialEmbedding::apply<T>(const Var<T>&) const;                                         \
  template struct Linear<T>;                                                                                  \
  template struct KernelBasis<T>;                                                                             \
  template Var<T> eval_spatial_kernel<T>(Tape<T>&, const KernelHead<T>&, const Var<T>&);                      \
  template Var<T> spherical_kernel<T>(Tape<T>&, const KernelBasis<T>&, const KernelHead<T>&,                 \
                                      const grids::SphereGrid&);                                              \
  template Array<T> precompute_spherical_kernel<T>(const KernelBasis<T>&, const KernelHead<T>&,               \
                                                   const grids::SphereGrid&);

PONITA_INSTANTIATE_KERNELS(float)
PONITA_INSTANTIATE_KERNELS(double)

}  // namespace ponita::nn
