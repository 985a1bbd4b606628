#pragma once

#include "ponita/ops.hpp"
#include "ponita/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace ponita::testing {

using ad::Array;
using ad::Shape;
using ad::Tape;
using ad::Var;

inline Array<double> randn(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Array<double> a(std::move(shape));
  for (auto& v : a.data) v = nd(rng);
  return a;
}

using LossFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

// Largest relative error between tape gradients of the inputs and central
// differences over every input entry.
inline double fd_input_error(const LossFn& f, std::vector<Array<double>> inputs, double h = 1e-6,
                             double floor = 1e-6) {
  std::vector<Array<double>> grads;
  {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& a : inputs) vars.push_back(tape.leaf(a));
    tape.backward(f(tape, vars));
    for (const auto& v : vars) grads.push_back(tape.grad(v));
  }
  auto eval = [&] {
    Tape<double> tape;
    std::vector<Var<double>> vars;
    for (const auto& a : inputs) vars.push_back(tape.constant(a));
    return f(tape, vars).value().item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      double& x = inputs[k].data[i];
      const double saved = x;
      x = saved + h;
      const double up = eval();
      x = saved - h;
      const double down = eval();
      x = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = grads[k].data[i];
      worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor}));
    }
  }
  return worst;
}

// Scalar loss sum(x * w) with fixed random weights, so every output entry
// contributes with a distinct weight.
inline Var<double> probe(Tape<double>& tape, const Var<double>& x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ad::sum_all(ad::mul(x, tape.constant(randn(rng, x.shape()))));
}

}  // namespace ponita::testing
