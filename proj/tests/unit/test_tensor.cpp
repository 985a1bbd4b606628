#include "ponita/optim.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace ponita;
using namespace ponita::testing;

namespace {

using V = Var<double>;

double err(const LossFn& f, std::vector<Array<double>> in) { return fd_input_error(f, std::move(in)); }

Array<double> positive(std::mt19937_64& rng, Shape s) {
  auto a = randn(rng, std::move(s));
  for (auto& v : a.data) v = 0.5 + std::abs(v);
  return a;
}

}  // namespace

TEST(Tensor, SegmentSumExample) {
  Tape<double> tape;
  const auto x = tape.constant(Array<double>({3}, {1, 2, 3}));
  const auto y = ad::segment_sum(x, ad::Index{0, 0, 1}, 2);
  EXPECT_EQ(y.value().shape, (Shape{2}));
  EXPECT_EQ(y.value().data, (ad::Buffer<double>{3, 3}));
}

TEST(Tensor, SquareDerivative) {
  Tape<double> tape;
  const auto x = tape.leaf(Array<double>::scalar(3.0));
  tape.backward(ad::square(x));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 6.0);
}

TEST(Tensor, BackwardTwiceThrows) {
  Tape<double> tape;
  const auto x = tape.leaf(Array<double>::scalar(1.0));
  const auto y = ad::square(x);
  tape.backward(y);
  EXPECT_THROW(tape.backward(y), ad::TapeError);
}

TEST(Tensor, NonScalarLossThrows) {
  Tape<double> tape;
  const auto x = tape.leaf(Array<double>({2}, {1, 2}));
  EXPECT_ANY_THROW(tape.backward(ad::square(x)));
}

TEST(Tensor, ShapeErrorNamesBothShapes) {
  Tape<double> tape;
  const auto a = tape.constant(Array<double>({2, 3}));
  const auto b = tape.constant(Array<double>({4, 5}));
  try {
    ad::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ad::ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2, 3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4, 5]"), std::string::npos) << msg;
  }
  EXPECT_THROW(ad::add(a, b), ad::ShapeError);
}

TEST(Tensor, SumOfMatmulGradientIsOuterStructure) {
  // loss = sum(W x) with W [2, 3] and x [3, 1]: dL/dW[r][c] = x[c].
  Tape<double> tape;
  const auto w = tape.leaf(Array<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  const auto x = tape.constant(Array<double>({3, 1}, {0.5, -1, 2}));
  tape.backward(ad::sum_all(ad::matmul(w, x)));
  EXPECT_EQ(tape.grad(w).data, (ad::Buffer<double>{0.5, -1, 2, 0.5, -1, 2}));
}

TEST(Tensor, UnusedLeafHasZeroGradient) {
  Tape<double> tape;
  const auto x = tape.leaf(Array<double>({3}, {1, 2, 3}));
  const auto y = tape.leaf(Array<double>::scalar(2.0));
  tape.backward(ad::square(y));
  EXPECT_EQ(tape.grad(x).data, (ad::Buffer<double>(3, 0.0)));
  EXPECT_EQ(tape.grad(x).shape, x.shape());
}

TEST(Tensor, ForwardValues) {
  Tape<double> tape;
  const auto a = tape.constant(Array<double>({2, 2}, {1, 2, 3, 4}));
  const auto b = tape.constant(Array<double>({2}, {10, 20}));
  EXPECT_EQ(ad::add(a, b).value().data, (ad::Buffer<double>{11, 22, 13, 24}));
  EXPECT_EQ(ad::matmul(a, a).value().data, (ad::Buffer<double>{7, 10, 15, 22}));
  EXPECT_EQ(ad::sum(a, 0).value().data, (ad::Buffer<double>{4, 6}));
  EXPECT_EQ(ad::mean(a, 1).value().data, (ad::Buffer<double>{1.5, 3.5}));
  EXPECT_EQ(ad::transpose_last(a).value().data, (ad::Buffer<double>{1, 3, 2, 4}));
  EXPECT_EQ(ad::slice(a, 1, 1, 2).value().data, (ad::Buffer<double>{2, 4}));
  EXPECT_EQ(ad::concat<double>({a, a}, 0).value().shape, (Shape{4, 2}));
  EXPECT_EQ(ad::gather(a, ad::Index{1, 1, 0}).value().data, (ad::Buffer<double>{3, 4, 3, 4, 1, 2}));
  EXPECT_EQ(ad::relu(tape.constant(Array<double>({2}, {-1, 2}))).value().data, (ad::Buffer<double>{0, 2}));
  EXPECT_EQ(ad::clamp(tape.constant(Array<double>({3}, {-2, 0.5, 2})), -1.0, 1.0).value().data,
            (ad::Buffer<double>{-1, 0.5, 1}));
  EXPECT_NEAR(ad::acos_clamped(tape.constant(Array<double>({2}, {1.5, 0.0}))).value().data[0], 0.0, 1e-12);
}

TEST(Tensor, LayerNormNormalizesChannelAxis) {
  std::mt19937_64 rng(1);
  Tape<double> tape;
  const auto x = tape.constant(randn(rng, {4, 3, 8}, 3.0));
  const auto y = ad::layer_norm(x, tape.constant(Array<double>({8}, 1.0)), tape.constant(Array<double>({8}, 0.0)));
  const auto& v = y.value().data;
  for (std::size_t r = 0; r < 12; ++r) {
    double m = 0, s = 0;
    for (std::size_t c = 0; c < 8; ++c) m += v[r * 8 + c];
    m /= 8;
    for (std::size_t c = 0; c < 8; ++c) s += (v[r * 8 + c] - m) * (v[r * 8 + c] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(s / 8, 1.0, 1e-4);
  }
}

// Central differences on every input entry of every primitive.
TEST(TensorGradients, ElementwiseAndBroadcast) {
  std::mt19937_64 rng(2);
  const double tol = 1e-6;
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::add(v[0], v[1])); },
                {randn(rng, {3, 4}), randn(rng, {4})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::sub(v[0], v[1])); },
                {randn(rng, {3, 1}), randn(rng, {1, 4})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::mul(v[0], v[1])); },
                {randn(rng, {2, 3, 4}), randn(rng, {3, 1})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::div(v[0], v[1])); },
                {randn(rng, {3, 4}), positive(rng, {4})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::scale(ad::add_scalar(v[0], 0.3), -1.7)); },
                {randn(rng, {5})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::broadcast_to(v[0], {2, 3, 4})); },
                {randn(rng, {3, 1})}),
            tol);
}

TEST(TensorGradients, Contractions) {
  std::mt19937_64 rng(3);
  const double tol = 1e-6;
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::matmul(v[0], v[1])); },
                {randn(rng, {3, 4}), randn(rng, {4, 2})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::linear(v[0], v[1], v[2])); },
                {randn(rng, {5, 4}), randn(rng, {4, 3}), randn(rng, {3})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::bmm(v[0], v[1])); },
                {randn(rng, {2, 3, 4}), randn(rng, {2, 4, 2})}),
            tol);
  // K [N, N', C] contracted with f [P, N', C] over N'.
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::contract_channelwise(v[0], v[1])); },
                {randn(rng, {4, 4, 3}), randn(rng, {2, 4, 3})}),
            tol);
}

TEST(TensorGradients, IndexingAndShape) {
  std::mt19937_64 rng(4);
  const double tol = 1e-6;
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::gather(v[0], ad::Index{2, 0, 2, 1})); },
                {randn(rng, {3, 2})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::segment_sum(v[0], ad::Index{1, 0, 1, 1}, 3)); },
                {randn(rng, {4, 2})}),
            tol);
  EXPECT_LT(err(
                [](Tape<double>& t, const std::vector<V>& v) {
                  return probe(t, ad::edge_message_sum(v[0], v[1], ad::Index{0, 1, 1, 2}, ad::Index{1, 0, 2, 0}, 3));
                },
                {randn(rng, {4, 2, 3}), randn(rng, {3, 2, 3})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::reshape(v[0], {3, 4})); },
                {randn(rng, {2, 6})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::concat<double>({v[0], v[1]}, 1)); },
                {randn(rng, {2, 3}), randn(rng, {2, 1})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::slice(v[0], 1, 1, 3)); },
                {randn(rng, {2, 4, 2})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::transpose_last(v[0])); },
                {randn(rng, {2, 3, 4})}),
            tol);
}

TEST(TensorGradients, Reductions) {
  std::mt19937_64 rng(5);
  const double tol = 1e-6;
  for (std::size_t axis : {0u, 1u, 2u}) {
    EXPECT_LT(err([axis](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::sum(v[0], axis)); },
                  {randn(rng, {2, 3, 4})}),
              tol);
    EXPECT_LT(err([axis](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::mean(v[0], axis, true)); },
                  {randn(rng, {2, 3, 4})}),
              tol);
  }
  EXPECT_LT(err([](Tape<double>&, const std::vector<V>& v) { return ad::mean_all(ad::square(v[0])); }, {randn(rng, {7})}),
            tol);
}

TEST(TensorGradients, Nonlinearities) {
  std::mt19937_64 rng(6);
  const double tol = 1e-6;
  auto away_from_kinks = [&](Shape s) {
    auto a = randn(rng, std::move(s));
    for (auto& v : a.data) v = (v < 0 ? -0.1 : 0.1) + v;
    return a;
  };
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::relu(v[0])); }, {away_from_kinks({10})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::clamp(v[0], -0.5, 0.5)); },
                {Array<double>({6}, {-1.2, -0.3, 0.05, 0.2, 0.45, 0.9})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::gelu(v[0])); }, {randn(rng, {10})}), tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::sqrt(v[0])); }, {positive(rng, {6})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::exp(v[0])); }, {randn(rng, {6})}), tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::log(v[0])); }, {positive(rng, {6})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::square(v[0])); }, {randn(rng, {6})}),
            tol);
  EXPECT_LT(err([](Tape<double>& t, const std::vector<V>& v) { return probe(t, ad::acos_clamped(v[0])); },
                {Array<double>({5}, {-0.9, -0.4, 0.0, 0.3, 0.8})}),
            tol);
  EXPECT_LT(err(
                [](Tape<double>& t, const std::vector<V>& v) {
                  return probe(t, ad::layer_norm(v[0], v[1], v[2]));
                },
                {randn(rng, {3, 2, 5}), randn(rng, {5}), randn(rng, {5})}),
            tol);
}

TEST(Tensor, ReplayIsBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(8);
    Tape<double> tape;
    const auto x = tape.leaf(randn(rng, {6, 5}));
    const auto w = tape.constant(randn(rng, {5, 4}));
    const auto y = ad::sum_all(ad::gelu(ad::matmul(x, w)));
    tape.backward(y);
    return std::make_pair(y.value().item(), tape.grad(x).data);
  };
  EXPECT_EQ(run(), run());
}

TEST(Tensor, FloatInstantiationRuns) {
  Tape<float> tape;
  const auto x = tape.leaf(Array<float>({2}, {1.f, 2.f}));
  tape.backward(ad::sum_all(ad::square(x)));
  EXPECT_EQ(tape.grad(x).data, (ad::Buffer<float>{2.f, 4.f}));
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ad::ParameterStore<double> store;
  auto& p = store.add("w", Array<double>({3}, {1, -2, 3}));
  p.zero_grad();
  optim::Adam<double> adam({.lr = 0.1});
  adam.step(store);
  EXPECT_EQ(p.value.data, (ad::Buffer<double>{1, -2, 3}));
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  ad::ParameterStore<double> store;
  auto& p = store.add("w", Array<double>({3}, {1, -2, 3}));
  p.grad = Array<double>({3}, {0.5, -4, 1e-3});
  const optim::AdamOptions opt{.lr = 0.01};
  optim::Adam<double> adam(opt);
  adam.step(store);
  const std::vector<double> g{0.5, -4, 1e-3}, x0{1, -2, 3};
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(p.value.data[i], x0[i] - opt.lr * g[i] / (std::abs(g[i]) + opt.eps), 1e-15);
  }
}

TEST(Adam, DeterministicGivenInputs) {
  auto run = [] {
    ad::ParameterStore<double> store;
    auto& p = store.add("w", Array<double>({2}, {0.3, 0.7}));
    optim::Adam<double> adam;
    for (int k = 0; k < 5; ++k) {
      p.grad = Array<double>({2}, {std::sin(k + 0.1), std::cos(k * 0.7)});
      adam.step(store);
    }
    return p.value.data;
  };
  EXPECT_EQ(run(), run());
}

TEST(CosineLr, Examples) {
  EXPECT_DOUBLE_EQ(optim::cosine_lr(0, 500, 50, 1e-3), 1e-3 / 50);
  EXPECT_DOUBLE_EQ(optim::cosine_lr(50, 500, 50, 1e-3), 1e-3);
  const double last = optim::cosine_lr(499, 500, 50, 1e-3);
  const double step = 1e-3 * 0.5 * (1.0 - std::cos(std::numbers::pi / 449.0));
  EXPECT_LE(last, step);
  EXPECT_GE(last, 0.0);
  for (std::size_t e = 51; e < 500; ++e) {
    EXPECT_LE(optim::cosine_lr(e, 500, 50, 1e-3), optim::cosine_lr(e - 1, 500, 50, 1e-3));
  }
  EXPECT_THROW(optim::cosine_lr(500, 500, 50, 1e-3), std::invalid_argument);
}
