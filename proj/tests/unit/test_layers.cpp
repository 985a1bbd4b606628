#include "ponita/audit.hpp"
#include "ponita/graph.hpp"
#include "ponita/kernel_nets.hpp"
#include "ponita/layers.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace ponita;
using namespace ponita::testing;
using geometry::Matrix;

namespace {

Array<double> grid_array(const grids::SphereGrid& g) {
  const Matrix& p = g.points();
  Array<double> a({static_cast<std::size_t>(p.rows()), static_cast<std::size_t>(p.cols())});
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) a.data[static_cast<std::size_t>(r * p.cols() + c)] = p(r, c);
  }
  return a;
}

graph::GraphBatch two_nodes() {
  Matrix pos(2, 3);
  pos << 0, 0, 0, 1, 0.5, -0.2;
  auto g = graph::make_graph(pos);
  g.receivers = {0};
  g.senders = {1};
  g.edge_extra = Matrix(1, 0);
  return g;
}

double max_abs(const Array<double>& a, const Array<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST(PolynomialEmbedding, Examples) {
  EXPECT_EQ(nn::PolynomialEmbedding(1, 2).embed({3.0}), (std::vector<double>{3, 9}));
  EXPECT_EQ(nn::PolynomialEmbedding(2, 2).embed({2.0, 5.0}), (std::vector<double>{2, 5, 4, 10, 25}));
  EXPECT_EQ(nn::PolynomialEmbedding(3, 3).output_dim(), 19u);
}

TEST(PolynomialEmbedding, LengthIsBinomialMinusOne) {
  auto binom = [](std::size_t n, std::size_t k) {
    double r = 1;
    for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return static_cast<std::size_t>(std::lround(r));
  };
  for (std::size_t d = 1; d <= 4; ++d) {
    for (std::size_t deg = 1; deg <= 4; ++deg) {
      EXPECT_EQ(nn::PolynomialEmbedding(d, deg).output_dim(), binom(d + deg, deg) - 1) << d << " " << deg;
    }
  }
}

TEST(PolynomialEmbedding, TapeMatchesEmbedAndGradient) {
  const nn::PolynomialEmbedding pe(3, 3);
  std::mt19937_64 rng(1);
  const auto x = randn(rng, {4, 3});
  Tape<double> tape;
  const auto y = pe.apply(tape.constant(x));
  for (std::size_t r = 0; r < 4; ++r) {
    const auto want = pe.embed({x.data[3 * r], x.data[3 * r + 1], x.data[3 * r + 2]});
    for (std::size_t k = 0; k < 19; ++k) EXPECT_NEAR(y.value().data[r * 19 + k], want[k], 1e-14);
  }
  EXPECT_LT(fd_input_error([&](Tape<double>& t, const std::vector<Var<double>>& v) { return probe(t, pe.apply(v[0])); },
                           {x}),
            1e-6);
}

TEST(KernelBasis, EmptyEdgesAndDeterminism) {
  ad::ParameterStore<double> store;
  std::mt19937_64 rng(2);
  const auto kb = nn::KernelBasis<double>::create(store, "b", 3, 3, 16, rng);
  {
    Tape<double> tape;
    const auto out = kb.eval(tape, tape.constant(Array<double>({0, 3})));
    EXPECT_EQ(out.shape(), (Shape{0, 16}));
  }
  Tape<double> tape;
  const auto out = kb.eval(tape, tape.constant(Array<double>({2, 3}, {0.1, -0.4, 0.7, 0.1, -0.4, 0.7})));
  for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(out.value().data[k], out.value().data[16 + k]);
}

TEST(KernelBasis, ParameterGradientMatchesFiniteDifferences) {
  ad::ParameterStore<double> store;
  std::mt19937_64 rng(3);
  const auto kb = nn::KernelBasis<double>::create(store, "b", 3, 3, 8, rng);
  const auto head = nn::Linear<double>::create(store, "h", 8, 5, rng);
  const auto res = audit::check_gradient(
      "basis",
      [&](Tape<double>& t, const std::vector<Var<double>>& v) {
        return probe(t, nn::eval_spatial_kernel(t, head, kb.eval(t, v[0])));
      },
      {randn(rng, {6, 3})}, &store, 20, 4);
  EXPECT_LT(res.max_rel_error, 1e-5);
}

TEST(SphericalKernel, GramInvarianceZeroHeadAndDiagonal) {
  ad::ParameterStore<double> store;
  std::mt19937_64 rng(5);
  const auto kb = nn::KernelBasis<double>::create(store, "b", 1, 3, 16, rng);
  const auto head = nn::Linear<double>::create(store, "h", 16, 4, rng);
  const auto grid = grids::repulsion_grid(3, 12, 0);
  const auto k2 = nn::precompute_spherical_kernel(kb, head, grid);
  ASSERT_EQ(k2.shape, (Shape{12, 12, 4}));
  const auto rotated = nn::precompute_spherical_kernel(kb, head, grids::rotate_grid(grid, geometry::random_rotation(3, rng)));
  EXPECT_LE(max_abs(k2, rotated), 1e-12);
  for (std::size_t o = 1; o < 12; ++o) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(k2.data[(o * 12 + o) * 4 + c], k2.data[c], 1e-12);
  }
  for (auto& v : head.weight->value.data) v = 0.0;
  for (auto& v : head.bias->value.data) v = 0.0;
  const auto zero = nn::precompute_spherical_kernel(kb, head, grid);
  for (double v : zero.data) EXPECT_EQ(v, 0.0);
}

TEST(SpatialGConv, EmptyNeighbourhoodGivesZero) {
  auto g = graph::make_graph(Matrix::Zero(1, 3));
  Tape<double> tape;
  const auto f = tape.constant(Array<double>({1, 4, 2}, 1.0));
  const auto k = tape.constant(Array<double>({0, 4, 2}));
  const auto out = nn::spatial_gconv(g, f, k);
  for (double v : out.value().data) EXPECT_EQ(v, 0.0);
}

TEST(SpatialGConv, UnitKernelCopiesSender) {
  const auto g = two_nodes();
  std::mt19937_64 rng(6);
  Tape<double> tape;
  const auto f = randn(rng, {2, 4, 3});
  const auto out = nn::spatial_gconv(g, tape.constant(f), tape.constant(Array<double>({1, 4, 3}, 1.0)));
  for (std::size_t k = 0; k < 12; ++k) {
    EXPECT_EQ(out.value().data[k], f.data[12 + k]);
    EXPECT_EQ(out.value().data[12 + k], 0.0);
  }
  const auto mean = nn::spatial_gconv(g, tape.constant(f), tape.constant(Array<double>({1, 4, 3}, 2.0)),
                                      nn::Aggregation::Mean);
  for (std::size_t k = 0; k < 12; ++k) EXPECT_DOUBLE_EQ(mean.value().data[k], 2.0 * f.data[12 + k]);
}

TEST(SphericalGConv, IdentityAndMeanKernels) {
  std::mt19937_64 rng(7);
  const std::size_t n = 5, c = 3;
  const auto f = randn(rng, {2, n, c});
  Array<double> eye({n, n, c}), avg({n, n, c}, 1.0 / n);
  for (std::size_t o = 0; o < n; ++o) {
    for (std::size_t ch = 0; ch < c; ++ch) eye.data[(o * n + o) * c + ch] = 1.0;
  }
  Tape<double> tape;
  EXPECT_EQ(nn::spherical_gconv(tape.constant(f), tape.constant(eye)).value().data, f.data);
  const auto m = nn::spherical_gconv(tape.constant(f), tape.constant(avg)).value();
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      double want = 0;
      for (std::size_t o = 0; o < n; ++o) want += f.data[(p * n + o) * c + ch];
      want /= n;
      for (std::size_t o = 0; o < n; ++o) EXPECT_NEAR(m.data[(p * n + o) * c + ch], want, 1e-14);
    }
  }
  EXPECT_THROW(nn::spherical_gconv(tape.constant(f), tape.constant(Array<double>({4, 4, c}))), ad::ShapeError);
}

TEST(SphericalGConv, PermutationConsistency) {
  std::mt19937_64 rng(8);
  const std::size_t n = 6, c = 2;
  const auto f = randn(rng, {3, n, c});
  const auto k = randn(rng, {n, n, c});
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Array<double> fp({3, n, c}), kp({n, n, c});
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t o = 0; o < n; ++o) {
      for (std::size_t ch = 0; ch < c; ++ch) fp.data[(p * n + o) * c + ch] = f.data[(p * n + perm[o]) * c + ch];
    }
  }
  for (std::size_t o = 0; o < n; ++o) {
    for (std::size_t q = 0; q < n; ++q) {
      for (std::size_t ch = 0; ch < c; ++ch) kp.data[(o * n + q) * c + ch] = k.data[(perm[o] * n + perm[q]) * c + ch];
    }
  }
  Tape<double> tape;
  const auto out = nn::spherical_gconv(tape.constant(f), tape.constant(k)).value();
  const auto outp = nn::spherical_gconv(tape.constant(fp), tape.constant(kp)).value();
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::size_t o = 0; o < n; ++o) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        EXPECT_NEAR(outp.data[(p * n + o) * c + ch], out.data[(p * n + perm[o]) * c + ch], 1e-13);
      }
    }
  }
}

TEST(PointCloudGConv, EmptyIdentityAndMissingOrientations) {
  auto g = two_nodes();
  std::mt19937_64 rng(9);
  const auto f = randn(rng, {2, 3});
  Tape<double> tape;
  EXPECT_ANY_THROW(nn::pointcloud_gconv(g, tape.constant(f), tape.constant(Array<double>({1, 3, 3}))));
  Matrix o(2, 3);
  o << 0, 0, 1, 1, 0, 0;
  g.orientations = o;
  Array<double> eye({1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) eye.data[c * 3 + c] = 1.0;
  const auto out = nn::pointcloud_gconv(g, tape.constant(f), tape.constant(eye)).value();
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(out.data[c], f.data[3 + c]);
    EXPECT_EQ(out.data[3 + c], 0.0);
  }
  g.receivers.clear();
  g.senders.clear();
  g.edge_extra = Matrix(0, 0);
  const auto none = nn::pointcloud_gconv(g, tape.constant(f), tape.constant(Array<double>({0, 3, 3}))).value();
  for (double v : none.data) EXPECT_EQ(v, 0.0);
}

TEST(PointCloudGConv, SeparableFactorizationMatchesBundlePipeline) {
  EXPECT_LT(audit::separable_equivalence(10, 3), 1e-8);
}

TEST(Lifting, ScalarToSphereIsConstant) {
  Tape<double> tape;
  const auto out = nn::scalar_to_sphere(tape.constant(Array<double>({2, 1}, 2.0)), 7).value();
  EXPECT_EQ(out.shape, (Shape{2, 7, 1}));
  for (double v : out.data) EXPECT_EQ(v, 2.0);
}

TEST(Lifting, VecToSphereOfUnitZ) {
  const auto grid = grids::platonic_grid(12);
  Tape<double> tape;
  const auto out = nn::vec_to_sphere(tape.constant(Array<double>({1, 3, 1}, {0, 0, 1})), tape.constant(grid_array(grid)))
                       .value();
  for (std::size_t o = 0; o < 12; ++o) EXPECT_NEAR(out.data[o], grid.points()(static_cast<Eigen::Index>(o), 2), 1e-15);
}

TEST(Lifting, VecToSphereInvariantUnderJointRotation) {
  std::mt19937_64 rng(10);
  const auto grid = grids::repulsion_grid(3, 12, 0);
  const auto r = geometry::random_rotation(3, rng);
  const auto v = randn(rng, {4, 3, 2});
  Array<double> rv(v.shape);
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t c = 0; c < 2; ++c) {
      for (int i = 0; i < 3; ++i) {
        double s = 0;
        for (int j = 0; j < 3; ++j) s += r(i, j) * v.data[(p * 3 + static_cast<std::size_t>(j)) * 2 + c];
        rv.data[(p * 3 + static_cast<std::size_t>(i)) * 2 + c] = s;
      }
    }
  }
  Tape<double> tape;
  const auto a = nn::vec_to_sphere(tape.constant(v), tape.constant(grid_array(grid))).value();
  const auto b = nn::vec_to_sphere(tape.constant(rv), tape.constant(grid_array(grids::rotate_grid(grid, r)))).value();
  EXPECT_LE(max_abs(a, b), 1e-13);
}

TEST(Readout, SphereToScalarOfConstant) {
  Tape<double> tape;
  const auto out = nn::sphere_to_scalar(tape.constant(Array<double>({3, 12, 2}, 0.25))).value();
  for (double v : out.data) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(Readout, IcosahedralRoundTripScalesByFour) {
  EXPECT_LT(audit::readout_identity(12, 3, 1), 1e-6);
  std::mt19937_64 rng(11);
  const auto grid = grid_array(grids::platonic_grid(12));
  const auto v = randn(rng, {2, 3, 1});
  Tape<double> tape;
  const auto back = nn::sphere_to_vec(nn::vec_to_sphere(tape.constant(v), tape.constant(grid)), tape.constant(grid)).value();
  for (std::size_t k = 0; k < v.size(); ++k) EXPECT_NEAR(back.data[k], 4.0 * v.data[k], 1e-6);
}

TEST(Readout, SphereToVecRotatesWithGrid) {
  std::mt19937_64 rng(12);
  const auto grid = grids::repulsion_grid(3, 12, 0);
  const auto r = geometry::random_rotation(3, rng);
  const auto f = randn(rng, {2, 12, 1});
  Tape<double> tape;
  const auto a = nn::sphere_to_vec(tape.constant(f), tape.constant(grid_array(grid))).value();
  const auto b = nn::sphere_to_vec(tape.constant(f), tape.constant(grid_array(grids::rotate_grid(grid, r)))).value();
  for (std::size_t p = 0; p < 2; ++p) {
    for (int i = 0; i < 3; ++i) {
      double want = 0;
      for (int j = 0; j < 3; ++j) want += r(i, j) * a.data[p * 3 + static_cast<std::size_t>(j)];
      EXPECT_NEAR(b.data[p * 3 + static_cast<std::size_t>(i)], want, 1e-13);
    }
  }
}

TEST(LayerGradients, AllLayersPassFiniteDifferences) {
  for (const auto& r : audit::gradient_suite(20, 5)) EXPECT_LT(r.max_rel_error, 1e-5) << r.name;
}

TEST(Graph, FullAndRadiusConnectivity) {
  Matrix pos(3, 3);
  pos << 0, 0, 0, 1, 0, 0, 5, 0, 0;
  auto g = graph::make_graph(pos);
  graph::connect_fully(g);
  EXPECT_EQ(g.num_edges(), 6u);
  auto r = graph::make_graph(pos);
  graph::connect_radius(r, 1.5);
  EXPECT_EQ(r.num_edges(), 2u);
  for (std::size_t e = 0; e < r.num_edges(); ++e) EXPECT_NE(r.receivers[e], r.senders[e]);
  g.receivers.push_back(9);
  g.senders.push_back(0);
  EXPECT_THROW(g.validate(), std::invalid_argument);
}
