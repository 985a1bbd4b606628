#include "ponita/audit.hpp"
#include "ponita/models.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace ponita;
using geometry::Matrix;

namespace {

nn::ModelConfig small(nn::Readout readout = nn::Readout::Scalar) {
  nn::ModelConfig cfg;
  cfg.layers = 2;
  cfg.channels = 8;
  cfg.basis_dim = 8;
  cfg.grid_size = 12;
  cfg.scalar_inputs = 2;
  cfg.vector_inputs = 1;
  cfg.edge_extra = 1;
  cfg.readout = readout;
  cfg.seed = 4;
  return cfg;
}

graph::GraphBatch sample_graph(const nn::ModelConfig& cfg, std::uint64_t seed, std::size_t nodes = 6) {
  std::mt19937_64 rng(seed);
  return audit::random_graph(rng, cfg.dim, nodes, cfg.scalar_inputs, cfg.vector_inputs, cfg.edge_extra);
}

Matrix as_matrix(const ad::Array<double>& a) {
  Matrix m(static_cast<Eigen::Index>(a.shape[0]), static_cast<Eigen::Index>(a.shape[1]));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = a.data[static_cast<std::size_t>(r * m.cols() + c)];
  }
  return m;
}

}  // namespace

TEST(Ponita, ZeroLayersRuns) {
  auto cfg = small(nn::Readout::Vector);
  cfg.layers = 0;
  const nn::Ponita<double> model(cfg);
  const auto g = sample_graph(cfg, 1);
  ad::Tape<double> tape;
  const auto out = model.forward(tape, g);
  EXPECT_FALSE(out.scalar.valid());
  EXPECT_EQ(out.vector.shape(), (ad::Shape{6, 3}));
  for (double v : out.vector.value().data) EXPECT_TRUE(std::isfinite(v));
}

TEST(Ponita, CoRotatedEquivarianceIsExact) {
  const auto eq = audit::corotated_equivariance(small(nn::Readout::Vector), 10, 2);
  EXPECT_LT(eq.scalar, 1e-9);
  EXPECT_LT(eq.vector, 1e-9);
}

TEST(Ponita, ZeroProjectionMakesBlocksIdentity) {
  // With every block's last linear at zero, the blocks pass their input
  // through, so the spatial kernels cannot influence the output.
  const auto cfg = small();
  nn::Ponita<double> model(cfg);
  for (auto& p : model.params()) {
    if (p.name.find(".project.") != std::string::npos) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  }
  const auto g = sample_graph(cfg, 3);
  ad::Tape<double> t1;
  const double before = model.forward(t1, g).scalar.value().item();
  for (auto& p : model.params()) {
    if (p.name.find(".spatial.") != std::string::npos && p.name.rfind("block", 0) == 0) {
      for (auto& v : p.value.data) v += 0.5;
    }
  }
  ad::Tape<double> t2;
  EXPECT_EQ(model.forward(t2, g).scalar.value().item(), before);
}

TEST(Ponita, PermutationEquivariance) {
  const auto cfg = small(nn::Readout::Vector);
  const nn::Ponita<double> model(cfg);
  const auto g = sample_graph(cfg, 5);
  std::vector<std::uint32_t> perm(g.num_nodes());
  std::iota(perm.begin(), perm.end(), 0u);
  std::mt19937_64 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto gp = graph::permute_nodes(g, perm);
  ad::Tape<double> t1, t2;
  const auto a = model.forward(t1, g);
  const auto b = model.forward(t2, gp);
  const Matrix va = as_matrix(a.vector.value()), vb = as_matrix(b.vector.value());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    EXPECT_LE((vb.row(static_cast<Eigen::Index>(k)) - va.row(perm[k])).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Ponita, ScalarReadoutIsPermutationInvariant) {
  const auto cfg = small();
  const nn::Ponita<double> model(cfg);
  const auto g = sample_graph(cfg, 5);
  const auto gp = graph::permute_nodes(g, {3, 0, 5, 1, 4, 2});
  ad::Tape<double> t1, t2;
  const double a = model.forward(t1, g).scalar.value().item();
  EXPECT_NEAR(model.forward(t2, gp).scalar.value().item(), a, 1e-10 * std::max(1.0, std::abs(a)));
}

TEST(Ponita, BatchedGraphsMatchSingleGraphs) {
  const auto cfg = small();
  const nn::Ponita<double> model(cfg);
  const auto g1 = sample_graph(cfg, 6, 5), g2 = sample_graph(cfg, 7, 4);
  const auto batch = graph::concat(std::vector<graph::GraphBatch>{g1, g2});
  ad::Tape<double> t, t1, t2;
  const auto both = model.forward(t, batch).scalar.value();
  ASSERT_EQ(both.size(), 2u);
  EXPECT_NEAR(both.data[0], model.forward(t1, g1).scalar.value().item(), 1e-10);
  EXPECT_NEAR(both.data[1], model.forward(t2, g2).scalar.value().item(), 1e-10);
}

TEST(Ponita, RejectsInconsistentGraph) {
  const auto cfg = small();
  const nn::Ponita<double> model(cfg);
  auto g = sample_graph(cfg, 8);
  g.scalars = ad::Array<double>({g.num_nodes(), 5});
  ad::Tape<double> tape;
  EXPECT_ANY_THROW(model.forward(tape, g));
}

TEST(Pnita, ExactlyInvariantWithoutGrid) { EXPECT_LT(audit::pnita_invariance(small(), 20, 3), 1e-10); }

TEST(Pnita, VectorReadoutRequestThrows) {
  const auto cfg = small(nn::Readout::Vector);
  const nn::Pnita<double> model(cfg);
  const auto g = sample_graph(cfg, 9);
  ad::Tape<double> tape;
  EXPECT_ANY_THROW(model.forward(tape, g));
  ad::Tape<double> t2;
  EXPECT_EQ(model.relative_vector_readout(t2, g).vector.shape(), (ad::Shape{6, 3}));
}

TEST(Pnita, RelativeVectorReadoutIsEquivariant) {
  const auto cfg = small(nn::Readout::Vector);
  const nn::Pnita<double> model(cfg);
  const auto g = sample_graph(cfg, 10);
  std::mt19937_64 rng(2);
  const auto motion = geometry::random_motion(3, rng);
  ad::Tape<double> t1, t2;
  const Matrix a = as_matrix(model.relative_vector_readout(t1, g).vector.value());
  const Matrix b = as_matrix(model.relative_vector_readout(t2, graph::transform(g, motion, false)).vector.value());
  EXPECT_LE((b - a * motion.rotation.matrix().transpose()).cwiseAbs().maxCoeff(), 1e-10 * a.cwiseAbs().maxCoeff());
}

TEST(EnergyForces, NetForceVanishesAndForcesRotate) {
  const auto cfg = small();
  const nn::Ponita<double> model(cfg);
  const auto g = sample_graph(cfg, 11);
  const auto ef = nn::energy_and_forces(model, g);
  EXPECT_LT(ef.forces.colwise().sum().cwiseAbs().maxCoeff(), 1e-7);

  std::mt19937_64 rng(3);
  const auto motion = geometry::random_motion(3, rng);
  nn::Ponita<double> rotated(cfg, grids::rotate_grid(model.grid(), motion.rotation));
  // Same weights: the parameters do not depend on the grid.
  auto src = model.params().begin();
  for (auto& p : rotated.params()) p.value = (src++)->value;
  const auto er = nn::energy_and_forces(rotated, graph::transform(g, motion, false));
  EXPECT_NEAR(er.energy[0], ef.energy[0], 1e-9 * std::max(1.0, std::abs(ef.energy[0])));
  const Matrix want = ef.forces * motion.rotation.matrix().transpose();
  EXPECT_LE((er.forces - want).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, ef.forces.cwiseAbs().maxCoeff()));
}

TEST(EnergyForces, MatchFiniteDifferencesOfEnergy) {
  for (const auto& f : audit::force_suite(20, 4)) {
    EXPECT_LT(f.max_rel_error, 1e-5) << f.name;
    EXPECT_LT(f.net_force, 1e-7) << f.name;
  }
}

TEST(ModelConfig, MetaRoundTrip) {
  auto cfg = small(nn::Readout::Vector);
  cfg.length_scale = 2.5;
  cfg.aggregation = nn::Aggregation::Mean;
  const auto back = nn::ModelConfig::from_meta(cfg.to_meta());
  EXPECT_EQ(back.to_meta(), cfg.to_meta());
  cfg.channels = 0;
  EXPECT_ANY_THROW(cfg.validate());
}

TEST(Ponita, SameSeedSameParameters) {
  const nn::Ponita<double> a(small()), b(small());
  auto ib = b.params().begin();
  for (const auto& p : a.params()) EXPECT_EQ(p.value.data, (ib++)->value.data) << p.name;
}
