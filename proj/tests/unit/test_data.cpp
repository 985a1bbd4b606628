#include "ponita/checkpoint.hpp"
#include "ponita/nbody.hpp"
#include "ponita/point_cloud_io.hpp"
#include "ponita/toy_energy.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace ponita;
using geometry::Matrix;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ponita_test_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

io::PointCloud random_cloud(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  auto rnd = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng) * 1e3 / 7.0;
    return m;
  };
  io::PointCloud pc;
  pc.positions = rnd(4, 3);
  pc.scalars["charge"] = io::Field::flat(rnd(4, 1).col(0));
  pc.scalars["onehot"] = io::Field::table(rnd(4, 2));
  pc.vectors["velocity"] = rnd(4, 3);
  pc.edges = std::vector<std::array<std::uint32_t, 2>>{{0, 1}, {3, 2}};
  pc.targets["energy"] = io::Field::number(nd(rng) / 3.0);
  pc.targets["forces"] = io::Field::table(rnd(4, 3));
  return pc;
}

nbody::State pair_state(double ci, double cj) {
  nbody::State s;
  s.positions = Matrix::Zero(2, 3);
  s.positions(1, 0) = 1.0;
  s.velocities = Matrix::Zero(2, 3);
  s.charges = Eigen::Vector2d(ci, cj);
  return s;
}

double separation(const nbody::State& s) { return (s.positions.row(0) - s.positions.row(1)).norm(); }

}  // namespace

TEST(PointCloudIo, JsonRoundTripIsExact) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto pc = random_cloud(seed);
    EXPECT_TRUE(io::from_json(io::to_json(pc)) == pc);
    const auto file = temp_file("cloud.json");
    io::write_point_cloud(pc, file);
    EXPECT_TRUE(io::read_point_cloud(file) == pc);
  }
}

TEST(PointCloudIo, DatasetRoundTrip) {
  io::Dataset ds{"custom", {{"seed", 4.0}}, {random_cloud(4), random_cloud(5)}};
  const auto file = temp_file("dataset.json");
  io::write_dataset(ds, file);
  const auto back = io::read_dataset(file);
  EXPECT_EQ(back.kind, "custom");
  EXPECT_EQ(back.meta, ds.meta);
  ASSERT_EQ(back.samples.size(), 2u);
  EXPECT_TRUE(back.samples[1] == ds.samples[1]);
}

TEST(PointCloudIo, RejectsInconsistentPointCounts) {
  auto pc = random_cloud(6);
  pc.vectors["velocity"] = Matrix::Zero(3, 3);
  EXPECT_ANY_THROW(pc.validate());
  EXPECT_ANY_THROW(io::from_json(R"({"positions": [[0, 0, 0]], "vectors": {"v": [[1, 2]]}})"));
  EXPECT_ANY_THROW(io::from_json("not json"));
}

TEST(Checkpoint, RoundTripAndRestore) {
  ad::ParameterStore<double> a;
  a.add("w", ad::Array<double>({2, 3}, {1, 2, 3, 4, 5, 6.25}));
  a.add("b", ad::Array<double>({3}, {-1, 0.5, 1e-300}));
  const auto file = temp_file("params.ckpt");
  checkpoint::write(checkpoint::capture(a, {{"layers", 3.0}}), file);
  const auto ck = checkpoint::read(file);
  EXPECT_EQ(checkpoint::meta_at(ck, "layers"), 3.0);
  EXPECT_EQ(checkpoint::meta_or(ck, "missing", 7.0), 7.0);
  EXPECT_ANY_THROW(checkpoint::meta_at(ck, "missing"));

  ad::ParameterStore<float> b;
  b.add("w", ad::Array<float>({2, 3}));
  b.add("b", ad::Array<float>({3}));
  checkpoint::restore(ck, b);
  EXPECT_EQ(b.at("w").value.data, (ad::Buffer<float>{1, 2, 3, 4, 5, 6.25f}));

  ad::ParameterStore<double> wrong;
  wrong.add("w", ad::Array<double>({3, 2}));
  EXPECT_ANY_THROW(checkpoint::restore(ck, wrong));
}

TEST(Checkpoint, LayoutStartsWithMagicAndVersion) {
  ad::ParameterStore<double> a;
  a.add("x", ad::Array<double>({1}, {2.0}));
  const auto file = temp_file("layout.ckpt");
  checkpoint::write(checkpoint::capture(a), file);
  std::ifstream in(file, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "PCKP");
  // magic, version, count, then u16 name length "x", u8 rank, one u64 extent and one f64.
  EXPECT_EQ(std::filesystem::file_size(file), 4u + 4 + 4 + 2 + 1 + 1 + 8 + 8);
  std::ofstream(file, std::ios::binary) << "NOPE";
  EXPECT_THROW(checkpoint::read(file), std::runtime_error);
}

TEST(NBody, OppositeChargesAttractLikeChargesRepel) {
  const nbody::Physics phys;
  const auto attract = nbody::integrate(pair_state(1, -1), phys, 200);
  EXPECT_LT(separation(attract), 1.0);
  const auto repel = nbody::integrate(pair_state(1, 1), phys, 200);
  EXPECT_GT(separation(repel), 1.0);
}

namespace {

double relative_drift(const nbody::State& s0, const nbody::Physics& phys) {
  const auto s1 = nbody::integrate(s0, phys, phys.steps);
  const double e0 = nbody::kinetic_energy(s0) + nbody::potential_energy(s0, phys);
  const double e1 = nbody::kinetic_energy(s1) + nbody::potential_energy(s1, phys);
  return std::abs(e1 - e0) / std::abs(e0);
}

}  // namespace

TEST(NBody, EnergyDriftAndMomentum) {
  // Close encounters (r well below the softening) and states with near-zero
  // total energy exceed the bound for a minority of draws.
  const nbody::Physics phys;
  std::mt19937_64 rng(3);
  std::size_t within = 0;
  const std::size_t trials = 200;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const auto s0 = nbody::random_state(rng);
    if (relative_drift(s0, phys) < 1e-4) ++within;
    const auto s1 = nbody::integrate(s0, phys, phys.steps);
    const double horizon = phys.dt * static_cast<double>(phys.steps);
    EXPECT_LT((nbody::momentum(s1) - nbody::momentum(s0)).cwiseAbs().maxCoeff(), 1e-9 * horizon) << trial;
  }
  EXPECT_GE(static_cast<double>(within) / trials, 0.9);
}

TEST(NBody, EnergyDriftIsSecondOrderInStep) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 5; ++trial) {
    const auto s0 = nbody::random_state(rng);
    nbody::Physics coarse, fine;
    coarse.dt = 2e-3;
    coarse.steps = 500;
    fine.dt = 1e-3;
    fine.steps = 1000;
    const double ratio = relative_drift(s0, coarse) / relative_drift(s0, fine);
    EXPECT_GT(ratio, 3.0) << trial;
    EXPECT_LT(ratio, 5.0) << trial;
  }
}

TEST(NBody, GenerationIsDeterministic) {
  nbody::Physics phys;
  phys.steps = 50;
  const auto a = nbody::generate(3, 9, phys), b = nbody::generate(3, 9, phys), c = nbody::generate(3, 10, phys);
  ASSERT_EQ(a.samples.size(), 3u);
  EXPECT_TRUE(a.samples[2] == b.samples[2]);
  EXPECT_FALSE(a.samples[2] == c.samples[2]);
  EXPECT_EQ(nbody::target_positions(a.samples[0]).rows(), 5);
}

TEST(NBody, FeaturizeProperties) {
  std::mt19937_64 rng(4);
  auto s = nbody::random_state(rng);
  s.velocities.setZero();
  const auto g = nbody::featurize(s);
  EXPECT_EQ(g.num_edges(), 20u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(g.scalars.data[i * 2 + 1], 0.0);
    for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(g.vectors.data[(i * 3 + a) * 2], 0.0);
  }
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    EXPECT_EQ(g.edge_extra(static_cast<Eigen::Index>(e), 0), s.charges(g.receivers[e]) * s.charges(g.senders[e]));
  }

  nbody::State one;
  one.positions = Matrix::Constant(1, 3, 0.7);
  one.velocities = Matrix::Zero(1, 3);
  one.charges = Eigen::VectorXd::Ones(1);
  const auto g1 = nbody::featurize(one);
  for (double v : g1.vectors.data) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(g1.num_edges(), 0u);
}

TEST(NBody, FeaturizeCommutesWithMotions) {
  std::mt19937_64 rng(5);
  const auto s = nbody::random_state(rng);
  const auto m = geometry::random_motion(3, rng);
  nbody::State moved = s;
  moved.positions = (s.positions * m.rotation.matrix().transpose()).rowwise() + m.translation.transpose();
  moved.velocities = s.velocities * m.rotation.matrix().transpose();
  const auto a = graph::transform(nbody::featurize(s), m, false);
  const auto b = nbody::featurize(moved);
  EXPECT_LE((a.positions - b.positions).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t k = 0; k < a.scalars.size(); ++k) EXPECT_NEAR(a.scalars.data[k], b.scalars.data[k], 1e-12);
  for (std::size_t k = 0; k < a.vectors.size(); ++k) EXPECT_NEAR(a.vectors.data[k], b.vectors.data[k], 1e-12);
}

TEST(ToyEnergy, ForcesAreNegativeEnergyGradient) {
  const auto ds = toy::generate(3, 2);
  for (const auto& pc : ds.samples) {
    const auto species = toy::species_of(pc);
    const Matrix f = toy::forces(pc.positions, species);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      for (Eigen::Index a = 0; a < 3; ++a) {
        Matrix up = pc.positions, down = pc.positions;
        up(i, a) += h;
        down(i, a) -= h;
        const double fd = -(toy::energy(up, species) - toy::energy(down, species)) / (2 * h);
        EXPECT_NEAR(f(i, a), fd, 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
    EXPECT_LT(f.colwise().sum().cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(toy::target_energy(pc), toy::energy(pc.positions, species), 1e-12);
  }
}

TEST(ToyEnergy, MorseMinimumAtEquilibrium) {
  Matrix p = Matrix::Zero(2, 3);
  p(1, 0) = 1.0;
  EXPECT_NEAR(toy::energy(p, {0, 0}), -1.0, 1e-15);
  EXPECT_NEAR(toy::energy(p, {0, 1}), -0.8, 1e-15);
  EXPECT_LT(toy::forces(p, {0, 0}).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ToyEnergy, ClustersRespectMinimumDistance) {
  const auto ds = toy::generate(20, 7);
  for (const auto& pc : ds.samples) {
    for (Eigen::Index i = 0; i < pc.positions.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < pc.positions.rows(); ++j) {
        EXPECT_GE((pc.positions.row(i) - pc.positions.row(j)).norm(), 0.7);
      }
    }
  }
  const auto g = toy::featurize(ds.samples[0]);
  EXPECT_EQ(g.num_scalars(), 2u);
  EXPECT_EQ(g.num_vectors(), 0u);
}
