#include "ponita/toy_energy.hpp"

#include <cmath>
#include <stdexcept>

namespace ponita::toy {

double energy(const Matrix& positions, const std::vector<int>& species, const Potential& pot) {
  double u = 0.0;
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < positions.rows(); ++j) {
      const double r = (positions.row(i) - positions.row(j)).norm();
      const double m = 1.0 - std::exp(-pot.alpha * (r - pot.r0));
      u += pot.depth[species[i]][species[j]] * (m * m - 1.0);
    }
  }
  return u;
}

Matrix forces(const Matrix& positions, const std::vector<int>& species, const Potential& pot) {
  Matrix f = Matrix::Zero(positions.rows(), positions.cols());
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < positions.rows(); ++j) {
      const Eigen::RowVectorXd d = positions.row(i) - positions.row(j);
      const double r = d.norm();
      const double e = std::exp(-pot.alpha * (r - pot.r0));
      const double du_dr = pot.depth[species[i]][species[j]] * 2.0 * (1.0 - e) * pot.alpha * e;
      f.row(i) -= du_dr * d / r;
      f.row(j) += du_dr * d / r;
    }
  }
  return f;
}

io::Dataset generate(std::size_t count, std::uint64_t seed, std::size_t atoms, const Potential& pot) {
  if (atoms < 2) throw std::invalid_argument("toy-energy clusters need at least two atoms");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> bond(0.8, 1.4);
  std::bernoulli_distribution coin(0.5);
  io::Dataset ds;
  ds.kind = "toy-energy";
  ds.meta = {{"seed", static_cast<double>(seed)}, {"atoms", static_cast<double>(atoms)}};
  for (std::size_t s = 0; s < count; ++s) {
    Matrix p = Matrix::Zero(static_cast<Eigen::Index>(atoms), 3);
    for (std::size_t k = 1; k < atoms; ++k) {
      for (;;) {
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        const Eigen::Vector3d dir = geometry::random_unit_vector(3, rng);
        const Eigen::RowVector3d cand =
            p.row(static_cast<Eigen::Index>(pick(rng))) + bond(rng) * dir.transpose();
        bool ok = true;
        for (std::size_t q = 0; q < k && ok; ++q) ok = (p.row(static_cast<Eigen::Index>(q)) - cand).norm() >= 0.7;
        if (ok) {
          p.row(static_cast<Eigen::Index>(k)) = cand;
          break;
        }
      }
    }
    p.rowwise() -= p.colwise().mean();
    std::vector<int> species(atoms);
    Matrix onehot = Matrix::Zero(static_cast<Eigen::Index>(atoms), 2);
    for (std::size_t k = 0; k < atoms; ++k) {
      species[k] = coin(rng) ? 1 : 0;
      onehot(static_cast<Eigen::Index>(k), species[k]) = 1.0;
    }
    io::PointCloud pc;
    pc.positions = p;
    pc.scalars["species"] = io::Field::table(onehot);
    pc.targets["energy"] = io::Field::number(energy(p, species, pot));
    pc.targets["forces"] = io::Field::table(forces(p, species, pot));
    ds.samples.push_back(std::move(pc));
  }
  return ds;
}

std::vector<int> species_of(const io::PointCloud& pc) {
  auto it = pc.scalars.find("species");
  if (it == pc.scalars.end() || it->second.data.cols() != 2) {
    throw std::runtime_error("toy-energy sample needs a two-column 'species' one-hot scalar");
  }
  std::vector<int> s(pc.num_points());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = it->second.data(static_cast<Eigen::Index>(i), 1) > 0.5 ? 1 : 0;
  return s;
}

graph::GraphBatch featurize(const io::PointCloud& pc) {
  auto it = pc.scalars.find("species");
  if (it == pc.scalars.end()) throw std::runtime_error("toy-energy sample needs a 'species' scalar");
  const std::size_t p = pc.num_points(), k = static_cast<std::size_t>(it->second.data.cols());
  ad::Array<double> s(ad::Shape{p, k});
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      s.data[i * k + c] = it->second.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    }
  }
  graph::GraphBatch g = graph::make_graph(pc.positions, std::move(s));
  graph::connect_fully(g);
  return g;
}

double target_energy(const io::PointCloud& pc) {
  auto it = pc.targets.find("energy");
  if (it == pc.targets.end()) throw std::runtime_error("toy-energy sample has no 'energy' target");
  return it->second.data(0, 0);
}

Matrix target_forces(const io::PointCloud& pc) {
  auto it = pc.targets.find("forces");
  if (it == pc.targets.end()) throw std::runtime_error("toy-energy sample has no 'forces' target");
  return it->second.data;
}

}  // namespace ponita::toy
