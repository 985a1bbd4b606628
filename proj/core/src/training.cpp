#include "ponita/training.hpp"

#include "ponita/nbody.hpp"
#include "ponita/ops.hpp"
#include "ponita/optim.hpp"
#include "ponita/toy_energy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ponita::train {

namespace {

using ad::Array;
using ad::Shape;
using ad::Tape;
using ad::Var;
using geometry::Matrix;

struct Sample {
  graph::GraphBatch graph;
  Matrix target;  // final positions (nbody) or forces (toy-energy)
  double energy = 0.0;
};

struct Batch {
  graph::GraphBatch graph;
  Matrix target;
  Eigen::VectorXd energy;
};

Sample make_sample(Task task, const io::PointCloud& pc) {
  Sample s;
  if (task == Task::NBody) {
    s.graph = nbody::featurize(pc);
    s.target = nbody::target_positions(pc);
  } else {
    s.graph = toy::featurize(pc);
    s.target = toy::target_forces(pc);
    s.energy = toy::target_energy(pc);
  }
  return s;
}

Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
  std::vector<const graph::GraphBatch*> parts;
  Eigen::Index rows = 0;
  for (auto i : idx) {
    parts.push_back(&samples[i].graph);
    rows += samples[i].target.rows();
  }
  Batch b;
  b.graph = graph::concat(parts);
  b.target.resize(rows, samples[idx.front()].target.cols());
  b.energy.resize(static_cast<Eigen::Index>(idx.size()));
  Eigen::Index r = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto& s = samples[idx[k]];
    b.target.middleRows(r, s.target.rows()) = s.target;
    r += s.target.rows();
    b.energy(static_cast<Eigen::Index>(k)) = s.energy;
  }
  return b;
}

template <class T>
Array<T> to_array(const Matrix& m) {
  Array<T> a(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) a.data[static_cast<std::size_t>(i * m.cols() + k)] = static_cast<T>(m(i, k));
  }
  return a;
}

template <class T>
Matrix to_matrix(const Array<T>& a, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = static_cast<double>(a.data[static_cast<std::size_t>(i * cols + k)]);
  }
  return m;
}

template <class T>
nn::Output<T> vector_forward(const nn::Ponita<T>& m, Tape<T>& tape, const graph::GraphBatch& g) {
  return m.forward(tape, g);
}

template <class T>
nn::Output<T> vector_forward(const nn::Pnita<T>& m, Tape<T>& tape, const graph::GraphBatch& g) {
  return m.relative_vector_readout(tape, g);
}

template <class Model>
void rotate_grids(const Model&, graph::GraphBatch&, std::mt19937_64&) {}

template <class T>
void rotate_grids(const nn::Ponita<T>& m, graph::GraphBatch& g, std::mt19937_64& rng) {
  g.grids.clear();
  for (std::size_t k = 0; k < g.num_graphs; ++k) {
    g.grids.push_back(grids::rotate_grid(m.grid(), geometry::random_rotation(g.dim, rng)));
  }
}

struct Prediction {
  Matrix vectors;  // predicted positions or forces
  Eigen::VectorXd energy;
};

// Loss of one batch; with `grads` the parameter gradients of that loss are
// accumulated into the model's parameters.
template <class Model>
double batch_loss(Model& model, Task task, const Batch& b, const Options& opt, bool grads,
                  Prediction* pred = nullptr) {
  using T = typename std::remove_cvref_t<decltype(model.params())>::value_type;
  const graph::GraphBatch& g = b.graph;
  const auto p = static_cast<Eigen::Index>(g.num_nodes());
  const auto n = static_cast<Eigen::Index>(g.dim);

  if (task == Task::NBody) {
    Tape<T> tape;
    nn::Output<T> out = vector_forward(model, tape, g);
    Var<T> predicted = ad::add(tape.constant(to_array<T>(g.positions)), out.vector);
    Var<T> loss = ad::mean_all(ad::square(ad::sub(predicted, tape.constant(to_array<T>(b.target)))));
    if (pred) pred->vectors = to_matrix(predicted.value(), p, n);
    const double value = static_cast<double>(loss.value().item());
    if (grads && std::isfinite(value)) tape.backward(loss);
    return value;
  }

  // Energy and forces at the batch positions.
  Eigen::VectorXd energy;
  Matrix forces;
  {
    Tape<T> tape;
    Var<T> pos = tape.leaf(to_array<T>(g.positions));
    nn::Output<T> out = model.forward(tape, g, pos);
    tape.backward(ad::sum_all(out.scalar));
    energy.resize(static_cast<Eigen::Index>(g.num_graphs));
    for (std::size_t k = 0; k < g.num_graphs; ++k) energy(static_cast<Eigen::Index>(k)) = out.scalar.value().data[k];
    forces = -to_matrix(tape.grad(pos), p, n);
  }
  if (grads) model.params().zero_grad();
  if (pred) {
    pred->energy = energy;
    pred->vectors = forces;
  }
  const double ng = static_cast<double>(g.num_graphs);
  const double nf = static_cast<double>(p * n);
  const Eigen::VectorXd de = energy - b.energy;
  const Matrix df = forces - b.target;
  const double value = opt.lambda_energy * de.squaredNorm() / ng + opt.lambda_force * df.squaredNorm() / nf;
  if (!grads || !std::isfinite(value)) return value;

  // Energy term: sum_g w_g E_g with w_g = dL/dE_g.
  {
    Tape<T> tape;
    nn::Output<T> out = model.forward(tape, g);
    Array<T> w(Shape{g.num_graphs});
    for (std::size_t k = 0; k < g.num_graphs; ++k) {
      w.data[k] = static_cast<T>(2.0 * opt.lambda_energy * de(static_cast<Eigen::Index>(k)) / ng);
    }
    tape.backward(ad::sum_all(ad::mul(out.scalar, tape.constant(std::move(w)))));
  }
  // Force term along u = dL/dF.
  const Matrix u = (2.0 * opt.lambda_force / nf) * df;
  const double norm = u.norm();
  if (norm > 0.0) {
    const double h = opt.hvp_step > 0.0 ? opt.hvp_step : (std::is_same_v<T, float> ? 1e-2 : 1e-4);
    const Matrix dir = u / norm;
    for (int sign : {1, -1}) {
      Tape<T> tape;
      const Matrix shifted = g.positions + (sign * h) * dir;
      nn::Output<T> out = model.forward(tape, g, tape.constant(to_array<T>(shifted)));
      tape.backward(ad::scale(ad::sum_all(out.scalar), static_cast<T>(-sign * norm / (2.0 * h))));
    }
  }
  return value;
}

template <class Model>
double dataset_loss(Model& model, Task task, const std::vector<Sample>& samples, std::size_t batch,
                    const Options& opt) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + batch); ++i) idx.push_back(i);
    total += batch_loss(model, task, make_batch(samples, idx), opt, false) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(samples.size());
}

std::map<std::string, double> checkpoint_meta(const Options& opt, const nn::ModelConfig& cfg) {
  auto meta = cfg.to_meta();
  meta["task"] = static_cast<double>(opt.task);
  meta["arch"] = static_cast<double>(opt.arch);
  meta["lambda_energy"] = opt.lambda_energy;
  meta["lambda_force"] = opt.lambda_force;
  return meta;
}

template <class Model>
Result run_training(const io::Dataset& data, const Options& opt, const nn::ModelConfig& cfg) {
  Model model(cfg);
  std::vector<Sample> train_set, val_set;
  const std::size_t total = data.samples.size();
  std::size_t n_val = static_cast<std::size_t>(std::round(opt.val_fraction * static_cast<double>(total)));
  if (total >= 2) n_val = std::clamp<std::size_t>(n_val, opt.val_fraction > 0.0 ? 1 : 0, total - 1);
  else n_val = 0;
  for (std::size_t i = 0; i < total; ++i) {
    (i < total - n_val ? train_set : val_set).push_back(make_sample(opt.task, data.samples[i]));
  }
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");

  Result res;
  res.parameters = model.params().scalar_count();
  res.train_samples = train_set.size();
  res.val_samples = val_set.size();

  optim::Adam<typename std::remove_cvref_t<decltype(model.params())>::value_type> adam({.lr = opt.lr});
  std::mt19937_64 rng(opt.seed ^ 0x7472616e73ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch = std::max<std::size_t>(1, opt.batch);
  const std::size_t warmup = std::min(opt.warmup, opt.epochs / 4);

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const double lr = optim::cosine_lr(epoch, opt.epochs, warmup, opt.lr);
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      idx.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                 order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch)));
      Batch b = make_batch(train_set, idx);
      if (opt.rotate_grids) rotate_grids(model, b.graph, rng);
      model.params().zero_grad();
      const double loss = batch_loss(model, opt.task, b, opt, true);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << start / batch << " (lr " << lr << ")";
        throw std::runtime_error(msg.str());
      }
      adam.step(model.params(), lr);
      sum += loss * static_cast<double>(idx.size());
    }
    EpochLog row{epoch, lr, sum / static_cast<double>(order.size()), 0.0};
    row.val_loss = dataset_loss(model, opt.task, val_set, batch, opt);
    if (!std::isfinite(row.val_loss)) throw std::runtime_error("non-finite validation loss at epoch " + std::to_string(epoch));
    res.log.push_back(row);
    if (opt.on_epoch) opt.on_epoch(row);
  }
  res.checkpoint = checkpoint::capture(model.params(), checkpoint_meta(opt, cfg));
  return res;
}

// Rebuilds the model recorded in a checkpoint and hands it to `fn`.
template <class T, class Fn>
auto with_checkpoint_model(const checkpoint::Checkpoint& ck, Fn&& fn) {
  const auto cfg = nn::ModelConfig::from_meta(ck.meta);
  if (static_cast<Arch>(checkpoint::meta_at(ck, "arch")) == Arch::Ponita) {
    nn::Ponita<T> m(cfg);
    checkpoint::restore(ck, m.params());
    return fn(m);
  }
  nn::Pnita<T> m(cfg);
  checkpoint::restore(ck, m.params());
  return fn(m);
}

Options options_from(const checkpoint::Checkpoint& ck) {
  Options opt;
  opt.task = static_cast<Task>(checkpoint::meta_at(ck, "task"));
  opt.arch = static_cast<Arch>(checkpoint::meta_at(ck, "arch"));
  opt.lambda_energy = checkpoint::meta_or(ck, "lambda_energy", 1.0);
  opt.lambda_force = checkpoint::meta_or(ck, "lambda_force", 500.0);
  return opt;
}

template <class T>
Metrics evaluate_impl(const checkpoint::Checkpoint& ck, const io::Dataset& data) {
  const Options opt = options_from(ck);
  return with_checkpoint_model<T>(ck, [&](auto& model) {
    Metrics m;
    m.samples = data.samples.size();
    std::size_t components = 0;
    for (const auto& pc : data.samples) {
      Batch b = make_batch({make_sample(opt.task, pc)}, {0});
      Prediction pred;
      m.loss += batch_loss(model, opt.task, b, opt, false, &pred);
      components += static_cast<std::size_t>(b.target.size());
      if (opt.task == Task::NBody) {
        m.position_mse += (pred.vectors - b.target).squaredNorm();
      } else {
        m.energy_mae += std::abs(pred.energy(0) - b.energy(0));
        m.force_mae += (pred.vectors - b.target).cwiseAbs().sum();
      }
    }
    if (m.samples > 0) {
      m.loss /= static_cast<double>(m.samples);
      m.energy_mae /= static_cast<double>(m.samples);
    }
    if (components > 0) {
      m.position_mse /= static_cast<double>(components);
      m.force_mae /= static_cast<double>(components);
    }
    return m;
  });
}

template <class T>
std::vector<io::PointCloud> infer_impl(const checkpoint::Checkpoint& ck, std::vector<io::PointCloud> samples) {
  const Options opt = options_from(ck);
  return with_checkpoint_model<T>(ck, [&](auto& model) {
    for (auto& pc : samples) {
      if (opt.task == Task::NBody) {
        Tape<T> tape;
        nn::Output<T> out = vector_forward(model, tape, nbody::featurize(pc));
        pc.targets["predicted_positions"] =
            io::Field::table(pc.positions + to_matrix(out.vector.value(), pc.positions.rows(), pc.positions.cols()));
      } else {
        const auto ef = nn::energy_and_forces(model, toy::featurize(pc));
        pc.targets["predicted_energy"] = io::Field::number(ef.energy(0));
        pc.targets["predicted_forces"] = io::Field::table(ef.forces);
      }
    }
    return samples;
  });
}

}  // namespace

std::string to_string(Task t) { return t == Task::NBody ? "nbody" : "toy-energy"; }
std::string to_string(Arch a) { return a == Arch::Ponita ? "ponita" : "pnita"; }

Task parse_task(const std::string& s) {
  if (s == "nbody") return Task::NBody;
  if (s == "toy-energy") return Task::ToyEnergy;
  throw std::invalid_argument("unknown task '" + s + "'");
}

Arch parse_arch(const std::string& s) {
  if (s == "ponita") return Arch::Ponita;
  if (s == "pnita") return Arch::Pnita;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

nn::ModelConfig task_config(Task task, nn::ModelConfig base) {
  base.dim = 3;
  if (task == Task::NBody) {
    base.scalar_inputs = 2;
    base.vector_inputs = 2;
    base.edge_extra = 1;
    base.readout = nn::Readout::Vector;
  } else {
    base.scalar_inputs = 2;
    base.vector_inputs = 0;
    base.edge_extra = 0;
    base.readout = nn::Readout::Scalar;
  }
  return base;
}

Result train(const io::Dataset& data, const Options& options) {
  const nn::ModelConfig cfg = task_config(options.task, options.model);
  cfg.validate();
  if (options.epochs == 0) throw std::invalid_argument("train: epochs must be positive");
  if (options.arch == Arch::Ponita) {
    return options.f32 ? run_training<nn::Ponita<float>>(data, options, cfg)
                       : run_training<nn::Ponita<double>>(data, options, cfg);
  }
  return options.f32 ? run_training<nn::Pnita<float>>(data, options, cfg)
                     : run_training<nn::Pnita<double>>(data, options, cfg);
}

void write_metric_log(const std::vector<EpochLog>& log, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "epoch,lr,train_loss,val_loss\n" << std::setprecision(17);
  for (const auto& r : log) out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.val_loss << '\n';
}

std::vector<EpochLog> read_metric_log(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != "epoch,lr,train_loss,val_loss") {
    throw std::runtime_error(file.string() + ": unexpected metric log header");
  }
  std::vector<EpochLog> log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    EpochLog r;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(row >> r.epoch >> c1 >> r.lr >> c2 >> r.train_loss >> c3 >> r.val_loss) || c1 != ',' || c2 != ',' ||
        c3 != ',') {
      throw std::runtime_error(file.string() + ": malformed row '" + line + "'");
    }
    log.push_back(r);
  }
  return log;
}

Metrics evaluate(const checkpoint::Checkpoint& ck, const io::Dataset& data, bool f32) {
  return f32 ? evaluate_impl<float>(ck, data) : evaluate_impl<double>(ck, data);
}

std::vector<io::PointCloud> infer(const checkpoint::Checkpoint& ck, std::vector<io::PointCloud> samples, bool f32) {
  return f32 ? infer_impl<float>(ck, std::move(samples)) : infer_impl<double>(ck, std::move(samples));
}

namespace {

template <class Model>
double objective_impl(Model& model, const std::vector<io::PointCloud>& samples, const Options& opt, bool with_grad) {
  if (samples.empty()) throw std::invalid_argument("batch_objective: no samples");
  std::vector<Sample> set;
  for (const auto& pc : samples) set.push_back(make_sample(opt.task, pc));
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  model.params().zero_grad();
  const double loss = batch_loss(model, opt.task, make_batch(set, idx), opt, with_grad);
  if (!with_grad) model.params().zero_grad();
  return loss;
}

}  // namespace

double batch_objective(nn::Ponita<double>& model, const std::vector<io::PointCloud>& samples, const Options& opt,
                       bool with_grad) {
  return objective_impl(model, samples, opt, with_grad);
}

double batch_objective(nn::Pnita<double>& model, const std::vector<io::PointCloud>& samples, const Options& opt,
                       bool with_grad) {
  return objective_impl(model, samples, opt, with_grad);
}

std::size_t parameter_count(Arch arch, const nn::ModelConfig& cfg) {
  nn::ModelConfig c = cfg;
  c.cache_grid = false;
  if (arch == Arch::Ponita) {
    // The parameter count does not depend on the grid, so skip the repulsion solve.
    c.grid_size = 4;
    auto grid = c.dim == 3 ? grids::platonic_grid(4) : grids::circle_grid(4);
    return nn::Ponita<float>(c, std::move(grid)).params().scalar_count();
  }
  return nn::Pnita<float>(c).params().scalar_count();
}

std::size_t matched_pnita_channels(const nn::ModelConfig& cfg, std::size_t target) {
  std::size_t best = 1, best_gap = static_cast<std::size_t>(-1);
  for (std::size_t c = 1; c <= 1024; ++c) {
    nn::ModelConfig k = cfg;
    k.channels = c;
    const std::size_t count = parameter_count(Arch::Pnita, k);
    const std::size_t gap = count > target ? count - target : target - count;
    if (gap < best_gap) {
      best = c;
      best_gap = gap;
    }
    if (count > target) break;
  }
  return best;
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace ponita::train
