// ponita: grids, audits, synthetic data and training from the command line.

#include "ponita/audit.hpp"
#include "ponita/checkpoint.hpp"
#include "ponita/nbody.hpp"
#include "ponita/point_cloud_io.hpp"
#include "ponita/sphere_grid.hpp"
#include "ponita/toy_energy.hpp"
#include "ponita/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace fs = std::filesystem;
using namespace ponita;

namespace {

struct ModelFlags {
  std::size_t layers = 5;
  std::size_t channels = 64;
  std::size_t n = 12;
  std::size_t basis = 64;
  double layer_scale = 1.0;
};

struct TrainFlags {
  std::string data;
  std::string checkpoint = "ponita.ckpt";
  std::string log;
  std::string arch = "ponita";
  std::size_t epochs = 500;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::size_t warmup = 10;
  double val_fraction = 0.2;
  bool match_params = false;
  bool f32 = false;
  bool quiet = false;
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
  cmd->add_option("--layers", m.layers, "Number of conv blocks")->capture_default_str();
  cmd->add_option("--channels", m.channels, "Hidden channels")->capture_default_str();
  cmd->add_option("--n", m.n, "Orientation grid size")->capture_default_str();
  cmd->add_option("--basis", m.basis, "Kernel basis width")->capture_default_str();
  cmd->add_option("--layer-scale", m.layer_scale, "Initial residual scale")->capture_default_str();
}

void add_train_flags(CLI::App* cmd, TrainFlags& t) {
  cmd->add_option("--data", t.data, "Dataset JSON")->required();
  cmd->add_option("--checkpoint", t.checkpoint, "Checkpoint to write")->capture_default_str();
  cmd->add_option("--log", t.log, "Metric CSV (default: <checkpoint>.csv)");
  cmd->add_option("--arch", t.arch, "ponita or pnita")->check(CLI::IsMember({"ponita", "pnita"}))->capture_default_str();
  cmd->add_option("--epochs", t.epochs)->capture_default_str();
  cmd->add_option("--batch", t.batch)->capture_default_str();
  cmd->add_option("--lr", t.lr)->capture_default_str();
  cmd->add_option("--warmup", t.warmup, "Warmup epochs")->capture_default_str();
  cmd->add_option("--val-fraction", t.val_fraction)->capture_default_str();
  cmd->add_flag("--match-params", t.match_params,
                "pnita only: pick channels so the parameter count matches ponita with the same flags");
  cmd->add_flag("--f32", t.f32, "Single precision");
  cmd->add_flag("--quiet", t.quiet, "No per-epoch output");
}

int run_train(train::Task task, const ModelFlags& mf, const TrainFlags& tf, std::uint64_t seed) {
  train::tune_allocator();
  const io::Dataset data = io::read_dataset(tf.data);
  train::Options opt;
  opt.task = task;
  opt.arch = train::parse_arch(tf.arch);
  opt.model.layers = mf.layers;
  opt.model.channels = mf.channels;
  opt.model.grid_size = mf.n;
  opt.model.basis_dim = mf.basis;
  opt.model.layer_scale_init = mf.layer_scale;
  opt.model.seed = seed;
  opt.epochs = tf.epochs;
  opt.batch = tf.batch;
  opt.lr = tf.lr;
  opt.warmup = tf.warmup;
  opt.val_fraction = tf.val_fraction;
  opt.seed = seed;
  opt.f32 = tf.f32;
  if (tf.match_params && opt.arch == train::Arch::Pnita) {
    const auto cfg = train::task_config(task, opt.model);
    const std::size_t target = train::parameter_count(train::Arch::Ponita, cfg);
    opt.model.channels = train::matched_pnita_channels(cfg, target);
    std::cerr << "pnita channels " << opt.model.channels << " for a budget of " << target << " parameters\n";
  }
  const auto start = std::chrono::steady_clock::now();
  if (!tf.quiet) {
    opt.on_epoch = [&](const train::EpochLog& r) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::cerr << "epoch " << r.epoch << "  lr " << std::setprecision(3) << r.lr << "  train " << r.train_loss
                << "  val " << r.val_loss << "  (" << std::fixed << std::setprecision(1) << secs << " s)\n"
                << std::defaultfloat;
    };
  }
  const auto res = train::train(data, opt);
  checkpoint::write(res.checkpoint, tf.checkpoint);
  const std::string log = tf.log.empty() ? tf.checkpoint + ".csv" : tf.log;
  train::write_metric_log(res.log, log);
  std::cout << "parameters " << res.parameters << "\n"
            << "train samples " << res.train_samples << ", validation samples " << res.val_samples << "\n"
            << "final train loss " << res.log.back().train_loss << "\n"
            << "final validation loss " << res.log.back().val_loss << "\n"
            << "checkpoint " << tf.checkpoint << "\nmetric log " << log << "\n";
  return 0;
}

int run_eval(const std::string& data_file, const std::string& ck_file, bool f32) {
  const auto ck = checkpoint::read(ck_file);
  const auto m = train::evaluate(ck, io::read_dataset(data_file), f32);
  const auto task = static_cast<train::Task>(checkpoint::meta_at(ck, "task"));
  std::cout << "samples " << m.samples << "\nloss " << m.loss << "\n";
  if (task == train::Task::NBody) {
    std::cout << "position mse " << m.position_mse << "\n";
  } else {
    std::cout << "energy mae " << m.energy_mae << "\nforce mae " << m.force_mae << "\n";
  }
  return 0;
}

audit::Tolerances read_tolerances(const std::string& file) {
  audit::Tolerances tol;
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file);
  const auto j = nlohmann::json::parse(in);
  auto take = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = j.at(key).get<double>();
  };
  take("attribute_invariance", tol.attribute_invariance);
  take("attribute_roundtrip", tol.attribute_roundtrip);
  take("stabilizer", tol.stabilizer);
  take("corotated", tol.corotated);
  take("pnita_rotation", tol.pnita_rotation);
  take("separable", tol.separable);
  take("readout_identity", tol.readout_identity);
  take("gradient", tol.gradient);
  take("force_sum", tol.force_sum);
  return tol;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PONITA: equivariant message passing on position-orientation space"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Random seed")->capture_default_str();

  // grid
  int dim = 3;
  std::size_t grid_n = 12;
  std::string grid_out = ".";
  auto* grid = app.add_subcommand("grid", "Generate an orientation grid and write it as an SGRD file");
  grid->add_option("--dim", dim, "2 or 3")->check(CLI::IsMember({2, 3}))->capture_default_str();
  grid->add_option("--n", grid_n, "Number of orientations")->capture_default_str();
  grid->add_option("--out", grid_out, "Output directory")->capture_default_str();
  grid->add_option("--seed", seed);

  // audit
  std::size_t trials = 100, pairs = 1000, coords = 20;
  std::string tol_file;
  auto* aud = app.add_subcommand("audit", "Run the invariance/equivariance property battery");
  aud->add_option("--trials", trials, "Random transforms per network check")->capture_default_str();
  aud->add_option("--pairs", pairs, "Random point pairs per attribute check")->capture_default_str();
  aud->add_option("--tolerances", tol_file, "JSON file overriding tolerances");
  aud->add_option("--seed", seed);

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks of every layer and network");
  grad->add_option("--coords", coords, "Random coordinates per check")->capture_default_str();
  grad->add_option("--tolerances", tol_file, "JSON file overriding tolerances");
  grad->add_option("--seed", seed);

  // nbody / toy-energy
  std::size_t count = 2000, atoms = 6;
  std::string gen_out = "data.json";
  ModelFlags mf;
  TrainFlags tf;
  std::string eval_data, eval_ck;
  bool eval_f32 = false;

  auto add_task = [&](const std::string& name, const std::string& what) {
    auto* task = app.add_subcommand(name, what);
    task->require_subcommand(1);
    auto* gen = task->add_subcommand("gen", "Generate a dataset");
    gen->add_option("--count", count)->capture_default_str();
    gen->add_option("--out", gen_out)->capture_default_str();
    gen->add_option("--seed", seed);
    if (name == "toy-energy") gen->add_option("--atoms", atoms)->capture_default_str();
    auto* tr = task->add_subcommand("train", "Train a model");
    add_model_flags(tr, mf);
    add_train_flags(tr, tf);
    tr->add_option("--seed", seed);
    auto* ev = task->add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    ev->add_option("--data", eval_data)->required();
    ev->add_option("--checkpoint", eval_ck)->required();
    ev->add_flag("--f32", eval_f32);
    return task;
  };
  auto* nb = add_task("nbody", "Charged five-body trajectories");
  auto* toy = add_task("toy-energy", "Morse-cluster energies and forces");

  std::string infer_ck, infer_data, infer_out = "predictions.json";
  bool infer_f32 = false;
  auto* inf = app.add_subcommand("infer", "Run a checkpoint on a point-cloud file or dataset");
  inf->add_option("--checkpoint", infer_ck)->required();
  inf->add_option("--data", infer_data, "Point-cloud file or dataset")->required();
  inf->add_option("--out", infer_out)->capture_default_str();
  inf->add_flag("--f32", infer_f32);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*grid) {
      const auto g = grids::default_grid(dim, grid_n, seed, false);
      fs::create_directories(grid_out);
      const fs::path file = grids::grid_cache_file(grid_out, dim, grid_n, seed);
      grids::write_grid(g, file);
      std::cout << "wrote " << file.string() << " (" << g.size() << " points, min angle "
                << grids::min_pairwise_angle(g) << " rad)\n";
      return 0;
    }
    if (*aud) {
      audit::Options opt;
      opt.trials = trials;
      opt.attribute_pairs = pairs;
      opt.seed = seed;
      if (!tol_file.empty()) opt.tol = read_tolerances(tol_file);
      const auto rep = audit::run(opt);
      std::cout << rep.format();
      return rep.passed() ? 0 : 1;
    }
    if (*grad) {
      const auto rep = audit::gradient_report(coords, seed, tol_file.empty() ? audit::Tolerances{} : read_tolerances(tol_file));
      std::cout << rep.format();
      return rep.passed() ? 0 : 1;
    }
    for (auto* task_cmd : {nb, toy}) {
      if (!*task_cmd) continue;
      const auto task = task_cmd == nb ? train::Task::NBody : train::Task::ToyEnergy;
      if (*task_cmd->get_subcommand("gen")) {
        const auto ds = task == train::Task::NBody ? nbody::generate(count, seed) : toy::generate(count, seed, atoms);
        io::write_dataset(ds, gen_out);
        std::cout << "wrote " << ds.samples.size() << " samples to " << gen_out << "\n";
        return 0;
      }
      if (*task_cmd->get_subcommand("train")) return run_train(task, mf, tf, seed);
      return run_eval(eval_data, eval_ck, eval_f32);
    }
    if (*inf) {
      const auto ck = checkpoint::read(infer_ck);
      io::Dataset ds;
      bool single = false;
      try {
        ds = io::read_dataset(infer_data);
      } catch (const std::exception&) {
        ds.samples.push_back(io::read_point_cloud(infer_data));
        single = true;
      }
      ds.samples = train::infer(ck, std::move(ds.samples), infer_f32);
      if (single) {
        io::write_point_cloud(ds.samples.front(), infer_out);
      } else {
        io::write_dataset(ds, infer_out);
      }
      std::cout << "wrote predictions for " << ds.samples.size() << " samples to " << infer_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
