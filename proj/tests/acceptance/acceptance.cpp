#include "ponita/audit.hpp"
#include "ponita/nbody.hpp"
#include "ponita/sphere_grid.hpp"
#include "ponita/training.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

using namespace ponita;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

nn::ModelConfig equivariance_config() {
  nn::ModelConfig cfg;
  cfg.scalar_inputs = 2;
  cfg.vector_inputs = 1;
  cfg.edge_extra = 1;
  cfg.layers = 3;
  cfg.channels = 32;
  cfg.basis_dim = 32;
  cfg.grid_size = 12;
  cfg.readout = nn::Readout::Vector;
  cfg.seed = 11;
  return cfg;
}

Outcome attributes_bijective() {
  const auto t0 = std::chrono::steady_clock::now();
  double inv = 0.0, trip = 0.0;
  std::uint64_t seed = 100;
  for (const auto& sp : audit::attribute_spaces()) {
    inv = std::max(inv, audit::attribute_invariance(sp, 1000, ++seed));
    trip = std::max(trip, audit::attribute_roundtrip(sp, 1000, ++seed));
  }
  const double t = seconds_since(t0);
  return {inv < 1e-10 && trip < 1e-10 && t < 5.0,
          "invariance " + sci(inv) + " round trip " + sci(trip) + " (tol 1e-10), " + std::to_string(t) + " s (< 5 s)"};
}

Outcome stabilizer_independence() {
  double worst = 0.0;
  std::uint64_t seed = 200;
  for (const auto& sp : audit::attribute_spaces()) {
    worst = std::max(worst, attributes::stabilizer_invariance_check(sp.tag, 1000, ++seed, sp.dim));
  }
  return {worst < 1e-12, "max deviation " + sci(worst) + " (tol 1e-12)"};
}

Outcome corotated_equivariance() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto eq = audit::corotated_equivariance(equivariance_config(), 100, 300);
  const double t = seconds_since(t0);
  return {eq.scalar < 1e-9 && eq.vector < 1e-9 && t < 60.0,
          "scalar " + sci(eq.scalar) + " vector " + sci(eq.vector) + " (tol 1e-9), " + std::to_string(t) +
              " s (< 60 s)"};
}

Outcome fixed_grid_trend() {
  std::ostringstream detail;
  bool decreasing = true;
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t n : {4u, 12u, 20u, 60u}) {
    auto cfg = equivariance_config();
    cfg.grid_size = n;
    const double dev = audit::fixed_grid_deviation(cfg, 100, 400);
    decreasing = decreasing && dev < previous;
    previous = dev;
    detail << "N=" << n << ":" << sci(dev) << " ";
  }
  detail << "(strictly decreasing)";
  return {decreasing, detail.str()};
}

Outcome separable_equivalence() {
  const double d = audit::separable_equivalence(10, 500);
  return {d < 1e-8, "max deviation " + sci(d) + " (tol 1e-8)"};
}

Outcome gradients() {
  double grad = 0.0, force = 0.0, net = 0.0;
  std::string worst;
  for (const auto& g : audit::gradient_suite(20, 600, 1e-6)) {
    if (g.max_rel_error >= grad) worst = g.name;
    grad = std::max(grad, g.max_rel_error);
  }
  for (const auto& f : audit::force_suite(20, 601, 1e-6)) {
    force = std::max(force, f.max_rel_error);
    net = std::max(net, f.net_force);
  }
  return {grad < 1e-5 && force < 1e-5 && net < 1e-7,
          "gradients " + sci(grad) + " (worst " + worst + ") forces " + sci(force) + " (tol 1e-5), net force " +
              sci(net) + " (tol 1e-7)"};
}

Outcome grid_quality() {
  const double deg = std::numbers::pi / 180.0;
  const std::pair<std::size_t, double> cases[] = {
      {4, std::acos(-1.0 / 3.0)}, {6, std::numbers::pi / 2}, {12, std::acos(1.0 / std::sqrt(5.0))}};
  std::ostringstream detail;
  bool ok = true;
  for (const auto& [n, want] : cases) {
    const double got = grids::min_pairwise_angle(grids::repulsion_grid(3, n, 0));
    const double err = std::abs(got - want) / deg;
    ok = ok && err < 0.5;
    detail << "N=" << n << ":" << sci(err) << " deg ";
  }
  const auto m = grids::second_moment(grids::platonic_grid(12));
  const double moment = (m - 4.0 * geometry::Matrix::Identity(3, 3)).cwiseAbs().maxCoeff();
  ok = ok && moment < 1e-6;
  detail << "(tol 0.5 deg), icosahedron moment " << sci(moment) << " (tol 1e-6)";
  return {ok, detail.str()};
}

Outcome desk_scale_learning(bool verbose) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto data = nbody::generate(2000, 3);
  train::Options opt;
  opt.task = train::Task::NBody;
  opt.model.layers = 5;
  opt.model.channels = 64;
  opt.model.grid_size = 12;
  opt.epochs = 500;
  opt.batch = 32;
  opt.seed = 3;
  opt.f32 = true;
  if (verbose) {
    opt.on_epoch = [](const train::EpochLog& e) {
      if (e.epoch % 25 == 0) std::fprintf(stderr, "  epoch %zu train %.5f val %.5f\n", e.epoch, e.train_loss, e.val_loss);
    };
  }
  train::tune_allocator();
  const auto ponita = train::train(data, opt);

  auto base = opt;
  base.arch = train::Arch::Pnita;
  const auto cfg = train::task_config(opt.task, opt.model);
  base.model.channels = train::matched_pnita_channels(cfg, ponita.parameters);
  const auto pnita = train::train(data, base);

  const double a = ponita.log.back().val_loss, b = pnita.log.back().val_loss;
  return {a < b, "val MSE ponita " + sci(a) + " (" + std::to_string(ponita.parameters) + " params) < pnita " + sci(b) +
                     " (" + std::to_string(pnita.parameters) + " params, C=" + std::to_string(base.model.channels) +
                     "), " + std::to_string(seconds_since(t0)) + " s"};
}

Outcome readout_identity() {
  const double d = audit::readout_identity(12, 100, 900);
  return {d < 1e-6, "max |sphere_to_vec(vec_to_sphere(v)) - 4v| " + sci(d) + " (tol 1e-6)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance criteria");
  std::set<int> only, skip;
  bool verbose = false;
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 9));
  app.add_option("--skip", skip, "Skip these criteria")->check(CLI::Range(1, 9));
  app.add_flag("--verbose", verbose, "Progress of the training run");
  CLI11_PARSE(app, argc, argv);

  const std::pair<const char*, std::function<Outcome()>> criteria[] = {
      {"attribute invariance and bijectivity", attributes_bijective},
      {"stabilizer independence", stabilizer_independence},
      {"co-rotated equivariance", corotated_equivariance},
      {"fixed-grid equivariance trend", fixed_grid_trend},
      {"separable equals full convolution", separable_equivalence},
      {"gradient and force correctness", gradients},
      {"grid quality", grid_quality},
      {"desk-scale learning", [verbose] { return desk_scale_learning(verbose); }},
      {"readout identity", readout_identity},
  };
  int failed = 0;
  for (int k = 1; k <= 9; ++k) {
    if ((!only.empty() && !only.count(k)) || skip.count(k)) continue;
    const auto& [name, run] = criteria[k - 1];
    Outcome out;
    try {
      out = run();
    } catch (const std::exception& e) {
      out = {false, std::string("error: ") + e.what()};
    }
    failed += !out.passed;
    std::printf("[%s] %d %s: %s\n", out.passed ? "PASS" : "FAIL", k, name, out.detail.c_str());
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
