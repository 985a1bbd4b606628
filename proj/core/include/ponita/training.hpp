#pragma once

// Training and evaluation loops for the two synthetic tasks.
//
// nbody:       vector readout predicts the displacement; loss is the MSE of
//              p0 + v_hat against the final positions.
// toy-energy:  scalar readout is the energy, forces are -dE/dp;
//              loss = lambda_E * mean_G (E_hat - E)^2 + lambda_F * mean (F_hat - F)^2.
//
// The parameter gradient of the force term needs a second derivative of the
// network. The tape is first order only, so it is taken as a central
// difference of parameter gradients along the force-loss direction u:
//   d/dtheta <u, F> = -(grad_theta E(p + h u) - grad_theta E(p - h u)) / (2h).

#include "ponita/checkpoint.hpp"
#include "ponita/models.hpp"
#include "ponita/point_cloud_io.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace ponita::train {

enum class Task { NBody, ToyEnergy };
enum class Arch { Ponita, Pnita };

std::string to_string(Task t);
std::string to_string(Arch a);
Task parse_task(const std::string& s);
Arch parse_arch(const std::string& s);

/// Input/readout layout of a task with the remaining fields taken from `base`.
nn::ModelConfig task_config(Task task, nn::ModelConfig base);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct Options {
  Task task = Task::NBody;
  Arch arch = Arch::Ponita;
  nn::ModelConfig model;  // input layout is filled in from the task
  std::size_t epochs = 500;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::size_t warmup = 10;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
  bool f32 = false;
  /// Ponita only: each training graph gets its own randomly rotated grid.
  bool rotate_grids = true;
  double lambda_energy = 1.0;
  double lambda_force = 500.0;
  /// Step of the force-loss difference; 0 picks 1e-4 (f64) or 1e-2 (f32).
  double hvp_step = 0.0;
  std::function<void(const EpochLog&)> on_epoch;
};

struct Result {
  std::vector<EpochLog> log;
  checkpoint::Checkpoint checkpoint;
  std::size_t parameters = 0;
  std::size_t train_samples = 0;
  std::size_t val_samples = 0;
};

/// Splits off the last val_fraction of the samples (at least one on each side
/// when there are two or more) and trains. Throws std::runtime_error on a
/// non-finite loss.
Result train(const io::Dataset& data, const Options& options);

void write_metric_log(const std::vector<EpochLog>& log, const std::filesystem::path& file);
std::vector<EpochLog> read_metric_log(const std::filesystem::path& file);

struct Metrics {
  std::size_t samples = 0;
  double loss = 0.0;        // the training objective
  double position_mse = 0.0;  // nbody
  double energy_mae = 0.0;    // toy-energy
  double force_mae = 0.0;     // toy-energy
};

Metrics evaluate(const checkpoint::Checkpoint& ck, const io::Dataset& data, bool f32 = false);

/// Adds "predicted_positions" (nbody) or "predicted_energy" and
/// "predicted_forces" (toy-energy) to the targets of each sample.
std::vector<io::PointCloud> infer(const checkpoint::Checkpoint& ck, std::vector<io::PointCloud> samples,
                                  bool f32 = false);

/// The training objective of `samples` as one batch (no grid rotation).
/// With `with_grad` the model's parameter gradients are set to the gradient
/// of that objective, computed as in a training step; without it they are
/// left at zero.
double batch_objective(nn::Ponita<double>& model, const std::vector<io::PointCloud>& samples, const Options& opt,
                       bool with_grad);
double batch_objective(nn::Pnita<double>& model, const std::vector<io::PointCloud>& samples, const Options& opt,
                       bool with_grad);

std::size_t parameter_count(Arch arch, const nn::ModelConfig& cfg);

/// Channel count for a Pnita whose parameter count is closest to `target`
/// with the other fields of `cfg` fixed.
std::size_t matched_pnita_channels(const nn::ModelConfig& cfg, std::size_t target);

/// Raises glibc's mmap and trim thresholds so that per-step tape buffers are
/// recycled from the heap instead of being returned to the OS.
void tune_allocator();

}  // namespace ponita::train
