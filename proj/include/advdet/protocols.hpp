#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advdet/aat.hpp"
#include "advdet/dataset.hpp"
#include "advdet/detection.hpp"
#include "advdet/model.hpp"
#include "advdet/synth.hpp"

namespace advdet::protocols {

// ---- 1D density recovery -------------------------------------------------
// Two-mode mixture positives vs uniform negatives; adversarially trained
// detector against an ordinarily trained (eps = 0) baseline on the same seed.

struct Density1dConfig {
  synth::MixtureSpec1D mixture = synth::MixtureSpec1D::two_modes();
  std::vector<int> arch_widths{1, 64, 64, 1};
  attacks::NormBall ball{attacks::Norm::Linf, 0.3};
  int attack_steps = 20;
  double attack_step_size = 0.05;
  int epochs = 200;
  int batch_total = 128;
  double lr = 1e-3;
  int grid_points = 2048;
  std::uint64_t seed = 20250810;
};

struct Density1dResult {
  std::vector<double> grid;
  std::vector<double> density_aat;
  std::vector<double> density_ordinary;
  std::vector<double> density_true;
  double tv_aat = 0.0;
  double tv_ordinary = 0.0;
  std::vector<double> modes_aat;  // strongest first, peaks at least 0.05 apart
};

Density1dResult run_density_1d(const Density1dConfig& cfg);
// density CSVs plus a summary JSON, all stamped with the config hash
void write_density_1d_artifacts(const std::string& dir, const Density1dConfig& cfg, const Density1dResult& res);

// ---- 2D sigmoid field ----------------------------------------------------

struct Field2dConfig {
  synth::Toy2DSpec data{synth::Toy2DKind::Moons, 1000, 0.08, 20250810};
  int heldout_per_class = 200;
  std::vector<int> arch_widths{2, 500, 500, 500, 500, 500, 1};
  attacks::NormBall ball{attacks::Norm::Linf, 0.5};
  int attack_steps = 10;
  double attack_step_size = 0.05;
  int epochs = 60;
  int batch_total = 256;
  double lr = 1e-3;
  int grid_nx = 256, grid_ny = 256;
  double x0 = -3.0, x1 = 4.0, y0 = -3.0, y1 = 3.5;
  std::uint64_t seed = 20250810;
};

struct Field2dResult {
  synth::Field2D field;
  double inclass_mean_sigmoid = 0.0;   // held-out in-class points
  double farfield_mean_sigmoid = 0.0;  // grid points farther than 2*eps from in-class data
  std::int64_t farfield_points = 0;
};

Field2dResult run_field_2d(const Field2dConfig& cfg);
void write_field_2d_artifacts(const std::string& dir, const Field2dConfig& cfg, const Field2dResult& res);

// ---- desk-scale MNIST-layout presets --------------------------------------

// detector preset for the mini dataset: Linf 0.3, train 100/0.01,
// validation 200/0.01, sized for a single-core desk run
aat::AatConfig mini_detector_config(std::uint64_t seed);

// full-scale schedules (steps, step size, eps per norm); long-running
struct Table3Preset {
  std::string name;
  attacks::NormBall ball;
  attacks::PgdConfig train;
  attacks::PgdConfig val;
};
std::vector<Table3Preset> table3_presets();

// per-pixel class-conditional Gaussian draw, clipped to [0,1]
nn::Tensor class_conditional_gaussian_seed(const Dataset& data, int klass, int count, std::uint64_t seed);

}  // namespace advdet::protocols
