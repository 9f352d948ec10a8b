#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "advdet/model.hpp"
#include "advdet/tensor.hpp"

namespace advdet::attacks {

enum class Norm { L2, Linf };

// Perturbation constraint set {delta : ||delta||_p <= eps} on 0-1 pixel scale.
struct NormBall {
  Norm p = Norm::Linf;
  double eps = 0.0;
};

// Row-wise projection onto the ball. Feasible rows (within a 1e-12 relative
// slack for L2) pass through bit-unchanged, which also makes the projection
// exactly idempotent. Accepts [D] or [B,D].
nn::Tensor project(const nn::Tensor& delta, const NormBall& ball);
void project_rows_inplace(std::vector<double>& delta, std::int64_t rows, std::int64_t cols, const NormBall& ball);

enum class StepRule { Adam, NormalizedSteepestDescent };
enum class Direction { Minimize, Maximize };

struct ClipRange {
  double lo = 0.0;
  double hi = 1.0;
};

struct PgdConfig {
  int steps = 100;
  double step_size = 0.01;
  StepRule rule = StepRule::Adam;
  bool random_start = false;
  int restarts = 1;
  ClipRange clip;
  std::uint64_t seed = 0;
  int chunk = 64;  // samples attacked per engine pass
};

// Per-sample objective. The engine may pass any contiguous row window of the
// original batch; row_offset locates the window so label vectors can be
// sliced to match. Returns the per-sample loss [rows].
using BatchLoss = std::function<nn::Tensor(const nn::Tensor& x, std::int64_t row_offset)>;

struct PgdResult {
  nn::Tensor x_adv;                    // [B,D]
  std::vector<double> final_loss;      // best per-sample loss across restarts
  std::vector<nn::Tensor> snapshots;   // one [B,D] per requested snapshot step
};

// Projected gradient attack. Every step projects onto the ball (when given)
// and then clips x0+delta into the clip range; the same composite is applied
// once more on output, so the result is feasible for any step count including
// zero. Restart 0 starts at delta=0 unless random_start is set; later restarts
// always draw a uniform start inside the ball, each from its own derived seed,
// and the best restart is kept per sample.
PgdResult pgd(const BatchLoss& loss, const nn::Tensor& x0, const std::optional<NormBall>& ball,
              const PgdConfig& cfg, Direction dir, const std::vector<int>& snapshot_steps = {});

// Aggregated detection function: column i is detector i's logit. [B,K],
// differentiable through every detector.
nn::Tensor aggregate_detector(const std::vector<models::Model>& detectors, const nn::Tensor& x);

// Targeted synthesis from a (class-conditional Gaussian) seed image: clamps the
// seed into the clip range, then runs targeted-logit PGD that raises the
// detector's logit, returning the trajectory at the requested step counts
// (step 0 is the clamped seed).
std::vector<nn::Tensor> synthesize_from_noise(const models::Model& detector, const nn::Tensor& seed_images,
                                              const std::optional<NormBall>& ball, const PgdConfig& cfg,
                                              const std::vector<int>& snapshot_steps);

}  // namespace advdet::attacks
