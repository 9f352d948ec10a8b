#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advdet/attack.hpp"
#include "advdet/dataset.hpp"
#include "advdet/model.hpp"

namespace advdet::distortion {

// Penalty-weight search plus the unconstrained attack it drives. The attack
// minimizes the detector loss plus c * ||x'-x||_2^2 with no norm ball, clip
// range only.
struct BsearchConfig {
  double c_init = 0.0;
  double c_lo = 0.0;
  double c_hi = 8.0;
  int depth = 20;
  attacks::PgdConfig pgd;  // defaults mirror the reference setup: 1000 steps, step 1.0, Adam
  double threshold = 0.0;  // detection threshold T

  BsearchConfig() {
    pgd.steps = 1000;
    pgd.step_size = 1.0;
    pgd.rule = attacks::StepRule::Adam;
  }
};

// Largest T with TPR(T) >= target over the given natural scores (the routed
// detector logits).
double threshold_for_tpr(std::vector<double> natural_scores, double target_tpr);

struct TraceRow {
  std::int64_t sample_id;
  int round;
  double c;
  bool success;
  double l2;
};

struct MinDistortionResult {
  nn::Tensor x_adv;  // [1,D]
  bool success = false;
  double final_c = 0.0;
  double l2 = 0.0;
  std::vector<TraceRow> trace;
};

// Round 0 attacks at c_init; each bisection round halves [c_lo, c_hi], moving
// c_lo up on success (the search continues with a larger penalty) and c_hi
// down on failure. A perturbation succeeds when the generative classifier
// picks some class != y whose detector logit exceeds T strictly. Returns the
// perturbed sample from the largest successful c.
MinDistortionResult min_distortion_attack(const nn::Tensor& x_row, int y,
                                          const std::vector<models::Model>& detectors, const BsearchConfig& cfg,
                                          std::int64_t sample_id = 0);

struct DistortionSummary {
  double mean_l2 = 0.0;    // over successful samples
  double achieved_fpr = 0.0;
  std::int64_t successes = 0;
  std::int64_t total = 0;
  std::vector<TraceRow> traces;
};

// Per-sample searches over the whole set; errors when nothing succeeds.
DistortionSummary mean_l2_distortion(const std::vector<models::Model>& detectors, const Dataset& data,
                                     const BsearchConfig& cfg);

// CSV "sample_id,round,c,success,l2"
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& traces,
                     const std::string& config_hash = "");

}  // namespace advdet::distortion
