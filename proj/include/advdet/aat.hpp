#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advdet/attack.hpp"
#include "advdet/dataset.hpp"
#include "advdet/model.hpp"
#include "advdet/optim.hpp"
#include "advdet/rng.hpp"

namespace advdet::aat {

struct AttackSpec {
  attacks::NormBall ball;
  attacks::PgdConfig pgd;
};

struct AatConfig {
  models::ArchSpec arch = models::ArchSpec::mnist_conv(1);  // detector net, output width 1
  int batch_total = 320;
  AttackSpec train_attack;
  attacks::PgdConfig val_attack;  // evaluated inside train_attack.ball
  int epochs = 100;
  models::AdamConfig optimizer;  // outer minimization
  std::uint64_t seed = 0;
  // validation negatives attacked per epoch; 0 means the whole out-class split
  int val_max_negatives = 0;
  int update_chunk = 64;
};

// One training batch: in-class rows stay clean, the out-class pool is
// resampled to the same count.
struct BalancedBatch {
  std::vector<std::int64_t> positives;
  std::vector<std::int64_t> negatives;
};

// Draws batch_total samples uniformly without replacement, splits them by
// label against class k, and resamples the drawn out-of-class rows (with
// replacement when fewer) to match the in-class count. A draw with no
// in-class or no out-of-class rows is retried up to max_redraws times, then
// reported as an error.
BalancedBatch make_balanced_batch(const Dataset& train, int k, int batch_total, Rng& rng, int max_redraws = 100);

struct StepResult {
  double loss;         // adv_neg_bce + nat_pos_bce
  double adv_neg_bce;  // mean BCE(h(x_adv), 0) over perturbed negatives
  double nat_pos_bce;  // mean BCE(h(x), 1) over clean positives
};

// One update of the minimax objective: perturb the negatives by the inner
// maximization, then descend on mean BCE(adversarial negatives, 0) + mean
// BCE(clean positives, 1). Positive inputs never enter the attack.
StepResult aat_step(models::Model& detector, const nn::Tensor& positives, const nn::Tensor& negatives,
                    const AttackSpec& attack, models::Adam& opt, int update_chunk = 64);

struct EpochStats {
  int epoch;
  double train_bce;
  double nat_auc;
  double adv_auc;
  double wall_seconds;
};

struct TrainResult {
  models::Model best_model;
  int best_epoch = -1;
  double best_adv_auc = -1.0;
  std::vector<EpochStats> history;
};

// Full detector training with per-epoch validation under val_attack; the
// checkpoint with the best validation adv AUC wins. Bit-reproducible for a
// fixed config.
TrainResult train_detector(const Dataset& train, const Dataset& val, int k, const AatConfig& cfg);

// Detector initialized from the subnetwork of f that produces logit k; its
// logit equals z(f(x))_k for every x until training moves it.
models::Model detector_from_classifier_logit(const models::Model& f, int k);

TrainResult finetune_detector_from_classifier(const models::Model& f, const Dataset& train, const Dataset& val,
                                              int k, const AatConfig& cfg);

// Cautions for attack schedules known to under-explore the ball or to
// overshoot. Never errors.
std::vector<std::string> attack_config_warnings(const AttackSpec& attack);

// AUC of detector logits, in-class naturals as positives.
double detector_auc(const models::Model& detector, const nn::Tensor& positives, const nn::Tensor& negatives);

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history,
                       const std::string& config_hash = "");

}  // namespace advdet::aat
