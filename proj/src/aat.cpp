#include "advdet/aat.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "advdet/detection.hpp"
#include "advdet/losses.hpp"
#include "advdet/ops.hpp"

namespace advdet::aat {

BalancedBatch make_balanced_batch(const Dataset& train, int k, int batch_total, Rng& rng, int max_redraws) {
  if (batch_total < 2) throw std::invalid_argument("make_balanced_batch: batch_total must be >= 2");
  if (train.size() == 0) throw std::invalid_argument("make_balanced_batch: empty dataset");
  for (int attempt = 0; attempt <= max_redraws; ++attempt) {
    const auto drawn = rng.sample_indices(train.size(), std::min<std::int64_t>(batch_total, train.size()));
    BalancedBatch batch;
    std::vector<std::int64_t> out_pool;
    for (const auto i : drawn) {
      if (train.labels[static_cast<std::size_t>(i)] == k)
        batch.positives.push_back(i);
      else
        out_pool.push_back(i);
    }
    if (batch.positives.empty() || out_pool.empty()) continue;  // redraw
    // resample the out-of-class pool to the in-class count
    for (std::size_t j = 0; j < batch.positives.size(); ++j) {
      if (j < out_pool.size())
        batch.negatives.push_back(out_pool[j]);
      else
        batch.negatives.push_back(out_pool[static_cast<std::size_t>(rng.below(out_pool.size()))]);
    }
    return batch;
  }
  throw std::runtime_error("make_balanced_batch: no usable batch for class " + std::to_string(k) + " after " +
                           std::to_string(max_redraws) + " redraws");
}

namespace {

// chunked mean-BCE descent pass; adds (1/total) * sum(bce(chunk)) gradients
double accumulate_bce_grads(models::Model& detector, const nn::Tensor& inputs, double target, int chunk) {
  const std::int64_t n = inputs.dim(0), D = inputs.dim(1);
  double total_loss = 0.0;
  for (std::int64_t start = 0; start < n; start += chunk) {
    const std::int64_t b = std::min<std::int64_t>(chunk, n - start);
    std::vector<double> vals(static_cast<std::size_t>(b * D));
    std::copy(inputs.data() + start * D, inputs.data() + (start + b) * D, vals.begin());
    nn::Tensor x = nn::Tensor::from({b, D}, std::move(vals));
    nn::Tensor bce = nn::bce_with_logits(models::logits(detector, x),
                                         std::vector<double>(static_cast<std::size_t>(b), target));
    nn::Tensor part = nn::scale(nn::sum(bce), 1.0 / static_cast<double>(n));
    nn::backward(part);
    total_loss += part.item();
  }
  return total_loss;
}

}  // namespace

StepResult aat_step(models::Model& detector, const nn::Tensor& positives, const nn::Tensor& negatives,
                    const AttackSpec& attack, models::Adam& opt, int update_chunk) {
  detector.set_params_requires_grad(false);

  // inner maximization on the out-of-class rows only
  nn::Tensor adv_negatives = negatives;
  if (negatives.dim(0) > 0) {
    adv_negatives = attacks::pgd(attacks::detector_bce_attack(detector), negatives, attack.ball, attack.pgd,
                                 attacks::Direction::Maximize)
                        .x_adv;
  }

  detector.set_params_requires_grad(true);
  detector.zero_param_grads();
  StepResult r{};
  r.adv_neg_bce = accumulate_bce_grads(detector, adv_negatives, 0.0, update_chunk);
  r.nat_pos_bce = accumulate_bce_grads(detector, positives, 1.0, update_chunk);
  r.loss = r.adv_neg_bce + r.nat_pos_bce;
  opt.step(detector);
  detector.set_params_requires_grad(false);
  return r;
}

double detector_auc(const models::Model& detector, const nn::Tensor& positives, const nn::Tensor& negatives) {
  return detect::auc(detect::detector_logits_batch(detector, positives),
                     detect::detector_logits_batch(detector, negatives));
}

namespace {

TrainResult train_detector_impl(models::Model initial, const Dataset& train, const Dataset& val, int k,
                                const AatConfig& cfg) {
  TrainResult result;
  result.best_model = initial.clone();
  if (cfg.epochs == 0) return result;

  models::Adam opt(cfg.optimizer);
  models::Model detector = std::move(initial);

  // fixed validation sets so epochs stay comparable
  const Dataset val_pos = val.subset(val.indices_of_class(k));
  auto out_idx = val.indices_not_of_class(k);
  if (cfg.val_max_negatives > 0 && static_cast<std::int64_t>(out_idx.size()) > cfg.val_max_negatives) {
    Rng pick(mix_seed(cfg.seed, 0x7A1u, static_cast<std::uint64_t>(k)));
    auto chosen = pick.sample_indices(static_cast<std::int64_t>(out_idx.size()), cfg.val_max_negatives);
    std::vector<std::int64_t> sub;
    for (auto c : chosen) sub.push_back(out_idx[static_cast<std::size_t>(c)]);
    std::sort(sub.begin(), sub.end());
    out_idx = std::move(sub);
  }
  const Dataset val_neg = val.subset(out_idx);
  if (val_pos.size() == 0 || val_neg.size() == 0)
    throw std::invalid_argument("train_detector: validation split lacks class " + std::to_string(k) +
                                " or its complement");

  const std::int64_t iters = (train.size() + cfg.batch_total - 1) / cfg.batch_total;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng batch_rng(mix_seed(cfg.seed, 0xBA7u + static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(k)));
    double loss_sum = 0.0;
    for (std::int64_t it = 0; it < iters; ++it) {
      BalancedBatch batch = make_balanced_batch(train, k, cfg.batch_total, batch_rng);
      AttackSpec attack = cfg.train_attack;
      attack.pgd.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) * 1000003u + static_cast<std::uint64_t>(it),
                                 static_cast<std::uint64_t>(k));
      loss_sum += aat_step(detector, train.subset(batch.positives).images, train.subset(batch.negatives).images,
                           attack, opt, cfg.update_chunk)
                      .loss;
    }

    attacks::PgdConfig val_pgd = cfg.val_attack;
    val_pgd.seed = mix_seed(cfg.seed, 0xE7Au, static_cast<std::uint64_t>(epoch));
    detector.set_params_requires_grad(false);
    nn::Tensor val_adv = attacks::pgd(attacks::detector_bce_attack(detector), val_neg.images, cfg.train_attack.ball,
                                      val_pgd, attacks::Direction::Maximize)
                             .x_adv;
    EpochStats st{};
    st.epoch = epoch;
    st.train_bce = loss_sum / static_cast<double>(iters);
    st.nat_auc = detector_auc(detector, val_pos.images, val_neg.images);
    st.adv_auc = detector_auc(detector, val_pos.images, val_adv);
    st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(st);

    // >= keeps the latest among tied epochs; separable desk-scale sets
    // saturate the AUC long before the logits finish sharpening
    if (st.adv_auc >= result.best_adv_auc) {
      result.best_adv_auc = st.adv_auc;
      result.best_epoch = epoch;
      result.best_model = detector.clone();
    }
  }
  return result;
}

}  // namespace

TrainResult train_detector(const Dataset& train, const Dataset& val, int k, const AatConfig& cfg) {
  if (cfg.arch.out_width() != 1) throw std::invalid_argument("train_detector: detector arch must have output width 1");
  return train_detector_impl(models::init(cfg.arch, mix_seed(cfg.seed, 0xDE7u, static_cast<std::uint64_t>(k))), train,
                             val, k, cfg);
}

models::Model detector_from_classifier_logit(const models::Model& f, int k) {
  if (k < 0 || k >= f.output_width())
    throw std::out_of_range("detector_from_classifier_logit: class " + std::to_string(k) + " outside [0," +
                            std::to_string(f.output_width()) + ")");
  models::Model det;
  det.spec = f.spec;
  if (f.spec.kind == models::ArchKind::MnistConv)
    det.spec.output_width = 1;
  else
    det.spec.mlp_widths.back() = 1;

  const std::string last_w = f.spec.kind == models::ArchKind::MnistConv
                                 ? "fc2_w"
                                 : "layer" + std::to_string(f.spec.mlp_widths.size() - 2) + "_w";
  const std::string last_b = f.spec.kind == models::ArchKind::MnistConv
                                 ? "fc2_b"
                                 : "layer" + std::to_string(f.spec.mlp_widths.size() - 2) + "_b";
  for (const auto& [name, t] : f.params) {
    if (name == last_w) {
      const auto in = t.dim(0), K = t.dim(1);
      std::vector<double> col(static_cast<std::size_t>(in));
      for (std::int64_t i = 0; i < in; ++i) col[static_cast<std::size_t>(i)] = t.data()[i * K + k];
      det.params.emplace_back(name, nn::Tensor::from({in, 1}, std::move(col)));
    } else if (name == last_b) {
      det.params.emplace_back(name, nn::Tensor::from({1}, {t.data()[k]}));
    } else {
      det.params.emplace_back(name, t.detached());
    }
  }
  return det;
}

TrainResult finetune_detector_from_classifier(const models::Model& f, const Dataset& train, const Dataset& val,
                                              int k, const AatConfig& cfg) {
  return train_detector_impl(detector_from_classifier_logit(f, k), train, val, k, cfg);
}

std::vector<std::string> attack_config_warnings(const AttackSpec& attack) {
  std::vector<std::string> warnings;
  const double reach = attack.pgd.step_size * static_cast<double>(attack.pgd.steps);
  if (reach < 2.0 * attack.ball.eps) {
    std::ostringstream os;
    os << "attack schedule may under-explore the ball: step_size*steps = " << reach << " < 2*eps = "
       << 2.0 * attack.ball.eps;
    warnings.push_back(os.str());
  }
  if (attack.ball.eps > 0.0 && attack.pgd.step_size >= attack.ball.eps / 2.0) {
    std::ostringstream os;
    os << "step_size " << attack.pgd.step_size << " >= eps/2 = " << attack.ball.eps / 2.0
       << "; large steps produce noise-like negatives and have failed to induce robustness";
    warnings.push_back(os.str());
  }
  return warnings;
}

void write_history_csv(const std::string& path, const std::vector<EpochStats>& history,
                       const std::string& config_hash) {
  std::ostringstream os;
  if (!config_hash.empty()) os << "# config_hash=" << config_hash << "\n";
  os << "epoch,train_bce,nat_auc,adv_auc,wall_seconds\n";
  os.setf(std::ios::fmtflags(0), std::ios::floatfield);
  os.precision(17);
  for (const auto& h : history)
    os << h.epoch << "," << h.train_bce << "," << h.nat_auc << "," << h.adv_auc << "," << h.wall_seconds << "\n";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_history_csv: cannot open " + path);
  out << os.str();
}

}  // namespace advdet::aat
