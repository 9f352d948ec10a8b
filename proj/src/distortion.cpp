#include "advdet/distortion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "advdet/detection.hpp"
#include "advdet/losses.hpp"

namespace advdet::distortion {

double threshold_for_tpr(std::vector<double> natural_scores, double target_tpr) {
  if (natural_scores.empty()) throw std::invalid_argument("threshold_for_tpr: no scores");
  if (target_tpr <= 0.0 || target_tpr >= 1.0)
    throw std::invalid_argument("threshold_for_tpr: target must lie in (0,1)");
  std::sort(natural_scores.begin(), natural_scores.end(), std::greater<>());
  // smallest m with m/N >= target; scores >= scores[m-1] then count at least m
  const auto N = natural_scores.size();
  const auto m = static_cast<std::size_t>(std::ceil(target_tpr * static_cast<double>(N)));
  return natural_scores[std::min(m, N) - 1];
}

namespace {

double l2_between(const nn::Tensor& a, const nn::Tensor& b) {
  double sq = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sq += d * d;
  }
  return std::sqrt(sq);
}

struct Attempt {
  nn::Tensor x_adv;
  bool success;
  double l2;
};

Attempt attempt_at_c(const nn::Tensor& x_row, int y, const std::vector<models::Model>& detectors,
                     const BsearchConfig& cfg, double c) {
  auto loss = attacks::penalized_detectors_attack(detectors, {y}, x_row, c);
  attacks::PgdResult r = attacks::pgd(loss, x_row, std::nullopt, cfg.pgd, attacks::Direction::Minimize);

  const auto mat = detect::detector_logit_matrix(detectors, r.x_adv);
  const auto K = static_cast<std::int64_t>(detectors.size());
  const int khat = detect::argmax_index(mat.data(), K);
  double best_other = -std::numeric_limits<double>::infinity();
  for (std::int64_t j = 0; j < K; ++j)
    if (static_cast<int>(j) != y) best_other = std::max(best_other, mat[static_cast<std::size_t>(j)]);
  // false positive: classified as some other class and past the threshold
  const bool success = khat != y && best_other > cfg.threshold;
  return {r.x_adv, success, l2_between(r.x_adv, x_row)};
}

}  // namespace

MinDistortionResult min_distortion_attack(const nn::Tensor& x_row, int y,
                                          const std::vector<models::Model>& detectors, const BsearchConfig& cfg,
                                          std::int64_t sample_id) {
  if (cfg.c_lo > cfg.c_init || cfg.c_init > cfg.c_hi)
    throw std::invalid_argument("min_distortion_attack: need c_lo <= c_init <= c_hi");
  if (cfg.depth < 0) throw std::invalid_argument("min_distortion_attack: depth must be >= 0");

  MinDistortionResult res;
  res.x_adv = x_row.detached();
  double lo = cfg.c_lo, hi = cfg.c_hi;
  double c = cfg.c_init;
  for (int round = 0; round <= cfg.depth; ++round) {
    Attempt a = attempt_at_c(x_row, y, detectors, cfg, c);
    res.trace.push_back({sample_id, round, c, a.success, a.l2});
    if (a.success) {
      // accepted; continue with a larger penalty
      res.success = true;
      res.final_c = c;
      res.l2 = a.l2;
      res.x_adv = a.x_adv;
      lo = c;
    } else {
      hi = c;
    }
    c = 0.5 * (lo + hi);
  }
  return res;
}

DistortionSummary mean_l2_distortion(const std::vector<models::Model>& detectors, const Dataset& data,
                                     const BsearchConfig& cfg) {
  if (data.size() == 0) throw std::invalid_argument("mean_l2_distortion: empty dataset");
  DistortionSummary summary;
  summary.total = data.size();
  double l2_sum = 0.0;
  for (std::int64_t i = 0; i < data.size(); ++i) {
    Dataset one = data.subset({i});
    MinDistortionResult r =
        min_distortion_attack(one.images, one.labels[0], detectors, cfg, /*sample_id=*/i);
    summary.traces.insert(summary.traces.end(), r.trace.begin(), r.trace.end());
    if (r.success) {
      ++summary.successes;
      l2_sum += r.l2;
    }
  }
  if (summary.successes == 0) throw std::runtime_error("mean_l2_distortion: no sample could be perturbed");
  summary.mean_l2 = l2_sum / static_cast<double>(summary.successes);
  summary.achieved_fpr = static_cast<double>(summary.successes) / static_cast<double>(summary.total);
  return summary;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& traces,
                     const std::string& config_hash) {
  std::ostringstream os;
  if (!config_hash.empty()) os << "# config_hash=" << config_hash << "\n";
  os << "sample_id,round,c,success,l2\n";
  os.precision(17);
  for (const auto& t : traces)
    os << t.sample_id << "," << t.round << "," << t.c << "," << (t.success ? 1 : 0) << "," << t.l2 << "\n";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  out << os.str();
}

}  // namespace advdet::distortion
