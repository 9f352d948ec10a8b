#include "advdet/detection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "advdet/ops.hpp"

namespace advdet::detect {

void DetectionSystem::validate() const {
  if (static_cast<int>(detectors.size()) != classifier.output_width())
    throw std::invalid_argument("DetectionSystem: " + std::to_string(detectors.size()) + " detectors for " +
                                std::to_string(classifier.output_width()) + " classes");
  if (thresholds.size() != detectors.size())
    throw std::invalid_argument("DetectionSystem: thresholds not set for every detector");
}

double auc(const std::vector<double>& positives, const std::vector<double>& negatives) {
  if (positives.empty() || negatives.empty()) throw std::invalid_argument("auc: empty score set");
  struct Entry {
    double score;
    bool pos;
  };
  std::vector<Entry> all;
  all.reserve(positives.size() + negatives.size());
  for (double s : positives) all.push_back({s, true});
  for (double s : negatives) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });

  // midranks over tie groups, ranks are 1-based
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t)
      if (all[t].pos) pos_rank_sum += midrank;
    i = j;
  }
  const double P = static_cast<double>(positives.size());
  const double N = static_cast<double>(negatives.size());
  return (pos_rank_sum - P * (P + 1.0) / 2.0) / (P * N);
}

int argmax_index(const double* row, std::int64_t n) {
  std::int64_t best = 0;
  for (std::int64_t j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;
  return static_cast<int>(best);
}

std::vector<double> detector_logits_batch(const models::Model& detector, const nn::Tensor& x, int chunk) {
  const std::int64_t N = x.dim(0), D = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(N));
  for (std::int64_t start = 0; start < N; start += chunk) {
    const std::int64_t b = std::min<std::int64_t>(chunk, N - start);
    std::vector<double> vals(static_cast<std::size_t>(b * D));
    std::copy(x.data() + start * D, x.data() + (start + b) * D, vals.begin());
    nn::Tensor z = models::logits(detector, nn::Tensor::from({b, D}, std::move(vals)));
    for (std::int64_t i = 0; i < b; ++i) out[static_cast<std::size_t>(start + i)] = z.data()[i];
  }
  return out;
}

std::vector<int> classifier_predictions(const models::Model& f, const nn::Tensor& x, int chunk) {
  const std::int64_t N = x.dim(0), D = x.dim(1);
  std::vector<int> out(static_cast<std::size_t>(N));
  for (std::int64_t start = 0; start < N; start += chunk) {
    const std::int64_t b = std::min<std::int64_t>(chunk, N - start);
    std::vector<double> vals(static_cast<std::size_t>(b * D));
    std::copy(x.data() + start * D, x.data() + (start + b) * D, vals.begin());
    nn::Tensor z = models::logits(f, nn::Tensor::from({b, D}, std::move(vals)));
    const auto K = z.dim(1);
    for (std::int64_t i = 0; i < b; ++i)
      out[static_cast<std::size_t>(start + i)] = argmax_index(z.data() + i * K, K);
  }
  return out;
}

std::vector<double> detector_logit_matrix(const std::vector<models::Model>& detectors, const nn::Tensor& x,
                                          int chunk) {
  const std::int64_t N = x.dim(0);
  const std::int64_t K = static_cast<std::int64_t>(detectors.size());
  std::vector<double> mat(static_cast<std::size_t>(N * K));
  for (std::int64_t k = 0; k < K; ++k) {
    const auto col = detector_logits_batch(detectors[static_cast<std::size_t>(k)], x, chunk);
    for (std::int64_t i = 0; i < N; ++i) mat[static_cast<std::size_t>(i * K + k)] = col[static_cast<std::size_t>(i)];
  }
  return mat;
}

namespace {

nn::Tensor as_single_row(const nn::Tensor& x_row) {
  if (x_row.ndim() == 2) {
    if (x_row.dim(0) != 1) throw nn::ShapeError("detect", "expected a single sample, got " + nn::shape_str(x_row.shape()));
    return x_row;
  }
  std::vector<double> vals(x_row.values());
  return nn::Tensor::from({1, x_row.numel()}, std::move(vals));
}

}  // namespace

Verdict integrated_detect(const DetectionSystem& sys, const nn::Tensor& x_row) {
  sys.validate();
  nn::Tensor x = as_single_row(x_row);
  const int k = classifier_predictions(sys.classifier, x)[0];
  const double score = detector_logits_batch(sys.detectors[static_cast<std::size_t>(k)], x)[0];
  return Verdict{score >= sys.thresholds[static_cast<std::size_t>(k)], k};
}

int generative_classify(const std::vector<models::Model>& detectors, const nn::Tensor& x_row) {
  if (detectors.size() < 2) throw std::invalid_argument("generative_classify: needs at least 2 detectors");
  nn::Tensor x = as_single_row(x_row);
  const auto mat = detector_logit_matrix(detectors, x);
  return argmax_index(mat.data(), static_cast<std::int64_t>(detectors.size()));
}

bool generative_detect(const std::vector<models::Model>& detectors, const nn::Tensor& x_row, double T) {
  nn::Tensor x = as_single_row(x_row);
  const auto mat = detector_logit_matrix(detectors, x);
  const int k = argmax_index(mat.data(), static_cast<std::int64_t>(detectors.size()));
  return mat[static_cast<std::size_t>(k)] >= T;
}

std::optional<int> integrated_classify_with_reject(const DetectionSystem& sys, const nn::Tensor& x_row) {
  const Verdict v = integrated_detect(sys, x_row);
  if (!v.natural) return std::nullopt;
  return v.predicted_class;
}

std::vector<LabeledScore> integrated_scores(const DetectionSystem& sys, const nn::Tensor& x,
                                            const std::vector<int>& y, bool is_natural) {
  sys.validate();
  const std::int64_t N = x.dim(0);
  if (static_cast<std::int64_t>(y.size()) != N)
    throw std::invalid_argument("integrated_scores: label count mismatch");
  const auto preds = classifier_predictions(sys.classifier, x);
  const auto mat = detector_logit_matrix(sys.detectors, x);
  const std::int64_t K = static_cast<std::int64_t>(sys.detectors.size());
  std::vector<LabeledScore> out(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i) {
    const int k = preds[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = {mat[static_cast<std::size_t>(i * K + k)], is_natural,
                                        k == y[static_cast<std::size_t>(i)]};
  }
  return out;
}

std::vector<LabeledScore> generative_scores(const std::vector<models::Model>& detectors, const nn::Tensor& x,
                                            const std::vector<int>& y, bool is_natural) {
  const std::int64_t N = x.dim(0);
  if (static_cast<std::int64_t>(y.size()) != N)
    throw std::invalid_argument("generative_scores: label count mismatch");
  const auto mat = detector_logit_matrix(detectors, x);
  const std::int64_t K = static_cast<std::int64_t>(detectors.size());
  std::vector<LabeledScore> out(static_cast<std::size_t>(N));
  for (std::int64_t i = 0; i < N; ++i) {
    const int k = argmax_index(mat.data() + i * K, K);
    out[static_cast<std::size_t>(i)] = {mat[static_cast<std::size_t>(i * K + k)], is_natural,
                                        k == y[static_cast<std::size_t>(i)]};
  }
  return out;
}

double tpr(const std::vector<LabeledScore>& naturals, double T) {
  if (naturals.empty()) throw std::invalid_argument("tpr: empty set");
  std::int64_t hits = 0;
  for (const auto& s : naturals)
    if (s.score >= T) ++hits;
  return static_cast<double>(hits) / static_cast<double>(naturals.size());
}

double fpr(const std::vector<LabeledScore>& perturbed, double T) {
  if (perturbed.empty()) throw std::invalid_argument("fpr: empty set");
  std::int64_t hits = 0;
  for (const auto& s : perturbed)
    if (!s.f_correct && s.score >= T) ++hits;
  return static_cast<double>(hits) / static_cast<double>(perturbed.size());
}

double accuracy_on_natural(const std::vector<LabeledScore>& naturals, double T) {
  if (naturals.empty()) throw std::invalid_argument("accuracy: empty set");
  std::int64_t hits = 0;
  for (const auto& s : naturals)
    if (s.f_correct && s.score >= T) ++hits;
  return static_cast<double>(hits) / static_cast<double>(naturals.size());
}

double error_on_perturbed(const std::vector<LabeledScore>& perturbed, double T) {
  return fpr(perturbed, T);  // misclassified and not rejected
}

double detection_accuracy(const DetectionSystem& sys, const nn::Tensor& naturals, const nn::Tensor& perturbed) {
  sys.validate();
  const auto nat_preds = classifier_predictions(sys.classifier, naturals);
  const auto nat_mat = detector_logit_matrix(sys.detectors, naturals);
  const auto adv_preds = classifier_predictions(sys.classifier, perturbed);
  const auto adv_mat = detector_logit_matrix(sys.detectors, perturbed);
  const std::int64_t K = static_cast<std::int64_t>(sys.detectors.size());
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < naturals.dim(0); ++i) {
    const int k = nat_preds[static_cast<std::size_t>(i)];
    if (nat_mat[static_cast<std::size_t>(i * K + k)] >= sys.thresholds[static_cast<std::size_t>(k)]) ++correct;
  }
  for (std::int64_t i = 0; i < perturbed.dim(0); ++i) {
    const int k = adv_preds[static_cast<std::size_t>(i)];
    if (adv_mat[static_cast<std::size_t>(i * K + k)] < sys.thresholds[static_cast<std::size_t>(k)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(naturals.dim(0) + perturbed.dim(0));
}

double detection_accuracy_decomposed(const DetectionSystem& sys, const nn::Tensor& naturals,
                                     const nn::Tensor& perturbed) {
  sys.validate();
  const auto nat_preds = classifier_predictions(sys.classifier, naturals);
  const auto nat_mat = detector_logit_matrix(sys.detectors, naturals);
  const auto adv_preds = classifier_predictions(sys.classifier, perturbed);
  const auto adv_mat = detector_logit_matrix(sys.detectors, perturbed);
  const std::int64_t K = static_cast<std::int64_t>(sys.detectors.size());

  double weighted = 0.0;
  std::int64_t total = naturals.dim(0) + perturbed.dim(0);
  for (std::int64_t k = 0; k < K; ++k) {
    std::int64_t routed = 0, right = 0;
    for (std::int64_t i = 0; i < naturals.dim(0); ++i) {
      if (nat_preds[static_cast<std::size_t>(i)] != k) continue;
      ++routed;
      if (nat_mat[static_cast<std::size_t>(i * K + k)] >= sys.thresholds[static_cast<std::size_t>(k)]) ++right;
    }
    for (std::int64_t i = 0; i < perturbed.dim(0); ++i) {
      if (adv_preds[static_cast<std::size_t>(i)] != k) continue;
      ++routed;
      if (adv_mat[static_cast<std::size_t>(i * K + k)] < sys.thresholds[static_cast<std::size_t>(k)]) ++right;
    }
    if (routed > 0)
      weighted += (static_cast<double>(right) / static_cast<double>(routed)) *
                  (static_cast<double>(routed) / static_cast<double>(total));
  }
  return weighted;
}

std::vector<double> quantile_thresholds(const std::vector<LabeledScore>& naturals, int count) {
  if (naturals.empty()) throw std::invalid_argument("quantile_thresholds: empty set");
  if (count < 1) throw std::invalid_argument("quantile_thresholds: count must be positive");
  std::vector<double> scores;
  scores.reserve(naturals.size());
  for (const auto& s : naturals) scores.push_back(s.score);
  std::sort(scores.begin(), scores.end());
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const double q = count == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(count - 1);
    const auto pos = static_cast<std::size_t>(q * static_cast<double>(scores.size() - 1));
    out[static_cast<std::size_t>(i)] = scores[pos];
  }
  return out;
}

EvalReport roc_sweep(const std::vector<LabeledScore>& naturals, const std::vector<LabeledScore>& perturbed,
                     const std::vector<double>& thresholds, nlohmann::json meta) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw std::invalid_argument("roc_sweep: thresholds must be sorted ascending");
  EvalReport report;
  report.meta = std::move(meta);
  report.rows.reserve(thresholds.size());
  for (const double T : thresholds)
    report.rows.push_back(
        {T, tpr(naturals, T), fpr(perturbed, T), accuracy_on_natural(naturals, T), error_on_perturbed(perturbed, T)});
  return report;
}

namespace {

std::string fmt17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["meta"] = report.meta;
  auto& rows = j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row;
    row["T"] = r.threshold;
    row["tpr"] = r.tpr;
    row["fpr"] = r.fpr;
    row["accuracy"] = r.accuracy;
    row["error"] = r.error;
    rows.push_back(row);
  }
  return j.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  if (report.meta.contains("config_hash"))
    os << "# config_hash=" << report.meta["config_hash"].get<std::string>() << "\n";
  os << "threshold,tpr,fpr,accuracy,error\n";
  for (const auto& r : report.rows)
    os << fmt17(r.threshold) << "," << fmt17(r.tpr) << "," << fmt17(r.fpr) << "," << fmt17(r.accuracy) << ","
       << fmt17(r.error) << "\n";
  return os.str();
}

EvalReport merge_reports(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("merge_reports: nothing to merge");
  const auto hash_of = [](const EvalReport& r) {
    return r.meta.contains("config_hash") ? r.meta["config_hash"].get<std::string>() : std::string();
  };
  const std::string expect = hash_of(reports.front());
  EvalReport merged;
  merged.meta = reports.front().meta;
  for (const auto& r : reports) {
    if (hash_of(r) != expect)
      throw std::runtime_error("merge_reports: config hash mismatch: " + expect + " vs " + hash_of(r));
    merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
  }
  return merged;
}

}  // namespace advdet::detect
