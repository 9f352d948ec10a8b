#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advdet/dataset.hpp"
#include "advdet/model.hpp"

namespace advdet::detect {

// Classifier routed through per-class detectors. thresholds holds one T_k per
// class; a universal threshold sets them all equal. A score exactly at the
// threshold counts as natural in every rule here.
struct DetectionSystem {
  models::Model classifier;
  std::vector<models::Model> detectors;
  std::vector<double> thresholds;

  void set_universal_threshold(double T) { thresholds.assign(detectors.size(), T); }
  void validate() const;
};

// One evaluated sample: the routed detector logit, whether it came from the
// natural set, and whether the routing classifier got the true label right.
struct LabeledScore {
  double score;
  bool is_natural;
  bool f_correct;
};

// Rank AUC with midrank tie handling; equals pairwise P(pos > neg) + P(pos == neg)/2.
double auc(const std::vector<double>& positives, const std::vector<double>& negatives);

// argmax with ties resolved to the lowest index
int argmax_index(const double* row, std::int64_t n);

// batch helpers (no gradients)
std::vector<double> detector_logits_batch(const models::Model& detector, const nn::Tensor& x, int chunk = 256);
std::vector<int> classifier_predictions(const models::Model& f, const nn::Tensor& x, int chunk = 256);
// [N,K] detector logit matrix, row-major
std::vector<double> detector_logit_matrix(const std::vector<models::Model>& detectors, const nn::Tensor& x,
                                          int chunk = 256);

struct Verdict {
  bool natural;
  int predicted_class;
};

// route by k = f(x), compare z(h_k(x)) against T_k
Verdict integrated_detect(const DetectionSystem& sys, const nn::Tensor& x_row);
// argmax_k z(h_k(x)); ties go to the lowest class index
int generative_classify(const std::vector<models::Model>& detectors, const nn::Tensor& x_row);
// natural iff the routed (argmax) detector logit is >= T
bool generative_detect(const std::vector<models::Model>& detectors, const nn::Tensor& x_row, double T);
// predicted class, or nullopt when the routed detector rejects
std::optional<int> integrated_classify_with_reject(const DetectionSystem& sys, const nn::Tensor& x_row);

// score extraction for threshold sweeps; y are the original labels
std::vector<LabeledScore> integrated_scores(const DetectionSystem& sys, const nn::Tensor& x,
                                            const std::vector<int>& y, bool is_natural);
std::vector<LabeledScore> generative_scores(const std::vector<models::Model>& detectors, const nn::Tensor& x,
                                            const std::vector<int>& y, bool is_natural);

// threshold metrics; score == T counts as passing
double tpr(const std::vector<LabeledScore>& naturals, double T);
// only rows that truly fool the router (f_correct == false) can be false positives
double fpr(const std::vector<LabeledScore>& perturbed, double T);
double accuracy_on_natural(const std::vector<LabeledScore>& naturals, double T);
double error_on_perturbed(const std::vector<LabeledScore>& perturbed, double T);

// fraction of naturals passed plus perturbed rejected, over |D| + |D'|
double detection_accuracy(const DetectionSystem& sys, const nn::Tensor& naturals, const nn::Tensor& perturbed);
// the same number assembled from per-detector binary accuracies weighted by
// routed sample counts
double detection_accuracy_decomposed(const DetectionSystem& sys, const nn::Tensor& naturals,
                                     const nn::Tensor& perturbed);

struct RocRow {
  double threshold;
  double tpr;
  double fpr;
  double accuracy;
  double error;
};

struct EvalReport {
  nlohmann::json meta;
  std::vector<RocRow> rows;
};

// evenly spaced quantiles of the pooled natural scores, ascending
std::vector<double> quantile_thresholds(const std::vector<LabeledScore>& naturals, int count = 512);

// per-threshold sweep; thresholds must be sorted ascending
EvalReport roc_sweep(const std::vector<LabeledScore>& naturals, const std::vector<LabeledScore>& perturbed,
                     const std::vector<double>& thresholds, nlohmann::json meta);

std::string report_to_json(const EvalReport& report);
std::string report_to_csv(const EvalReport& report);

// concatenates rows; refuses reports whose meta.config_hash values differ
EvalReport merge_reports(const std::vector<EvalReport>& reports);

}  // namespace advdet::detect
