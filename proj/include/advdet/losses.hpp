#pragma once

#include <vector>

#include "advdet/attack.hpp"
#include "advdet/model.hpp"
#include "advdet/tensor.hpp"

namespace advdet::attacks {

// Attack losses over logit matrices, one value per row. All are differentiable
// through the logits; row argmax ties resolve to the lowest index.

// logit margin z_y - max_{i!=y} z_i; negative iff the row is misclassified
nn::Tensor loss_classifier_cw(const nn::Tensor& f_logits, const std::vector<int>& y);

// -max_{i!=y} z(H)_i; decreases as the best non-y detector logit grows
nn::Tensor loss_detector(const nn::Tensor& h_logits, const std::vector<int>& y);

// surrogate-classifier loss: the aggregated detectors contribute logit K+1 as
// (-max_{j!=y} z(H)_j + 1) * max_j z(f)_j, and the loss is
// max_i z(g)_i - max_{i!=y} z(f)_i over the K+1 surrogate logits
nn::Tensor loss_surrogate_combined(const nn::Tensor& f_logits, const nn::Tensor& h_logits, const std::vector<int>& y);

// classifier-margin loss while f still classifies the row as y (>= on the
// boundary), detector loss once it does not
nn::Tensor loss_piecewise_combined(const nn::Tensor& f_logits, const nn::Tensor& h_logits, const std::vector<int>& y);

// -z_t, so minimization raises the target logit
nn::Tensor loss_targeted_logit(const nn::Tensor& logits, const std::vector<int>& targets);

// detector loss plus c * ||x - x_orig||_2^2 per row; equals loss_detector at c=0
nn::Tensor loss_penalized_detector(const nn::Tensor& h_logits, const std::vector<int>& y, const nn::Tensor& x,
                                   const nn::Tensor& x_orig, double c);

// binary cross entropy against label 0 of a single detector logit column; the
// inner maximization objective of asymmetrical adversarial training
nn::Tensor loss_inner_max_bce(const nn::Tensor& det_logits);

// softmax cross entropy of the aggregated detector logits against y; maximized
// by the cross-entropy attack variant on generative detection
nn::Tensor loss_detector_xent(const nn::Tensor& h_logits, const std::vector<int>& y);

// ---- objective builders: bind models and labels into engine callbacks ----

// Eq-style classifier-only attack (minimize)
BatchLoss classifier_attack(const models::Model& f, std::vector<int> y);
// detectors-only attack (minimize)
BatchLoss detectors_attack(std::vector<models::Model> detectors, std::vector<int> y);
// combined piecewise attack on the integrated system (minimize)
BatchLoss combined_attack(const models::Model& f, std::vector<models::Model> detectors, std::vector<int> y);
// combined surrogate-classifier attack (minimize)
BatchLoss combined_surrogate_attack(const models::Model& f, std::vector<models::Model> detectors, std::vector<int> y);
// cross-entropy variant of the detectors attack (maximize)
BatchLoss detectors_xent_attack(std::vector<models::Model> detectors, std::vector<int> y);
// raise one detector's logit everywhere (minimize)
BatchLoss targeted_detector_attack(const models::Model& detector);
// targeted attack on the generative classifier: raise detector t's logit (minimize)
BatchLoss targeted_generative_attack(std::vector<models::Model> detectors, std::vector<int> targets);
// inner maximization of detector training (maximize)
BatchLoss detector_bce_attack(const models::Model& detector);
// distortion-protocol loss with a squared-distance penalty (minimize)
BatchLoss penalized_detectors_attack(std::vector<models::Model> detectors, std::vector<int> y, nn::Tensor x_orig,
                                     double c);

}  // namespace advdet::attacks
