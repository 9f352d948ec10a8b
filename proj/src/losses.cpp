#include "advdet/losses.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

#include "advdet/ops.hpp"

namespace advdet::attacks {

namespace {

std::vector<int> slice_labels(const std::vector<int>& y, std::int64_t offset, std::int64_t count,
                              const char* who) {
  if (offset < 0 || offset + count > static_cast<std::int64_t>(y.size()))
    throw std::out_of_range(std::string(who) + ": label window [" + std::to_string(offset) + "," +
                            std::to_string(offset + count) + ") outside " + std::to_string(y.size()) + " labels");
  return {y.begin() + offset, y.begin() + offset + count};
}

}  // namespace

nn::Tensor loss_classifier_cw(const nn::Tensor& f_logits, const std::vector<int>& y) {
  return nn::sub(nn::gather_col(f_logits, y), nn::row_max_excluding(f_logits, y));
}

nn::Tensor loss_detector(const nn::Tensor& h_logits, const std::vector<int>& y) {
  return nn::neg(nn::row_max_excluding(h_logits, y));
}

nn::Tensor loss_surrogate_combined(const nn::Tensor& f_logits, const nn::Tensor& h_logits,
                                   const std::vector<int>& y) {
  nn::Tensor f_top = nn::row_max(f_logits);
  nn::Tensor extra = nn::mul(nn::add_scalar(nn::neg(nn::row_max_excluding(h_logits, y)), 1.0), f_top);
  nn::Tensor g_top = nn::maximum(f_top, extra);
  return nn::sub(g_top, nn::row_max_excluding(f_logits, y));
}

nn::Tensor loss_piecewise_combined(const nn::Tensor& f_logits, const nn::Tensor& h_logits,
                                   const std::vector<int>& y) {
  const auto B = f_logits.dim(0), K = f_logits.dim(1);
  if (static_cast<std::int64_t>(y.size()) != B)
    throw nn::ShapeError("loss_piecewise_combined", "label count does not match rows");
  // branch test on current values: still classified as y (>= keeps the
  // boundary in the classifier branch)
  std::vector<std::uint8_t> still_correct(static_cast<std::size_t>(B));
  for (std::int64_t i = 0; i < B; ++i) {
    const double* row = f_logits.data() + i * K;
    const int yi = y[static_cast<std::size_t>(i)];
    double best_other = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < K; ++j)
      if (j != yi) best_other = std::max(best_other, row[j]);
    still_correct[static_cast<std::size_t>(i)] = row[yi] >= best_other ? 1 : 0;
  }
  return nn::select(still_correct, loss_classifier_cw(f_logits, y), loss_detector(h_logits, y));
}

nn::Tensor loss_targeted_logit(const nn::Tensor& logits, const std::vector<int>& targets) {
  return nn::neg(nn::gather_col(logits, targets));
}

nn::Tensor loss_penalized_detector(const nn::Tensor& h_logits, const std::vector<int>& y, const nn::Tensor& x,
                                   const nn::Tensor& x_orig, double c) {
  if (c < 0.0) throw std::invalid_argument("loss_penalized_detector: c must be >= 0");
  nn::Tensor base = loss_detector(h_logits, y);
  if (c == 0.0) return base;
  return nn::add(base, nn::scale(nn::row_sumsq(nn::sub(x, x_orig)), c));
}

nn::Tensor loss_inner_max_bce(const nn::Tensor& det_logits) {
  return nn::bce_with_logits(det_logits, std::vector<double>(static_cast<std::size_t>(det_logits.numel()), 0.0));
}

nn::Tensor loss_detector_xent(const nn::Tensor& h_logits, const std::vector<int>& y) {
  return nn::softmax_xent(h_logits, y);
}

BatchLoss classifier_attack(const models::Model& f, std::vector<int> y) {
  return [f, y = std::move(y)](const nn::Tensor& x, std::int64_t off) {
    return loss_classifier_cw(models::logits(f, x), slice_labels(y, off, x.dim(0), "classifier_attack"));
  };
}

BatchLoss detectors_attack(std::vector<models::Model> detectors, std::vector<int> y) {
  return [d = std::move(detectors), y = std::move(y)](const nn::Tensor& x, std::int64_t off) {
    return loss_detector(aggregate_detector(d, x), slice_labels(y, off, x.dim(0), "detectors_attack"));
  };
}

BatchLoss combined_attack(const models::Model& f, std::vector<models::Model> detectors, std::vector<int> y) {
  return [f, d = std::move(detectors), y = std::move(y)](const nn::Tensor& x, std::int64_t off) {
    const auto yy = slice_labels(y, off, x.dim(0), "combined_attack");
    return loss_piecewise_combined(models::logits(f, x), aggregate_detector(d, x), yy);
  };
}

BatchLoss combined_surrogate_attack(const models::Model& f, std::vector<models::Model> detectors,
                                    std::vector<int> y) {
  return [f, d = std::move(detectors), y = std::move(y)](const nn::Tensor& x, std::int64_t off) {
    const auto yy = slice_labels(y, off, x.dim(0), "combined_surrogate_attack");
    return loss_surrogate_combined(models::logits(f, x), aggregate_detector(d, x), yy);
  };
}

BatchLoss detectors_xent_attack(std::vector<models::Model> detectors, std::vector<int> y) {
  return [d = std::move(detectors), y = std::move(y)](const nn::Tensor& x, std::int64_t off) {
    return loss_detector_xent(aggregate_detector(d, x), slice_labels(y, off, x.dim(0), "detectors_xent_attack"));
  };
}

BatchLoss targeted_detector_attack(const models::Model& detector) {
  return [detector](const nn::Tensor& x, std::int64_t) {
    nn::Tensor z = models::logits(detector, x);
    return nn::neg(nn::reshape(z, {z.dim(0)}));
  };
}

BatchLoss targeted_generative_attack(std::vector<models::Model> detectors, std::vector<int> targets) {
  return [d = std::move(detectors), t = std::move(targets)](const nn::Tensor& x, std::int64_t off) {
    return loss_targeted_logit(aggregate_detector(d, x), slice_labels(t, off, x.dim(0), "targeted_generative_attack"));
  };
}

BatchLoss detector_bce_attack(const models::Model& detector) {
  return [detector](const nn::Tensor& x, std::int64_t) {
    return loss_inner_max_bce(models::logits(detector, x));
  };
}

BatchLoss penalized_detectors_attack(std::vector<models::Model> detectors, std::vector<int> y, nn::Tensor x_orig,
                                     double c) {
  return [d = std::move(detectors), y = std::move(y), x_orig, c](const nn::Tensor& x, std::int64_t off) {
    const auto b = x.dim(0);
    const auto yy = slice_labels(y, off, b, "penalized_detectors_attack");
    // window of the reference batch matching this chunk
    const auto D = x_orig.dim(1);
    std::vector<double> ref(static_cast<std::size_t>(b * D));
    std::copy(x_orig.data() + off * D, x_orig.data() + (off + b) * D, ref.begin());
    nn::Tensor ref_t = nn::Tensor::from({b, D}, std::move(ref));
    return loss_penalized_detector(aggregate_detector(d, x), yy, x, ref_t, c);
  };
}

}  // namespace advdet::attacks
