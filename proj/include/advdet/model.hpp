#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "advdet/dataset.hpp"
#include "advdet/tensor.hpp"

namespace advdet::models {

enum class ArchKind { MnistConv, Mlp };

// Network description. MnistConv is the fixed conv(5x5,32) -> pool ->
// conv(5x5,64) -> pool -> fc(1024) -> fc(output_width) topology on 28x28x1
// inputs; Mlp is a relu stack over explicit layer widths (first entry is the
// input dimension, last is the output width).
struct ArchSpec {
  ArchKind kind = ArchKind::Mlp;
  std::vector<int> mlp_widths;
  int output_width = 1;  // MnistConv only; Mlp takes it from mlp_widths

  static ArchSpec mnist_conv(int output_width) {
    ArchSpec s;
    s.kind = ArchKind::MnistConv;
    s.output_width = output_width;
    return s;
  }
  static ArchSpec mlp(std::vector<int> widths) {
    ArchSpec s;
    s.kind = ArchKind::Mlp;
    s.mlp_widths = std::move(widths);
    s.output_width = s.mlp_widths.back();
    return s;
  }

  int input_dim() const { return kind == ArchKind::MnistConv ? 28 * 28 : mlp_widths.front(); }
  int out_width() const { return kind == ArchKind::MnistConv ? output_width : mlp_widths.back(); }
  bool operator==(const ArchSpec&) const = default;
};

struct Model {
  ArchSpec spec;
  std::vector<std::pair<std::string, nn::Tensor>> params;  // fixed order

  int output_width() const { return spec.out_width(); }
  nn::Tensor param(const std::string& name) const;
  Model clone() const;  // deep copy of parameter values
  void set_params_requires_grad(bool rg);
  void zero_param_grads();
};

// Fan-in scaled uniform weights (+-1/sqrt(fan_in)), zero biases, deterministic
// in the seed.
Model init(const ArchSpec& spec, std::uint64_t seed);

// Pre-activation outputs, [B, output_width]. Accepts [B, input_dim] rows
// (MnistConv reshapes to 28x28x1 internally). Pure in (params, batch).
nn::Tensor logits(const Model& m, const nn::Tensor& batch);

struct ClassifierTrainConfig {
  int epochs = 5;
  int batch_size = 128;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct ClassifierTrainResult {
  Model model;
  double final_train_loss = 0.0;
  double test_accuracy = -1.0;  // -1 when no test set given
};

// Plain softmax cross-entropy training with Adam; no augmentation.
ClassifierTrainResult train_softmax_classifier(const Dataset& train, const Dataset* test, const ArchSpec& spec,
                                               const ClassifierTrainConfig& cfg);

double classifier_accuracy(const Model& m, const Dataset& data);

}  // namespace advdet::models
