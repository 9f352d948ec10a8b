#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "advdet/tensor.hpp"

namespace advdet {

// Labeled sample set with flat row-major features, one row per sample.
struct Dataset {
  nn::Tensor images;        // [N, D], no grad
  std::vector<int> labels;  // N entries
  int num_classes = 10;

  std::int64_t size() const { return images.defined() ? images.dim(0) : 0; }
  std::int64_t feature_dim() const { return images.defined() ? images.dim(1) : 0; }

  Dataset subset(const std::vector<std::int64_t>& idx) const {
    const auto d = feature_dim();
    std::vector<double> vals(idx.size() * static_cast<std::size_t>(d));
    std::vector<int> labs(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= size()) throw std::out_of_range("Dataset::subset: index out of range");
      const double* src = images.data() + idx[i] * d;
      std::copy(src, src + d, vals.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(d)));
      labs[i] = labels[static_cast<std::size_t>(idx[i])];
    }
    Dataset out;
    out.images = nn::Tensor::from({static_cast<std::int64_t>(idx.size()), d}, std::move(vals));
    out.labels = std::move(labs);
    out.num_classes = num_classes;
    return out;
  }

  std::vector<std::int64_t> indices_of_class(int k) const {
    std::vector<std::int64_t> out;
    for (std::int64_t i = 0; i < size(); ++i)
      if (labels[static_cast<std::size_t>(i)] == k) out.push_back(i);
    return out;
  }

  std::vector<std::int64_t> indices_not_of_class(int k) const {
    std::vector<std::int64_t> out;
    for (std::int64_t i = 0; i < size(); ++i)
      if (labels[static_cast<std::size_t>(i)] != k) out.push_back(i);
    return out;
  }

  Dataset head(std::int64_t n) const {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = 0; i < std::min(n, size()); ++i) idx.push_back(i);
    return subset(idx);
  }
};

}  // namespace advdet
