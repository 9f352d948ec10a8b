#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "advdet/dataset.hpp"

namespace advdet::io {

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Big-endian IDX containers. Image files carry magic 0x00000803 and scale
// bytes by 1/255 into [0,1]; label files carry 0x00000801.
nn::Tensor load_idx_images(const std::string& path);
std::vector<int> load_idx_labels(const std::string& path);

void write_idx_images(const std::string& path, const nn::Tensor& images, int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

enum class MnistSplit { Train50k, Val10k, Test };

struct MnistSet {
  Dataset data;
  MnistSplit split;
};

// Standard file names inside `dir`: train-images-idx3-ubyte,
// train-labels-idx1-ubyte, t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte.
// The training order provides the first-50k/last-10k train/validation split.
MnistSet load_mnist(const std::string& dir, MnistSplit split);

Dataset filter_classes(const Dataset& d, const std::vector<int>& classes, std::int64_t max_n = 0);

// Desk-scale preset: classes {0,1}, 10k train rows, 2k validation rows, the
// filtered test set. Relabels to {0,1} order (identity here) and sets
// num_classes accordingly.
struct MiniDataset {
  Dataset train;
  Dataset val;
  Dataset test;
};

MiniDataset load_mnist_mini(const std::string& dir);

}  // namespace advdet::io
