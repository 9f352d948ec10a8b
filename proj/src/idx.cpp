#include "advdet/mnist_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace advdet::io {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IdxError(path + ": truncated while reading " + what);
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

nn::Tensor load_idx_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(path + ": cannot open");
  const auto magic = read_be32(in, path, "magic");
  if (magic != kImageMagic)
    throw IdxError(path + ": wrong image magic 0x" + [&] {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%08x", magic);
      return std::string(buf);
    }());
  const auto n = read_be32(in, path, "count");
  const auto rows = read_be32(in, path, "rows");
  const auto cols = read_be32(in, path, "cols");
  const std::size_t total = static_cast<std::size_t>(n) * rows * cols;
  std::vector<unsigned char> bytes(total);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(total));
  if (!in) throw IdxError(path + ": truncated pixel payload");
  std::vector<double> vals(total);
  for (std::size_t i = 0; i < total; ++i) vals[i] = static_cast<double>(bytes[i]) / 255.0;
  return nn::Tensor::from({static_cast<std::int64_t>(n), static_cast<std::int64_t>(rows * cols)}, std::move(vals));
}

std::vector<int> load_idx_labels(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(path + ": cannot open");
  const auto magic = read_be32(in, path, "magic");
  if (magic != kLabelMagic) throw IdxError(path + ": wrong label magic");
  const auto n = read_be32(in, path, "count");
  std::vector<unsigned char> bytes(n);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
  if (!in) throw IdxError(path + ": truncated label payload");
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(bytes[i]);
  return labels;
}

void write_idx_images(const std::string& path, const nn::Tensor& images, int rows, int cols) {
  if (images.ndim() != 2 || images.dim(1) != static_cast<std::int64_t>(rows) * cols)
    throw IdxError(path + ": image tensor does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IdxError(path + ": cannot open for writing");
  write_be32(out, kImageMagic);
  write_be32(out, static_cast<std::uint32_t>(images.dim(0)));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  std::vector<unsigned char> bytes(images.values().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(images.data()[i], 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IdxError(path + ": write failed");
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IdxError(path + ": cannot open for writing");
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  std::vector<unsigned char> bytes(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) bytes[i] = static_cast<unsigned char>(labels[i]);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IdxError(path + ": write failed");
}

MnistSet load_mnist(const std::string& dir, MnistSplit split) {
  const bool test = split == MnistSplit::Test;
  const std::string stem = test ? "t10k" : "train";
  nn::Tensor images = load_idx_images(dir + "/" + stem + "-images-idx3-ubyte");
  std::vector<int> labels = load_idx_labels(dir + "/" + stem + "-labels-idx1-ubyte");
  if (images.dim(0) != static_cast<std::int64_t>(labels.size()))
    throw IdxError(dir + ": image/label counts differ for split " + stem);

  Dataset d;
  d.images = std::move(images);
  d.labels = std::move(labels);
  d.num_classes = 10;
  if (!test) {
    const std::int64_t n = d.size();
    const std::int64_t val_n = std::min<std::int64_t>(10000, n);
    const std::int64_t train_n = n - val_n;
    std::vector<std::int64_t> idx;
    if (split == MnistSplit::Train50k)
      for (std::int64_t i = 0; i < train_n; ++i) idx.push_back(i);
    else
      for (std::int64_t i = train_n; i < n; ++i) idx.push_back(i);
    d = d.subset(idx);
  }
  return {std::move(d), split};
}

Dataset filter_classes(const Dataset& d, const std::vector<int>& classes, std::int64_t max_n) {
  std::vector<std::int64_t> idx;
  for (std::int64_t i = 0; i < d.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), d.labels[static_cast<std::size_t>(i)]) == classes.end()) continue;
    idx.push_back(i);
    if (max_n > 0 && static_cast<std::int64_t>(idx.size()) == max_n) break;
  }
  Dataset out = d.subset(idx);
  out.num_classes = static_cast<int>(classes.size());
  return out;
}

MiniDataset load_mnist_mini(const std::string& dir) {
  MiniDataset mini;
  mini.train = filter_classes(load_mnist(dir, MnistSplit::Train50k).data, {0, 1}, 10000);
  mini.val = filter_classes(load_mnist(dir, MnistSplit::Val10k).data, {0, 1}, 2000);
  mini.test = filter_classes(load_mnist(dir, MnistSplit::Test).data, {0, 1}, 0);
  return mini;
}

}  // namespace advdet::io
