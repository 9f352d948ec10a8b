#include "advdet/model.hpp"

#include <cmath>
#include <stdexcept>

#include "advdet/ops.hpp"
#include "advdet/optim.hpp"
#include "advdet/rng.hpp"

namespace advdet::models {

namespace {

nn::Tensor uniform_fanin(nn::Shape shape, std::int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> vals(static_cast<std::size_t>(nn::shape_numel(shape)));
  for (auto& v : vals) v = rng.uniform(-bound, bound);
  return nn::Tensor::from(std::move(shape), std::move(vals));
}

void check_batch(const Model& m, const nn::Tensor& batch) {
  if (batch.ndim() != 2 || batch.dim(1) != m.spec.input_dim())
    throw nn::ShapeError("logits", "batch shape " + nn::shape_str(batch.shape()) + " does not match input dim " +
                                       std::to_string(m.spec.input_dim()));
}

}  // namespace

nn::Tensor Model::param(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  throw std::out_of_range("Model::param: no parameter named " + name);
}

Model Model::clone() const {
  Model out;
  out.spec = spec;
  out.params.reserve(params.size());
  for (const auto& [n, t] : params) out.params.emplace_back(n, t.detached());
  return out;
}

void Model::set_params_requires_grad(bool rg) {
  for (auto& [n, t] : params) t.set_requires_grad(rg);
}

void Model::zero_param_grads() {
  for (auto& [n, t] : params) t.zero_grad();
}

Model init(const ArchSpec& spec, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xA11));
  Model m;
  m.spec = spec;
  if (spec.kind == ArchKind::MnistConv) {
    m.params.emplace_back("conv1_w", uniform_fanin({5, 5, 1, 32}, 5 * 5 * 1, rng));
    m.params.emplace_back("conv1_b", nn::Tensor::zeros({32}));
    m.params.emplace_back("conv2_w", uniform_fanin({5, 5, 32, 64}, 5 * 5 * 32, rng));
    m.params.emplace_back("conv2_b", nn::Tensor::zeros({64}));
    m.params.emplace_back("fc1_w", uniform_fanin({7 * 7 * 64, 1024}, 7 * 7 * 64, rng));
    m.params.emplace_back("fc1_b", nn::Tensor::zeros({1024}));
    m.params.emplace_back("fc2_w", uniform_fanin({1024, spec.output_width}, 1024, rng));
    m.params.emplace_back("fc2_b", nn::Tensor::zeros({spec.output_width}));
  } else {
    if (spec.mlp_widths.size() < 2) throw std::invalid_argument("init: mlp needs at least two widths");
    for (std::size_t i = 0; i + 1 < spec.mlp_widths.size(); ++i) {
      const auto in = spec.mlp_widths[i], out = spec.mlp_widths[i + 1];
      m.params.emplace_back("layer" + std::to_string(i) + "_w", uniform_fanin({in, out}, in, rng));
      m.params.emplace_back("layer" + std::to_string(i) + "_b", nn::Tensor::zeros({out}));
    }
  }
  return m;
}

nn::Tensor logits(const Model& m, const nn::Tensor& batch) {
  check_batch(m, batch);
  const auto B = batch.dim(0);
  if (m.spec.kind == ArchKind::MnistConv) {
    nn::Tensor h = nn::reshape(batch, {B, 28, 28, 1});
    h = nn::maxpool2x2(nn::relu(nn::conv2d_same(h, m.param("conv1_w"), m.param("conv1_b"))));
    h = nn::maxpool2x2(nn::relu(nn::conv2d_same(h, m.param("conv2_w"), m.param("conv2_b"))));
    h = nn::reshape(h, {B, 7 * 7 * 64});
    h = nn::relu(nn::affine(h, m.param("fc1_w"), m.param("fc1_b")));
    return nn::affine(h, m.param("fc2_w"), m.param("fc2_b"));
  }
  nn::Tensor h = batch;
  const std::size_t layers = m.spec.mlp_widths.size() - 1;
  for (std::size_t i = 0; i < layers; ++i) {
    h = nn::affine(h, m.param("layer" + std::to_string(i) + "_w"), m.param("layer" + std::to_string(i) + "_b"));
    if (i + 1 < layers) h = nn::relu(h);
  }
  return h;
}

double classifier_accuracy(const Model& m, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("classifier_accuracy: empty dataset");
  const std::int64_t chunk = 256;
  std::int64_t correct = 0;
  for (std::int64_t start = 0; start < data.size(); start += chunk) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = start; i < std::min(start + chunk, data.size()); ++i) idx.push_back(i);
    Dataset part = data.subset(idx);
    nn::Tensor z = logits(m, part.images);
    const auto K = z.dim(1);
    for (std::int64_t i = 0; i < part.size(); ++i) {
      const double* row = z.data() + i * K;
      std::int64_t best = 0;
      for (std::int64_t j = 1; j < K; ++j)
        if (row[j] > row[best]) best = j;
      if (static_cast<int>(best) == part.labels[static_cast<std::size_t>(i)]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

ClassifierTrainResult train_softmax_classifier(const Dataset& train, const Dataset* test, const ArchSpec& spec,
                                               const ClassifierTrainConfig& cfg) {
  if (train.size() == 0) throw std::invalid_argument("train_softmax_classifier: empty dataset");
  Model m = init(spec, cfg.seed);
  AdamConfig ac;
  ac.lr = cfg.lr;
  Adam opt(ac);
  Rng rng(mix_seed(cfg.seed, 0xC1A55));

  double last_loss = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto order = rng.sample_indices(train.size(), train.size());
    double epoch_loss = 0.0;
    std::int64_t batches = 0;
    for (std::int64_t start = 0; start < train.size(); start += cfg.batch_size) {
      std::vector<std::int64_t> idx(order.begin() + start,
                                    order.begin() + std::min<std::int64_t>(start + cfg.batch_size, train.size()));
      Dataset part = train.subset(idx);
      m.set_params_requires_grad(true);
      nn::Tensor loss = nn::mean(nn::softmax_xent(logits(m, part.images), part.labels));
      nn::backward(loss);
      opt.step(m);
      m.set_params_requires_grad(false);
      epoch_loss += loss.item();
      ++batches;
    }
    last_loss = epoch_loss / static_cast<double>(batches);
  }

  ClassifierTrainResult res;
  res.model = std::move(m);
  res.final_train_loss = last_loss;
  if (test && test->size() > 0) res.test_accuracy = classifier_accuracy(res.model, *test);
  return res;
}

}  // namespace advdet::models
