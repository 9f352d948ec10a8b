#include "advdet/protocols.hpp"

#include <algorithm>
#include <cmath>

#include "advdet/experiment.hpp"
#include "advdet/rng.hpp"

namespace advdet::protocols {

namespace {

aat::AatConfig density_train_config(const Density1dConfig& cfg, double eps) {
  aat::AatConfig tc;
  tc.arch = models::ArchSpec::mlp(cfg.arch_widths);
  tc.batch_total = cfg.batch_total;
  tc.train_attack.ball = cfg.ball;
  tc.train_attack.ball.eps = eps;
  tc.train_attack.pgd.steps = cfg.attack_steps;
  tc.train_attack.pgd.step_size = cfg.attack_step_size;
  tc.val_attack = tc.train_attack.pgd;
  tc.epochs = cfg.epochs;
  tc.optimizer.lr = cfg.lr;
  tc.seed = cfg.seed;
  return tc;
}

// peaks at least min_sep apart, strongest first
std::vector<double> separated_modes(const std::vector<double>& grid, const std::vector<double>& density,
                                    double min_sep) {
  std::vector<double> all = synth::density_modes(grid, density);
  std::vector<double> kept;
  for (double m : all) {
    bool clashes = false;
    for (double k : kept) clashes = clashes || std::abs(k - m) < min_sep;
    if (!clashes) kept.push_back(m);
  }
  return kept;
}

nlohmann::json density_config_json(const Density1dConfig& cfg) {
  nlohmann::json j;
  j["arch_widths"] = cfg.arch_widths;
  j["ball"] = io::ball_to_json(cfg.ball);
  j["attack_steps"] = cfg.attack_steps;
  j["attack_step_size"] = cfg.attack_step_size;
  j["epochs"] = cfg.epochs;
  j["batch_total"] = cfg.batch_total;
  j["lr"] = cfg.lr;
  j["grid_points"] = cfg.grid_points;
  j["seed"] = cfg.seed;
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : cfg.mixture.components) comps.push_back({{"mean", c.mean}, {"std", c.std}, {"count", c.count}});
  j["mixture"] = comps;
  j["negative_count"] = cfg.mixture.negative_count;
  return j;
}

nlohmann::json field_config_json(const Field2dConfig& cfg) {
  nlohmann::json j;
  j["kind"] = static_cast<int>(cfg.data.kind);
  j["points_per_class"] = cfg.data.points_per_class;
  j["noise"] = cfg.data.noise;
  j["heldout_per_class"] = cfg.heldout_per_class;
  j["arch_widths"] = cfg.arch_widths;
  j["ball"] = io::ball_to_json(cfg.ball);
  j["attack_steps"] = cfg.attack_steps;
  j["attack_step_size"] = cfg.attack_step_size;
  j["epochs"] = cfg.epochs;
  j["batch_total"] = cfg.batch_total;
  j["lr"] = cfg.lr;
  j["grid"] = {cfg.grid_nx, cfg.grid_ny};
  j["bbox"] = {cfg.x0, cfg.x1, cfg.y0, cfg.y1};
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace

Density1dResult run_density_1d(const Density1dConfig& cfg) {
  Dataset train = synth::sample_1d(cfg.mixture, cfg.seed);
  Dataset val = synth::sample_1d(cfg.mixture, mix_seed(cfg.seed, 0x1DA, 1));

  aat::AatConfig adv_cfg = density_train_config(cfg, cfg.ball.eps);
  aat::TrainResult adv = aat::train_detector(train, val, 1, adv_cfg);

  aat::AatConfig ord_cfg = density_train_config(cfg, 0.0);
  aat::TrainResult ordinary = aat::train_detector(train, val, 1, ord_cfg);

  Density1dResult res;
  res.grid = synth::uniform_grid(0.0, 1.0, cfg.grid_points);
  res.density_aat = synth::estimate_density_1d(adv.best_model, res.grid);
  res.density_ordinary = synth::estimate_density_1d(ordinary.best_model, res.grid);
  res.density_true.resize(res.grid.size());
  for (std::size_t i = 0; i < res.grid.size(); ++i) res.density_true[i] = synth::mixture_pdf(cfg.mixture, res.grid[i]);
  res.tv_aat = synth::density_distance(res.grid, res.density_aat, res.density_true);
  res.tv_ordinary = synth::density_distance(res.grid, res.density_ordinary, res.density_true);
  res.modes_aat = separated_modes(res.grid, res.density_aat, 0.05);
  return res;
}

void write_density_1d_artifacts(const std::string& dir, const Density1dConfig& cfg, const Density1dResult& res) {
  const nlohmann::json cj = density_config_json(cfg);
  const std::string hash = io::config_hash(cj);
  synth::write_density_csv(dir + "/density_aat.csv", res.grid, res.density_aat, hash);
  synth::write_density_csv(dir + "/density_ordinary.csv", res.grid, res.density_ordinary, hash);
  synth::write_density_csv(dir + "/density_true.csv", res.grid, res.density_true, hash);
  nlohmann::json summary;
  summary["config"] = cj;
  summary["config_hash"] = hash;
  summary["tv_aat"] = res.tv_aat;
  summary["tv_ordinary"] = res.tv_ordinary;
  summary["modes_aat"] = std::vector<double>(res.modes_aat.begin(),
                                             res.modes_aat.begin() + std::min<std::size_t>(4, res.modes_aat.size()));
  io::atomic_write(dir + "/density_summary.json", summary.dump(2) + "\n");
}

Field2dResult run_field_2d(const Field2dConfig& cfg) {
  Dataset train = synth::sample_2d(cfg.data);
  synth::Toy2DSpec val_spec = cfg.data;
  val_spec.seed = cfg.data.seed + 1;
  Dataset val = synth::sample_2d(val_spec);
  synth::Toy2DSpec held_spec = cfg.data;
  held_spec.points_per_class = cfg.heldout_per_class;
  held_spec.seed = cfg.data.seed + 2;
  Dataset heldout = synth::sample_2d(held_spec);

  aat::AatConfig tc;
  tc.arch = models::ArchSpec::mlp(cfg.arch_widths);
  tc.batch_total = cfg.batch_total;
  tc.train_attack.ball = cfg.ball;
  tc.train_attack.pgd.steps = cfg.attack_steps;
  tc.train_attack.pgd.step_size = cfg.attack_step_size;
  tc.train_attack.pgd.clip = {-10.0, 10.0};  // planar data is not pixel-bounded
  tc.val_attack = tc.train_attack.pgd;
  tc.epochs = cfg.epochs;
  tc.optimizer.lr = cfg.lr;
  tc.seed = cfg.seed;
  aat::TrainResult trained = aat::train_detector(train, val, 1, tc);

  Field2dResult res;
  res.field = synth::map_sigmoid_field(trained.best_model, cfg.x0, cfg.x1, cfg.y0, cfg.y1, cfg.grid_nx, cfg.grid_ny);

  // held-out in-class mean sigmoid
  Dataset held_in = heldout.subset(heldout.indices_of_class(1));
  models::Model det = trained.best_model;
  det.set_params_requires_grad(false);
  {
    nn::Tensor z = models::logits(det, held_in.images);
    double acc = 0.0;
    for (std::int64_t i = 0; i < z.numel(); ++i) {
      const double v = z.data()[i];
      acc += v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    res.inclass_mean_sigmoid = acc / static_cast<double>(z.numel());
  }

  // far field: grid points farther than 2*eps from every in-class training point
  Dataset train_in = train.subset(train.indices_of_class(1));
  const double far = 2.0 * cfg.ball.eps;
  const double far_sq = far * far;
  double acc = 0.0;
  std::int64_t count = 0;
  for (int j = 0; j < res.field.ny; ++j)
    for (int i = 0; i < res.field.nx; ++i) {
      const double px = res.field.x_at(i), py = res.field.y_at(j);
      bool is_far = true;
      for (std::int64_t t = 0; t < train_in.size() && is_far; ++t) {
        const double dx = px - train_in.images.data()[t * 2];
        const double dy = py - train_in.images.data()[t * 2 + 1];
        is_far = dx * dx + dy * dy > far_sq;
      }
      if (is_far) {
        acc += res.field.sigmoid[static_cast<std::size_t>(j) * cfg.grid_nx + static_cast<std::size_t>(i)];
        ++count;
      }
    }
  res.farfield_points = count;
  res.farfield_mean_sigmoid = count > 0 ? acc / static_cast<double>(count) : 0.0;
  return res;
}

void write_field_2d_artifacts(const std::string& dir, const Field2dConfig& cfg, const Field2dResult& res) {
  const nlohmann::json cj = field_config_json(cfg);
  const std::string hash = io::config_hash(cj);
  synth::write_field_csv(dir + "/field_2d.csv", res.field, hash);
  nlohmann::json summary;
  summary["config"] = cj;
  summary["config_hash"] = hash;
  summary["inclass_mean_sigmoid"] = res.inclass_mean_sigmoid;
  summary["farfield_mean_sigmoid"] = res.farfield_mean_sigmoid;
  summary["farfield_points"] = res.farfield_points;
  io::atomic_write(dir + "/field_summary.json", summary.dump(2) + "\n");
}

aat::AatConfig mini_detector_config(std::uint64_t seed) {
  aat::AatConfig cfg;
  cfg.arch = models::ArchSpec::mnist_conv(1);
  cfg.batch_total = 128;
  cfg.train_attack.ball = {attacks::Norm::Linf, 0.3};
  cfg.train_attack.pgd.steps = 100;
  cfg.train_attack.pgd.step_size = 0.01;
  cfg.val_attack = cfg.train_attack.pgd;
  cfg.val_attack.steps = 200;
  cfg.epochs = 1;
  cfg.optimizer.lr = 1e-3;
  cfg.seed = seed;
  cfg.val_max_negatives = 96;
  return cfg;
}

std::vector<Table3Preset> table3_presets() {
  auto make = [](std::string name, attacks::Norm p, double eps, int tsteps, double tstep, int vsteps, double vstep) {
    Table3Preset preset;
    preset.name = std::move(name);
    preset.ball = {p, eps};
    preset.train.steps = tsteps;
    preset.train.step_size = tstep;
    preset.val.steps = vsteps;
    preset.val.step_size = vstep;
    return preset;
  };
  return {
      make("linf-0.3", attacks::Norm::Linf, 0.3, 100, 0.01, 200, 0.01),
      make("linf-0.5", attacks::Norm::Linf, 0.5, 100, 0.01, 200, 0.01),
      make("l2-2.5", attacks::Norm::L2, 2.5, 100, 0.1, 200, 0.1),
      make("l2-5.0", attacks::Norm::L2, 5.0, 200, 0.1, 200, 0.1),
  };
}

nn::Tensor class_conditional_gaussian_seed(const Dataset& data, int klass, int count, std::uint64_t seed) {
  const auto idx = data.indices_of_class(klass);
  if (idx.empty()) throw std::invalid_argument("class_conditional_gaussian_seed: class absent from data");
  const auto D = data.feature_dim();
  std::vector<double> mean(static_cast<std::size_t>(D), 0.0), var(static_cast<std::size_t>(D), 0.0);
  for (const auto i : idx)
    for (std::int64_t d = 0; d < D; ++d) mean[static_cast<std::size_t>(d)] += data.images.data()[i * D + d];
  for (auto& m : mean) m /= static_cast<double>(idx.size());
  for (const auto i : idx)
    for (std::int64_t d = 0; d < D; ++d) {
      const double diff = data.images.data()[i * D + d] - mean[static_cast<std::size_t>(d)];
      var[static_cast<std::size_t>(d)] += diff * diff;
    }
  for (auto& v : var) v /= static_cast<double>(idx.size());

  Rng rng(mix_seed(seed, 0x5EEDu, static_cast<std::uint64_t>(klass)));
  std::vector<double> out(static_cast<std::size_t>(count) * static_cast<std::size_t>(D));
  for (int n = 0; n < count; ++n)
    for (std::int64_t d = 0; d < D; ++d)
      out[static_cast<std::size_t>(n * D + d)] =
          std::clamp(mean[static_cast<std::size_t>(d)] +
                         std::sqrt(var[static_cast<std::size_t>(d)]) * rng.normal(),
                     0.0, 1.0);
  return nn::Tensor::from({count, D}, std::move(out));
}

}  // namespace advdet::protocols
