#include "advdet/experiment.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace advdet::io {

std::string config_hash(const nlohmann::json& config) {
  const std::string canon = config.dump();  // nlohmann keeps object keys sorted
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void atomic_write(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("atomic_write: cannot open " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("atomic_write: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("atomic_write: rename to " + path + " failed");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_file: cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_json(nlohmann::json::parse(read_file(path)));
}

ExperimentConfig ExperimentConfig::from_json(nlohmann::json j) {
  if (!j.is_object()) throw std::runtime_error("experiment config: top level must be an object");
  ExperimentConfig cfg;
  cfg.j = std::move(j);
  return cfg;
}

nlohmann::json pgd_to_json(const attacks::PgdConfig& cfg) {
  nlohmann::json j;
  j["steps"] = cfg.steps;
  j["step_size"] = cfg.step_size;
  j["rule"] = cfg.rule == attacks::StepRule::Adam ? "adam" : "nsd";
  j["random_start"] = cfg.random_start;
  j["restarts"] = cfg.restarts;
  j["clip"] = {cfg.clip.lo, cfg.clip.hi};
  j["seed"] = cfg.seed;
  return j;
}

attacks::PgdConfig pgd_from_json(const nlohmann::json& j) {
  attacks::PgdConfig cfg;
  cfg.steps = j.at("steps").get<int>();
  cfg.step_size = j.at("step_size").get<double>();
  const std::string rule = j.value("rule", "adam");
  if (rule == "adam")
    cfg.rule = attacks::StepRule::Adam;
  else if (rule == "nsd")
    cfg.rule = attacks::StepRule::NormalizedSteepestDescent;
  else
    throw std::runtime_error("pgd config: unknown rule " + rule);
  cfg.random_start = j.value("random_start", false);
  cfg.restarts = j.value("restarts", 1);
  if (j.contains("clip")) {
    cfg.clip.lo = j["clip"][0].get<double>();
    cfg.clip.hi = j["clip"][1].get<double>();
  }
  cfg.seed = j.value("seed", std::uint64_t{0});
  return cfg;
}

nlohmann::json ball_to_json(const attacks::NormBall& ball) {
  nlohmann::json j;
  j["norm"] = ball.p == attacks::Norm::L2 ? "l2" : "linf";
  j["eps"] = ball.eps;
  return j;
}

attacks::NormBall ball_from_json(const nlohmann::json& j) {
  attacks::NormBall b;
  const std::string norm = j.at("norm").get<std::string>();
  if (norm == "l2")
    b.p = attacks::Norm::L2;
  else if (norm == "linf")
    b.p = attacks::Norm::Linf;
  else
    throw std::runtime_error("norm ball: unknown norm " + norm);
  b.eps = j.at("eps").get<double>();
  if (b.eps < 0.0) throw std::runtime_error("norm ball: eps must be >= 0");
  return b;
}

nlohmann::json aat_to_json(const aat::AatConfig& cfg) {
  nlohmann::json j;
  j["arch"] = cfg.arch.kind == models::ArchKind::MnistConv ? "mnist-conv" : "mlp";
  j["mlp_widths"] = cfg.arch.mlp_widths;
  j["batch_total"] = cfg.batch_total;
  j["ball"] = ball_to_json(cfg.train_attack.ball);
  j["train_pgd"] = pgd_to_json(cfg.train_attack.pgd);
  j["val_pgd"] = pgd_to_json(cfg.val_attack);
  j["epochs"] = cfg.epochs;
  j["lr"] = cfg.optimizer.lr;
  j["seed"] = cfg.seed;
  j["val_max_negatives"] = cfg.val_max_negatives;
  return j;
}

aat::AatConfig aat_from_json(const nlohmann::json& j) {
  aat::AatConfig cfg;
  const std::string arch = j.value("arch", "mnist-conv");
  if (arch == "mnist-conv")
    cfg.arch = models::ArchSpec::mnist_conv(1);
  else
    cfg.arch = models::ArchSpec::mlp(j.at("mlp_widths").get<std::vector<int>>());
  cfg.batch_total = j.value("batch_total", 320);
  cfg.train_attack.ball = ball_from_json(j.at("ball"));
  cfg.train_attack.pgd = pgd_from_json(j.at("train_pgd"));
  cfg.val_attack = pgd_from_json(j.at("val_pgd"));
  cfg.epochs = j.at("epochs").get<int>();
  cfg.optimizer.lr = j.value("lr", 1e-4);
  cfg.seed = j.value("seed", std::uint64_t{0});
  cfg.val_max_negatives = j.value("val_max_negatives", 0);
  return cfg;
}

nlohmann::json attack_manifest(const std::string& loss_kind, const attacks::NormBall* ball,
                               const attacks::PgdConfig& cfg) {
  nlohmann::json j;
  j["loss"] = loss_kind;
  j["ball"] = ball ? ball_to_json(*ball) : nlohmann::json(nullptr);
  j["pgd"] = pgd_to_json(cfg);
  return j;
}

void write_tensor_dump(const std::string& path, const nn::Tensor& t) {
  std::ostringstream os;
  const std::uint32_t nd = static_cast<std::uint32_t>(t.ndim());
  os.write(reinterpret_cast<const char*>(&nd), sizeof(nd));
  for (const auto d : t.shape()) os.write(reinterpret_cast<const char*>(&d), sizeof(d));
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  atomic_write(path, os.str());
}

nn::Tensor read_tensor_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_tensor_dump: cannot open " + path);
  std::uint32_t nd = 0;
  in.read(reinterpret_cast<char*>(&nd), sizeof(nd));
  nn::Shape shape(nd);
  for (auto& d : shape) in.read(reinterpret_cast<char*>(&d), sizeof(d));
  if (!in) throw std::runtime_error("read_tensor_dump: truncated header in " + path);
  std::vector<double> vals(static_cast<std::size_t>(nn::shape_numel(shape)));
  in.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(vals.size() * sizeof(double)));
  if (!in) throw std::runtime_error("read_tensor_dump: truncated payload in " + path);
  return nn::Tensor::from(std::move(shape), std::move(vals));
}

}  // namespace advdet::io
