#include "advdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "advdet/rng.hpp"

namespace advdet::synth {

Dataset sample_1d(const MixtureSpec1D& spec, std::uint64_t seed) {
  for (const auto& c : spec.components)
    if (c.std <= 0.0) throw std::invalid_argument("sample_1d: component std must be positive");
  Rng rng(mix_seed(seed, 0x1D));
  std::vector<double> xs;
  std::vector<int> labels;
  for (const auto& c : spec.components)
    for (int i = 0; i < c.count; ++i) {
      xs.push_back(c.mean + c.std * rng.normal());
      labels.push_back(1);
    }
  for (int i = 0; i < spec.negative_count; ++i) {
    xs.push_back(rng.uniform());
    labels.push_back(0);
  }
  Dataset d;
  const auto n = static_cast<std::int64_t>(xs.size());
  d.images = nn::Tensor::from({n, 1}, std::move(xs));
  d.labels = std::move(labels);
  d.num_classes = 2;
  return d;
}

std::vector<double> estimate_density_1d(const models::Model& detector, const std::vector<double>& grid) {
  if (grid.size() < 2) throw std::invalid_argument("estimate_density_1d: grid too small");
  std::vector<double> xs(grid);
  const auto n = static_cast<std::int64_t>(xs.size());
  nn::Tensor gx = nn::Tensor::from({n, 1}, std::move(xs));
  nn::Tensor z = models::logits(detector, gx);

  // shift by the max logit before exponentiating; the shift cancels in the
  // normalization
  double zmax = z.data()[0];
  for (std::int64_t i = 1; i < z.numel(); ++i) zmax = std::max(zmax, z.data()[i]);
  std::vector<double> density(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) density[i] = std::exp(z.data()[static_cast<std::int64_t>(i)] - zmax);

  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i)
    integral += 0.5 * (density[i] + density[i + 1]) * (grid[i + 1] - grid[i]);
  if (integral <= 0.0) throw std::runtime_error("estimate_density_1d: degenerate density");
  for (auto& v : density) v /= integral;
  return density;
}

double mixture_pdf(const MixtureSpec1D& spec, double x) {
  double total_count = 0.0;
  for (const auto& c : spec.components) total_count += static_cast<double>(c.count);
  double p = 0.0;
  for (const auto& c : spec.components) {
    const double zscore = (x - c.mean) / c.std;
    p += (static_cast<double>(c.count) / total_count) * std::exp(-0.5 * zscore * zscore) /
         (c.std * std::sqrt(2.0 * std::numbers::pi));
  }
  return p;
}

std::vector<double> uniform_grid(double lo, double hi, int points) {
  if (points < 2) throw std::invalid_argument("uniform_grid: need at least 2 points");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i)
    g[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  return g;
}

double density_distance(const std::vector<double>& grid, const std::vector<double>& p, const std::vector<double>& q) {
  if (grid.size() != p.size() || grid.size() != q.size())
    throw std::invalid_argument("density_distance: grid and densities must have matching sizes");
  double tv = 0.0;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double a = std::abs(p[i] - q[i]);
    const double b = std::abs(p[i + 1] - q[i + 1]);
    tv += 0.25 * (a + b) * (grid[i + 1] - grid[i]);
  }
  return tv;
}

std::vector<double> density_modes(const std::vector<double>& grid, const std::vector<double>& density) {
  if (grid.size() != density.size()) throw std::invalid_argument("density_modes: size mismatch");
  std::vector<std::pair<double, double>> peaks;  // (height, location)
  for (std::size_t i = 1; i + 1 < grid.size(); ++i)
    if (density[i] > density[i - 1] && density[i] >= density[i + 1]) peaks.emplace_back(density[i], grid[i]);
  std::sort(peaks.begin(), peaks.end(), std::greater<>());
  std::vector<double> out;
  out.reserve(peaks.size());
  for (const auto& [h, x] : peaks) out.push_back(x);
  return out;
}

Dataset sample_2d(const Toy2DSpec& spec) {
  if (spec.points_per_class <= 0) throw std::invalid_argument("sample_2d: points_per_class must be positive");
  Rng rng(mix_seed(spec.seed, 0x2D));
  std::vector<double> xs;
  std::vector<int> labels;
  const int n = spec.points_per_class;
  auto push = [&](double x, double y, int label) {
    xs.push_back(x);
    xs.push_back(y);
    labels.push_back(label);
  };
  switch (spec.kind) {
    case Toy2DKind::Circles:
      for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
        push(0.5 * std::cos(t) + spec.noise * rng.normal(), 0.5 * std::sin(t) + spec.noise * rng.normal(), 1);
      }
      for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
        push(1.5 * std::cos(t) + spec.noise * rng.normal(), 1.5 * std::sin(t) + spec.noise * rng.normal(), 0);
      }
      break;
    case Toy2DKind::Moons:
      for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(0.0, std::numbers::pi);
        push(std::cos(t) + spec.noise * rng.normal(), std::sin(t) + spec.noise * rng.normal(), 1);
      }
      for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(0.0, std::numbers::pi);
        push(1.0 - std::cos(t) + spec.noise * rng.normal(), 0.5 - std::sin(t) + spec.noise * rng.normal(), 0);
      }
      break;
    case Toy2DKind::GridScatter:
      // in-class points on a 5x5 lattice of tight clusters, out-class scattered
      for (int i = 0; i < n; ++i) {
        const int cell = static_cast<int>(rng.below(25));
        const double cx = -1.0 + 0.5 * static_cast<double>(cell % 5);
        const double cy = -1.0 + 0.5 * static_cast<double>(cell / 5);
        push(cx + 0.05 * rng.normal(), cy + 0.05 * rng.normal(), 1);
      }
      for (int i = 0; i < n; ++i) push(rng.uniform(-1.8, 1.8), rng.uniform(-1.8, 1.8), 0);
      break;
  }
  Dataset d;
  d.images = nn::Tensor::from({static_cast<std::int64_t>(labels.size()), 2}, std::move(xs));
  d.labels = std::move(labels);
  d.num_classes = 2;
  return d;
}

Field2D map_sigmoid_field(const models::Model& detector, double x0, double x1, double y0, double y1, int nx, int ny) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("map_sigmoid_field: grid too small");
  Field2D f;
  f.nx = nx;
  f.ny = ny;
  f.x0 = x0;
  f.x1 = x1;
  f.y0 = y0;
  f.y1 = y1;
  f.sigmoid.resize(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
  const int chunk = 4096;
  std::vector<double> pts;
  std::vector<std::size_t> where;
  auto flush = [&] {
    if (where.empty()) return;
    nn::Tensor batch = nn::Tensor::from({static_cast<std::int64_t>(where.size()), 2}, pts);
    nn::Tensor z = models::logits(detector, batch);
    for (std::size_t i = 0; i < where.size(); ++i) {
      const double zi = z.data()[static_cast<std::int64_t>(i)];
      f.sigmoid[where[i]] = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi)) : std::exp(zi) / (1.0 + std::exp(zi));
    }
    pts.clear();
    where.clear();
  };
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      pts.push_back(f.x_at(i));
      pts.push_back(f.y_at(j));
      where.push_back(static_cast<std::size_t>(j) * static_cast<std::size_t>(nx) + static_cast<std::size_t>(i));
      if (static_cast<int>(where.size()) == chunk) flush();
    }
  flush();
  return f;
}

void write_density_csv(const std::string& path, const std::vector<double>& grid, const std::vector<double>& density,
                       const std::string& config_hash) {
  if (grid.size() != density.size()) throw std::invalid_argument("write_density_csv: size mismatch");
  std::ostringstream os;
  if (!config_hash.empty()) os << "# config_hash=" << config_hash << "\n";
  os << "x,p\n";
  os.precision(17);
  for (std::size_t i = 0; i < grid.size(); ++i) os << grid[i] << "," << density[i] << "\n";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_density_csv: cannot open " + path);
  out << os.str();
}

void write_field_csv(const std::string& path, const Field2D& field, const std::string& config_hash) {
  std::ostringstream os;
  if (!config_hash.empty()) os << "# config_hash=" << config_hash << "\n";
  os << "x,y,sigmoid\n";
  os.precision(17);
  for (int j = 0; j < field.ny; ++j)
    for (int i = 0; i < field.nx; ++i)
      os << field.x_at(i) << "," << field.y_at(j) << ","
         << field.sigmoid[static_cast<std::size_t>(j) * static_cast<std::size_t>(field.nx) + static_cast<std::size_t>(i)]
         << "\n";
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_field_csv: cannot open " + path);
  out << os.str();
}

}  // namespace advdet::synth
