#include "advdet/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "advdet/losses.hpp"
#include "advdet/ops.hpp"
#include "advdet/rng.hpp"

namespace advdet::attacks {

namespace {

// feasible rows pass through untouched so repeated projection is a no-op
void project_row(double* row, std::int64_t d, const NormBall& ball) {
  if (ball.p == Norm::Linf) {
    for (std::int64_t i = 0; i < d; ++i) row[i] = std::clamp(row[i], -ball.eps, ball.eps);
    return;
  }
  double sq = 0.0;
  for (std::int64_t i = 0; i < d; ++i) sq += row[i] * row[i];
  const double norm = std::sqrt(sq);
  if (norm <= ball.eps * (1.0 + 1e-12)) return;
  const double s = ball.eps / norm;
  for (std::int64_t i = 0; i < d; ++i) row[i] *= s;
}

bool row_feasible(const double* row, std::int64_t d, const NormBall& ball) {
  if (ball.p == Norm::Linf) {
    for (std::int64_t i = 0; i < d; ++i)
      if (row[i] < -ball.eps || row[i] > ball.eps) return false;
    return true;
  }
  double sq = 0.0;
  for (std::int64_t i = 0; i < d; ++i) sq += row[i] * row[i];
  return std::sqrt(sq) <= ball.eps * (1.0 + 1e-12);
}

void draw_in_ball(double* row, std::int64_t d, const NormBall& ball, Rng& rng) {
  if (ball.p == Norm::Linf) {
    for (std::int64_t i = 0; i < d; ++i) row[i] = rng.uniform(-ball.eps, ball.eps);
    return;
  }
  // direction uniform on the sphere, radius eps * u^(1/d)
  double sq = 0.0;
  for (std::int64_t i = 0; i < d; ++i) {
    row[i] = rng.normal();
    sq += row[i] * row[i];
  }
  const double norm = std::sqrt(sq);
  if (norm == 0.0) {
    std::fill(row, row + d, 0.0);
    return;
  }
  const double r = ball.eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
  for (std::int64_t i = 0; i < d; ++i) row[i] *= r / norm;
}

}  // namespace

void project_rows_inplace(std::vector<double>& delta, std::int64_t rows, std::int64_t cols, const NormBall& ball) {
  if (static_cast<std::int64_t>(delta.size()) != rows * cols)
    throw nn::ShapeError("project", "buffer size " + std::to_string(delta.size()) + " != " + std::to_string(rows) +
                                        "x" + std::to_string(cols));
  for (std::int64_t r = 0; r < rows; ++r) project_row(delta.data() + r * cols, cols, ball);
}

nn::Tensor project(const nn::Tensor& delta, const NormBall& ball) {
  if (delta.ndim() > 2) throw nn::ShapeError("project", "expected [D] or [B,D], got " + nn::shape_str(delta.shape()));
  const std::int64_t rows = delta.ndim() == 2 ? delta.dim(0) : 1;
  const std::int64_t cols = delta.ndim() == 2 ? delta.dim(1) : delta.numel();

  bool feasible = true;
  for (std::int64_t r = 0; r < rows && feasible; ++r)
    feasible = row_feasible(delta.data() + r * cols, cols, ball);
  if (feasible) return delta;

  std::vector<double> vals(delta.values());
  for (std::int64_t r = 0; r < rows; ++r) project_row(vals.data() + r * cols, cols, ball);
  return nn::Tensor::from(delta.shape(), std::move(vals));
}

namespace {

struct RuleState {
  std::vector<double> m, v;  // Adam moments, per coordinate
  std::int64_t t = 0;
};

}  // namespace

PgdResult pgd(const BatchLoss& loss, const nn::Tensor& x0, const std::optional<NormBall>& ball, const PgdConfig& cfg,
              Direction dir, const std::vector<int>& snapshot_steps) {
  if (x0.ndim() != 2) throw nn::ShapeError("pgd", "x0 must be [B,D], got " + nn::shape_str(x0.shape()));
  if (cfg.steps < 0 || cfg.restarts < 1) throw std::invalid_argument("pgd: steps must be >= 0 and restarts >= 1");
  for (double v : x0.values())
    if (v < cfg.clip.lo - 1e-12 || v > cfg.clip.hi + 1e-12)
      throw std::invalid_argument("pgd: x0 outside clip range");

  const std::int64_t B = x0.dim(0), D = x0.dim(1);
  const double direction = dir == Direction::Maximize ? 1.0 : -1.0;

  PgdResult res;
  res.final_loss.assign(static_cast<std::size_t>(B), 0.0);
  std::vector<double> adv(x0.values());
  for (const int s : snapshot_steps) {
    (void)s;
    res.snapshots.push_back(nn::Tensor::zeros({B, D}));
  }

  const std::int64_t chunk = cfg.chunk > 0 ? cfg.chunk : B;
  for (std::int64_t start = 0; start < B; start += chunk) {
    const std::int64_t b = std::min<std::int64_t>(chunk, B - start);
    const double* x0c = x0.data() + start * D;

    std::vector<double> best_delta(static_cast<std::size_t>(b * D), 0.0);
    std::vector<double> best_loss(static_cast<std::size_t>(b), 0.0);
    bool have_best = false;

    for (int r = 0; r < cfg.restarts; ++r) {
      std::vector<double> delta(static_cast<std::size_t>(b * D), 0.0);
      const bool random_init = cfg.random_start || r > 0;
      if (random_init && ball) {
        for (std::int64_t i = 0; i < b; ++i) {
          Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(start + i), static_cast<std::uint64_t>(r)));
          draw_in_ball(delta.data() + i * D, D, *ball, rng);
        }
      }

      auto feasibilize = [&] {
        if (ball)
          for (std::int64_t i = 0; i < b; ++i) project_row(delta.data() + i * D, D, *ball);
        for (std::int64_t i = 0; i < b * D; ++i) {
          const double xi = x0c[i] + delta[i];
          const double clipped = std::clamp(xi, cfg.clip.lo, cfg.clip.hi);
          if (clipped != xi) delta[i] = clipped - x0c[i];
        }
      };
      feasibilize();

      RuleState st;
      if (cfg.rule == StepRule::Adam) {
        st.m.assign(delta.size(), 0.0);
        st.v.assign(delta.size(), 0.0);
      }

      auto record_snapshot = [&](int step_index) {
        if (r != 0) return;  // snapshots trace the first restart
        for (std::size_t si = 0; si < snapshot_steps.size(); ++si) {
          if (snapshot_steps[si] != step_index) continue;
          double* dst = res.snapshots[si].data() + start * D;
          for (std::int64_t i = 0; i < b * D; ++i) dst[i] = x0c[i] + delta[i];
        }
      };

      for (int step = 0; step <= cfg.steps; ++step) {
        record_snapshot(step);
        if (step == cfg.steps) break;

        std::vector<double> xv(static_cast<std::size_t>(b * D));
        for (std::int64_t i = 0; i < b * D; ++i) xv[i] = x0c[i] + delta[i];
        nn::Tensor x = nn::Tensor::from({b, D}, std::move(xv), true);
        nn::Tensor lvec = loss(x, start);
        if (lvec.numel() != b)
          throw nn::ShapeError("pgd", "loss returned " + std::to_string(lvec.numel()) + " values for " +
                                          std::to_string(b) + " rows");
        nn::backward(nn::sum(lvec));
        const std::vector<double>& g = x.grad();

        if (cfg.rule == StepRule::Adam) {
          ++st.t;
          const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(st.t));
          const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(st.t));
          for (std::size_t i = 0; i < delta.size(); ++i) {
            st.m[i] = 0.9 * st.m[i] + 0.1 * g[i];
            st.v[i] = 0.999 * st.v[i] + 0.001 * g[i] * g[i];
            delta[i] += direction * cfg.step_size * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + 1e-8);
          }
        } else if (!ball || ball->p == Norm::L2) {
          for (std::int64_t i = 0; i < b; ++i) {
            const double* gi = g.data() + i * D;
            double sq = 0.0;
            for (std::int64_t j = 0; j < D; ++j) sq += gi[j] * gi[j];
            if (sq == 0.0) continue;
            const double s = direction * cfg.step_size / std::sqrt(sq);
            double* di = delta.data() + i * D;
            for (std::int64_t j = 0; j < D; ++j) di[j] += s * gi[j];
          }
        } else {
          for (std::size_t i = 0; i < delta.size(); ++i) {
            const double gi = g[i];
            if (gi > 0.0)
              delta[i] += direction * cfg.step_size;
            else if (gi < 0.0)
              delta[i] -= direction * cfg.step_size;
          }
        }
        feasibilize();
      }

      // evaluate the restart at its final feasible point
      std::vector<double> xv(static_cast<std::size_t>(b * D));
      for (std::int64_t i = 0; i < b * D; ++i) xv[i] = x0c[i] + delta[i];
      nn::Tensor xfin = nn::Tensor::from({b, D}, std::move(xv));
      nn::Tensor lfin = loss(xfin, start);
      for (std::int64_t i = 0; i < b; ++i) {
        const double li = lfin.data()[i];
        const bool better = !have_best || (dir == Direction::Maximize ? li > best_loss[static_cast<std::size_t>(i)]
                                                                      : li < best_loss[static_cast<std::size_t>(i)]);
        if (better) {
          best_loss[static_cast<std::size_t>(i)] = li;
          std::copy(delta.begin() + i * D, delta.begin() + (i + 1) * D, best_delta.begin() + i * D);
        }
      }
      have_best = true;
    }

    for (std::int64_t i = 0; i < b * D; ++i) adv[static_cast<std::size_t>(start * D + i)] = x0c[i] + best_delta[static_cast<std::size_t>(i)];
    for (std::int64_t i = 0; i < b; ++i) res.final_loss[static_cast<std::size_t>(start + i)] = best_loss[static_cast<std::size_t>(i)];
  }

  res.x_adv = nn::Tensor::from({B, D}, std::move(adv));
  return res;
}

nn::Tensor aggregate_detector(const std::vector<models::Model>& detectors, const nn::Tensor& x) {
  if (detectors.empty()) throw std::invalid_argument("aggregate_detector: no detectors");
  std::vector<nn::Tensor> cols;
  cols.reserve(detectors.size());
  for (const auto& d : detectors) {
    if (d.output_width() != 1) throw std::invalid_argument("aggregate_detector: detector output width must be 1");
    cols.push_back(models::logits(d, x));
  }
  return nn::concat_cols(cols);
}

std::vector<nn::Tensor> synthesize_from_noise(const models::Model& detector, const nn::Tensor& seed_images,
                                              const std::optional<NormBall>& ball, const PgdConfig& cfg,
                                              const std::vector<int>& snapshot_steps) {
  std::vector<double> clamped(seed_images.values());
  for (auto& v : clamped) v = std::clamp(v, cfg.clip.lo, cfg.clip.hi);
  nn::Tensor x0 = nn::Tensor::from(seed_images.shape(), std::move(clamped));
  PgdResult r = pgd(targeted_detector_attack(detector), x0, ball, cfg, Direction::Minimize, snapshot_steps);
  if (snapshot_steps.empty()) return {r.x_adv};
  return r.snapshots;
}

}  // namespace advdet::attacks
