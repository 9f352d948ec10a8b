#include "advdet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>

#if defined(__GLIBC__)
#include <malloc.h>
namespace {
// The attack loop allocates and frees ~100 MB of scratch per step; keeping
// those blocks in the arena instead of mmap avoids refaulting the pages.
struct MallocTune {
  MallocTune() {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  }
} const malloc_tune;
}  // namespace
#endif

namespace advdet::nn {

namespace {

using ConstMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

std::vector<double>& grad_buf(const Tensor& t) {
  auto& g = t.impl->grad;
  if (g.empty()) g.assign(t.impl->values.size(), 0.0);
  return g;
}

Tensor make_node(Shape shape, std::vector<double> vals, const char* op, std::vector<Tensor> parents,
                 std::function<void(const Tensor&)> bw) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p.requires_grad();
  Tensor out = Tensor::from(std::move(shape), std::move(vals), rg);
  if (rg) {
    out.impl->node = std::make_shared<Node>();
    out.impl->node->op = op;
    out.impl->node->parents = std::move(parents);
    out.impl->node->backward = std::move(bw);
  }
  return out;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(op, "operand shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_matrix(const char* op, const Tensor& a) {
  if (a.ndim() != 2) throw ShapeError(op, "expected a matrix, got shape " + shape_str(a.shape()));
}

void check_row_index(const char* op, const Tensor& a, const std::vector<int>& idx) {
  check_matrix(op, a);
  if (static_cast<std::int64_t>(idx.size()) != a.dim(0))
    throw ShapeError(op, "index count " + std::to_string(idx.size()) + " != rows " + std::to_string(a.dim(0)));
  for (int v : idx)
    if (v < 0 || v >= a.dim(1))
      throw ShapeError(op, "index " + std::to_string(v) + " outside [0," + std::to_string(a.dim(1)) + ")");
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b,
                          double (*fwd)(double, double),
                          void (*bwd)(double, double, double, double&, double&)) {
  check_same_shape(op, a, b);
  const std::size_t n = a.values().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(a.data()[i], b.data()[i]);
  return make_node(a.shape(), std::move(out), op, {a, b}, [bwd](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    const Tensor& pb = o.impl->node->parents[1];
    const std::size_t m = o.values().size();
    const double* og = o.impl->grad.data();
    double* ga = pa.requires_grad() ? grad_buf(pa).data() : nullptr;
    double* gb = pb.requires_grad() ? grad_buf(pb).data() : nullptr;
    for (std::size_t i = 0; i < m; ++i) {
      double da = 0.0, db = 0.0;
      bwd(pa.data()[i], pb.data()[i], og[i], da, db);
      if (ga) ga[i] += da;
      if (gb) gb[i] += db;
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double g, double& da, double& db) {
        if (x >= y)
          da = g;
        else
          db = g;
      });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (auto& v : out) v *= s;
  return make_node(a.shape(), std::move(out), "scale", {a}, [s](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double* og = o.impl->grad.data();
    for (std::size_t i = 0; i < o.values().size(); ++i) g[i] += s * og[i];
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (auto& v : out) v += s;
  return make_node(a.shape(), std::move(out), "add_scalar", {a}, [](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double* og = o.impl->grad.data();
    for (std::size_t i = 0; i < o.values().size(); ++i) g[i] += og[i];
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.values());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return make_node(a.shape(), std::move(out), "relu", {a}, [](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double* og = o.impl->grad.data();
    const double* x = pa.data();
    for (std::size_t i = 0; i < o.values().size(); ++i)
      if (x[i] > 0.0) g[i] += og[i];
  });
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(a.data()[i]);
  return make_node(a.shape(), std::move(out), "sigmoid", {a}, [](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double* og = o.impl->grad.data();
    const double* y = o.data();
    for (std::size_t i = 0; i < o.values().size(); ++i) g[i] += og[i] * y[i] * (1.0 - y[i]);
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_matrix("matmul", a);
  check_matrix("matmul", b);
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul", "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  {
    ConstMap A(a.data(), m, k), B(b.data(), k, n);
    MutMap C(out.data(), m, n);
    C.noalias() = A * B;
  }
  return make_node({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    const Tensor& pb = o.impl->node->parents[1];
    ConstMap G(o.impl->grad.data(), m, n);
    if (pa.requires_grad()) {
      ConstMap B(pb.data(), k, n);
      MutMap GA(grad_buf(pa).data(), m, k);
      GA.noalias() += G * B.transpose();
    }
    if (pb.requires_grad()) {
      ConstMap A(pa.data(), m, k);
      MutMap GB(grad_buf(pb).data(), k, n);
      GB.noalias() += A.transpose() * G;
    }
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_matrix("affine", x);
  check_matrix("affine", w);
  if (x.dim(1) != w.dim(0))
    throw ShapeError("affine", "inner dimensions differ: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  if (b.ndim() != 1 || b.dim(0) != w.dim(1))
    throw ShapeError("affine", "bias shape " + shape_str(b.shape()) + " does not match output width " +
                                   std::to_string(w.dim(1)));
  const auto m = x.dim(0), k = x.dim(1), n = w.dim(1);
  std::vector<double> out(static_cast<std::size_t>(m * n));
  {
    ConstMap X(x.data(), m, k), W(w.data(), k, n);
    MutMap Y(out.data(), m, n);
    Y.noalias() = X * W;
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < n; ++j) out[static_cast<std::size_t>(i * n + j)] += b.data()[j];
  }
  return make_node({m, n}, std::move(out), "affine", {x, w, b}, [m, k, n](const Tensor& o) {
    const Tensor& px = o.impl->node->parents[0];
    const Tensor& pw = o.impl->node->parents[1];
    const Tensor& pb = o.impl->node->parents[2];
    ConstMap G(o.impl->grad.data(), m, n);
    if (px.requires_grad()) {
      ConstMap W(pw.data(), k, n);
      MutMap GX(grad_buf(px).data(), m, k);
      GX.noalias() += G * W.transpose();
    }
    if (pw.requires_grad()) {
      ConstMap X(px.data(), m, k);
      MutMap GW(grad_buf(pw).data(), k, n);
      GW.noalias() += X.transpose() * G;
    }
    if (pb.requires_grad()) {
      double* gb = grad_buf(pb).data();
      const double* g = o.impl->grad.data();
      for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
    }
  });
}

namespace {

// col rows are output positions (b,oy,ox), cols are (ky,kx,c)
void im2col_same(const double* x, std::int64_t B, std::int64_t H, std::int64_t W, std::int64_t C, std::int64_t K,
                 double* col) {
  const std::int64_t P = (K - 1) / 2;
  const std::int64_t patch = K * K * C;
  if (C == 1) {
    // scalar fast path; interior rows skip all bounds checks
    for (std::int64_t b = 0; b < B; ++b) {
      const double* xb = x + b * H * W;
      for (std::int64_t oy = 0; oy < H; ++oy) {
        for (std::int64_t ox = 0; ox < W; ++ox) {
          double* row = col + ((b * H + oy) * W + ox) * patch;
          const bool interior = oy >= P && oy + P < H && ox >= P && ox + P < W;
          if (interior) {
            for (std::int64_t ky = 0; ky < K; ++ky) {
              const double* src = xb + (oy + ky - P) * W + (ox - P);
              double* dst = row + ky * K;
              for (std::int64_t kx = 0; kx < K; ++kx) dst[kx] = src[kx];
            }
          } else {
            for (std::int64_t ky = 0; ky < K; ++ky) {
              const std::int64_t iy = oy + ky - P;
              double* dst = row + ky * K;
              for (std::int64_t kx = 0; kx < K; ++kx) {
                const std::int64_t ix = ox + kx - P;
                dst[kx] = (iy < 0 || iy >= H || ix < 0 || ix >= W) ? 0.0 : xb[iy * W + ix];
              }
            }
          }
        }
      }
    }
    return;
  }
  for (std::int64_t b = 0; b < B; ++b) {
    const double* xb = x + b * H * W * C;
    for (std::int64_t oy = 0; oy < H; ++oy) {
      for (std::int64_t ox = 0; ox < W; ++ox) {
        double* row = col + ((b * H + oy) * W + ox) * patch;
        const bool x_interior = ox >= P && ox + P < W;
        for (std::int64_t ky = 0; ky < K; ++ky) {
          const std::int64_t iy = oy + ky - P;
          if (iy < 0 || iy >= H) {
            std::memset(row + ky * K * C, 0, static_cast<std::size_t>(K * C) * sizeof(double));
            continue;
          }
          if (x_interior) {  // the whole kernel width is one contiguous span
            std::memcpy(row + ky * K * C, xb + (iy * W + ox - P) * C,
                        static_cast<std::size_t>(K * C) * sizeof(double));
            continue;
          }
          for (std::int64_t kx = 0; kx < K; ++kx) {
            const std::int64_t ix = ox + kx - P;
            double* dst = row + (ky * K + kx) * C;
            if (ix < 0 || ix >= W) {
              std::memset(dst, 0, static_cast<std::size_t>(C) * sizeof(double));
            } else {
              std::memcpy(dst, xb + (iy * W + ix) * C, static_cast<std::size_t>(C) * sizeof(double));
            }
          }
        }
      }
    }
  }
}

void col2im_same_add(const double* col, std::int64_t B, std::int64_t H, std::int64_t W, std::int64_t C,
                     std::int64_t K, double* gx) {
  const std::int64_t P = (K - 1) / 2;
  const std::int64_t patch = K * K * C;
  if (C == 1) {
    for (std::int64_t b = 0; b < B; ++b) {
      double* gb = gx + b * H * W;
      for (std::int64_t oy = 0; oy < H; ++oy) {
        for (std::int64_t ox = 0; ox < W; ++ox) {
          const double* row = col + ((b * H + oy) * W + ox) * patch;
          const bool interior = oy >= P && oy + P < H && ox >= P && ox + P < W;
          if (interior) {
            for (std::int64_t ky = 0; ky < K; ++ky) {
              double* dst = gb + (oy + ky - P) * W + (ox - P);
              const double* src = row + ky * K;
              for (std::int64_t kx = 0; kx < K; ++kx) dst[kx] += src[kx];
            }
          } else {
            for (std::int64_t ky = 0; ky < K; ++ky) {
              const std::int64_t iy = oy + ky - P;
              if (iy < 0 || iy >= H) continue;
              const double* src = row + ky * K;
              for (std::int64_t kx = 0; kx < K; ++kx) {
                const std::int64_t ix = ox + kx - P;
                if (ix >= 0 && ix < W) gb[iy * W + ix] += src[kx];
              }
            }
          }
        }
      }
    }
    return;
  }
  for (std::int64_t b = 0; b < B; ++b) {
    double* gb = gx + b * H * W * C;
    for (std::int64_t oy = 0; oy < H; ++oy) {
      for (std::int64_t ox = 0; ox < W; ++ox) {
        const double* row = col + ((b * H + oy) * W + ox) * patch;
        const bool x_interior = ox >= P && ox + P < W;
        for (std::int64_t ky = 0; ky < K; ++ky) {
          const std::int64_t iy = oy + ky - P;
          if (iy < 0 || iy >= H) continue;
          if (x_interior) {
            double* dst = gb + (iy * W + ox - P) * C;
            const double* src = row + ky * K * C;
            for (std::int64_t i = 0; i < K * C; ++i) dst[i] += src[i];
            continue;
          }
          for (std::int64_t kx = 0; kx < K; ++kx) {
            const std::int64_t ix = ox + kx - P;
            if (ix < 0 || ix >= W) continue;
            double* dst = gb + (iy * W + ix) * C;
            const double* src = row + (ky * K + kx) * C;
            for (std::int64_t c = 0; c < C; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d_same(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 4) throw ShapeError("conv2d", "input must be [B,H,W,C], got " + shape_str(x.shape()));
  if (w.ndim() != 4) throw ShapeError("conv2d", "kernel must be [KH,KW,Cin,Cout], got " + shape_str(w.shape()));
  const auto B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const auto KH = w.dim(0), KW = w.dim(1), Cin = w.dim(2), Cout = w.dim(3);
  if (KH != KW || KH % 2 == 0) throw ShapeError("conv2d", "kernel must be odd square, got " + shape_str(w.shape()));
  if (Cin != C)
    throw ShapeError("conv2d", "kernel expects " + std::to_string(Cin) + " channels, input has " + std::to_string(C));
  if (b.ndim() != 1 || b.dim(0) != Cout)
    throw ShapeError("conv2d", "bias shape " + shape_str(b.shape()) + " vs " + std::to_string(Cout) + " filters");

  const std::int64_t K = KH;
  const std::int64_t rows = B * H * W;
  const std::int64_t patch = K * K * C;

  // uninitialized scratch; im2col writes every entry including the padding
  std::shared_ptr<double[]> col(new double[static_cast<std::size_t>(rows * patch)]);
  im2col_same(x.data(), B, H, W, C, K, col.get());

  std::vector<double> out(static_cast<std::size_t>(rows * Cout));
  {
    ConstMap Col(col.get(), rows, patch), Wm(w.data(), patch, Cout);
    MutMap Y(out.data(), rows, Cout);
    Y.noalias() = Col * Wm;
  }
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t co = 0; co < Cout; ++co) out[static_cast<std::size_t>(r * Cout + co)] += b.data()[co];

  // the col buffer is only needed to form the kernel gradient
  if (!w.requires_grad()) col.reset();

  return make_node({B, H, W, Cout}, std::move(out), "conv2d",
                   {x, w, b}, [B, H, W, C, K, Cout, rows, patch, col](const Tensor& o) {
                     const Tensor& px = o.impl->node->parents[0];
                     const Tensor& pw = o.impl->node->parents[1];
                     const Tensor& pb = o.impl->node->parents[2];
                     ConstMap G(o.impl->grad.data(), rows, Cout);
                     if (pw.requires_grad() && col) {
                       ConstMap Col(col.get(), rows, patch);
                       MutMap GW(grad_buf(pw).data(), patch, Cout);
                       GW.noalias() += Col.transpose() * G;
                     }
                     if (pb.requires_grad()) {
                       double* gb = grad_buf(pb).data();
                       const double* g = o.impl->grad.data();
                       for (std::int64_t r = 0; r < rows; ++r)
                         for (std::int64_t co = 0; co < Cout; ++co) gb[co] += g[r * Cout + co];
                     }
                     if (px.requires_grad()) {
                       std::unique_ptr<double[]> gcol(new double[static_cast<std::size_t>(rows * patch)]);
                       {
                         ConstMap Wm(pw.data(), patch, Cout);
                         MutMap GC(gcol.get(), rows, patch);
                         GC.noalias() = G * Wm.transpose();
                       }
                       col2im_same_add(gcol.get(), B, H, W, C, K, grad_buf(px).data());
                     }
                   });
}

Tensor maxpool2x2(const Tensor& x) {
  if (x.ndim() != 4) throw ShapeError("maxpool2x2", "input must be [B,H,W,C], got " + shape_str(x.shape()));
  const auto B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw ShapeError("maxpool2x2", "H and W must be even, got " + shape_str(x.shape()));
  const auto OH = H / 2, OW = W / 2;
  std::vector<double> out(static_cast<std::size_t>(B * OH * OW * C));
  auto arg = std::make_shared<std::vector<std::uint8_t>>(out.size());
  const double* xd = x.data();
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t oy = 0; oy < OH; ++oy)
      for (std::int64_t ox = 0; ox < OW; ++ox)
        for (std::int64_t c = 0; c < C; ++c) {
          double best = -std::numeric_limits<double>::infinity();
          std::uint8_t where = 0;
          for (std::uint8_t k = 0; k < 4; ++k) {
            const std::int64_t iy = 2 * oy + k / 2, ix = 2 * ox + k % 2;
            const double v = xd[((b * H + iy) * W + ix) * C + c];
            if (v > best) {  // strict keeps the first maximal element
              best = v;
              where = k;
            }
          }
          const std::size_t oi = static_cast<std::size_t>(((b * OH + oy) * OW + ox) * C + c);
          out[oi] = best;
          (*arg)[oi] = where;
        }
  return make_node({B, OH, OW, C}, std::move(out), "maxpool2x2", {x}, [B, H, W, C, OH, OW, arg](const Tensor& o) {
    const Tensor& px = o.impl->node->parents[0];
    if (!px.requires_grad()) return;
    double* gx = grad_buf(px).data();
    const double* g = o.impl->grad.data();
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t oy = 0; oy < OH; ++oy)
        for (std::int64_t ox = 0; ox < OW; ++ox)
          for (std::int64_t c = 0; c < C; ++c) {
            const std::size_t oi = static_cast<std::size_t>(((b * OH + oy) * OW + ox) * C + c);
            const std::uint8_t k = (*arg)[oi];
            const std::int64_t iy = 2 * oy + k / 2, ix = 2 * ox + k % 2;
            gx[((b * H + iy) * W + ix) * C + c] += g[oi];
          }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  const auto n = shape_numel(shape);
  if (n != x.numel())
    throw ShapeError("reshape", shape_str(x.shape()) + " -> " + shape_str(shape) + " changes element count");
  std::vector<double> out(x.values());
  return make_node(std::move(shape), std::move(out), "reshape", {x}, [](const Tensor& o) {
    const Tensor& px = o.impl->node->parents[0];
    if (!px.requires_grad()) return;
    double* g = grad_buf(px).data();
    const double* og = o.impl->grad.data();
    for (std::size_t i = 0; i < o.values().size(); ++i) g[i] += og[i];
  });
}

Tensor bce_with_logits(const Tensor& logits, const std::vector<double>& targets) {
  const std::int64_t n = logits.numel();
  if (logits.ndim() == 2 && logits.dim(1) != 1)
    throw ShapeError("bce_with_logits", "logits must be [B] or [B,1], got " + shape_str(logits.shape()));
  if (logits.ndim() > 2) throw ShapeError("bce_with_logits", "logits must be [B] or [B,1]");
  if (static_cast<std::int64_t>(targets.size()) != n)
    throw ShapeError("bce_with_logits",
                     std::to_string(targets.size()) + " targets for " + std::to_string(n) + " logits");
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* z = logits.data();
  for (std::int64_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = std::max(z[i], 0.0) - targets[static_cast<std::size_t>(i)] * z[i] +
                                       std::log1p(std::exp(-std::abs(z[i])));
  return make_node({n}, std::move(out), "bce_with_logits", {logits}, [targets](const Tensor& o) {
    const Tensor& pz = o.impl->node->parents[0];
    if (!pz.requires_grad()) return;
    double* g = grad_buf(pz).data();
    const double* og = o.impl->grad.data();
    const double* z = pz.data();
    for (std::size_t i = 0; i < o.values().size(); ++i) g[i] += og[i] * (stable_sigmoid(z[i]) - targets[i]);
  });
}

Tensor softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  check_row_index("softmax_xent", logits, labels);
  const auto B = logits.dim(0), K = logits.dim(1);
  std::vector<double> out(static_cast<std::size_t>(B));
  auto probs = std::make_shared<std::vector<double>>(logits.values().size());
  const double* z = logits.data();
  for (std::int64_t i = 0; i < B; ++i) {
    const double* zi = z + i * K;
    double m = zi[0];
    for (std::int64_t j = 1; j < K; ++j) m = std::max(m, zi[j]);
    double acc = 0.0;
    for (std::int64_t j = 0; j < K; ++j) acc += std::exp(zi[j] - m);
    const double lse = m + std::log(acc);
    out[static_cast<std::size_t>(i)] = lse - zi[labels[static_cast<std::size_t>(i)]];
    for (std::int64_t j = 0; j < K; ++j)
      (*probs)[static_cast<std::size_t>(i * K + j)] = std::exp(zi[j] - lse);
  }
  return make_node({B}, std::move(out), "softmax_xent", {logits}, [labels, probs, K](const Tensor& o) {
    const Tensor& pz = o.impl->node->parents[0];
    if (!pz.requires_grad()) return;
    double* g = grad_buf(pz).data();
    const double* og = o.impl->grad.data();
    const std::int64_t B = o.numel();
    for (std::int64_t i = 0; i < B; ++i) {
      for (std::int64_t j = 0; j < K; ++j)
        g[i * K + j] += og[i] * (*probs)[static_cast<std::size_t>(i * K + j)];
      g[i * K + labels[static_cast<std::size_t>(i)]] -= og[i];
    }
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return make_node({}, {acc}, "sum", {a}, [](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double og = o.impl->grad[0];
    for (std::size_t i = 0; i < pa.values().size(); ++i) g[i] += og;
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean", "empty tensor");
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(a.numel());
  return make_node({}, {acc * inv}, "mean", {a}, [inv](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double og = o.impl->grad[0] * inv;
    for (std::size_t i = 0; i < pa.values().size(); ++i) g[i] += og;
  });
}

Tensor max_all(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("max", "empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < a.values().size(); ++i)
    if (a.data()[i] > a.data()[best]) best = i;
  return make_node({}, {a.data()[best]}, "max", {a}, [best](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    grad_buf(pa)[best] += o.impl->grad[0];
  });
}

Tensor sumsq(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v * v;
  return make_node({}, {acc}, "sumsq", {a}, [](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double og = o.impl->grad[0];
    for (std::size_t i = 0; i < pa.values().size(); ++i) g[i] += 2.0 * og * pa.data()[i];
  });
}

Tensor row_max(const Tensor& a) {
  check_matrix("row_max", a);
  if (a.dim(1) == 0) throw ShapeError("row_max", "zero columns");
  const auto B = a.dim(0), K = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(B));
  auto arg = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(B));
  for (std::int64_t i = 0; i < B; ++i) {
    const double* row = a.data() + i * K;
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < K; ++j)
      if (row[j] > row[best]) best = j;
    out[static_cast<std::size_t>(i)] = row[best];
    (*arg)[static_cast<std::size_t>(i)] = best;
  }
  return make_node({B}, std::move(out), "row_max", {a}, [arg, K](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double* og = o.impl->grad.data();
    for (std::int64_t i = 0; i < o.numel(); ++i) g[i * K + (*arg)[static_cast<std::size_t>(i)]] += og[i];
  });
}

Tensor row_max_excluding(const Tensor& a, const std::vector<int>& excl) {
  check_row_index("row_max_excluding", a, excl);
  if (a.dim(1) < 2) throw ShapeError("row_max_excluding", "needs at least 2 columns");
  const auto B = a.dim(0), K = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(B));
  auto arg = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(B));
  for (std::int64_t i = 0; i < B; ++i) {
    const double* row = a.data() + i * K;
    const int skip = excl[static_cast<std::size_t>(i)];
    std::int64_t best = -1;
    for (std::int64_t j = 0; j < K; ++j) {
      if (j == skip) continue;
      if (best < 0 || row[j] > row[best]) best = j;
    }
    out[static_cast<std::size_t>(i)] = row[best];
    (*arg)[static_cast<std::size_t>(i)] = best;
  }
  return make_node({B}, std::move(out), "row_max_excluding", {a}, [arg, K](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double* og = o.impl->grad.data();
    for (std::int64_t i = 0; i < o.numel(); ++i) g[i * K + (*arg)[static_cast<std::size_t>(i)]] += og[i];
  });
}

Tensor gather_col(const Tensor& a, const std::vector<int>& idx) {
  check_row_index("gather_col", a, idx);
  const auto B = a.dim(0), K = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(B));
  for (std::int64_t i = 0; i < B; ++i) out[static_cast<std::size_t>(i)] = a.data()[i * K + idx[static_cast<std::size_t>(i)]];
  return make_node({B}, std::move(out), "gather_col", {a}, [idx, K](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double* og = o.impl->grad.data();
    for (std::int64_t i = 0; i < o.numel(); ++i) g[i * K + idx[static_cast<std::size_t>(i)]] += og[i];
  });
}

Tensor row_sumsq(const Tensor& a) {
  check_matrix("row_sumsq", a);
  const auto B = a.dim(0), K = a.dim(1);
  std::vector<double> out(static_cast<std::size_t>(B), 0.0);
  for (std::int64_t i = 0; i < B; ++i) {
    const double* row = a.data() + i * K;
    double acc = 0.0;
    for (std::int64_t j = 0; j < K; ++j) acc += row[j] * row[j];
    out[static_cast<std::size_t>(i)] = acc;
  }
  return make_node({B}, std::move(out), "row_sumsq", {a}, [K](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    if (!pa.requires_grad()) return;
    double* g = grad_buf(pa).data();
    const double* og = o.impl->grad.data();
    const double* x = pa.data();
    for (std::int64_t i = 0; i < o.numel(); ++i)
      for (std::int64_t j = 0; j < K; ++j) g[i * K + j] += 2.0 * og[i] * x[i * K + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& cols) {
  if (cols.empty()) throw ShapeError("concat_cols", "no columns");
  const std::int64_t B = cols[0].numel();
  for (const auto& c : cols) {
    if (c.ndim() > 2 || (c.ndim() == 2 && c.dim(1) != 1))
      throw ShapeError("concat_cols", "columns must be [B] or [B,1], got " + shape_str(c.shape()));
    if (c.numel() != B)
      throw ShapeError("concat_cols", "column length " + std::to_string(c.numel()) + " != " + std::to_string(B));
  }
  const std::int64_t K = static_cast<std::int64_t>(cols.size());
  std::vector<double> out(static_cast<std::size_t>(B * K));
  for (std::int64_t j = 0; j < K; ++j)
    for (std::int64_t i = 0; i < B; ++i)
      out[static_cast<std::size_t>(i * K + j)] = cols[static_cast<std::size_t>(j)].data()[i];
  return make_node({B, K}, std::move(out), "concat_cols", {cols.begin(), cols.end()}, [B, K](const Tensor& o) {
    const double* og = o.impl->grad.data();
    for (std::int64_t j = 0; j < K; ++j) {
      const Tensor& p = o.impl->node->parents[static_cast<std::size_t>(j)];
      if (!p.requires_grad()) continue;
      double* g = grad_buf(p).data();
      for (std::int64_t i = 0; i < B; ++i) g[i] += og[i * K + j];
    }
  });
}

Tensor select(const std::vector<std::uint8_t>& take_first, const Tensor& a, const Tensor& b) {
  check_same_shape("select", a, b);
  if (take_first.size() != a.values().size())
    throw ShapeError("select", std::to_string(take_first.size()) + " flags for " + std::to_string(a.numel()) +
                                   " elements");
  std::vector<double> out(a.values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = take_first[i] ? a.data()[i] : b.data()[i];
  return make_node(a.shape(), std::move(out), "select", {a, b}, [take_first](const Tensor& o) {
    const Tensor& pa = o.impl->node->parents[0];
    const Tensor& pb = o.impl->node->parents[1];
    const double* og = o.impl->grad.data();
    double* ga = pa.requires_grad() ? grad_buf(pa).data() : nullptr;
    double* gb = pb.requires_grad() ? grad_buf(pb).data() : nullptr;
    for (std::size_t i = 0; i < o.values().size(); ++i) {
      if (take_first[i]) {
        if (ga) ga[i] += og[i];
      } else {
        if (gb) gb[i] += og[i];
      }
    }
  });
}

}  // namespace advdet::nn
