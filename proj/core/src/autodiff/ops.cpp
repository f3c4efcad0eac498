#include "prada/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "prada/util/error.hpp"

namespace prada::ad {
namespace {

void require_matrix(const Tensor& t, const char* op) {
  if (t.ndim() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}


void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

}  // namespace

void matmul_into(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
  MatMap(c, M, N).noalias() = ConstMatMap(a, M, K) * ConstMatMap(b, K, N);
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  }
  Tensor out(Shape{m, n});
  matmul_into(av.raw(), bv.raw(), out.raw(), m, k, n);
  const NodeId ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib, m, k, n](Tape& tape, const Tensor& g) {
    const Tensor& A = tape.value(ia);
    const Tensor& B = tape.value(ib);
    const auto M = static_cast<Eigen::Index>(m), K = static_cast<Eigen::Index>(k), N = static_cast<Eigen::Index>(n);
    const ConstMatMap G(g.raw(), M, N);
    if (Tensor* ga = tape.grad_sink(ia)) {
      MatMap(ga->raw(), M, K).noalias() += G * ConstMatMap(B.raw(), K, N).transpose();
    }
    if (Tensor* gb = tape.grad_sink(ib)) {
      MatMap(gb->raw(), K, N).noalias() += ConstMatMap(A.raw(), M, K).transpose() * G;
    }
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const NodeId ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& tape, const Tensor& g) {
    for (NodeId id : {ia, ib}) {
      if (Tensor* s = tape.grad_sink(id)) axpy(1.0, g.raw(), s->raw(), g.size());
    }
  });
}

Var add_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  require_matrix(xv, "add_bias");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (bias.value().size() != n) {
    throw ShapeError("add_bias: bias " + shape_string(bias.value().shape()) + " does not fit " +
                     shape_string(xv.shape()));
  }
  Tensor out = xv;
  const double* bv = bias.value().raw();
  for (std::size_t i = 0; i < m; ++i) axpy(1.0, bv, out.raw() + i * n, n);
  const NodeId ix = x.id(), ib = bias.id();
  return x.tape().record(std::move(out), {ix, ib}, [ix, ib, m, n](Tape& tape, const Tensor& g) {
    if (Tensor* gx = tape.grad_sink(ix)) axpy(1.0, g.raw(), gx->raw(), g.size());
    if (Tensor* gb = tape.grad_sink(ib)) {
      for (std::size_t i = 0; i < m; ++i) axpy(1.0, g.raw() + i * n, gb->raw(), n);
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const NodeId ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {ia, ib}, [ia, ib](Tape& tape, const Tensor& g) {
    const Tensor& A = tape.value(ia);
    const Tensor& B = tape.value(ib);
    if (Tensor* ga = tape.grad_sink(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * B[i];
    }
    if (Tensor* gb = tape.grad_sink(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * A[i];
    }
  });
}

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.storage()) v *= factor;
  const NodeId ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, factor](Tape& tape, const Tensor& g) {
    if (Tensor* gx = tape.grad_sink(ix)) axpy(factor, g.raw(), gx->raw(), g.size());
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const NodeId ix = x.id();
  return x.tape().record(Tensor::scalar(s), {ix}, [ix](Tape& tape, const Tensor& g) {
    if (Tensor* gx = tape.grad_sink(ix)) {
      const double up = g[0];
      for (double& v : gx->storage()) v += up;
    }
  });
}

Var tanh(Var x) {
  Tensor out = x.value();
  for (double& v : out.storage()) v = std::tanh(v);
  auto saved = std::make_shared<Tensor>(out);
  const NodeId ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, saved](Tape& tape, const Tensor& g) {
    if (Tensor* gx = tape.grad_sink(ix)) {
      const Tensor& y = *saved;
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * (1.0 - y[i] * y[i]);
    }
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Var gelu(Var x) {
  Tensor out = x.value();
  for (double& v : out.storage()) {
    const double u = kGeluC * (v + kGeluA * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  const NodeId ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix](Tape& tape, const Tensor& g) {
    if (Tensor* gx = tape.grad_sink(ix)) {
      const Tensor& xv = tape.value(ix);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double v = xv[i];
        const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
        (*gx)[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
      }
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.value().size() != n || beta.value().size() != n) {
    throw ShapeError("layer_norm: gain/shift " + shape_string(gamma.value().shape()) + "/" +
                     shape_string(beta.value().shape()) + " do not fit " + shape_string(xv.shape()));
  }
  auto xhat = std::make_shared<Tensor>(Shape{m, n});
  auto inv_std = std::make_shared<std::vector<double>>(m);
  Tensor out(Shape{m, n});
  const double* gm = gamma.value().raw();
  const double* bt = beta.value().raw();
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = xv.raw() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xi[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    double* hi = xhat->raw() + i * n;
    double* oi = out.raw() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      hi[j] = (xi[j] - mean) * is;
      oi[j] = gm[j] * hi[j] + bt[j];
    }
  }
  const NodeId ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(std::move(out), {ix, ig, ib},
                         [ix, ig, ib, m, n, xhat, inv_std](Tape& tape, const Tensor& g) {
    const double* gm = tape.value(ig).raw();
    if (Tensor* gg = tape.grad_sink(ig)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* gi = g.raw() + i * n;
        const double* hi = xhat->raw() + i * n;
        for (std::size_t j = 0; j < n; ++j) (*gg)[j] += gi[j] * hi[j];
      }
    }
    if (Tensor* gb = tape.grad_sink(ib)) {
      for (std::size_t i = 0; i < m; ++i) axpy(1.0, g.raw() + i * n, gb->raw(), n);
    }
    if (Tensor* gx = tape.grad_sink(ix)) {
      std::vector<double> dh(n);
      for (std::size_t i = 0; i < m; ++i) {
        const double* gi = g.raw() + i * n;
        const double* hi = xhat->raw() + i * n;
        double mean_dh = 0.0, mean_dh_h = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          dh[j] = gi[j] * gm[j];
          mean_dh += dh[j];
          mean_dh_h += dh[j] * hi[j];
        }
        mean_dh /= static_cast<double>(n);
        mean_dh_h /= static_cast<double>(n);
        double* gxi = gx->raw() + i * n;
        const double is = (*inv_std)[i];
        for (std::size_t j = 0; j < n; ++j) gxi[j] += is * (dh[j] - mean_dh - hi[j] * mean_dh_h);
      }
    }
  });
}

Var embedding_gather(Var table, const std::vector<std::size_t>& ids) {
  const Tensor& tv = table.value();
  require_matrix(tv, "embedding_gather");
  const std::size_t vocab = tv.rows(), h = tv.cols();
  Tensor out(Shape{ids.size(), h});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= vocab) {
      throw ShapeError("embedding_gather: id " + std::to_string(ids[r]) + " outside table " +
                       shape_string(tv.shape()));
    }
    std::copy_n(tv.raw() + ids[r] * h, h, out.raw() + r * h);
  }
  const NodeId it = table.id();
  return table.tape().record(std::move(out), {it}, [it, ids, h](Tape& tape, const Tensor& g) {
    if (Tensor* gt = tape.grad_sink(it)) {
      for (std::size_t r = 0; r < ids.size(); ++r) axpy(1.0, g.raw() + r * h, gt->raw() + ids[r] * h, h);
    }
  });
}

namespace {

struct AttentionDims {
  std::size_t hidden;
  std::size_t heads;
  std::size_t head_dim;
  double scale;
};

}  // namespace

Var causal_attention(Var qkv, const std::vector<Segment>& segments, std::size_t heads) {
  const Tensor& xv = qkv.value();
  require_matrix(xv, "causal_attention");
  if (heads == 0 || xv.cols() % (3 * heads) != 0) {
    throw ShapeError("causal_attention: width " + std::to_string(xv.cols()) + " not divisible into 3 x " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t total = xv.rows();
  AttentionDims dims;
  dims.hidden = xv.cols() / 3;
  dims.heads = heads;
  dims.head_dim = dims.hidden / heads;
  dims.scale = 1.0 / std::sqrt(static_cast<double>(dims.head_dim));
  for (const Segment& s : segments) {
    if (s.offset + s.length > total) throw ShapeError("causal_attention: segment exceeds packed rows");
  }

  const auto d = static_cast<Eigen::Index>(dims.head_dim);
  const auto stride = static_cast<Eigen::Index>(xv.cols());
  const auto H = static_cast<Eigen::Index>(dims.hidden);
  Tensor out(Shape{total, dims.hidden});
  // Full [len x len] attention weights per (segment, head); zero above the diagonal.
  auto probs = std::make_shared<std::vector<RowMat>>(segments.size() * heads);
  for (std::size_t si = 0; si < segments.size(); ++si) {
    const Segment& seg = segments[si];
    const auto len = static_cast<Eigen::Index>(seg.length);
    if (len == 0) continue;
    const ConstStridedMap X(xv.raw() + seg.offset * xv.cols(), len, stride, Eigen::OuterStride<>(stride));
    StridedMap O(out.raw() + seg.offset * dims.hidden, len, H, Eigen::OuterStride<>(H));
    for (std::size_t h = 0; h < heads; ++h) {
      const auto c = static_cast<Eigen::Index>(h) * d;
      RowMat& p = (*probs)[si * heads + h];
      p.noalias() = X.middleCols(c, d) * X.middleCols(H + c, d).transpose();
      for (Eigen::Index i = 0; i < len; ++i) {
        double* pi = p.data() + i * len;
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j <= i; ++j) {
          pi[j] *= dims.scale;
          mx = std::max(mx, pi[j]);
        }
        double z = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          pi[j] = std::exp(pi[j] - mx);
          z += pi[j];
        }
        const double inv = 1.0 / z;
        for (Eigen::Index j = 0; j <= i; ++j) pi[j] *= inv;
        std::fill(pi + i + 1, pi + len, 0.0);
      }
      O.middleCols(c, d).noalias() = p * X.middleCols(2 * H + c, d);
    }
  }

  const NodeId ix = qkv.id();
  return qkv.tape().record(std::move(out), {ix}, [ix, segments, dims, probs](Tape& tape, const Tensor& g) {
    Tensor* gx = tape.grad_sink(ix);
    if (!gx) return;
    const Tensor& xv = tape.value(ix);
    const auto d = static_cast<Eigen::Index>(dims.head_dim);
    const auto stride = static_cast<Eigen::Index>(xv.cols());
    const auto H = static_cast<Eigen::Index>(dims.hidden);
    RowMat dp;
    for (std::size_t si = 0; si < segments.size(); ++si) {
      const Segment& seg = segments[si];
      const auto len = static_cast<Eigen::Index>(seg.length);
      if (len == 0) continue;
      const ConstStridedMap X(xv.raw() + seg.offset * xv.cols(), len, stride, Eigen::OuterStride<>(stride));
      StridedMap GX(gx->raw() + seg.offset * xv.cols(), len, stride, Eigen::OuterStride<>(stride));
      const ConstStridedMap GO(g.raw() + seg.offset * dims.hidden, len, H, Eigen::OuterStride<>(H));
      for (std::size_t h = 0; h < dims.heads; ++h) {
        const auto c = static_cast<Eigen::Index>(h) * d;
        const RowMat& p = (*probs)[si * dims.heads + h];
        const auto go = GO.middleCols(c, d);
        dp.noalias() = go * X.middleCols(2 * H + c, d).transpose();
        // Softmax backward, folded with the score scale; p is zero above the diagonal.
        for (Eigen::Index i = 0; i < len; ++i) {
          const double* pi = p.data() + i * len;
          double* di = dp.data() + i * len;
          double rowdot = 0.0;
          for (Eigen::Index j = 0; j <= i; ++j) rowdot += pi[j] * di[j];
          for (Eigen::Index j = 0; j <= i; ++j) di[j] = pi[j] * (di[j] - rowdot) * dims.scale;
          std::fill(di + i + 1, di + len, 0.0);
        }
        GX.middleCols(c, d).noalias() += dp * X.middleCols(H + c, d);
        GX.middleCols(H + c, d).noalias() += dp.transpose() * X.middleCols(c, d);
        GX.middleCols(2 * H + c, d).noalias() += p.transpose() * go;
      }
    }
  });
}

Var mean_pool_rows(Var x, const std::vector<std::vector<std::size_t>>& groups) {
  const Tensor& xv = x.value();
  require_matrix(xv, "mean_pool_rows");
  const std::size_t n = xv.cols();
  Tensor out(Shape{groups.size(), n});
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& rows = groups[gi];
    if (rows.empty()) throw DataError("mean_pool_rows: empty row group " + std::to_string(gi));
    double* oi = out.raw() + gi * n;
    for (std::size_t r : rows) {
      if (r >= xv.rows()) throw ShapeError("mean_pool_rows: row index out of range");
      axpy(1.0, xv.raw() + r * n, oi, n);
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (std::size_t j = 0; j < n; ++j) oi[j] *= inv;
  }
  const NodeId ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, groups, n](Tape& tape, const Tensor& g) {
    if (Tensor* gx = tape.grad_sink(ix)) {
      for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const double inv = 1.0 / static_cast<double>(groups[gi].size());
        for (std::size_t r : groups[gi]) axpy(inv, g.raw() + gi * n, gx->raw() + r * n, n);
      }
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts.front().value().cols();
  std::size_t rows = 0;
  std::vector<NodeId> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    require_matrix(pv, "concat_rows");
    if (pv.cols() != n) {
      throw ShapeError("concat_rows: width mismatch " + shape_string(parts.front().value().shape()) + " vs " +
                       shape_string(pv.shape()));
    }
    offsets.push_back(rows);
    rows += pv.rows();
    ids.push_back(p.id());
  }
  Tensor out(Shape{rows, n});
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& pv = parts[i].value();
    std::copy_n(pv.raw(), pv.size(), out.raw() + offsets[i] * n);
  }
  return parts.front().tape().record(std::move(out), ids, [ids, offsets, n](Tape& tape, const Tensor& g) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (Tensor* gp = tape.grad_sink(ids[i])) axpy(1.0, g.raw() + offsets[i] * n, gp->raw(), gp->size());
    }
  });
}

Var gather_rows(Var x, const std::vector<std::size_t>& rows) {
  const Tensor& xv = x.value();
  require_matrix(xv, "gather_rows");
  const std::size_t n = xv.cols();
  Tensor out(Shape{rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows()) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(xv.raw() + rows[i] * n, n, out.raw() + i * n);
  }
  const NodeId ix = x.id();
  return x.tape().record(std::move(out), {ix}, [ix, rows, n](Tape& tape, const Tensor& g) {
    if (Tensor* gx = tape.grad_sink(ix)) {
      for (std::size_t i = 0; i < rows.size(); ++i) axpy(1.0, g.raw() + i * n, gx->raw() + rows[i] * n, n);
    }
  });
}

Var overwrite_rows(Var x, Var bank, const std::vector<std::pair<std::size_t, std::size_t>>& placements) {
  const Tensor& xv = x.value();
  const Tensor& bv = bank.value();
  require_matrix(xv, "overwrite_rows");
  require_matrix(bv, "overwrite_rows");
  const std::size_t n = xv.cols();
  if (bv.cols() != n) {
    throw ShapeError("overwrite_rows: bank " + shape_string(bv.shape()) + " does not fit " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  std::vector<char> replaced(xv.rows(), 0);
  for (auto [dst, src] : placements) {
    if (dst >= xv.rows() || src >= bv.rows()) throw ShapeError("overwrite_rows: placement out of range");
    std::copy_n(bv.raw() + src * n, n, out.raw() + dst * n);
    replaced[dst] = 1;
  }
  const NodeId ix = x.id(), ib = bank.id();
  return x.tape().record(std::move(out), {ix, ib},
                         [ix, ib, placements, replaced = std::move(replaced), n](Tape& tape, const Tensor& g) {
    if (Tensor* gx = tape.grad_sink(ix)) {
      for (std::size_t r = 0; r < replaced.size(); ++r) {
        if (!replaced[r]) axpy(1.0, g.raw() + r * n, gx->raw() + r * n, n);
      }
    }
    if (Tensor* gb = tape.grad_sink(ib)) {
      for (auto [dst, src] : placements) axpy(1.0, g.raw() + dst * n, gb->raw() + src * n, n);
    }
  });
}

Var grad_reverse(Var x) {
  const NodeId ix = x.id();
  return x.tape().record(x.value(), {ix}, [ix](Tape& tape, const Tensor& g) {
    if (Tensor* gx = tape.grad_sink(ix)) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] -= g[i];
    }
  });
}

Var detach(Var x) { return x.tape().constant(x.value()); }

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  const std::size_t m = out.rows(), n = out.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* r = out.raw() + i * n;
    const double mx = *std::max_element(r, r + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      r[j] = std::exp(r[j] - mx);
      z += r[j];
    }
    for (std::size_t j = 0; j < n; ++j) r[j] /= z;
  }
  return out;
}

Var softmax_cross_entropy(Var logits, const std::vector<std::size_t>& targets, const std::vector<double>& mask) {
  const Tensor& lv = logits.value();
  require_matrix(lv, "softmax_cross_entropy");
  const std::size_t m = lv.rows(), n = lv.cols();
  if (targets.size() != m || mask.size() != m) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets / " +
                     std::to_string(mask.size()) + " mask entries for logits " + shape_string(lv.shape()));
  }
  double weight = 0.0;
  for (double w : mask) weight += w;
  if (!(weight > 0.0)) throw DataError("softmax_cross_entropy: degenerate batch, mask is all zero");

  auto probs = std::make_shared<Tensor>(Shape{m, n});
  double loss = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] >= n) throw ShapeError("softmax_cross_entropy: target outside vocabulary");
    const double* r = lv.raw() + i * n;
    double* p = probs->raw() + i * n;
    const double mx = *std::max_element(r, r + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      p[j] = std::exp(r[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < n; ++j) p[j] /= z;
    if (mask[i] != 0.0) loss += mask[i] * (mx + std::log(z) - r[targets[i]]);
  }
  loss /= weight;
  const NodeId il = logits.id();
  return logits.tape().record(Tensor::scalar(loss), {il},
                              [il, targets, mask, weight, probs, m, n](Tape& tape, const Tensor& g) {
    if (Tensor* gl = tape.grad_sink(il)) {
      const double up = g[0] / weight;
      for (std::size_t i = 0; i < m; ++i) {
        if (mask[i] == 0.0) continue;
        const double w = up * mask[i];
        const double* p = probs->raw() + i * n;
        double* gi = gl->raw() + i * n;
        for (std::size_t j = 0; j < n; ++j) gi[j] += w * p[j];
        gi[targets[i]] -= w;
      }
    }
  });
}

}  // namespace prada::ad
