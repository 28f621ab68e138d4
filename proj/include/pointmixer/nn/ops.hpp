#pragma once

#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "pointmixer/nn/tape.hpp"

namespace pmx {

using IndexList = std::shared_ptr<const std::vector<Index>>;

inline IndexList make_index_list(std::vector<Index> v) {
  return std::make_shared<const std::vector<Index>>(std::move(v));
}

namespace detail {

template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
}

inline void require_offsets(const std::vector<Index>& offsets, Index rows, const char* op) {
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != rows)
    throw ShapeError(std::string(op) + ": malformed segment offsets");
  for (std::size_t i = 1; i < offsets.size(); ++i)
    if (offsets[i] < offsets[i - 1]) throw ShapeError(std::string(op) + ": offsets decrease");
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "add");
  return a.tape->record("add", a.value() + b.value(), {a, b},
                        [a, b](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
                          if (t.requires_grad(a)) t.grad(a) += g;
                          if (t.requires_grad(b)) t.grad(b) += g;
                        });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "sub");
  return a.tape->record("sub", a.value() - b.value(), {a, b},
                        [a, b](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
                          if (t.requires_grad(a)) t.grad(a) += g;
                          if (t.requires_grad(b)) t.grad(b) -= g;
                        });
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "mul");
  MatrixX<Scalar> y = a.value().cwiseProduct(b.value());
  return a.tape->record("mul", std::move(y), {a, b},
                        [a, b](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
                          if (t.requires_grad(a)) t.grad(a) += g.cwiseProduct(t.value(b));
                          if (t.requires_grad(b)) t.grad(b) += g.cwiseProduct(t.value(a));
                        });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> x, Scalar s) {
  return x.tape->record("scale", x.value() * s, {x},
                        [x, s](Tape<Scalar>& t, const MatrixX<Scalar>& g) { t.grad(x) += g * s; });
}

/// Row e of x multiplied by the scalar w(e, 0).
template <typename Scalar>
Var<Scalar> scale_rows(Var<Scalar> x, Var<Scalar> w) {
  if (w.cols() != 1 || w.rows() != x.rows()) throw ShapeError("scale_rows: weight must be rows x 1");
  MatrixX<Scalar> y = x.value().array().colwise() * w.value().col(0).array();
  return x.tape->record("scale_rows", std::move(y), {x, w},
                        [x, w](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
                          if (t.requires_grad(x))
                            t.grad(x).array() += g.array().colwise() * t.value(w).col(0).array();
                          if (t.requires_grad(w))
                            t.grad(w).col(0) += g.cwiseProduct(t.value(x)).rowwise().sum();
                        });
}

/// y = x W^T + b over the last axis. W is out x in, b is 1 x out (optional).
template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b = {}) {
  if (x.cols() != w.cols())
    throw ShapeError("linear: input width " + std::to_string(x.cols()) + " != weight in " +
                     std::to_string(w.cols()));
  MatrixX<Scalar> y = x.value() * w.value().transpose();
  if (b.valid()) {
    if (b.rows() != 1 || b.cols() != w.rows()) throw ShapeError("linear: bias shape mismatch");
    y.rowwise() += b.value().row(0);
  }
  return x.tape->record("linear", std::move(y), {x, w, b},
                        [x, w, b](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
                          if (t.requires_grad(x)) t.grad(x).noalias() += g * t.value(w);
                          if (t.requires_grad(w)) t.grad(w).noalias() += g.transpose() * t.value(x);
                          if (b.valid() && t.requires_grad(b)) t.grad(b) += g.colwise().sum();
                        });
}

template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> x) {
  const auto& xv = x.value();
  MatrixX<Scalar> y(xv.rows(), xv.cols());
  // derivative cdf(v) + v pdf(v), kept for the backward pass
  auto dy = std::make_shared<MatrixX<Scalar>>(xv.rows(), xv.cols());
  const Scalar inv_sqrt_2pi = Scalar(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  for (Index i = 0; i < xv.size(); ++i) {
    const Scalar v = xv.data()[i];
    const Scalar cdf = Scalar(0.5) * (Scalar(1) + std::erf(v * Scalar(std::numbers::sqrt2 / 2)));
    y.data()[i] = v * cdf;
    dy->data()[i] = cdf + v * inv_sqrt_2pi * std::exp(Scalar(-0.5) * v * v);
  }
  return x.tape->record("gelu", std::move(y), {x}, [x, dy](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
    t.grad(x).array() += g.array() * dy->array();
  });
}

/// Per-row standardization with population variance, then gamma/beta (1 x C).
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta, Scalar eps = Scalar(1e-5)) {
  const Index c = x.cols();
  if (c < 1) throw ShapeError("layer_norm: needs at least one channel");
  if (gamma.cols() != c || beta.cols() != c) throw ShapeError("layer_norm: affine width mismatch");
  const auto& xv = x.value();
  auto xhat = std::make_shared<MatrixX<Scalar>>(xv.rows(), c);
  auto inv_std = std::make_shared<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar mean = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mean).square().mean();
    (*inv_std)(r) = Scalar(1) / std::sqrt(var + eps);
    xhat->row(r) = (xv.row(r).array() - mean) * (*inv_std)(r);
  }
  MatrixX<Scalar> y = xhat->array().rowwise() * gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);
  return x.tape->record(
      "layer_norm", std::move(y), {x, gamma, beta},
      [x, gamma, beta, xhat, inv_std](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
        if (t.requires_grad(gamma)) t.grad(gamma) += g.cwiseProduct(*xhat).colwise().sum();
        if (t.requires_grad(beta)) t.grad(beta) += g.colwise().sum();
        if (!t.requires_grad(x)) return;
        const MatrixX<Scalar> dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
        auto& gx = t.grad(x);
        for (Index r = 0; r < g.rows(); ++r) {
          const Scalar m1 = dxhat.row(r).mean();
          const Scalar m2 = dxhat.row(r).cwiseProduct(xhat->row(r)).mean();
          gx.row(r).array() +=
              (*inv_std)(r) * (dxhat.row(r).array() - m1 - xhat->row(r).array() * m2);
        }
      });
}

/// out.row(e) = x.row(indices[e])
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> x, IndexList indices) {
  const auto& xv = x.value();
  MatrixX<Scalar> y(static_cast<Index>(indices->size()), xv.cols());
  for (std::size_t e = 0; e < indices->size(); ++e) {
    const Index r = (*indices)[e];
    if (r < 0 || r >= xv.rows()) throw ShapeError("gather_rows: index out of range");
    y.row(static_cast<Index>(e)) = xv.row(r);
  }
  return x.tape->record("gather_rows", std::move(y), {x},
                        [x, indices](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
                          auto& gx = t.grad(x);
                          for (std::size_t e = 0; e < indices->size(); ++e)
                            gx.row((*indices)[e]) += g.row(static_cast<Index>(e));
                        });
}

/// out.row(indices[e]) += x.row(e), out has out_rows rows.
template <typename Scalar>
Var<Scalar> scatter_add(Var<Scalar> x, IndexList indices, Index out_rows) {
  const auto& xv = x.value();
  if (static_cast<Index>(indices->size()) != xv.rows())
    throw ShapeError("scatter_add: one index per input row required");
  MatrixX<Scalar> y = MatrixX<Scalar>::Zero(out_rows, xv.cols());
  for (std::size_t e = 0; e < indices->size(); ++e) {
    const Index r = (*indices)[e];
    if (r < 0 || r >= out_rows) throw ShapeError("scatter_add: index out of range");
    y.row(r) += xv.row(static_cast<Index>(e));
  }
  return x.tape->record("scatter_add", std::move(y), {x},
                        [x, indices](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
                          auto& gx = t.grad(x);
                          for (std::size_t e = 0; e < indices->size(); ++e)
                            gx.row(static_cast<Index>(e)) += g.row((*indices)[e]);
                        });
}

/// Softmax over the rows of each segment, independently per column, with
/// max subtraction. Empty segments contribute no rows.
template <typename Scalar>
Var<Scalar> segment_softmax(Var<Scalar> scores, IndexList offsets) {
  const auto& s = scores.value();
  detail::require_offsets(*offsets, s.rows(), "segment_softmax");
  MatrixX<Scalar> y(s.rows(), s.cols());
  for (std::size_t q = 0; q + 1 < offsets->size(); ++q) {
    const Index lo = (*offsets)[q];
    const Index n = (*offsets)[q + 1] - lo;
    if (n == 0) continue;
    auto seg = s.middleRows(lo, n);
    auto out = y.middleRows(lo, n);
    const RowVectorX<Scalar> mx = seg.colwise().maxCoeff();
    out = (seg.rowwise() - mx).array().exp().matrix();
    const RowVectorX<Scalar> total = out.colwise().sum();
    out.array().rowwise() /= total.array();
  }
  auto weights = std::make_shared<MatrixX<Scalar>>(y);
  return scores.tape->record(
      "segment_softmax", std::move(y), {scores},
      [scores, offsets, weights](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
        auto& gs = t.grad(scores);
        for (std::size_t q = 0; q + 1 < offsets->size(); ++q) {
          const Index lo = (*offsets)[q];
          const Index n = (*offsets)[q + 1] - lo;
          if (n == 0) continue;
          auto w = weights->middleRows(lo, n);
          auto gw = g.middleRows(lo, n);
          const RowVectorX<Scalar> dot = w.cwiseProduct(gw).colwise().sum();
          gs.middleRows(lo, n).array() += w.array() * (gw.rowwise() - dot).array();
        }
      });
}

/// Column-wise maximum over each segment; empty segments yield zero rows.
template <typename Scalar>
Var<Scalar> segment_max(Var<Scalar> x, IndexList offsets) {
  const auto& xv = x.value();
  detail::require_offsets(*offsets, xv.rows(), "segment_max");
  const Index segments = static_cast<Index>(offsets->size()) - 1;
  MatrixX<Scalar> y = MatrixX<Scalar>::Zero(segments, xv.cols());
  auto argmax = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(segments * xv.cols()), -1);
  for (Index q = 0; q < segments; ++q) {
    for (Index e = (*offsets)[q]; e < (*offsets)[q + 1]; ++e) {
      for (Index c = 0; c < xv.cols(); ++c) {
        Index& best = (*argmax)[q * xv.cols() + c];
        if (best < 0 || xv(e, c) > xv(best, c)) best = e;
      }
    }
    for (Index c = 0; c < xv.cols(); ++c) {
      const Index best = (*argmax)[q * xv.cols() + c];
      if (best >= 0) y(q, c) = xv(best, c);
    }
  }
  return x.tape->record("segment_max", std::move(y), {x},
                        [x, argmax](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
                          auto& gx = t.grad(x);
                          const Index cols = g.cols();
                          for (Index q = 0; q < g.rows(); ++q)
                            for (Index c = 0; c < cols; ++c) {
                              const Index best = (*argmax)[q * cols + c];
                              if (best >= 0) gx(best, c) += g(q, c);
                            }
                        });
}

template <typename Scalar>
Var<Scalar> concat_cols(Var<Scalar> a, Var<Scalar> b) {
  if (a.rows() != b.rows()) throw ShapeError("concat_cols: row mismatch");
  MatrixX<Scalar> y(a.rows(), a.cols() + b.cols());
  y << a.value(), b.value();
  const Index split = a.cols();
  return a.tape->record("concat_cols", std::move(y), {a, b},
                        [a, b, split](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
                          if (t.requires_grad(a)) t.grad(a) += g.leftCols(split);
                          if (t.requires_grad(b)) t.grad(b) += g.rightCols(g.cols() - split);
                        });
}

/// 1 x C mean over rows.
template <typename Scalar>
Var<Scalar> mean_rows(Var<Scalar> x) {
  if (x.rows() == 0) throw ShapeError("mean_rows: no rows");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(x.rows());
  MatrixX<Scalar> y = x.value().colwise().sum() * inv;
  return x.tape->record("mean_rows", std::move(y), {x},
                        [x, inv](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
                          t.grad(x).rowwise() += g.row(0) * inv;
                        });
}

/// 1 x 1 sum of all entries.
template <typename Scalar>
Var<Scalar> sum(Var<Scalar> x) {
  MatrixX<Scalar> y(1, 1);
  y(0, 0) = x.value().sum();
  return x.tape->record("sum", std::move(y), {x}, [x](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
    t.grad(x).array() += g(0, 0);
  });
}

/// Linear map along the token axis of consecutive groups of K rows:
/// out[g*H + h, :] = sum_k W[h, k] x[g*K + k, :] + b[h]. W is H x K, b is 1 x H.
template <typename Scalar>
Var<Scalar> group_linear(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b) {
  const Index k = w.cols();
  const Index h = w.rows();
  if (x.rows() % k != 0) throw CardinalityError("group_linear: rows are not a multiple of K");
  if (b.rows() != 1 || b.cols() != h) throw ShapeError("group_linear: bias shape mismatch");
  const Index groups = x.rows() / k;
  const auto& xv = x.value();
  MatrixX<Scalar> y(groups * h, xv.cols());
  for (Index gi = 0; gi < groups; ++gi) {
    y.middleRows(gi * h, h).noalias() = w.value() * xv.middleRows(gi * k, k);
    y.middleRows(gi * h, h).colwise() += b.value().row(0).transpose();
  }
  return x.tape->record(
      "group_linear", std::move(y), {x, w, b},
      [x, w, b, k, h, groups](Tape<Scalar>& t, const MatrixX<Scalar>& g) {
        for (Index gi = 0; gi < groups; ++gi) {
          auto gg = g.middleRows(gi * h, h);
          if (t.requires_grad(x)) t.grad(x).middleRows(gi * k, k).noalias() += t.value(w).transpose() * gg;
          if (t.requires_grad(w))
            t.grad(w).noalias() += gg * t.value(x).middleRows(gi * k, k).transpose();
          if (t.requires_grad(b)) t.grad(b).row(0) += gg.rowwise().sum().transpose();
        }
      });
}

// Layer helpers binding stored parameters onto the tape.

template <typename Scalar>
Var<Scalar> apply(const LinearLayer& l, Var<Scalar> x) {
  Tape<Scalar>& t = *x.tape;
  return linear(x, t.param(l.weight), l.bias.valid() ? t.param(l.bias) : Var<Scalar>{});
}

template <typename Scalar>
Var<Scalar> apply(const Mlp& m, Var<Scalar> x) {
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (i > 0) x = gelu(x);
    x = apply(m.layers[i], x);
  }
  return x;
}

template <typename Scalar>
Var<Scalar> apply(const LayerNormLayer& l, Var<Scalar> x) {
  Tape<Scalar>& t = *x.tape;
  return layer_norm(x, t.param(l.gamma), t.param(l.beta));
}

}  // namespace pmx
