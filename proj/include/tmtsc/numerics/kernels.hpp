#pragma once

#include "tmtsc/errors.hpp"
#include "tmtsc/numerics/types.hpp"

#include <cmath>
#include <string>

namespace tmtsc {

template <typename Derived>
std::string shape_string(const Eigen::MatrixBase<Derived>& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

/// Row i of the result is W * x_i + b.
template <typename DX, typename DW, typename DB>
auto dense(const Eigen::MatrixBase<DX>& x, const Eigen::MatrixBase<DW>& W,
           const Eigen::MatrixBase<DB>& b) {
  using Scalar = typename DX::Scalar;
  if (x.cols() != W.cols() || b.size() != W.rows()) {
    throw Error(ErrorKind::dimension, "dense: input " + shape_string(x) + " does not conform to weight " +
                                          shape_string(W) + " and bias " + shape_string(b));
  }
  MatrixX<Scalar> out = x * W.transpose();
  out.rowwise() += b.reshaped().transpose();
  return out;
}

/// Max-subtracted softmax of a vector.
template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  if (!v.allFinite()) throw Error(ErrorKind::numeric_input, "softmax: non-finite input");
  VectorX<Scalar> e = (v.reshaped().array() - v.maxCoeff()).exp();
  return e / e.sum();
}

/// Row-wise softmax. Entries more than 700 below their row maximum (masked
/// logits at -1e30 in particular) come out as exact zeros: the vectorized exp
/// clamps its argument and would otherwise return subnormals.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const Scalar m = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - m).eval();
    out.row(i) = (shifted < Scalar(-700)).select(Scalar(0), shifted.exp());
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  using std::exp;
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-x));
  const Scalar e = exp(x);
  return e / (Scalar(1) + e);
}

/// Gate weights for one GRU direction. Rows of W, U and b are stacked as
/// [reset; update; candidate], each block hidden rows tall.
template <typename Scalar>
struct GruWeights {
  MatrixX<Scalar> W;  // 3H x F
  MatrixX<Scalar> U;  // 3H x H
  VectorX<Scalar> b;  // 3H

  [[nodiscard]] Index hidden() const { return U.cols(); }
};

/// r = s(W_r x + U_r h + b_r), z = s(W_z x + U_z h + b_z),
/// c = tanh(W_h x + U_h (r*h) + b_h), h' = (1 - z) * h + z * c.
template <typename Scalar>
VectorX<Scalar> gru_cell(const VectorX<Scalar>& x, const VectorX<Scalar>& h_prev, const GruWeights<Scalar>& w) {
  const Index H = w.hidden();
  if (w.W.rows() != 3 * H || w.W.cols() != x.size() || w.U.rows() != 3 * H || h_prev.size() != H ||
      w.b.size() != 3 * H) {
    throw Error(ErrorKind::dimension, "gru_cell: input " + std::to_string(x.size()) + ", state " +
                                          std::to_string(h_prev.size()) + " do not conform to W " +
                                          shape_string(w.W) + " and U " + shape_string(w.U));
  }
  const VectorX<Scalar> xw = w.W * x + w.b;
  VectorX<Scalar> r(H), z(H), c(H);
  const VectorX<Scalar> hu = w.U.topRows(2 * H) * h_prev;
  for (Index j = 0; j < H; ++j) {
    r(j) = sigmoid(xw(j) + hu(j));
    z(j) = sigmoid(xw(H + j) + hu(H + j));
  }
  const VectorX<Scalar> rh = r.cwiseProduct(h_prev);
  const VectorX<Scalar> cand = w.U.bottomRows(H) * rh;
  using std::tanh;
  for (Index j = 0; j < H; ++j) c(j) = tanh(xw(2 * H + j) + cand(j));
  return (VectorX<Scalar>::Ones(H) - z).cwiseProduct(h_prev) + z.cwiseProduct(c);
}

/// Fixed sinusoidal position table, T x D.
template <typename Scalar>
MatrixX<Scalar> sinusoidal_positions(Index steps, Index dim) {
  MatrixX<Scalar> table(steps, dim);
  for (Index t = 0; t < steps; ++t) {
    for (Index i = 0; i < dim; ++i) {
      using std::cos, std::pow, std::sin;
      const Scalar freq = pow(Scalar(10000), -Scalar(2 * (i / 2)) / Scalar(dim));
      table(t, i) = (i % 2 == 0) ? sin(Scalar(t) * freq) : cos(Scalar(t) * freq);
    }
  }
  return table;
}

}  // namespace tmtsc
