#include "tmtsc/numerics/tape.hpp"

#include "tmtsc/numerics/quad.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

namespace tmtsc {

template <typename S>
BasicVar<S> BasicTape<S>::constant(M value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

template <typename S>
BasicVar<S> BasicTape<S>::bind(BasicParameter<S>& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) return Var{this, it->second};
  Node node;
  node.value = param.value.data;
  node.needs_grad = record_ && param.trainable;
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size() - 1);
  bound_.emplace(&param, id);
  if (nodes_[id].needs_grad) bindings_.emplace_back(id, &param);
  return Var{this, id};
}

template <typename S>
BasicVar<S> BasicTape<S>::push(M value, std::initializer_list<Var> parents, Backward backward) {
  return push(std::move(value), std::span<const Var>(parents.begin(), parents.size()), std::move(backward));
}

template <typename S>
BasicVar<S> BasicTape<S>::push(M value, std::span<const Var> parents, Backward backward) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    for (const Var& p : parents) {
      if (nodes_[p.id].needs_grad) {
        node.needs_grad = true;
        break;
      }
    }
    if (node.needs_grad) node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

template <typename S>
MatrixX<S>& BasicTape<S>::grad(int id) {
  M& buf = nodes_[id].grad;
  if (buf.size() == 0) buf = M::Zero(nodes_[id].value.rows(), nodes_[id].value.cols());
  return buf;
}

template <typename S>
void BasicTape<S>::backward(Var loss) {
  if (loss.tape != this) throw Error(ErrorKind::configuration, "backward: loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw Error(ErrorKind::dimension, "backward: loss must be 1x1, got " + shape_string(loss.value()));
  }
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad = M::Ones(1, 1);
  for (int id = loss.id; id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.backward && node.grad.size() != 0) {
      // The closure may touch other nodes' buffers but never this one's.
      const M g = std::move(node.grad);
      node.backward(*this, g);
      node.grad = g;
    }
  }
  for (auto& [id, param] : bindings_) {
    if (nodes_[id].grad.size() != 0) param->grad += nodes_[id].grad;
  }
}

template <typename S>
void BasicTape<S>::record_active_set(const M& pre_activation) {
  if (!track_kinks_) return;
  std::uint64_t h = kink_signature_;
  for (Index i = 0; i < pre_activation.size(); ++i) {
    h ^= pre_activation.data()[i] > S(0) ? 0x9dU : 0x31U;
    h *= 0x100000001b3ULL;
  }
  kink_signature_ = h;
}

template class BasicTape<double>;
template class BasicTape<long double>;
template class BasicTape<Quad>;

namespace ad {
namespace {

template <typename A, typename B>
void require_same_shape(const char* op, const A& a, const B& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorKind::dimension, std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b) +
                                          " differ");
  }
}

template <typename S>
BasicTape<S>& tape_of(V<S> a) {
  if (a.tape == nullptr) throw Error(ErrorKind::configuration, "variable is not attached to a tape");
  return *a.tape;
}

}  // namespace

template <typename S>
V<S> matmul(V<S> a, V<S> b) {
  using M = MatrixX<S>;
  const M& A = a.value();
  const M& B = b.value();
  if (A.cols() != B.rows()) {
    throw Error(ErrorKind::dimension, "matmul: " + shape_string(A) + " * " + shape_string(B));
  }
  return tape_of(a).push(A * B, {a, b}, [a, b](BasicTape<S>& t, const M& g) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, g * t.value(b.id).transpose());
    if (t.needs_grad(b.id)) t.accumulate(b.id, t.value(a.id).transpose() * g);
  });
}

template <typename S>
V<S> matmul_nt(V<S> a, V<S> b) {
  using M = MatrixX<S>;
  const M& A = a.value();
  const M& B = b.value();
  if (A.cols() != B.cols()) {
    throw Error(ErrorKind::dimension, "matmul_nt: " + shape_string(A) + " * " + shape_string(B) + "^T");
  }
  return tape_of(a).push(A * B.transpose(), {a, b}, [a, b](BasicTape<S>& t, const M& g) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, g * t.value(b.id));
    if (t.needs_grad(b.id)) t.accumulate(b.id, g.transpose() * t.value(a.id));
  });
}

template <typename S>
V<S> dense(V<S> x, V<S> W, V<S> b) {
  using M = MatrixX<S>;
  M out = tmtsc::dense(x.value(), W.value(), b.value());
  return tape_of(x).push(std::move(out), {x, W, b}, [x, W, b](BasicTape<S>& t, const M& g) {
    if (t.needs_grad(x.id)) t.accumulate(x.id, g * t.value(W.id));
    if (t.needs_grad(W.id)) t.accumulate(W.id, g.transpose() * t.value(x.id));
    if (t.needs_grad(b.id)) t.accumulate(b.id, g.colwise().sum());
  });
}

template <typename S>
V<S> add(V<S> a, V<S> b) {
  require_same_shape("add", a.value(), b.value());
  return tape_of(a).push(a.value() + b.value(), {a, b}, [a, b](BasicTape<S>& t, const MatrixX<S>& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

template <typename S>
V<S> sub(V<S> a, V<S> b) {
  require_same_shape("sub", a.value(), b.value());
  return tape_of(a).push(a.value() - b.value(), {a, b}, [a, b](BasicTape<S>& t, const MatrixX<S>& g) {
    t.accumulate(a.id, g);
    t.accumulate(b.id, -g);
  });
}

template <typename S>
V<S> hadamard(V<S> a, V<S> b) {
  require_same_shape("hadamard", a.value(), b.value());
  return tape_of(a).push(a.value().cwiseProduct(b.value()), {a, b}, [a, b](BasicTape<S>& t, const MatrixX<S>& g) {
    if (t.needs_grad(a.id)) t.accumulate(a.id, g.cwiseProduct(t.value(b.id)));
    if (t.needs_grad(b.id)) t.accumulate(b.id, g.cwiseProduct(t.value(a.id)));
  });
}

template <typename S>
V<S> scale(V<S> a, double s) {
  const S k = static_cast<S>(s);
  return tape_of(a).push(a.value() * k, {a}, [a, k](BasicTape<S>& t, const MatrixX<S>& g) {
    t.accumulate(a.id, g * k);
  });
}

template <typename S>
V<S> add_row(V<S> x, V<S> row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw Error(ErrorKind::dimension, "add_row: " + shape_string(x.value()) + " + " + shape_string(row.value()));
  }
  MatrixX<S> out = x.value();
  out.rowwise() += row.value().row(0);
  return tape_of(x).push(std::move(out), {x, row}, [x, row](BasicTape<S>& t, const MatrixX<S>& g) {
    t.accumulate(x.id, g);
    if (t.needs_grad(row.id)) t.accumulate(row.id, g.colwise().sum());
  });
}

template <typename S>
V<S> add_positional(V<S> h, V<S> positions) {
  using M = MatrixX<S>;
  const M& H = h.value();
  const M& P = positions.value();
  if (P.cols() != H.cols() || P.rows() == 0 || H.rows() % P.rows() != 0) {
    throw Error(ErrorKind::dimension, "add_positional: " + shape_string(H) + " + " + shape_string(P));
  }
  const Index steps = P.rows();
  const Index batch = H.rows() / steps;
  M out = H;
  for (Index b = 0; b < batch; ++b) out.middleRows(b * steps, steps) += P;
  return tape_of(h).push(std::move(out), {h, positions},
                         [h, positions, steps, batch](BasicTape<S>& t, const M& g) {
                           t.accumulate(h.id, g);
                           if (t.needs_grad(positions.id)) {
                             M dp = M::Zero(steps, g.cols());
                             for (Index b = 0; b < batch; ++b) dp += g.middleRows(b * steps, steps);
                             t.accumulate(positions.id, dp);
                           }
                         });
}

template <typename S>
V<S> relu(V<S> x) {
  BasicTape<S>& tape = tape_of(x);
  tape.record_active_set(x.value());
  return tape.push(x.value().cwiseMax(S(0)), {x}, [x](BasicTape<S>& t, const MatrixX<S>& g) {
    t.accumulate(x.id, (t.value(x.id).array() > S(0)).select(g, S(0)));
  });
}

template <typename S>
V<S> sigmoid(V<S> x) {
  BasicTape<S>& tape = tape_of(x);
  const int self = tape.next_id();
  return tape.push(x.value().unaryExpr([](S v) { return tmtsc::sigmoid(v); }), {x},
                   [x, self](BasicTape<S>& t, const MatrixX<S>& g) {
                     const auto s = t.value(self).array();
                     t.accumulate(x.id, (g.array() * s * (S(1) - s)).matrix());
                   });
}

template <typename S>
V<S> tanh(V<S> x) {
  BasicTape<S>& tape = tape_of(x);
  const int self = tape.next_id();
  return tape.push(x.value().array().tanh().matrix(), {x}, [x, self](BasicTape<S>& t, const MatrixX<S>& g) {
    const auto s = t.value(self).array();
    t.accumulate(x.id, (g.array() * (S(1) - s * s)).matrix());
  });
}

template <typename S>
V<S> square(V<S> x) {
  return tape_of(x).push(x.value().array().square().matrix(), {x}, [x](BasicTape<S>& t, const MatrixX<S>& g) {
    t.accumulate(x.id, S(2) * g.cwiseProduct(t.value(x.id)));
  });
}

template <typename S>
V<S> sum(V<S> x) {
  using M = MatrixX<S>;
  M out(1, 1);
  out(0, 0) = x.value().sum();
  return tape_of(x).push(std::move(out), {x}, [x](BasicTape<S>& t, const M& g) {
    const M& v = t.value(x.id);
    t.accumulate(x.id, M::Constant(v.rows(), v.cols(), g(0, 0)));
  });
}

template <typename S>
V<S> softmax_rows(V<S> logits) {
  using M = MatrixX<S>;
  BasicTape<S>& tape = tape_of(logits);
  const int self = tape.next_id();
  return tape.push(tmtsc::softmax_rows(logits.value()), {logits}, [logits, self](BasicTape<S>& t, const M& g) {
    const M& s = t.value(self);
    const VectorX<S> dots = g.cwiseProduct(s).rowwise().sum();
    M dx = s.cwiseProduct(g);
    dx -= s.cwiseProduct(dots.replicate(1, s.cols()));
    t.accumulate(logits.id, dx);
  });
}

template <typename S>
V<S> slice_cols(V<S> x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw Error(ErrorKind::dimension, "slice_cols: [" + std::to_string(start) + ", +" + std::to_string(count) +
                                          ") out of " + shape_string(x.value()));
  }
  return tape_of(x).push(x.value().middleCols(start, count), {x},
                         [x, start, count](BasicTape<S>& t, const MatrixX<S>& g) {
                           if (t.needs_grad(x.id)) t.grad(x.id).middleCols(start, count) += g;
                         });
}

template <typename S>
V<S> slice_rows(V<S> x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw Error(ErrorKind::dimension, "slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) +
                                          ") out of " + shape_string(x.value()));
  }
  return tape_of(x).push(x.value().middleRows(start, count), {x},
                         [x, start, count](BasicTape<S>& t, const MatrixX<S>& g) {
                           if (t.needs_grad(x.id)) t.grad(x.id).middleRows(start, count) += g;
                         });
}

template <typename S>
V<S> concat_cols(std::span<const V<S>> parts) {
  using M = MatrixX<S>;
  if (parts.empty()) throw Error(ErrorKind::dimension, "concat_cols: nothing to concatenate");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const V<S>& p : parts) {
    if (p.rows() != rows) {
      throw Error(ErrorKind::dimension, "concat_cols: row counts " + std::to_string(rows) + " and " +
                                            std::to_string(p.rows()) + " differ");
    }
    cols += p.cols();
  }
  M out(rows, cols);
  Index offset = 0;
  for (const V<S>& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<V<S>> owned(parts.begin(), parts.end());
  return tape_of(parts.front()).push(std::move(out), parts, [owned](BasicTape<S>& t, const M& g) {
    Index off = 0;
    for (const V<S>& p : owned) {
      const Index c = t.value(p.id).cols();
      if (t.needs_grad(p.id)) t.accumulate(p.id, g.middleCols(off, c));
      off += c;
    }
  });
}

template <typename S>
V<S> reshape(V<S> x, Index rows, Index cols) {
  using M = MatrixX<S>;
  if (rows * cols != x.value().size()) {
    throw Error(ErrorKind::dimension, "reshape: " + shape_string(x.value()) + " to [" + std::to_string(rows) + "x" +
                                          std::to_string(cols) + "]");
  }
  M out = Eigen::Map<const M>(x.value().data(), rows, cols);
  return tape_of(x).push(std::move(out), {x}, [x](BasicTape<S>& t, const M& g) {
    const M& v = t.value(x.id);
    t.accumulate(x.id, Eigen::Map<const M>(g.data(), v.rows(), v.cols()));
  });
}

template <typename S>
V<S> step_rows(V<S> x, Index steps, Index t_index) {
  using M = MatrixX<S>;
  const M& X = x.value();
  if (steps <= 0 || X.rows() % steps != 0 || t_index < 0 || t_index >= steps) {
    throw Error(ErrorKind::dimension, "step_rows: step " + std::to_string(t_index) + " of " + std::to_string(steps) +
                                          " in " + shape_string(X));
  }
  const Index batch = X.rows() / steps;
  M out(batch, X.cols());
  for (Index b = 0; b < batch; ++b) out.row(b) = X.row(b * steps + t_index);
  return tape_of(x).push(std::move(out), {x}, [x, steps, t_index, batch](BasicTape<S>& t, const M& g) {
    if (!t.needs_grad(x.id)) return;
    M& dx = t.grad(x.id);
    for (Index b = 0; b < batch; ++b) dx.row(b * steps + t_index) += g.row(b);
  });
}

template <typename S>
V<S> blend_rows(const Vector& keep, V<S> a, V<S> b) {
  using M = MatrixX<S>;
  require_same_shape("blend_rows", a.value(), b.value());
  if (keep.size() != a.rows()) throw Error(ErrorKind::dimension, "blend_rows: mask length mismatch");
  M out = b.value();
  for (Index i = 0; i < keep.size(); ++i) {
    if (keep(i) != 0.0) out.row(i) = a.value().row(i);
  }
  return tape_of(a).push(std::move(out), {a, b}, [keep, a, b](BasicTape<S>& t, const M& g) {
    M da = g, db = g;
    for (Index i = 0; i < keep.size(); ++i) {
      if (keep(i) != 0.0) {
        db.row(i).setZero();
      } else {
        da.row(i).setZero();
      }
    }
    t.accumulate(a.id, da);
    t.accumulate(b.id, db);
  });
}

template <typename S>
V<S> mask_rows(V<S> x, const Vector& keep) {
  using M = MatrixX<S>;
  if (keep.size() != x.rows()) throw Error(ErrorKind::dimension, "mask_rows: mask length mismatch");
  M out = x.value();
  for (Index i = 0; i < keep.size(); ++i) {
    if (keep(i) == 0.0) out.row(i).setZero();
  }
  return tape_of(x).push(std::move(out), {x}, [keep, x](BasicTape<S>& t, const M& g) {
    M dx = g;
    for (Index i = 0; i < keep.size(); ++i) {
      if (keep(i) == 0.0) dx.row(i).setZero();
    }
    t.accumulate(x.id, dx);
  });
}

template <typename S>
V<S> embedding(std::span<const int> ids, V<S> table) {
  using M = MatrixX<S>;
  const M& E = table.value();
  M out(static_cast<Index>(ids.size()), E.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= E.rows()) {
      throw Error(ErrorKind::vocabulary, "embedding: id " + std::to_string(ids[i]) + " outside vocabulary of size " +
                                             std::to_string(E.rows()));
    }
    out.row(static_cast<Index>(i)) = E.row(ids[i]);
  }
  std::vector<int> owned(ids.begin(), ids.end());
  return tape_of(table).push(std::move(out), {table},
                             [owned = std::move(owned), table](BasicTape<S>& t, const M& g) {
                               M& dE = t.grad(table.id);
                               for (std::size_t i = 0; i < owned.size(); ++i) {
                                 dE.row(owned[i]) += g.row(static_cast<Index>(i));
                               }
                             });
}

Vector row_mask(const Matrix& step_mask) {
  return Eigen::Map<const Vector>(step_mask.data(), step_mask.size());
}

template <typename S>
V<S> batch_norm(V<S> x, V<S> gamma, V<S> beta, const Vector& keep, Mode mode, const NormStats<S>& stats) {
  using M = MatrixX<S>;
  using RV = RowVectorX<S>;
  const M& X = x.value();
  const Index D = X.cols();
  if (gamma.value().size() != D || beta.value().size() != D || keep.size() != X.rows()) {
    throw Error(ErrorKind::dimension, "batch_norm: input " + shape_string(X) + ", gamma " +
                                          shape_string(gamma.value()) + ", mask length " + std::to_string(keep.size()));
  }
  if (stats.running_mean == nullptr || stats.running_var == nullptr) {
    throw Error(ErrorKind::configuration, "batch_norm: running statistics not provided");
  }
  const VectorX<S> keep_s = keep.template cast<S>();
  const S n = keep_s.sum();
  RV mean(D), var(D);
  if (mode == Mode::train) {
    if (n <= S(0)) throw Error(ErrorKind::degenerate_batch, "batch_norm: every position is masked");
    mean = (keep_s.transpose() * X) / n;
    const M centered = X.rowwise() - mean;
    var = (keep_s.transpose() * centered.cwiseProduct(centered)) / n;
    const S mom = static_cast<S>(stats.momentum);
    M& rm = stats.running_mean->value.data;
    M& rv = stats.running_var->value.data;
    rm = (S(1) - mom) * rm + mom * M(mean);
    rv = (S(1) - mom) * rv + mom * M(var);
  } else {
    mean = stats.running_mean->value.data.row(0);
    var = stats.running_var->value.data.row(0);
  }
  const RV inv = (var.array() + static_cast<S>(stats.eps)).rsqrt().matrix();
  M xhat = (X.rowwise() - mean).array().rowwise() * inv.array();
  M out = xhat.array().rowwise() * gamma.value().reshaped().transpose().array();
  out.rowwise() += beta.value().reshaped().transpose();

  return tape_of(x).push(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, keep, mode, n, inv, xhat = std::move(xhat)](BasicTape<S>& t, const M& g) {
        const RV gam = t.value(gamma.id).reshaped().transpose();
        if (t.needs_grad(gamma.id)) t.accumulate(gamma.id, M(g.cwiseProduct(xhat).colwise().sum()));
        if (t.needs_grad(beta.id)) t.accumulate(beta.id, M(g.colwise().sum()));
        if (!t.needs_grad(x.id)) return;
        const RV scale_row = gam.cwiseProduct(inv);
        if (mode == Mode::eval) {
          t.accumulate(x.id, M(g.array().rowwise() * scale_row.array()));
          return;
        }
        // Every output row depends on the statistics, but only kept rows
        // feed them, so only kept rows see the correction terms.
        const RV sum_g = g.colwise().sum() / n;
        const RV sum_gx = g.cwiseProduct(xhat).colwise().sum() / n;
        M dx = g;
        for (Index i = 0; i < dx.rows(); ++i) {
          if (keep(i) != 0.0) dx.row(i) -= sum_g + xhat.row(i).cwiseProduct(sum_gx);
        }
        t.accumulate(x.id, M(dx.array().rowwise() * scale_row.array()));
      });
}

template <typename S>
V<S> layer_norm(V<S> x, V<S> gamma, V<S> beta, double eps) {
  using M = MatrixX<S>;
  using Vc = VectorX<S>;
  const M& X = x.value();
  const Index D = X.cols();
  if (D < 1 || gamma.value().size() != D || beta.value().size() != D) {
    throw Error(ErrorKind::dimension, "layer_norm: input " + shape_string(X) + ", gamma " +
                                          shape_string(gamma.value()));
  }
  const Vc mean = X.rowwise().mean();
  const M centered = X.colwise() - mean;
  const Vc var = centered.cwiseProduct(centered).rowwise().mean();
  const Vc inv = (var.array() + static_cast<S>(eps)).rsqrt().matrix();
  M xhat = inv.asDiagonal() * centered;
  M out = xhat.array().rowwise() * gamma.value().reshaped().transpose().array();
  out.rowwise() += beta.value().reshaped().transpose();
  return tape_of(x).push(std::move(out), {x, gamma, beta},
                         [x, gamma, beta, inv, xhat = std::move(xhat)](BasicTape<S>& t, const M& g) {
                           const RowVectorX<S> gam = t.value(gamma.id).reshaped().transpose();
                           if (t.needs_grad(gamma.id)) {
                             t.accumulate(gamma.id, M(g.cwiseProduct(xhat).colwise().sum()));
                           }
                           if (t.needs_grad(beta.id)) t.accumulate(beta.id, M(g.colwise().sum()));
                           if (!t.needs_grad(x.id)) return;
                           const M gh = g.array().rowwise() * gam.array();
                           const S D = static_cast<S>(gh.cols());
                           const Vc mean_g = gh.rowwise().sum() / D;
                           const Vc mean_gx = gh.cwiseProduct(xhat).rowwise().sum() / D;
                           M dx = gh.colwise() - mean_g;
                           dx -= mean_gx.asDiagonal() * xhat;
                           t.accumulate(x.id, inv.asDiagonal() * dx);
                         });
}

template <typename S>
V<S> attention(V<S> q, V<S> k, V<S> v, const Matrix& step_mask, Index n_heads) {
  using M = MatrixX<S>;
  const M& Q = q.value();
  const M& K = k.value();
  const M& Vm = v.value();
  const Index D = Q.cols();
  if (n_heads <= 0 || D % n_heads != 0) {
    throw Error(ErrorKind::configuration, "attention: model dimension " + std::to_string(D) +
                                              " is not divisible by " + std::to_string(n_heads) + " heads");
  }
  require_same_shape("attention", Q, K);
  require_same_shape("attention", Q, Vm);
  const Index B = step_mask.rows();
  const Index T = step_mask.cols();
  if (B * T != Q.rows()) {
    throw Error(ErrorKind::dimension, "attention: mask " + shape_string(step_mask) + " vs activations " +
                                          shape_string(Q));
  }
  const Index dh = D / n_heads;
  using std::sqrt;
  const S scale = S(1) / sqrt(static_cast<S>(dh));
  const S masked = static_cast<S>(-1e30);

  std::vector<M> weights(static_cast<std::size_t>(B * n_heads));
  M out(Q.rows(), D);
  for (Index b = 0; b < B; ++b) {
    for (Index h = 0; h < n_heads; ++h) {
      const auto qb = Q.block(b * T, h * dh, T, dh);
      const auto kb = K.block(b * T, h * dh, T, dh);
      M logits = (qb * kb.transpose()) * scale;
      for (Index j = 0; j < T; ++j) {
        if (step_mask(b, j) == 0.0) logits.col(j).setConstant(masked);
      }
      M& A = weights[static_cast<std::size_t>(b * n_heads + h)];
      A = tmtsc::softmax_rows(logits);
      out.block(b * T, h * dh, T, dh).noalias() = A * Vm.block(b * T, h * dh, T, dh);
    }
  }
  return tape_of(q).push(
      std::move(out), {q, k, v},
      [q, k, v, B, T, n_heads, dh, scale, weights = std::move(weights)](BasicTape<S>& t, const M& g) {
        const M& Qv = t.value(q.id);
        const M& Kv = t.value(k.id);
        const M& Vv = t.value(v.id);
        M dQ = M::Zero(Qv.rows(), Qv.cols());
        M dK = M::Zero(Qv.rows(), Qv.cols());
        M dV = M::Zero(Qv.rows(), Qv.cols());
        for (Index b = 0; b < B; ++b) {
          for (Index h = 0; h < n_heads; ++h) {
            const M& A = weights[static_cast<std::size_t>(b * n_heads + h)];
            const auto gb = g.block(b * T, h * dh, T, dh);
            dV.block(b * T, h * dh, T, dh).noalias() += A.transpose() * gb;
            const M dA = gb * Vv.block(b * T, h * dh, T, dh).transpose();
            const VectorX<S> dots = dA.cwiseProduct(A).rowwise().sum();
            const M dS = A.cwiseProduct(dA - dots.replicate(1, T)) * scale;
            dQ.block(b * T, h * dh, T, dh).noalias() += dS * Kv.block(b * T, h * dh, T, dh);
            dK.block(b * T, h * dh, T, dh).noalias() += dS.transpose() * Qv.block(b * T, h * dh, T, dh);
          }
        }
        t.accumulate(q.id, dQ);
        t.accumulate(k.id, dK);
        t.accumulate(v.id, dV);
      });
}

template <typename S>
V<S> multi_head_attention(V<S> h, const Matrix& step_mask, Index n_heads, const AttentionWeights<S>& w) {
  const V<S> q = dense(h, w.Wq, w.bq);
  const V<S> k = matmul_nt(h, w.Wk);
  const V<S> v = dense(h, w.Wv, w.bv);
  return dense(attention(q, k, v, step_mask, n_heads), w.Wo, w.bo);
}

template <typename S>
V<S> dropout(V<S> x, double rate, Mode mode, Rng& rng) {
  using M = MatrixX<S>;
  if (rate < 0.0 || rate >= 1.0) {
    throw Error(ErrorKind::configuration, "dropout: rate " + std::to_string(rate) + " outside [0, 1)");
  }
  if (mode == Mode::eval || rate == 0.0) return x;
  const S keep_scale = S(1) / (S(1) - static_cast<S>(rate));
  M mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < rate ? S(0) : keep_scale;
  M out = x.value().cwiseProduct(mask);
  return tape_of(x).push(std::move(out), {x}, [x, mask = std::move(mask)](BasicTape<S>& t, const M& g) {
    t.accumulate(x.id, g.cwiseProduct(mask));
  });
}

template <typename S>
V<S> masked_mean(V<S> x, const Matrix& step_mask) {
  using M = MatrixX<S>;
  const Index B = step_mask.rows();
  const Index T = step_mask.cols();
  if (B * T != x.rows()) {
    throw Error(ErrorKind::dimension, "masked_mean: mask " + shape_string(step_mask) + " vs activations " +
                                          shape_string(x.value()));
  }
  const Vector counts = step_mask.rowwise().sum();
  M out = M::Zero(B, x.cols());
  for (Index b = 0; b < B; ++b) {
    if (counts(b) <= 0.0) {
      throw Error(ErrorKind::degenerate_sample, "masked_mean: sample " + std::to_string(b) + " is fully masked");
    }
    for (Index s = 0; s < T; ++s) {
      if (step_mask(b, s) != 0.0) out.row(b) += x.value().row(b * T + s);
    }
    out.row(b) /= static_cast<S>(counts(b));
  }
  return tape_of(x).push(std::move(out), {x}, [x, step_mask, counts, B, T](BasicTape<S>& t, const M& g) {
    if (!t.needs_grad(x.id)) return;
    M& dx = t.grad(x.id);
    for (Index b = 0; b < B; ++b) {
      const S c = static_cast<S>(counts(b));
      for (Index s = 0; s < T; ++s) {
        if (step_mask(b, s) != 0.0) dx.row(b * T + s) += g.row(b) / c;
      }
    }
  });
}

template <typename S>
V<S> bce_loss(V<S> probs, std::span<const int> labels, double positive_weight) {
  using M = MatrixX<S>;
  const M& P = probs.value();
  const Index N = P.rows();
  if (N == 0) throw Error(ErrorKind::empty_batch, "bce_loss: empty batch");
  if (P.cols() != 2 || static_cast<Index>(labels.size()) != N) {
    throw Error(ErrorKind::dimension, "bce_loss: probabilities " + shape_string(P) + " with " +
                                          std::to_string(labels.size()) + " labels");
  }
  const S lo = static_cast<S>(1e-12);
  const S hi = S(1) - lo;
  const S w = static_cast<S>(positive_weight);
  // A wider accumulator keeps the sum of up to 2^11 equal terms exact, so a
  // batch of duplicated samples has exactly the loss of one copy.
  using Acc = std::conditional_t<std::is_same_v<S, double>, long double, S>;
  Acc total = 0;
  // The negative term reads ln of the class-0 column rather than ln(1 - p1);
  // the two agree on normalized rows but the former keeps full precision
  // when p1 is close to 1.
  for (Index n = 0; n < N; ++n) {
    using std::log;
    total += static_cast<Acc>(labels[n] == 1 ? w * log(std::clamp(P(n, 1), lo, hi))
                                             : log(std::clamp(P(n, 0), lo, hi)));
  }
  M out(1, 1);
  out(0, 0) = static_cast<S>(-total / static_cast<Acc>(N));
  std::vector<int> owned(labels.begin(), labels.end());
  return tape_of(probs).push(std::move(out), {probs},
                             [probs, owned = std::move(owned), w, lo, hi, N](BasicTape<S>& t, const M& g) {
                               const M& Pv = t.value(probs.id);
                               M dp = M::Zero(N, 2);
                               for (Index n = 0; n < N; ++n) {
                                 const Index c = owned[n] == 1 ? 1 : 0;
                                 const S p = Pv(n, c);
                                 if (p < lo || p > hi) continue;
                                 dp(n, c) = c == 1 ? -w / p : S(-1) / p;
                               }
                               t.accumulate(probs.id, dp * (g(0, 0) / static_cast<S>(N)));
                             });
}

template <typename S>
V<S> gru_cell(V<S> x, V<S> h_prev, const GruVars<S>& w) {
  const Index H = h_prev.cols();
  if (w.U.rows() != 3 * H || w.U.cols() != H || w.W.rows() != 3 * H || w.W.cols() != x.cols()) {
    throw Error(ErrorKind::dimension, "gru_cell: input " + shape_string(x.value()) + ", state " +
                                          shape_string(h_prev.value()) + " do not conform to W " +
                                          shape_string(w.W.value()) + " and U " + shape_string(w.U.value()));
  }
  const V<S> xw = dense(x, w.W, w.b);
  const V<S> hu = matmul_nt(h_prev, slice_rows(w.U, 0, 2 * H));
  const V<S> rz = sigmoid(add(slice_cols(xw, 0, 2 * H), hu));
  const V<S> r = slice_cols(rz, 0, H);
  const V<S> z = slice_cols(rz, H, H);
  const V<S> cand =
      tanh(add(slice_cols(xw, 2 * H, H), matmul_nt(hadamard(r, h_prev), slice_rows(w.U, 2 * H, H))));
  // (1 - z) * h + z * c
  return add(sub(h_prev, hadamard(z, h_prev)), hadamard(z, cand));
}

template <typename S>
V<S> gru_scan(V<S> xw, V<S> U, const Matrix& step_mask, bool reverse) {
  using M = MatrixX<S>;
  const M& XW = xw.value();
  const M& Uv = U.value();
  const Index B = step_mask.rows();
  const Index T = step_mask.cols();
  const Index H = Uv.cols();
  if (Uv.rows() != 3 * H || XW.cols() != 3 * H || XW.rows() != B * T) {
    throw Error(ErrorKind::dimension, "gru_scan: projection " + shape_string(XW) + ", recurrent " +
                                          shape_string(Uv) + ", mask " + shape_string(step_mask));
  }
  for (Index b = 0; b < B; ++b) {
    if (step_mask.row(b).sum() <= 0.0) {
      throw Error(ErrorKind::degenerate_sample, "gru_scan: sample " + std::to_string(b) + " is fully masked");
    }
  }

  struct StepCache {
    M h_prev, r, z, c;
  };
  const bool keep_cache = tape_of(xw).recording();
  std::vector<StepCache> cache(keep_cache ? static_cast<std::size_t>(T) : 0);
  StepCache scratch;
  M h = M::Zero(B, H);
  const auto U_rz = Uv.topRows(2 * H);
  const auto U_c = Uv.bottomRows(H);
  M xw_t(B, 3 * H);
  auto sig = [](S v) { return tmtsc::sigmoid(v); };
  for (Index s = 0; s < T; ++s) {
    const Index t_index = reverse ? T - 1 - s : s;
    for (Index b = 0; b < B; ++b) xw_t.row(b) = XW.row(b * T + t_index);
    const M hu = h * U_rz.transpose();
    StepCache& c = keep_cache ? cache[static_cast<std::size_t>(s)] : scratch;
    c.h_prev = h;
    c.r = (xw_t.leftCols(H) + hu.leftCols(H)).unaryExpr(sig);
    c.z = (xw_t.middleCols(H, H) + hu.rightCols(H)).unaryExpr(sig);
    const M rh = c.r.cwiseProduct(h);
    c.c = (xw_t.rightCols(H) + rh * U_c.transpose()).array().tanh().matrix();
    const M h_new = (S(1) - c.z.array()).matrix().cwiseProduct(h) + c.z.cwiseProduct(c.c);
    for (Index b = 0; b < B; ++b) {
      if (step_mask(b, t_index) != 0.0) h.row(b) = h_new.row(b);
    }
  }

  return tape_of(xw).push(
      std::move(h), {xw, U},
      [xw, U, step_mask, reverse, B, T, H, cache = std::move(cache)](BasicTape<S>& t, const M& g) {
        const M& Uv = t.value(U.id);
        const auto U_rz = Uv.topRows(2 * H);
        const auto U_c = Uv.bottomRows(H);
        M dXW = M::Zero(B * T, 3 * H);
        M dU = M::Zero(3 * H, H);
        M dh = g;
        for (Index s = T - 1; s >= 0; --s) {
          const Index t_index = reverse ? T - 1 - s : s;
          const StepCache& c = cache[static_cast<std::size_t>(s)];
          // Masked rows pass their gradient straight through to the previous state.
          M dhn = dh;
          M pass = M::Zero(B, H);
          for (Index b = 0; b < B; ++b) {
            if (step_mask(b, t_index) == 0.0) {
              pass.row(b) = dh.row(b);
              dhn.row(b).setZero();
            }
          }
          const M dz = dhn.cwiseProduct(c.c - c.h_prev);
          const M dc = dhn.cwiseProduct(c.z);
          M dh_prev = dhn.cwiseProduct((S(1) - c.z.array()).matrix());
          const M dac = dc.cwiseProduct((S(1) - c.c.array().square()).matrix());
          const M rh = c.r.cwiseProduct(c.h_prev);
          dU.bottomRows(H).noalias() += dac.transpose() * rh;
          const M drh = dac * U_c;
          const M dr = drh.cwiseProduct(c.h_prev);
          dh_prev += drh.cwiseProduct(c.r);
          M darz(B, 2 * H);
          darz.leftCols(H) = dr.cwiseProduct((c.r.array() * (S(1) - c.r.array())).matrix());
          darz.rightCols(H) = dz.cwiseProduct((c.z.array() * (S(1) - c.z.array())).matrix());
          dU.topRows(2 * H).noalias() += darz.transpose() * c.h_prev;
          dh_prev.noalias() += darz * U_rz;
          for (Index b = 0; b < B; ++b) {
            auto row = dXW.row(b * T + t_index);
            row.head(2 * H) = darz.row(b);
            row.tail(H) = dac.row(b);
          }
          dh = dh_prev + pass;
        }
        t.accumulate(xw.id, dXW);
        t.accumulate(U.id, dU);
      });
}

template <typename S>
V<S> bidirectional_gru(V<S> x, const Matrix& step_mask, const GruVars<S>& forward, const GruVars<S>& backward) {
  const V<S> xw_f = dense(x, forward.W, forward.b);
  const V<S> xw_b = dense(x, backward.W, backward.b);
  const V<S> h_f = gru_scan(xw_f, forward.U, step_mask, false);
  const V<S> h_b = gru_scan(xw_b, backward.U, step_mask, true);
  return concat_cols<S>({h_f, h_b});
}

#define TMTSC_INSTANTIATE_AD(S)                                                                \
  template V<S> matmul(V<S>, V<S>);                                                            \
  template V<S> matmul_nt(V<S>, V<S>);                                                         \
  template V<S> dense(V<S>, V<S>, V<S>);                                                       \
  template V<S> add(V<S>, V<S>);                                                               \
  template V<S> sub(V<S>, V<S>);                                                               \
  template V<S> hadamard(V<S>, V<S>);                                                          \
  template V<S> scale(V<S>, double);                                                           \
  template V<S> add_row(V<S>, V<S>);                                                           \
  template V<S> add_positional(V<S>, V<S>);                                                    \
  template V<S> relu(V<S>);                                                                    \
  template V<S> sigmoid(V<S>);                                                                 \
  template V<S> tanh(V<S>);                                                                    \
  template V<S> square(V<S>);                                                                  \
  template V<S> sum(V<S>);                                                                     \
  template V<S> softmax_rows(V<S>);                                                            \
  template V<S> slice_cols(V<S>, Index, Index);                                                \
  template V<S> slice_rows(V<S>, Index, Index);                                                \
  template V<S> concat_cols(std::span<const V<S>>);                                            \
  template V<S> reshape(V<S>, Index, Index);                                                   \
  template V<S> step_rows(V<S>, Index, Index);                                                 \
  template V<S> blend_rows(const Vector&, V<S>, V<S>);                                         \
  template V<S> mask_rows(V<S>, const Vector&);                                                \
  template V<S> embedding(std::span<const int>, V<S>);                                         \
  template V<S> batch_norm(V<S>, V<S>, V<S>, const Vector&, Mode, const NormStats<S>&);        \
  template V<S> layer_norm(V<S>, V<S>, V<S>, double);                                          \
  template V<S> attention(V<S>, V<S>, V<S>, const Matrix&, Index);                             \
  template V<S> multi_head_attention(V<S>, const Matrix&, Index, const AttentionWeights<S>&);  \
  template V<S> dropout(V<S>, double, Mode, Rng&);                                             \
  template V<S> masked_mean(V<S>, const Matrix&);                                              \
  template V<S> bce_loss(V<S>, std::span<const int>, double);                                  \
  template V<S> gru_cell(V<S>, V<S>, const GruVars<S>&);                                       \
  template V<S> gru_scan(V<S>, V<S>, const Matrix&, bool);                                     \
  template V<S> bidirectional_gru(V<S>, const Matrix&, const GruVars<S>&, const GruVars<S>&);

TMTSC_INSTANTIATE_AD(double)
TMTSC_INSTANTIATE_AD(long double)
TMTSC_INSTANTIATE_AD(Quad)

#undef TMTSC_INSTANTIATE_AD

}  // namespace ad
}  // namespace tmtsc
