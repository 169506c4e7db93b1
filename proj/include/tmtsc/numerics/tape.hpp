#pragma once

#include "tmtsc/numerics/rng.hpp"
#include "tmtsc/numerics/types.hpp"

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <unordered_map>
#include <vector>

namespace tmtsc {

template <typename Scalar>
class BasicTape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
struct BasicVar {
  using Tape = BasicTape<Scalar>;
  Tape* tape = nullptr;
  int id = -1;

  [[nodiscard]] const MatrixX<Scalar>& value() const { return tape->value(id); }
  [[nodiscard]] Index rows() const { return value().rows(); }
  [[nodiscard]] Index cols() const { return value().cols(); }
};

/// Reverse-mode recorder. Every node holds its forward value; nodes that
/// depend on a trainable parameter also hold a backward closure that pushes
/// the node's gradient into its parents. Parameters are bound once per tape
/// and their gradients are accumulated into the parameter's grad by backward().
template <typename Scalar>
class BasicTape {
 public:
  using M = MatrixX<Scalar>;
  using Var = BasicVar<Scalar>;
  using Backward = std::function<void(BasicTape&, const M& out_grad)>;

  /// With record == false no closures are kept (inference only).
  explicit BasicTape(bool record = true) : record_(record) {}
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  Var constant(M value);
  template <typename Derived>
    requires(!std::is_same_v<typename Derived::Scalar, Scalar>)
  Var constant(const Eigen::MatrixBase<Derived>& value) {
    return constant(M(value.template cast<Scalar>()));
  }
  Var bind(BasicParameter<Scalar>& param);

  Var push(M value, std::initializer_list<Var> parents, Backward backward);
  Var push(M value, std::span<const Var> parents, Backward backward);

  [[nodiscard]] const M& value(int id) const { return nodes_[id].value; }
  [[nodiscard]] bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  [[nodiscard]] bool recording() const { return record_; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  /// Id the next pushed node will receive.
  [[nodiscard]] int next_id() const { return static_cast<int>(nodes_.size()); }

  /// Zero-initialized gradient buffer of node id (allocated on first use).
  M& grad(int id);
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    if (!nodes_[id].needs_grad) return;
    M& buf = nodes_[id].grad;
    if (buf.size() == 0) {
      buf = g;
    } else {
      buf += g;
    }
  }

  /// Seeds d(loss)/d(loss) = 1 and sweeps in reverse creation order, then
  /// adds bound-parameter gradients into their grad buffers.
  void backward(Var loss);

  /// Fingerprint of every rectifier's active set seen so far. Two forward
  /// passes with different fingerprints straddle a kink.
  [[nodiscard]] std::uint64_t kink_signature() const { return kink_signature_; }
  void record_active_set(const M& pre_activation);
  void set_track_kinks(bool on) { track_kinks_ = on; }

 private:
  struct Node {
    M value;
    M grad;
    Backward backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<int, BasicParameter<Scalar>*>> bindings_;
  std::unordered_map<const BasicParameter<Scalar>*, int> bound_;
  std::uint64_t kink_signature_ = 0xcbf29ce484222325ULL;
  bool record_;
  bool track_kinks_ = false;
};

using Tape = BasicTape<double>;
using Var = BasicVar<double>;

/// Differentiable operations. Activations of shape B x T x D are carried as
/// (B*T) x D matrices with row b*T + t; step masks are B x T with 1 marking
/// an attendable step and 0 a padded one. Masks stay in double whatever the
/// scalar type of the tape.
namespace ad {

template <typename S>
using V = BasicVar<S>;

template <typename S> V<S> matmul(V<S> a, V<S> b);
/// a * b^T
template <typename S> V<S> matmul_nt(V<S> a, V<S> b);
/// Row i is W * x_i + b; b is 1 x G.
template <typename S> V<S> dense(V<S> x, V<S> W, V<S> b);
template <typename S> V<S> add(V<S> a, V<S> b);
template <typename S> V<S> sub(V<S> a, V<S> b);
template <typename S> V<S> hadamard(V<S> a, V<S> b);
template <typename S> V<S> scale(V<S> a, double s);
/// x + row broadcast over rows.
template <typename S> V<S> add_row(V<S> x, V<S> row);
/// (B*T) x D plus a T x D table repeated for every sample.
template <typename S> V<S> add_positional(V<S> h, V<S> positions);
template <typename S> V<S> relu(V<S> x);
template <typename S> V<S> sigmoid(V<S> x);
template <typename S> V<S> tanh(V<S> x);
template <typename S> V<S> square(V<S> x);
template <typename S> V<S> sum(V<S> x);
template <typename S> V<S> softmax_rows(V<S> logits);
template <typename S> V<S> slice_cols(V<S> x, Index start, Index count);
template <typename S> V<S> slice_rows(V<S> x, Index start, Index count);
template <typename S> V<S> concat_cols(std::span<const V<S>> parts);
template <typename S> V<S> reshape(V<S> x, Index rows, Index cols);
/// Rows {b*steps + t : b} of a (B*T) x F matrix, giving B x F.
template <typename S> V<S> step_rows(V<S> x, Index steps, Index t);
/// Row i is a.row(i) where keep(i) != 0, else b.row(i). Exact selection.
template <typename S> V<S> blend_rows(const Vector& keep, V<S> a, V<S> b);
/// Rows with keep(i) == 0 become exact zeros.
template <typename S> V<S> mask_rows(V<S> x, const Vector& keep);
template <typename S> V<S> embedding(std::span<const int> ids, V<S> table);
/// B x T step mask flattened to a (B*T) row mask.
Vector row_mask(const Matrix& step_mask);

template <typename S>
V<S> concat_cols(std::initializer_list<V<S>> parts) {
  return concat_cols<S>(std::span<const V<S>>(parts.begin(), parts.size()));
}
template <typename S>
V<S> concat_cols(const std::vector<V<S>>& parts) {
  return concat_cols<S>(std::span<const V<S>>(parts));
}

template <typename S>
struct NormStats {
  BasicParameter<S>* running_mean = nullptr;  // 1 x D buffer
  BasicParameter<S>* running_var = nullptr;   // 1 x D buffer
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-channel batch normalization over rows with keep != 0 (train), or with
/// the running statistics (eval). Masked rows receive the same affine map.
template <typename S>
V<S> batch_norm(V<S> x, V<S> gamma, V<S> beta, const Vector& keep, Mode mode, const NormStats<S>& stats);
/// Per-row normalization over the D channels.
template <typename S> V<S> layer_norm(V<S> x, V<S> gamma, V<S> beta, double eps);

/// Scaled dot-product attention per sample and head. Keys at masked steps
/// get logit -1e30 and therefore weight exactly 0.
template <typename S> V<S> attention(V<S> q, V<S> k, V<S> v, const Matrix& step_mask, Index n_heads);

/// Keys carry no bias: a shared shift of every key adds q . b_k to all
/// logits of a query, which the softmax removes.
template <typename S>
struct AttentionWeights {
  V<S> Wq, bq, Wk, Wv, bv, Wo, bo;
};
template <typename S>
V<S> multi_head_attention(V<S> h, const Matrix& step_mask, Index n_heads, const AttentionWeights<S>& w);

/// Inverted dropout; identity in eval mode or when rate == 0.
template <typename S> V<S> dropout(V<S> x, double rate, Mode mode, Rng& rng);

/// Mean over unmasked steps of each sample: (B*T) x D -> B x D.
template <typename S> V<S> masked_mean(V<S> x, const Matrix& step_mask);

/// Mean binary cross-entropy of an N x 2 probability matrix with rows
/// summing to 1: -ln p1 for positives, -ln p0 = -ln(1 - p1) for negatives.
/// Probabilities are clamped to [1e-12, 1 - 1e-12].
template <typename S> V<S> bce_loss(V<S> probs, std::span<const int> labels, double positive_weight = 1.0);

template <typename S>
struct GruVars {
  V<S> W;  // 3H x F
  V<S> U;  // 3H x H
  V<S> b;  // 1 x 3H
};

/// One GRU step on a B x F input, composed from primitive ops.
template <typename S> V<S> gru_cell(V<S> x, V<S> h_prev, const GruVars<S>& w);
/// Runs one direction of a masked GRU over the precomputed input projection
/// xw ((B*T) x 3H, bias included); masked steps carry the state unchanged.
/// Returns the final B x H state.
template <typename S> V<S> gru_scan(V<S> xw, V<S> U, const Matrix& step_mask, bool reverse);
/// [h_forward_final ; h_backward_final], B x 2H.
template <typename S>
V<S> bidirectional_gru(V<S> x, const Matrix& step_mask, const GruVars<S>& forward, const GruVars<S>& backward);

}  // namespace ad
}  // namespace tmtsc
