#include "tmtsc/models/model.hpp"

#include "tmtsc/errors.hpp"
#include "tmtsc/numerics/kernels.hpp"
#include "tmtsc/numerics/quad.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace tmtsc {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::ugru: return "ugru";
    case ModelKind::mgru: return "mgru";
    case ModelKind::te: return "te";
    case ModelKind::tmtsc: return "tmtsc";
  }
  return "unknown";
}

std::string_view display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::ugru: return "U-GRU";
    case ModelKind::mgru: return "M-GRU";
    case ModelKind::te: return "TE";
    case ModelKind::tmtsc: return "TMTSC";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view text) {
  for (ModelKind k : all_model_kinds()) {
    if (text == to_string(k)) return k;
  }
  throw Error(ErrorKind::configuration, fmt::format("unknown model '{}' (expected tmtsc, ugru, mgru or te)", text));
}

const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds{ModelKind::ugru, ModelKind::mgru, ModelKind::te, ModelKind::tmtsc};
  return kinds;
}

void ModelConfig::validate() const {
  auto positive = [](Index v, const char* name) {
    if (v < 1) throw Error(ErrorKind::configuration, fmt::format("{} must be >= 1, got {}", name, v));
  };
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(n_blocks, "n_blocks");
  positive(ff_dim, "ff_dim");
  positive(gru_hidden, "gru_hidden");
  positive(ugru_hidden, "ugru_hidden");
  positive(embedding_dim, "embedding_dim");
  positive(steps, "steps");
  if (vocab_size < 2) throw Error(ErrorKind::configuration, "vocab_size must include the two reserved ids");
  if (d_model % n_heads != 0) {
    throw Error(ErrorKind::configuration, fmt::format("d_model {} not divisible by n_heads {}", d_model, n_heads));
  }
  if (classes != 2) throw Error(ErrorKind::configuration, "classes must be 2");
  if (features != kFeatures) throw Error(ErrorKind::configuration, fmt::format("features must be {}", kFeatures));
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorKind::configuration, "dropout must lie in [0, 1)");
  if (!(norm_eps > 0.0)) throw Error(ErrorKind::configuration, "norm_eps must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw Error(ErrorKind::configuration, "bn_momentum must lie in [0, 1]");
}

namespace {

constexpr double kInitStd = 0.02;

struct Builder {
  ParameterSet params;
  Rng rng;

  void weight(const std::string& name, Index rows, Index cols) {
    Matrix& w = params.add(name, {rows, cols}).value.data;
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal(0.0, kInitStd);
  }
  void bias(const std::string& name, Index n) { params.add(name, {n}).value.data.setZero(); }
  void norm(const std::string& prefix, Index d, bool running) {
    params.add(prefix + ".gamma", {d}).value.data.setOnes();
    params.add(prefix + ".beta", {d}).value.data.setZero();
    if (running) {
      params.add(prefix + ".running_mean", {d}, false).value.data.setZero();
      params.add(prefix + ".running_var", {d}, false).value.data.setOnes();
    }
  }
  void bigru(const std::string& prefix, Index in, Index hidden) {
    for (const char* dir : {".fwd", ".bwd"}) {
      weight(prefix + dir + ".W", 3 * hidden, in);
      weight(prefix + dir + ".U", 3 * hidden, hidden);
      bias(prefix + dir + ".b", 3 * hidden);
    }
  }
  void encoder(const ModelConfig& c, bool batch_norm) {
    const Index D = c.d_model;
    for (Index i = 0; i < c.n_blocks; ++i) {
      const std::string p = fmt::format("block{}", i);
      for (const char* m : {".attn.Wq", ".attn.Wk", ".attn.Wv", ".attn.Wo"}) {
        const std::string name = p + m;
        weight(name, D, D);
        if (name.back() != 'k') bias(p + ".attn.b" + name.back(), D);
      }
      norm(p + ".norm1", D, batch_norm);
      weight(p + ".ff.W1", c.ff_dim, D);
      bias(p + ".ff.b1", c.ff_dim);
      weight(p + ".ff.W2", D, c.ff_dim);
      bias(p + ".ff.b2", D);
      norm(p + ".norm2", D, batch_norm);
    }
  }
};

}  // namespace

ParameterSet init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  Builder b{{}, Rng(seed)};
  b.weight("embedding", c.vocab_size, c.embedding_dim);
  switch (c.kind) {
    case ModelKind::tmtsc:
      b.weight("input.W", c.d_model, c.input_width());
      b.bias("input.b", c.d_model);
      b.weight("positional", c.steps, c.d_model);
      b.encoder(c, true);
      b.weight("head.W", c.classes, c.steps * c.d_model);
      break;
    case ModelKind::te:
      b.weight("input.W", c.d_model, c.input_width());
      b.bias("input.b", c.d_model);
      b.encoder(c, false);
      b.weight("head.W", c.classes, c.d_model);
      break;
    case ModelKind::mgru:
      b.bigru("gru", c.input_width(), c.gru_hidden);
      b.weight("head.W", c.classes, 2 * c.gru_hidden);
      break;
    case ModelKind::ugru:
      for (Index k = 0; k < c.features; ++k) {
        b.bigru(fmt::format("gru{:02d}", k), k == feature::round_type ? c.embedding_dim : 1, c.ugru_hidden);
      }
      b.weight("head.W", c.classes, c.features * 2 * c.ugru_hidden);
      break;
  }
  b.bias("head.b", c.classes);
  return std::move(b.params);
}

namespace {

template <typename S>
using V = BasicVar<S>;

template <typename S>
struct Inputs {
  V<S> numeric;   // (B*T) x (K-1)
  V<S> embedded;  // (B*T) x E
};

template <typename S>
Inputs<S> embed_inputs(BasicTape<S>& tape, BasicParameterSet<S>& params, const ModelConfig& c, const Batch& batch) {
  const Index B = batch.step_mask.rows();
  if (batch.step_mask.cols() != c.steps || batch.X.rows() != B * c.steps || batch.X.cols() != c.features) {
    throw Error(ErrorKind::dimension,
                fmt::format("batch X {}x{} with mask {}x{} does not match T={} K={}", batch.X.rows(), batch.X.cols(),
                            batch.step_mask.rows(), batch.step_mask.cols(), c.steps, c.features));
  }
  std::vector<int> ids(static_cast<std::size_t>(batch.X.rows()));
  for (Index i = 0; i < batch.X.rows(); ++i) {
    const double v = batch.X(i, feature::round_type);
    if (v != std::floor(v)) throw Error(ErrorKind::vocabulary, fmt::format("round_type id {} is not an integer", v));
    ids[static_cast<std::size_t>(i)] = static_cast<int>(v);
  }
  const Matrix numeric = batch.X.rightCols(c.features - 1);
  return {tape.constant(numeric), ad::embedding<S>(ids, tape.bind(params["embedding"]))};
}

template <typename S>
ad::GruVars<S> gru_vars(BasicTape<S>& tape, BasicParameterSet<S>& params, const std::string& p) {
  return {tape.bind(params[p + ".W"]), tape.bind(params[p + ".U"]), tape.bind(params[p + ".b"])};
}

template <typename S>
V<S> norm(BasicTape<S>& tape, BasicParameterSet<S>& params, const std::string& p, V<S> x, const ModelConfig& c,
          const Vector& keep, Mode mode, bool batch_norm) {
  const V<S> gamma = tape.bind(params[p + ".gamma"]);
  const V<S> beta = tape.bind(params[p + ".beta"]);
  if (!batch_norm) return ad::layer_norm(x, gamma, beta, c.norm_eps);
  const ad::NormStats<S> stats{&params[p + ".running_mean"], &params[p + ".running_var"], c.norm_eps, c.bn_momentum};
  return ad::batch_norm(x, gamma, beta, keep, mode, stats);
}

// Post-norm encoder block: attention, residual, norm, feed-forward, residual, norm.
template <typename S>
V<S> encoder_block(BasicTape<S>& tape, BasicParameterSet<S>& params, const std::string& p, V<S> h,
                   const ModelConfig& c, const Batch& batch, const Vector& keep, Mode mode, Rng& rng, bool batch_norm) {
  auto bind = [&](const char* name) { return tape.bind(params[p + name]); };
  const ad::AttentionWeights<S> w{bind(".attn.Wq"), bind(".attn.bq"), bind(".attn.Wk"), bind(".attn.Wv"),
                                  bind(".attn.bv"), bind(".attn.Wo"), bind(".attn.bo")};
  const V<S> attended = ad::multi_head_attention(h, batch.step_mask, c.n_heads, w);
  const V<S> n1 = norm(tape, params, p + ".norm1", ad::add(h, ad::dropout(attended, c.dropout, mode, rng)), c, keep,
                       mode, batch_norm);
  const V<S> hidden = ad::relu(ad::dense(n1, bind(".ff.W1"), bind(".ff.b1")));
  const V<S> ff = ad::dense(hidden, bind(".ff.W2"), bind(".ff.b2"));
  return norm(tape, params, p + ".norm2", ad::add(n1, ad::dropout(ff, c.dropout, mode, rng)), c, keep, mode,
              batch_norm);
}

template <typename S>
V<S> head(BasicTape<S>& tape, BasicParameterSet<S>& params, V<S> z) {
  return ad::softmax_rows(ad::dense(z, tape.bind(params["head.W"]), tape.bind(params["head.b"])));
}

}  // namespace

template <typename S>
ForwardTrace<S> forward(BasicTape<S>& tape, BasicParameterSet<S>& params, const ModelConfig& c, const Batch& batch,
                        Mode mode, Rng& rng) {
  const Inputs<S> in = embed_inputs(tape, params, c, batch);
  const Index B = batch.step_mask.rows();
  ForwardTrace<S> tr;
  switch (c.kind) {
    case ModelKind::tmtsc:
    case ModelKind::te: {
      const bool bn = c.kind == ModelKind::tmtsc;
      const Vector keep = ad::row_mask(batch.step_mask);
      tr.x_prime = ad::concat_cols<S>({in.numeric, in.embedded});
      tr.H = ad::dense(tr.x_prime, tape.bind(params["input.W"]), tape.bind(params["input.b"]));
      const V<S> positions =
          bn ? tape.bind(params["positional"]) : tape.constant(sinusoidal_positions<double>(c.steps, c.d_model));
      tr.H_prime = ad::add_positional(tr.H, positions);
      V<S> h = tr.H_prime;
      for (Index i = 0; i < c.n_blocks; ++i) {
        h = encoder_block(tape, params, fmt::format("block{}", i), h, c, batch, keep, mode, rng, bn);
        tr.blocks.push_back(h);
      }
      if (bn) {
        // Padded steps contribute exact zeros to the concatenated head input.
        tr.Z = ad::reshape(ad::mask_rows(h, keep), B, c.steps * c.d_model);
      } else {
        tr.Z = ad::masked_mean(h, batch.step_mask);
      }
      break;
    }
    case ModelKind::mgru: {
      tr.x_prime = ad::concat_cols<S>({in.numeric, in.embedded});
      const V<S> state = ad::bidirectional_gru(tr.x_prime, batch.step_mask, gru_vars(tape, params, "gru.fwd"),
                                               gru_vars(tape, params, "gru.bwd"));
      tr.Z = ad::dropout(state, c.dropout, mode, rng);
      break;
    }
    case ModelKind::ugru: {
      std::vector<V<S>> states;
      for (Index k = 0; k < c.features; ++k) {
        const std::string p = fmt::format("gru{:02d}", k);
        const V<S> series = k == feature::round_type ? in.embedded : ad::slice_cols(in.numeric, k - 1, 1);
        states.push_back(ad::bidirectional_gru(series, batch.step_mask, gru_vars(tape, params, p + ".fwd"),
                                               gru_vars(tape, params, p + ".bwd")));
      }
      tr.Z = ad::dropout(ad::concat_cols<S>(states), c.dropout, mode, rng);
      break;
    }
  }
  tr.probs = head(tape, params, tr.Z);
  return tr;
}

template ForwardTrace<double> forward(BasicTape<double>&, BasicParameterSet<double>&, const ModelConfig&,
                                      const Batch&, Mode, Rng&);
template ForwardTrace<long double> forward(BasicTape<long double>&, BasicParameterSet<long double>&,
                                           const ModelConfig&, const Batch&, Mode, Rng&);
template ForwardTrace<Quad> forward(BasicTape<Quad>&, BasicParameterSet<Quad>&, const ModelConfig&, const Batch&, Mode,
                                    Rng&);

Matrix predict_proba(ParameterSet& params, const ModelConfig& config, const Batch& batch) {
  Tape tape(false);
  Rng rng(0);
  return forward(tape, params, config, batch, Mode::eval, rng).probs.value();
}

}  // namespace tmtsc
