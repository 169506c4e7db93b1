#pragma once

#include <cmath>

#include "tmtsc/data/pipeline.hpp"
#include "tmtsc/models/model.hpp"
#include "tmtsc/numerics/rng.hpp"

namespace tmtsc::testing {

/// Small configuration of the given model with dropout off.
inline ModelConfig small_config(ModelKind kind, Index vocab = 5) {
  ModelConfig c;
  c.kind = kind;
  c.d_model = 16;
  c.n_heads = 4;
  c.n_blocks = 2;
  c.ff_dim = 32;
  c.gru_hidden = 16;
  c.ugru_hidden = 8;
  c.dropout = 0.0;
  c.embedding_dim = 4;
  c.vocab_size = vocab;
  return c;
}

/// Random left-padded batch: sample b observes its last n_b >= 1 steps, the
/// padded prefix carries sentinel values and the missing round-type id.
inline Batch random_batch(Rng& rng, Index B, const ModelConfig& c, double numeric_scale = 1.0) {
  Batch batch;
  const Index T = c.steps, K = c.features;
  batch.X = Matrix::Constant(B * T, K, kSentinel);
  batch.step_mask = Matrix::Zero(B, T);
  for (Index b = 0; b < B; ++b) {
    const Index observed = rng.uniform_int(std::int64_t{1}, static_cast<std::int64_t>(T));
    for (Index t = 0; t < T; ++t) {
      const Index row = b * T + t;
      if (t < T - observed) {
        batch.X(row, feature::round_type) = CategoryVocabulary::missing;
        continue;
      }
      batch.step_mask(b, t) = 1.0;
      batch.X(row, feature::round_type) =
          static_cast<double>(rng.uniform_int(static_cast<std::uint64_t>(c.vocab_size)));
      for (Index k = 1; k < K; ++k) batch.X(row, k) = numeric_scale * rng.normal();
    }
    batch.labels.push_back(rng.bernoulli(0.5) ? 1 : 0);
  }
  return batch;
}

/// Redraws weight matrices as N(0, 1/fan_in), moves vectors (biases, gains)
/// off their initial values by N(0, 0.3) and draws nontrivial running
/// statistics. At the N(0, 0.02) init the attention logits are nearly flat and
/// their gradients sit below what a 1e-6 central difference can resolve.
inline void randomize_parameters(ParameterSet& params, Rng& rng) {
  for (auto& p : params) {
    Matrix& v = p.value.data;
    const bool matrix = p.shape().size() == 2;
    const double sd = matrix ? 1.0 / std::sqrt(static_cast<double>(v.cols())) : 0.3;
    for (Index i = 0; i < v.size(); ++i) {
      double& x = v.data()[i];
      if (!p.trainable) {
        x = p.name.ends_with("running_mean") ? rng.normal(0.0, 0.5) : rng.uniform(0.5, 1.5);
      } else {
        x = (matrix ? 0.0 : x) + rng.normal(0.0, sd);
      }
    }
  }
}

}  // namespace tmtsc::testing
