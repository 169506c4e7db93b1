#pragma once

#include "tmtsc/data/pipeline.hpp"
#include "tmtsc/numerics/rng.hpp"
#include "tmtsc/numerics/tape.hpp"
#include "tmtsc/numerics/types.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace tmtsc {

enum class ModelKind { ugru, mgru, te, tmtsc };

/// Short command-line name: ugru, mgru, te, tmtsc.
std::string_view to_string(ModelKind kind);
/// Display name: U-GRU, M-GRU, TE, TMTSC.
std::string_view display_name(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);
/// All four in table order.
const std::vector<ModelKind>& all_model_kinds();

struct ModelConfig {
  ModelKind kind = ModelKind::tmtsc;
  // Transformer models.
  Index d_model = 64;
  Index n_heads = 4;
  Index n_blocks = 4;
  Index ff_dim = 128;
  // GRU models: state size of each direction.
  Index gru_hidden = 64;   // M-GRU
  Index ugru_hidden = 16;  // U-GRU, per feature
  double dropout = 0.1;
  Index embedding_dim = 8;
  Index vocab_size = 2;  // reserved ids plus training categories
  Index steps = kSteps;
  Index features = kFeatures;
  Index classes = 2;
  double norm_eps = 1e-5;
  double bn_momentum = 0.1;

  /// K' = numeric features plus the round_type embedding.
  [[nodiscard]] Index input_width() const { return features - 1 + embedding_dim; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// Weights ~ N(0, 0.02) (positional table included), biases 0, norm gain 1,
/// shift 0, running mean 0 and running variance 1.
ParameterSet init_params(const ModelConfig& config, std::uint64_t seed);

/// Intermediates of one forward pass. Baselines leave the transformer-only
/// entries unset (id -1).
template <typename S>
struct ForwardTrace {
  BasicVar<S> x_prime;  // (B*T) x K'
  BasicVar<S> H;        // (B*T) x D, input projection
  BasicVar<S> H_prime;  // H plus positions
  std::vector<BasicVar<S>> blocks;
  BasicVar<S> Z;      // B x (T*D) for TMTSC, pooled features otherwise
  BasicVar<S> probs;  // B x C
};

/// Runs the model selected by config.kind. In train mode batch norm updates
/// its running statistics and dropout draws from rng.
template <typename S>
ForwardTrace<S> forward(BasicTape<S>& tape, BasicParameterSet<S>& params, const ModelConfig& config,
                        const Batch& batch, Mode mode, Rng& rng);

/// Class probabilities in eval mode without recording a tape.
Matrix predict_proba(ParameterSet& params, const ModelConfig& config, const Batch& batch);

}  // namespace tmtsc
