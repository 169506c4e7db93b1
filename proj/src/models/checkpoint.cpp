#include "tmtsc/models/checkpoint.hpp"

#include "tmtsc/data/schema.hpp"
#include "tmtsc/errors.hpp"
#include "tmtsc/io.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <set>

namespace tmtsc {

static_assert(std::endian::native == std::endian::little, "params.bin is written as native little-endian doubles");

using nlohmann::json;

json to_json(const ModelConfig& c) {
  return json{{"model", std::string(to_string(c.kind))},
              {"d_model", c.d_model},
              {"n_heads", c.n_heads},
              {"n_blocks", c.n_blocks},
              {"ff_dim", c.ff_dim},
              {"gru_hidden", c.gru_hidden},
              {"ugru_hidden", c.ugru_hidden},
              {"dropout", c.dropout},
              {"embedding_dim", c.embedding_dim},
              {"vocab_size", c.vocab_size},
              {"steps", c.steps},
              {"features", c.features},
              {"classes", c.classes},
              {"norm_eps", c.norm_eps},
              {"bn_momentum", c.bn_momentum}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  if (!j.is_object()) throw Error(ErrorKind::configuration, "model configuration must be an object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "model") c.kind = parse_model_kind(value.get<std::string>());
      else if (key == "d_model") c.d_model = value.get<Index>();
      else if (key == "n_heads") c.n_heads = value.get<Index>();
      else if (key == "n_blocks") c.n_blocks = value.get<Index>();
      else if (key == "ff_dim") c.ff_dim = value.get<Index>();
      else if (key == "gru_hidden") c.gru_hidden = value.get<Index>();
      else if (key == "ugru_hidden") c.ugru_hidden = value.get<Index>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "embedding_dim") c.embedding_dim = value.get<Index>();
      else if (key == "vocab_size") c.vocab_size = value.get<Index>();
      else if (key == "steps") c.steps = value.get<Index>();
      else if (key == "features") c.features = value.get<Index>();
      else if (key == "classes") c.classes = value.get<Index>();
      else if (key == "norm_eps") c.norm_eps = value.get<double>();
      else if (key == "bn_momentum") c.bn_momentum = value.get<double>();
      else throw Error(ErrorKind::configuration, fmt::format("unknown model option '{}'", key));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::configuration, fmt::format("bad model option: {}", e.what()));
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  json tensors = json::array();
  std::string blob;
  for (const auto& p : ck.params) {
    tensors.push_back({{"name", p.name}, {"shape", p.shape()}, {"dtype", "f64"}, {"trainable", p.trainable}});
    const auto bytes = static_cast<std::size_t>(p.numel()) * sizeof(double);
    const auto offset = blob.size();
    blob.resize(offset + bytes);
    std::memcpy(blob.data() + offset, p.value.data.data(), bytes);
  }
  json manifest{{"format", "tmtsc-checkpoint/1"},
                {"schema_hash", schema_hash()},
                {"config", to_json(ck.config)},
                {"vocabularies", {{ck.vocabulary.feature, ck.vocabulary.categories}}},
                {"tensors", tensors}};
  if (ck.task) manifest["task"] = std::string(to_string(*ck.task));
  write_file_atomic(dir / "params.bin", blob);
  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const std::string text = read_file(manifest_path);
  const std::string blob = read_file(dir / "params.bin");
  Checkpoint ck;
  try {
    const json m = json::parse(text);
    const auto hash = m.at("schema_hash").get<std::string>();
    if (hash != schema_hash()) {
      throw Error(ErrorKind::schema_mismatch,
                  fmt::format("checkpoint {} was written for feature schema {}, this build uses {}", dir.string(), hash,
                              schema_hash()));
    }
    ck.config = model_config_from_json(m.at("config"));
    const auto& vocabs = m.at("vocabularies");
    if (vocabs.size() != 1 || !vocabs.contains("round_type")) {
      throw Error(ErrorKind::validation, "checkpoint must carry exactly the round_type vocabulary");
    }
    ck.vocabulary.categories = vocabs.at("round_type").get<std::vector<std::string>>();
    if (m.contains("task")) ck.task = parse_task(m.at("task").get<std::string>());
    std::size_t offset = 0;
    for (const auto& t : m.at("tensors")) {
      if (t.at("dtype").get<std::string>() != "f64") throw Error(ErrorKind::validation, "only f64 tensors are supported");
      auto& p = ck.params.add(t.at("name").get<std::string>(), t.at("shape").get<std::vector<Index>>(),
                              t.value("trainable", true));
      const auto bytes = static_cast<std::size_t>(p.numel()) * sizeof(double);
      if (offset + bytes > blob.size()) throw Error(ErrorKind::validation, "params.bin is shorter than the manifest");
      std::memcpy(p.value.data.data(), blob.data() + offset, bytes);
      offset += bytes;
    }
    if (offset != blob.size()) throw Error(ErrorKind::validation, "params.bin is longer than the manifest");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::validation, fmt::format("{}: {}", manifest_path.string(), e.what()));
  }
  ck.config.validate();
  // The stored tensors must be exactly the ones this configuration creates.
  const ParameterSet expected = init_params(ck.config, 0);
  if (expected.size() != ck.params.size()) {
    throw Error(ErrorKind::validation,
                fmt::format("checkpoint has {} tensors, configuration expects {}", ck.params.size(), expected.size()));
  }
  for (const auto& e : expected) {
    if (!ck.params.contains(e.name) || ck.params[e.name].shape() != e.shape()) {
      throw Error(ErrorKind::validation, fmt::format("checkpoint tensor '{}' missing or misshapen", e.name));
    }
  }
  if (ck.vocabulary.size() != ck.config.vocab_size) {
    throw Error(ErrorKind::validation, "vocabulary size disagrees with the embedding table");
  }
  return ck;
}

}  // namespace tmtsc
