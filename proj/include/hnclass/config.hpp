#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "hnclass/classes.hpp"
#include "hnclass/error.hpp"

namespace hnclass {

enum class OptimizerKind { kAdamW };

enum class ModelKind { kTransformer, kBow };

inline std::string_view model_kind_name(ModelKind k) noexcept {
  return k == ModelKind::kTransformer ? "transformer" : "bow";
}

inline std::optional<ModelKind> parse_model_kind(std::string_view name) noexcept {
  if (name == "transformer") return ModelKind::kTransformer;
  if (name == "bow") return ModelKind::kBow;
  return std::nullopt;
}

/// Architecture and training hyperparameters shared by the transformer and
/// the bag-of-words baseline. Defaults are the full-scale transformer values.
struct ModelConfig {
  std::size_t seq_len = 512;
  std::size_t embed_dim = 64;
  std::size_t num_blocks = 3;
  std::size_t num_heads = 2;
  std::size_t ffn_dim = 128;
  double dropout = 0.1;
  double layernorm_eps = 1e-5;
  std::size_t num_classes = kNumClasses;

  std::size_t batch_size = 64;
  double learning_rate = 1e-5;
  OptimizerKind optimizer = OptimizerKind::kAdamW;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;

  double init_std = 0.02;
  bool mask_padding = false;      // ablation: mask padded keys and pool over real tokens only
  bool scale_embeddings = false;  // multiply token embeddings by sqrt(embed_dim)

  static ModelConfig transformer_defaults() { return {}; }

  /// Full-scale baseline: AdamW, lr 1e-4, batch 64.
  static ModelConfig bow_defaults() {
    ModelConfig c;
    c.learning_rate = 1e-4;
    c.dropout = 0.0;
    return c;
  }

  std::size_t head_dim() const noexcept { return embed_dim / num_heads; }

  void validate() const {
    const auto fail = [](const std::string& m) { throw ConfigError("invalid model config: " + m); };
    if (seq_len == 0 || embed_dim == 0 || num_blocks == 0 || num_heads == 0 || ffn_dim == 0) {
      fail("all dimensions must be >= 1");
    }
    if (embed_dim % num_heads != 0) fail("embed_dim must be divisible by num_heads");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
    if (!(layernorm_eps > 0.0)) fail("layernorm_eps must be positive");
    if (num_classes != kNumClasses) fail("num_classes must be 11");
    if (batch_size == 0) fail("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) fail("betas must be in [0, 1)");
    if (!(adam_eps > 0.0) || !(weight_decay >= 0.0)) fail("adam_eps > 0 and weight_decay >= 0 required");
    if (max_epochs == 0) fail("max_epochs must be >= 1");
    if (!(init_std > 0.0)) fail("init_std must be positive");
  }

  nlohmann::json to_json() const {
    return {
        {"seq_len", seq_len},
        {"embed_dim", embed_dim},
        {"num_blocks", num_blocks},
        {"num_heads", num_heads},
        {"ffn_dim", ffn_dim},
        {"dropout", dropout},
        {"layernorm_eps", layernorm_eps},
        {"num_classes", num_classes},
        {"batch_size", batch_size},
        {"learning_rate", learning_rate},
        {"optimizer", "AdamW"},
        {"beta1", beta1},
        {"beta2", beta2},
        {"adam_eps", adam_eps},
        {"weight_decay", weight_decay},
        {"max_epochs", max_epochs},
        {"patience", patience},
        {"seed", seed},
        {"init_std", init_std},
        {"mask_padding", mask_padding},
        {"scale_embeddings", scale_embeddings},
    };
  }

  /// Missing keys keep their defaults; unknown keys are rejected.
  static ModelConfig from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    ModelConfig c;
    try {
      for (const auto& [key, value] : j.items()) {
        if (key == "seq_len") c.seq_len = value.get<std::size_t>();
        else if (key == "embed_dim") c.embed_dim = value.get<std::size_t>();
        else if (key == "num_blocks") c.num_blocks = value.get<std::size_t>();
        else if (key == "num_heads") c.num_heads = value.get<std::size_t>();
        else if (key == "ffn_dim") c.ffn_dim = value.get<std::size_t>();
        else if (key == "dropout") c.dropout = value.get<double>();
        else if (key == "layernorm_eps") c.layernorm_eps = value.get<double>();
        else if (key == "num_classes") c.num_classes = value.get<std::size_t>();
        else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
        else if (key == "learning_rate") c.learning_rate = value.get<double>();
        else if (key == "optimizer") {
          if (value.get<std::string>() != "AdamW") throw ConfigError("only the AdamW optimizer is supported");
        } else if (key == "beta1") c.beta1 = value.get<double>();
        else if (key == "beta2") c.beta2 = value.get<double>();
        else if (key == "adam_eps") c.adam_eps = value.get<double>();
        else if (key == "weight_decay") c.weight_decay = value.get<double>();
        else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
        else if (key == "patience") c.patience = value.get<std::size_t>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "init_std") c.init_std = value.get<double>();
        else if (key == "mask_padding") c.mask_padding = value.get<bool>();
        else if (key == "scale_embeddings") c.scale_embeddings = value.get<bool>();
        else throw ConfigError("unknown model config key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed model config: ") + e.what());
    }
    return c;
  }
};

}  // namespace hnclass
