// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#include "tlm/model.hpp"

namespace tlm {

ModelConfig preset_config(const std::string& name) {
  ModelConfig c;
  if (name == "large") {
    c.n_layers = 12;
    c.n_heads = 12;
    c.d_embed = 768;
    c.d_hidden = 768;
    c.d_ffn = 3072;
  } else if (name == "small-one") {
    c.n_layers = 6;
    c.n_heads = 8;
    c.d_embed = 352;
    c.d_hidden = 352;
    c.d_ffn = 1408;
  } else if (name == "small-two") {
    c.n_layers = 6;
    c.n_heads = 8;
    c.d_embed = 256;
    c.d_hidden = 256;
    c.d_ffn = 1024;
  } else {
    throw std::invalid_argument("preset_config: unknown preset '" + name +
                                "' (expected large, small-one or small-two)");
  }
  return c;
}

void validate_config(const ModelConfig& c) {
  auto positive = [](int64_t v, const char* what) {
    if (v <= 0) {
      throw std::invalid_argument(std::string("model config: ") + what +
                                  " must be positive, got " + std::to_string(v));
    }
  };
  positive(c.n_layers, "n_layers");
  positive(c.n_heads, "n_heads");
  positive(c.d_embed, "d_embed");
  positive(c.d_hidden, "d_hidden");
  positive(c.d_ffn, "d_ffn");
  positive(c.vocab_size, "vocab_size");
  positive(c.max_context, "max_context");
  if (c.d_hidden % c.n_heads != 0) {
    throw std::invalid_argument("model config: d_hidden " + std::to_string(c.d_hidden) +
                                " not divisible by n_heads " + std::to_string(c.n_heads));
  }
  if (c.dropout < 0.0 || c.dropout >= 1.0) {
    throw std::invalid_argument("model config: dropout must be in [0,1), got " +
                                std::to_string(c.dropout));
  }
  if (c.tie_embedding) {
    if (c.softmax_mode != SoftmaxMode::kFull) {
      throw std::invalid_argument("model config: tie_embedding requires full softmax");
    }
    if (c.d_embed != c.d_hidden) {
      throw std::invalid_argument("model config: tie_embedding requires d_embed == d_hidden");
    }
  }
  if (c.softmax_mode == SoftmaxMode::kAdaptive && c.adaptive.has_value()) {
    const auto& a = *c.adaptive;
    if (a.projection_factor < 1) {
      throw std::invalid_argument("adaptive softmax: projection_factor must be >= 1");
    }
    if (a.cutoffs.empty() || a.cutoffs.back() != c.vocab_size) {
      throw std::invalid_argument("adaptive softmax: last cutoff must equal vocab_size " +
                                  std::to_string(c.vocab_size));
    }
    int64_t prev = 0;
    for (int64_t cut : a.cutoffs) {
      if (cut <= prev) {
        throw std::invalid_argument("adaptive softmax: cutoffs must be strictly ascending");
      }
      prev = cut;
    }
  }
}

AdaptiveSoftmaxConfig effective_adaptive(const ModelConfig& config) {
  if (config.softmax_mode != SoftmaxMode::kAdaptive) {
    throw std::logic_error("effective_adaptive: model uses full softmax");
  }
  return config.adaptive.has_value() ? *config.adaptive
                                     : AdaptiveSoftmaxConfig::defaults_for(config.vocab_size);
}

ParamCount count_params(const ModelConfig& c) {
  validate_config(c);
  ParamCount pc;
  auto component = [&pc](std::string name, int64_t n) {
    pc.components.emplace_back(std::move(name), n);
    pc.total += n;
  };
  component("tok_emb", c.vocab_size * c.d_embed);
  component("pos_emb", c.max_context * c.d_embed);
  if (c.d_embed != c.d_hidden) {
    component("in_proj", c.d_embed * c.d_hidden + c.d_hidden);
  }
  const int64_t d = c.d_hidden;
  const int64_t per_block = 2 * d                      // ln1
                            + 4 * (d * d + d)          // q,k,v,o
                            + 2 * d                    // ln2
                            + d * c.d_ffn + c.d_ffn    // ffn in
                            + c.d_ffn * d + d;         // ffn out
  component("blocks", c.n_layers * per_block);
  component("final_ln", 2 * d);
  if (c.softmax_mode == SoftmaxMode::kFull) {
    component("output", (c.tie_embedding ? 0 : d * c.vocab_size) + c.vocab_size);
  } else {
    const AdaptiveSoftmaxConfig a = effective_adaptive(c);
    const int64_t head_cols = a.head_units() + a.num_tails();
    int64_t n = d * head_cols + head_cols;
    for (int64_t i = 0; i < a.num_tails(); ++i) {
      const int64_t w = a.tail_width(i, d);
      n += d * w + w * a.tail_size(i) + a.tail_size(i);
    }
    component("output", n);
  }
  return pc;
}

}  // namespace tlm
