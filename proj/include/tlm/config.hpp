// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Experiment configuration: one JSON file with named sections, each CLI
// flag overriding its field (flags win over the file). One top-level seed
// feeds every component through Rng::derive.

#ifndef TLM_CONFIG_HPP_
#define TLM_CONFIG_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tlm/model.hpp"
#include "tlm/trainer.hpp"

namespace tlm {

struct TokenizerSection {
  std::string corpus;
  int64_t vocab_size = 1000;
  bool lowercase = false;
  std::string merges_path;
  std::string vocab_path;

  bool operator==(const TokenizerSection&) const = default;
};

struct ModelSection {
  std::string preset;  // "", "large", "small-one" or "small-two"
  std::optional<int64_t> n_layers, n_heads, d_embed, d_hidden, d_ffn;
  std::optional<int64_t> vocab_size, max_context;
  std::optional<double> dropout;
  std::string softmax_mode = "full";
  std::optional<AdaptiveSoftmaxConfig> adaptive;
  bool tie_embedding = false;

  bool operator==(const ModelSection&) const = default;

  // Expands the preset (exact published dimensions) and applies explicit
  // overrides; `default_vocab` fills vocab_size when unset.
  ModelConfig resolve(int64_t default_vocab) const;
};

struct TrainingSection {
  std::string train_corpus;
  std::string dev_corpus;
  std::string pretrain_corpus;
  TrainConfig train;
  std::optional<TrainConfig> pretrain;  // schedule for the pretraining phase
  std::optional<KDConfig> kd;

  bool operator==(const TrainingSection& o) const;
};

struct RescoringSection {
  std::string nbest_in;
  std::string nbest_out;
  std::optional<double> alpha;      // unset = tune on the dev references
  std::vector<double> tune_grid;    // empty = default 0..1 step 0.05
  bool scores_are_costs = false;

  bool operator==(const RescoringSection&) const = default;
};

struct EvaluationSection {
  std::string out;

  bool operator==(const EvaluationSection&) const = default;
};

struct ExperimentConfig {
  uint64_t seed = 1;
  TokenizerSection tokenizer;
  ModelSection model;
  TrainingSection training;
  RescoringSection rescoring;
  EvaluationSection evaluation;

  bool operator==(const ExperimentConfig&) const = default;
};

bool operator==(const TrainConfig& a, const TrainConfig& b);
bool operator==(const KDConfig& a, const KDConfig& b);
bool operator==(const AdaptiveSoftmaxConfig& a, const AdaptiveSoftmaxConfig& b);

std::string experiment_to_json(const ExperimentConfig& config);
ExperimentConfig experiment_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace tlm

#endif  // TLM_CONFIG_HPP_
