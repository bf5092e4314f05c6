// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "tlm/config.hpp"

using namespace tlm;

namespace {

ExperimentConfig full_config() {
  ExperimentConfig c;
  c.seed = 42;
  c.tokenizer = {"corpus.txt", 5000, true, "out.merges", "out.vocab"};
  c.model.preset = "small-two";
  c.model.vocab_size = 5000;
  c.model.max_context = 128;
  c.model.dropout = 0.1;
  c.model.softmax_mode = "adaptive";
  c.model.adaptive = AdaptiveSoftmaxConfig{{1000, 2500, 5000}, 4};
  c.training.train_corpus = "train.txt";
  c.training.dev_corpus = "dev.txt";
  c.training.pretrain_corpus = "general.txt";
  c.training.train.learning_rate = 3e-4;
  c.training.train.max_steps = 500;
  c.training.train.checkpoint_dir = "ckpt";
  TrainConfig pre;
  pre.max_steps = 2000;
  c.training.pretrain = pre;
  KDConfig kd;
  c.training.kd = kd;
  c.rescoring.nbest_in = "in.jsonl";
  c.rescoring.nbest_out = "out.jsonl";
  c.rescoring.alpha = 0.45;
  c.rescoring.tune_grid = {0.0, 0.5, 1.0};
  c.rescoring.scores_are_costs = true;
  c.evaluation.out = "report.json";
  return c;
}

}  // namespace

TEST_CASE("parse-serialize-parse is the identity") {
  const ExperimentConfig a = full_config();
  const ExperimentConfig b = experiment_from_json(experiment_to_json(a));
  CHECK(a == b);
  // and again through a file
  const std::string path =
      (std::filesystem::temp_directory_path() / "tlm_test_config.json").string();
  {
    std::ofstream f(path);
    f << experiment_to_json(b);
  }
  CHECK(load_experiment_config(path) == a);
  std::filesystem::remove(path);

  const ExperimentConfig minimal;
  CHECK(experiment_from_json(experiment_to_json(minimal)) == minimal);
}

TEST_CASE("presets expand to the published dimensions through resolve") {
  ModelSection m;
  m.preset = "large";
  m.vocab_size = 25000;
  m.dropout = 0.1;
  const ModelConfig large = m.resolve(0);
  CHECK(large.n_layers == 12);
  CHECK(large.n_heads == 12);
  CHECK(large.d_embed == 768);
  CHECK(large.d_hidden == 768);
  CHECK(large.d_ffn == 3072);
  CHECK(large.vocab_size == 25000);

  m.preset = "small-one";
  const ModelConfig s1 = m.resolve(0);
  CHECK(std::tuple(s1.n_layers, s1.n_heads, s1.d_embed, s1.d_hidden, s1.d_ffn) ==
        std::tuple<int64_t, int64_t, int64_t, int64_t, int64_t>(6, 8, 352, 352, 1408));

  m.preset = "small-two";
  const ModelConfig s2 = m.resolve(0);
  CHECK(std::tuple(s2.n_layers, s2.n_heads, s2.d_embed, s2.d_hidden, s2.d_ffn) ==
        std::tuple<int64_t, int64_t, int64_t, int64_t, int64_t>(6, 8, 256, 256, 1024));
}

TEST_CASE("resolve applies overrides on top of the preset") {
  ModelSection m;
  m.preset = "small-two";
  m.n_layers = 2;
  m.dropout = 0.0;
  m.softmax_mode = "adaptive";
  const ModelConfig c = m.resolve(300);  // vocab from the tokenizer
  CHECK(c.n_layers == 2);
  CHECK(c.d_hidden == 256);
  CHECK(c.vocab_size == 300);
  CHECK(c.softmax_mode == SoftmaxMode::kAdaptive);
}

TEST_CASE("resolve validates the assembled config") {
  ModelSection m;
  m.preset = "small-two";
  m.softmax_mode = "sideways";
  CHECK_THROWS_AS(m.resolve(100), std::invalid_argument);
  m.softmax_mode = "full";
  m.n_heads = 7;  // 256 % 7 != 0
  CHECK_THROWS_AS(m.resolve(100), std::invalid_argument);
  ModelSection bad_preset;
  bad_preset.preset = "giant";
  CHECK_THROWS_AS(bad_preset.resolve(100), std::invalid_argument);
}
