// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#include "tlm/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tlm/model_io.hpp"

namespace tlm {

using nlohmann::json;

bool operator==(const AdaptiveSoftmaxConfig& a, const AdaptiveSoftmaxConfig& b) {
  return a.cutoffs == b.cutoffs && a.projection_factor == b.projection_factor;
}

bool operator==(const TrainConfig& a, const TrainConfig& b) {
  return a.learning_rate == b.learning_rate && a.warmup_steps == b.warmup_steps &&
         a.batch_size == b.batch_size && a.max_steps == b.max_steps &&
         a.eval_interval == b.eval_interval && a.clip_norm == b.clip_norm &&
         a.seed == b.seed && a.checkpoint_dir == b.checkpoint_dir &&
         a.log_path == b.log_path;
}

bool operator==(const KDConfig& a, const KDConfig& b) {
  return a.alpha == b.alpha && a.temperature == b.temperature &&
         a.student_dropout_override == b.student_dropout_override;
}

bool TrainingSection::operator==(const TrainingSection& o) const {
  return train_corpus == o.train_corpus && dev_corpus == o.dev_corpus &&
         pretrain_corpus == o.pretrain_corpus && train == o.train &&
         pretrain == o.pretrain && kd == o.kd;
}

ModelConfig ModelSection::resolve(int64_t default_vocab) const {
  ModelConfig c;
  if (!preset.empty()) c = preset_config(preset);
  auto take = [](std::optional<int64_t> v, int64_t& field) {
    if (v.has_value()) field = *v;
  };
  take(n_layers, c.n_layers);
  take(n_heads, c.n_heads);
  take(d_embed, c.d_embed);
  take(d_hidden, c.d_hidden);
  take(d_ffn, c.d_ffn);
  take(max_context, c.max_context);
  c.vocab_size = vocab_size.value_or(default_vocab);
  if (dropout.has_value()) c.dropout = *dropout;
  if (softmax_mode == "full") {
    c.softmax_mode = SoftmaxMode::kFull;
  } else if (softmax_mode == "adaptive") {
    c.softmax_mode = SoftmaxMode::kAdaptive;
  } else {
    throw std::invalid_argument("config: unknown softmax_mode '" + softmax_mode + "'");
  }
  c.adaptive = adaptive;
  c.tie_embedding = tie_embedding;
  validate_config(c);
  return c;
}

namespace {

json train_config_to_json(const TrainConfig& t) {
  return json{{"learning_rate", t.learning_rate}, {"warmup_steps", t.warmup_steps},
              {"batch_size", t.batch_size},       {"max_steps", t.max_steps},
              {"eval_interval", t.eval_interval}, {"clip_norm", t.clip_norm},
              {"seed", t.seed},                   {"checkpoint_dir", t.checkpoint_dir},
              {"log_path", t.log_path}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig t;
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.warmup_steps = j.value("warmup_steps", t.warmup_steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.max_steps = j.value("max_steps", t.max_steps);
  t.eval_interval = j.value("eval_interval", t.eval_interval);
  t.clip_norm = j.value("clip_norm", t.clip_norm);
  t.seed = j.value("seed", t.seed);
  t.checkpoint_dir = j.value("checkpoint_dir", t.checkpoint_dir);
  t.log_path = j.value("log_path", t.log_path);
  return t;
}

template <typename T>
void set_if(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

}  // namespace

std::string experiment_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["tokenizer"] = {{"corpus", c.tokenizer.corpus},
                    {"vocab_size", c.tokenizer.vocab_size},
                    {"lowercase", c.tokenizer.lowercase},
                    {"merges_path", c.tokenizer.merges_path},
                    {"vocab_path", c.tokenizer.vocab_path}};
  json m;
  m["preset"] = c.model.preset;
  auto put = [&m](const char* key, const auto& opt) {
    if (opt.has_value()) {
      m[key] = *opt;
    } else {
      m[key] = nullptr;
    }
  };
  put("n_layers", c.model.n_layers);
  put("n_heads", c.model.n_heads);
  put("d_embed", c.model.d_embed);
  put("d_hidden", c.model.d_hidden);
  put("d_ffn", c.model.d_ffn);
  put("vocab_size", c.model.vocab_size);
  put("max_context", c.model.max_context);
  put("dropout", c.model.dropout);
  m["softmax_mode"] = c.model.softmax_mode;
  if (c.model.adaptive.has_value()) {
    m["adaptive"] = {{"cutoffs", c.model.adaptive->cutoffs},
                     {"projection_factor", c.model.adaptive->projection_factor}};
  } else {
    m["adaptive"] = nullptr;
  }
  m["tie_embedding"] = c.model.tie_embedding;
  j["model"] = std::move(m);

  json t;
  t["train_corpus"] = c.training.train_corpus;
  t["dev_corpus"] = c.training.dev_corpus;
  t["pretrain_corpus"] = c.training.pretrain_corpus;
  t["train"] = train_config_to_json(c.training.train);
  t["pretrain"] = c.training.pretrain.has_value()
                      ? train_config_to_json(*c.training.pretrain)
                      : json(nullptr);
  if (c.training.kd.has_value()) {
    t["kd"] = {{"alpha", c.training.kd->alpha},
               {"temperature", c.training.kd->temperature},
               {"student_dropout", c.training.kd->student_dropout_override}};
  } else {
    t["kd"] = nullptr;
  }
  j["training"] = std::move(t);

  j["rescoring"] = {{"nbest_in", c.rescoring.nbest_in},
                    {"nbest_out", c.rescoring.nbest_out},
                    {"alpha", c.rescoring.alpha.has_value() ? json(*c.rescoring.alpha)
                                                            : json(nullptr)},
                    {"tune_grid", c.rescoring.tune_grid},
                    {"scores_are_costs", c.rescoring.scores_are_costs}};
  j["evaluation"] = {{"out", c.evaluation.out}};
  return j.dump(2);
}

ExperimentConfig experiment_from_json(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig c;
  c.seed = j.value("seed", c.seed);
  if (j.contains("tokenizer")) {
    const json& t = j.at("tokenizer");
    c.tokenizer.corpus = t.value("corpus", std::string());
    c.tokenizer.vocab_size = t.value("vocab_size", c.tokenizer.vocab_size);
    c.tokenizer.lowercase = t.value("lowercase", false);
    c.tokenizer.merges_path = t.value("merges_path", std::string());
    c.tokenizer.vocab_path = t.value("vocab_path", std::string());
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    c.model.preset = m.value("preset", std::string());
    set_if(m, "n_layers", c.model.n_layers);
    set_if(m, "n_heads", c.model.n_heads);
    set_if(m, "d_embed", c.model.d_embed);
    set_if(m, "d_hidden", c.model.d_hidden);
    set_if(m, "d_ffn", c.model.d_ffn);
    set_if(m, "vocab_size", c.model.vocab_size);
    set_if(m, "max_context", c.model.max_context);
    set_if(m, "dropout", c.model.dropout);
    c.model.softmax_mode = m.value("softmax_mode", std::string("full"));
    if (m.contains("adaptive") && !m.at("adaptive").is_null()) {
      AdaptiveSoftmaxConfig a;
      a.cutoffs = m.at("adaptive").at("cutoffs").get<std::vector<int64_t>>();
      a.projection_factor = m.at("adaptive").value("projection_factor", int64_t{4});
      c.model.adaptive = a;
    }
    c.model.tie_embedding = m.value("tie_embedding", false);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    c.training.train_corpus = t.value("train_corpus", std::string());
    c.training.dev_corpus = t.value("dev_corpus", std::string());
    c.training.pretrain_corpus = t.value("pretrain_corpus", std::string());
    if (t.contains("train")) c.training.train = train_config_from_json(t.at("train"));
    if (t.contains("pretrain") && !t.at("pretrain").is_null()) {
      c.training.pretrain = train_config_from_json(t.at("pretrain"));
    }
    if (t.contains("kd") && !t.at("kd").is_null()) {
      KDConfig kd;
      kd.alpha = t.at("kd").value("alpha", kd.alpha);
      kd.temperature = t.at("kd").value("temperature", kd.temperature);
      kd.student_dropout_override =
          t.at("kd").value("student_dropout", kd.student_dropout_override);
      c.training.kd = kd;
    }
  }
  if (j.contains("rescoring")) {
    const json& r = j.at("rescoring");
    c.rescoring.nbest_in = r.value("nbest_in", std::string());
    c.rescoring.nbest_out = r.value("nbest_out", std::string());
    set_if(r, "alpha", c.rescoring.alpha);
    if (r.contains("tune_grid")) {
      c.rescoring.tune_grid = r.at("tune_grid").get<std::vector<double>>();
    }
    c.rescoring.scores_are_costs = r.value("scores_are_costs", false);
  }
  if (j.contains("evaluation")) {
    c.evaluation.out = j.at("evaluation").value("out", std::string());
  }
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return experiment_from_json(buf.str());
}

}  // namespace tlm
