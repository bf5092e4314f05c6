// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// tlm: train compact Transformer language models and rescore ASR n-best
// lists with them. Every command reads an optional --config JSON file;
// explicit flags win over the file. Results are machine-readable JSON on
// stdout (or --out); logs go to stderr.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tlm/bpe.hpp"
#include "tlm/config.hpp"
#include "tlm/evaluator.hpp"
#include "tlm/kernels.hpp"
#include "tlm/model.hpp"
#include "tlm/model_io.hpp"
#include "tlm/rescorer.hpp"
#include "tlm/rng.hpp"
#include "tlm/synthetic.hpp"
#include "tlm/trainer.hpp"

namespace {

using nlohmann::json;
using namespace tlm;

uint64_t derive_seed(uint64_t master, std::string_view component) {
  return master ^ Rng::fnv1a(component);
}

void emit_result(const json& result, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << result.dump(2) << std::endl;
  } else {
    std::ofstream f(out_path);
    if (!f) throw std::runtime_error("cannot open --out file " + out_path);
    f << result.dump(2) << "\n";
    std::cerr << "result written to " << out_path << "\n";
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::vector<std::vector<int64_t>> tokenize_lines(const std::vector<std::string>& lines,
                                                 const MergeTable& merges,
                                                 const Vocabulary& vocab, bool lowercase) {
  std::vector<std::vector<int64_t>> out;
  out.reserve(lines.size());
  for (const auto& line : lines) out.push_back(encode(line, merges, vocab, lowercase));
  return out;
}

json history_to_json(const TrainResult& r) {
  json h = json::array();
  for (const auto& rec : r.history) {
    h.push_back({{"step", rec.step},
                 {"train_loss", rec.train_loss},
                 {"dev_loss", rec.dev_loss},
                 {"dev_ppl", rec.dev_ppl},
                 {"seconds", rec.seconds}});
  }
  return json{{"best_dev_ppl", r.best_dev_ppl}, {"best_step", r.best_step}, {"evals", h}};
}

// Shared state assembled from --config plus flag overrides.
struct Cli {
  ExperimentConfig config;
  std::string out_path;
  uint64_t seed = 0;
  bool seed_set = false;

  uint64_t master_seed() const { return seed_set ? seed : config.seed; }
};

struct BpeArgs {
  std::optional<std::string> corpus, merges_out, vocab_out;
  std::optional<int64_t> vocab_size;
  bool lowercase = false;
};

int run_bpe_train(Cli& cli, const BpeArgs& args) {
  TokenizerSection t = cli.config.tokenizer;
  if (args.corpus) t.corpus = *args.corpus;
  if (args.vocab_size) t.vocab_size = *args.vocab_size;
  if (args.lowercase) t.lowercase = true;
  if (args.merges_out) t.merges_path = *args.merges_out;
  if (args.vocab_out) t.vocab_path = *args.vocab_out;
  if (t.corpus.empty()) throw std::invalid_argument("bpe-train: --corpus is required");
  if (t.merges_path.empty() || t.vocab_path.empty()) {
    throw std::invalid_argument("bpe-train: --merges-out and --vocab-out are required");
  }
  std::cerr << "training BPE on " << t.corpus << " to " << t.vocab_size << " units\n";
  const BpeModel model = train_bpe(read_file(t.corpus), t.vocab_size, t.lowercase);
  if (!model.warning.empty()) std::cerr << "warning: " << model.warning << "\n";
  save_merges(t.merges_path, model.merges);
  save_vocab(t.vocab_path, model.vocab);
  emit_result(json{{"vocab_size", model.vocab.size()},
                   {"merges", model.merges.merges.size()},
                   {"merges_path", t.merges_path},
                   {"vocab_path", t.vocab_path},
                   {"warning", model.warning}},
              cli.out_path);
  return 0;
}

struct ModelArgs {
  std::optional<std::string> preset, softmax_mode;
  std::optional<int64_t> n_layers, n_heads, d_embed, d_hidden, d_ffn, max_context;
  std::optional<double> dropout;
  std::vector<int64_t> cutoffs;
  std::optional<int64_t> projection_factor;
  bool tie_embedding = false;

  ModelConfig resolve(const ModelSection& base, int64_t vocab) const {
    ModelSection m = base;
    if (preset) m.preset = *preset;
    if (n_layers) m.n_layers = *n_layers;
    if (n_heads) m.n_heads = *n_heads;
    if (d_embed) m.d_embed = *d_embed;
    if (d_hidden) m.d_hidden = *d_hidden;
    if (d_ffn) m.d_ffn = *d_ffn;
    if (max_context) m.max_context = *max_context;
    if (dropout) m.dropout = *dropout;
    if (softmax_mode) m.softmax_mode = *softmax_mode;
    if (!cutoffs.empty()) {
      AdaptiveSoftmaxConfig a = m.adaptive.value_or(AdaptiveSoftmaxConfig{});
      a.cutoffs = cutoffs;
      if (projection_factor) a.projection_factor = *projection_factor;
      m.adaptive = a;
    } else if (projection_factor) {
      AdaptiveSoftmaxConfig a = m.adaptive.value_or(AdaptiveSoftmaxConfig{});
      a.projection_factor = *projection_factor;
      m.adaptive = a;
    }
    if (tie_embedding) m.tie_embedding = true;
    return m.resolve(vocab);
  }
};

void add_model_flags(CLI::App* cmd, ModelArgs& args) {
  cmd->add_option("--preset", args.preset, "model preset: large, small-one, small-two");
  cmd->add_option("--n-layers", args.n_layers);
  cmd->add_option("--n-heads", args.n_heads);
  cmd->add_option("--d-embed", args.d_embed);
  cmd->add_option("--d-hidden", args.d_hidden);
  cmd->add_option("--d-ffn", args.d_ffn);
  cmd->add_option("--max-context", args.max_context);
  cmd->add_option("--dropout", args.dropout);
  cmd->add_option("--softmax", args.softmax_mode, "full or adaptive");
  cmd->add_option("--cutoffs", args.cutoffs, "adaptive softmax cutoffs (last = vocab)");
  cmd->add_option("--projection-factor", args.projection_factor);
  cmd->add_flag("--tie-embedding", args.tie_embedding);
}

struct TrainArgs {
  std::optional<std::string> train, dev, merges, vocab;
  std::optional<double> lr, clip_norm;
  std::optional<int64_t> batch_size, max_steps, eval_interval, warmup;
  std::optional<std::string> checkpoint_dir, log_path, model_out;
  bool lowercase = false;
};

void add_train_flags(CLI::App* cmd, TrainArgs& args) {
  cmd->add_option("--train", args.train, "training corpus (text lines)");
  cmd->add_option("--dev", args.dev, "dev corpus (text lines)");
  cmd->add_option("--merges", args.merges, "BPE merges file");
  cmd->add_option("--vocab", args.vocab, "BPE vocab file");
  cmd->add_option("--lr", args.lr);
  cmd->add_option("--batch-size", args.batch_size);
  cmd->add_option("--steps", args.max_steps);
  cmd->add_option("--eval-interval", args.eval_interval);
  cmd->add_option("--warmup", args.warmup);
  cmd->add_option("--clip-norm", args.clip_norm);
  cmd->add_option("--checkpoint-dir", args.checkpoint_dir);
  cmd->add_option("--log", args.log_path, "JSONL training log path");
  cmd->add_option("--model-out", args.model_out, "checkpoint path for the trained model");
  cmd->add_flag("--lowercase", args.lowercase);
}

TrainConfig merge_train_config(const TrainConfig& base, const TrainArgs& args,
                               uint64_t seed) {
  TrainConfig cfg = base;
  if (args.lr) cfg.learning_rate = *args.lr;
  if (args.batch_size) cfg.batch_size = *args.batch_size;
  if (args.max_steps) cfg.max_steps = *args.max_steps;
  if (args.eval_interval) cfg.eval_interval = *args.eval_interval;
  if (args.warmup) cfg.warmup_steps = *args.warmup;
  if (args.clip_norm) cfg.clip_norm = *args.clip_norm;
  if (args.checkpoint_dir) cfg.checkpoint_dir = *args.checkpoint_dir;
  if (args.log_path) cfg.log_path = *args.log_path;
  cfg.seed = seed;
  return cfg;
}

struct LoadedTokenizer {
  MergeTable merges;
  Vocabulary vocab;
  bool lowercase = false;
};

LoadedTokenizer load_tokenizer(const Cli& cli, const std::optional<std::string>& merges,
                               const std::optional<std::string>& vocab, bool lowercase) {
  const std::string mpath = merges.value_or(cli.config.tokenizer.merges_path);
  const std::string vpath = vocab.value_or(cli.config.tokenizer.vocab_path);
  if (mpath.empty() || vpath.empty()) {
    throw std::invalid_argument("--merges and --vocab are required (or set in the config)");
  }
  LoadedTokenizer t;
  t.merges = load_merges(mpath);
  t.vocab = load_vocab(vpath);
  t.lowercase = lowercase || cli.config.tokenizer.lowercase;
  return t;
}

TrainData load_train_data(const Cli& cli, const LoadedTokenizer& tok,
                          const std::string& train_path, const std::string& dev_path,
                          int64_t max_context) {
  if (train_path.empty()) throw std::invalid_argument("--train is required");
  const auto train_lines =
      tokenize_lines(read_lines(train_path), tok.merges, tok.vocab, tok.lowercase);
  std::vector<std::vector<int64_t>> dev_lines;
  if (!dev_path.empty()) {
    dev_lines = tokenize_lines(read_lines(dev_path), tok.merges, tok.vocab, tok.lowercase);
  }
  return make_train_data(train_lines, std::move(dev_lines), tok.vocab.size(), max_context);
}

int run_lm_train(Cli& cli, const ModelArgs& margs, const TrainArgs& targs) {
  const LoadedTokenizer tok = load_tokenizer(cli, targs.merges, targs.vocab, targs.lowercase);
  const ModelConfig mc = margs.resolve(cli.config.model, tok.vocab.size());
  const std::string train_path = targs.train.value_or(cli.config.training.train_corpus);
  const std::string dev_path = targs.dev.value_or(cli.config.training.dev_corpus);
  const TrainData data = load_train_data(cli, tok, train_path, dev_path, mc.max_context);
  const TrainConfig cfg = merge_train_config(cli.config.training.train, targs,
                                             derive_seed(cli.master_seed(), "train"));
  auto params = build_model<float>(mc, derive_seed(cli.master_seed(), "model_init"));
  std::cerr << "training " << count_params(mc).total << "-parameter model on "
            << data.chunks.size() << " chunks\n";
  const TrainResult result = train_ce(params, data, cfg);
  json out = history_to_json(result);
  if (targs.model_out) {
    save_checkpoint(params, *targs.model_out);
    out["model"] = *targs.model_out;
  }
  emit_result(out, cli.out_path);
  return 0;
}

int run_pretrain_finetune(Cli& cli, const ModelArgs& margs, const TrainArgs& targs,
                          const std::optional<std::string>& general_path,
                          const std::optional<int64_t>& pre_steps,
                          const std::optional<double>& pre_lr) {
  const LoadedTokenizer tok = load_tokenizer(cli, targs.merges, targs.vocab, targs.lowercase);
  const ModelConfig mc = margs.resolve(cli.config.model, tok.vocab.size());
  const std::string target_path = targs.train.value_or(cli.config.training.train_corpus);
  const std::string dev_path = targs.dev.value_or(cli.config.training.dev_corpus);
  const std::string gpath = general_path.value_or(cli.config.training.pretrain_corpus);
  const TrainData target = load_train_data(cli, tok, target_path, dev_path, mc.max_context);

  TrainData general;
  general.vocab_size = tok.vocab.size();
  if (!gpath.empty()) {
    general = load_train_data(cli, tok, gpath, dev_path, mc.max_context);
  }
  const TrainConfig ft_cfg = merge_train_config(cli.config.training.train, targs,
                                                derive_seed(cli.master_seed(), "finetune"));
  TrainConfig pre_cfg = cli.config.training.pretrain.value_or(ft_cfg);
  pre_cfg.seed = derive_seed(cli.master_seed(), "pretrain");
  pre_cfg.checkpoint_dir.clear();
  pre_cfg.log_path.clear();
  if (pre_steps) pre_cfg.max_steps = *pre_steps;
  if (pre_lr) pre_cfg.learning_rate = *pre_lr;

  auto params = build_model<float>(mc, derive_seed(cli.master_seed(), "model_init"));
  const PretrainFinetuneResult result =
      pretrain_finetune(params, general, target, pre_cfg, ft_cfg);
  json out{{"pretrain", history_to_json(result.pretrain)},
           {"finetune", history_to_json(result.finetune)}};
  if (targs.model_out) {
    save_checkpoint(params, *targs.model_out);
    out["model"] = *targs.model_out;
  }
  emit_result(out, cli.out_path);
  return 0;
}

int run_distill(Cli& cli, const ModelArgs& margs, const TrainArgs& targs,
                const std::string& teacher_path, const std::optional<double>& kd_alpha,
                const std::optional<double>& kd_temp,
                const std::optional<double>& student_dropout) {
  if (teacher_path.empty()) throw std::invalid_argument("distill: --teacher is required");
  const LoadedTokenizer tok = load_tokenizer(cli, targs.merges, targs.vocab, targs.lowercase);
  const ModelConfig mc = margs.resolve(cli.config.model, tok.vocab.size());
  const std::string train_path = targs.train.value_or(cli.config.training.train_corpus);
  const std::string dev_path = targs.dev.value_or(cli.config.training.dev_corpus);
  const TrainData data = load_train_data(cli, tok, train_path, dev_path, mc.max_context);
  const TrainConfig cfg = merge_train_config(cli.config.training.train, targs,
                                             derive_seed(cli.master_seed(), "distill"));
  KDConfig kd = cli.config.training.kd.value_or(KDConfig{});
  if (kd_alpha) kd.alpha = *kd_alpha;
  if (kd_temp) kd.temperature = *kd_temp;
  if (student_dropout) kd.student_dropout_override = *student_dropout;

  auto teacher = load_checkpoint<float>(teacher_path);
  auto student = build_model<float>(mc, derive_seed(cli.master_seed(), "model_init"));
  std::cerr << "distilling " << count_params(teacher.config).total << " -> "
            << count_params(mc).total << " parameters\n";
  const TrainResult result = train_kd(student, teacher, data, kd, cfg);
  json out = history_to_json(result);
  out["kd"] = {{"alpha", kd.alpha},
               {"temperature", kd.temperature},
               {"student_dropout", kd.student_dropout_override}};
  if (targs.model_out) {
    save_checkpoint(student, *targs.model_out);
    out["model"] = *targs.model_out;
  }
  emit_result(out, cli.out_path);
  return 0;
}

int run_rescore(Cli& cli, const std::optional<std::string>& model_path,
                const std::optional<std::string>& merges,
                const std::optional<std::string>& vocab,
                const std::optional<std::string>& nbest_in,
                const std::optional<std::string>& nbest_out,
                const std::optional<double>& alpha, const std::vector<double>& tune_grid,
                bool scores_are_costs, bool lowercase) {
  const std::string in_path = nbest_in.value_or(cli.config.rescoring.nbest_in);
  const std::string out_path = nbest_out.value_or(cli.config.rescoring.nbest_out);
  if (in_path.empty()) throw std::invalid_argument("rescore: --nbest-in is required");
  if (!model_path) throw std::invalid_argument("rescore: --model is required");
  const LoadedTokenizer tok = load_tokenizer(cli, merges, vocab, lowercase);
  auto model = load_checkpoint<float>(*model_path);
  if (model.config.vocab_size != tok.vocab.size()) {
    throw std::invalid_argument("rescore: model vocabulary " +
                                std::to_string(model.config.vocab_size) +
                                " does not match vocab file " +
                                std::to_string(tok.vocab.size()));
  }
  const bool costs = scores_are_costs || cli.config.rescoring.scores_are_costs;
  std::vector<NBestRecord> records = load_nbest(in_path, costs);
  std::cerr << "scoring " << records.size() << " records\n";
  for (const auto& w : score_nbest(records, model, tok.merges, tok.vocab, tok.lowercase)) {
    std::cerr << "warning: " << w << "\n";
  }

  json out;
  RescoreWeights weights;
  std::optional<double> fixed_alpha = alpha;
  if (!fixed_alpha && cli.config.rescoring.alpha) fixed_alpha = cli.config.rescoring.alpha;
  if (fixed_alpha) {
    weights.alpha = *fixed_alpha;
    validate_weights(weights);
    out["alpha"] = weights.alpha;
    out["tuned"] = false;
  } else {
    std::vector<double> grid = tune_grid;
    if (grid.empty()) grid = cli.config.rescoring.tune_grid;
    if (grid.empty()) grid = default_alpha_grid();
    const AlphaTuneResult tuned = tune_alpha(records, grid);
    weights.alpha = tuned.best_alpha;
    out["alpha"] = tuned.best_alpha;
    out["tuned"] = true;
    json curve = json::array();
    for (const auto& [a, w] : tuned.curve) curve.push_back({{"alpha", a}, {"wer", w}});
    out["curve"] = curve;
  }

  std::vector<size_t> selected;
  std::vector<std::pair<std::string, std::string>> scored_pairs;
  for (const auto& r : records) {
    const size_t top = r.candidates.empty() ? 0 : select_top(r, weights);
    selected.push_back(top);
    if (r.reference.has_value() && !r.candidates.empty()) {
      scored_pairs.emplace_back(*r.reference, r.candidates[top].text);
    }
  }
  if (!scored_pairs.empty()) {
    const WerBreakdown w = corpus_wer(scored_pairs);
    out["wer"] = w.wer();
    out["errors"] = w.errors();
    out["reference_words"] = w.reference_words;
  }
  out["records"] = records.size();
  if (!out_path.empty()) {
    save_nbest(out_path, records, &selected);
    out["nbest_out"] = out_path;
  }
  emit_result(out, cli.out_path);
  return 0;
}

json wer_to_json(const WerBreakdown& w) {
  return json{{"wer", w.wer()},
              {"substitutions", w.substitutions},
              {"insertions", w.insertions},
              {"deletions", w.deletions},
              {"errors", w.errors()},
              {"reference_words", w.reference_words}};
}

int run_eval_wer(Cli& cli, const std::optional<std::string>& nbest_in,
                 const std::optional<std::string>& ref_path,
                 const std::optional<std::string>& hyp_path, bool print_table,
                 const std::string& approach) {
  json out;
  std::optional<double> baseline_wer;
  WerBreakdown system;
  if (nbest_in) {
    const auto records = load_nbest(*nbest_in);
    std::vector<std::pair<std::string, std::string>> first_pass, selected_pairs;
    std::ifstream raw(*nbest_in);
    std::string line;
    size_t idx = 0;
    std::vector<std::pair<std::string, std::string>> chosen;
    for (const auto& r : records) {
      (void)idx;
      if (!r.reference.has_value() || r.candidates.empty()) continue;
      first_pass.emplace_back(*r.reference, r.candidates[0].text);
    }
    // selections come from the rescorer's "selected" field
    std::vector<size_t> selected;
    {
      std::ifstream f(*nbest_in);
      std::string l;
      while (std::getline(f, l)) {
        if (l.empty()) continue;
        const json j = json::parse(l);
        if (!j.contains("selected")) {
          throw std::invalid_argument("eval-wer: " + *nbest_in +
                                      " has no 'selected' field; run rescore first");
        }
        selected.push_back(j.at("selected").get<size_t>());
      }
    }
    for (size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (!r.reference.has_value() || r.candidates.empty()) continue;
      chosen.emplace_back(*r.reference, r.candidates.at(selected[i]).text);
    }
    if (chosen.empty()) throw std::invalid_argument("eval-wer: no scored references");
    system = corpus_wer(chosen);
    baseline_wer = corpus_wer(first_pass).wer();
  } else {
    if (!ref_path || !hyp_path) {
      throw std::invalid_argument("eval-wer: need --nbest-in, or --ref and --hyp");
    }
    const auto refs = read_lines(*ref_path);
    const auto hyps = read_lines(*hyp_path);
    if (refs.size() != hyps.size()) {
      throw std::invalid_argument("eval-wer: --ref has " + std::to_string(refs.size()) +
                                  " lines, --hyp has " + std::to_string(hyps.size()));
    }
    std::vector<std::pair<std::string, std::string>> pairs;
    for (size_t i = 0; i < refs.size(); ++i) pairs.emplace_back(refs[i], hyps[i]);
    system = corpus_wer(pairs);
  }
  out["system"] = wer_to_json(system);
  if (baseline_wer) {
    out["baseline_wer"] = *baseline_wer;
    out["werr"] = werr(*baseline_wer, system.wer());
  }
  if (print_table) {
    std::vector<ResultRow> rows;
    if (baseline_wer) rows.push_back({"first-pass", "-", "-", *baseline_wer, 0.0, false});
    rows.push_back({approach, "-", "-", system.wer(),
                    baseline_wer ? werr(*baseline_wer, system.wer()) : 0.0,
                    baseline_wer.has_value()});
    std::cerr << format_results_table(rows);
  }
  emit_result(out, cli.out_path);
  return 0;
}

int run_eval_ppl(Cli& cli, const std::string& model_path,
                 const std::optional<std::string>& merges,
                 const std::optional<std::string>& vocab, const std::string& corpus,
                 bool lowercase) {
  if (model_path.empty() || corpus.empty()) {
    throw std::invalid_argument("eval-ppl: --model and --corpus are required");
  }
  const LoadedTokenizer tok = load_tokenizer(cli, merges, vocab, lowercase);
  auto model = load_checkpoint<float>(model_path);
  const auto lines = tokenize_lines(read_lines(corpus), tok.merges, tok.vocab, tok.lowercase);
  int64_t tokens = 0;
  for (const auto& l : lines) tokens += static_cast<int64_t>(l.size()) + 1;  // + EOS
  const double ppl = perplexity(model, lines);
  emit_result(json{{"ppl", ppl}, {"lines", lines.size()}, {"tokens", tokens}},
              cli.out_path);
  return 0;
}

int run_bench(Cli& cli, const std::vector<std::string>& model_paths,
              const std::optional<std::string>& merges,
              const std::optional<std::string>& vocab,
              const std::optional<std::string>& nbest_in,
              const std::optional<std::string>& corpus, int64_t sample, int reps,
              bool lowercase) {
  if (model_paths.empty()) throw std::invalid_argument("bench: --model is required");
  const LoadedTokenizer tok = load_tokenizer(cli, merges, vocab, lowercase);

  std::vector<std::string> texts;
  if (nbest_in) {
    for (const auto& r : load_nbest(*nbest_in)) {
      for (const auto& c : r.candidates) {
        if (static_cast<int64_t>(texts.size()) >= sample) break;
        texts.push_back(c.text);
      }
    }
  } else if (corpus) {
    for (const auto& line : read_lines(*corpus)) {
      if (static_cast<int64_t>(texts.size()) >= sample) break;
      texts.push_back(line);
    }
  } else {
    throw std::invalid_argument("bench: need --nbest-in or --corpus for the sample");
  }
  if (static_cast<int64_t>(texts.size()) < sample) {
    std::cerr << "warning: sample truncated to " << texts.size() << " candidates\n";
  }

  json reports = json::array();
  std::vector<BenchReport> all;
  for (const auto& path : model_paths) {
    auto model = load_checkpoint<float>(path);
    std::vector<std::vector<int64_t>> ids;
    ids.reserve(texts.size());
    for (const auto& t : texts) {
      std::vector<int64_t> seq{Vocabulary::kBosId};
      for (int64_t id : encode(t, tok.merges, tok.vocab, tok.lowercase)) seq.push_back(id);
      seq.push_back(Vocabulary::kEosId);
      ids.push_back(std::move(seq));
    }
    std::cerr << "benchmarking " << path << " on " << ids.size() << " candidates, "
              << reps << " repetitions\n";
    const BenchReport r = bench_latency(model, path, ids, reps);
    all.push_back(r);
    reports.push_back(json{{"model", r.model_id},
                           {"candidates", r.candidate_count},
                           {"repetitions", r.repetitions},
                           {"threads", r.threads},
                           {"mean_seconds", r.mean_seconds},
                           {"per_repetition_seconds", r.per_repetition_seconds}});
  }
  json out{{"reports", reports}};
  if (all.size() >= 2) {
    json speedups = json::object();
    for (size_t i = 1; i < all.size(); ++i) {
      speedups[all[0].model_id + " vs " + all[i].model_id] = speedup(all[0], all[i]);
    }
    out["speedups"] = speedups;
  }
  emit_result(out, cli.out_path);
  return 0;
}

int run_synth_gen(Cli& cli, int order, int64_t vocab, int64_t branching, double smoothing,
                  int64_t lines, int64_t words_per_line, const std::string& out_corpus,
                  const std::optional<std::string>& source_out,
                  const std::optional<std::string>& source_in,
                  const std::optional<uint64_t>& sample_seed) {
  SyntheticSource source = [&]() {
    if (source_in) return SyntheticSource::from_json(read_file(*source_in));
    SyntheticSourceParams p;
    p.order = order;
    p.vocab_size = vocab;
    p.branching = branching;
    p.smoothing = smoothing;
    p.seed = cli.master_seed();
    return SyntheticSource::make(p);
  }();
  if (out_corpus.empty()) throw std::invalid_argument("synth-gen: --out is required");
  Rng rng = Rng::derive(sample_seed.value_or(cli.master_seed()), "corpus_sample");
  {
    std::ofstream f(out_corpus, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + out_corpus);
    for (const auto& line : source.generate_corpus(rng, lines, words_per_line)) {
      f << line << "\n";
    }
  }
  if (source_out) {
    std::ofstream f(*source_out, std::ios::binary);
    f << source.to_json();
  }
  json out{{"lines", lines},
           {"words_per_line", words_per_line},
           {"vocab", source.vocab_size()},
           {"entropy_rate_nats", source.entropy_rate()},
           {"analytic_token_ppl", source.analytic_token_ppl(words_per_line)},
           {"corpus", out_corpus}};
  if (source_out) out["source"] = *source_out;
  emit_result(out, cli.out_path);
  return 0;
}

int run_synth_nbest(Cli& cli, const std::string& source_in, int64_t utterances, int64_t n,
                    double sub_rate, double ins_rate, double del_rate,
                    int64_t words_per_line, int64_t ngram_lines, const std::string& out_path) {
  if (source_in.empty()) throw std::invalid_argument("synth-nbest: --source-in is required");
  if (out_path.empty()) throw std::invalid_argument("synth-nbest: --out is required");
  const SyntheticSource source = SyntheticSource::from_json(read_file(source_in));
  Rng ngram_rng = Rng::derive(cli.master_seed(), "ngram_train");
  BigramLm ngram;
  ngram.train(source.generate_corpus(ngram_rng, ngram_lines, words_per_line));
  SynthNbestParams p;
  p.n = n;
  p.sub_rate = sub_rate;
  p.ins_rate = ins_rate;
  p.del_rate = del_rate;
  p.seed = cli.master_seed();
  const auto records = synth_nbest(source, ngram, p, utterances, words_per_line);
  save_nbest(out_path, records);
  emit_result(json{{"utterances", utterances}, {"n", n}, {"nbest", out_path}},
              cli.out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tlm: small Transformer LMs for n-best rescoring"};
  app.require_subcommand(1);

  Cli cli;
  std::string config_path;
  int threads = 0;
  app.add_option("--config", config_path, "experiment config JSON (flags override it)");
  app.add_option("--seed", cli.seed, "master seed; component seeds derive from it")
      ->each([&cli](const std::string&) { cli.seed_set = true; });
  app.add_option("--threads", threads, "pin the OpenMP thread count");
  app.add_option("--out", cli.out_path, "write the JSON result here instead of stdout");

  // bpe-train
  auto* bpe_cmd = app.add_subcommand("bpe-train", "learn a BPE vocabulary from a corpus");
  BpeArgs bpe_args;
  bpe_cmd->add_option("--corpus", bpe_args.corpus);
  bpe_cmd->add_option("--vocab-size", bpe_args.vocab_size);
  bpe_cmd->add_flag("--lowercase", bpe_args.lowercase);
  bpe_cmd->add_option("--merges-out", bpe_args.merges_out);
  bpe_cmd->add_option("--vocab-out", bpe_args.vocab_out);

  // lm-train
  auto* train_cmd = app.add_subcommand("lm-train", "train a Transformer LM with cross-entropy");
  ModelArgs train_margs;
  TrainArgs train_targs;
  add_model_flags(train_cmd, train_margs);
  add_train_flags(train_cmd, train_targs);

  // lm-pretrain-finetune
  auto* pf_cmd = app.add_subcommand("lm-pretrain-finetune",
                                    "pretrain on a general corpus, then fine-tune");
  ModelArgs pf_margs;
  TrainArgs pf_targs;
  std::optional<std::string> pf_general;
  std::optional<int64_t> pf_steps;
  std::optional<double> pf_lr;
  add_model_flags(pf_cmd, pf_margs);
  add_train_flags(pf_cmd, pf_targs);
  pf_cmd->add_option("--general", pf_general, "general-domain pretraining corpus");
  pf_cmd->add_option("--pre-steps", pf_steps, "pretraining max steps");
  pf_cmd->add_option("--pre-lr", pf_lr, "pretraining learning rate");

  // distill
  auto* kd_cmd = app.add_subcommand("distill", "train a student against a teacher checkpoint");
  ModelArgs kd_margs;
  TrainArgs kd_targs;
  std::string kd_teacher;
  std::optional<double> kd_alpha, kd_temp, kd_sdrop;
  add_model_flags(kd_cmd, kd_margs);
  add_train_flags(kd_cmd, kd_targs);
  kd_cmd->add_option("--teacher", kd_teacher, "teacher checkpoint")->required();
  kd_cmd->add_option("--kd-alpha", kd_alpha, "weight on hard-label CE");
  kd_cmd->add_option("--kd-temperature", kd_temp);
  kd_cmd->add_option("--student-dropout", kd_sdrop);

  // rescore
  auto* rs_cmd = app.add_subcommand("rescore", "second-pass n-best rescoring");
  std::optional<std::string> rs_model, rs_merges, rs_vocab, rs_in, rs_out;
  std::optional<double> rs_alpha;
  std::vector<double> rs_grid;
  bool rs_costs = false, rs_lower = false;
  rs_cmd->add_option("--model", rs_model, "LM checkpoint");
  rs_cmd->add_option("--merges", rs_merges);
  rs_cmd->add_option("--vocab", rs_vocab);
  rs_cmd->add_option("--nbest-in", rs_in);
  rs_cmd->add_option("--nbest-out", rs_out);
  rs_cmd->add_option("--alpha", rs_alpha, "fixed interpolation weight in [0,1]");
  rs_cmd->add_option("--tune-grid", rs_grid, "alphas to search on the dev references");
  rs_cmd->add_flag("--scores-are-costs", rs_costs, "flip am/ngram signs at ingestion");
  rs_cmd->add_flag("--lowercase", rs_lower);

  // eval-wer
  auto* ew_cmd = app.add_subcommand("eval-wer", "corpus WER (and WERR vs first pass)");
  std::optional<std::string> ew_nbest, ew_ref, ew_hyp;
  bool ew_table = false;
  std::string ew_name = "rescored";
  ew_cmd->add_option("--nbest-in", ew_nbest, "rescored n-best file with selections");
  ew_cmd->add_option("--ref", ew_ref, "reference transcript lines");
  ew_cmd->add_option("--hyp", ew_hyp, "hypothesis lines (aligned with --ref)");
  ew_cmd->add_flag("--table", ew_table, "print an aligned comparison table to stderr");
  ew_cmd->add_option("--approach", ew_name, "row label for the table");

  // eval-ppl
  auto* ep_cmd = app.add_subcommand("eval-ppl", "token-level perplexity of a corpus");
  std::string ep_model, ep_corpus;
  std::optional<std::string> ep_merges, ep_vocab;
  bool ep_lower = false;
  ep_cmd->add_option("--model", ep_model)->required();
  ep_cmd->add_option("--merges", ep_merges);
  ep_cmd->add_option("--vocab", ep_vocab);
  ep_cmd->add_option("--corpus", ep_corpus)->required();
  ep_cmd->add_flag("--lowercase", ep_lower);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "CPU rescoring latency benchmark");
  std::vector<std::string> bench_models;
  std::optional<std::string> bench_merges, bench_vocab, bench_nbest, bench_corpus;
  int64_t bench_sample = 1000;
  int bench_reps = 10;
  bool bench_lower = false;
  bench_cmd->add_option("--model", bench_models, "checkpoint(s); first is the reference");
  bench_cmd->add_option("--merges", bench_merges);
  bench_cmd->add_option("--vocab", bench_vocab);
  bench_cmd->add_option("--nbest-in", bench_nbest, "sample candidates from this file");
  bench_cmd->add_option("--corpus", bench_corpus, "or sample lines from this corpus");
  bench_cmd->add_option("--sample", bench_sample, "candidate sample size");
  bench_cmd->add_option("--reps", bench_reps, "measured repetitions (after one warm-up)");
  bench_cmd->add_flag("--lowercase", bench_lower);

  // synth-gen
  auto* sg_cmd = app.add_subcommand("synth-gen", "generate a Markov-source corpus");
  int sg_order = 2;
  int64_t sg_vocab = 50, sg_branching = 5, sg_lines = 1000, sg_words = 16;
  double sg_smoothing = 0.05;
  std::string sg_out;
  std::optional<std::string> sg_source_out, sg_source_in;
  std::optional<uint64_t> sg_sample_seed;
  sg_cmd->add_option("--order", sg_order, "Markov order");
  sg_cmd->add_option("--vocab", sg_vocab, "word types");
  sg_cmd->add_option("--branching", sg_branching, "preferred successors per history");
  sg_cmd->add_option("--smoothing", sg_smoothing);
  sg_cmd->add_option("--lines", sg_lines);
  sg_cmd->add_option("--words-per-line", sg_words);
  sg_cmd->add_option("--out", sg_out, "corpus output path");
  sg_cmd->add_option("--source-out", sg_source_out, "save the source tables as JSON");
  sg_cmd->add_option("--source-in", sg_source_in, "reuse a saved source");
  sg_cmd->add_option("--sample-seed", sg_sample_seed,
                     "separate seed for sampling (defaults to --seed)");

  // synth-nbest
  auto* sn_cmd = app.add_subcommand("synth-nbest", "generate a synthetic n-best file");
  std::string sn_source, sn_out;
  int64_t sn_utts = 200, sn_n = 20, sn_words = 16, sn_ngram_lines = 300;
  double sn_sub = 0.15, sn_ins = 0.05, sn_del = 0.05;
  sn_cmd->add_option("--source-in", sn_source)->required();
  sn_cmd->add_option("--utterances", sn_utts);
  sn_cmd->add_option("--n", sn_n, "candidates per utterance");
  sn_cmd->add_option("--sub-rate", sn_sub);
  sn_cmd->add_option("--ins-rate", sn_ins);
  sn_cmd->add_option("--del-rate", sn_del);
  sn_cmd->add_option("--words-per-line", sn_words);
  sn_cmd->add_option("--ngram-lines", sn_ngram_lines,
                     "training slice for the weak first-pass bigram LM");
  sn_cmd->add_option("--out", sn_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) cli.config = load_experiment_config(config_path);
    if (threads > 0) kernels::set_threads(threads);

    if (*bpe_cmd) return run_bpe_train(cli, bpe_args);
    if (*train_cmd) return run_lm_train(cli, train_margs, train_targs);
    if (*pf_cmd) return run_pretrain_finetune(cli, pf_margs, pf_targs, pf_general, pf_steps, pf_lr);
    if (*kd_cmd) return run_distill(cli, kd_margs, kd_targs, kd_teacher, kd_alpha, kd_temp, kd_sdrop);
    if (*rs_cmd) {
      return run_rescore(cli, rs_model, rs_merges, rs_vocab, rs_in, rs_out, rs_alpha,
                         rs_grid, rs_costs, rs_lower);
    }
    if (*ew_cmd) return run_eval_wer(cli, ew_nbest, ew_ref, ew_hyp, ew_table, ew_name);
    if (*ep_cmd) return run_eval_ppl(cli, ep_model, ep_merges, ep_vocab, ep_corpus, ep_lower);
    if (*bench_cmd) {
      return run_bench(cli, bench_models, bench_merges, bench_vocab, bench_nbest,
                       bench_corpus, bench_sample, bench_reps, bench_lower);
    }
    if (*sg_cmd) {
      return run_synth_gen(cli, sg_order, sg_vocab, sg_branching, sg_smoothing, sg_lines,
                           sg_words, sg_out, sg_source_out, sg_source_in, sg_sample_seed);
    }
    if (*sn_cmd) {
      return run_synth_nbest(cli, sn_source, sn_utts, sn_n, sn_sub, sn_ins, sn_del,
                             sn_words, sn_ngram_lines, sn_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    std::cout << nlohmann::json{{"error", e.what()}}.dump() << std::endl;
    return 1;
  }
  return 0;
}
