// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "support/model_harness.hpp"
#include "tlm/model.hpp"
#include "tlm/model_io.hpp"
#include "tlm/rng.hpp"

using namespace tlm;
using namespace tlm::testing;

namespace {

ModelConfig tiny_config(int64_t vocab, SoftmaxMode mode = SoftmaxMode::kFull) {
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_embed = 16;
  c.d_hidden = 16;
  c.d_ffn = 32;
  c.vocab_size = vocab;
  c.max_context = 32;
  c.dropout = 0.0;
  c.softmax_mode = mode;
  return c;
}

ModelConfig random_config(Rng& rng) {
  ModelConfig c;
  c.n_layers = 1 + static_cast<int64_t>(rng.uniform_int(3));
  c.n_heads = 1 + static_cast<int64_t>(rng.uniform_int(4));
  c.d_hidden = c.n_heads * (2 + static_cast<int64_t>(rng.uniform_int(6)));
  c.d_embed = rng.uniform() < 0.5 ? c.d_hidden : 4 + static_cast<int64_t>(rng.uniform_int(12));
  c.d_ffn = 4 + static_cast<int64_t>(rng.uniform_int(40));
  c.vocab_size = 5 + static_cast<int64_t>(rng.uniform_int(60));
  c.max_context = 8 + static_cast<int64_t>(rng.uniform_int(50));
  c.dropout = 0.0;
  if (rng.uniform() < 0.5) {
    c.softmax_mode = SoftmaxMode::kAdaptive;
    if (rng.uniform() < 0.5) {
      AdaptiveSoftmaxConfig a;
      int64_t cut = 1 + static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(c.vocab_size - 1)));
      a.cutoffs.push_back(cut);
      if (cut + 1 < c.vocab_size && rng.uniform() < 0.7) {
        a.cutoffs.push_back(cut + 1 + static_cast<int64_t>(rng.uniform_int(
                                          static_cast<uint64_t>(c.vocab_size - cut - 1))));
      }
      if (a.cutoffs.back() != c.vocab_size) a.cutoffs.push_back(c.vocab_size);
      a.projection_factor = 1 + static_cast<int64_t>(rng.uniform_int(4));
      c.adaptive = a;
    }
  } else if (c.d_embed == c.d_hidden && rng.uniform() < 0.3) {
    c.tie_embedding = true;
  }
  return c;
}

}  // namespace

TEST_CASE("presets match the published configurations exactly") {
  const ModelConfig large = preset_config("large");
  CHECK(large.n_layers == 12);
  CHECK(large.n_heads == 12);
  CHECK(large.d_embed == 768);
  CHECK(large.d_hidden == 768);
  CHECK(large.d_ffn == 3072);
  const ModelConfig s1 = preset_config("small-one");
  CHECK(s1.n_layers == 6);
  CHECK(s1.n_heads == 8);
  CHECK(s1.d_embed == 352);
  CHECK(s1.d_hidden == 352);
  CHECK(s1.d_ffn == 1408);
  const ModelConfig s2 = preset_config("small-two");
  CHECK(s2.n_layers == 6);
  CHECK(s2.n_heads == 8);
  CHECK(s2.d_embed == 256);
  CHECK(s2.d_hidden == 256);
  CHECK(s2.d_ffn == 1024);
  CHECK_THROWS_AS(preset_config("huge"), std::invalid_argument);
}

TEST_CASE("builds with the same seed are bitwise identical") {
  const ModelConfig cfg = tiny_config(20);
  const auto a = build_model<float>(cfg, 7);
  const auto b = build_model<float>(cfg, 7);
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(a.tensors[i].values == b.tensors[i].values);
  }
  const auto c = build_model<float>(cfg, 8);
  CHECK(a.tensors[0].values != c.tensors[0].values);
}

TEST_CASE("count_params equals the stored value count") {
  for (const char* name : {"large", "small-one", "small-two"}) {
    ModelConfig cfg = preset_config(name);
    cfg.vocab_size = 25000;
    cfg.dropout = 0.0;
    const ParamCount pc = count_params(cfg);
    const auto params = detail::allocate_params<float>(cfg);
    CHECK(pc.total == params.total_values());
  }
  Rng rng(12);
  for (int trial = 0; trial < 12; ++trial) {
    const ModelConfig cfg = random_config(rng);
    const ParamCount pc = count_params(cfg);
    const auto params = detail::allocate_params<float>(cfg);
    INFO("trial ", trial);
    CHECK(pc.total == params.total_values());
  }
}

TEST_CASE("large preset with 25K vocab lands in the expected parameter range") {
  ModelConfig cfg = preset_config("large");
  cfg.vocab_size = 25000;
  const int64_t total = count_params(cfg).total;
  CHECK(total == 123874216);  // regression constant from the closed form
  CHECK(total > 123.4e6 * 0.9);
  CHECK(total < 123.4e6 * 1.1);
}

TEST_CASE("adaptive softmax strictly reduces the total parameter count") {
  for (const char* name : {"large", "small-two"}) {
    for (int64_t vocab : {5000, 10000, 25000}) {
      ModelConfig full = preset_config(name);
      full.vocab_size = vocab;
      ModelConfig adaptive = full;
      adaptive.softmax_mode = SoftmaxMode::kAdaptive;
      CHECK(count_params(adaptive).total < count_params(full).total);
    }
  }
  // shrinking the vocabulary strictly shrinks the model
  ModelConfig big = preset_config("small-two");
  big.vocab_size = 25000;
  ModelConfig small = big;
  small.vocab_size = 5000;
  CHECK(count_params(small).total < count_params(big).total);
}

TEST_CASE("a specials-only vocabulary builds and runs") {
  auto params = build_model<double>(tiny_config(4), 3);
  const std::vector<int64_t> ids{0, 2, 3, 1};
  const Tensor<double> lp = forward_log_probs(params, ids);
  CHECK(lp.rows() == 4);
  CHECK(lp.cols() == 4);
}

TEST_CASE("forward rows exponentiate and sum to one") {
  Rng rng(21);
  for (SoftmaxMode mode : {SoftmaxMode::kFull, SoftmaxMode::kAdaptive}) {
    auto params = build_model<double>(tiny_config(23, mode), 5);
    std::vector<int64_t> ids;
    for (int i = 0; i < 9; ++i) ids.push_back(static_cast<int64_t>(rng.uniform_int(23)));
    const Tensor<double> lp = forward_log_probs(params, ids);
    for (int64_t r = 0; r < lp.rows(); ++r) {
      double sum = 0.0;
      for (int64_t j = 0; j < lp.cols(); ++j) sum += std::exp(lp.at(r, j));
      CHECK(std::abs(sum - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("perturbing a later token leaves earlier outputs bitwise unchanged") {
  auto params = build_model<double>(tiny_config(30), 11);
  std::vector<int64_t> ids{0, 5, 9, 13, 17, 21, 25, 29};
  const Tensor<double> base = forward_log_probs(params, ids);
  for (size_t t = 2; t < ids.size(); ++t) {
    std::vector<int64_t> perturbed = ids;
    perturbed[t] = (ids[t] + 7) % 30;
    const Tensor<double> lp = forward_log_probs(params, perturbed);
    for (size_t r = 0; r < t; ++r) {
      for (int64_t j = 0; j < base.cols(); ++j) {
        REQUIRE(lp.at(static_cast<int64_t>(r), j) == base.at(static_cast<int64_t>(r), j));
      }
    }
  }
}

TEST_CASE("adaptive log-probs match the per-unit chain-rule oracle exactly") {
  ModelConfig cfg = tiny_config(20, SoftmaxMode::kAdaptive);
  cfg.adaptive = AdaptiveSoftmaxConfig{{8, 14, 20}, 2};
  auto params = build_model<double>(cfg, 17);

  Rng rng(18);
  Tensor<double> hidden({5, cfg.d_hidden});
  for (auto& v : hidden.values) v = rng.normal();

  Graph<double> g;
  const ValueId lp = adaptive_log_probs(g, g.input(hidden), params);
  const Tensor<double>& batched = g.value(lp);
  REQUIRE(batched.cols() == 20);
  for (int64_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (int64_t v = 0; v < 20; ++v) {
      const double oracle = adaptive_unit_log_prob_oracle(params, hidden.row_ptr(r), v);
      REQUIRE(batched.at(r, v) == oracle);  // exact, same arithmetic recipe
      sum += std::exp(batched.at(r, v));
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
}

TEST_CASE("single-cluster adaptive softmax equals full softmax given copied weights") {
  auto full = build_model<double>(tiny_config(19), 23);
  auto degenerate = degenerate_adaptive_copy(full);
  const std::vector<int64_t> ids{0, 4, 7, 11, 18};
  const Tensor<double> a = forward_log_probs(full, ids);
  const Tensor<double> b = forward_log_probs(degenerate, ids);
  REQUIRE(a.shape == b.shape);
  for (int64_t i = 0; i < a.numel(); ++i) {
    CHECK(std::abs(a.values[static_cast<size_t>(i)] - b.values[static_cast<size_t>(i)]) < 1e-9);
  }
}

TEST_CASE("sequence_log_prob equals forward gathered at gold indices") {
  auto params = build_model<double>(tiny_config(26), 29);
  const std::vector<int64_t> ids{0, 9, 4, 22, 17, 1};
  const SequenceScore s = sequence_log_prob(params, ids);
  REQUIRE(s.per_token.size() == ids.size() - 1);
  const Tensor<double> lp = forward_log_probs(params, {ids.data(), ids.size() - 1});
  double total = 0.0;
  for (size_t j = 1; j < ids.size(); ++j) {
    const double expect = lp.at(static_cast<int64_t>(j - 1), ids[j]);
    CHECK(std::abs(s.per_token[j - 1] - expect) < 1e-9);
    total += expect;
  }
  CHECK(s.total == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("zeroed output weights give uniform per-token log-probs") {
  auto params = build_model<double>(tiny_config(26), 31);
  std::fill(params.at(params.out_w).values.begin(), params.at(params.out_w).values.end(), 0.0);
  std::fill(params.at(params.out_b).values.begin(), params.at(params.out_b).values.end(), 0.0);
  const SequenceScore s = sequence_log_prob(params, {0, 3, 9, 25});
  for (double lp : s.per_token) {
    CHECK(lp == doctest::Approx(-std::log(26.0)).epsilon(1e-12));
  }
}

TEST_CASE("single token after BOS scores exactly that conditional") {
  auto params = build_model<double>(tiny_config(12), 37);
  const SequenceScore s = sequence_log_prob(params, {0, 7});
  REQUIRE(s.per_token.size() == 1);
  CHECK(s.total == s.per_token[0]);
}

TEST_CASE("forward input validation") {
  auto params = build_model<double>(tiny_config(10), 41);
  CHECK_THROWS_AS(forward_log_probs(params, {0, 10}), std::out_of_range);
  CHECK_THROWS_AS(forward_log_probs(params, {0, -1}), std::out_of_range);
  const std::vector<int64_t> too_long(40, 1);
  CHECK_THROWS_WITH_AS(forward_log_probs(params, too_long),
                       doctest::Contains("max_context"), std::invalid_argument);
  CHECK_THROWS_AS(forward_log_probs(params, {}), std::invalid_argument);
  CHECK_THROWS_WITH_AS(sequence_log_prob(params, {5, 1}), doctest::Contains("BOS"),
                       std::invalid_argument);
}

TEST_CASE("config validation rejects bad shapes") {
  ModelConfig c = tiny_config(10);
  c.n_heads = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
  c = tiny_config(10, SoftmaxMode::kAdaptive);
  c.adaptive = AdaptiveSoftmaxConfig{{4, 4, 10}, 4};
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("ascending"),
                       std::invalid_argument);
  c.adaptive = AdaptiveSoftmaxConfig{{4, 8}, 4};
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("vocab_size"),
                       std::invalid_argument);
  c = tiny_config(10);
  c.tie_embedding = true;
  c.d_embed = 8;
  CHECK_THROWS_AS(validate_config(c), std::invalid_argument);
}

TEST_CASE("tied embeddings and distinct embed widths build and normalize") {
  ModelConfig tied = tiny_config(14);
  tied.tie_embedding = true;
  auto tp = build_model<double>(tied, 3);
  CHECK(count_params(tied).total == tp.total_values());
  const Tensor<double> lp = forward_log_probs(tp, {0, 5, 9});
  double sum = 0.0;
  for (int64_t j = 0; j < lp.cols(); ++j) sum += std::exp(lp.at(0, j));
  CHECK(std::abs(sum - 1.0) < 1e-12);

  ModelConfig wide = tiny_config(14);
  wide.d_embed = 10;  // input projection path
  auto wp = build_model<double>(wide, 5);
  CHECK(count_params(wide).total == wp.total_values());
  (void)forward_log_probs(wp, {0, 5, 9});
}

TEST_CASE("checkpoint round-trip reproduces bitwise-identical forward outputs") {
  const auto dir = std::filesystem::temp_directory_path() / "tlm_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();

  for (SoftmaxMode mode : {SoftmaxMode::kFull, SoftmaxMode::kAdaptive}) {
    auto params = build_model<float>(tiny_config(21, mode), 43);
    save_checkpoint(params, path);
    auto loaded = load_checkpoint<float>(path);
    REQUIRE(loaded.tensors.size() == params.tensors.size());
    for (size_t i = 0; i < params.tensors.size(); ++i) {
      REQUIRE(loaded.tensors[i].values == params.tensors[i].values);
    }
    const std::vector<int64_t> ids{0, 5, 11, 19, 2};
    const Tensor<float> a = forward_log_probs(params, ids);
    const Tensor<float> b = forward_log_probs(loaded, ids);
    CHECK(a.values == b.values);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("optimizer sidecar round-trips through the same container") {
  auto params = build_model<float>(tiny_config(9), 47);
  auto state = AdamState<float>::zeros_like(params.tensors);
  Rng rng(48);
  state.step = 123;
  for (auto& m : state.m) {
    for (auto& v : m) v = static_cast<float>(rng.normal());
  }
  const auto path = (std::filesystem::temp_directory_path() / "tlm_test.adam").string();
  save_adam_state(state, params, path);
  const auto loaded = load_adam_state(params, path);
  CHECK(loaded.step == 123);
  CHECK(loaded.m == state.m);
  CHECK(loaded.v == state.v);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects corrupted headers") {
  const auto path = (std::filesystem::temp_directory_path() / "tlm_bad.ckpt").string();
  {
    std::ofstream f(path, std::ios::binary);
    const uint32_t len = 2;
    f.write(reinterpret_cast<const char*>(&len), 4);
    f << "{}";
  }
  CHECK_THROWS_WITH_AS(load_checkpoint<float>(path), doctest::Contains("format_version"),
                       std::runtime_error);
  std::filesystem::remove(path);
}
