// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Checkpoint container: a little-endian uint32 header length, a UTF-8 JSON
// header (format version, model config, named-tensor manifest with byte
// offsets), then the tensor bodies as little-endian 32-bit floats in
// manifest order. Optimizer state uses the same container with two entries
// (first and second moment) per parameter.

#ifndef TLM_MODEL_IO_HPP_
#define TLM_MODEL_IO_HPP_

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tlm/adam.hpp"
#include "tlm/model.hpp"

namespace tlm {

inline constexpr int kCheckpointFormatVersion = 1;

inline nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["n_layers"] = c.n_layers;
  j["n_heads"] = c.n_heads;
  j["d_embed"] = c.d_embed;
  j["d_hidden"] = c.d_hidden;
  j["d_ffn"] = c.d_ffn;
  j["vocab_size"] = c.vocab_size;
  j["max_context"] = c.max_context;
  j["dropout"] = c.dropout;
  j["softmax_mode"] = c.softmax_mode == SoftmaxMode::kFull ? "full" : "adaptive";
  j["tie_embedding"] = c.tie_embedding;
  if (c.adaptive.has_value()) {
    j["adaptive"] = {{"cutoffs", c.adaptive->cutoffs},
                     {"projection_factor", c.adaptive->projection_factor}};
  } else {
    j["adaptive"] = nullptr;
  }
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int64_t>();
  c.n_heads = j.at("n_heads").get<int64_t>();
  c.d_embed = j.at("d_embed").get<int64_t>();
  c.d_hidden = j.at("d_hidden").get<int64_t>();
  c.d_ffn = j.at("d_ffn").get<int64_t>();
  c.vocab_size = j.at("vocab_size").get<int64_t>();
  c.max_context = j.value("max_context", int64_t{512});
  c.dropout = j.value("dropout", 0.1);
  const std::string mode = j.value("softmax_mode", std::string("full"));
  if (mode == "full") {
    c.softmax_mode = SoftmaxMode::kFull;
  } else if (mode == "adaptive") {
    c.softmax_mode = SoftmaxMode::kAdaptive;
  } else {
    throw std::invalid_argument("config: unknown softmax_mode '" + mode + "'");
  }
  c.tie_embedding = j.value("tie_embedding", false);
  if (j.contains("adaptive") && !j.at("adaptive").is_null()) {
    AdaptiveSoftmaxConfig a;
    a.cutoffs = j.at("adaptive").at("cutoffs").get<std::vector<int64_t>>();
    a.projection_factor = j.at("adaptive").value("projection_factor", int64_t{4});
    c.adaptive = a;
  }
  return c;
}

namespace detail {

inline void write_header(std::ofstream& f, const nlohmann::json& header) {
  const std::string text = header.dump();
  const uint32_t len = static_cast<uint32_t>(text.size());
  f.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline nlohmann::json read_header(std::ifstream& f, const std::string& path) {
  uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!f) throw std::runtime_error("checkpoint: cannot read header length from " + path);
  std::string text(len, '\0');
  f.read(text.data(), static_cast<std::streamsize>(len));
  if (!f) throw std::runtime_error("checkpoint: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(text);
  const int version = header.value("format_version", -1);
  if (version != kCheckpointFormatVersion) {
    throw std::runtime_error("checkpoint: unsupported format_version " +
                             std::to_string(version) + " in " + path);
  }
  return header;
}

template <typename T>
void write_f32(std::ofstream& f, const std::vector<T>& values) {
  if constexpr (std::is_same_v<T, float>) {
    f.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    std::vector<float> buf(values.begin(), values.end());
    f.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

template <typename T>
void read_f32(std::ifstream& f, std::vector<T>& out, const std::string& path) {
  std::vector<float> buf(out.size());
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw std::runtime_error("checkpoint: truncated tensor body in " + path);
  for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(buf[i]);
}

}  // namespace detail

template <typename T>
void save_checkpoint(const ModelParameters<T>& params, const std::string& path) {
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["config"] = config_to_json(params.config);
  nlohmann::json manifest = nlohmann::json::array();
  int64_t offset = 0;
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    manifest.push_back({{"name", params.names[i]},
                        {"shape", params.tensors[i].shape},
                        {"offset", offset}});
    offset += params.tensors[i].numel() * static_cast<int64_t>(sizeof(float));
  }
  header["tensors"] = manifest;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  detail::write_header(f, header);
  for (const auto& t : params.tensors) detail::write_f32(f, t.values);
  if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

template <typename T>
ModelParameters<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  nlohmann::json header = detail::read_header(f, path);
  ModelParameters<T> params =
      detail::allocate_params<T>(config_from_json(header.at("config")));

  std::unordered_map<std::string, size_t> index;
  for (size_t i = 0; i < params.names.size(); ++i) index.emplace(params.names[i], i);

  const auto& manifest = header.at("tensors");
  if (manifest.size() != params.tensors.size()) {
    throw std::runtime_error("load_checkpoint: manifest lists " +
                             std::to_string(manifest.size()) + " tensors, config needs " +
                             std::to_string(params.tensors.size()));
  }
  const std::streampos body = f.tellg();
  for (const auto& entry : manifest) {
    const std::string name = entry.at("name").get<std::string>();
    auto it = index.find(name);
    if (it == index.end()) {
      throw std::runtime_error("load_checkpoint: unexpected tensor '" + name + "' in " + path);
    }
    Tensor<T>& t = params.tensors[it->second];
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    if (shape != t.shape) {
      throw std::runtime_error("load_checkpoint: tensor '" + name + "' has shape " +
                               shape_to_string(shape) + ", expected " +
                               shape_to_string(t.shape));
    }
    f.seekg(body + std::streampos(entry.at("offset").get<int64_t>()));
    detail::read_f32(f, t.values, path);
  }
  return params;
}

// Optimizer sidecar: per parameter "<name>#m" and "<name>#v" tensors plus
// the step counter in the header.
template <typename T>
void save_adam_state(const AdamState<T>& state, const ModelParameters<T>& params,
                     const std::string& path) {
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["kind"] = "adam_state";
  header["step"] = state.step;
  nlohmann::json manifest = nlohmann::json::array();
  int64_t offset = 0;
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    for (const char* suffix : {"#m", "#v"}) {
      manifest.push_back({{"name", params.names[i] + suffix},
                          {"shape", params.tensors[i].shape},
                          {"offset", offset}});
      offset += params.tensors[i].numel() * static_cast<int64_t>(sizeof(float));
    }
  }
  header["tensors"] = manifest;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_adam_state: cannot open " + path);
  detail::write_header(f, header);
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    detail::write_f32(f, state.m[i]);
    detail::write_f32(f, state.v[i]);
  }
}

template <typename T>
AdamState<T> load_adam_state(const ModelParameters<T>& params, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_adam_state: cannot open " + path);
  nlohmann::json header = detail::read_header(f, path);
  if (header.value("kind", std::string()) != "adam_state") {
    throw std::runtime_error("load_adam_state: " + path + " is not an optimizer state file");
  }
  AdamState<T> state = AdamState<T>::zeros_like(params.tensors);
  state.step = header.at("step").get<int64_t>();
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    detail::read_f32(f, state.m[i], path);
    detail::read_f32(f, state.v[i], path);
  }
  return state;
}

}  // namespace tlm

#endif  // TLM_MODEL_IO_HPP_
