// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace ssmdiff::model {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'D', 'I', 'C', 'K', 'P', 'T'};
constexpr std::uint64_t kMaxName = 1 << 12;

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw CheckpointError("checkpoint truncated");
  }
  return v;
}

std::string get_string(std::istream& is, std::uint64_t max_len) {
  const auto len = get<std::uint64_t>(is);
  if (len > max_len) throw CheckpointError("checkpoint string length out of range");
  std::string s(len, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(len))) {
    throw CheckpointError("checkpoint truncated");
  }
  return s;
}

struct Parsed {
  std::uint64_t hash = 0;
  ModelConfig config;
  std::vector<std::pair<std::string, NdArray>> tensors;
};

Parsed parse(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Parsed out;
  out.hash = get<std::uint64_t>(is);
  const std::string text = get_string(is, 1 << 20);
  out.config = ModelConfig::from_json(Json::parse(text));
  if (out.config.hash() != out.hash) {
    throw CheckpointError("checkpoint config hash does not match its embedded config");
  }
  const auto count = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(is, kMaxName);
    const auto rank = get<std::uint64_t>(is);
    if (rank > 8) throw CheckpointError("tensor rank out of range for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is);
    NdArray value(shape);
    if (!is.read(reinterpret_cast<char*>(value.ptr()),
                 static_cast<std::streamsize>(value.size() * sizeof(double)))) {
      throw CheckpointError("checkpoint truncated in tensor " + name);
    }
    out.tensors.emplace_back(std::move(name), std::move(value));
  }
  return out;
}

void assign(NoiseModel& model, const Parsed& parsed) {
  ParameterStore& store = model.params();
  if (parsed.tensors.size() != store.names().size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(parsed.tensors.size()) +
                          " tensors, model has " + std::to_string(store.names().size()));
  }
  for (const auto& [name, value] : parsed.tensors) {
    if (!store.contains(name)) throw CheckpointError("unexpected tensor " + name);
    NdArray& dst = store.get(name);
    if (dst.shape() != value.shape()) {
      throw CheckpointError("shape mismatch for " + name + ": " + shape_str(value.shape()) +
                            " vs " + shape_str(dst.shape()));
    }
    dst = value;
  }
}

}  // namespace

void save_checkpoint(const NoiseModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot write checkpoint " + path.string());
  os.write(kMagic, 8);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, model.config().hash());
  const std::string text = model.config().to_json().dump();
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  const ParameterStore& store = model.params();
  put<std::uint64_t>(os, store.names().size());
  for (const std::string& name : store.names()) {
    const NdArray& v = store.get(name);
    put<std::uint64_t>(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(os, v.rank());
    for (std::size_t d : v.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(v.ptr()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("failed writing checkpoint " + path.string());
}

NoiseModel load_checkpoint(const std::filesystem::path& path) {
  const Parsed parsed = parse(path);
  NoiseModel model(parsed.config, 0);
  assign(model, parsed);
  return model;
}

void load_parameters(NoiseModel& model, const std::filesystem::path& path) {
  const Parsed parsed = parse(path);
  if (parsed.hash != model.config().hash()) {
    throw CheckpointError("checkpoint config hash differs from the model configuration");
  }
  assign(model, parsed);
}

}  // namespace ssmdiff::model
