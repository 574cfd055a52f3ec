#pragma once

#include "json.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace sizemorph::models {

inline constexpr uint32_t kCheckpointVersion = 1;

/// FNV-1a over the canonical (key-sorted) JSON dump.
uint64_t config_hash(const nlohmann::json& config);
std::string hash_hex(uint64_t h);

/// In-memory form of a checkpoint file.
///
/// On disk: 8-byte magic, u32 version, u64 header length, JSON header, then
/// every array as little-endian float32 in header order. The header carries
/// the config, its hash, the step, RNG state text, and a payload checksum.
struct Checkpoint {
    nlohmann::json config = nlohmann::json::object();
    int64_t step = 0;
    std::string rng_state;
    std::map<std::string, torch::Tensor> arrays;

    /// Parameters and buffers under `prefix/`.
    void put_module(const std::string& prefix, const torch::nn::Module& module);
    /// Throws LoadError on a missing array or shape mismatch.
    void get_module(const std::string& prefix, torch::nn::Module& module) const;

    /// Adam moments and step counts, keyed by the parameter names of `module`.
    void put_adam(const std::string& prefix, torch::optim::Adam& optimizer, const torch::nn::Module& module);
    void get_adam(const std::string& prefix, torch::optim::Adam& optimizer, const torch::nn::Module& module) const;

    bool has_prefix(const std::string& prefix) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws LoadError on a bad magic, unsupported version, truncation, or
/// checksum failure.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// As above, and refuses a file whose config hash differs from `expected`.
Checkpoint load_checkpoint(const std::filesystem::path& path, const nlohmann::json& expected);

/// FNV-1a over the raw bytes of every parameter, in registration order.
uint64_t parameter_hash(const torch::nn::Module& module);

}  // namespace sizemorph::models
