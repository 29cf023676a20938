// Versioned binary persistence for parameter vectors ("HSAM" files) and full
// training checkpoints (parameters + optimizer state + iteration + config
// hash). All files carry a trailing CRC32.
#pragma once

#include <filesystem>
#include <string>

#include "hsam/nn.hpp"
#include "hsam/optim.hpp"

namespace hsam {

inline constexpr std::uint32_t kParamFormatVersion = 1;

void save_params(const ParamVector& pv, const std::filesystem::path& path);
ParamVector load_params(const std::filesystem::path& path);

struct TrainCheckpoint {
  ParamVector pv;
  AdamState adam;
  std::int64_t iteration = 0;
  std::uint32_t config_hash = 0;
  std::string rng_state;  // minibatch sampler state; empty for full-batch runs
};

void save_checkpoint(const TrainCheckpoint& ck, const std::filesystem::path& path);

// Throws on checksum failure or when the stored config hash differs from
// `expected_config_hash`.
TrainCheckpoint load_checkpoint(const std::filesystem::path& path, std::uint32_t expected_config_hash);

}  // namespace hsam
