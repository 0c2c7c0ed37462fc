#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "stagecf/score_network.hpp"

namespace stagecf {

/// Raised when a checkpoint was produced under a different configuration.
class ConfigMismatch : public std::runtime_error {
 public:
  ConfigMismatch(std::uint64_t expected, std::uint64_t found);
  std::uint64_t expected() const noexcept { return expected_; }
  std::uint64_t found() const noexcept { return found_; }

 private:
  std::uint64_t expected_;
  std::uint64_t found_;
};

struct Checkpoint {
  ScoreNetParams params;
  std::uint64_t config_hash = 0;
  std::string config_json;
};

/// 64-bit FNV-1a over a byte string; used for config and file hashes.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Binary layout (little-endian host order):
///   magic "STAGECF1", u32 version, u64 config hash, u64 len + config JSON,
///   shape (n_items, time_dim, K, hidden count + widths), f64 dropout,
///   u64 tensor count, then per tensor u64 rows, u64 cols, column-major f64,
///   the same for both Adam moment lists, and finally u64 Adam step.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws ConfigMismatch when expected_hash differs from the stored hash and
/// std::runtime_error on truncated or foreign files.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint64_t expected_hash);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace stagecf
