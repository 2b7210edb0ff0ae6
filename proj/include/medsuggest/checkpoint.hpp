#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <iosfwd>

#include "medsuggest/net.hpp"

namespace medsuggest {

/// Trained network plus the metadata needed to act with it.
struct Checkpoint {
  Params params;
  std::uint64_t step = 0;      // optimizer updates applied
  bool tests_enabled = true;   // false for the forced-q2 ablation

  friend bool operator==(const Checkpoint& a, const Checkpoint& b) {
    return a.params == b.params && a.step == b.step && a.tests_enabled == b.tests_enabled;
  }
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Versioned little-endian binary container: magic "MSCKPT01", format
/// version, flags, step, NetConfig, row-major parameter doubles (IEEE-754
/// bit patterns), FNV-1a checksum. Round-trips bit-exactly.
void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 16 hex digits identifying the serialized checkpoint.
std::string checkpoint_fingerprint(const Checkpoint& ckpt);

}  // namespace medsuggest
