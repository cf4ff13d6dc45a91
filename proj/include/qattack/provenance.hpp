#pragma once

#include <cstdint>
#include <string>

namespace qattack {

// Stamped into the header of every file the command-line tools write.
struct Provenance {
  std::string config_hash;  // 16 hex digits
  uint64_t seed = 0;
};

}  // namespace qattack
