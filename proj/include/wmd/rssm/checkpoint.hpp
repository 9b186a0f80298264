// SPDX-License-Identifier: Apache-2.0
#pragma once

// Portable text checkpoint. Layout:
//
//   WMDCKPT 1
//   meta <key> <value to end of line>
//   array <name> <rows> <cols>
//   <rows lines of cols hexfloat values>
//   end
//
// Values are written with %a so a save/load round trip is bit-exact on any
// IEEE-754 host regardless of byte order.

#include "wmd/core/parameters.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace wmd {

struct Checkpoint {
  std::map<std::string, std::string> meta;
  ParameterSet arrays;
};

/// Throws IoError when the file cannot be written.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws IoError on a missing file, a version mismatch or a malformed body.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wmd
