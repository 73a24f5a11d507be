#pragma once

#include <map>
#include <string>

#include "dcha/common.hpp"

namespace dcha {

inline constexpr const char* kCheckpointMagic = "DCHA-CKPT-1";

// Flat binary key -> array map. Entries are written sorted by path so a
// checkpoint is byte-identical for identical parameter values.
void save_checkpoint(const std::string& path, const std::map<std::string, const Array*>& entries);

std::map<std::string, Array> load_checkpoint(const std::string& path);

}  // namespace dcha
