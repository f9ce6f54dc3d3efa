// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>

#include "effdet/datasets.hpp"
#include "effdet/detector.hpp"

namespace effdet {

// Layout (little-endian):
//   "EFFDETCK" | u32 version | str config_record | u32 n_classes | str name * n
//   | u32 n_tensors | (str name | u32 rows | u32 cols | f32 data[rows*cols]) * n
// where str is u32 length + bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Detector<float> detector;
  ClassMap classes;
};

void save_checkpoint(const std::filesystem::path& file, const Detector<float>& detector, const ClassMap& classes);

/// Rebuilds the detector from the stored config and class count, then checks
/// every stored tensor against the rebuilt layout (names, order, shapes).
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace effdet
