#pragma once

#include <filesystem>

#include "refseg/synth.hpp"

namespace refseg {

/// On-disk dataset layout: manifest.json plus one directory per split
/// (labeled, unlabeled, validation, test). Images are (1,h,w) float32
/// tensors; multi-class labels are 8-bit PGMs holding class indices,
/// multi-label labels are (c,h,w) uint8 tensors.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace refseg
