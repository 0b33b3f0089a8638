#pragma once

#include "teashift/types.hpp"

#include <filesystem>

namespace teashift {

// Directory layout:
//   <path>/manifest.json
//   <path>/epochs/<subject_id>.f32   row-major [epoch][channel][sample], float32 LE
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);

// Throws MissingFileError, ShapeMismatchError, NonFiniteError or ValidationError.
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace teashift
