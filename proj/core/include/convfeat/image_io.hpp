#pragma once

#include <filesystem>

#include "convfeat/tensor.hpp"

namespace convfeat {

// Readers return a rank-2 grayscale tensor with values in [0,1].
// Color PNGs are converted to grayscale; 16-bit depth is reduced to 8.
// All readers throw UnreadableImage on parse failure.
Tensor read_pgm(const std::filesystem::path& path);
Tensor read_png(const std::filesystem::path& path);
Tensor read_image(const std::filesystem::path& path);  // dispatch on extension

// Binary 8-bit PGM (P5). Values are clamped to [0,1] and quantized.
void write_pgm(const std::filesystem::path& path, const Tensor& img);

}  // namespace convfeat
