#pragma once

#include <filesystem>

#include "davsp/tensor.hpp"

namespace davsp {

// 8-bit RGB PNG IO. Values are quantized to 1/255 steps on write, so a
// write/read round trip is exact for images already on that grid.
void write_png(const std::filesystem::path& path, const ImageTensor& image);
ImageTensor read_png(const std::filesystem::path& path);

// Snap pixel values to the 8-bit grid k/255.
ImageTensor quantize_8bit(const ImageTensor& image);

}  // namespace davsp
