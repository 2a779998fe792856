#pragma once

#include <string>

#include "aesfa/tensor.hpp"

namespace aesfa {

// Decodes a PNG or JPEG (sniffed by magic bytes) into [1,3,H,W] floats in
// [0,1]. Grayscale expands to three channels; alpha is dropped. Throws
// IoError naming the path on any failure.
Tensor<float> load_image(const std::string& path);

// Writes an 8-bit RGB PNG; input is [1,3,H,W] or [3,H,W] in [0,1], values
// clamped then rounded. The encode is deterministic.
void save_png(const std::string& path, const Tensor<float>& image);

}  // namespace aesfa
