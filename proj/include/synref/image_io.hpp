#pragma once

#include <string>

#include "synref/tensor.hpp"

namespace synref {

/// 8-bit PNG in, single-image Tensor [1, h, w, 3] in [0,1] out. Grayscale
/// and palette files are expanded to RGB.
Tensor read_png(const std::string& path);

/// Clamps to [0,1], quantizes to 8-bit RGB. Encoding settings are fixed, so
/// identical tensors produce identical files.
void write_png(const Tensor& img, const std::string& path);

/// Single-channel PNG of raw class indices.
LabelMap read_label_png(const std::string& path, int num_classes);
void write_label_png(const LabelMap& m, const std::string& path);

}  // namespace synref
