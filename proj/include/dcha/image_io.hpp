#pragma once

#include <string>

#include "dcha/common.hpp"

namespace dcha {

// 8-bit binary portable graymap (P5). Values are clamped to [0,1] and
// quantized to 0..255 on write.
void write_pgm(const std::string& path, const Image& img);
Image read_pgm(const std::string& path);

// Binary portable pixmap (P6); r/g/b are [0,1] planes of equal size.
void write_ppm(const std::string& path, const Image& r, const Image& g, const Image& b);

}  // namespace dcha
