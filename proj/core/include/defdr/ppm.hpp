#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defdr/image.hpp"

namespace defdr {

// Binary PPM (P6, maxval 255) is the only image format the toolkit speaks.
// Parse errors name the offending byte offset.
ImageTensor load_ppm(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> save_ppm(const ImageTensor& img);

ImageTensor load_ppm_file(const std::string& path);
void save_ppm_file(const ImageTensor& img, const std::string& path);

}  // namespace defdr
