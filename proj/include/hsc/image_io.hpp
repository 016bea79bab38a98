#pragma once

#include <string>
#include <vector>

#include "hsc/tensor.hpp"

// Raster I/O: PNG (via libpng), PPM/PGM (binary and ASCII). Pixels are
// float in [0, 1], planar layout [channels, h, w].

namespace hsc {

struct Image {
    int channels = 0, height = 0, width = 0;
    std::vector<float> pixels; // planar, row-major

    float& at(int c, int y, int x) {
        return pixels[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return pixels[(static_cast<size_t>(c) * height + y) * width + x];
    }
};

// Throws format_error on undecodable input; supported by extension probing
// plus content magic.
Image read_image(const std::string& path);

// Extension picks the container: .png, .pgm (1 channel), .ppm (3 channels).
// Values are clamped to [0, 1] and quantized to 8 bits.
void write_image(const std::string& path, const Image& img);

// Bilinear resample to the target extent.
Image resize_bilinear(const Image& img, int out_h, int out_w);

// Grayscale <-> RGB conversion; no-op when counts already match.
Image convert_channels(const Image& img, int target_channels);

bool has_image_extension(const std::string& path);

} // namespace hsc
