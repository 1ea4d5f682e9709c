#pragma once

#include "flashscan/core.hpp"

#include <string>

namespace flashscan {

// Minimal PNG support for the formats this project writes: 8/16-bit grayscale,
// 8/16-bit RGB, and 8-bit palette images, non-interlaced, zlib-compressed.

struct PngImage {
    int width = 0, height = 0, channels = 0;  // channels: 1 or 3
    int bit_depth = 8;                        // 8 or 16
    std::vector<uint16_t> pixels;             // row-major, channel-interleaved
    bool palette = false;                     // true when loaded from a palette image
};

void write_png_gray8(const std::string& path, int w, int h, const std::vector<uint8_t>& pixels);
void write_png_gray16(const std::string& path, int w, int h, const std::vector<uint16_t>& pixels);
void write_png_rgb8(const std::string& path, int w, int h, const std::vector<uint8_t>& pixels);
void write_png_rgb16(const std::string& path, int w, int h, const std::vector<uint16_t>& pixels);
// Palette image: one index per pixel plus an RGB palette (3 bytes per entry).
void write_png_palette(const std::string& path, int w, int h, const std::vector<uint8_t>& indices,
                       const std::vector<uint8_t>& palette_rgb);

PngImage read_png(const std::string& path);

// Raw float dump: magic "HIRF", width/height/channels u32 little-endian, then
// float32 row-major channel-interleaved.
void write_raw_image(const std::string& path, const Image& image);
Image read_raw_image(const std::string& path);

// Linear image to 16-bit PNG with gamma 1/2.2 encoding (values clamp to [0,1]).
void write_png_srgb16(const std::string& path, const Image& linear_rgb);

bool file_exists(const std::string& path);

}  // namespace flashscan
