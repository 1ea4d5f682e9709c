#include "flashscan/image_io.hpp"

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

namespace flashscan {

namespace {

void append_u32_be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t read_u32_be(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    append_u32_be(out, uint32_t(data.size()));
    size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = uint32_t(::crc32(0, out.data() + crc_start, uInt(out.size() - crc_start)));
    append_u32_be(out, crc);
}

std::vector<uint8_t> zlib_compress(const std::vector<uint8_t>& raw) {
    uLongf bound = ::compressBound(uLong(raw.size()));
    std::vector<uint8_t> out(bound);
    if (::compress2(out.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw ConfigError("zlib compression failed");
    out.resize(bound);
    return out;
}

std::vector<uint8_t> zlib_decompress(const uint8_t* data, size_t size, size_t expected) {
    std::vector<uint8_t> out(expected);
    uLongf len = uLongf(expected);
    int rc = ::uncompress(out.data(), &len, data, uLong(size));
    if (rc != Z_OK || len != expected) throw ConfigError("zlib decompression failed");
    return out;
}

// color_type: 0 gray, 2 rgb, 3 palette.
void write_png(const std::string& path, int w, int h, int color_type, int bit_depth,
               const std::vector<uint8_t>& scanline_bytes, const std::vector<uint8_t>* palette) {
    int channels = color_type == 2 ? 3 : 1;
    size_t row_bytes = size_t(w) * channels * (bit_depth / 8);
    if (scanline_bytes.size() != row_bytes * size_t(h)) throw InvariantError("write_png: pixel buffer size mismatch");

    std::vector<uint8_t> raw;
    raw.reserve((row_bytes + 1) * size_t(h));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), scanline_bytes.begin() + size_t(y) * row_bytes,
                   scanline_bytes.begin() + size_t(y + 1) * row_bytes);
    }

    std::vector<uint8_t> png = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<uint8_t> ihdr;
    append_u32_be(ihdr, uint32_t(w));
    append_u32_be(ihdr, uint32_t(h));
    ihdr.push_back(uint8_t(bit_depth));
    ihdr.push_back(uint8_t(color_type));
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    append_chunk(png, "IHDR", ihdr);
    if (palette) append_chunk(png, "PLTE", *palette);
    append_chunk(png, "IDAT", zlib_compress(raw));
    append_chunk(png, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(png.data()), std::streamsize(png.size()));
}

std::vector<uint8_t> to_bytes_8(const std::vector<uint8_t>& v) { return v; }

std::vector<uint8_t> to_bytes_16(const std::vector<uint16_t>& v) {
    std::vector<uint8_t> out(v.size() * 2);
    for (size_t i = 0; i < v.size(); ++i) {
        out[i * 2] = uint8_t(v[i] >> 8);  // PNG stores 16-bit samples big-endian
        out[i * 2 + 1] = uint8_t(v[i]);
    }
    return out;
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png_gray8(const std::string& path, int w, int h, const std::vector<uint8_t>& pixels) {
    write_png(path, w, h, 0, 8, to_bytes_8(pixels), nullptr);
}

void write_png_gray16(const std::string& path, int w, int h, const std::vector<uint16_t>& pixels) {
    write_png(path, w, h, 0, 16, to_bytes_16(pixels), nullptr);
}

void write_png_rgb8(const std::string& path, int w, int h, const std::vector<uint8_t>& pixels) {
    write_png(path, w, h, 2, 8, to_bytes_8(pixels), nullptr);
}

void write_png_rgb16(const std::string& path, int w, int h, const std::vector<uint16_t>& pixels) {
    write_png(path, w, h, 2, 16, to_bytes_16(pixels), nullptr);
}

void write_png_palette(const std::string& path, int w, int h, const std::vector<uint8_t>& indices,
                       const std::vector<uint8_t>& palette_rgb) {
    write_png(path, w, h, 3, 8, indices, &palette_rgb);
}

PngImage read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open PNG: " + path);
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0) throw ConfigError("not a PNG file: " + path);

    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    std::vector<uint8_t> plte;
    size_t pos = 8;
    while (pos + 8 <= file.size()) {
        uint32_t len = read_u32_be(&file[pos]);
        std::string type(reinterpret_cast<const char*>(&file[pos + 4]), 4);
        if (pos + 12 + len > file.size()) throw ConfigError("truncated PNG: " + path);
        const uint8_t* data = &file[pos + 8];
        if (type == "IHDR") {
            w = int(read_u32_be(data));
            h = int(read_u32_be(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            if (data[12] != 0) throw ConfigError("interlaced PNG unsupported: " + path);
            if (color_type != 0 && color_type != 2 && color_type != 3)
                throw ConfigError("unsupported PNG color type in " + path);
            if (bit_depth != 8 && bit_depth != 16) throw ConfigError("unsupported PNG bit depth in " + path);
        } else if (type == "PLTE") {
            plte.assign(data, data + len);
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0) throw ConfigError("bad PNG header: " + path);

    int channels = color_type == 2 ? 3 : 1;
    int bytes_per_sample = bit_depth / 8;
    size_t row_bytes = size_t(w) * channels * bytes_per_sample;
    std::vector<uint8_t> raw = zlib_decompress(idat.data(), idat.size(), (row_bytes + 1) * size_t(h));

    // Undo per-row filters.
    std::vector<uint8_t> prev(row_bytes, 0);
    std::vector<uint8_t> cur(row_bytes);
    std::vector<uint8_t> out(row_bytes * size_t(h));
    int bpp = channels * bytes_per_sample;
    for (int y = 0; y < h; ++y) {
        uint8_t filter = raw[size_t(y) * (row_bytes + 1)];
        const uint8_t* src = &raw[size_t(y) * (row_bytes + 1) + 1];
        for (size_t i = 0; i < row_bytes; ++i) {
            int a = i >= size_t(bpp) ? cur[i - bpp] : 0;
            int b = prev[i];
            int c = i >= size_t(bpp) ? prev[i - bpp] : 0;
            int x = src[i];
            switch (filter) {
                case 0: cur[i] = uint8_t(x); break;
                case 1: cur[i] = uint8_t(x + a); break;
                case 2: cur[i] = uint8_t(x + b); break;
                case 3: cur[i] = uint8_t(x + (a + b) / 2); break;
                case 4: cur[i] = uint8_t(x + paeth(a, b, c)); break;
                default: throw ConfigError("unsupported PNG filter in " + path);
            }
        }
        std::memcpy(&out[size_t(y) * row_bytes], cur.data(), row_bytes);
        std::swap(prev, cur);
    }

    PngImage img;
    img.width = w;
    img.height = h;
    img.channels = channels;
    img.bit_depth = bit_depth;
    img.palette = color_type == 3;
    img.pixels.resize(size_t(w) * h * channels);
    if (bit_depth == 8) {
        for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = out[i];
    } else {
        for (size_t i = 0; i < img.pixels.size(); ++i)
            img.pixels[i] = uint16_t((uint16_t(out[i * 2]) << 8) | out[i * 2 + 1]);
    }
    (void)plte;  // palette colors are not needed: indices are the labels
    return img;
}

void write_raw_image(const std::string& path, const Image& image) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open for writing: " + path);
    const char magic[4] = {'H', 'I', 'R', 'F'};
    uint32_t dims[3] = {uint32_t(image.width), uint32_t(image.height), uint32_t(image.channels)};
    f.write(magic, 4);
    f.write(reinterpret_cast<const char*>(dims), 12);
    f.write(reinterpret_cast<const char*>(image.data.data()), std::streamsize(image.data.size() * sizeof(float)));
}

Image read_raw_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open raw image: " + path);
    char magic[4];
    uint32_t dims[3];
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(dims), 12);
    if (!f || std::memcmp(magic, "HIRF", 4) != 0) throw ConfigError("not a HIRF raw image: " + path);
    int w = int(dims[0]), h = int(dims[1]), c = int(dims[2]);
    Image img(w, h, c);
    f.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size() * sizeof(float)));
    if (!f) throw ConfigError("truncated raw image: " + path);
    return img;
}

void write_png_srgb16(const std::string& path, const Image& linear_rgb) {
    if (linear_rgb.channels != 3) throw InvariantError("write_png_srgb16 expects 3 channels");
    std::vector<uint16_t> px(size_t(linear_rgb.width) * linear_rgb.height * 3);
    for (size_t i = 0; i < px.size(); ++i)
        px[i] = uint16_t(std::lround(srgb_encode(linear_rgb.data[i]) * 65535.0));
    write_png_rgb16(path, linear_rgb.width, linear_rgb.height, px);
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

}  // namespace flashscan
