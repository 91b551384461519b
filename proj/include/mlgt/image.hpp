#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace mlgt {

/// 8-bit interleaved RGB raster, row-major.
struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(std::size_t w, std::size_t h, std::uint8_t fill = 255) : width(w), height(h), rgb(w * h * 3, fill) {}

    std::uint8_t* pixel(std::size_t x, std::size_t y) { return rgb.data() + (y * width + x) * 3; }
    const std::uint8_t* pixel(std::size_t x, std::size_t y) const { return rgb.data() + (y * width + x) * 3; }

    bool operator==(const Image&) const = default;
};

/// PNG or JPEG, detected by signature. Alpha is composited over white.
/// Throws InputError on anything undecodable.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& image);
void write_png(const std::filesystem::path& path, const Image& image);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Bilinear resampling with half-pixel centers, returned as planar float
/// [3][h][w] in 0..255. Same-size input is copied without resampling.
std::vector<float> resize_bilinear(const Image& image, std::size_t width, std::size_t height);

}  // namespace mlgt
