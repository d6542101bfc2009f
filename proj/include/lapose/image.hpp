#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace lapose {

// 8-bit RGB image, row-major, origin top-left.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> rgb; // width * height * 3

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(size_t(w) * h * 3, 0) {}

    uint8_t* pixel(int x, int y) { return rgb.data() + 3 * (size_t(y) * width + x); }
    const uint8_t* pixel(int x, int y) const { return rgb.data() + 3 * (size_t(y) * width + x); }
};

// Minimal PNG writer/reader for 8-bit RGB. The writer emits stored (type 0)
// deflate blocks, which keeps the output byte-reproducible; the reader accepts
// only files produced by this writer.
std::vector<uint8_t> encode_png(const Image& img);
Image decode_png(const uint8_t* data, size_t len);

void write_png(const std::filesystem::path& path, const Image& img);
Image read_png(const std::filesystem::path& path);

// Flattens the image into non-overlapping patch vectors scaled to [0, 1].
// Patches are row-major over the patch grid; within a patch the layout is
// (y, x, channel). Throws if the image dims are not divisible by patch_size.
std::vector<std::vector<float>> extract_patches(const Image& img, int patch_size);

} // namespace lapose
