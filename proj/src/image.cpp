#include "lapose/image.hpp"

#include "lapose/common.hpp"

#include <cstring>
#include <stdexcept>

namespace lapose {

namespace {

uint32_t crc32_table_entry(uint32_t n) {
    for (int k = 0; k < 8; ++k) n = (n & 1) ? 0xedb88320u ^ (n >> 1) : n >> 1;
    return n;
}

uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0) {
    static uint32_t table[256];
    static bool init = [] {
        for (uint32_t i = 0; i < 256; ++i) table[i] = crc32_table_entry(i);
        return true;
    }();
    (void)init;
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

uint32_t adler32(const uint8_t* data, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void append_be32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

uint32_t read_be32(const uint8_t* p) {
    return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& body) {
    append_be32(out, uint32_t(body.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), body.begin(), body.end());
    append_be32(out, crc32(out.data() + start, out.size() - start));
}

} // namespace

std::vector<uint8_t> encode_png(const Image& img) {
    if (img.width <= 0 || img.height <= 0 || img.rgb.size() != size_t(img.width) * img.height * 3)
        throw std::invalid_argument("encode_png: malformed image");

    // Scanlines with a leading filter byte 0 (no filtering).
    std::vector<uint8_t> raw;
    raw.reserve(size_t(img.height) * (1 + size_t(img.width) * 3));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), img.pixel(0, y), img.pixel(0, y) + size_t(img.width) * 3);
    }

    // zlib stream: header, stored deflate blocks, adler32.
    std::vector<uint8_t> z;
    z.push_back(0x78);
    z.push_back(0x01);
    size_t off = 0;
    while (off < raw.size()) {
        size_t n = std::min<size_t>(raw.size() - off, 65535);
        bool final = off + n == raw.size();
        z.push_back(final ? 1 : 0);
        z.push_back(uint8_t(n & 0xff));
        z.push_back(uint8_t(n >> 8));
        z.push_back(uint8_t(~n & 0xff));
        z.push_back(uint8_t((~n >> 8) & 0xff));
        z.insert(z.end(), raw.begin() + off, raw.begin() + off + n);
        off += n;
    }
    append_be32(z, adler32(raw.data(), raw.size()));

    std::vector<uint8_t> ihdr;
    append_be32(ihdr, uint32_t(img.width));
    append_be32(ihdr, uint32_t(img.height));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(2); // color type: truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", z);
    append_chunk(out, "IEND", {});
    return out;
}

Image decode_png(const uint8_t* data, size_t len) {
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (len < 8 || std::memcmp(data, sig, 8) != 0) throw std::runtime_error("decode_png: bad signature");

    size_t pos = 8;
    int width = 0, height = 0;
    std::vector<uint8_t> idat;
    while (pos + 12 <= len) {
        uint32_t n = read_be32(data + pos);
        const char* type = reinterpret_cast<const char*>(data + pos + 4);
        const uint8_t* body = data + pos + 8;
        if (pos + 12 + n > len) throw std::runtime_error("decode_png: truncated chunk");
        if (std::memcmp(type, "IHDR", 4) == 0) {
            width = int(read_be32(body));
            height = int(read_be32(body + 4));
            if (body[8] != 8 || body[9] != 2 || body[12] != 0)
                throw std::runtime_error("decode_png: only non-interlaced RGB8 is supported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), body, body + n);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + n;
    }
    if (width <= 0 || height <= 0 || idat.size() < 6) throw std::runtime_error("decode_png: missing data");

    // Stored-block-only inflate.
    std::vector<uint8_t> raw;
    size_t zp = 2; // skip zlib header
    for (;;) {
        if (zp >= idat.size()) throw std::runtime_error("decode_png: truncated deflate stream");
        uint8_t hdr = idat[zp++];
        if ((hdr >> 1) != 0) throw std::runtime_error("decode_png: compressed blocks unsupported");
        uint16_t n = uint16_t(idat[zp]) | (uint16_t(idat[zp + 1]) << 8);
        zp += 4; // LEN + NLEN
        raw.insert(raw.end(), idat.begin() + zp, idat.begin() + zp + n);
        zp += n;
        if (hdr & 1) break;
    }

    size_t stride = 1 + size_t(width) * 3;
    if (raw.size() != stride * size_t(height)) throw std::runtime_error("decode_png: size mismatch");

    Image img(width, height);
    for (int y = 0; y < height; ++y) {
        if (raw[stride * y] != 0) throw std::runtime_error("decode_png: only filter 0 is supported");
        std::memcpy(img.pixel(0, y), raw.data() + stride * y + 1, size_t(width) * 3);
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image& img) {
    auto bytes = encode_png(img);
    write_file(path, bytes.data(), bytes.size());
}

Image read_png(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    return decode_png(bytes.data(), bytes.size());
}

std::vector<std::vector<float>> extract_patches(const Image& img, int patch_size) {
    if (patch_size <= 0 || img.width % patch_size != 0 || img.height % patch_size != 0)
        throw std::invalid_argument("extract_patches: image dims not divisible by patch size");
    int gw = img.width / patch_size;
    int gh = img.height / patch_size;
    std::vector<std::vector<float>> patches;
    patches.reserve(size_t(gw) * gh);
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            std::vector<float> v;
            v.reserve(size_t(patch_size) * patch_size * 3);
            for (int y = 0; y < patch_size; ++y) {
                const uint8_t* row = img.pixel(px * patch_size, py * patch_size + y);
                for (int i = 0; i < patch_size * 3; ++i) v.push_back(float(row[i]) / 255.0f);
            }
            patches.push_back(std::move(v));
        }
    }
    return patches;
}

} // namespace lapose
