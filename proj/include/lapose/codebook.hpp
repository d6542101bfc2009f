#pragma once

#include "lapose/image.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lapose {

// Frozen k-means codebook over flattened RGB patches: the discrete prediction
// target for forward dynamics. Deterministic given (patches, k, seed); fixed
// 50 Lloyd iterations with k-means++ seeding, empty clusters re-seeded from
// the farthest points, nearest-code ties broken by the lowest index.
class Codebook {
public:
    static constexpr int kLloydIterations = 50;

    static Codebook fit(const std::vector<std::vector<float>>& patches, uint32_t k, uint64_t seed,
                        std::vector<double>* distortion_log = nullptr);

    uint32_t size() const { return k_; }
    uint32_t dim() const { return dim_; }
    const std::vector<float>& centers() const { return centers_; }
    const float* center(uint32_t i) const { return centers_.data() + size_t(i) * dim_; }

    // Nearest center per patch vector (L2, ties to the lowest index).
    std::vector<int> encode(const std::vector<std::vector<float>>& patches) const;
    // Code grid of a frame, row-major over the patch grid.
    std::vector<int> encode_frame(const Image& frame, int patch_size) const;

    double quantization_distortion(const std::vector<std::vector<float>>& patches) const;
    double min_center_distance() const;

    // Binary record: magic "LACB", version u32, K u32, dim u32, K*dim
    // little-endian f32, then the 32-byte SHA-256 of all preceding bytes.
    void save(const std::filesystem::path& path) const;
    static Codebook load(const std::filesystem::path& path);

    std::string content_hash() const;

private:
    uint32_t k_ = 0;
    uint32_t dim_ = 0;
    std::vector<float> centers_;
};

} // namespace lapose
