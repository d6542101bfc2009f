#include "lapose/codebook.hpp"

#include "lapose/common.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cstring>
#include <set>
#include <stdexcept>

namespace lapose {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Squared distances of every patch to every center via the expansion
// ||x-c||^2 = ||x||^2 - 2 x.c + ||c||^2.
void assign_nearest(const RowMat& x, const Eigen::VectorXf& x_sq, const RowMat& c,
                    std::vector<int>& idx, std::vector<float>& dist) {
    Eigen::VectorXf c_sq = c.rowwise().squaredNorm();
    RowMat dots = x * c.transpose(); // [n, k]
    int n = int(x.rows()), k = int(c.rows());
    for (int i = 0; i < n; ++i) {
        int best = 0;
        float best_d = x_sq(i) - 2.0f * dots(i, 0) + c_sq(0);
        for (int j = 1; j < k; ++j) {
            float d = x_sq(i) - 2.0f * dots(i, j) + c_sq(j);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        idx[size_t(i)] = best;
        dist[size_t(i)] = std::max(0.0f, best_d);
    }
}

} // namespace

Codebook Codebook::fit(const std::vector<std::vector<float>>& patches, uint32_t k, uint64_t seed,
                       std::vector<double>* distortion_log) {
    if (patches.empty() || k == 0) throw std::invalid_argument("codebook: empty input");
    size_t n = patches.size();
    uint32_t dim = uint32_t(patches[0].size());

    // The fit is only well-posed with at least k distinct patches.
    std::set<std::vector<float>> distinct;
    for (const auto& p : patches) {
        distinct.insert(p);
        if (distinct.size() >= k) break;
    }
    if (distinct.size() < k)
        throw std::invalid_argument("codebook: fewer distinct patches than codes");

    RowMat x(n, dim);
    for (size_t i = 0; i < n; ++i)
        std::memcpy(x.row(Eigen::Index(i)).data(), patches[i].data(), dim * sizeof(float));
    Eigen::VectorXf x_sq = x.rowwise().squaredNorm();

    Rng rng(seed);
    RowMat centers(k, dim);
    std::vector<float> nearest_d(n, 0.0f);

    // k-means++ seeding
    centers.row(0) = x.row(Eigen::Index(rng.below(n)));
    for (size_t i = 0; i < n; ++i)
        nearest_d[i] = (x.row(Eigen::Index(i)) - centers.row(0)).squaredNorm();
    for (uint32_t j = 1; j < k; ++j) {
        double total = 0.0;
        for (float d : nearest_d) total += d;
        size_t pick = 0;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double acc = 0.0;
            for (size_t i = 0; i < n; ++i) {
                acc += nearest_d[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(n);
        }
        centers.row(j) = x.row(Eigen::Index(pick));
        for (size_t i = 0; i < n; ++i) {
            float d = (x.row(Eigen::Index(i)) - centers.row(j)).squaredNorm();
            nearest_d[i] = std::min(nearest_d[i], d);
        }
    }

    std::vector<int> assign(n);
    std::vector<float> dist(n);
    for (int iter = 0; iter < kLloydIterations; ++iter) {
        assign_nearest(x, x_sq, centers, assign, dist);
        if (distortion_log) {
            double total = 0.0;
            for (float d : dist) total += d;
            distortion_log->push_back(total / double(n));
        }

        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, dim);
        std::vector<int64_t> counts(k, 0);
        for (size_t i = 0; i < n; ++i) {
            sums.row(assign[i]) += x.row(Eigen::Index(i)).cast<double>();
            counts[size_t(assign[i])]++;
        }

        // Re-seed empty clusters from the points farthest from their centers.
        std::vector<size_t> farthest(n);
        for (size_t i = 0; i < n; ++i) farthest[i] = i;
        std::sort(farthest.begin(), farthest.end(),
                  [&](size_t a, size_t b) { return dist[a] > dist[b]; });
        size_t next_far = 0;
        for (uint32_t j = 0; j < k; ++j) {
            if (counts[j] > 0) {
                centers.row(j) = (sums.row(j) / double(counts[j])).cast<float>();
            } else if (next_far < n) {
                centers.row(j) = x.row(Eigen::Index(farthest[next_far++]));
            }
        }
    }

    Codebook cb;
    cb.k_ = k;
    cb.dim_ = dim;
    cb.centers_.assign(centers.data(), centers.data() + size_t(k) * dim);
    return cb;
}

std::vector<int> Codebook::encode(const std::vector<std::vector<float>>& patches) const {
    size_t n = patches.size();
    RowMat x(n, dim_);
    for (size_t i = 0; i < n; ++i) {
        if (patches[i].size() != dim_) throw std::invalid_argument("codebook: patch dim mismatch");
        std::memcpy(x.row(Eigen::Index(i)).data(), patches[i].data(), dim_ * sizeof(float));
    }
    Eigen::VectorXf x_sq = x.rowwise().squaredNorm();
    Eigen::Map<const RowMat> c(centers_.data(), k_, dim_);
    std::vector<int> idx(n);
    std::vector<float> dist(n);
    RowMat cm = c;
    assign_nearest(x, x_sq, cm, idx, dist);
    return idx;
}

std::vector<int> Codebook::encode_frame(const Image& frame, int patch_size) const {
    return encode(extract_patches(frame, patch_size));
}

double Codebook::quantization_distortion(const std::vector<std::vector<float>>& patches) const {
    auto idx = encode(patches);
    double total = 0.0;
    for (size_t i = 0; i < patches.size(); ++i) {
        const float* c = center(uint32_t(idx[i]));
        double d = 0.0;
        for (uint32_t j = 0; j < dim_; ++j) {
            double diff = double(patches[i][j]) - double(c[j]);
            d += diff * diff;
        }
        total += d;
    }
    return total / double(patches.size());
}

double Codebook::min_center_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (uint32_t a = 0; a < k_; ++a)
        for (uint32_t b = a + 1; b < k_; ++b) {
            double d = 0.0;
            for (uint32_t j = 0; j < dim_; ++j) {
                double diff = double(center(a)[j]) - double(center(b)[j]);
                d += diff * diff;
            }
            best = std::min(best, std::sqrt(d));
        }
    return best;
}

void Codebook::save(const std::filesystem::path& path) const {
    std::vector<uint8_t> buf;
    buf.push_back('L');
    buf.push_back('A');
    buf.push_back('C');
    buf.push_back('B');
    append_le<uint32_t>(buf, 1); // version
    append_le<uint32_t>(buf, k_);
    append_le<uint32_t>(buf, dim_);
    for (float v : centers_) append_le<float>(buf, v);
    auto hash = sha256(buf.data(), buf.size());
    buf.insert(buf.end(), hash.begin(), hash.end());
    write_file(path, buf.data(), buf.size());
}

Codebook Codebook::load(const std::filesystem::path& path) {
    auto buf = read_file(path);
    if (buf.size() < 16 + 32 || std::memcmp(buf.data(), "LACB", 4) != 0)
        throw std::runtime_error("codebook: bad file: " + path.string());
    uint32_t version = read_le<uint32_t>(buf.data() + 4);
    if (version != 1) throw std::runtime_error("codebook: unsupported version");
    Codebook cb;
    cb.k_ = read_le<uint32_t>(buf.data() + 8);
    cb.dim_ = read_le<uint32_t>(buf.data() + 12);
    size_t payload = 16 + size_t(cb.k_) * cb.dim_ * sizeof(float);
    if (buf.size() != payload + 32) throw std::runtime_error("codebook: truncated file");
    auto hash = sha256(buf.data(), payload);
    if (std::memcmp(hash.data(), buf.data() + payload, 32) != 0)
        throw std::runtime_error("codebook: content hash mismatch");
    cb.centers_.resize(size_t(cb.k_) * cb.dim_);
    std::memcpy(cb.centers_.data(), buf.data() + 16, cb.centers_.size() * sizeof(float));
    return cb;
}

std::string Codebook::content_hash() const {
    std::vector<uint8_t> buf;
    append_le<uint32_t>(buf, k_);
    append_le<uint32_t>(buf, dim_);
    for (float v : centers_) append_le<float>(buf, v);
    return hex_string(sha256(buf.data(), buf.size()));
}

} // namespace lapose
