#include "lapose/nn.hpp"

#include <limits>

namespace lapose {
namespace nn {

namespace {
constexpr float kNegInf = -std::numeric_limits<float>::infinity();
}

Tensor causal_mask(int n) {
    Tensor m(n, n, false);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) m.data()[size_t(r) * n + c] = c <= r ? 0.0f : kNegInf;
    return m;
}

Tensor query_memory_mask(int t, int tokens_per_frame) {
    // Memory layout: t*tokens_per_frame frame tokens then t-1 query tokens.
    int n = t - 1;
    int m = t * tokens_per_frame + n;
    Tensor mask(n, m, false);
    for (int i = 0; i < n; ++i) {
        float* row = mask.data().data() + size_t(i) * m;
        for (int f = 0; f < t; ++f) {
            float v = f <= i + 1 ? 0.0f : kNegInf;
            for (int s = 0; s < tokens_per_frame; ++s) row[f * tokens_per_frame + s] = v;
        }
        for (int j = 0; j < n; ++j) row[t * tokens_per_frame + j] = j <= i ? 0.0f : kNegInf;
    }
    return mask;
}

} // namespace nn
} // namespace lapose
