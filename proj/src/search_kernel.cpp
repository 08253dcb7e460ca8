#include "search_kernel.hpp"

#include <algorithm>
#include <cstring>

namespace sghc::detail {

namespace {

typedef double Vec __attribute__((vector_size(kLanes * sizeof(double))));

Vec load(const double* p) noexcept {
    Vec v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

}  // namespace

void scan_blocks(const double* tile, std::size_t d, std::size_t count, const double* packed, const double* norms,
                 std::size_t blocks, ScanState& state) {
    for (std::size_t b = 0; b < blocks; ++b) {
        const double* block = packed + b * d * kLanes;
        Vec acc[kTile];
        for (auto& a : acc) a = Vec{};
        for (std::size_t t = 0; t < d; ++t) {
            const Vec c = load(block + t * kLanes);
            const double* x = tile + t * kTile;
            for (std::size_t q = 0; q < kTile; ++q) acc[q] += x[q] * c;
        }
        const Vec n = load(norms + b * kLanes);
        for (std::size_t q = 0; q < count; ++q) {
            const Vec approx = state.qnorm[q] - 2.0 * acc[q] + n;
            double low = approx[0];
            for (std::size_t l = 1; l < kLanes; ++l) low = std::min(low, approx[l]);
            if (low > state.best[q] + state.margin[q]) continue;
            state.best[q] = std::min(state.best[q], low);
            const double limit = state.best[q] + state.margin[q];
            for (std::size_t l = 0; l < kLanes; ++l) {
                if (approx[l] <= limit) state.candidates[q].emplace_back(approx[l], static_cast<Index>(b * kLanes + l));
            }
        }
    }
}

}  // namespace sghc::detail
