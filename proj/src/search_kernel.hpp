#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sghc/core.hpp"

namespace sghc::detail {

inline constexpr std::size_t kLanes = 8;  // codes per packed block
#ifdef __AVX512F__
inline constexpr std::size_t kTile = 16;  // queries scored together against one block
#else
inline constexpr std::size_t kTile = 4;
#endif

struct ScanState {
    double qnorm[kTile];
    double margin[kTile];
    double best[kTile];
    std::vector<std::pair<double, Index>> candidates[kTile];
};

// tile holds d rows of kTile query values; packed holds blocks of d rows of
// kLanes code values. Pushes every code whose expanded distance is within the
// margin of the running minimum, in increasing index order.
void scan_blocks(const double* tile, std::size_t d, std::size_t count, const double* packed, const double* norms,
                 std::size_t blocks, ScanState& state);

}  // namespace sghc::detail
