#include "sghc/quantizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "sghc/parallel.hpp"
#include "search_kernel.hpp"

namespace sghc {

namespace {

using detail::kLanes;
using detail::kTile;
constexpr double kUnitRoundoff = 0x1.0p-53;

double direct_distance(std::span<const float> a, std::span<const float> b) noexcept {
    double acc = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        const double diff = static_cast<double>(a[t]) - static_cast<double>(b[t]);
        acc += diff * diff;
    }
    return acc;
}

void check_query(std::span<const float> v, std::size_t dim) {
    if (v.size() != dim) {
        fail(Errc::shape, "nearest_code: vector dim " + std::to_string(v.size()) + " vs codebook dim " +
                              std::to_string(dim));
    }
    if (!all_finite(v)) fail(Errc::domain, "nearest_code: non-finite input");
}

std::vector<float> normalized(std::span<const float> v) {
    double n2 = 0.0;
    for (float x : v) n2 += static_cast<double>(x) * x;
    std::vector<float> out(v.begin(), v.end());
    if (n2 > 0.0) {
        const double inv = 1.0 / std::sqrt(n2);
        for (auto& x : out) x = static_cast<float>(x * inv);
    }
    return out;
}

}  // namespace

Nearest nearest_code(std::span<const float> v, const Matrix& codes) {
    if (codes.rows() == 0) fail(Errc::shape, "nearest_code: empty codebook");
    check_query(v, codes.cols());
    Nearest best{0, direct_distance(v, codes.row(0))};
    for (std::size_t r = 1; r < codes.rows(); ++r) {
        const double d = direct_distance(v, codes.row(r));
        if (d < best.distance) best = {static_cast<Index>(r), d};
    }
    return best;
}

CodeSearch::CodeSearch(const Matrix& codes, bool l2_normalize) : normalize_(l2_normalize) {
    if (codes.rows() == 0 || codes.cols() == 0) fail(Errc::shape, "code search: empty codebook");
    if (!all_finite(codes.values())) fail(Errc::domain, "code search: non-finite code vector");
    if (normalize_) {
        for (std::size_t r = 0; r < codes.rows(); ++r) codes_.append_row(normalized(codes.row(r)));
    } else {
        codes_ = codes;
    }
    const std::size_t n = codes_.rows();
    const std::size_t d = codes_.cols();
    const std::size_t blocks = (n + kLanes - 1) / kLanes;
    packed_.assign(blocks * d * kLanes, 0.0);
    norms_.assign(blocks * kLanes, std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < n; ++r) {
        const auto row = codes_.row(r);
        double* block = packed_.data() + (r / kLanes) * d * kLanes;
        double norm = 0.0;
        for (std::size_t t = 0; t < d; ++t) {
            const double x = row[t];
            block[t * kLanes + r % kLanes] = x;
            norm += x * x;
        }
        norms_[r] = norm;
        max_norm_ = std::max(max_norm_, norm);
    }
}

Nearest CodeSearch::nearest(std::span<const float> v) const {
    Nearest out{};
    nearest_batch(v, std::span<Nearest>(&out, 1));
    return out;
}

void CodeSearch::nearest_batch(std::span<const float> queries, std::span<Nearest> out) const {
    const std::size_t d = dim();
    if (queries.size() != out.size() * d) {
        fail(Errc::shape, "nearest_batch: " + std::to_string(queries.size()) + " floats for " +
                              std::to_string(out.size()) + " queries of dim " + std::to_string(d));
    }
    const std::size_t blocks = norms_.size() / kLanes;
    std::vector<double> tile(kTile * d);
    detail::ScanState state;
    std::array<std::vector<float>, kTile> query_copy;

    for (std::size_t start = 0; start < out.size(); start += kTile) {
        const std::size_t count = std::min(kTile, out.size() - start);
        std::fill(tile.begin(), tile.end(), 0.0);
        for (std::size_t q = 0; q < kTile; ++q) {
            state.qnorm[q] = 0.0;
            state.margin[q] = 0.0;
            state.best[q] = std::numeric_limits<double>::infinity();
            state.candidates[q].clear();
            if (q >= count) continue;
            auto v = queries.subspan((start + q) * d, d);
            check_query(v, d);
            if (normalize_) {
                query_copy[q] = normalized(v);
            } else {
                query_copy[q].assign(v.begin(), v.end());
            }
            for (std::size_t t = 0; t < d; ++t) {
                const double x = query_copy[q][t];
                tile[t * kTile + q] = x;
                state.qnorm[q] += x * x;
            }
            // Bound on |expanded - direct| for any code: each dot-product style
            // sum of d exact products carries at most d ulps of its magnitude.
            state.margin[q] = 8.0 * static_cast<double>(d + 4) * kUnitRoundoff * (state.qnorm[q] + max_norm_);
        }

        detail::scan_blocks(tile.data(), d, count, packed_.data(), norms_.data(), blocks, state);

        for (std::size_t q = 0; q < count; ++q) {
            Nearest result{0, std::numeric_limits<double>::infinity()};
            // Candidates arrive in increasing index order.
            for (const auto& [approx, index] : state.candidates[q]) {
                if (approx > state.best[q] + state.margin[q]) continue;
                const double exact = direct_distance(query_copy[q], codes_.row(index));
                if (exact < result.distance) result = {index, exact};
            }
            out[start + q] = result;
        }
    }
}

std::vector<Nearest> assign_nearest(const CodeSearch& search, std::span<const float> samples,
                                    unsigned threads) {
    if (search.dim() == 0 || samples.size() % search.dim() != 0) {
        fail(Errc::shape, "assign_nearest: sample buffer is not a whole number of vectors");
    }
    std::vector<Nearest> out(samples.size() / search.dim());
    const std::size_t d = search.dim();
    parallel_for(out.size(), threads, [&](std::size_t begin, std::size_t end) {
        search.nearest_batch(samples.subspan(begin * d, (end - begin) * d),
                             std::span<Nearest>(out).subspan(begin, end - begin));
    });
    return out;
}

SemanticQuantization quantize_semantic(const FeatureGrid& z, const SemanticCodebook& cb,
                                       const QuantizeOptions& options) {
    if (z.dim() != cb.dim()) {
        fail(Errc::shape, "quantize_semantic: feature dim " + std::to_string(z.dim()) + " vs codebook dim " +
                              std::to_string(cb.dim()));
    }
    const CodeSearch search(cb.vectors(), options.l2_normalize);
    const auto nearest = assign_nearest(search, z.data(), options.threads);

    SemanticQuantization out{{}, FeatureGrid(z.height(), z.width(), z.dim()), 0.0};
    out.indices.reserve(nearest.size());
    for (std::size_t c = 0; c < nearest.size(); ++c) {
        out.indices.push_back(nearest[c].index);
        out.distortion += nearest[c].distance;
        const auto row = cb.vectors().row(nearest[c].index);
        std::copy(row.begin(), row.end(), out.quantized.cell(c).begin());
    }
    return out;
}

PixelQuantization quantize_pixel(const FeatureGrid& z_pix, const HierarchicalCodebook& hier,
                                 std::span<const Index> sem_idx, const QuantizeOptions& options) {
    if (z_pix.dim() != hier.dim_pix()) {
        fail(Errc::shape, "quantize_pixel: feature dim " + std::to_string(z_pix.dim()) +
                              " vs sub-codebook dim " + std::to_string(hier.dim_pix()));
    }
    if (sem_idx.size() != z_pix.cells()) fail(Errc::shape, "quantize_pixel: index grid does not match cells");
    for (Index k : sem_idx) {
        if (k >= hier.k()) {
            fail(Errc::range, "quantize_pixel: semantic index " + std::to_string(k) + " not below K=" +
                                  std::to_string(hier.k()));
        }
    }

    std::vector<Nearest> nearest(z_pix.cells());
    parallel_for(nearest.size(), options.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t c = begin; c < end; ++c) {
            const auto& sub = hier.sub(sem_idx[c]).vectors;
            if (options.l2_normalize) {
                Matrix normed;
                for (std::size_t r = 0; r < sub.rows(); ++r) normed.append_row(normalized(sub.row(r)));
                nearest[c] = nearest_code(normalized(z_pix.cell(c)), normed);
            } else {
                nearest[c] = nearest_code(z_pix.cell(c), sub);
            }
        }
    });

    PixelQuantization out{{}, FeatureGrid(z_pix.height(), z_pix.width(), z_pix.dim()), 0.0};
    out.indices.reserve(nearest.size());
    for (std::size_t c = 0; c < nearest.size(); ++c) {
        out.indices.push_back(nearest[c].index);
        out.distortion += nearest[c].distance;
        const auto row = hier.sub(sem_idx[c]).vectors.row(nearest[c].index);
        std::copy(row.begin(), row.end(), out.quantized.cell(c).begin());
    }
    return out;
}

QuantizationResult quantize_hierarchical(const FeatureGrid& z_sem, const FeatureGrid& z_pix,
                                         const HierarchicalCodebook& hier, const QuantizeOptions& options) {
    if (z_sem.height() != z_pix.height() || z_sem.width() != z_pix.width()) {
        fail(Errc::shape, "quantize_hierarchical: semantic and pixel grids differ in height/width");
    }
    auto sem = quantize_semantic(z_sem, hier.semantic(), options);
    auto pix = quantize_pixel(z_pix, hier, sem.indices, options);
    TokenGrid tokens(z_sem.height(), z_sem.width(), static_cast<Index>(hier.m()), sem.indices, pix.indices);
    FeatureGrid concat = concat_features(sem.quantized, pix.quantized);
    return QuantizationResult{std::move(tokens), std::move(sem.quantized), std::move(pix.quantized),
                              std::move(concat), sem.distortion, pix.distortion};
}

namespace {

void check_tokens(const TokenGrid& tokens, const HierarchicalCodebook& hier) {
    if (tokens.m() != hier.m()) {
        fail(Errc::shape, "token grid m=" + std::to_string(tokens.m()) + " vs codebook m=" +
                              std::to_string(hier.m()));
    }
    for (std::size_t c = 0; c < tokens.cells(); ++c) {
        if (tokens.sem_idx()[c] >= hier.k() || tokens.pix_idx()[c] >= hier.m()) {
            fail(Errc::range, "token " + std::to_string(tokens.flat_idx()[c]) + " outside vocabulary of " +
                                  std::to_string(hier.vocab_size()));
        }
    }
}

}  // namespace

FeatureGrid dequantize_semantic(const TokenGrid& tokens, const HierarchicalCodebook& hier) {
    check_tokens(tokens, hier);
    FeatureGrid out(tokens.height(), tokens.width(), hier.dim_sem());
    for (std::size_t c = 0; c < tokens.cells(); ++c) {
        const auto row = hier.semantic().vectors().row(tokens.sem_idx()[c]);
        std::copy(row.begin(), row.end(), out.cell(c).begin());
    }
    return out;
}

FeatureGrid dequantize_pixel(const TokenGrid& tokens, const HierarchicalCodebook& hier) {
    check_tokens(tokens, hier);
    FeatureGrid out(tokens.height(), tokens.width(), hier.dim_pix());
    for (std::size_t c = 0; c < tokens.cells(); ++c) {
        const auto row = hier.sub(tokens.sem_idx()[c]).vectors.row(tokens.pix_idx()[c]);
        std::copy(row.begin(), row.end(), out.cell(c).begin());
    }
    return out;
}

FeatureGrid dequantize(const TokenGrid& tokens, const HierarchicalCodebook& hier) {
    return concat_features(dequantize_semantic(tokens, hier), dequantize_pixel(tokens, hier));
}

}  // namespace sghc
