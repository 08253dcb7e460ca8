#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sghc/core.hpp"

namespace sghc {

struct Nearest {
    Index index;
    double distance;  // squared Euclidean, accumulated in double
    bool operator==(const Nearest&) const = default;
};

// Exhaustive nearest row of `codes`, lowest index on ties.
Nearest nearest_code(std::span<const float> v, const Matrix& codes);

// Nearest-code search against a fixed codebook.
//
// The scan uses ||z||^2 - 2 z.c + ||c||^2 with precomputed code norms over a
// lane-packed double copy of the codebook. Every code whose expanded distance
// lies within a rounding bound of the running minimum is re-scored with the
// direct sum of squared differences, so the returned index and distance are
// exactly those of the exhaustive double-precision search.
class CodeSearch {
public:
    explicit CodeSearch(const Matrix& codes, bool l2_normalize = false);

    std::size_t size() const noexcept { return codes_.rows(); }
    std::size_t dim() const noexcept { return codes_.cols(); }

    Nearest nearest(std::span<const float> v) const;

    // `queries` holds out.size() contiguous vectors of dim() floats.
    void nearest_batch(std::span<const float> queries, std::span<Nearest> out) const;

private:
    Matrix codes_;
    std::vector<double> packed_;
    std::vector<double> norms_;
    double max_norm_ = 0.0;
    bool normalize_ = false;
};

struct QuantizeOptions {
    unsigned threads = 1;
    // L2-normalize features and codes before the search. Off by default.
    bool l2_normalize = false;
};

// Nearest codes for every row of `samples`, partitioned over threads.
std::vector<Nearest> assign_nearest(const CodeSearch& search, std::span<const float> samples,
                                    unsigned threads);

struct SemanticQuantization {
    std::vector<Index> indices;
    FeatureGrid quantized;
    double distortion = 0.0;  // sum of squared distances
};

SemanticQuantization quantize_semantic(const FeatureGrid& z, const SemanticCodebook& cb,
                                       const QuantizeOptions& options = {});

struct PixelQuantization {
    std::vector<Index> indices;
    FeatureGrid quantized;
    double distortion = 0.0;
};

// Cell c is searched only inside sub-codebook sem_idx[c].
PixelQuantization quantize_pixel(const FeatureGrid& z_pix, const HierarchicalCodebook& hier,
                                 std::span<const Index> sem_idx, const QuantizeOptions& options = {});

struct QuantizationResult {
    TokenGrid tokens;
    FeatureGrid quantized_sem;
    FeatureGrid quantized_pix;
    FeatureGrid quantized_concat;
    double sem_distortion = 0.0;
    double pix_distortion = 0.0;
};

QuantizationResult quantize_hierarchical(const FeatureGrid& z_sem, const FeatureGrid& z_pix,
                                         const HierarchicalCodebook& hier,
                                         const QuantizeOptions& options = {});

// Per cell: semantic.vectors[i] ++ subs[i].vectors[j].
FeatureGrid dequantize(const TokenGrid& tokens, const HierarchicalCodebook& hier);

// Semantic rows and pixel rows selected by the token grid, as separate grids.
FeatureGrid dequantize_semantic(const TokenGrid& tokens, const HierarchicalCodebook& hier);
FeatureGrid dequantize_pixel(const TokenGrid& tokens, const HierarchicalCodebook& hier);

}  // namespace sghc
