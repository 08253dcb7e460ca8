#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sghc/core.hpp"
#include "sghc/features.hpp"
#include "sghc/trainer.hpp"

namespace sghc {

// How per-code variances are combined into v_mean.
enum class VarianceWeighting {
    unweighted,  // plain mean over codes with >= 2 patches
    pooled,      // patch-count weighted mean over the same codes
};

enum class VarianceKind {
    population,  // divide by n
    sample,      // divide by n - 1
};

struct VrrOptions {
    VarianceWeighting weighting = VarianceWeighting::unweighted;
    VarianceKind kind = VarianceKind::population;
    bool exclude_dc = false;  // drop feature column 0
};

struct VRRReport {
    double v_mean = 0.0;
    double v_global = 0.0;
    double vrr = 0.0;  // 1 - v_mean / v_global
    std::size_t codes_counted = 0;
    std::size_t total_patches = 0;
};

// Variance reduction ratio of `features` (one row per patch) grouped by
// `assignments`. A code's variance is the mean over dimensions of the
// per-dimension variance across its patches; v_global is the same statistic
// over all patches.
VRRReport vrr(std::span<const Index> assignments, const Matrix& features, const VrrOptions& options = {});

struct SeededValue {
    std::uint64_t seed;
    double value;
};

struct VrrExperimentConfig {
    PatchSpec spec;
    std::size_t low = 4;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    VrrOptions options;
    // Flat baseline codebook of K*m codes trained directly on the DCT features.
    bool include_flat = true;
    std::size_t flat_epochs = 5;
    std::size_t flat_batch = 4096;
    InitMethod flat_init = InitMethod::random_sample;
    unsigned threads = 1;
};

struct VrrExperimentReport {
    std::size_t images = 0;
    std::size_t patches = 0;
    std::vector<SeededValue> random;
    double random_mean = 0.0;
    double random_std = 0.0;
    VRRReport semantic;
    bool has_flat = false;
    VRRReport flat;
    VRRReport hierarchical;
};

// VRR of the DCT patch features of `corpus` under four assignments: uniform
// random over K codes (one run per seed), semantic indices, a flat K*m
// codebook trained on the DCT features, and hierarchical flat indices.
VrrExperimentReport vrr_experiment(std::span<const GrayImage> corpus, const HierarchicalCodebook& hier,
                                   const VrrExperimentConfig& config);

// key=value lines, fixed formatting.
std::string format_vrr_report(const VrrExperimentReport& report);
// Tab-separated table: scheme, vrr, v_mean, v_global, codes_counted.
std::string format_vrr_table(const VrrExperimentReport& report);

// mean over rows of (1 - cos(a_i, b_i)) plus mean absolute elementwise error.
double semantic_distill_loss(const Matrix& a, const Matrix& b);

struct ReconstructionMetrics {
    double mse = 0.0;
    double psnr = 0.0;  // +infinity when mse == 0
};

ReconstructionMetrics reconstruction_metrics(const GrayImage& original, const GrayImage& reconstructed);

}  // namespace sghc
