#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sghc/core.hpp"

namespace sghc {

enum class InitMethod { kmeanspp, random_sample };

struct TrainConfig {
    std::size_t k = 16384;
    std::size_t m = 12;
    float momentum = 0.99f;
    std::size_t epochs = 10;
    std::size_t batch_size = 4096;
    std::uint64_t seed = 0;
    std::size_t dead_code_epochs = 2;
    InitMethod init = InitMethod::kmeanspp;
    unsigned threads = 1;
    // Upper bound on the vectors kept for dead-code revival.
    std::size_t reservoir_size = 16384;

    void validate() const;
};

struct UsageStats {
    std::vector<std::uint64_t> assigned_counts;
    double usage_percent = 0.0;
};

UsageStats compute_usage(std::span<const Index> assignments, std::size_t k);

struct EpochMetrics {
    std::size_t epoch = 0;
    double distortion = 0.0;  // sum of squared distances over the data, end of epoch
    double usage_percent = 0.0;
    std::size_t revived = 0;
};

// "epoch=3 distortion=... usage_percent=... revived_count=..."
std::string format_metrics(const EpochMetrics& m);

using MetricsSink = std::function<void(const EpochMetrics&)>;

// k initial code vectors drawn from the rows of `samples`.
// kmeanspp needs at least k distinct rows; random_sample draws without
// replacement and wraps around when k exceeds the sample count.
Matrix init_codebook(const Matrix& samples, std::size_t k, InitMethod method, std::uint64_t seed);

// For every code with N_k > 0 assignments in the batch:
//   c_k    <- momentum * c_k    + (1 - momentum) * mean(z_i)
//   size_k <- momentum * size_k + (1 - momentum) * N_k
//   sum_k  <- momentum * sum_k  + (1 - momentum) * sum(z_i)
// Codes without assignments keep all of their state.
void ema_update(EmaCodebook& cb, float momentum, std::span<const float> batch,
                std::span<const Index> assignments);
void ema_update(SemanticCodebook& cb, std::span<const float> batch, std::span<const Index> assignments);

// Counts consecutive epochs without assignments per code.
class DeadCodeTracker {
public:
    DeadCodeTracker(std::size_t k, std::size_t dead_code_epochs);

    // Records one epoch of usage and returns the codes now considered dead.
    std::vector<Index> observe(const UsageStats& usage);
    void reset(Index code);
    std::size_t idle_epochs(Index code) const { return idle_.at(code); }

private:
    std::vector<std::size_t> idle_;
    std::size_t threshold_;
};

// Moves each dead code, in index order, to the reservoir vector farthest from
// its nearest current code (lowest reservoir index on ties) and clears that
// code's EMA state. Returns the number of codes revived.
std::size_t reinit_dead_codes(EmaCodebook& cb, std::span<const Index> dead, const Matrix& reservoir);

struct CodebookTraining {
    EmaCodebook codebook;
    std::vector<EpochMetrics> metrics;
};

// EMA vector quantization over a fixed sample set. Each epoch runs the
// batches in order (parallel assignment, serial update), revives dead codes
// and then re-measures distortion and usage over all samples.
CodebookTraining train_ema_codebook(const Matrix& samples, std::size_t k, const TrainConfig& cfg,
                                    const MetricsSink& sink = {});

struct SemanticTraining {
    SemanticCodebook codebook;
    std::vector<EpochMetrics> metrics;
};

// Stage 1. The returned codebook is frozen.
SemanticTraining train_semantic_codebook(std::span<const FeatureGrid> features, const TrainConfig& cfg,
                                         const MetricsSink& sink = {});

struct PixelTraining {
    HierarchicalCodebook codebook;
    std::vector<EpochMetrics> metrics;
};

// Stage 2. Routes each cell through the frozen semantic codebook and trains
// sub-codebook k only on the pixel vectors routed to code k. The semantic
// codebook is copied into the result untouched.
PixelTraining train_pixel_subcodebooks(std::span<const FeatureGrid> sem_features,
                                       std::span<const FeatureGrid> pix_features,
                                       const SemanticCodebook& semantic, const TrainConfig& cfg,
                                       const MetricsSink& sink = {});

// Number of distinct rows.
std::size_t count_distinct_rows(const Matrix& samples);

}  // namespace sghc
