#include "sghc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "sghc/quantizer.hpp"
#include "sghc/random.hpp"

namespace sghc {

namespace {

constexpr std::uint64_t kRandomBaselineStream = 0x5252;

// Mean over dimensions of the per-dimension variance of `rows` (two-pass).
double mean_dim_variance(const Matrix& features, std::span<const std::size_t> rows, std::size_t first_col,
                         VarianceKind kind) {
    const std::size_t d = features.cols() - first_col;
    std::vector<double> mean(d, 0.0);
    for (std::size_t r : rows) {
        const auto v = features.row(r);
        for (std::size_t t = 0; t < d; ++t) mean[t] += v[first_col + t];
    }
    const double n = static_cast<double>(rows.size());
    for (auto& x : mean) x /= n;
    double acc = 0.0;
    for (std::size_t r : rows) {
        const auto v = features.row(r);
        for (std::size_t t = 0; t < d; ++t) {
            const double diff = v[first_col + t] - mean[t];
            acc += diff * diff;
        }
    }
    const double denom = kind == VarianceKind::population ? n : n - 1.0;
    return acc / denom / static_cast<double>(d);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

VRRReport vrr(std::span<const Index> assignments, const Matrix& features, const VrrOptions& options) {
    if (assignments.size() != features.rows()) {
        fail(Errc::shape, "vrr: " + std::to_string(assignments.size()) + " assignments for " +
                              std::to_string(features.rows()) + " patches");
    }
    if (features.rows() < 2) fail(Errc::argument, "vrr: need at least 2 patches");
    const std::size_t first_col = options.exclude_dc ? 1 : 0;
    if (features.cols() <= first_col) fail(Errc::shape, "vrr: no feature dimensions left");

    VRRReport out;
    out.total_patches = features.rows();
    std::vector<std::size_t> all(features.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    out.v_global = mean_dim_variance(features, all, first_col, options.kind);
    if (!(out.v_global > 0.0)) fail(Errc::degenerate, "vrr: global variance is zero (all patches identical)");

    // Patches grouped by code, codes in increasing order.
    std::vector<std::size_t> order = all;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return assignments[a] < assignments[b]; });
    double weighted = 0.0;
    double weight = 0.0;
    for (std::size_t g = 0; g < order.size();) {
        std::size_t e = g;
        while (e < order.size() && assignments[order[e]] == assignments[order[g]]) ++e;
        const std::size_t n = e - g;
        if (n >= 2) {
            const double var = mean_dim_variance(features, std::span(order).subspan(g, n), first_col, options.kind);
            const double w = options.weighting == VarianceWeighting::pooled ? static_cast<double>(n) : 1.0;
            weighted += w * var;
            weight += w;
            ++out.codes_counted;
        }
        g = e;
    }
    if (out.codes_counted == 0) fail(Errc::degenerate, "vrr: no code holds two or more patches");
    out.v_mean = weighted / weight;
    out.vrr = 1.0 - out.v_mean / out.v_global;
    return out;
}

VrrExperimentReport vrr_experiment(std::span<const GrayImage> corpus, const HierarchicalCodebook& hier,
                                   const VrrExperimentConfig& config) {
    if (corpus.empty()) fail(Errc::data, "vrr experiment: empty corpus");
    if (config.seeds.empty()) fail(Errc::argument, "vrr experiment: no seeds");
    const std::size_t p = config.spec.patch;
    if (hier.dim_pix() != p * p) {
        fail(Errc::shape, "vrr experiment: codebook pixel dim " + std::to_string(hier.dim_pix()) +
                              " does not match patch " + std::to_string(p));
    }

    Matrix features;
    std::vector<Index> sem_idx;
    std::vector<Index> flat_idx;
    const QuantizeOptions qopt{config.threads, false};
    for (const auto& img : corpus) {
        const FeatureGrid pix = pixel_features(img, config.spec);
        const FeatureGrid sem = low_band(pix, p, config.low);
        const auto q = quantize_hierarchical(sem, pix, hier, qopt);
        for (std::size_t c = 0; c < pix.cells(); ++c) features.append_row(pix.cell(c));
        sem_idx.insert(sem_idx.end(), q.tokens.sem_idx().begin(), q.tokens.sem_idx().end());
        flat_idx.insert(flat_idx.end(), q.tokens.flat_idx().begin(), q.tokens.flat_idx().end());
    }

    VrrExperimentReport out;
    out.images = corpus.size();
    out.patches = features.rows();

    std::vector<Index> random_idx(features.rows());
    for (auto seed : config.seeds) {
        auto rng = make_rng(seed, kRandomBaselineStream);
        for (auto& idx : random_idx) idx = static_cast<Index>(uniform_below(rng, hier.k()));
        out.random.push_back({seed, vrr(random_idx, features, config.options).vrr});
    }
    double sum = 0.0;
    for (const auto& r : out.random) sum += r.value;
    out.random_mean = sum / static_cast<double>(out.random.size());
    double sq = 0.0;
    for (const auto& r : out.random) sq += (r.value - out.random_mean) * (r.value - out.random_mean);
    out.random_std = std::sqrt(sq / static_cast<double>(out.random.size()));

    out.semantic = vrr(sem_idx, features, config.options);
    out.hierarchical = vrr(flat_idx, features, config.options);

    if (config.include_flat) {
        TrainConfig cfg;
        cfg.k = hier.vocab_size();
        cfg.m = 1;
        cfg.momentum = hier.momentum();
        cfg.epochs = config.flat_epochs;
        cfg.batch_size = config.flat_batch;
        cfg.seed = config.seeds.front();
        cfg.init = config.flat_init;
        cfg.threads = config.threads;
        const auto trained = train_ema_codebook(features, cfg.k, cfg);
        const auto nearest = assign_nearest(CodeSearch(trained.codebook.vectors), features.values(), config.threads);
        std::vector<Index> idx(nearest.size());
        for (std::size_t i = 0; i < nearest.size(); ++i) idx[i] = nearest[i].index;
        out.flat = vrr(idx, features, config.options);
        out.has_flat = true;
    }
    return out;
}

namespace {

void emit(std::string& out, const std::string& prefix, const VRRReport& r) {
    out += prefix + ".vrr=" + fmt(r.vrr) + "\n";
    out += prefix + ".v_mean=" + fmt(r.v_mean) + "\n";
    out += prefix + ".v_global=" + fmt(r.v_global) + "\n";
    out += prefix + ".codes_counted=" + std::to_string(r.codes_counted) + "\n";
}

}  // namespace

std::string format_vrr_report(const VrrExperimentReport& report) {
    std::string out;
    out += "images=" + std::to_string(report.images) + "\n";
    out += "patches=" + std::to_string(report.patches) + "\n";
    for (const auto& r : report.random) out += "random.seed." + std::to_string(r.seed) + ".vrr=" + fmt(r.value) + "\n";
    out += "random.vrr.mean=" + fmt(report.random_mean) + "\n";
    out += "random.vrr.std=" + fmt(report.random_std) + "\n";
    emit(out, "semantic", report.semantic);
    if (report.has_flat) emit(out, "flat", report.flat);
    emit(out, "hierarchical", report.hierarchical);
    return out;
}

std::string format_vrr_table(const VrrExperimentReport& report) {
    std::string out = "scheme\tvrr\tv_mean\tv_global\tcodes_counted\n";
    out += "random\t" + fmt(report.random_mean) + "\t\t\t\n";
    auto row = [&](const char* name, const VRRReport& r) {
        out += std::string(name) + "\t" + fmt(r.vrr) + "\t" + fmt(r.v_mean) + "\t" + fmt(r.v_global) + "\t" +
               std::to_string(r.codes_counted) + "\n";
    };
    row("semantic", report.semantic);
    if (report.has_flat) row("flat", report.flat);
    row("hierarchical", report.hierarchical);
    return out;
}

double semantic_distill_loss(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) fail(Errc::shape, "semantic_distill_loss: shape mismatch");
    if (a.rows() == 0 || a.cols() == 0) fail(Errc::shape, "semantic_distill_loss: empty input");
    double cos_term = 0.0;
    double abs_term = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const auto x = a.row(r);
        const auto y = b.row(r);
        double dot = 0.0, nx = 0.0, ny = 0.0;
        for (std::size_t t = 0; t < x.size(); ++t) {
            dot += static_cast<double>(x[t]) * y[t];
            nx += static_cast<double>(x[t]) * x[t];
            ny += static_cast<double>(y[t]) * y[t];
            abs_term += std::abs(static_cast<double>(x[t]) - y[t]);
        }
        if (nx == 0.0 || ny == 0.0) fail(Errc::domain, "semantic_distill_loss: zero vector has no direction");
        cos_term += 1.0 - dot / std::sqrt(nx * ny);
    }
    return cos_term / static_cast<double>(a.rows()) + abs_term / static_cast<double>(a.rows() * a.cols());
}

ReconstructionMetrics reconstruction_metrics(const GrayImage& original, const GrayImage& reconstructed) {
    if (original.height() != reconstructed.height() || original.width() != reconstructed.width()) {
        fail(Errc::shape, "reconstruction_metrics: image sizes differ");
    }
    double acc = 0.0;
    const auto a = original.data();
    const auto b = reconstructed.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = static_cast<double>(a[i]) - b[i];
        acc += diff * diff;
    }
    ReconstructionMetrics out;
    out.mse = acc / static_cast<double>(a.size());
    out.psnr = out.mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / out.mse);
    return out;
}

}  // namespace sghc
