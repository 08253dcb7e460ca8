#include "sghc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "sghc/parallel.hpp"
#include "sghc/quantizer.hpp"
#include "sghc/random.hpp"

namespace sghc {

namespace {

// Seed streams, one per consumer of randomness.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kReservoirStream = 2;
constexpr std::uint64_t kSubCodebookStreamBase = 1u << 20;

double squared_distance(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        const double diff = static_cast<double>(a[t]) - static_cast<double>(b[t]);
        acc += diff * diff;
    }
    return acc;
}

Matrix gather_rows(const Matrix& samples, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), samples.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = samples.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

Matrix pick_reservoir(const Matrix& samples, std::size_t cap, std::uint64_t seed) {
    if (samples.rows() <= cap) return samples;
    auto rng = make_rng(seed, kReservoirStream);
    std::vector<std::size_t> order(samples.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < cap; ++i) {
        std::swap(order[i], order[i + uniform_below(rng, order.size() - i)]);
    }
    order.resize(cap);
    std::sort(order.begin(), order.end());
    return gather_rows(samples, order);
}

}  // namespace

void TrainConfig::validate() const {
    if (k == 0) fail(Errc::argument, "k must be >= 1");
    if (m == 0) fail(Errc::argument, "m must be >= 1");
    if (batch_size == 0) fail(Errc::argument, "batch size must be >= 1");
    if (!(momentum > 0.0f && momentum < 1.0f)) fail(Errc::argument, "momentum must lie in (0, 1)");
    if (reservoir_size == 0) fail(Errc::argument, "reservoir size must be >= 1");
}

UsageStats compute_usage(std::span<const Index> assignments, std::size_t k) {
    UsageStats out;
    out.assigned_counts.assign(k, 0);
    for (Index a : assignments) {
        if (a >= k) fail(Errc::range, "compute_usage: index " + std::to_string(a) + " not below k");
        ++out.assigned_counts[a];
    }
    if (k > 0) {
        const auto used = std::count_if(out.assigned_counts.begin(), out.assigned_counts.end(),
                                        [](std::uint64_t c) { return c > 0; });
        out.usage_percent = 100.0 * static_cast<double>(used) / static_cast<double>(k);
    }
    return out;
}

std::string format_metrics(const EpochMetrics& m) {
    std::ostringstream os;
    os.precision(9);
    os << "epoch=" << m.epoch << " distortion=" << m.distortion << " usage_percent=" << m.usage_percent
       << " revived_count=" << m.revived;
    return os.str();
}

std::size_t count_distinct_rows(const Matrix& samples) {
    std::vector<std::size_t> order(samples.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto less = [&](std::size_t a, std::size_t b) {
        const auto ra = samples.row(a);
        const auto rb = samples.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    };
    std::sort(order.begin(), order.end(), less);
    std::size_t distinct = order.empty() ? 0 : 1;
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (less(order[i - 1], order[i])) ++distinct;
    }
    return distinct;
}

Matrix init_codebook(const Matrix& samples, std::size_t k, InitMethod method, std::uint64_t seed) {
    if (k == 0) fail(Errc::argument, "init_codebook: k must be >= 1");
    const std::size_t n = samples.rows();
    if (n == 0) fail(Errc::init, "init_codebook: no samples");
    auto rng = make_rng(seed, kInitStream);
    Matrix out(k, samples.cols());

    if (method == InitMethod::random_sample) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        const std::size_t draws = std::min(k, n);
        for (std::size_t i = 0; i < draws; ++i) {
            std::swap(order[i], order[i + uniform_below(rng, n - i)]);
        }
        for (std::size_t i = 0; i < k; ++i) {
            const auto src = samples.row(order[i % draws]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
    }

    const std::size_t distinct = count_distinct_rows(samples);
    if (distinct < k) {
        fail(Errc::init, "init_codebook: kmeans++ needs " + std::to_string(k) + " distinct samples, got " +
                             std::to_string(distinct));
    }
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t chosen = uniform_below(rng, n);
    for (std::size_t c = 0; c < k; ++c) {
        const auto center = samples.row(chosen);
        std::copy(center.begin(), center.end(), out.row(c).begin());
        if (c + 1 == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], squared_distance(samples.row(i), center));
            total += d2[i];
        }
        // D^2 sampling; distinct >= k guarantees total > 0 here.
        const double target = uniform01(rng) * total;
        double running = 0.0;
        chosen = n;
        std::size_t last_positive = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (d2[i] <= 0.0) continue;
            last_positive = i;
            running += d2[i];
            if (running > target) {
                chosen = i;
                break;
            }
        }
        if (chosen == n) chosen = last_positive;
    }
    return out;
}

void ema_update(EmaCodebook& cb, float momentum, std::span<const float> batch,
                std::span<const Index> assignments) {
    if (!(momentum > 0.0f && momentum < 1.0f)) fail(Errc::argument, "ema_update: momentum outside (0, 1)");
    const std::size_t d = cb.dim();
    if (assignments.empty()) fail(Errc::data, "ema_update: empty batch");
    if (batch.size() != assignments.size() * d) {
        fail(Errc::shape, "ema_update: batch does not hold one vector per assignment");
    }
    const std::size_t k = cb.size();
    std::vector<std::uint64_t> counts(k, 0);
    std::vector<double> sums(k * d, 0.0);
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        const Index a = assignments[i];
        if (a >= k) fail(Errc::range, "ema_update: assignment " + std::to_string(a) + " not below k");
        ++counts[a];
        for (std::size_t t = 0; t < d; ++t) sums[a * d + t] += batch[i * d + t];
    }
    const double keep = momentum;
    const double mix = 1.0 - keep;
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        const double n = static_cast<double>(counts[c]);
        auto vec = cb.vectors.row(c);
        auto acc = cb.ema_sum.row(c);
        for (std::size_t t = 0; t < d; ++t) {
            const double sum = sums[c * d + t];
            vec[t] = static_cast<float>(keep * vec[t] + mix * (sum / n));
            acc[t] = static_cast<float>(keep * acc[t] + mix * sum);
        }
        cb.cluster_size[c] = static_cast<float>(keep * cb.cluster_size[c] + mix * n);
    }
}

void ema_update(SemanticCodebook& cb, std::span<const float> batch, std::span<const Index> assignments) {
    const float momentum = cb.momentum();
    ema_update(cb.mutable_state(), momentum, batch, assignments);
}

DeadCodeTracker::DeadCodeTracker(std::size_t k, std::size_t dead_code_epochs)
    : idle_(k, 0), threshold_(dead_code_epochs) {}

std::vector<Index> DeadCodeTracker::observe(const UsageStats& usage) {
    if (usage.assigned_counts.size() != idle_.size()) fail(Errc::shape, "dead-code tracker: k mismatch");
    std::vector<Index> dead;
    for (std::size_t c = 0; c < idle_.size(); ++c) {
        idle_[c] = usage.assigned_counts[c] > 0 ? 0 : idle_[c] + 1;
        if (threshold_ > 0 && idle_[c] >= threshold_) dead.push_back(static_cast<Index>(c));
    }
    return dead;
}

void DeadCodeTracker::reset(Index code) { idle_.at(code) = 0; }

std::size_t reinit_dead_codes(EmaCodebook& cb, std::span<const Index> dead, const Matrix& reservoir) {
    if (dead.empty()) return 0;
    if (reservoir.rows() == 0) fail(Errc::argument, "reinit_dead_codes: empty reservoir");
    if (reservoir.cols() != cb.dim()) fail(Errc::shape, "reinit_dead_codes: reservoir dim mismatch");

    std::vector<bool> is_dead(cb.size(), false);
    for (Index c : dead) {
        if (c >= cb.size()) fail(Errc::range, "reinit_dead_codes: code index out of range");
        is_dead[c] = true;
    }
    Matrix live;
    for (std::size_t c = 0; c < cb.size(); ++c) {
        if (!is_dead[c]) live.append_row(cb.vectors.row(c));
    }
    std::vector<double> nearest(reservoir.rows(), std::numeric_limits<double>::infinity());
    if (!live.empty()) {
        const CodeSearch search(live);
        const auto found = assign_nearest(search, reservoir.values(), 1);
        for (std::size_t i = 0; i < found.size(); ++i) nearest[i] = found[i].distance;
    }

    std::vector<Index> order(dead.begin(), dead.end());
    std::sort(order.begin(), order.end());
    order.erase(std::unique(order.begin(), order.end()), order.end());
    for (Index c : order) {
        const std::size_t far =
            static_cast<std::size_t>(std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
        const auto src = reservoir.row(far);
        std::copy(src.begin(), src.end(), cb.vectors.row(c).begin());
        auto sum = cb.ema_sum.row(c);
        std::fill(sum.begin(), sum.end(), 0.0f);
        cb.cluster_size[c] = 0.0f;
        for (std::size_t i = 0; i < reservoir.rows(); ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(reservoir.row(i), src));
        }
    }
    return order.size();
}

CodebookTraining train_ema_codebook(const Matrix& samples, std::size_t k, const TrainConfig& cfg,
                                    const MetricsSink& sink) {
    cfg.validate();
    if (k == 0) fail(Errc::argument, "k must be >= 1");
    if (samples.rows() == 0) fail(Errc::data, "training data is empty");

    const std::size_t n = samples.rows();
    const std::size_t d = samples.cols();
    CodebookTraining out{EmaCodebook(init_codebook(samples, k, cfg.init, cfg.seed)), {}};
    EmaCodebook& cb = out.codebook;
    const Matrix reservoir = pick_reservoir(samples, cfg.reservoir_size, cfg.seed);
    DeadCodeTracker tracker(k, cfg.dead_code_epochs);
    std::vector<Index> assigned(n);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            const auto batch = samples.values().subspan(begin * d, (end - begin) * d);
            const CodeSearch search(cb.vectors);
            const auto nearest = assign_nearest(search, batch, cfg.threads);
            for (std::size_t i = 0; i < nearest.size(); ++i) assigned[begin + i] = nearest[i].index;
            ema_update(cb, cfg.momentum, batch,
                       std::span<const Index>(assigned).subspan(begin, end - begin));
        }

        const auto dead = tracker.observe(compute_usage(assigned, k));
        EpochMetrics metrics;
        metrics.epoch = epoch;
        metrics.revived = reinit_dead_codes(cb, dead, reservoir);
        for (Index c : dead) tracker.reset(c);

        const CodeSearch search(cb.vectors);
        const auto nearest = assign_nearest(search, samples.values(), cfg.threads);
        std::vector<Index> final_assignment(n);
        for (std::size_t i = 0; i < n; ++i) {
            final_assignment[i] = nearest[i].index;
            metrics.distortion += nearest[i].distance;
        }
        metrics.usage_percent = compute_usage(final_assignment, k).usage_percent;
        out.metrics.push_back(metrics);
        if (sink) sink(metrics);
    }
    return out;
}

namespace {

void check_stream(std::span<const FeatureGrid> grids, const char* what) {
    if (grids.empty()) fail(Errc::data, std::string(what) + ": empty feature stream");
    for (const auto& g : grids) {
        if (g.dim() != grids.front().dim()) fail(Errc::data, std::string(what) + ": inconsistent feature dim");
    }
}

Matrix stack_cells(std::span<const FeatureGrid> grids) {
    Matrix out;
    for (const auto& g : grids) {
        for (std::size_t c = 0; c < g.cells(); ++c) out.append_row(g.cell(c));
    }
    return out;
}

}  // namespace

SemanticTraining train_semantic_codebook(std::span<const FeatureGrid> features, const TrainConfig& cfg,
                                         const MetricsSink& sink) {
    check_stream(features, "train_semantic_codebook");
    auto trained = train_ema_codebook(stack_cells(features), cfg.k, cfg, sink);
    SemanticCodebook cb(std::move(trained.codebook), cfg.momentum, false);
    cb.freeze();
    return {std::move(cb), std::move(trained.metrics)};
}

PixelTraining train_pixel_subcodebooks(std::span<const FeatureGrid> sem_features,
                                       std::span<const FeatureGrid> pix_features,
                                       const SemanticCodebook& semantic, const TrainConfig& cfg,
                                       const MetricsSink& sink) {
    if (!semantic.frozen()) {
        fail(Errc::contract, "pixel sub-codebooks require a frozen semantic codebook (train stage 1 first)");
    }
    cfg.validate();
    check_stream(sem_features, "train_pixel_subcodebooks");
    check_stream(pix_features, "train_pixel_subcodebooks");
    if (sem_features.size() != pix_features.size()) {
        fail(Errc::data, "train_pixel_subcodebooks: semantic and pixel streams differ in length");
    }
    for (std::size_t g = 0; g < sem_features.size(); ++g) {
        if (sem_features[g].height() != pix_features[g].height() ||
            sem_features[g].width() != pix_features[g].width()) {
            fail(Errc::shape, "train_pixel_subcodebooks: grid " + std::to_string(g) + " is not paired cell-for-cell");
        }
    }

    const std::size_t K = semantic.k();
    const std::size_t m = cfg.m;
    const Matrix pixels = stack_cells(pix_features);
    const std::size_t n = pixels.rows();
    const std::size_t d = pixels.cols();

    std::vector<Index> route;
    route.reserve(n);
    for (const auto& g : sem_features) {
        const auto q = quantize_semantic(g, semantic, QuantizeOptions{cfg.threads, false});
        route.insert(route.end(), q.indices.begin(), q.indices.end());
    }

    std::vector<std::vector<std::size_t>> members(K);
    for (std::size_t i = 0; i < n; ++i) members[route[i]].push_back(i);

    std::vector<PixelSubCodebook> subs(K, PixelSubCodebook(Matrix(m, d)));
    std::vector<Matrix> reservoirs(K);
    for (std::size_t k = 0; k < K; ++k) {
        if (members[k].empty()) continue;
        Matrix local = gather_rows(pixels, members[k]);
        InitMethod method = cfg.init;
        if (method == InitMethod::kmeanspp && count_distinct_rows(local) < m) method = InitMethod::random_sample;
        subs[k] = PixelSubCodebook(init_codebook(local, m, method, derive_seed(cfg.seed, kSubCodebookStreamBase + k)));
        reservoirs[k] = pick_reservoir(local, cfg.reservoir_size, derive_seed(cfg.seed, kSubCodebookStreamBase + k));
    }

    DeadCodeTracker tracker(K * m, cfg.dead_code_epochs);
    std::vector<Nearest> nearest(n);
    auto assign_range = [&](std::size_t begin, std::size_t end) {
        parallel_for(end - begin, cfg.threads, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = begin + lo; i < begin + hi; ++i) {
                nearest[i] = nearest_code(pixels.row(i), subs[route[i]].vectors);
            }
        });
    };

    std::vector<EpochMetrics> history;
    std::vector<Index> flat(n);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
            const std::size_t end = std::min(n, begin + cfg.batch_size);
            assign_range(begin, end);

            // Group the batch by semantic code, keeping cell order inside a group.
            std::vector<std::size_t> order(end - begin);
            std::iota(order.begin(), order.end(), begin);
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return route[a] < route[b]; });
            std::vector<float> batch;
            std::vector<Index> local;
            for (std::size_t g = 0; g < order.size();) {
                const Index k = route[order[g]];
                batch.clear();
                local.clear();
                for (; g < order.size() && route[order[g]] == k; ++g) {
                    const auto row = pixels.row(order[g]);
                    batch.insert(batch.end(), row.begin(), row.end());
                    local.push_back(nearest[order[g]].index);
                }
                ema_update(subs[k], cfg.momentum, batch, local);
            }
            for (std::size_t i = begin; i < end; ++i) {
                flat[i] = flatten_index(route[i], nearest[i].index, static_cast<Index>(m));
            }
        }

        EpochMetrics metrics;
        metrics.epoch = epoch;
        const auto dead = tracker.observe(compute_usage(flat, K * m));
        std::vector<std::vector<Index>> dead_by_sub(K);
        for (Index h : dead) {
            const CodePair p = unflatten_index(h, static_cast<Index>(m));
            if (!members[p.semantic].empty()) {
                dead_by_sub[p.semantic].push_back(p.pixel);
                tracker.reset(h);
            }
        }
        for (std::size_t k = 0; k < K; ++k) {
            metrics.revived += reinit_dead_codes(subs[k], dead_by_sub[k], reservoirs[k]);
        }

        assign_range(0, n);
        std::vector<Index> final_flat(n);
        for (std::size_t i = 0; i < n; ++i) {
            metrics.distortion += nearest[i].distance;
            final_flat[i] = flatten_index(route[i], nearest[i].index, static_cast<Index>(m));
        }
        metrics.usage_percent = compute_usage(final_flat, K * m).usage_percent;
        history.push_back(metrics);
        if (sink) sink(metrics);
    }

    return {HierarchicalCodebook(semantic, std::move(subs), cfg.momentum), std::move(history)};
}

}  // namespace sghc
