#include "doctest.h"

#include <cmath>
#include <set>

#include "sghc/quantizer.hpp"
#include "sghc/serialize.hpp"
#include "sghc/trainer.hpp"
#include "support.hpp"

using namespace sghc;

namespace {

Errc error_code(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an sghc::Error");
    return Errc::io;
}

bool is_row_of(std::span<const float> v, const Matrix& samples) {
    for (std::size_t r = 0; r < samples.rows(); ++r) {
        if (std::equal(v.begin(), v.end(), samples.row(r).begin())) return true;
    }
    return false;
}

double max_center_error(const Matrix& codes, const Matrix& centers) {
    double worst = 0.0;
    for (std::size_t c = 0; c < centers.rows(); ++c) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t r = 0; r < codes.rows(); ++r) {
            double acc = 0.0;
            for (std::size_t t = 0; t < codes.cols(); ++t) {
                const double d = codes.row(r)[t] - centers.row(c)[t];
                acc += d * d;
            }
            best = std::min(best, std::sqrt(acc));
        }
        worst = std::max(worst, best);
    }
    return worst;
}

FeatureGrid as_grid(const Matrix& m) {
    return FeatureGrid(1, m.rows(), m.cols(), std::vector<float>(m.values().begin(), m.values().end()));
}

}  // namespace

TEST_CASE("train config rejects invalid values") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.momentum = 1.0f;
    CHECK(error_code([&] { cfg.validate(); }) == Errc::argument);
    cfg = {};
    cfg.k = 0;
    CHECK(error_code([&] { cfg.validate(); }) == Errc::argument);
    cfg = {};
    cfg.batch_size = 0;
    CHECK(error_code([&] { cfg.validate(); }) == Errc::argument);
    cfg = {};
    CHECK(cfg.momentum == 0.99f);
    CHECK(cfg.dead_code_epochs == 2);
    CHECK(cfg.k == 16384);
    CHECK(cfg.m == 12);
}

TEST_CASE("compute_usage counts exactly") {
    const std::vector<Index> half{0, 2, 2, 0};
    CHECK(compute_usage(half, 4).usage_percent == 50.0);
    const std::vector<Index> all{3, 1, 0, 2};
    CHECK(compute_usage(all, 4).usage_percent == 100.0);
    CHECK(compute_usage({}, 4).usage_percent == 0.0);

    // Ten patches over eight codes: codes 0, 1, 4, 6 are hit.
    const std::vector<Index> ten{0, 0, 1, 4, 4, 4, 6, 0, 1, 6};
    const auto u = compute_usage(ten, 8);
    CHECK(u.assigned_counts == std::vector<std::uint64_t>{3, 2, 0, 0, 3, 0, 2, 0});
    CHECK(u.usage_percent == 50.0);
    CHECK(error_code([&] { compute_usage(ten, 6); }) == Errc::range);
}

TEST_CASE("metrics records are line formatted") {
    const EpochMetrics m{3, 1.5, 87.5, 2};
    CHECK(format_metrics(m) == "epoch=3 distortion=1.5 usage_percent=87.5 revived_count=2");
}

TEST_CASE("init_codebook draws sample rows deterministically") {
    const auto samples = fixtures::random_matrix(50, 3, 1);
    for (auto method : {InitMethod::kmeanspp, InitMethod::random_sample}) {
        const auto one = init_codebook(samples, 1, method, 9);
        CHECK(is_row_of(one.row(0), samples));
        const auto a = init_codebook(samples, 10, method, 4);
        CHECK(a == init_codebook(samples, 10, method, 4));
        std::set<std::vector<float>> rows;
        for (std::size_t r = 0; r < a.rows(); ++r) {
            CHECK(is_row_of(a.row(r), samples));
            rows.insert(std::vector<float>(a.row(r).begin(), a.row(r).end()));
        }
        CHECK(rows.size() == 10);
    }
    CHECK(init_codebook(samples, 10, InitMethod::kmeanspp, 4) != init_codebook(samples, 10, InitMethod::kmeanspp, 5));
}

TEST_CASE("kmeans++ needs enough distinct samples") {
    const Matrix dup(4, 1, {1, 1, 2, 2});
    CHECK(error_code([&] { init_codebook(dup, 3, InitMethod::kmeanspp, 0); }) == Errc::init);
    CHECK_NOTHROW(init_codebook(dup, 2, InitMethod::kmeanspp, 0));
    const auto wrapped = init_codebook(dup, 6, InitMethod::random_sample, 0);
    CHECK(wrapped.rows() == 6);
}

TEST_CASE("kmeans++ seeds both of two separated clusters") {
    Matrix centers(2, 2, {0, 0, 100, 100});
    const auto data = fixtures::gaussian_clusters(centers, 50, 1.0, 3);
    int successes = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto init = init_codebook(data.samples, 2, InitMethod::kmeanspp, seed);
        const bool first_low = init.row(0)[0] < 50.0f;
        const bool second_low = init.row(1)[0] < 50.0f;
        if (first_low != second_low) ++successes;
    }
    CHECK(successes >= 95);
}

TEST_CASE("ema_update follows the moving-average rule") {
    EmaCodebook cb(Matrix(2, 1, {1.0f, 5.0f}));
    const std::vector<float> batch{1.5f, 2.5f};
    const std::vector<Index> assign{0, 0};
    ema_update(cb, 0.9f, batch, assign);
    CHECK(cb.vectors.row(0)[0] == doctest::Approx(1.1).epsilon(1e-7));
    CHECK(cb.vectors.row(1)[0] == 5.0f);
    CHECK(cb.cluster_size[0] == doctest::Approx(0.2).epsilon(1e-7));
    CHECK(cb.cluster_size[1] == 0.0f);
    CHECK(cb.ema_sum.row(0)[0] == doctest::Approx(0.4).epsilon(1e-7));
    CHECK(cb.ema_sum.row(1)[0] == 0.0f);

    CHECK(error_code([&] { ema_update(cb, 0.9f, {}, {}); }) == Errc::data);
    const std::vector<Index> out_of_range{0, 2};
    CHECK(error_code([&] { ema_update(cb, 0.9f, batch, out_of_range); }) == Errc::range);
    const std::vector<Index> short_assign{0};
    CHECK(error_code([&] { ema_update(cb, 0.9f, batch, short_assign); }) == Errc::shape);
}

TEST_CASE("repeated updates converge geometrically") {
    EmaCodebook cb(Matrix(1, 3, {4.0f, -2.0f, 0.0f}));
    const std::vector<float> target{1.0f, 1.0f, 1.0f};
    const std::vector<Index> assign{0};
    const std::array<double, 3> start{4.0, -2.0, 0.0};
    for (int t = 1; t <= 60; ++t) {
        ema_update(cb, 0.9f, target, assign);
        const double factor = std::pow(0.9, t);
        for (std::size_t d = 0; d < 3; ++d) {
            const double expected = 1.0 + (start[d] - 1.0) * factor;
            CHECK(cb.vectors.row(0)[d] == doctest::Approx(expected).epsilon(1e-5));
        }
        CHECK(cb.cluster_size[0] == doctest::Approx(1.0 - factor).epsilon(1e-5));
    }
}

TEST_CASE("frozen semantic codebooks reject updates") {
    SemanticCodebook sem(Matrix(1, 1, {0.0f}), 0.9f);
    const std::vector<float> batch{1.0f};
    const std::vector<Index> assign{0};
    ema_update(sem, batch, assign);
    CHECK(sem.vectors().row(0)[0] == doctest::Approx(0.1));
    sem.freeze();
    CHECK(error_code([&] { ema_update(sem, batch, assign); }) == Errc::frozen);
}

TEST_CASE("dead codes are those idle for the configured number of epochs") {
    DeadCodeTracker tracker(4, 2);
    const auto usage = compute_usage(std::vector<Index>{0, 1, 2}, 4);
    CHECK(tracker.observe(usage).empty());
    CHECK(tracker.observe(usage) == std::vector<Index>{3});
    tracker.reset(3);
    CHECK(tracker.idle_epochs(3) == 0);
    CHECK(tracker.observe(compute_usage(std::vector<Index>{0, 1, 2, 3}, 4)).empty());
}

TEST_CASE("reinit_dead_codes moves a dead code to the farthest reservoir point") {
    EmaCodebook cb(Matrix(4, 2, {0, 0, 1, 0, 0, 1, 50, 50}));
    cb.cluster_size = {1, 2, 3, 4};
    CHECK(reinit_dead_codes(cb, {}, Matrix()) == 0);

    const auto reservoir = fixtures::random_matrix(40, 2, 8, -5.0f, 5.0f);
    // Oracle: distance of each reservoir point to its nearest live code (0, 1, 2).
    Matrix live(3, 2, {0, 0, 1, 0, 0, 1});
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < reservoir.rows(); ++i) {
        const double d = fixtures::brute_nearest(reservoir.row(i), live).second;
        if (d > far_d) {
            far_d = d;
            far = i;
        }
    }
    const std::vector<Index> dead{3};
    CHECK(reinit_dead_codes(cb, dead, reservoir) == 1);
    CHECK(std::equal(cb.vectors.row(3).begin(), cb.vectors.row(3).end(), reservoir.row(far).begin()));
    CHECK(cb.cluster_size[3] == 0.0f);
    CHECK(cb.cluster_size[2] == 3.0f);
    CHECK(cb.ema_sum.row(3)[0] == 0.0f);

    CHECK(error_code([&] { reinit_dead_codes(cb, dead, Matrix()); }) == Errc::argument);
}

TEST_CASE("revival does not lower usage on the next epoch") {
    // Codes 1 and 2 duplicate code 0 and can never win an assignment.
    Matrix centers(3, 2, {0, 0, 10, 0, 0, 10});
    const auto data = fixtures::gaussian_clusters(centers, 30, 0.1, 5);
    EmaCodebook cb(Matrix(3, 2, {0, 0, 0, 0, 0, 0}));
    auto usage_of = [&] {
        const auto found = assign_nearest(CodeSearch(cb.vectors), data.samples.values(), 1);
        std::vector<Index> idx;
        for (const auto& f : found) idx.push_back(f.index);
        return compute_usage(idx, 3);
    };
    DeadCodeTracker tracker(3, 2);
    auto before = usage_of();
    CHECK(tracker.observe(before).empty());
    before = usage_of();
    const auto dead = tracker.observe(before);
    CHECK(dead == std::vector<Index>{1, 2});
    CHECK(reinit_dead_codes(cb, dead, data.samples) == 2);
    const auto after = usage_of();
    CHECK(after.usage_percent >= before.usage_percent);
    CHECK(after.usage_percent == 100.0);
}

TEST_CASE("semantic training recovers separated Gaussian centers") {
    const auto centers = fixtures::lattice_centers(4, 2, 10.0);
    const auto data = fixtures::gaussian_clusters(centers, 250, 0.01, 11);
    TrainConfig cfg;
    cfg.k = 4;
    cfg.epochs = 50;
    cfg.batch_size = data.samples.rows();
    cfg.seed = 3;
    std::vector<EpochMetrics> seen;
    const std::vector<FeatureGrid> stream{as_grid(data.samples)};
    const auto trained = train_semantic_codebook(stream, cfg, [&](const EpochMetrics& m) { seen.push_back(m); });
    CHECK(trained.codebook.frozen());
    CHECK(trained.metrics.size() == 50);
    CHECK(seen.size() == 50);
    CHECK(max_center_error(trained.codebook.vectors(), centers) < 0.05);
    for (std::size_t e = 1; e < trained.metrics.size(); ++e) {
        CHECK(trained.metrics[e].distortion <= trained.metrics[e - 1].distortion + 1e-6);
    }
    CHECK(trained.metrics.back().usage_percent == 100.0);
}

TEST_CASE("a single code converges to the data mean") {
    const auto samples = fixtures::random_matrix(200, 3, 13);
    std::array<double, 3> mean{};
    for (std::size_t r = 0; r < samples.rows(); ++r) {
        for (std::size_t t = 0; t < 3; ++t) mean[t] += samples.row(r)[t] / 200.0;
    }
    TrainConfig cfg;
    cfg.k = 1;
    cfg.momentum = 0.5f;
    cfg.epochs = 40;
    cfg.batch_size = 200;
    const auto trained = train_ema_codebook(samples, 1, cfg);
    for (std::size_t t = 0; t < 3; ++t) CHECK(trained.codebook.vectors.row(0)[t] == doctest::Approx(mean[t]).epsilon(1e-5));
}

TEST_CASE("training is deterministic and thread-count invariant") {
    const auto centers = fixtures::lattice_centers(8, 3, 4.0);
    const auto data = fixtures::gaussian_clusters(centers, 120, 0.5, 17);
    TrainConfig cfg;
    cfg.k = 12;
    cfg.epochs = 6;
    cfg.batch_size = 100;
    cfg.seed = 21;
    cfg.init = InitMethod::random_sample;
    cfg.threads = 1;
    const auto a = train_ema_codebook(data.samples, cfg.k, cfg);
    const auto b = train_ema_codebook(data.samples, cfg.k, cfg);
    cfg.threads = 5;
    const auto c = train_ema_codebook(data.samples, cfg.k, cfg);
    CHECK(a.codebook == b.codebook);
    CHECK(a.codebook == c.codebook);
}

TEST_CASE("semantic training rejects an empty stream") {
    TrainConfig cfg;
    cfg.k = 2;
    CHECK(error_code([&] { train_semantic_codebook({}, cfg); }) == Errc::data);
}

namespace {

struct Routed {
    std::vector<FeatureGrid> sem;
    std::vector<FeatureGrid> pix;
};

// Code 0 ([0]) receives pixel vectors near a or b, code 1 ([10]) near c or d.
Routed routed_clusters(std::uint64_t seed) {
    const Matrix pix_centers(4, 2, {0, 0, 5, 5, 20, 20, 25, -5});
    const auto pix = fixtures::gaussian_clusters(pix_centers, 200, 0.01, seed);
    Matrix sem(pix.samples.rows(), 1);
    for (std::size_t i = 0; i < pix.samples.rows(); ++i) sem.row(i)[0] = pix.labels[i] < 2 ? 0.1f : 9.9f;
    return {{as_grid(sem)}, {as_grid(pix.samples)}};
}

SemanticCodebook two_code_semantic() {
    return SemanticCodebook(EmaCodebook(Matrix(2, 1, {0.0f, 10.0f})), 0.99f, true);
}

}  // namespace

TEST_CASE("pixel training requires a frozen semantic codebook") {
    const auto data = routed_clusters(1);
    SemanticCodebook open(Matrix(2, 1, {0.0f, 10.0f}), 0.99f);
    TrainConfig cfg;
    cfg.k = 2;
    cfg.m = 2;
    CHECK(error_code([&] { train_pixel_subcodebooks(data.sem, data.pix, open, cfg); }) == Errc::contract);
}

TEST_CASE("pixel training fits each sub-codebook to its routed vectors") {
    const auto data = routed_clusters(2);
    const auto sem = two_code_semantic();
    const auto digest = semantic_digest(sem);
    TrainConfig cfg;
    cfg.k = 2;
    cfg.m = 2;
    cfg.momentum = 0.9f;
    cfg.epochs = 30;
    cfg.batch_size = 256;
    cfg.seed = 5;
    const auto trained = train_pixel_subcodebooks(data.sem, data.pix, sem, cfg);
    CHECK(semantic_digest(sem) == digest);
    CHECK(semantic_digest(trained.codebook.semantic()) == digest);
    CHECK(max_center_error(trained.codebook.sub(0).vectors, Matrix(2, 2, {0, 0, 5, 5})) < 0.05);
    CHECK(max_center_error(trained.codebook.sub(1).vectors, Matrix(2, 2, {20, 20, 25, -5})) < 0.05);
    CHECK(trained.metrics.back().usage_percent == 100.0);
}

TEST_CASE("sub-codebooks without routed vectors are left alone") {
    const auto data = routed_clusters(3);
    SemanticCodebook sem(EmaCodebook(Matrix(3, 1, {0.0f, 10.0f, 500.0f})), 0.99f, true);
    TrainConfig cfg;
    cfg.k = 3;
    cfg.m = 2;
    cfg.epochs = 3;
    const auto trained = train_pixel_subcodebooks(data.sem, data.pix, sem, cfg);
    CHECK(trained.codebook.sub(2) == PixelSubCodebook(Matrix(2, 2)));
    CHECK(trained.codebook.vocab_size() == 6);
}

TEST_CASE("pixel training is thread-count invariant") {
    const auto data = routed_clusters(4);
    const auto sem = two_code_semantic();
    TrainConfig cfg;
    cfg.k = 2;
    cfg.m = 3;
    cfg.epochs = 4;
    cfg.batch_size = 97;
    cfg.threads = 1;
    const auto a = train_pixel_subcodebooks(data.sem, data.pix, sem, cfg);
    cfg.threads = 6;
    const auto b = train_pixel_subcodebooks(data.sem, data.pix, sem, cfg);
    CHECK(a.codebook == b.codebook);
}
