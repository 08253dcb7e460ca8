#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sghc/core.hpp"
#include "sghc/features.hpp"
#include "sghc/random.hpp"

namespace fixtures {

using sghc::FeatureGrid;
using sghc::GrayImage;
using sghc::Index;
using sghc::Matrix;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, float lo = -1.0f,
                            float hi = 1.0f) {
    auto rng = sghc::make_rng(seed, 0x7e57);
    Matrix out(rows, cols);
    for (auto& v : out.values()) v = static_cast<float>(lo + (hi - lo) * sghc::uniform01(rng));
    return out;
}

inline FeatureGrid random_grid(std::size_t h, std::size_t w, std::size_t d, std::uint64_t seed) {
    const Matrix m = random_matrix(h * w, d, seed);
    return FeatureGrid(h, w, d, std::vector<float>(m.values().begin(), m.values().end()));
}

// Exhaustive double-precision search, lowest index on ties.
inline std::pair<Index, double> brute_nearest(std::span<const float> v, const Matrix& codes) {
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < codes.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t t = 0; t < v.size(); ++t) {
            const double diff = static_cast<double>(v[t]) - static_cast<double>(codes.row(r)[t]);
            acc += diff * diff;
        }
        if (acc < best_d) {
            best_d = acc;
            best = static_cast<Index>(r);
        }
    }
    return {best, best_d};
}

struct Clusters {
    Matrix samples;
    Matrix centers;
    std::vector<Index> labels;
};

// `per_cluster` points around each center, isotropic normal noise.
inline Clusters gaussian_clusters(const Matrix& centers, std::size_t per_cluster, double sigma, std::uint64_t seed) {
    auto rng = sghc::make_rng(seed, 0x6a55);
    std::normal_distribution<double> noise(0.0, sigma);
    Clusters out{Matrix(centers.rows() * per_cluster, centers.cols()), centers, {}};
    // Interleave clusters so every contiguous batch sees all of them.
    for (std::size_t i = 0; i < per_cluster; ++i) {
        for (std::size_t c = 0; c < centers.rows(); ++c) {
            auto row = out.samples.row(i * centers.rows() + c);
            for (std::size_t t = 0; t < centers.cols(); ++t) {
                row[t] = static_cast<float>(centers.row(c)[t] + noise(rng));
            }
            out.labels.push_back(static_cast<Index>(c));
        }
    }
    return out;
}

// Centers on a square lattice with the given spacing.
inline Matrix lattice_centers(std::size_t count, std::size_t dim, double spacing) {
    Matrix out(count, dim);
    for (std::size_t c = 0; c < count; ++c) {
        std::size_t code = c;
        for (std::size_t t = 0; t < dim; ++t) {
            out.row(c)[t] = static_cast<float>(spacing * static_cast<double>(code % 2));
            code /= 2;
        }
    }
    return out;
}

// Procedural grayscale images: gradients, stripes, checkerboards, blobs,
// rings, rectangles, textured noise and mixtures.
inline GrayImage procedural_image(std::size_t index, std::size_t size = 256, std::uint64_t seed = 2024) {
    auto rng = sghc::make_rng(seed, 0x1000 + index);
    auto u = [&] { return sghc::uniform01(rng); };
    GrayImage img(size, size);
    const double n = static_cast<double>(size);
    const double pi = std::numbers::pi;
    const std::size_t kind = index % 8;

    const double angle = u() * pi;
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double freq = 2.0 + u() * 24.0;
    const double base = 0.2 + 0.6 * u();
    const double amp = 0.15 + 0.25 * u();
    const std::size_t cell = 4u << static_cast<unsigned>(u() * 4.0);
    std::vector<std::array<double, 4>> blobs;
    for (int b = 0; b < 6; ++b) blobs.push_back({u() * n, u() * n, 8.0 + u() * 40.0, u() - 0.5});
    std::vector<std::array<double, 5>> rects;
    for (int b = 0; b < 8; ++b) rects.push_back({u() * n, u() * n, 10.0 + u() * 90.0, 10.0 + u() * 90.0, u()});

    for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t c = 0; c < size; ++c) {
            const double x = static_cast<double>(c) / n;
            const double y = static_cast<double>(r) / n;
            const double proj = x * ca + y * sa;
            double v = base;
            switch (kind) {
                case 0: v = base + amp * (2.0 * proj - 1.0); break;
                case 1: v = base + amp * std::sin(2.0 * pi * freq * proj); break;
                case 2: v = ((r / cell + c / cell) % 2 == 0) ? base - amp : base + amp; break;
                case 3:
                    for (const auto& b : blobs) {
                        const double dx = static_cast<double>(c) - b[0], dy = static_cast<double>(r) - b[1];
                        v += b[3] * std::exp(-(dx * dx + dy * dy) / (2.0 * b[2] * b[2]));
                    }
                    break;
                case 4: {
                    const double dx = x - 0.5, dy = y - 0.5;
                    v = base + amp * std::cos(2.0 * pi * freq * std::sqrt(dx * dx + dy * dy));
                    break;
                }
                case 5:
                    for (const auto& q : rects) {
                        if (std::abs(static_cast<double>(c) - q[0]) < q[2] / 2 &&
                            std::abs(static_cast<double>(r) - q[1]) < q[3] / 2) {
                            v = q[4];
                        }
                    }
                    break;
                case 6: v = base + amp * (2.0 * proj - 1.0) + 0.08 * (u() - 0.5); break;
                default:
                    v = proj < 0.5 ? base + amp * std::sin(2.0 * pi * freq * proj)
                                   : base + amp * (((r / cell + c / cell) % 2 == 0) ? -1.0 : 1.0);
                    break;
            }
            img.at(r, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return img;
}

inline std::vector<GrayImage> procedural_corpus(std::size_t count, std::size_t size = 256, std::uint64_t seed = 2024) {
    std::vector<GrayImage> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(procedural_image(i, size, seed));
    return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("sghc-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fixtures
