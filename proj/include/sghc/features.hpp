#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "sghc/core.hpp"

namespace sghc {

// Luma image, row-major, values in [0, 1].
class GrayImage {
public:
    GrayImage(std::size_t height, std::size_t width);
    GrayImage(std::size_t height, std::size_t width, std::vector<float> data);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    float at(std::size_t r, std::size_t c) const { return data_[r * width_ + c]; }
    float& at(std::size_t r, std::size_t c) { return data_[r * width_ + c]; }
    std::span<const float> data() const noexcept { return data_; }

    bool operator==(const GrayImage&) const = default;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<float> data_;
};

// Non-overlapping square patches (stride == side).
struct PatchSpec {
    std::size_t patch = 8;
    void validate() const;
};

// PGM (P2/P5) or PPM (P3/P6) with maxval 255. RGB is reduced to luma
// 0.299 R + 0.587 G + 0.114 B.
GrayImage load_image(const std::filesystem::path& path);
GrayImage decode_image(std::span<const std::byte> bytes);

// Binary P5, values rounded to 8 bits.
void save_pgm(const GrayImage& img, const std::filesystem::path& path);

// Largest centered sub-image whose sides are multiples of the patch size.
GrayImage center_crop(const GrayImage& img, const PatchSpec& spec);

// Orthonormal type-II 2-D DCT on a P x P block (row-major) and its inverse.
class Dct2d {
public:
    explicit Dct2d(std::size_t size);

    std::size_t size() const noexcept { return n_; }
    void forward(std::span<const float> block, std::span<float> coeffs) const;
    void inverse(std::span<const float> coeffs, std::span<float> block) const;

    // Basis matrix C with C[u][x] = a(u) cos(pi (2x + 1) u / 2N).
    std::span<const double> basis() const noexcept { return basis_; }

private:
    std::size_t n_;
    std::vector<double> basis_;
};

std::vector<float> dct2(std::span<const float> block, std::size_t size);
std::vector<float> idct2(std::span<const float> coeffs, std::size_t size);

// (H/P) x (W/P) grid; each cell is the row-major P*P DCT of its patch.
// The image is center-cropped to multiples of P first.
FeatureGrid pixel_features(const GrayImage& img, const PatchSpec& spec);

// Per cell, the top-left low x low block of the patch DCT (low^2 dims).
FeatureGrid semantic_proxy_features(const GrayImage& img, const PatchSpec& spec, std::size_t low);

// Low-band block of every cell of a pixel feature grid.
FeatureGrid low_band(const FeatureGrid& pixel, std::size_t patch, std::size_t low);

// Places each low x low cell into the top-left corner of a P x P block and
// zeroes the rest.
FeatureGrid embed_low_band(const FeatureGrid& low_features, std::size_t patch);

// Inverse DCT per cell, tiled row-major and clamped to [0, 1].
GrayImage reconstruct_image(const FeatureGrid& pix, const PatchSpec& spec);

}  // namespace sghc
