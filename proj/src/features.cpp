#include "sghc/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "sghc/serialize.hpp"

namespace sghc {

GrayImage::GrayImage(std::size_t height, std::size_t width)
    : GrayImage(height, width, std::vector<float>(height * width, 0.0f)) {}

GrayImage::GrayImage(std::size_t height, std::size_t width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (height_ == 0 || width_ == 0) fail(Errc::shape, "image: empty");
    if (data_.size() != height_ * width_) fail(Errc::shape, "image: data length does not match height*width");
    for (float v : data_) {
        if (!(v >= 0.0f && v <= 1.0f)) fail(Errc::domain, "image: value outside [0, 1]");
    }
}

void PatchSpec::validate() const {
    if (patch == 0) fail(Errc::argument, "patch size must be >= 1");
}

namespace {

class PnmReader {
public:
    explicit PnmReader(std::span<const std::byte> in) : in_(in) {}

    // Header integer, skipping whitespace and '#' comments.
    std::size_t header_int() {
        skip_space();
        if (pos_ >= in_.size()) fail(Errc::parse, "pnm: truncated header");
        if (!std::isdigit(static_cast<unsigned char>(peek()))) fail(Errc::parse, "pnm: malformed header");
        std::size_t v = 0;
        while (pos_ < in_.size() && std::isdigit(static_cast<unsigned char>(peek()))) {
            v = v * 10 + static_cast<std::size_t>(peek() - '0');
            if (v > (1u << 30)) fail(Errc::parse, "pnm: header value too large");
            ++pos_;
        }
        return v;
    }

    void single_whitespace() {
        if (pos_ >= in_.size() || !std::isspace(static_cast<unsigned char>(peek()))) fail(Errc::parse, "pnm: truncated header");
        ++pos_;
    }

    std::uint8_t raw_byte() {
        if (pos_ >= in_.size()) fail(Errc::parse, "pnm: truncated pixel data");
        return static_cast<std::uint8_t>(in_[pos_++]);
    }

    std::size_t ascii_sample() {
        skip_space();
        if (pos_ >= in_.size()) fail(Errc::parse, "pnm: truncated pixel data");
        return header_int();
    }

    char peek() const { return static_cast<char>(in_[pos_]); }
    std::size_t pos() const { return pos_; }

private:
    void skip_space() {
        while (pos_ < in_.size()) {
            const char c = peek();
            if (c == '#') {
                while (pos_ < in_.size() && peek() != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::byte> in_;
    std::size_t pos_ = 0;
};

float to_luma(std::size_t r, std::size_t g, std::size_t b) {
    const double y = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
    return static_cast<float>(std::clamp(y, 0.0, 1.0));
}

}  // namespace

GrayImage decode_image(std::span<const std::byte> bytes) {
    if (bytes.size() < 2 || static_cast<char>(bytes[0]) != 'P') fail(Errc::format, "unsupported image format");
    const char kind = static_cast<char>(bytes[1]);
    if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
        fail(Errc::format, std::string("unsupported PNM variant P") + kind);
    }
    PnmReader r(bytes.subspan(2));
    const std::size_t width = r.header_int();
    const std::size_t height = r.header_int();
    const std::size_t maxval = r.header_int();
    if (maxval != 255) fail(Errc::format, "unsupported maxval " + std::to_string(maxval) + " (need 255)");
    if (width == 0 || height == 0) fail(Errc::parse, "pnm: zero image size");
    const bool color = kind == '3' || kind == '6';
    const bool binary = kind == '5' || kind == '6';
    if (binary) r.single_whitespace();

    auto sample = [&]() -> std::size_t {
        const std::size_t v = binary ? r.raw_byte() : r.ascii_sample();
        if (v > maxval) fail(Errc::parse, "pnm: sample above maxval");
        return v;
    };
    std::vector<float> data(width * height);
    for (auto& px : data) {
        if (color) {
            const std::size_t red = sample();
            const std::size_t green = sample();
            const std::size_t blue = sample();
            px = to_luma(red, green, blue);
        } else {
            px = static_cast<float>(static_cast<double>(sample()) / 255.0);
        }
    }
    return GrayImage(height, width, std::move(data));
}

GrayImage load_image(const std::filesystem::path& path) {
    return decode_image(read_file(path));
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot write " + path.string());
    out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
    for (float v : img.data()) {
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))));
    }
    if (!out) fail(Errc::io, "write failed for " + path.string());
}

GrayImage center_crop(const GrayImage& img, const PatchSpec& spec) {
    spec.validate();
    const std::size_t h = img.height() / spec.patch * spec.patch;
    const std::size_t w = img.width() / spec.patch * spec.patch;
    if (h == 0 || w == 0) fail(Errc::shape, "image smaller than one patch");
    if (h == img.height() && w == img.width()) return img;
    const std::size_t top = (img.height() - h) / 2;
    const std::size_t left = (img.width() - w) / 2;
    std::vector<float> data;
    data.reserve(h * w);
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) data.push_back(img.at(top + r, left + c));
    }
    return GrayImage(h, w, std::move(data));
}

Dct2d::Dct2d(std::size_t size) : n_(size), basis_(size * size) {
    if (n_ == 0) fail(Errc::argument, "dct size must be >= 1");
    const double n = static_cast<double>(n_);
    for (std::size_t u = 0; u < n_; ++u) {
        const double scale = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
        for (std::size_t x = 0; x < n_; ++x) {
            basis_[u * n_ + x] =
                scale * std::cos(std::numbers::pi * (2.0 * static_cast<double>(x) + 1.0) * static_cast<double>(u) / (2.0 * n));
        }
    }
}

// coeffs = C X C^T, separable: rows then columns.
void Dct2d::forward(std::span<const float> block, std::span<float> coeffs) const {
    const std::size_t n = n_;
    if (block.size() != n * n || coeffs.size() != n * n) fail(Errc::shape, "dct2: block is not P x P");
    std::vector<double> tmp(n * n, 0.0);
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t v = 0; v < n; ++v) {
            double acc = 0.0;
            for (std::size_t y = 0; y < n; ++y) acc += basis_[v * n + y] * block[x * n + y];
            tmp[x * n + v] = acc;
        }
    }
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = 0; v < n; ++v) {
            double acc = 0.0;
            for (std::size_t x = 0; x < n; ++x) acc += basis_[u * n + x] * tmp[x * n + v];
            coeffs[u * n + v] = static_cast<float>(acc);
        }
    }
}

// X = C^T Y C
void Dct2d::inverse(std::span<const float> coeffs, std::span<float> block) const {
    const std::size_t n = n_;
    if (block.size() != n * n || coeffs.size() != n * n) fail(Errc::shape, "idct2: block is not P x P");
    std::vector<double> tmp(n * n, 0.0);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t y = 0; y < n; ++y) {
            double acc = 0.0;
            for (std::size_t v = 0; v < n; ++v) acc += coeffs[u * n + v] * basis_[v * n + y];
            tmp[u * n + y] = acc;
        }
    }
    for (std::size_t x = 0; x < n; ++x) {
        for (std::size_t y = 0; y < n; ++y) {
            double acc = 0.0;
            for (std::size_t u = 0; u < n; ++u) acc += basis_[u * n + x] * tmp[u * n + y];
            block[x * n + y] = static_cast<float>(acc);
        }
    }
}

std::vector<float> dct2(std::span<const float> block, std::size_t size) {
    std::vector<float> out(size * size);
    Dct2d(size).forward(block, out);
    return out;
}

std::vector<float> idct2(std::span<const float> coeffs, std::size_t size) {
    std::vector<float> out(size * size);
    Dct2d(size).inverse(coeffs, out);
    return out;
}

FeatureGrid pixel_features(const GrayImage& img, const PatchSpec& spec) {
    const GrayImage cropped = center_crop(img, spec);
    const std::size_t p = spec.patch;
    const std::size_t rows = cropped.height() / p;
    const std::size_t cols = cropped.width() / p;
    const Dct2d dct(p);
    FeatureGrid out(rows, cols, p * p);
    std::vector<float> block(p * p);
    for (std::size_t gr = 0; gr < rows; ++gr) {
        for (std::size_t gc = 0; gc < cols; ++gc) {
            for (std::size_t y = 0; y < p; ++y) {
                for (std::size_t x = 0; x < p; ++x) block[y * p + x] = cropped.at(gr * p + y, gc * p + x);
            }
            dct.forward(block, out.cell(gr * cols + gc));
        }
    }
    return out;
}

FeatureGrid low_band(const FeatureGrid& pixel, std::size_t patch, std::size_t low) {
    if (low == 0 || low > patch) {
        fail(Errc::argument, "low band " + std::to_string(low) + " must lie in [1, " + std::to_string(patch) + "]");
    }
    if (pixel.dim() != patch * patch) fail(Errc::shape, "low_band: grid dim is not patch^2");
    FeatureGrid out(pixel.height(), pixel.width(), low * low);
    for (std::size_t c = 0; c < pixel.cells(); ++c) {
        const auto src = pixel.cell(c);
        auto dst = out.cell(c);
        for (std::size_t u = 0; u < low; ++u) {
            for (std::size_t v = 0; v < low; ++v) dst[u * low + v] = src[u * patch + v];
        }
    }
    return out;
}

FeatureGrid semantic_proxy_features(const GrayImage& img, const PatchSpec& spec, std::size_t low) {
    if (low == 0 || low > spec.patch) {
        fail(Errc::argument, "low band " + std::to_string(low) + " must lie in [1, " + std::to_string(spec.patch) + "]");
    }
    return low_band(pixel_features(img, spec), spec.patch, low);
}

FeatureGrid embed_low_band(const FeatureGrid& low_features, std::size_t patch) {
    const auto low = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(low_features.dim()))));
    if (low * low != low_features.dim() || low > patch) {
        fail(Errc::shape, "embed_low_band: cell dim is not a square no larger than patch^2");
    }
    FeatureGrid out(low_features.height(), low_features.width(), patch * patch);
    for (std::size_t c = 0; c < low_features.cells(); ++c) {
        const auto src = low_features.cell(c);
        auto dst = out.cell(c);
        for (std::size_t u = 0; u < low; ++u) {
            for (std::size_t v = 0; v < low; ++v) dst[u * patch + v] = src[u * low + v];
        }
    }
    return out;
}

GrayImage reconstruct_image(const FeatureGrid& pix, const PatchSpec& spec) {
    spec.validate();
    const std::size_t p = spec.patch;
    if (pix.dim() != p * p) {
        fail(Errc::shape, "reconstruct_image: cell dim " + std::to_string(pix.dim()) + " is not patch^2 = " +
                              std::to_string(p * p));
    }
    const Dct2d dct(p);
    const std::size_t width = pix.width() * p;
    std::vector<float> data(pix.height() * p * width);
    std::vector<float> block(p * p);
    for (std::size_t gr = 0; gr < pix.height(); ++gr) {
        for (std::size_t gc = 0; gc < pix.width(); ++gc) {
            dct.inverse(pix.cell(gr * pix.width() + gc), block);
            for (std::size_t y = 0; y < p; ++y) {
                for (std::size_t x = 0; x < p; ++x) {
                    data[(gr * p + y) * width + gc * p + x] = std::clamp(block[y * p + x], 0.0f, 1.0f);
                }
            }
        }
    }
    return GrayImage(pix.height() * p, width, std::move(data));
}

}  // namespace sghc
