#include "sghc/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sghc {

bool all_finite(std::span<const float> values) noexcept {
    return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
        fail(Errc::shape, "matrix: expected " + std::to_string(rows_ * cols_) + " values, got " +
                              std::to_string(values_.size()));
    }
}

void Matrix::append_row(std::span<const float> v) {
    if (rows_ == 0 && cols_ == 0) cols_ = v.size();
    if (v.size() != cols_) {
        fail(Errc::shape, "matrix: row of dim " + std::to_string(v.size()) + " appended to matrix of dim " +
                              std::to_string(cols_));
    }
    values_.insert(values_.end(), v.begin(), v.end());
    ++rows_;
}

FeatureGrid::FeatureGrid(std::size_t height, std::size_t width, std::size_t dim)
    : FeatureGrid(height, width, dim, std::vector<float>(height * width * dim, 0.0f)) {}

FeatureGrid::FeatureGrid(std::size_t height, std::size_t width, std::size_t dim, std::vector<float> data)
    : height_(height), width_(width), dim_(dim), data_(std::move(data)) {
    if (height_ == 0 || width_ == 0 || dim_ == 0) {
        fail(Errc::shape, "feature grid: height, width and dim must be >= 1");
    }
    if (data_.size() != height_ * width_ * dim_) {
        fail(Errc::shape, "feature grid: expected " + std::to_string(height_ * width_ * dim_) +
                              " values, got " + std::to_string(data_.size()));
    }
    if (!all_finite(data_)) fail(Errc::domain, "feature grid: non-finite value");
}

Matrix FeatureGrid::to_matrix() const {
    return Matrix(cells(), dim_, data_);
}

EmaCodebook::EmaCodebook(Matrix initial)
    : vectors(std::move(initial)),
      cluster_size(vectors.rows(), 0.0f),
      ema_sum(vectors.rows(), vectors.cols()) {
    validate();
}

EmaCodebook::EmaCodebook(Matrix v, std::vector<float> sizes, Matrix sums)
    : vectors(std::move(v)), cluster_size(std::move(sizes)), ema_sum(std::move(sums)) {
    validate();
}

void EmaCodebook::validate() const {
    if (vectors.rows() == 0 || vectors.cols() == 0) fail(Errc::shape, "codebook: empty");
    if (cluster_size.size() != vectors.rows() || ema_sum.rows() != vectors.rows() ||
        ema_sum.cols() != vectors.cols()) {
        fail(Errc::shape, "codebook: accumulator shape does not match code vectors");
    }
    if (!all_finite(vectors.values()) || !all_finite(ema_sum.values()) || !all_finite(cluster_size)) {
        fail(Errc::domain, "codebook: non-finite value");
    }
    if (std::any_of(cluster_size.begin(), cluster_size.end(), [](float s) { return s < 0.0f; })) {
        fail(Errc::domain, "codebook: negative cluster size");
    }
}

namespace {

void check_momentum(float momentum) {
    if (!(momentum > 0.0f && momentum < 1.0f)) {
        fail(Errc::argument, "momentum must lie in (0, 1), got " + std::to_string(momentum));
    }
}

}  // namespace

SemanticCodebook::SemanticCodebook(Matrix vectors, float momentum)
    : SemanticCodebook(EmaCodebook(std::move(vectors)), momentum, false) {}

SemanticCodebook::SemanticCodebook(EmaCodebook state, float momentum, bool frozen)
    : state_(std::move(state)), momentum_(momentum), frozen_(frozen) {
    check_momentum(momentum_);
    state_.validate();
}

EmaCodebook& SemanticCodebook::mutable_state() {
    if (frozen_) fail(Errc::frozen, "semantic codebook is frozen");
    return state_;
}

HierarchicalCodebook::HierarchicalCodebook(SemanticCodebook semantic, std::vector<PixelSubCodebook> subs,
                                           float momentum)
    : semantic_(std::move(semantic)), subs_(std::move(subs)), momentum_(momentum) {
    check_momentum(momentum_);
    if (subs_.size() != semantic_.k()) {
        fail(Errc::shape, "hierarchical codebook: " + std::to_string(subs_.size()) +
                              " sub-codebooks for " + std::to_string(semantic_.k()) + " semantic codes");
    }
    m_ = subs_.front().size();
    dim_pix_ = subs_.front().dim();
    for (const auto& sub : subs_) {
        sub.validate();
        if (sub.size() != m_ || sub.dim() != dim_pix_) {
            fail(Errc::shape, "hierarchical codebook: sub-codebooks differ in shape");
        }
    }
    if (static_cast<unsigned long long>(semantic_.k()) * m_ > std::numeric_limits<Index>::max()) {
        fail(Errc::range, "hierarchical codebook: K*m exceeds the 32-bit index range");
    }
}

HierarchicalCodebook HierarchicalCodebook::with_empty_subs(SemanticCodebook semantic, std::size_t m,
                                                           std::size_t dim_pix) {
    if (m == 0 || dim_pix == 0) fail(Errc::argument, "sub-codebook size and dim must be >= 1");
    const float momentum = semantic.momentum();
    std::vector<PixelSubCodebook> subs(semantic.k(), PixelSubCodebook(Matrix(m, dim_pix)));
    return HierarchicalCodebook(std::move(semantic), std::move(subs), momentum);
}

Index flatten_index(Index i, Index j, Index m) {
    if (m == 0) fail(Errc::argument, "flatten_index: m must be >= 1");
    if (j >= m) {
        fail(Errc::range, "flatten_index: sub-index " + std::to_string(j) + " not below m=" + std::to_string(m));
    }
    const unsigned long long h = static_cast<unsigned long long>(i) * m + j;
    if (h > std::numeric_limits<Index>::max()) fail(Errc::range, "flatten_index: overflow");
    return static_cast<Index>(h);
}

CodePair unflatten_index(Index h, Index m) {
    if (m == 0) fail(Errc::argument, "unflatten_index: m must be >= 1");
    return {h / m, h % m};
}

TokenGrid::TokenGrid(std::size_t height, std::size_t width, Index m, std::vector<Index> sem_idx,
                     std::vector<Index> pix_idx)
    : height_(height), width_(width), m_(m), sem_(std::move(sem_idx)), pix_(std::move(pix_idx)) {
    if (height_ == 0 || width_ == 0) fail(Errc::shape, "token grid: height and width must be >= 1");
    if (sem_.size() != cells() || pix_.size() != cells()) {
        fail(Errc::shape, "token grid: index arrays do not match height*width");
    }
    flat_.resize(cells());
    for (std::size_t c = 0; c < cells(); ++c) flat_[c] = flatten_index(sem_[c], pix_[c], m_);
}

TokenGrid TokenGrid::from_flat(std::size_t height, std::size_t width, Index m, std::vector<Index> flat_idx) {
    if (height == 0 || width == 0) fail(Errc::shape, "token grid: height and width must be >= 1");
    if (flat_idx.size() != height * width) fail(Errc::shape, "token grid: flat index count mismatch");
    TokenGrid grid;
    grid.height_ = height;
    grid.width_ = width;
    grid.m_ = m;
    grid.sem_.resize(flat_idx.size());
    grid.pix_.resize(flat_idx.size());
    for (std::size_t c = 0; c < flat_idx.size(); ++c) {
        const CodePair p = unflatten_index(flat_idx[c], m);
        grid.sem_[c] = p.semantic;
        grid.pix_[c] = p.pixel;
    }
    grid.flat_ = std::move(flat_idx);
    return grid;
}

FeatureGrid concat_features(const FeatureGrid& sem, const FeatureGrid& pix) {
    if (sem.height() != pix.height() || sem.width() != pix.width()) {
        fail(Errc::shape, "concat_features: grids differ in height/width");
    }
    const std::size_t dim = sem.dim() + pix.dim();
    std::vector<float> out;
    out.reserve(sem.cells() * dim);
    for (std::size_t c = 0; c < sem.cells(); ++c) {
        const auto a = sem.cell(c);
        const auto b = pix.cell(c);
        out.insert(out.end(), a.begin(), a.end());
        out.insert(out.end(), b.begin(), b.end());
    }
    return FeatureGrid(sem.height(), sem.width(), dim, std::move(out));
}

}  // namespace sghc
