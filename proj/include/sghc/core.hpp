#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sghc/error.hpp"

namespace sghc {

using Index = std::uint32_t;

// Row-major float matrix. Rows are code vectors or sample vectors.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<const float> row(std::size_t r) const {
        return {values_.data() + r * cols_, cols_};
    }
    std::span<float> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }

    std::span<const float> values() const noexcept { return values_; }
    std::span<float> values() noexcept { return values_; }

    // Appends one row; the first append on an empty 0x0 matrix fixes cols.
    void append_row(std::span<const float> v);

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> values_;
};

// h x w grid of d-dimensional feature vectors, row-major, cell-major.
class FeatureGrid {
public:
    FeatureGrid() = default;
    FeatureGrid(std::size_t height, std::size_t width, std::size_t dim);
    FeatureGrid(std::size_t height, std::size_t width, std::size_t dim, std::vector<float> data);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t cells() const noexcept { return height_ * width_; }

    std::span<const float> cell(std::size_t index) const {
        return {data_.data() + index * dim_, dim_};
    }
    std::span<float> cell(std::size_t index) { return {data_.data() + index * dim_, dim_}; }
    std::span<const float> cell(std::size_t r, std::size_t c) const { return cell(r * width_ + c); }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    // View of the cells as a (cells x dim) sample matrix (copy).
    Matrix to_matrix() const;

    bool operator==(const FeatureGrid&) const = default;

private:
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

// Code vectors plus the exponential-moving-average accumulators that train them.
struct EmaCodebook {
    Matrix vectors;
    std::vector<float> cluster_size;
    Matrix ema_sum;

    EmaCodebook() = default;
    explicit EmaCodebook(Matrix initial);
    EmaCodebook(Matrix vectors, std::vector<float> cluster_size, Matrix ema_sum);

    std::size_t size() const noexcept { return vectors.rows(); }
    std::size_t dim() const noexcept { return vectors.cols(); }

    // Throws on non-finite values, negative sizes or inconsistent shapes.
    void validate() const;

    bool operator==(const EmaCodebook&) const = default;
};

using PixelSubCodebook = EmaCodebook;

class SemanticCodebook {
public:
    SemanticCodebook(Matrix vectors, float momentum);
    SemanticCodebook(EmaCodebook state, float momentum, bool frozen);

    std::size_t k() const noexcept { return state_.size(); }
    std::size_t dim() const noexcept { return state_.dim(); }
    const Matrix& vectors() const noexcept { return state_.vectors; }
    const EmaCodebook& state() const noexcept { return state_; }
    float momentum() const noexcept { return momentum_; }
    bool frozen() const noexcept { return frozen_; }

    // Training access; throws Errc::frozen once the codebook is frozen.
    EmaCodebook& mutable_state();
    void freeze() noexcept { frozen_ = true; }

    bool operator==(const SemanticCodebook&) const = default;

private:
    EmaCodebook state_;
    float momentum_;
    bool frozen_ = false;
};

// Semantic codebook of K codes; code i owns pixel sub-codebook i of m codes.
class HierarchicalCodebook {
public:
    HierarchicalCodebook(SemanticCodebook semantic, std::vector<PixelSubCodebook> subs, float momentum);

    // Frozen semantic part plus K zero sub-codebooks of shape m x dim_pix.
    static HierarchicalCodebook with_empty_subs(SemanticCodebook semantic, std::size_t m,
                                                std::size_t dim_pix);

    std::size_t k() const noexcept { return semantic_.k(); }
    std::size_t m() const noexcept { return m_; }
    std::size_t dim_sem() const noexcept { return semantic_.dim(); }
    std::size_t dim_pix() const noexcept { return dim_pix_; }
    std::size_t vocab_size() const noexcept { return k() * m_; }
    float momentum() const noexcept { return momentum_; }

    const SemanticCodebook& semantic() const noexcept { return semantic_; }
    const PixelSubCodebook& sub(std::size_t i) const { return subs_.at(i); }
    const std::vector<PixelSubCodebook>& subs() const noexcept { return subs_; }

    bool operator==(const HierarchicalCodebook&) const = default;

private:
    SemanticCodebook semantic_;
    std::vector<PixelSubCodebook> subs_;
    float momentum_;
    std::size_t m_ = 0;
    std::size_t dim_pix_ = 0;
};

struct CodePair {
    Index semantic;
    Index pixel;
    bool operator==(const CodePair&) const = default;
};

// h = i * m + j
Index flatten_index(Index i, Index j, Index m);
CodePair unflatten_index(Index h, Index m);

// Per-cell (semantic index, pixel sub-index, flat index) with flat == sem * m + pix.
class TokenGrid {
public:
    TokenGrid(std::size_t height, std::size_t width, Index m, std::vector<Index> sem_idx,
              std::vector<Index> pix_idx);
    static TokenGrid from_flat(std::size_t height, std::size_t width, Index m,
                               std::vector<Index> flat_idx);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t cells() const noexcept { return height_ * width_; }
    Index m() const noexcept { return m_; }

    std::span<const Index> sem_idx() const noexcept { return sem_; }
    std::span<const Index> pix_idx() const noexcept { return pix_; }
    std::span<const Index> flat_idx() const noexcept { return flat_; }

    bool operator==(const TokenGrid&) const = default;

private:
    TokenGrid() = default;

    std::size_t height_ = 0;
    std::size_t width_ = 0;
    Index m_ = 0;
    std::vector<Index> sem_;
    std::vector<Index> pix_;
    std::vector<Index> flat_;
};

// Per cell: sem vector followed by pix vector.
FeatureGrid concat_features(const FeatureGrid& sem, const FeatureGrid& pix);

bool all_finite(std::span<const float> values) noexcept;

}  // namespace sghc
