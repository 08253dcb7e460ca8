#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sghc/core.hpp"

namespace sghc {

// Binary layouts (all fields little-endian):
//
//   SGHC codebook: "SGHC" u32 version=1, u32 K, u32 m, u32 d_sem, u32 d_pix,
//                  f32 momentum, u8 frozen, then semantic vectors (K*d_sem f32),
//                  semantic cluster sizes (K f32), semantic ema sums (K*d_sem f32),
//                  then K blocks of (m*d_pix vectors, m sizes, m*d_pix sums).
//   SGHF grid:     "SGHF" u32 version=1, u32 height, u32 width, u32 dim,
//                  height*width*dim f32 row-major.
//   SGID ids:      "SGID" u32 length, length x u32.

inline constexpr std::uint32_t kFormatVersion = 1;

enum class ParseFailure { bad_magic, version_mismatch, truncated, inconsistent };

class ParseError : public Error {
public:
    ParseError(ParseFailure reason, const std::string& message)
        : Error(Errc::parse, message), reason_(reason) {}
    ParseFailure reason() const noexcept { return reason_; }

private:
    ParseFailure reason_;
};

std::vector<std::byte> encode_codebook(const HierarchicalCodebook& cb);
HierarchicalCodebook decode_codebook(std::span<const std::byte> bytes);

std::vector<std::byte> encode_feature_grid(const FeatureGrid& grid);
FeatureGrid decode_feature_grid(std::span<const std::byte> bytes);

std::vector<std::byte> encode_id_stream(std::span<const std::uint32_t> ids);
std::vector<std::uint32_t> decode_id_stream(std::span<const std::byte> bytes);

void save_codebook(const HierarchicalCodebook& cb, const std::filesystem::path& path);
HierarchicalCodebook load_codebook(const std::filesystem::path& path);

void save_feature_grid(const FeatureGrid& grid, const std::filesystem::path& path);
FeatureGrid load_feature_grid(const std::filesystem::path& path);

void save_id_stream(std::span<const std::uint32_t> ids, const std::filesystem::path& path);
std::vector<std::uint32_t> load_id_stream(const std::filesystem::path& path);

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

// FNV-1a 64 over the serialized semantic block (K, d_sem, frozen flag, vectors,
// cluster sizes, ema sums). Momentum is excluded: it is a training
// hyperparameter, not part of the learned code space.
std::uint64_t semantic_digest(const SemanticCodebook& cb);

std::uint64_t fnv1a64(std::span<const std::byte> bytes) noexcept;

}  // namespace sghc
