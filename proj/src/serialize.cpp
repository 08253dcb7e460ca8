#include "sghc/serialize.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>

namespace sghc {

namespace {

constexpr std::string_view kCodebookMagic = "SGHC";
constexpr std::string_view kGridMagic = "SGHF";
constexpr std::string_view kIdMagic = "SGID";

class ByteWriter {
public:
    void magic(std::string_view tag) {
        for (char c : tag) out_.push_back(static_cast<std::byte>(c));
    }
    void u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }
    void u32(std::uint32_t v) {
        for (int shift = 0; shift < 32; shift += 8) out_.push_back(static_cast<std::byte>((v >> shift) & 0xFFu));
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void floats(std::span<const float> vs) {
        for (float v : vs) f32(v);
    }
    std::vector<std::byte> take() { return std::move(out_); }

private:
    std::vector<std::byte> out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

    void expect_magic(std::string_view tag) {
        if (in_.size() < tag.size()) throw ParseError(ParseFailure::truncated, "truncated payload: no magic");
        for (std::size_t i = 0; i < tag.size(); ++i) {
            if (static_cast<char>(in_[i]) != tag[i]) {
                throw ParseError(ParseFailure::bad_magic,
                                 "bad magic: expected \"" + std::string(tag) + "\"");
            }
        }
        pos_ = tag.size();
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(in_[pos_++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::vector<float> floats(std::size_t n) {
        need(n * 4);
        std::vector<float> out(n);
        for (auto& v : out) v = f32();
        return out;
    }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw ParseError(ParseFailure::truncated, "truncated payload");
    }

    std::span<const std::byte> in_;
    std::size_t pos_ = 0;
};

void write_block(ByteWriter& w, const EmaCodebook& cb) {
    w.floats(cb.vectors.values());
    w.floats(cb.cluster_size);
    w.floats(cb.ema_sum.values());
}

EmaCodebook read_block(ByteReader& r, std::size_t rows, std::size_t cols) {
    Matrix vectors(rows, cols, r.floats(rows * cols));
    std::vector<float> sizes = r.floats(rows);
    Matrix sums(rows, cols, r.floats(rows * cols));
    try {
        return EmaCodebook(std::move(vectors), std::move(sizes), std::move(sums));
    } catch (const Error& e) {
        throw ParseError(ParseFailure::inconsistent, std::string("inconsistent codebook block: ") + e.what());
    }
}

void check_version(std::uint32_t version) {
    if (version != kFormatVersion) {
        throw ParseError(ParseFailure::version_mismatch,
                         "version mismatch: file has " + std::to_string(version) + ", expected " +
                             std::to_string(kFormatVersion));
    }
}

}  // namespace

std::vector<std::byte> encode_codebook(const HierarchicalCodebook& cb) {
    ByteWriter w;
    w.magic(kCodebookMagic);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(cb.k()));
    w.u32(static_cast<std::uint32_t>(cb.m()));
    w.u32(static_cast<std::uint32_t>(cb.dim_sem()));
    w.u32(static_cast<std::uint32_t>(cb.dim_pix()));
    w.f32(cb.momentum());
    w.u8(cb.semantic().frozen() ? 1 : 0);
    write_block(w, cb.semantic().state());
    for (const auto& sub : cb.subs()) write_block(w, sub);
    return w.take();
}

HierarchicalCodebook decode_codebook(std::span<const std::byte> bytes) {
    ByteReader r(bytes);
    r.expect_magic(kCodebookMagic);
    check_version(r.u32());
    const std::size_t k = r.u32();
    const std::size_t m = r.u32();
    const std::size_t d_sem = r.u32();
    const std::size_t d_pix = r.u32();
    const float momentum = r.f32();
    const std::uint8_t frozen = r.u8();
    if (k == 0 || m == 0 || d_sem == 0 || d_pix == 0) {
        throw ParseError(ParseFailure::inconsistent, "inconsistent dimensions: zero-sized header field");
    }
    if (!(momentum > 0.0f && momentum < 1.0f)) {
        throw ParseError(ParseFailure::inconsistent, "inconsistent header: momentum outside (0, 1)");
    }
    if (frozen > 1) throw ParseError(ParseFailure::inconsistent, "inconsistent header: frozen flag not 0/1");

    EmaCodebook sem_state = read_block(r, k, d_sem);

    // A short file that ends exactly on a sub-codebook boundary declares more
    // blocks than it holds; anything else that runs out is plain truncation.
    const std::size_t block_bytes = 4 * (2 * m * d_pix + m);
    const std::size_t expected = block_bytes * k;
    if (r.remaining() != expected) {
        if (r.remaining() % block_bytes == 0) {
            throw ParseError(ParseFailure::inconsistent,
                             "inconsistent dimensions: header declares k=" + std::to_string(k) +
                                 " but file holds " + std::to_string(r.remaining() / block_bytes) +
                                 " sub-codebooks");
        }
        if (r.remaining() < expected) throw ParseError(ParseFailure::truncated, "truncated payload");
        throw ParseError(ParseFailure::inconsistent, "inconsistent dimensions: trailing bytes after payload");
    }
    std::vector<PixelSubCodebook> subs;
    subs.reserve(k);
    for (std::size_t i = 0; i < k; ++i) subs.push_back(read_block(r, m, d_pix));

    try {
        SemanticCodebook semantic(std::move(sem_state), momentum, frozen == 1);
        return HierarchicalCodebook(std::move(semantic), std::move(subs), momentum);
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(ParseFailure::inconsistent, std::string("inconsistent codebook: ") + e.what());
    }
}

std::vector<std::byte> encode_feature_grid(const FeatureGrid& grid) {
    ByteWriter w;
    w.magic(kGridMagic);
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(grid.height()));
    w.u32(static_cast<std::uint32_t>(grid.width()));
    w.u32(static_cast<std::uint32_t>(grid.dim()));
    w.floats(grid.data());
    return w.take();
}

FeatureGrid decode_feature_grid(std::span<const std::byte> bytes) {
    ByteReader r(bytes);
    r.expect_magic(kGridMagic);
    check_version(r.u32());
    const std::size_t h = r.u32();
    const std::size_t w = r.u32();
    const std::size_t d = r.u32();
    if (h == 0 || w == 0 || d == 0) {
        throw ParseError(ParseFailure::inconsistent, "inconsistent dimensions: zero-sized header field");
    }
    const std::size_t n = h * w * d;
    if (r.remaining() < n * 4) throw ParseError(ParseFailure::truncated, "truncated payload");
    if (r.remaining() > n * 4) {
        throw ParseError(ParseFailure::inconsistent, "inconsistent dimensions: trailing bytes after payload");
    }
    std::vector<float> data = r.floats(n);
    if (!all_finite(data)) throw ParseError(ParseFailure::inconsistent, "feature grid holds non-finite values");
    return FeatureGrid(h, w, d, std::move(data));
}

std::vector<std::byte> encode_id_stream(std::span<const std::uint32_t> ids) {
    ByteWriter w;
    w.magic(kIdMagic);
    w.u32(static_cast<std::uint32_t>(ids.size()));
    for (auto id : ids) w.u32(id);
    return w.take();
}

std::vector<std::uint32_t> decode_id_stream(std::span<const std::byte> bytes) {
    ByteReader r(bytes);
    r.expect_magic(kIdMagic);
    const std::size_t n = r.u32();
    if (r.remaining() < n * 4) throw ParseError(ParseFailure::truncated, "truncated payload");
    if (r.remaining() > n * 4) {
        throw ParseError(ParseFailure::inconsistent, "inconsistent length: trailing bytes after payload");
    }
    std::vector<std::uint32_t> ids(n);
    for (auto& id : ids) id = r.u32();
    return ids;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::io, "cannot open " + path.string());
    std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::vector<std::byte> out(raw.size());
    std::memcpy(out.data(), raw.data(), raw.size());
    return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::io, "write failed for " + path.string());
}

void save_codebook(const HierarchicalCodebook& cb, const std::filesystem::path& path) {
    write_file(path, encode_codebook(cb));
}

HierarchicalCodebook load_codebook(const std::filesystem::path& path) {
    return decode_codebook(read_file(path));
}

void save_feature_grid(const FeatureGrid& grid, const std::filesystem::path& path) {
    write_file(path, encode_feature_grid(grid));
}

FeatureGrid load_feature_grid(const std::filesystem::path& path) {
    return decode_feature_grid(read_file(path));
}

void save_id_stream(std::span<const std::uint32_t> ids, const std::filesystem::path& path) {
    write_file(path, encode_id_stream(ids));
}

std::vector<std::uint32_t> load_id_stream(const std::filesystem::path& path) {
    return decode_id_stream(read_file(path));
}

std::uint64_t fnv1a64(std::span<const std::byte> bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (auto b : bytes) {
        h ^= static_cast<std::uint64_t>(b);
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t semantic_digest(const SemanticCodebook& cb) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(cb.k()));
    w.u32(static_cast<std::uint32_t>(cb.dim()));
    w.u8(cb.frozen() ? 1 : 0);
    write_block(w, cb.state());
    const auto bytes = w.take();
    return fnv1a64(bytes);
}

}  // namespace sghc
