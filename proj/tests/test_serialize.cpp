#include "doctest.h"

#include <cstring>

#include "sghc/serialize.hpp"
#include "support.hpp"

using namespace sghc;

namespace {

HierarchicalCodebook small_codebook(std::size_t k, std::size_t m, std::size_t d_sem, std::size_t d_pix,
                                    std::uint64_t seed) {
    EmaCodebook sem(fixtures::random_matrix(k, d_sem, seed), std::vector<float>(k, 1.5f),
                    fixtures::random_matrix(k, d_sem, seed + 1));
    std::vector<PixelSubCodebook> subs;
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<float> sizes(m);
        for (std::size_t j = 0; j < m; ++j) sizes[j] = static_cast<float>(i + j) * 0.25f;
        subs.emplace_back(fixtures::random_matrix(m, d_pix, seed + 10 + i), sizes,
                          fixtures::random_matrix(m, d_pix, seed + 100 + i));
    }
    return HierarchicalCodebook(SemanticCodebook(std::move(sem), 0.97f, true), std::move(subs), 0.97f);
}

ParseFailure failure_of(std::span<const std::byte> bytes) {
    try {
        decode_codebook(bytes);
    } catch (const ParseError& e) {
        CHECK(e.code() == Errc::parse);
        return e.reason();
    }
    FAIL("expected a parse error");
    return ParseFailure::inconsistent;
}

std::string message_of(std::span<const std::byte> bytes) {
    try {
        decode_codebook(bytes);
    } catch (const ParseError& e) {
        return e.what();
    }
    return {};
}

void put_u32(std::vector<std::byte>& bytes, std::size_t offset, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) bytes[offset + b] = static_cast<std::byte>((v >> (8 * b)) & 0xFF);
}

}  // namespace

TEST_CASE("codebook round trip is bit exact") {
    const auto cb = small_codebook(4, 2, 3, 2, 7);
    const auto bytes = encode_codebook(cb);
    CHECK(bytes.size() == 29 + 4 * (4 * 3 * 2 + 4) + 4 * 4 * (2 * 2 * 2 + 2));
    const auto back = decode_codebook(bytes);
    CHECK(back == cb);
    CHECK(encode_codebook(back) == bytes);

    const auto dir = fixtures::scratch_dir("serialize");
    save_codebook(cb, dir / "cb.sghc");
    CHECK(read_file(dir / "cb.sghc") == bytes);
    CHECK(load_codebook(dir / "cb.sghc") == cb);
}

TEST_CASE("codebook header layout is little-endian and fixed") {
    const auto cb = small_codebook(4, 2, 3, 2, 1);
    const auto bytes = encode_codebook(cb);
    CHECK(std::memcmp(bytes.data(), "SGHC", 4) == 0);
    auto u32_at = [&](std::size_t off) {
        std::uint32_t v = 0;
        for (int b = 0; b < 4; ++b) v |= std::to_integer<std::uint32_t>(bytes[off + b]) << (8 * b);
        return v;
    };
    CHECK(u32_at(4) == 1);
    CHECK(u32_at(8) == 4);
    CHECK(u32_at(12) == 2);
    CHECK(u32_at(16) == 3);
    CHECK(u32_at(20) == 2);
    float momentum = 0.0f;
    const std::uint32_t bits = u32_at(24);
    std::memcpy(&momentum, &bits, 4);
    CHECK(momentum == 0.97f);
    CHECK(std::to_integer<int>(bytes[28]) == 1);
    float first = 0.0f;
    const std::uint32_t first_bits = u32_at(29);
    std::memcpy(&first, &first_bits, 4);
    CHECK(first == cb.semantic().vectors().row(0)[0]);
}

TEST_CASE("malformed codebook files fail with distinct reasons") {
    const auto cb = small_codebook(4, 2, 3, 2, 3);
    const auto good = encode_codebook(cb);

    auto bad_magic = good;
    std::memcpy(bad_magic.data(), "XXXX", 4);
    CHECK(failure_of(bad_magic) == ParseFailure::bad_magic);
    CHECK(message_of(bad_magic).find("bad magic") != std::string::npos);

    auto bad_version = good;
    put_u32(bad_version, 4, 2);
    CHECK(failure_of(bad_version) == ParseFailure::version_mismatch);

    const std::vector<std::byte> truncated(good.begin(), good.begin() + 40);
    CHECK(failure_of(truncated) == ParseFailure::truncated);
    const std::vector<std::byte> header_only(good.begin(), good.begin() + 10);
    CHECK(failure_of(header_only) == ParseFailure::truncated);

    // Header declares k=4 but only three sub-codebook blocks follow.
    const std::size_t sub_block = 4 * (2 * 2 * 2 + 2);
    const std::vector<std::byte> three_subs(good.begin(), good.end() - static_cast<std::ptrdiff_t>(sub_block));
    CHECK(failure_of(three_subs) == ParseFailure::inconsistent);
    CHECK(message_of(three_subs).find("3 sub-codebooks") != std::string::npos);

    auto trailing = good;
    trailing.push_back(std::byte{0});
    CHECK(failure_of(trailing) == ParseFailure::inconsistent);

    auto zero_m = good;
    put_u32(zero_m, 12, 0);
    CHECK(failure_of(zero_m) == ParseFailure::inconsistent);

    auto negative_size = good;
    const float minus = -1.0f;
    std::uint32_t minus_bits = 0;
    std::memcpy(&minus_bits, &minus, 4);
    put_u32(negative_size, 29 + 4 * 4 * 3, minus_bits);
    CHECK(failure_of(negative_size) == ParseFailure::inconsistent);
}

TEST_CASE("feature grid files round trip") {
    const auto grid = fixtures::random_grid(3, 5, 7, 11);
    const auto bytes = encode_feature_grid(grid);
    CHECK(bytes.size() == 20 + 3 * 5 * 7 * 4);
    CHECK(std::memcmp(bytes.data(), "SGHF", 4) == 0);
    CHECK(decode_feature_grid(bytes) == grid);

    auto wrong = bytes;
    std::memcpy(wrong.data(), "SGHC", 4);
    CHECK_THROWS_AS(decode_feature_grid(wrong), ParseError);
    const std::vector<std::byte> cut(bytes.begin(), bytes.end() - 1);
    CHECK_THROWS_AS(decode_feature_grid(cut), ParseError);
}

TEST_CASE("id streams round trip") {
    const std::vector<std::uint32_t> ids{5, 9, 100, 105, 101, 0xFFFFFFFFu};
    const auto bytes = encode_id_stream(ids);
    CHECK(bytes.size() == 8 + ids.size() * 4);
    CHECK(std::memcmp(bytes.data(), "SGID", 4) == 0);
    CHECK(decode_id_stream(bytes) == ids);
    CHECK(decode_id_stream(encode_id_stream({})).empty());
    const std::vector<std::byte> cut(bytes.begin(), bytes.end() - 2);
    CHECK_THROWS_AS(decode_id_stream(cut), ParseError);
}

TEST_CASE("semantic digest tracks semantic content only") {
    const auto a = small_codebook(4, 2, 3, 2, 5);
    auto b_subs = a.subs();
    b_subs[1].vectors.row(0)[0] += 1.0f;
    const HierarchicalCodebook b(a.semantic(), b_subs, 0.5f);
    CHECK(semantic_digest(a.semantic()) == semantic_digest(b.semantic()));

    EmaCodebook changed = a.semantic().state();
    changed.vectors.row(2)[1] = std::nextafter(changed.vectors.row(2)[1], 10.0f);
    const SemanticCodebook c(changed, a.semantic().momentum(), true);
    CHECK(semantic_digest(c) != semantic_digest(a.semantic()));
}

TEST_CASE("fnv1a64 matches published vectors") {
    CHECK(fnv1a64({}) == 0xcbf29ce484222325ull);
    const std::string a = "a";
    CHECK(fnv1a64(std::as_bytes(std::span(a))) == 0xaf63dc4c8601ec8cull);
}
