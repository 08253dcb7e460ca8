#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sghc/core.hpp"

namespace sghc {

inline constexpr std::string_view kImStart = "<|im_start|>";
inline constexpr std::string_view kImEnd = "<|im_end|>";
inline constexpr std::string_view kStartOfImage = "<start_of_image>";
inline constexpr std::string_view kEndOfImage = "<end_of_image>";

enum class AtomKind { text, image, im_start, im_end, start_image, end_image };

struct Atom {
    AtomKind kind = AtomKind::text;
    Index code = 0;     // image atoms only
    std::string text;   // text atoms only

    static Atom image(Index h) { return {AtomKind::image, h, {}}; }
    static Atom chunk(std::string s) { return {AtomKind::text, 0, std::move(s)}; }
    static Atom special(AtomKind k) { return {k, 0, {}}; }

    bool operator==(const Atom&) const = default;
};

// Token atoms in which every image atom sits inside a balanced, non-nested
// delimiter pair (<|im_start|> ... <|im_end|> or <start_of_image> ... <end_of_image>).
// Text atoms may only appear outside the pairs.
class VocabFrame {
public:
    explicit VocabFrame(std::vector<Atom> atoms);

    std::span<const Atom> atoms() const noexcept { return atoms_; }
    std::size_t size() const noexcept { return atoms_.size(); }

    bool operator==(const VocabFrame&) const = default;

private:
    std::vector<Atom> atoms_;
};

enum class FrameMode { understanding, generation };

// "<IMG_h>" with decimal h, 0-based, no padding.
std::string token_string(Index h, std::size_t vocab_size);
Index parse_token(std::string_view token, std::size_t vocab_size);

// Row-major flat indices wrapped in <|im_start|>/<|im_end|> (understanding)
// or <start_of_image>/<end_of_image> (generation).
VocabFrame frame_image(const TokenGrid& tokens, FrameMode mode);

// Inverse of frame_image for a height x width grid.
TokenGrid parse_frame(const VocabFrame& frame, std::size_t height, std::size_t width, Index m);

std::string frame_to_text(const VocabFrame& frame);
VocabFrame frame_from_text(std::string_view text, std::size_t vocab_size);

// Row h = semantic.vectors[h / m] ++ subs[h / m].vectors[h % m]. Columns
// [0, d_sem) are the semantic block and [d_sem, d_sem + d_pix) the pixel block.
Matrix export_embedding_table(const HierarchicalCodebook& hier);

// ID layout appended after a text vocabulary of size V:
//   V: <|im_start|>, V+1: <|im_end|>, V+2: <start_of_image>, V+3: <end_of_image>,
//   V+4+h: <IMG_h>.
class VocabLayout {
public:
    VocabLayout(std::uint32_t text_vocab, std::uint32_t image_vocab);

    std::uint32_t text_vocab() const noexcept { return text_vocab_; }
    std::uint32_t image_vocab() const noexcept { return image_vocab_; }
    std::uint32_t special_id(AtomKind kind) const;
    std::uint32_t image_id(Index h) const;
    std::uint32_t image_base() const noexcept { return text_vocab_ + 4; }
    std::uint64_t total() const noexcept { return std::uint64_t{text_vocab_} + 4 + image_vocab_; }

private:
    std::uint32_t text_vocab_;
    std::uint32_t image_vocab_;
};

struct UnifiedStream {
    std::vector<std::uint32_t> ids;
    std::vector<std::uint8_t> image_mask;  // 1 where ids[i] is an image code
};

// Text ids followed by each frame in order.
UnifiedStream assemble_stream(std::span<const std::uint32_t> text_ids, std::span<const VocabFrame> frames,
                              const VocabLayout& layout);

struct StreamParts {
    std::vector<std::uint32_t> text_ids;
    std::vector<VocabFrame> frames;
};

StreamParts invert_stream(std::span<const std::uint32_t> ids, const VocabLayout& layout);

}  // namespace sghc
