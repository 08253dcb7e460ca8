#include "sghc/vocab.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <limits>

#include "sghc/quantizer.hpp"

namespace sghc {

namespace {

constexpr std::string_view kImgPrefix = "<IMG_";

bool opens(AtomKind k) { return k == AtomKind::im_start || k == AtomKind::start_image; }
bool closes(AtomKind k) { return k == AtomKind::im_end || k == AtomKind::end_image; }

AtomKind closer_for(AtomKind open) {
    return open == AtomKind::im_start ? AtomKind::im_end : AtomKind::end_image;
}

std::string_view special_text(AtomKind k) {
    switch (k) {
        case AtomKind::im_start: return kImStart;
        case AtomKind::im_end: return kImEnd;
        case AtomKind::start_image: return kStartOfImage;
        case AtomKind::end_image: return kEndOfImage;
        default: return {};
    }
}

void check_range(Index h, std::size_t vocab_size) {
    if (h >= vocab_size) {
        fail(Errc::range, "image token " + std::to_string(h) + " outside vocabulary of " + std::to_string(vocab_size));
    }
}

}  // namespace

VocabFrame::VocabFrame(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    bool inside = false;
    AtomKind expected_close = AtomKind::end_image;
    for (const auto& a : atoms_) {
        if (opens(a.kind)) {
            if (inside) fail(Errc::frame, "frame: nested delimiter pair");
            inside = true;
            expected_close = closer_for(a.kind);
        } else if (closes(a.kind)) {
            if (!inside || a.kind != expected_close) fail(Errc::frame, "frame: unbalanced delimiters");
            inside = false;
        } else if (a.kind == AtomKind::image) {
            if (!inside) fail(Errc::frame, "frame: image token outside a delimiter pair");
        } else if (inside) {
            fail(Errc::frame, "frame: text inside an image segment");
        }
    }
    if (inside) fail(Errc::frame, "frame: unbalanced delimiters (missing closing token)");
}

std::string token_string(Index h, std::size_t vocab_size) {
    check_range(h, vocab_size);
    return std::string(kImgPrefix) + std::to_string(h) + ">";
}

Index parse_token(std::string_view token, std::size_t vocab_size) {
    if (!token.starts_with(kImgPrefix) || !token.ends_with(">") || token.size() <= kImgPrefix.size() + 1) {
        fail(Errc::parse, "malformed image token \"" + std::string(token) + "\"");
    }
    const std::string_view digits = token.substr(kImgPrefix.size(), token.size() - kImgPrefix.size() - 1);
    if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
        (digits.size() > 1 && digits.front() == '0')) {
        fail(Errc::parse, "malformed image token \"" + std::string(token) + "\"");
    }
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
    if (ec != std::errc{} || ptr != digits.data() + digits.size()) {
        fail(Errc::range, "image token \"" + std::string(token) + "\" out of range");
    }
    if (value >= vocab_size) {
        fail(Errc::range, "image token " + std::to_string(value) + " outside vocabulary of " + std::to_string(vocab_size));
    }
    return static_cast<Index>(value);
}

VocabFrame frame_image(const TokenGrid& tokens, FrameMode mode) {
    const AtomKind open = mode == FrameMode::understanding ? AtomKind::im_start : AtomKind::start_image;
    std::vector<Atom> atoms;
    atoms.reserve(tokens.cells() + 2);
    atoms.push_back(Atom::special(open));
    for (Index h : tokens.flat_idx()) atoms.push_back(Atom::image(h));
    atoms.push_back(Atom::special(closer_for(open)));
    return VocabFrame(std::move(atoms));
}

TokenGrid parse_frame(const VocabFrame& frame, std::size_t height, std::size_t width, Index m) {
    std::size_t pairs = 0;
    std::vector<Index> flat;
    for (const auto& a : frame.atoms()) {
        if (opens(a.kind)) ++pairs;
        if (a.kind == AtomKind::image) flat.push_back(a.code);
    }
    if (pairs != 1) {
        fail(Errc::frame, "frame: expected exactly one image segment, found " + std::to_string(pairs));
    }
    if (flat.size() != height * width) {
        fail(Errc::frame, "frame: " + std::to_string(flat.size()) + " image tokens for a " + std::to_string(height) +
                              "x" + std::to_string(width) + " grid");
    }
    return TokenGrid::from_flat(height, width, m, std::move(flat));
}

std::string frame_to_text(const VocabFrame& frame) {
    std::string out;
    for (const auto& a : frame.atoms()) {
        switch (a.kind) {
            case AtomKind::text: out += a.text; break;
            case AtomKind::image: out += std::string(kImgPrefix) + std::to_string(a.code) + ">"; break;
            default: out += special_text(a.kind); break;
        }
    }
    return out;
}

VocabFrame frame_from_text(std::string_view text, std::size_t vocab_size) {
    static constexpr std::array<AtomKind, 4> specials{AtomKind::im_start, AtomKind::im_end, AtomKind::start_image,
                                                      AtomKind::end_image};
    std::vector<Atom> atoms;
    std::string pending;
    auto flush = [&] {
        if (!pending.empty()) atoms.push_back(Atom::chunk(std::move(pending)));
        pending.clear();
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const std::string_view rest = text.substr(i);
        bool matched = false;
        for (AtomKind k : specials) {
            if (rest.starts_with(special_text(k))) {
                flush();
                atoms.push_back(Atom::special(k));
                i += special_text(k).size();
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (rest.starts_with(kImgPrefix)) {
            const auto close = rest.find('>');
            if (close != std::string_view::npos) {
                const std::string_view token = rest.substr(0, close + 1);
                flush();
                atoms.push_back(Atom::image(parse_token(token, vocab_size)));
                i += token.size();
                continue;
            }
        }
        // Whitespace between tokens is not content.
        if (text[i] != '\n' && text[i] != '\r') pending.push_back(text[i]);
        ++i;
    }
    flush();
    return VocabFrame(std::move(atoms));
}

Matrix export_embedding_table(const HierarchicalCodebook& hier) {
    const std::size_t d_sem = hier.dim_sem();
    const std::size_t d = d_sem + hier.dim_pix();
    Matrix table(hier.vocab_size(), d);
    for (std::size_t i = 0; i < hier.k(); ++i) {
        const auto sem = hier.semantic().vectors().row(i);
        for (std::size_t j = 0; j < hier.m(); ++j) {
            auto row = table.row(i * hier.m() + j);
            const auto pix = hier.sub(i).vectors.row(j);
            std::copy(sem.begin(), sem.end(), row.begin());
            std::copy(pix.begin(), pix.end(), row.begin() + static_cast<std::ptrdiff_t>(d_sem));
        }
    }
    return table;
}

VocabLayout::VocabLayout(std::uint32_t text_vocab, std::uint32_t image_vocab)
    : text_vocab_(text_vocab), image_vocab_(image_vocab) {
    if (total() > std::numeric_limits<std::uint32_t>::max()) {
        fail(Errc::config, "vocabulary layout exceeds the 32-bit id range");
    }
}

std::uint32_t VocabLayout::special_id(AtomKind kind) const {
    switch (kind) {
        case AtomKind::im_start: return text_vocab_;
        case AtomKind::im_end: return text_vocab_ + 1;
        case AtomKind::start_image: return text_vocab_ + 2;
        case AtomKind::end_image: return text_vocab_ + 3;
        default: fail(Errc::argument, "special_id: not a delimiter");
    }
}

std::uint32_t VocabLayout::image_id(Index h) const {
    check_range(h, image_vocab_);
    return image_base() + h;
}

UnifiedStream assemble_stream(std::span<const std::uint32_t> text_ids, std::span<const VocabFrame> frames,
                              const VocabLayout& layout) {
    UnifiedStream out;
    for (auto id : text_ids) {
        if (id >= layout.text_vocab()) {
            fail(Errc::config, "text id " + std::to_string(id) + " overlaps the image id range starting at " +
                                   std::to_string(layout.text_vocab()));
        }
        out.ids.push_back(id);
        out.image_mask.push_back(0);
    }
    for (const auto& frame : frames) {
        for (const auto& a : frame.atoms()) {
            if (a.kind == AtomKind::text) fail(Errc::frame, "assemble_stream: text chunks have no id mapping");
            if (a.kind == AtomKind::image) {
                out.ids.push_back(layout.image_id(a.code));
                out.image_mask.push_back(1);
            } else {
                out.ids.push_back(layout.special_id(a.kind));
                out.image_mask.push_back(0);
            }
        }
    }
    return out;
}

StreamParts invert_stream(std::span<const std::uint32_t> ids, const VocabLayout& layout) {
    StreamParts out;
    std::vector<Atom> current;
    bool inside = false;
    for (auto id : ids) {
        if (id < layout.text_vocab()) {
            if (inside) fail(Errc::frame, "invert_stream: text id inside an image segment");
            out.text_ids.push_back(id);
            continue;
        }
        if (id < layout.image_base()) {
            const auto kind = static_cast<AtomKind>(static_cast<int>(AtomKind::im_start) + (id - layout.text_vocab()));
            current.push_back(Atom::special(kind));
            if (opens(kind)) {
                if (inside) fail(Errc::frame, "invert_stream: nested delimiter pair");
                inside = true;
            } else {
                if (!inside) fail(Errc::frame, "invert_stream: closing delimiter without opening");
                inside = false;
                out.frames.emplace_back(std::move(current));
                current.clear();
            }
            continue;
        }
        const std::uint64_t h = std::uint64_t{id} - layout.image_base();
        if (h >= layout.image_vocab()) fail(Errc::range, "invert_stream: id " + std::to_string(id) + " beyond vocabulary");
        if (!inside) fail(Errc::frame, "invert_stream: image id outside a delimiter pair");
        current.push_back(Atom::image(static_cast<Index>(h)));
    }
    if (inside) fail(Errc::frame, "invert_stream: unterminated image segment");
    return out;
}

}  // namespace sghc
