#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sghc {

// Every failure raised by the library carries one of these codes. The CLI
// prints the code name verbatim so scripts can match on it.
enum class Errc {
    shape,       // grid / vector dimensions disagree
    range,       // index outside its valid interval
    argument,    // bad parameter value
    domain,      // NaN/Inf input or zero vector where a direction is required
    parse,       // malformed file or token text
    frozen,      // attempt to train a frozen codebook
    contract,    // stage ordering violated (pixel training on unfrozen semantic codebook)
    data,        // empty or inconsistent training data
    init,        // codebook initialization impossible
    frame,       // malformed token frame
    config,      // inconsistent vocabulary layout
    format,      // unsupported image format
    degenerate,  // statistic undefined for the input (e.g. zero global variance)
    io,          // filesystem failure
};

constexpr std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::shape: return "shape";
        case Errc::range: return "range";
        case Errc::argument: return "argument";
        case Errc::domain: return "domain";
        case Errc::parse: return "parse";
        case Errc::frozen: return "frozen";
        case Errc::contract: return "contract";
        case Errc::data: return "data";
        case Errc::init: return "init";
        case Errc::frame: return "frame";
        case Errc::config: return "config";
        case Errc::format: return "format";
        case Errc::degenerate: return "degenerate";
        case Errc::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace sghc
