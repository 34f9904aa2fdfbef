// advpe - adversarial PE manipulation toolkit
// Shared byte-buffer aliases, little-endian field access and the error type.

#ifndef ADVPE_COMMON_HPP
#define ADVPE_COMMON_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace advpe {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

enum class ErrorCode {
    MalformedMagic,
    BadPeOffset,
    MissingPeSignature,
    TruncatedHeader,
    OverlappingSections,
    ZeroRequest,
    PeOffsetInsideDosHeader,
    PayloadLengthMismatch,
    NoSections,
    InsufficientHeaderSpace,
    LengthMismatch,
    NotDifferentiable,
    ShapeMismatch,
    DegenerateCorpus,
    NoNegatives,
    ZeroGradient,
    GeneOutOfRange,
    BudgetTooSmall,
    EmptyBenignPool,
    UncalibratedTarget,
    InvalidSpec,
    InvalidConfig,
    ModelFormat,
    Io,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline std::uint16_t read_u16(ByteView b, std::size_t off) {
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

inline std::uint32_t read_u32(ByteView b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

inline void write_u16(std::span<std::uint8_t> b, std::size_t off, std::uint16_t v) {
    b[off] = static_cast<std::uint8_t>(v & 0xff);
    b[off + 1] = static_cast<std::uint8_t>(v >> 8);
}

inline void write_u32(std::span<std::uint8_t> b, std::size_t off, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        b[off + i] = static_cast<std::uint8_t>((v >> (8 * i)) & 0xff);
    }
}

constexpr std::size_t align_up(std::size_t value, std::size_t alignment) {
    return alignment == 0 ? value : ((value + alignment - 1) / alignment) * alignment;
}

constexpr bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

Bytes read_file(const std::string& path);
void write_file(const std::string& path, ByteView bytes);

}  // namespace advpe

#endif  // ADVPE_COMMON_HPP
