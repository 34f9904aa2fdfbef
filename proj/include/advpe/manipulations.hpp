// advpe - adversarial PE manipulation toolkit
// Functionality-preserving practical manipulations h(z, t).
//
// Every byte-based manipulation writes its payload into a fixed set of output
// positions (its edit mask); the remaining output bytes are the input bytes,
// possibly displaced by the inserted region.

#ifndef ADVPE_MANIPULATIONS_HPP
#define ADVPE_MANIPULATIONS_HPP

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "advpe/common.hpp"

namespace advpe {

enum class ManipulationKind {
    FullDos,
    Extend,
    Shift,
    PartialDos,
    Padding,
    SlackSpace,
    SectionInjection,
    HeaderFields,
};

std::string_view to_string(ManipulationKind kind) noexcept;
ManipulationKind manipulation_from_string(std::string_view name);

inline constexpr std::size_t partial_dos_size = 58;   // bytes [2, 59]
inline constexpr std::size_t default_padding_size = 10240;

struct ManipulationVector {
    Bytes payload;
    std::size_t requested_size = 0;  // Extend/Shift/Padding, before alignment rounding
};

class EditMask {
public:
    EditMask() = default;
    explicit EditMask(std::size_t file_size) : editable_(file_size, false) {}

    static EditMask from_positions(std::size_t file_size, std::span<const std::size_t> positions);

    [[nodiscard]] std::size_t size() const noexcept { return editable_.size(); }
    [[nodiscard]] bool operator[](std::size_t i) const { return editable_[i]; }
    void set(std::size_t i, bool value = true) { editable_[i] = value; }
    void set_range(std::size_t begin, std::size_t end);

    [[nodiscard]] std::size_t count() const;
    [[nodiscard]] std::vector<std::size_t> positions() const;

private:
    std::vector<bool> editable_;
};

// Smallest positive multiple of file_alignment that is >= requested.
std::size_t round_to_alignment(std::size_t requested, std::size_t file_alignment);

EditMask full_dos_mask(ByteView z);
Bytes apply_full_dos(ByteView z, const ManipulationVector& t);

EditMask extend_mask(ByteView z, std::size_t requested_size);  // positions in the output
Bytes apply_extend(ByteView z, const ManipulationVector& t);

EditMask shift_mask(ByteView z, std::size_t requested_size);   // positions in the output
Bytes apply_shift(ByteView z, const ManipulationVector& t);

EditMask partial_dos_mask(ByteView z);
Bytes apply_partial_dos(ByteView z, const ManipulationVector& t);

EditMask padding_mask(ByteView z, std::size_t size);
Bytes apply_padding(ByteView z, const ManipulationVector& t);

EditMask slack_mask(ByteView z);
Bytes apply_slack(ByteView z, const ManipulationVector& t);

Bytes apply_section_injection(ByteView z, const std::array<std::uint8_t, 8>& name, ByteView content);

EditMask header_fields_mask(ByteView z);
Bytes apply_header_fields(ByteView z, std::span<const std::array<std::uint8_t, 8>> new_names);

// A byte-based manipulation bound to one input: the output with a neutral
// payload plus the output positions the payload occupies, in payload order.
// Optimizers use this to scatter candidate payloads cheaply.
class PayloadSlot {
public:
    static PayloadSlot create(ByteView z, ManipulationKind kind, std::size_t requested_size = 0);

    [[nodiscard]] ManipulationKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::size_t payload_size() const noexcept { return positions_.size(); }
    [[nodiscard]] const std::vector<std::size_t>& positions() const noexcept { return positions_; }
    [[nodiscard]] const Bytes& base() const noexcept { return base_; }

    // The payload currently stored in base() at the slot positions.
    [[nodiscard]] Bytes current_payload() const;
    [[nodiscard]] Bytes apply(ByteView payload) const;

private:
    ManipulationKind kind_ = ManipulationKind::FullDos;
    Bytes base_;
    std::vector<std::size_t> positions_;
};

}  // namespace advpe

#endif  // ADVPE_MANIPULATIONS_HPP
