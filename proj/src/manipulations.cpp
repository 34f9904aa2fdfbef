// advpe - adversarial PE manipulation toolkit

#include "advpe/manipulations.hpp"

#include <algorithm>

#include "advpe/pe_format.hpp"

namespace advpe {

namespace {

constexpr std::size_t section_offset_field = 20;  // PointerToRawData inside a section entry

void check_payload(std::size_t got, std::size_t expected, std::string_view what) {
    if (got != expected) {
        throw Error(ErrorCode::PayloadLengthMismatch, std::string(what) + " expects " + std::to_string(expected) +
                                                          " payload bytes, got " + std::to_string(got));
    }
}

void scatter(Bytes& out, const std::vector<std::size_t>& positions, ByteView payload) {
    for (std::size_t i = 0; i < positions.size(); ++i) {
        out[positions[i]] = payload[i];
    }
}

Bytes insert_zeros(ByteView z, std::size_t at, std::size_t count) {
    Bytes out;
    out.reserve(z.size() + count);
    out.insert(out.end(), z.begin(), z.begin() + static_cast<std::ptrdiff_t>(at));
    out.resize(out.size() + count, 0);
    out.insert(out.end(), z.begin() + static_cast<std::ptrdiff_t>(at), z.end());
    return out;
}

// Adds `delta` to the raw offset of every section that owns raw data. The
// section table starts at `table_off` in `out`.
void relocate_sections(Bytes& out, const pe::PeFile& pe, std::size_t table_off, std::size_t delta) {
    for (std::size_t i = 0; i < pe.sections.size(); ++i) {
        const auto& s = pe.sections[i];
        if (!s.has_raw_data()) {
            continue;
        }
        write_u32(out, table_off + i * pe::section_entry_size + section_offset_field,
                  static_cast<std::uint32_t>(s.physical_offset + delta));
    }
}

std::vector<std::size_t> dos_positions(std::size_t pe_offset) {
    std::vector<std::size_t> pos;
    pos.reserve(partial_dos_size + (pe_offset - pe::dos_header_size));
    for (std::size_t i = 2; i < 2 + partial_dos_size; ++i) {
        pos.push_back(i);
    }
    for (std::size_t i = pe::dos_header_size; i < pe_offset; ++i) {
        pos.push_back(i);
    }
    return pos;
}

std::size_t checked_dos_pe_offset(ByteView z) {
    const auto pe = pe::parse(z);
    return pe.pe_offset;
}

std::vector<std::size_t> slack_positions(const pe::PeFile& pe) {
    std::vector<std::size_t> pos;
    for (std::size_t idx : pe.file_order()) {
        const auto& s = pe.sections[idx];
        const std::size_t content = std::min(s.raw_size, s.virtual_size);
        for (std::size_t i = s.physical_offset + content; i < s.raw_end(); ++i) {
            pos.push_back(i);
        }
    }
    return pos;
}

std::vector<std::size_t> header_name_positions(const pe::PeFile& pe) {
    std::vector<std::size_t> pos;
    const std::size_t table = pe.section_table_offset();
    for (std::size_t i = 0; i < pe.sections.size(); ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            pos.push_back(table + i * pe::section_entry_size + j);
        }
    }
    return pos;
}

}  // namespace

std::string_view to_string(ManipulationKind kind) noexcept {
    switch (kind) {
        case ManipulationKind::FullDos: return "full-dos";
        case ManipulationKind::Extend: return "extend";
        case ManipulationKind::Shift: return "shift";
        case ManipulationKind::PartialDos: return "partial-dos";
        case ManipulationKind::Padding: return "padding";
        case ManipulationKind::SlackSpace: return "slack";
        case ManipulationKind::SectionInjection: return "section-injection";
        case ManipulationKind::HeaderFields: return "header-fields";
    }
    return "unknown";
}

ManipulationKind manipulation_from_string(std::string_view name) {
    for (auto kind : {ManipulationKind::FullDos, ManipulationKind::Extend, ManipulationKind::Shift,
                      ManipulationKind::PartialDos, ManipulationKind::Padding, ManipulationKind::SlackSpace,
                      ManipulationKind::SectionInjection, ManipulationKind::HeaderFields}) {
        if (to_string(kind) == name) {
            return kind;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown manipulation '" + std::string(name) + "'");
}

EditMask EditMask::from_positions(std::size_t file_size, std::span<const std::size_t> positions) {
    EditMask m(file_size);
    for (std::size_t p : positions) {
        m.set(p);
    }
    return m;
}

void EditMask::set_range(std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
        editable_[i] = true;
    }
}

std::size_t EditMask::count() const {
    return static_cast<std::size_t>(std::count(editable_.begin(), editable_.end(), true));
}

std::vector<std::size_t> EditMask::positions() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < editable_.size(); ++i) {
        if (editable_[i]) {
            out.push_back(i);
        }
    }
    return out;
}

std::size_t round_to_alignment(std::size_t requested, std::size_t file_alignment) {
    if (requested == 0) {
        throw Error(ErrorCode::ZeroRequest, "requested injection size is zero");
    }
    if (file_alignment == 0) {
        throw Error(ErrorCode::InvalidConfig, "file alignment is zero");
    }
    return align_up(requested, file_alignment);
}

// --- Full DOS -------------------------------------------------------------

EditMask full_dos_mask(ByteView z) {
    if (z.size() < pe::dos_header_size || z[0] != 'M' || z[1] != 'Z') {
        throw Error(ErrorCode::MalformedMagic, "not an MZ file");
    }
    const std::size_t pe_offset = pe::read_pe_offset(z);
    if (pe_offset < pe::dos_header_size) {
        throw Error(ErrorCode::PeOffsetInsideDosHeader,
                    "pe_offset " + std::to_string(pe_offset) + " lies inside the DOS header");
    }
    pe::parse(z);
    const auto pos = dos_positions(pe_offset);
    return EditMask::from_positions(z.size(), pos);
}

Bytes apply_full_dos(ByteView z, const ManipulationVector& t) {
    const std::size_t pe_offset = checked_dos_pe_offset(z);
    const auto pos = dos_positions(pe_offset);
    check_payload(t.payload.size(), pos.size(), "full-dos");
    Bytes out(z.begin(), z.end());
    scatter(out, pos, t.payload);
    return out;
}

// --- Extend ---------------------------------------------------------------

EditMask extend_mask(ByteView z, std::size_t requested_size) {
    const auto pe = pe::parse(z);
    const std::size_t inj = round_to_alignment(requested_size, pe.file_alignment());
    return EditMask::from_positions(z.size() + inj, dos_positions(pe.pe_offset + inj));
}

Bytes apply_extend(ByteView z, const ManipulationVector& t) {
    const auto pe = pe::parse(z);
    const std::size_t inj = round_to_alignment(t.requested_size, pe.file_alignment());
    const std::size_t v = pe.pe_offset;
    const auto pos = dos_positions(v + inj);
    check_payload(t.payload.size(), pos.size(), "extend");

    Bytes out = insert_zeros(z, v, inj);
    pe::write_pe_offset(out, static_cast<std::uint32_t>(v + inj));
    const std::size_t opt_off = v + inj + pe::signature_size + pe::coff_header_size;
    write_u32(out, opt_off + pe::opt::size_of_headers, static_cast<std::uint32_t>(pe.size_of_headers() + inj));
    relocate_sections(out, pe, pe.section_table_offset() + inj, inj);
    scatter(out, pos, t.payload);
    return out;
}

// --- Shift ----------------------------------------------------------------

namespace {

struct ShiftGeometry {
    pe::PeFile pe;
    std::size_t first = 0;
    std::size_t inj = 0;
};

ShiftGeometry shift_geometry(ByteView z, std::size_t requested_size) {
    ShiftGeometry g{pe::parse(z)};
    const auto first = g.pe.first_section_offset();
    if (!first) {
        throw Error(ErrorCode::NoSections, "shift needs at least one section with raw data");
    }
    g.first = *first;
    g.inj = round_to_alignment(requested_size, g.pe.file_alignment());
    return g;
}

}  // namespace

EditMask shift_mask(ByteView z, std::size_t requested_size) {
    const auto g = shift_geometry(z, requested_size);
    EditMask m(z.size() + g.inj);
    m.set_range(g.first, g.first + g.inj);
    return m;
}

Bytes apply_shift(ByteView z, const ManipulationVector& t) {
    const auto g = shift_geometry(z, t.requested_size);
    check_payload(t.payload.size(), g.inj, "shift");
    Bytes out = insert_zeros(z, g.first, g.inj);
    relocate_sections(out, g.pe, g.pe.section_table_offset(), g.inj);
    std::copy(t.payload.begin(), t.payload.end(), out.begin() + static_cast<std::ptrdiff_t>(g.first));
    return out;
}

// --- Partial DOS ----------------------------------------------------------

EditMask partial_dos_mask(ByteView z) {
    pe::parse(z);
    EditMask m(z.size());
    m.set_range(2, 2 + partial_dos_size);
    return m;
}

Bytes apply_partial_dos(ByteView z, const ManipulationVector& t) {
    pe::parse(z);
    check_payload(t.payload.size(), partial_dos_size, "partial-dos");
    Bytes out(z.begin(), z.end());
    std::copy(t.payload.begin(), t.payload.end(), out.begin() + 2);
    return out;
}

// --- Padding --------------------------------------------------------------

EditMask padding_mask(ByteView z, std::size_t size) {
    EditMask m(z.size() + size);
    m.set_range(z.size(), z.size() + size);
    return m;
}

Bytes apply_padding(ByteView z, const ManipulationVector& t) {
    if (t.requested_size != 0) {
        check_payload(t.payload.size(), t.requested_size, "padding");
    }
    Bytes out;
    out.reserve(z.size() + t.payload.size());
    out.insert(out.end(), z.begin(), z.end());
    out.insert(out.end(), t.payload.begin(), t.payload.end());
    return out;
}

// --- Slack space ----------------------------------------------------------

EditMask slack_mask(ByteView z) {
    const auto pos = slack_positions(pe::parse(z));
    return EditMask::from_positions(z.size(), pos);
}

Bytes apply_slack(ByteView z, const ManipulationVector& t) {
    const auto pos = slack_positions(pe::parse(z));
    check_payload(t.payload.size(), pos.size(), "slack");
    Bytes out(z.begin(), z.end());
    scatter(out, pos, t.payload);
    return out;
}

// --- Section injection ----------------------------------------------------

Bytes apply_section_injection(ByteView z, const std::array<std::uint8_t, 8>& name, ByteView content) {
    auto pe = pe::parse(z);
    const std::size_t entry_off = pe.headers_end();
    const std::size_t limit = std::min<std::size_t>(pe.size_of_headers(), pe.first_section_offset().value_or(z.size()));
    if (entry_off + pe::section_entry_size > limit) {
        throw Error(ErrorCode::InsufficientHeaderSpace, "no room for another section entry before the first section");
    }

    const std::size_t fa = pe.file_alignment();
    const std::size_t sa = std::max<std::size_t>(pe.optional_header.section_alignment(), 1);
    std::size_t next_va = 0;
    for (const auto& s : pe.sections) {
        next_va = std::max(next_va, s.virtual_address + std::max<std::size_t>(s.virtual_size, s.raw_size));
    }
    next_va = align_up(std::max(next_va, std::size_t{pe.size_of_headers()}), sa);

    pe::SectionEntry entry;
    entry.name = name;
    entry.virtual_size = static_cast<std::uint32_t>(content.size());
    entry.virtual_address = static_cast<std::uint32_t>(next_va);
    entry.raw_size = static_cast<std::uint32_t>(align_up(content.size(), fa));
    entry.physical_offset = static_cast<std::uint32_t>(align_up(z.size(), fa));
    entry.characteristics = 0x40000040;  // initialized data, readable

    Bytes out(z.begin(), z.end());
    Bytes encoded(pe::section_entry_size, 0);
    std::copy(entry.name.begin(), entry.name.end(), encoded.begin());
    write_u32(encoded, 8, entry.virtual_size);
    write_u32(encoded, 12, entry.virtual_address);
    write_u32(encoded, 16, entry.raw_size);
    write_u32(encoded, 20, entry.physical_offset);
    write_u32(encoded, 36, entry.characteristics);
    std::copy(encoded.begin(), encoded.end(), out.begin() + static_cast<std::ptrdiff_t>(entry_off));
    write_u16(out, pe.pe_offset + pe::signature_size + 2, static_cast<std::uint16_t>(pe.sections.size() + 1));
    const std::size_t opt_off = pe.pe_offset + pe::signature_size + pe::coff_header_size;
    write_u32(out, opt_off + pe::opt::size_of_image,
              static_cast<std::uint32_t>(align_up(next_va + std::max<std::size_t>(content.size(), 1), sa)));

    if (entry.raw_size > 0) {
        out.resize(entry.physical_offset, 0);
        out.insert(out.end(), content.begin(), content.end());
        out.resize(entry.physical_offset + entry.raw_size, 0);
    }
    return out;
}

// --- Header fields --------------------------------------------------------

EditMask header_fields_mask(ByteView z) {
    const auto pos = header_name_positions(pe::parse(z));
    return EditMask::from_positions(z.size(), pos);
}

Bytes apply_header_fields(ByteView z, std::span<const std::array<std::uint8_t, 8>> new_names) {
    const auto pe = pe::parse(z);
    if (new_names.size() != pe.sections.size()) {
        throw Error(ErrorCode::LengthMismatch, "expected " + std::to_string(pe.sections.size()) +
                                                   " section names, got " + std::to_string(new_names.size()));
    }
    Bytes out(z.begin(), z.end());
    const std::size_t table = pe.section_table_offset();
    for (std::size_t i = 0; i < new_names.size(); ++i) {
        std::copy(new_names[i].begin(), new_names[i].end(),
                  out.begin() + static_cast<std::ptrdiff_t>(table + i * pe::section_entry_size));
    }
    return out;
}

// --- PayloadSlot ----------------------------------------------------------

PayloadSlot PayloadSlot::create(ByteView z, ManipulationKind kind, std::size_t requested_size) {
    PayloadSlot slot;
    slot.kind_ = kind;
    switch (kind) {
        case ManipulationKind::FullDos: {
            slot.base_.assign(z.begin(), z.end());
            slot.positions_ = dos_positions(checked_dos_pe_offset(z));
            break;
        }
        case ManipulationKind::PartialDos: {
            pe::parse(z);
            slot.base_.assign(z.begin(), z.end());
            for (std::size_t i = 2; i < 2 + partial_dos_size; ++i) {
                slot.positions_.push_back(i);
            }
            break;
        }
        case ManipulationKind::Extend: {
            auto mask = extend_mask(z, requested_size);
            slot.positions_ = mask.positions();
            slot.base_ = apply_extend(z, {Bytes(slot.positions_.size(), 0), requested_size});
            break;
        }
        case ManipulationKind::Shift: {
            auto mask = shift_mask(z, requested_size);
            slot.positions_ = mask.positions();
            slot.base_ = apply_shift(z, {Bytes(slot.positions_.size(), 0), requested_size});
            break;
        }
        case ManipulationKind::Padding: {
            slot.base_ = apply_padding(z, {Bytes(requested_size, 0), requested_size});
            for (std::size_t i = z.size(); i < slot.base_.size(); ++i) {
                slot.positions_.push_back(i);
            }
            break;
        }
        case ManipulationKind::SlackSpace: {
            slot.base_.assign(z.begin(), z.end());
            slot.positions_ = slack_positions(pe::parse(z));
            break;
        }
        case ManipulationKind::HeaderFields: {
            slot.base_.assign(z.begin(), z.end());
            slot.positions_ = header_name_positions(pe::parse(z));
            break;
        }
        case ManipulationKind::SectionInjection:
            throw Error(ErrorCode::InvalidConfig, "section injection does not take a byte payload");
    }
    return slot;
}

Bytes PayloadSlot::current_payload() const {
    Bytes out(positions_.size());
    for (std::size_t i = 0; i < positions_.size(); ++i) {
        out[i] = base_[positions_[i]];
    }
    return out;
}

Bytes PayloadSlot::apply(ByteView payload) const {
    check_payload(payload.size(), positions_.size(), to_string(kind_));
    Bytes out = base_;
    scatter(out, positions_, payload);
    return out;
}

}  // namespace advpe
