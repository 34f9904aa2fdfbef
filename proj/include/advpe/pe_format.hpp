// advpe - adversarial PE manipulation toolkit
// Lossless model of the Windows PE on-disk layout.
//
// A PeFile partitions every byte of the input into one of: DOS header, DOS
// stub, PE signature + COFF header, optional header, section table, header
// tail (bytes between the section table and the first raw section), section
// raw data, inter-section gaps and the overlay. serialize() lays the regions
// out again at the offsets the section table names, so parse/serialize is the
// identity and relocating a section is a matter of editing its entry.

#ifndef ADVPE_PE_FORMAT_HPP
#define ADVPE_PE_FORMAT_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "advpe/common.hpp"

namespace advpe::pe {

inline constexpr std::size_t dos_header_size = 64;
inline constexpr std::size_t pe_offset_field = 0x3c;
inline constexpr std::size_t signature_size = 4;
inline constexpr std::size_t coff_header_size = 20;
inline constexpr std::size_t section_entry_size = 40;
inline constexpr std::size_t min_optional_header_size = 64;

// Byte offsets of the fields we edit inside the optional header.
namespace opt {
inline constexpr std::size_t magic = 0;
inline constexpr std::size_t entry_point = 16;
inline constexpr std::size_t section_alignment = 32;
inline constexpr std::size_t file_alignment = 36;
inline constexpr std::size_t size_of_image = 56;
inline constexpr std::size_t size_of_headers = 60;
inline constexpr std::size_t checksum = 64;
}  // namespace opt

struct CoffHeader {
    std::uint16_t machine = 0;
    std::uint16_t num_sections = 0;
    std::uint32_t timestamp = 0;
    std::uint32_t symbol_table = 0;
    std::uint32_t num_symbols = 0;
    std::uint16_t optional_header_size = 0;
    std::uint16_t characteristics = 0;

    bool operator==(const CoffHeader&) const = default;
};

// Carried opaquely so fields we do not interpret survive serialization.
class OptionalHeader {
public:
    OptionalHeader() = default;
    explicit OptionalHeader(Bytes raw) : raw_(std::move(raw)) {}

    [[nodiscard]] const Bytes& raw() const noexcept { return raw_; }
    [[nodiscard]] std::size_t size() const noexcept { return raw_.size(); }

    [[nodiscard]] std::uint16_t magic() const { return read_u16(raw_, opt::magic); }
    [[nodiscard]] std::uint32_t entry_point() const { return read_u32(raw_, opt::entry_point); }
    [[nodiscard]] std::uint32_t section_alignment() const { return read_u32(raw_, opt::section_alignment); }
    [[nodiscard]] std::uint32_t file_alignment() const { return read_u32(raw_, opt::file_alignment); }
    [[nodiscard]] std::uint32_t size_of_image() const { return read_u32(raw_, opt::size_of_image); }
    [[nodiscard]] std::uint32_t size_of_headers() const { return read_u32(raw_, opt::size_of_headers); }

    void set_file_alignment(std::uint32_t v) { write_u32(raw_, opt::file_alignment, v); }
    void set_size_of_image(std::uint32_t v) { write_u32(raw_, opt::size_of_image, v); }
    void set_size_of_headers(std::uint32_t v) { write_u32(raw_, opt::size_of_headers, v); }

    bool operator==(const OptionalHeader&) const = default;

private:
    Bytes raw_;
};

struct SectionEntry {
    std::array<std::uint8_t, 8> name{};
    std::uint32_t virtual_size = 0;
    std::uint32_t virtual_address = 0;
    std::uint32_t raw_size = 0;
    std::uint32_t physical_offset = 0;
    std::array<std::uint8_t, 12> relocations{};  // relocation/line-number pointers and counts
    std::uint32_t characteristics = 0;

    [[nodiscard]] std::string name_string() const;
    [[nodiscard]] bool has_raw_data() const noexcept { return raw_size != 0; }
    [[nodiscard]] std::size_t raw_end() const noexcept {
        return static_cast<std::size_t>(physical_offset) + raw_size;
    }

    bool operator==(const SectionEntry&) const = default;
};

std::array<std::uint8_t, 8> make_section_name(std::string_view name);

struct PeFile {
    std::array<std::uint8_t, dos_header_size> dos_header{};
    Bytes dos_stub;
    std::uint32_t pe_offset = 0;
    CoffHeader coff;
    OptionalHeader optional_header;
    std::vector<SectionEntry> sections;
    Bytes header_tail;
    std::vector<Bytes> section_data;   // indexed like `sections`
    std::vector<Bytes> section_gap;    // bytes after each raw region up to the next one
    Bytes overlay;

    [[nodiscard]] std::size_t section_table_offset() const noexcept {
        return pe_offset + signature_size + coff_header_size + optional_header.size();
    }
    [[nodiscard]] std::size_t headers_end() const noexcept {
        return section_table_offset() + sections.size() * section_entry_size;
    }
    [[nodiscard]] std::uint32_t file_alignment() const { return optional_header.file_alignment(); }
    [[nodiscard]] std::uint32_t size_of_headers() const { return optional_header.size_of_headers(); }

    // Section indices sorted by physical offset, skipping sections without raw data.
    [[nodiscard]] std::vector<std::size_t> file_order() const;
    [[nodiscard]] std::optional<std::size_t> first_section_offset() const;
};

// Throws Error{MalformedMagic, BadPeOffset, MissingPeSignature, TruncatedHeader,
// OverlappingSections}.
PeFile parse(ByteView bytes);

Bytes serialize(const PeFile& pe);

struct Violation {
    std::string rule;
    std::size_t offset = 0;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    [[nodiscard]] bool ok() const noexcept { return violations.empty(); }
    [[nodiscard]] bool has(std::string_view rule) const;
    [[nodiscard]] std::string to_string() const;
};

ValidationReport validate(const PeFile& pe);

// Parses then validates; parse failures become a single "parse" violation.
ValidationReport validate(ByteView bytes);

// Raw accessors for manipulations that work on the byte string directly.
std::uint32_t read_pe_offset(ByteView bytes);
void write_pe_offset(std::span<std::uint8_t> bytes, std::uint32_t pe_offset);

}  // namespace advpe::pe

#endif  // ADVPE_PE_FORMAT_HPP
