// advpe - adversarial PE manipulation toolkit

#include "advpe/pe_format.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace advpe {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::MalformedMagic: return "MalformedMagic";
        case ErrorCode::BadPeOffset: return "BadPeOffset";
        case ErrorCode::MissingPeSignature: return "MissingPeSignature";
        case ErrorCode::TruncatedHeader: return "TruncatedHeader";
        case ErrorCode::OverlappingSections: return "OverlappingSections";
        case ErrorCode::ZeroRequest: return "ZeroRequest";
        case ErrorCode::PeOffsetInsideDosHeader: return "PeOffsetInsideDosHeader";
        case ErrorCode::PayloadLengthMismatch: return "PayloadLengthMismatch";
        case ErrorCode::NoSections: return "NoSections";
        case ErrorCode::InsufficientHeaderSpace: return "InsufficientHeaderSpace";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NotDifferentiable: return "NotDifferentiable";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::DegenerateCorpus: return "DegenerateCorpus";
        case ErrorCode::NoNegatives: return "NoNegatives";
        case ErrorCode::ZeroGradient: return "ZeroGradient";
        case ErrorCode::GeneOutOfRange: return "GeneOutOfRange";
        case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
        case ErrorCode::EmptyBenignPool: return "EmptyBenignPool";
        case ErrorCode::UncalibratedTarget: return "UncalibratedTarget";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::ModelFormat: return "ModelFormat";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Bytes read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path);
    }
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, ByteView bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw Error(ErrorCode::Io, "short write to " + path);
    }
}

}  // namespace advpe

namespace advpe::pe {

namespace {

void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) {
        throw Error(code, what);
    }
}

SectionEntry read_section_entry(ByteView b, std::size_t off) {
    SectionEntry s;
    std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(off), 8, s.name.begin());
    s.virtual_size = read_u32(b, off + 8);
    s.virtual_address = read_u32(b, off + 12);
    s.raw_size = read_u32(b, off + 16);
    s.physical_offset = read_u32(b, off + 20);
    std::copy_n(b.begin() + static_cast<std::ptrdiff_t>(off + 24), 12, s.relocations.begin());
    s.characteristics = read_u32(b, off + 36);
    return s;
}

void write_section_entry(Bytes& out, const SectionEntry& s) {
    const std::size_t off = out.size();
    out.resize(off + section_entry_size);
    std::span<std::uint8_t> b(out);
    std::copy(s.name.begin(), s.name.end(), b.begin() + static_cast<std::ptrdiff_t>(off));
    write_u32(b, off + 8, s.virtual_size);
    write_u32(b, off + 12, s.virtual_address);
    write_u32(b, off + 16, s.raw_size);
    write_u32(b, off + 20, s.physical_offset);
    std::copy(s.relocations.begin(), s.relocations.end(), b.begin() + static_cast<std::ptrdiff_t>(off + 24));
    write_u32(b, off + 36, s.characteristics);
}

Bytes slice(ByteView b, std::size_t begin, std::size_t end) {
    return Bytes(b.begin() + static_cast<std::ptrdiff_t>(begin), b.begin() + static_cast<std::ptrdiff_t>(end));
}

}  // namespace

std::string SectionEntry::name_string() const {
    auto end = std::find(name.begin(), name.end(), std::uint8_t{0});
    return std::string(name.begin(), end);
}

std::array<std::uint8_t, 8> make_section_name(std::string_view name) {
    std::array<std::uint8_t, 8> out{};
    std::copy_n(name.begin(), std::min<std::size_t>(name.size(), 8), out.begin());
    return out;
}

std::vector<std::size_t> PeFile::file_order() const {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < sections.size(); ++i) {
        if (sections[i].has_raw_data()) {
            order.push_back(i);
        }
    }
    std::stable_sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
        return sections[a].physical_offset < sections[b].physical_offset;
    });
    return order;
}

std::optional<std::size_t> PeFile::first_section_offset() const {
    auto order = file_order();
    if (order.empty()) {
        return std::nullopt;
    }
    return sections[order.front()].physical_offset;
}

std::uint32_t read_pe_offset(ByteView bytes) {
    require(bytes.size() >= dos_header_size, ErrorCode::TruncatedHeader, "file shorter than DOS header");
    return read_u32(bytes, pe_offset_field);
}

void write_pe_offset(std::span<std::uint8_t> bytes, std::uint32_t pe_offset) {
    write_u32(bytes, pe_offset_field, pe_offset);
}

PeFile parse(ByteView b) {
    require(b.size() >= 2 && b[0] == 'M' && b[1] == 'Z', ErrorCode::MalformedMagic, "missing MZ magic");
    require(b.size() >= dos_header_size, ErrorCode::TruncatedHeader, "file shorter than DOS header");

    PeFile pe;
    std::copy_n(b.begin(), dos_header_size, pe.dos_header.begin());
    pe.pe_offset = read_u32(b, pe_offset_field);
    require(pe.pe_offset >= dos_header_size && pe.pe_offset < b.size(), ErrorCode::BadPeOffset,
            "pe_offset " + std::to_string(pe.pe_offset) + " outside [64, file size)");
    require(pe.pe_offset + signature_size <= b.size(), ErrorCode::MissingPeSignature, "no room for PE signature");
    require(b[pe.pe_offset] == 'P' && b[pe.pe_offset + 1] == 'E' && b[pe.pe_offset + 2] == 0 &&
                b[pe.pe_offset + 3] == 0,
            ErrorCode::MissingPeSignature, "PE\\0\\0 not found at pe_offset");
    pe.dos_stub = slice(b, dos_header_size, pe.pe_offset);

    const std::size_t coff_off = pe.pe_offset + signature_size;
    require(coff_off + coff_header_size <= b.size(), ErrorCode::TruncatedHeader, "COFF header truncated");
    pe.coff.machine = read_u16(b, coff_off);
    pe.coff.num_sections = read_u16(b, coff_off + 2);
    pe.coff.timestamp = read_u32(b, coff_off + 4);
    pe.coff.symbol_table = read_u32(b, coff_off + 8);
    pe.coff.num_symbols = read_u32(b, coff_off + 12);
    pe.coff.optional_header_size = read_u16(b, coff_off + 16);
    pe.coff.characteristics = read_u16(b, coff_off + 18);

    const std::size_t opt_off = coff_off + coff_header_size;
    require(pe.coff.optional_header_size >= min_optional_header_size, ErrorCode::TruncatedHeader,
            "optional header too small");
    require(opt_off + pe.coff.optional_header_size <= b.size(), ErrorCode::TruncatedHeader,
            "optional header truncated");
    pe.optional_header = OptionalHeader(slice(b, opt_off, opt_off + pe.coff.optional_header_size));

    const std::size_t table_off = pe.section_table_offset();
    const std::size_t table_end = table_off + std::size_t{pe.coff.num_sections} * section_entry_size;
    require(table_end <= b.size(), ErrorCode::TruncatedHeader, "section table truncated");
    for (std::size_t i = 0; i < pe.coff.num_sections; ++i) {
        pe.sections.push_back(read_section_entry(b, table_off + i * section_entry_size));
    }

    pe.section_data.resize(pe.sections.size());
    pe.section_gap.resize(pe.sections.size());
    const auto order = pe.file_order();
    std::size_t cursor = table_end;
    std::size_t first = order.empty() ? b.size() : pe.sections[order.front()].physical_offset;
    require(first >= table_end, ErrorCode::OverlappingSections, "first section overlaps the headers");
    pe.header_tail = slice(b, table_end, first);
    cursor = first;

    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& s = pe.sections[order[k]];
        require(s.physical_offset >= cursor, ErrorCode::OverlappingSections,
                "section " + s.name_string() + " overlaps its predecessor");
        require(s.raw_end() <= b.size(), ErrorCode::TruncatedHeader,
                "section " + s.name_string() + " extends past end of file");
        if (k > 0) {
            pe.section_gap[order[k - 1]] = slice(b, cursor, s.physical_offset);
        }
        pe.section_data[order[k]] = slice(b, s.physical_offset, s.raw_end());
        cursor = s.raw_end();
    }
    pe.overlay = slice(b, cursor, b.size());
    return pe;
}

Bytes serialize(const PeFile& pe) {
    Bytes out;
    out.reserve(pe.headers_end() + pe.header_tail.size() + pe.overlay.size());
    out.insert(out.end(), pe.dos_header.begin(), pe.dos_header.end());
    write_pe_offset(out, pe.pe_offset);
    out.insert(out.end(), pe.dos_stub.begin(), pe.dos_stub.end());
    // pe_offset wins over a stale stub length.
    out.resize(pe.pe_offset, 0);
    out.insert(out.end(), {'P', 'E', 0, 0});

    const std::size_t coff_off = out.size();
    out.resize(coff_off + coff_header_size);
    std::span<std::uint8_t> b(out);
    write_u16(b, coff_off, pe.coff.machine);
    write_u16(b, coff_off + 2, static_cast<std::uint16_t>(pe.sections.size()));
    write_u32(b, coff_off + 4, pe.coff.timestamp);
    write_u32(b, coff_off + 8, pe.coff.symbol_table);
    write_u32(b, coff_off + 12, pe.coff.num_symbols);
    write_u16(b, coff_off + 16, static_cast<std::uint16_t>(pe.optional_header.size()));
    write_u16(b, coff_off + 18, pe.coff.characteristics);

    out.insert(out.end(), pe.optional_header.raw().begin(), pe.optional_header.raw().end());
    for (const auto& s : pe.sections) {
        write_section_entry(out, s);
    }
    out.insert(out.end(), pe.header_tail.begin(), pe.header_tail.end());

    for (std::size_t idx : pe.file_order()) {
        const auto& s = pe.sections[idx];
        if (out.size() < s.physical_offset) {
            out.resize(s.physical_offset, 0);
        }
        const auto& data = pe.section_data[idx];
        out.insert(out.end(), data.begin(), data.end());
        if (data.size() < s.raw_size) {
            out.resize(out.size() + (s.raw_size - data.size()), 0);
        }
        const auto& gap = pe.section_gap[idx];
        out.insert(out.end(), gap.begin(), gap.end());
    }
    out.insert(out.end(), pe.overlay.begin(), pe.overlay.end());
    return out;
}

bool ValidationReport::has(std::string_view rule) const {
    return std::any_of(violations.begin(), violations.end(), [&](const Violation& v) { return v.rule == rule; });
}

std::string ValidationReport::to_string() const {
    std::ostringstream os;
    os << "ok: " << (ok() ? "true" : "false") << '\n';
    for (const auto& v : violations) {
        os << v.rule << " @0x" << std::hex << v.offset << std::dec << ": " << v.message << '\n';
    }
    return os.str();
}

ValidationReport validate(const PeFile& pe) {
    ValidationReport report;
    auto add = [&](std::string rule, std::size_t offset, std::string msg) {
        report.violations.push_back({std::move(rule), offset, std::move(msg)});
    };

    if (pe.dos_header[0] != 'M' || pe.dos_header[1] != 'Z') {
        add("magic", 0, "DOS header does not start with MZ");
    }
    if (pe.pe_offset != dos_header_size + pe.dos_stub.size()) {
        add("pe-offset", pe_offset_field, "pe_offset does not match the DOS stub extent");
    }

    const std::uint32_t fa = pe.file_alignment();
    const std::size_t opt_off = pe.pe_offset + signature_size + coff_header_size;
    const bool alignment_ok = is_power_of_two(fa) && fa >= 512;
    if (!alignment_ok) {
        add("file-alignment", opt_off + opt::file_alignment,
            "file_alignment " + std::to_string(fa) + " is not a power of two >= 512");
    }

    const std::uint32_t soh = pe.size_of_headers();
    if (soh < pe.headers_end()) {
        add("header-size", opt_off + opt::size_of_headers,
            "size_of_headers " + std::to_string(soh) + " below header extent " + std::to_string(pe.headers_end()));
    }
    if (alignment_ok && soh % fa != 0) {
        add("header-alignment", opt_off + opt::size_of_headers,
            "size_of_headers " + std::to_string(soh) + " not a multiple of file_alignment");
    }

    const std::size_t table_off = pe.section_table_offset();
    std::size_t prev_end = 0;
    for (std::size_t idx : pe.file_order()) {
        const auto& s = pe.sections[idx];
        const std::size_t entry_off = table_off + idx * section_entry_size;
        if (alignment_ok && s.physical_offset % fa != 0) {
            add("alignment", entry_off + 20,
                "section " + s.name_string() + " offset " + std::to_string(s.physical_offset) +
                    " not a multiple of file_alignment");
        }
        if (s.physical_offset < soh) {
            add("section-before-headers", entry_off + 20,
                "section " + s.name_string() + " starts inside size_of_headers");
        }
        if (s.physical_offset < prev_end) {
            add("overlap", entry_off + 20, "section " + s.name_string() + " overlaps its predecessor");
        }
        prev_end = std::max(prev_end, s.raw_end());
    }
    return report;
}

ValidationReport validate(ByteView bytes) {
    try {
        return validate(parse(bytes));
    } catch (const Error& e) {
        ValidationReport report;
        report.violations.push_back({"parse", 0, e.what()});
        return report;
    }
}

}  // namespace advpe::pe
