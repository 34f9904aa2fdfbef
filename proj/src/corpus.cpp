// advpe - adversarial PE manipulation toolkit
// Synthetic corpus generator. Files are structurally valid PE32 images whose
// sections hold generated filler; nothing here is executable code.

#include "advpe/corpus.hpp"

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string_view>

#include "advpe/pe_format.hpp"
#include "advpe/rng.hpp"

namespace advpe {

namespace {

constexpr std::uint32_t section_alignment = 0x1000;
constexpr std::size_t optional_header_size = 224;  // PE32 with 16 data directories

constexpr std::array<std::uint8_t, 14> dos_stub_code{0x0E, 0x1F, 0xBA, 0x0E, 0x00, 0xB4, 0x09,
                                                     0xCD, 0x21, 0xB8, 0x01, 0x4C, 0xCD, 0x21};
constexpr std::string_view benign_stub_text = "This program cannot be run in DOS mode.\r\r\n$";
constexpr std::string_view malicious_stub_text = "This program must be run under Win32\r\n$7";

// Weighted opcode-ish alphabet for benign code sections.
constexpr std::array<std::uint8_t, 24> code_alphabet{0x55, 0x8B, 0xEC, 0x83, 0xEC, 0x89, 0x45, 0xFC,
                                                      0xE8, 0x00, 0x00, 0xC3, 0x8B, 0x4D, 0x08, 0x85,
                                                      0xC0, 0x74, 0x75, 0x50, 0x51, 0x6A, 0xFF, 0x5D};

constexpr std::array<std::string_view, 10> benign_strings{
    "GetModuleHandleW", "kernel32.dll", "user32.dll", "LoadStringW", "RegisterClassExW",
    "Microsoft Corporation", "FileVersion", "GetLastError", "HeapAlloc", "CloseHandle"};

constexpr std::array<std::string_view, 8> malicious_strings{
    "VirtualAllocEx", "WriteProcessMemory", "CreateRemoteThread", "cmd.exe /c del ",
    "http://185.", "SetWindowsHookExA", "GetAsyncKeyState", "\\Run\\svch0st"};

constexpr std::array<std::uint8_t, 8> xor_loop{0x80, 0x34, 0x08, 0x55, 0xE2, 0xFA, 0xEB, 0xFE};

enum class Content { Code, Strings, Data, Resource, Packed };

void append_string(Bytes& out, std::string_view s) {
    out.insert(out.end(), s.begin(), s.end());
    out.push_back(0);
}

Bytes make_content(Content kind, std::size_t size, Rng& rng) {
    Bytes out;
    out.reserve(size + 32);
    while (out.size() < size) {
        switch (kind) {
            case Content::Code:
                out.push_back(code_alphabet[rng.below(code_alphabet.size())]);
                if (rng.chance(0.05)) {
                    out.push_back(rng.byte());
                }
                break;
            case Content::Strings:
                append_string(out, benign_strings[rng.below(benign_strings.size())]);
                break;
            case Content::Data:
                out.push_back(rng.chance(0.8) ? 0 : static_cast<std::uint8_t>(rng.below(16)));
                break;
            case Content::Resource: {
                const auto s = benign_strings[rng.below(benign_strings.size())];
                for (char c : s) {
                    out.push_back(static_cast<std::uint8_t>(c));
                    out.push_back(0);
                }
                break;
            }
            case Content::Packed:
                if (rng.chance(0.01)) {
                    append_string(out, malicious_strings[rng.below(malicious_strings.size())]);
                } else if (rng.chance(0.005)) {
                    out.insert(out.end(), xor_loop.begin(), xor_loop.end());
                } else {
                    out.push_back(rng.byte());
                }
                break;
        }
    }
    out.resize(size);
    return out;
}

struct SectionPlan {
    std::string name;
    Content content;
    std::uint32_t characteristics;
};

std::vector<SectionPlan> plan_sections(bool malicious, std::size_t n, bool noisy_content) {
    static const std::array<SectionPlan, 5> benign{{
        {".text", Content::Code, 0x60000020},
        {".rdata", Content::Strings, 0x40000040},
        {".data", Content::Data, 0xC0000040},
        {".rsrc", Content::Resource, 0x40000040},
        {".reloc", Content::Data, 0x42000040},
    }};
    static const std::array<SectionPlan, 5> packed{{
        {"UPX0", Content::Packed, 0xE0000080},
        {"UPX1", Content::Packed, 0xE0000040},
        {".data", Content::Data, 0xC0000040},
        {".rsrc", Content::Packed, 0xC0000040},
        {".adata", Content::Packed, 0xE0000040},
    }};
    std::vector<SectionPlan> out;
    for (std::size_t i = 0; i < n; ++i) {
        SectionPlan p = malicious ? packed[i] : benign[i];
        if (noisy_content) {
            const auto& other = malicious ? benign[i] : packed[i];
            p.content = other.content;
        }
        out.push_back(p);
    }
    return out;
}

Bytes make_stub(bool malicious, std::size_t length, Rng& rng) {
    Bytes stub(length, 0);
    Bytes text(dos_stub_code.begin(), dos_stub_code.end());
    const auto msg = malicious ? malicious_stub_text : benign_stub_text;
    text.insert(text.end(), msg.begin(), msg.end());
    std::copy_n(text.begin(), std::min(text.size(), length), stub.begin());
    // Trailing region: a linker-style signature block for benign files, noise
    // for malicious ones.
    for (std::size_t i = std::min(text.size() + 8, length); i < length; ++i) {
        stub[i] = malicious ? rng.byte() : static_cast<std::uint8_t>(0x52 + (i % 4));
    }
    return stub;
}

Sample make_sample(const CorpusSpec& spec, bool malicious, std::size_t index, Rng& rng) {
    const std::uint32_t min_fa = *std::min_element(spec.file_alignments.begin(), spec.file_alignments.end());
    const std::uint32_t max_fa = *std::max_element(spec.file_alignments.begin(), spec.file_alignments.end());

    std::uint32_t pe_offset = 0;
    std::uint32_t fa = 0;
    if (index == 0) {
        pe_offset = spec.min_pe_offset;
        fa = min_fa;
    } else if (index == 1) {
        pe_offset = spec.max_pe_offset;
        fa = max_fa;
    } else {
        const std::uint32_t lo = (spec.min_pe_offset + 3) / 4;
        const std::uint32_t hi = spec.max_pe_offset / 4;
        pe_offset = static_cast<std::uint32_t>(rng.between(lo, hi) * 4);
        fa = spec.file_alignments[rng.below(spec.file_alignments.size())];
    }

    const std::size_t n_sections = rng.between(spec.min_sections, spec.max_sections);
    const bool noisy = rng.chance(spec.content_noise);
    const auto plans = plan_sections(malicious, n_sections, noisy);

    const std::size_t table_off = pe_offset + pe::signature_size + pe::coff_header_size + optional_header_size;
    // One spare table entry keeps every generated file open to section injection.
    const std::size_t headers_end = table_off + (n_sections + 1) * pe::section_entry_size;
    const std::size_t size_of_headers = align_up(headers_end, fa);

    std::vector<pe::SectionEntry> entries;
    std::vector<Bytes> contents;
    std::size_t file_cursor = size_of_headers;
    std::size_t va_cursor = align_up(size_of_headers, section_alignment);
    for (const auto& plan : plans) {
        const std::size_t content_len = rng.between(spec.min_section_bytes, spec.max_section_bytes);
        pe::SectionEntry e;
        e.name = pe::make_section_name(plan.name);
        e.virtual_size = static_cast<std::uint32_t>(content_len);
        e.virtual_address = static_cast<std::uint32_t>(va_cursor);
        e.raw_size = static_cast<std::uint32_t>(align_up(content_len, fa));
        e.physical_offset = static_cast<std::uint32_t>(file_cursor);
        e.characteristics = plan.characteristics;
        contents.push_back(make_content(plan.content, content_len, rng));
        file_cursor += e.raw_size;
        va_cursor = align_up(va_cursor + content_len, section_alignment);
        entries.push_back(e);
    }

    Bytes out(file_cursor, 0);
    std::span<std::uint8_t> b(out);

    // DOS header
    out[0] = 'M';
    out[1] = 'Z';
    write_u16(b, 0x02, 0x90);
    write_u16(b, 0x04, 3);
    write_u16(b, 0x08, 4);
    write_u16(b, 0x0C, 0xFFFF);
    write_u16(b, 0x10, 0xB8);
    write_u16(b, 0x18, 0x40);
    pe::write_pe_offset(b, pe_offset);
    const Bytes stub = make_stub(malicious, pe_offset - pe::dos_header_size, rng);
    std::copy(stub.begin(), stub.end(), out.begin() + pe::dos_header_size);

    // PE signature + COFF
    out[pe_offset] = 'P';
    out[pe_offset + 1] = 'E';
    const std::size_t coff = pe_offset + pe::signature_size;
    write_u16(b, coff, 0x014C);
    write_u16(b, coff + 2, static_cast<std::uint16_t>(n_sections));
    write_u32(b, coff + 4,
              malicious ? (rng.chance(0.5) ? 0x2A425E19u : static_cast<std::uint32_t>(rng.next()))
                        : static_cast<std::uint32_t>(0x5A000000u + rng.below(0x06000000u)));
    write_u16(b, coff + 16, static_cast<std::uint16_t>(optional_header_size));
    write_u16(b, coff + 18, malicious ? 0x818E : 0x0102);

    // Optional header (PE32)
    const std::size_t opt = coff + pe::coff_header_size;
    write_u16(b, opt + pe::opt::magic, 0x010B);
    out[opt + 2] = malicious ? 2 : 14;  // linker version
    out[opt + 3] = malicious ? 25 : 16;
    write_u32(b, opt + 4, entries.front().raw_size);
    const auto& ep_section = malicious ? entries.back() : entries.front();
    write_u32(b, opt + pe::opt::entry_point,
              static_cast<std::uint32_t>(ep_section.virtual_address + rng.below(std::max<std::uint32_t>(ep_section.virtual_size, 1))));
    write_u32(b, opt + 20, entries.front().virtual_address);
    write_u32(b, opt + 28, 0x00400000);
    write_u32(b, opt + pe::opt::section_alignment, section_alignment);
    write_u32(b, opt + pe::opt::file_alignment, fa);
    write_u16(b, opt + 40, malicious ? 4 : 6);
    write_u16(b, opt + 48, malicious ? 4 : 6);
    write_u32(b, opt + pe::opt::size_of_image, static_cast<std::uint32_t>(va_cursor));
    write_u32(b, opt + pe::opt::size_of_headers, static_cast<std::uint32_t>(size_of_headers));
    write_u32(b, opt + pe::opt::checksum, malicious ? 0 : static_cast<std::uint32_t>(rng.below(1u << 24)) | 0x10000u);
    write_u16(b, opt + 68, malicious ? 2 : 3);
    write_u16(b, opt + 70, malicious ? 0x0000 : 0x8140);
    write_u32(b, opt + 72, 0x00100000);
    write_u32(b, opt + 76, 0x1000);
    write_u32(b, opt + 80, 0x00100000);
    write_u32(b, opt + 84, 0x1000);
    write_u32(b, opt + 92, 16);
    // Import directory inside the second section, resource directory in the
    // fourth when present.
    if (entries.size() > 1) {
        write_u32(b, opt + 104, entries[1].virtual_address + 0x10);
        write_u32(b, opt + 108, 0x3C);
    }
    if (entries.size() > 3) {
        write_u32(b, opt + 112, entries[3].virtual_address);
        write_u32(b, opt + 116, entries[3].virtual_size);
    }

    // Section table + contents
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        const std::size_t off = table_off + i * pe::section_entry_size;
        std::copy(e.name.begin(), e.name.end(), out.begin() + static_cast<std::ptrdiff_t>(off));
        write_u32(b, off + 8, e.virtual_size);
        write_u32(b, off + 12, e.virtual_address);
        write_u32(b, off + 16, e.raw_size);
        write_u32(b, off + 20, e.physical_offset);
        write_u32(b, off + 36, e.characteristics);
        std::copy(contents[i].begin(), contents[i].end(), out.begin() + e.physical_offset);
    }

    if (rng.chance(spec.overlay_probability)) {
        const std::size_t overlay = rng.between(16, 600);
        for (std::size_t i = 0; i < overlay; ++i) {
            out.push_back(malicious ? rng.byte() : static_cast<std::uint8_t>(i & 0x3f));
        }
    }

    std::ostringstream name;
    name << (malicious ? "mal_" : "good_");
    name.width(4);
    name.fill('0');
    name << index;
    return Sample{name.str(), std::move(out), malicious ? 1 : 0};
}

}  // namespace

void check_spec(const CorpusSpec& spec) {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); };
    if (spec.malware_count == 0 || spec.goodware_count == 0) {
        fail("both classes need at least one sample");
    }
    if (spec.min_pe_offset < pe::dos_header_size || spec.max_pe_offset > 512 || spec.min_pe_offset > spec.max_pe_offset) {
        fail("pe_offset range must lie within [64, 512]");
    }
    if (spec.min_sections < 1 || spec.max_sections > 5 || spec.min_sections > spec.max_sections) {
        fail("section count range must lie within [1, 5]");
    }
    if (spec.min_section_bytes == 0 || spec.min_section_bytes > spec.max_section_bytes) {
        fail("bad section size range");
    }
    if (spec.file_alignments.empty()) {
        fail("no file alignments");
    }
    for (auto fa : spec.file_alignments) {
        if (!is_power_of_two(fa) || fa < 512) {
            fail("file alignment " + std::to_string(fa) + " is not a power of two >= 512");
        }
    }
}

std::vector<Sample> generate_corpus(const CorpusSpec& spec) {
    check_spec(spec);
    std::vector<Sample> corpus;
    corpus.reserve(spec.malware_count + spec.goodware_count);
    Rng mal_rng(spec.seed * 2 + 1);
    for (std::size_t i = 0; i < spec.malware_count; ++i) {
        corpus.push_back(make_sample(spec, true, i, mal_rng));
    }
    Rng good_rng(spec.seed * 2 + 2);
    for (std::size_t i = 0; i < spec.goodware_count; ++i) {
        corpus.push_back(make_sample(spec, false, i, good_rng));
    }
    return corpus;
}

Split split_corpus(const std::vector<Sample>& corpus, std::size_t every) {
    Split split;
    std::size_t seen[2] = {0, 0};
    for (const auto& s : corpus) {
        auto& counter = seen[s.label];
        (counter % every == every - 1 ? split.validation : split.train).push_back(s);
        ++counter;
    }
    return split;
}

std::vector<Bytes> harvest_sections(const std::vector<Sample>& goodware, std::size_t max_sections,
                                    std::string_view section_name) {
    std::vector<Bytes> pool;
    for (const auto& s : goodware) {
        if (s.label != 0) {
            continue;
        }
        const auto pe = pe::parse(s.bytes);
        for (std::size_t i = 0; i < pe.sections.size() && pool.size() < max_sections; ++i) {
            if (pe.sections[i].name_string() == section_name) {
                const auto& data = pe.section_data[i];
                const std::size_t n = std::min<std::size_t>(data.size(), pe.sections[i].virtual_size);
                pool.emplace_back(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n));
            }
        }
        if (pool.size() >= max_sections) {
            break;
        }
    }
    return pool;
}

void write_corpus(const std::vector<Sample>& corpus, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream labels(fs::path(dir) / "labels.csv");
    if (!labels) {
        throw Error(ErrorCode::Io, "cannot write labels.csv in " + dir);
    }
    labels << "file,label\n";
    for (const auto& s : corpus) {
        const std::string file = s.name + ".exe";
        write_file((fs::path(dir) / file).string(), s.bytes);
        labels << file << ',' << s.label << '\n';
    }
}

std::vector<Sample> read_corpus(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream labels(fs::path(dir) / "labels.csv");
    if (!labels) {
        throw Error(ErrorCode::Io, "missing labels.csv in " + dir);
    }
    std::vector<Sample> corpus;
    std::string line;
    std::getline(labels, line);
    while (std::getline(labels, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            continue;
        }
        Sample s;
        const std::string file = line.substr(0, comma);
        s.name = fs::path(file).stem().string();
        s.label = std::stoi(line.substr(comma + 1));
        s.bytes = read_file((fs::path(dir) / file).string());
        corpus.push_back(std::move(s));
    }
    return corpus;
}

}  // namespace advpe
