// advpe - adversarial PE manipulation toolkit

#include "advpe/validator.hpp"

#include <algorithm>
#include <sstream>

#include "advpe/pe_format.hpp"

namespace advpe {

bool EquivalenceReport::equivalent() const {
    return std::all_of(checks.begin(), checks.end(), [](const EquivalenceCheck& c) { return c.passed; });
}

const EquivalenceCheck* EquivalenceReport::find(std::string_view id) const {
    for (const auto& c : checks) {
        if (c.id == id) {
            return &c;
        }
    }
    return nullptr;
}

std::string EquivalenceReport::to_string() const {
    std::ostringstream os;
    os << "equivalent: " << (equivalent() ? "true" : "false") << '\n';
    for (const auto& c : checks) {
        os << "check " << c.id << ": " << (c.passed ? "pass" : "FAIL");
        if (!c.detail.empty()) {
            os << " (" << c.detail << ')';
        }
        os << '\n';
    }
    for (const auto& [begin, end] : exempt_regions) {
        os << "exempt [" << begin << ", " << end << ")\n";
    }
    return os.str();
}

namespace {

std::size_t content_size(const pe::SectionEntry& s) {
    return std::min(s.raw_size, s.virtual_size);
}

// Optional header with size_of_headers blanked (and size_of_image when the
// modified file appended sections).
Bytes comparable_optional_header(const pe::OptionalHeader& h, bool ignore_image_size) {
    pe::OptionalHeader copy = h;
    copy.set_size_of_headers(0);
    if (ignore_image_size) {
        copy.set_size_of_image(0);
    }
    return copy.raw();
}

}  // namespace

EquivalenceReport structural_equivalence(ByteView original, ByteView modified, const EquivalenceOptions& options) {
    const auto a = pe::parse(original);
    const auto b = pe::parse(modified);
    EquivalenceReport report;
    auto add = [&](std::string id, bool passed, std::string detail = {}) {
        report.checks.push_back({std::move(id), passed, std::move(detail)});
    };

    // (a) parse() already located the signature; re-check against the raw bytes.
    {
        const auto sig_ok = [](ByteView z, std::size_t off) {
            return off + 4 <= z.size() && z[off] == 'P' && z[off + 1] == 'E' && z[off + 2] == 0 && z[off + 3] == 0;
        };
        add("signature", sig_ok(original, a.pe_offset) && sig_ok(modified, b.pe_offset));
    }

    const bool appended = b.sections.size() > a.sections.size();

    // (b) headers
    {
        auto coff_a = a.coff;
        auto coff_b = b.coff;
        std::string detail;
        if (appended) {
            coff_b.num_sections = coff_a.num_sections;
            detail = std::to_string(b.sections.size() - a.sections.size()) + " appended section(s)";
        }
        const bool same = coff_a == coff_b && comparable_optional_header(a.optional_header, appended) ==
                                                  comparable_optional_header(b.optional_header, appended);
        bool image_ok = true;
        if (appended) {
            std::size_t extent = 0;
            for (const auto& s : b.sections) {
                extent = std::max<std::size_t>(extent, s.virtual_address + s.virtual_size);
            }
            image_ok = b.optional_header.size_of_image() >= extent;
            if (!image_ok) {
                detail += "; size_of_image does not cover appended sections";
            }
        }
        add("headers", same && image_ok, same ? detail : "COFF or optional header fields differ");
    }

    // (d) section table entries, minus the raw offsets
    {
        bool ok = b.sections.size() >= a.sections.size();
        std::string detail;
        for (std::size_t i = 0; ok && i < a.sections.size(); ++i) {
            const auto& sa = a.sections[i];
            const auto& sb = b.sections[i];
            const bool names = options.allow_renamed_sections || sa.name == sb.name;
            if (!names || sa.virtual_size != sb.virtual_size || sa.virtual_address != sb.virtual_address ||
                sa.raw_size != sb.raw_size || sa.characteristics != sb.characteristics ||
                sa.relocations != sb.relocations) {
                ok = false;
                detail = "section " + std::to_string(i) + " (" + sa.name_string() + ") entry differs";
            }
        }
        if (!ok && detail.empty()) {
            detail = "modified file lost sections";
        }
        add("sections", ok, detail);
    }

    // (c) content at the resolved offsets; slack past the content end is dead space
    {
        bool ok = b.sections.size() >= a.sections.size();
        std::string detail;
        for (std::size_t i = 0; ok && i < a.sections.size(); ++i) {
            const std::size_t n = content_size(a.sections[i]);
            const auto& da = a.section_data[i];
            const auto& db = b.section_data[i];
            if (db.size() < n || da.size() < n || !std::equal(da.begin(), da.begin() + static_cast<std::ptrdiff_t>(n), db.begin())) {
                ok = false;
                detail = "section " + std::to_string(i) + " (" + a.sections[i].name_string() + ") content differs";
            }
        }
        add("content", ok, detail);
        for (std::size_t i = 0; i < b.sections.size(); ++i) {
            const auto& s = b.sections[i];
            if (s.has_raw_data() && content_size(s) < s.raw_size) {
                report.exempt_regions.emplace_back(s.physical_offset + content_size(s), s.raw_end());
            }
        }
        if (!b.overlay.empty()) {
            report.exempt_regions.emplace_back(modified.size() - b.overlay.size(), modified.size());
        }
    }

    // (e) layout invariants of the modified file
    {
        const auto v = pe::validate(b);
        std::string detail;
        for (const auto& viol : v.violations) {
            detail += (detail.empty() ? "" : "; ") + viol.rule;
        }
        add("layout", v.ok(), detail);
    }

    // (f)
    add("entry-point", a.optional_header.entry_point() == b.optional_header.entry_point());
    return report;
}

}  // namespace advpe
