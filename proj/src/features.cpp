// advpe - adversarial PE manipulation toolkit

#include "advpe/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "advpe/pe_format.hpp"

namespace advpe {

namespace {

constexpr std::size_t entropy_window = 256;
constexpr std::uint32_t scn_execute = 0x20000000;
constexpr std::uint32_t scn_write = 0x80000000;

bool standard_name(const std::string& name) {
    static const std::array<std::string_view, 8> names{".text", ".rdata", ".data", ".rsrc",
                                                       ".reloc", ".idata", ".pdata", ".tls"};
    return std::find(names.begin(), names.end(), name) != names.end();
}

}  // namespace

double shannon_entropy(ByteView data) {
    if (data.empty()) {
        return 0.0;
    }
    std::array<std::size_t, 256> freq{};
    for (auto b : data) {
        ++freq[b];
    }
    const double n = static_cast<double>(data.size());
    double h = 0.0;
    for (auto c : freq) {
        if (c != 0) {
            const double p = static_cast<double>(c) / n;
            h -= p * std::log2(p);
        }
    }
    return h;
}

Eigen::VectorXd extract_features(ByteView bytes) {
    const auto pe = pe::parse(bytes);
    Eigen::VectorXd f = Eigen::VectorXd::Zero(feature_dimension);

    // Entropy histogram over non-overlapping windows.
    std::size_t windows = 0;
    for (std::size_t off = 0; off < bytes.size(); off += entropy_window) {
        const auto chunk = bytes.subspan(off, std::min(entropy_window, bytes.size() - off));
        const double h = shannon_entropy(chunk);
        const auto bucket = std::min<Eigen::Index>(static_cast<Eigen::Index>(h * 4.0), entropy_buckets - 1);
        f(bucket) += 1.0;
        ++windows;
    }
    if (windows > 0) {
        f.head(entropy_buckets) /= static_cast<double>(windows);
    }

    const auto& opt = pe.optional_header.raw();
    const double n_sections = static_cast<double>(pe.sections.size());
    const std::uint32_t ep = pe.optional_header.entry_point();
    std::size_t ep_section = pe.sections.size();
    for (std::size_t i = 0; i < pe.sections.size(); ++i) {
        const auto& s = pe.sections[i];
        if (ep >= s.virtual_address && ep < s.virtual_address + std::max(s.virtual_size, s.raw_size)) {
            ep_section = i;
            break;
        }
    }

    Eigen::Index h = entropy_buckets;
    f(h++) = std::log2(static_cast<double>(bytes.size()) + 1.0) / 20.0;
    f(h++) = static_cast<double>(pe.pe_offset) / 512.0;
    f(h++) = n_sections / 8.0;
    f(h++) = std::log2(std::max<double>(pe.file_alignment(), 1.0)) / 12.0;
    f(h++) = static_cast<double>(pe.size_of_headers()) / 4096.0;
    f(h++) = static_cast<double>(pe.coff.timestamp) / 4294967296.0;
    f(h++) = (pe.coff.characteristics & 0x0100) ? 1.0 : 0.0;
    f(h++) = (pe.coff.characteristics & 0x8000) ? 1.0 : 0.0;
    f(h++) = static_cast<double>(opt[2]) / 32.0;
    f(h++) = static_cast<double>(read_u16(opt, 68)) / 4.0;
    f(h++) = read_u16(opt, 70) != 0 ? 1.0 : 0.0;
    f(h++) = read_u32(opt, pe::opt::checksum) != 0 ? 1.0 : 0.0;
    f(h++) = ep_section == 0 ? 1.0 : 0.0;
    f(h++) = ep_section < pe.sections.size() ? static_cast<double>(ep_section + 1) / n_sections : 0.0;
    f(h++) = static_cast<double>(pe.overlay.size()) / static_cast<double>(bytes.size());
    f(h++) = static_cast<double>(read_u16(opt, 40)) / 10.0;

    Eigen::Index s0 = entropy_buckets + header_features;
    if (!pe.sections.empty()) {
        double sum_h = 0, max_h = 0, min_h = 8, exec = 0, write = 0, wx = 0, named = 0, ratio = 0, slack = 0,
               high = 0, low = 0, raw_total = 0, ep_h = 0, dotted = 0, empty = 0, printable = 0;
        for (std::size_t i = 0; i < pe.sections.size(); ++i) {
            const auto& s = pe.sections[i];
            const auto& data = pe.section_data[i];
            const double e = shannon_entropy(data);
            sum_h += e;
            max_h = std::max(max_h, e);
            min_h = std::min(min_h, e);
            exec += (s.characteristics & scn_execute) ? 1 : 0;
            write += (s.characteristics & scn_write) ? 1 : 0;
            wx += ((s.characteristics & scn_execute) && (s.characteristics & scn_write)) ? 1 : 0;
            named += standard_name(s.name_string()) ? 1 : 0;
            ratio += s.virtual_size == 0 ? 1.0 : std::min(4.0, static_cast<double>(s.raw_size) / s.virtual_size);
            slack += s.raw_size > s.virtual_size ? static_cast<double>(s.raw_size - s.virtual_size) : 0.0;
            high += e > 7.0 ? 1 : 0;
            low += e < 1.0 ? 1 : 0;
            raw_total += s.raw_size;
            if (i == ep_section) {
                ep_h = e;
            }
            dotted += s.name[0] == '.' ? 1 : 0;
            empty += s.raw_size == 0 ? 1 : 0;
            const auto printable_count =
                std::count_if(data.begin(), data.end(), [](std::uint8_t b) { return b >= 0x20 && b < 0x7f; });
            printable += data.empty() ? 0.0 : static_cast<double>(printable_count) / static_cast<double>(data.size());
        }
        f(s0++) = sum_h / n_sections / 8.0;
        f(s0++) = max_h / 8.0;
        f(s0++) = min_h / 8.0;
        f(s0++) = exec / n_sections;
        f(s0++) = write / n_sections;
        f(s0++) = wx / n_sections;
        f(s0++) = named / n_sections;
        f(s0++) = ratio / n_sections / 4.0;
        f(s0++) = raw_total > 0 ? slack / raw_total : 0.0;
        f(s0++) = high / n_sections;
        f(s0++) = low / n_sections;
        f(s0++) = std::log2(raw_total + 1.0) / 20.0;
        f(s0++) = ep_h / 8.0;
        f(s0++) = dotted / n_sections;
        f(s0++) = empty / n_sections;
        f(s0++) = printable / n_sections;
    }
    return f;
}

}  // namespace advpe
