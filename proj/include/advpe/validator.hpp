// advpe - adversarial PE manipulation toolkit
// Structural functionality-preservation oracle.

#ifndef ADVPE_VALIDATOR_HPP
#define ADVPE_VALIDATOR_HPP

#include <string>
#include <vector>

#include "advpe/common.hpp"

namespace advpe {

struct EquivalenceCheck {
    std::string id;
    bool passed = true;
    std::string detail;
};

struct EquivalenceReport {
    std::vector<EquivalenceCheck> checks;
    // Regions of the modified file treated as dead space (slack, overlay).
    std::vector<std::pair<std::size_t, std::size_t>> exempt_regions;

    [[nodiscard]] bool equivalent() const;
    [[nodiscard]] const EquivalenceCheck* find(std::string_view id) const;
    [[nodiscard]] std::string to_string() const;
};

struct EquivalenceOptions {
    bool allow_renamed_sections = false;  // declared HeaderFields manipulation
};

// Certifies that `modified` is a structure-preserving rewrite of `original`:
//   signature   PE signature at each file's pe_offset
//   headers     COFF and optional header identical modulo size_of_headers
//               (and section count / size_of_image when sections were appended)
//   content     every original section's meaningful bytes found at its new offset
//   sections    names, virtual addresses and sizes, characteristics preserved
//   layout      the modified file validates (alignment, header size, overlap)
//   entry-point entry-point RVA unchanged
// Throws Error on parse failure of either input.
EquivalenceReport structural_equivalence(ByteView original, ByteView modified,
                                         const EquivalenceOptions& options = {});

}  // namespace advpe

#endif  // ADVPE_VALIDATOR_HPP
