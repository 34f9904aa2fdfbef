#include <doctest.h>

#include "advpe/manipulations.hpp"
#include "advpe/pe_format.hpp"
#include "advpe/validator.hpp"
#include "support.hpp"

using namespace advpe;

namespace {

const Bytes& sample() { return testing::small_corpus()[5].bytes; }

bool check_failed(const EquivalenceReport& r, std::string_view id) {
    const auto* c = r.find(id);
    return c != nullptr && !c->passed;
}

}  // namespace

TEST_CASE("identity is equivalent") {
    const auto r = structural_equivalence(sample(), sample());
    CHECK(r.equivalent());
    for (const auto* id : {"signature", "headers", "sections", "content", "layout", "entry-point"}) {
        CHECK_MESSAGE(r.find(id) != nullptr, id);
    }
}

TEST_CASE("extend output is equivalent") {
    const auto mask = extend_mask(sample(), 512);
    const auto out = apply_extend(sample(), {Bytes(mask.count(), 0x41), 512});
    CHECK(structural_equivalence(sample(), out).equivalent());
}

TEST_CASE("a flipped section content byte fails the content check") {
    auto pe = pe::parse(sample());
    Bytes out = sample();
    out[pe.sections[0].physical_offset] ^= 0xFF;
    const auto r = structural_equivalence(sample(), out);
    CHECK_FALSE(r.equivalent());
    CHECK(check_failed(r, "content"));
}

TEST_CASE("a moved entry point fails the entry-point check") {
    auto pe = pe::parse(sample());
    Bytes out = sample();
    const std::size_t field = pe.pe_offset + 24 + pe::opt::entry_point;
    write_u32(out, field, read_u32(out, field) + 4);
    const auto r = structural_equivalence(sample(), out);
    CHECK(check_failed(r, "entry-point"));
}

TEST_CASE("changed section characteristics fail the sections check") {
    auto pe = pe::parse(sample());
    Bytes out = sample();
    const std::size_t field = pe.section_table_offset() + 36;
    write_u32(out, field, read_u32(out, field) ^ 0x20000000);
    CHECK(check_failed(structural_equivalence(sample(), out), "sections"));
}

TEST_CASE("a changed timestamp fails the headers check") {
    auto pe = pe::parse(sample());
    Bytes out = sample();
    out[pe.pe_offset + 8] ^= 1;
    CHECK(check_failed(structural_equivalence(sample(), out), "headers"));
}

TEST_CASE("overlay and slack are listed as exempt regions") {
    const auto padded = apply_padding(sample(), {Bytes(64, 1), 64});
    const auto r = structural_equivalence(sample(), padded);
    CHECK(r.equivalent());
    bool overlay = false;
    for (const auto& [b, e] : r.exempt_regions) {
        overlay |= (e == padded.size() && b <= sample().size());
    }
    CHECK(overlay);
}

TEST_CASE("unparseable modified file throws") {
    Bytes broken = sample();
    broken[0] = 0;
    CHECK_THROWS_AS(structural_equivalence(sample(), broken), Error);
}
