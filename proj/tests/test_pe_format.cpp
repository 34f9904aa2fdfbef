#include <doctest.h>

#include "advpe/pe_format.hpp"
#include "support.hpp"

using namespace advpe;

namespace {

Bytes sample_bytes() { return testing::small_corpus().front().bytes; }

}  // namespace

TEST_CASE("round trip reproduces every corpus file byte for byte") {
    for (const auto& s : testing::small_corpus()) {
        CHECK(pe::serialize(pe::parse(s.bytes)) == s.bytes);
    }
}

TEST_CASE("parsed fields match hand-decoded offsets") {
    const auto b = sample_bytes();
    const auto pe = pe::parse(b);
    const std::uint32_t pe_offset = read_u32(b, 0x3c);
    CHECK(pe.pe_offset == pe_offset);
    CHECK(b[pe_offset] == 'P');
    CHECK(b[pe_offset + 1] == 'E');
    CHECK(pe.coff.num_sections == read_u16(b, pe_offset + 6));
    CHECK(pe.sections.size() == pe.coff.num_sections);
    const std::size_t opt = pe_offset + 24;
    CHECK(pe.file_alignment() == read_u32(b, opt + 36));
    CHECK(pe.size_of_headers() == read_u32(b, opt + 60));
    const std::size_t table = opt + read_u16(b, pe_offset + 20);
    CHECK(pe.section_table_offset() == table);
    CHECK(pe.sections[0].physical_offset == read_u32(b, table + 20));
    CHECK(pe.sections[0].raw_size == read_u32(b, table + 16));
}

TEST_CASE("generated files validate") {
    for (const auto& s : testing::small_corpus()) {
        const auto report = pe::validate(ByteView(s.bytes));
        CHECK_MESSAGE(report.ok(), report.to_string());
    }
}

TEST_CASE("malformed inputs are rejected with the matching error") {
    auto expect = [](ByteView b, ErrorCode code) {
        try {
            pe::parse(b);
            FAIL("parse accepted malformed input");
        } catch (const Error& e) {
            CHECK(e.code() == code);
        }
    };
    const auto good = sample_bytes();

    Bytes bad_magic = good;
    bad_magic[0] = 'X';
    expect(bad_magic, ErrorCode::MalformedMagic);

    Bytes far = good;
    write_u32(far, 0x3c, static_cast<std::uint32_t>(good.size() + 10));
    expect(far, ErrorCode::BadPeOffset);

    Bytes inside = good;
    write_u32(inside, 0x3c, 32);
    expect(inside, ErrorCode::BadPeOffset);

    Bytes no_sig = good;
    no_sig[read_u32(good, 0x3c)] = 'Q';
    expect(no_sig, ErrorCode::MissingPeSignature);

    expect(ByteView(good).first(read_u32(good, 0x3c) + 10), ErrorCode::TruncatedHeader);
    expect(ByteView(good).first(10), ErrorCode::TruncatedHeader);
}

TEST_CASE("overlapping sections are rejected") {
    auto pe = pe::parse(sample_bytes());
    REQUIRE(pe.sections.size() >= 2);
    Bytes b = pe::serialize(pe);
    const std::size_t entry1 = pe.section_table_offset() + pe::section_entry_size;
    write_u32(b, entry1 + 20, pe.sections[0].physical_offset);
    CHECK_THROWS_AS(pe::parse(b), Error);
}

TEST_CASE("validate flags a bad file alignment and a short header size") {
    auto pe = pe::parse(sample_bytes());
    auto odd = pe;
    odd.optional_header.set_file_alignment(700);
    CHECK(pe::validate(odd).has("file-alignment"));

    auto small = pe;
    small.optional_header.set_size_of_headers(static_cast<std::uint32_t>(pe.headers_end() - 8));
    CHECK(pe::validate(small).has("header-size"));
}

TEST_CASE("pe_offset accessors agree with the raw field") {
    Bytes b = sample_bytes();
    CHECK(pe::read_pe_offset(b) == read_u32(b, 0x3c));
    pe::write_pe_offset(b, 0x1234);
    CHECK(read_u32(b, 0x3c) == 0x1234);
}
