#include <doctest.h>

#include <filesystem>

#include "advpe/corpus.hpp"
#include "advpe/features.hpp"
#include "advpe/pe_format.hpp"

using namespace advpe;

namespace {

CorpusSpec small_spec() {
    CorpusSpec spec;
    spec.malware_count = 10;
    spec.goodware_count = 8;
    spec.seed = 5;
    return spec;
}

}  // namespace

TEST_CASE("generation is deterministic and labels are ordered") {
    const auto a = generate_corpus(small_spec());
    const auto b = generate_corpus(small_spec());
    REQUIRE(a.size() == 18);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].bytes == b[i].bytes);
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].label == (i < 10 ? 1 : 0));
    }
    auto other = small_spec();
    other.seed = 6;
    CHECK(generate_corpus(other)[3].bytes != a[3].bytes);
}

TEST_CASE("every generated file validates and sits inside the configured ranges") {
    const auto spec = small_spec();
    for (const auto& s : generate_corpus(spec)) {
        const auto pe = pe::parse(s.bytes);
        CHECK(pe::validate(pe).ok());
        CHECK(pe.pe_offset >= spec.min_pe_offset);
        CHECK(pe.pe_offset <= spec.max_pe_offset);
        CHECK(pe.sections.size() >= spec.min_sections);
        CHECK(pe.sections.size() <= spec.max_sections);
        CHECK(std::find(spec.file_alignments.begin(), spec.file_alignments.end(), pe.file_alignment()) !=
              spec.file_alignments.end());
    }
}

TEST_CASE("the first two samples of each class pin the range endpoints") {
    const auto spec = small_spec();
    const auto corpus = generate_corpus(spec);
    for (std::size_t base : {std::size_t{0}, spec.malware_count}) {
        const auto lo = pe::parse(corpus[base].bytes);
        const auto hi = pe::parse(corpus[base + 1].bytes);
        CHECK(lo.pe_offset == spec.min_pe_offset);
        CHECK(lo.file_alignment() == 512);
        CHECK(hi.pe_offset == spec.max_pe_offset);
        CHECK(hi.file_alignment() == 4096);
    }
}

TEST_CASE("invalid specs are rejected") {
    auto spec = small_spec();
    spec.goodware_count = 0;
    CHECK_THROWS_AS(generate_corpus(spec), Error);
    spec = small_spec();
    spec.min_pe_offset = 40;
    CHECK_THROWS_AS(check_spec(spec), Error);
    spec = small_spec();
    spec.max_pe_offset = 600;
    CHECK_THROWS_AS(check_spec(spec), Error);
    spec = small_spec();
    spec.file_alignments = {300};
    CHECK_THROWS_AS(check_spec(spec), Error);
}

TEST_CASE("split holds out every k-th sample of each class") {
    const auto corpus = generate_corpus(small_spec());
    const auto split = split_corpus(corpus, 4);
    CHECK(split.train.size() + split.validation.size() == corpus.size());
    CHECK(split.validation.size() == 2 + 2);
    CHECK(split.validation[0].name == corpus[3].name);
}

TEST_CASE("harvested sections come from goodware .data sections") {
    const auto corpus = generate_corpus(small_spec());
    std::vector<Sample> goodware(corpus.begin() + 10, corpus.end());
    const auto pool = harvest_sections(goodware, 3);
    CHECK(pool.size() <= 3);
    CHECK_FALSE(pool.empty());
    for (const auto& p : pool) CHECK_FALSE(p.empty());
}

TEST_CASE("corpus directories round-trip") {
    const auto corpus = generate_corpus(small_spec());
    const auto dir = (std::filesystem::temp_directory_path() / "advpe_corpus_test").string();
    std::filesystem::remove_all(dir);
    write_corpus(corpus, dir);
    const auto back = read_corpus(dir);
    REQUIRE(back.size() == corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        CHECK(back[i].name == corpus[i].name);
        CHECK(back[i].label == corpus[i].label);
        CHECK(back[i].bytes == corpus[i].bytes);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("features are fixed-length, finite and deterministic") {
    const auto corpus = generate_corpus(small_spec());
    for (const auto& s : corpus) {
        const auto f = extract_features(s.bytes);
        CHECK(f.size() == 64);
        CHECK(f.allFinite());
        CHECK(f == extract_features(s.bytes));
    }
    CHECK(shannon_entropy(Bytes(100, 0)) == 0.0);
    Bytes all(256);
    for (int i = 0; i < 256; ++i) all[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i);
    CHECK(shannon_entropy(all) == doctest::Approx(8.0));
}
