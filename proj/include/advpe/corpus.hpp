// advpe - adversarial PE manipulation toolkit
// Synthetic, inert PE32 corpus with planted class signals.

#ifndef ADVPE_CORPUS_HPP
#define ADVPE_CORPUS_HPP

#include <string>
#include <vector>

#include "advpe/common.hpp"

namespace advpe {

struct Sample {
    std::string name;
    Bytes bytes;
    int label = 0;  // 1 malware, 0 goodware
};

struct CorpusSpec {
    std::size_t malware_count = 200;
    std::size_t goodware_count = 200;
    std::size_t min_sections = 3;
    std::size_t max_sections = 5;
    std::size_t min_section_bytes = 300;   // meaningful bytes per section before alignment
    std::size_t max_section_bytes = 5000;
    std::vector<std::uint32_t> file_alignments{512, 512, 512, 1024, 2048, 4096, 4096};
    std::uint32_t min_pe_offset = 124;
    std::uint32_t max_pe_offset = 296;
    double overlay_probability = 0.2;
    // Fraction of samples whose content signal is flipped to the other class
    // (headers keep the true class).
    double content_noise = 0.1;
    std::uint64_t seed = 1;
};

// Throws Error{InvalidSpec}.
void check_spec(const CorpusSpec& spec);

// Malware first, then goodware. The first two samples of each class pin the
// pe_offset range endpoints: (min_pe_offset, smallest alignment) and
// (max_pe_offset, largest alignment).
std::vector<Sample> generate_corpus(const CorpusSpec& spec);

// Deterministic split: every k-th sample of each class goes to validation.
struct Split {
    std::vector<Sample> train;
    std::vector<Sample> validation;
};
Split split_corpus(const std::vector<Sample>& corpus, std::size_t every = 4);

// Harvest initialized-data sections from goodware, the benign pool for
// section-harvesting attacks.
std::vector<Bytes> harvest_sections(const std::vector<Sample>& goodware, std::size_t max_sections,
                                    std::string_view section_name = ".data");

void write_corpus(const std::vector<Sample>& corpus, const std::string& dir);
std::vector<Sample> read_corpus(const std::string& dir);

}  // namespace advpe

#endif  // ADVPE_CORPUS_HPP
