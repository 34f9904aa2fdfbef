// Shared fixtures for the unit tests.

#ifndef ADVPE_TESTS_SUPPORT_HPP
#define ADVPE_TESTS_SUPPORT_HPP

#include <vector>

#include "advpe/corpus.hpp"
#include "advpe/models.hpp"

namespace advpe::testing {

inline const std::vector<Sample>& small_corpus() {
    static const std::vector<Sample> corpus = [] {
        CorpusSpec spec;
        spec.malware_count = 12;
        spec.goodware_count = 12;
        spec.seed = 99;
        return generate_corpus(spec);
    }();
    return corpus;
}

// Narrow differentiable models that keep gradient checks fast.
inline Classifier tiny_model(ModelKind kind, std::uint64_t seed = 3) {
    ModelOptions o;
    if (kind == ModelKind::ToyMalConv) {
        o.window = 2000;
        o.filters = 6;
        o.hidden = 5;
    } else if (kind != ModelKind::HandCrafted) {
        o.window = 1024;
        o.filters = 4;
    }
    return Classifier::create(kind, seed, o);
}

}  // namespace advpe::testing

#endif  // ADVPE_TESTS_SUPPORT_HPP
