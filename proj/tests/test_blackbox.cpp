#include <doctest.h>

#include <cmath>

#include "advpe/blackbox.hpp"
#include "advpe/calibration.hpp"
#include "advpe/validator.hpp"
#include "advpe/rng.hpp"
#include "support.hpp"

using namespace advpe;

namespace {

// Deterministic, parameter-free scorer: fraction of 0x41 bytes in the file.
class CountingScorer final : public QueryScorer {
public:
    double query(ByteView bytes) const override {
        std::size_t hits = 0;
        for (auto b : bytes) hits += b == 0x41 ? 1 : 0;
        return 1.0 - static_cast<double>(hits) / static_cast<double>(bytes.size());
    }
};

Evaluation sum_objective(const Vector& genes) {
    const double f = genes.sum();
    return {f, f, 0};
}

}  // namespace

TEST_CASE("gene decoding") {
    CHECK(decode_gene(0.0) == 0x00);
    CHECK(decode_gene(1.0) == 0xFF);
    CHECK(decode_gene(0.5) == 128);
    CHECK(decode_gene(0.2) == 51);
    CHECK_THROWS_AS(decode_gene(1.0000001), Error);
    CHECK_THROWS_AS(decode_gene(-0.1), Error);
    CHECK_THROWS_AS(decode_gene(std::nan("")), Error);
}

TEST_CASE("uniform genes decode to a near-uniform byte histogram") {
    Rng rng(1);
    std::vector<double> counts(256, 0.0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) counts[decode_gene(rng.uniform())] += 1;
    // Endpoint bytes own half-width bins under round-half-up.
    double chi2 = 0;
    for (int b = 0; b < 256; ++b) {
        const double p = (b == 0 || b == 255) ? 0.5 / 255.0 : 1.0 / 255.0;
        const double expected = p * draws;
        chi2 += (counts[b] - expected) * (counts[b] - expected) / expected;
    }
    // 255 degrees of freedom, 0.999 quantile is about 330.
    CHECK(chi2 < 330.0);
}

TEST_CASE("generation count and objective calls follow the budget") {
    GeneticConfig cfg;
    cfg.population = 10;
    cfg.query_budget = 3000;
    auto r = genetic_minimize(4, sum_objective, cfg);
    CHECK(r.generations == 300);
    CHECK(r.objective_calls == 3000);
    CHECK(r.best_fitness.size() == 300);

    cfg.query_budget = 10;
    r = genetic_minimize(4, sum_objective, cfg);
    CHECK(r.generations == 1);
    CHECK(r.best.eval.fitness == std::min_element(r.evaluated.begin(), r.evaluated.end(), [](auto& a, auto& b) {
                                     return a.eval.fitness < b.eval.fitness;
                                 })->eval.fitness);

    cfg.query_budget = 25;
    r = genetic_minimize(4, sum_objective, cfg);
    CHECK(r.generations == 2);
    CHECK(r.objective_calls == 20);

    cfg.query_budget = 9;
    CHECK_THROWS_AS(genetic_minimize(4, sum_objective, cfg), Error);
    cfg.population = 1;
    cfg.query_budget = 100;
    CHECK_THROWS_AS(genetic_minimize(4, sum_objective, cfg), Error);
}

TEST_CASE("elitism, gene range and progress") {
    for (bool single_point : {false, true}) {
        GeneticConfig cfg;
        cfg.population = 8;
        cfg.query_budget = 800;
        cfg.seed = 3;
        cfg.single_point_crossover = single_point;
        const auto r = genetic_minimize(12, sum_objective, cfg);
        for (std::size_t g = 1; g < r.best_fitness.size(); ++g) {
            CHECK(r.best_fitness[g] <= r.best_fitness[g - 1]);
        }
        for (const auto& c : r.evaluated) {
            REQUIRE(c.genes.minCoeff() >= 0.0);
            REQUIRE(c.genes.maxCoeff() <= 1.0);
        }
        CHECK(r.best_fitness.back() < r.best_fitness.front());
    }
}

TEST_CASE("parallel evaluation matches serial evaluation") {
    GeneticConfig cfg;
    cfg.population = 12;
    cfg.query_budget = 240;
    cfg.seed = 8;
    const auto serial = genetic_minimize(6, sum_objective, cfg);
    cfg.threads = 4;
    const auto parallel = genetic_minimize(6, sum_objective, cfg);
    CHECK(serial.best_fitness == parallel.best_fitness);
    CHECK(serial.best.genes == parallel.best.genes);
}

TEST_CASE("genetic attack meters queries at the scorer and preserves structure") {
    const CountingScorer scorer;
    const auto& z = testing::small_corpus()[0].bytes;
    for (std::size_t budget : {50, 57, 120}) {
        const MeteredScorer metered(scorer);
        GeneticConfig cfg;
        cfg.population = 10;
        cfg.query_budget = budget;
        const auto r = genetic_attack(z, metered, ManipulationKind::PartialDos, cfg);
        CHECK(metered.queries() == std::min(budget, r.search.generations * cfg.population));
        CHECK(r.search.generations == budget / 10);
        CHECK(r.trace.records.size() == r.search.generations);
        CHECK(r.trace.final_score == scorer.query(r.adversarial));
        CHECK(structural_equivalence(z, r.adversarial).equivalent());
    }
}

TEST_CASE("gamma objective decomposes into score plus size penalty") {
    const CountingScorer scorer;
    const auto& z = testing::small_corpus()[1].bytes;
    std::vector<Sample> goodware;
    for (const auto& s : testing::small_corpus()) {
        if (s.label == 0) goodware.push_back(s);
    }
    GammaConfig gamma{1e-5, harvest_sections(goodware, 5), 5};
    REQUIRE_FALSE(gamma.benign_sections.empty());
    GeneticConfig cfg;
    cfg.population = 6;
    cfg.query_budget = 60;
    const auto r = gamma_padding_attack(z, scorer, gamma, cfg);
    for (const auto& c : r.search.evaluated) {
        const auto payload = gamma_payload(c.genes, gamma.benign_sections);
        const double score = scorer.query(apply_padding(z, {payload, 0}));
        CHECK(c.eval.injected_bytes == payload.size());
        CHECK(std::abs(c.eval.fitness - (score + gamma.lambda * static_cast<double>(payload.size()))) <= 1e-9);
    }
    CHECK(structural_equivalence(z, r.adversarial).equivalent());

    gamma.lambda = 0.0;
    const auto plain = gamma_padding_attack(z, scorer, gamma, cfg);
    CHECK(plain.search.best.eval.fitness == plain.search.best.eval.score);
    CHECK(plain.search.best.eval.fitness == scorer.query(plain.adversarial));

    gamma.benign_sections.clear();
    CHECK_THROWS_AS(gamma_padding_attack(z, scorer, gamma, cfg), Error);
}

TEST_CASE("transfer matrix of unmodified samples is the baseline detection rate") {
    auto a = testing::tiny_model(ModelKind::HandCrafted);
    auto b = testing::tiny_model(ModelKind::ToyHierLin);
    std::vector<Bytes> malware;
    for (const auto& s : testing::small_corpus()) {
        if (s.label == 1) malware.push_back(s.bytes);
    }
    CHECK_THROWS_AS(transfer_evaluate({malware}, {&a, &b}), Error);
    a.set_threshold(0.5);
    b.set_threshold(0.5);
    const auto m = transfer_evaluate({malware, malware}, {&a, &b});
    std::vector<double> sa, sb;
    for (const auto& x : malware) {
        sa.push_back(a.score(x));
        sb.push_back(b.score(x));
    }
    CHECK(m(0, 0) == detection_rate(sa, 0.5));
    CHECK(m(1, 1) == detection_rate(sb, 0.5));
    CHECK(m(0, 1) == m(1, 1));
}
