// advpe - adversarial PE manipulation toolkit
// Query-only attacks: a genetic optimizer over [0, 1]^k encodings, its use
// with byte-based manipulations, the size-penalized benign-padding variant,
// and surrogate-to-target transfer evaluation.

#ifndef ADVPE_BLACKBOX_HPP
#define ADVPE_BLACKBOX_HPP

#include <Eigen/Dense>
#include <atomic>
#include <functional>
#include <vector>

#include "advpe/manipulations.hpp"
#include "advpe/models.hpp"
#include "advpe/whitebox.hpp"

namespace advpe {

// The only view a black-box attack has of its target.
class QueryScorer {
public:
    virtual ~QueryScorer() = default;
    // Must be safe to call concurrently.
    virtual double query(ByteView bytes) const = 0;
};

class LocalScorer final : public QueryScorer {
public:
    explicit LocalScorer(const Classifier& model) : model_(model) {}
    double query(ByteView bytes) const override { return model_.score(bytes); }

private:
    const Classifier& model_;
};

// Counts every query that reaches the wrapped scorer.
class MeteredScorer final : public QueryScorer {
public:
    explicit MeteredScorer(const QueryScorer& inner) : inner_(inner) {}
    double query(ByteView bytes) const override {
        queries_.fetch_add(1, std::memory_order_relaxed);
        return inner_.query(bytes);
    }
    [[nodiscard]] std::size_t queries() const noexcept { return queries_.load(); }

private:
    const QueryScorer& inner_;
    mutable std::atomic<std::size_t> queries_{0};
};

struct GeneticConfig {
    std::size_t population = 10;     // N
    std::size_t query_budget = 3000; // T
    double mutation_prob = 0.05;
    std::uint64_t seed = 0;
    bool single_point_crossover = false;
    std::size_t threads = 1;         // concurrent fitness evaluations
};

// One objective evaluation: F = score + penalty.
struct Evaluation {
    double fitness = 0.0;
    double score = 0.0;
    std::size_t injected_bytes = 0;
};

struct Candidate {
    Vector genes;
    Evaluation eval;
};

struct GeneticResult {
    Candidate best;
    std::size_t generations = 0;
    std::size_t objective_calls = 0;
    std::vector<double> best_fitness;     // per generation, non-increasing
    std::vector<Candidate> evaluated;     // every candidate, evaluation order
};

using Objective = std::function<Evaluation(const Vector& genes)>;

// round(g * 255), half-up. Throws Error{GeneOutOfRange} outside [0, 1] or NaN.
std::uint8_t decode_gene(double gene);
Bytes decode(const Vector& genes);

// Elitist genetic minimization. The initial random population is generation
// 1; every generation costs exactly N objective calls and the loop runs
// floor(T / N) generations. Throws Error{BudgetTooSmall} if T < N and
// Error{InvalidConfig} if N < 2.
GeneticResult genetic_minimize(std::size_t dimension, const Objective& objective, const GeneticConfig& config);

struct BlackboxResult {
    Bytes adversarial;
    AttackTrace trace;  // one record per generation: best score so far
    GeneticResult search;
};

// Genetic search over the manipulation's payload bytes, F = score.
BlackboxResult genetic_attack(ByteView z, const QueryScorer& scorer, ManipulationKind kind,
                              const GeneticConfig& config, std::size_t requested_size = 0);

struct GammaConfig {
    double lambda = 1e-5;
    std::vector<Bytes> benign_sections;
    std::size_t max_sections = 100;
};

// Appends, for each harvested section i, its first round(g_i * |s_i|) bytes
// as padding; F = score + lambda * injected bytes.
// Throws Error{EmptyBenignPool}.
BlackboxResult gamma_padding_attack(ByteView z, const QueryScorer& scorer, const GammaConfig& gamma,
                                    const GeneticConfig& config);
Bytes gamma_payload(const Vector& genes, std::span<const Bytes> sections);

// matrix(i, j) = fraction of samples crafted on surrogate i that target j
// scores at or above its threshold. Throws Error{UncalibratedTarget}.
Eigen::MatrixXd transfer_evaluate(const std::vector<std::vector<Bytes>>& crafted,
                                  const std::vector<const Classifier*>& targets);

}  // namespace advpe

#endif  // ADVPE_BLACKBOX_HPP
