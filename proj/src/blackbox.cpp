// advpe - adversarial PE manipulation toolkit

#include "advpe/blackbox.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "advpe/calibration.hpp"
#include "advpe/rng.hpp"

namespace advpe {

std::uint8_t decode_gene(double gene) {
    if (!(gene >= 0.0 && gene <= 1.0)) {
        throw Error(ErrorCode::GeneOutOfRange, "gene " + std::to_string(gene) + " outside [0, 1]");
    }
    return static_cast<std::uint8_t>(std::floor(gene * 255.0 + 0.5));
}

Bytes decode(const Vector& genes) {
    Bytes out(static_cast<std::size_t>(genes.size()));
    for (Index i = 0; i < genes.size(); ++i) {
        out[static_cast<std::size_t>(i)] = decode_gene(genes(i));
    }
    return out;
}

namespace {

void evaluate_all(std::vector<Candidate>& batch, const Objective& objective, std::size_t threads) {
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, batch.size());
    if (workers == 1) {
        for (auto& c : batch) {
            c.eval = objective(c.genes);
        }
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < batch.size(); i += workers) {
                    batch[i].eval = objective(batch[i].genes);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }
}

Vector random_genes(std::size_t k, Rng& rng) {
    Vector g(static_cast<Index>(k));
    for (Index i = 0; i < g.size(); ++i) {
        g(i) = rng.uniform();
    }
    return g;
}

}  // namespace

GeneticResult genetic_minimize(std::size_t dimension, const Objective& objective, const GeneticConfig& config) {
    const std::size_t n = config.population;
    if (n < 2) {
        throw Error(ErrorCode::InvalidConfig, "population must be at least 2");
    }
    if (config.query_budget < n) {
        throw Error(ErrorCode::BudgetTooSmall, "query budget " + std::to_string(config.query_budget) +
                                                   " is below the population size " + std::to_string(n));
    }
    if (!(config.mutation_prob >= 0.0 && config.mutation_prob <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "mutation probability must lie in [0, 1]");
    }
    Rng rng(config.seed);
    GeneticResult result;

    std::vector<Candidate> population(n);
    for (auto& c : population) {
        c.genes = random_genes(dimension, rng);
    }
    evaluate_all(population, objective, config.threads);
    result.objective_calls += n;
    result.evaluated.insert(result.evaluated.end(), population.begin(), population.end());
    auto by_fitness = [](const Candidate& a, const Candidate& b) { return a.eval.fitness < b.eval.fitness; };
    std::stable_sort(population.begin(), population.end(), by_fitness);
    result.generations = 1;
    result.best_fitness.push_back(population.front().eval.fitness);

    const auto d = static_cast<Index>(dimension);
    while (result.objective_calls + n <= config.query_budget) {
        std::vector<Candidate> offspring(n);
        for (auto& child : offspring) {
            const auto& a = population[rng.below(n)].genes;
            const auto& b = population[rng.below(n)].genes;
            child.genes.resize(d);
            if (config.single_point_crossover) {
                const auto cut = static_cast<Index>(rng.below(dimension + 1));
                child.genes.head(cut) = a.head(cut);
                child.genes.tail(d - cut) = b.tail(d - cut);
            } else {
                for (Index i = 0; i < d; ++i) {
                    child.genes(i) = rng.chance(0.5) ? a(i) : b(i);
                }
            }
            for (Index i = 0; i < d; ++i) {
                if (rng.chance(config.mutation_prob)) {
                    child.genes(i) = rng.uniform();
                }
            }
        }
        evaluate_all(offspring, objective, config.threads);
        result.objective_calls += n;
        result.evaluated.insert(result.evaluated.end(), offspring.begin(), offspring.end());

        population.insert(population.end(), std::make_move_iterator(offspring.begin()),
                          std::make_move_iterator(offspring.end()));
        std::stable_sort(population.begin(), population.end(), by_fitness);
        population.resize(n);
        ++result.generations;
        result.best_fitness.push_back(population.front().eval.fitness);
    }
    result.best = population.front();
    return result;
}

namespace {

AttackTrace trace_from(const GeneticResult& search, Bytes payload) {
    AttackTrace trace;
    trace.initial_score = search.evaluated.front().eval.score;
    const std::size_t n = search.evaluated.size() / search.generations;
    std::size_t best = 0;
    for (std::size_t g = 0; g < search.generations; ++g) {
        for (std::size_t i = g * n; i < (g + 1) * n; ++i) {
            if (search.evaluated[i].eval.fitness < search.evaluated[best].eval.fitness) {
                best = i;
            }
        }
        const auto& e = search.evaluated[best].eval;
        trace.records.push_back({g + 1, e.score, e.injected_bytes});
    }
    trace.final_score = search.best.eval.score;
    trace.payload = std::move(payload);
    trace.queries = search.objective_calls;
    return trace;
}

}  // namespace

BlackboxResult genetic_attack(ByteView z, const QueryScorer& scorer, ManipulationKind kind,
                              const GeneticConfig& config, std::size_t requested_size) {
    const auto slot = PayloadSlot::create(z, kind, requested_size);
    const std::size_t k = slot.payload_size();
    Objective objective = [&](const Vector& genes) {
        const double s = scorer.query(slot.apply(decode(genes)));
        return Evaluation{s, s, k};
    };
    BlackboxResult result;
    result.search = genetic_minimize(k, objective, config);
    Bytes payload = decode(result.search.best.genes);
    result.adversarial = slot.apply(payload);
    result.trace = trace_from(result.search, std::move(payload));
    return result;
}

Bytes gamma_payload(const Vector& genes, std::span<const Bytes> sections) {
    Bytes payload;
    for (Index i = 0; i < genes.size(); ++i) {
        const auto& s = sections[static_cast<std::size_t>(i)];
        if (!(genes(i) >= 0.0 && genes(i) <= 1.0)) {
            throw Error(ErrorCode::GeneOutOfRange, "gene " + std::to_string(genes(i)) + " outside [0, 1]");
        }
        const auto take = static_cast<std::size_t>(std::floor(genes(i) * static_cast<double>(s.size()) + 0.5));
        payload.insert(payload.end(), s.begin(), s.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return payload;
}

BlackboxResult gamma_padding_attack(ByteView z, const QueryScorer& scorer, const GammaConfig& gamma,
                                    const GeneticConfig& config) {
    if (gamma.benign_sections.empty() || gamma.max_sections == 0) {
        throw Error(ErrorCode::EmptyBenignPool, "no harvested benign sections");
    }
    if (!(gamma.lambda >= 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "lambda must be non-negative");
    }
    const std::size_t k = std::min(gamma.benign_sections.size(), gamma.max_sections);
    const std::span<const Bytes> pool(gamma.benign_sections.data(), k);
    Objective objective = [&](const Vector& genes) {
        Bytes payload = gamma_payload(genes, pool);
        const std::size_t size = payload.size();
        const double s = scorer.query(apply_padding(z, {std::move(payload), 0}));
        return Evaluation{s + gamma.lambda * static_cast<double>(size), s, size};
    };
    BlackboxResult result;
    result.search = genetic_minimize(k, objective, config);
    Bytes payload = gamma_payload(result.search.best.genes, pool);
    result.adversarial = apply_padding(z, {payload, 0});
    result.trace = trace_from(result.search, std::move(payload));
    return result;
}

Eigen::MatrixXd transfer_evaluate(const std::vector<std::vector<Bytes>>& crafted,
                                  const std::vector<const Classifier*>& targets) {
    for (const auto* t : targets) {
        if (!t->threshold()) {
            throw Error(ErrorCode::UncalibratedTarget, std::string(to_string(t->kind())) + " has no threshold");
        }
    }
    Eigen::MatrixXd m(static_cast<Index>(crafted.size()), static_cast<Index>(targets.size()));
    for (std::size_t i = 0; i < crafted.size(); ++i) {
        for (std::size_t j = 0; j < targets.size(); ++j) {
            std::vector<double> scores;
            scores.reserve(crafted[i].size());
            for (const auto& b : crafted[i]) {
                scores.push_back(targets[j]->score(b));
            }
            m(static_cast<Index>(i), static_cast<Index>(j)) = detection_rate(scores, *targets[j]->threshold());
        }
    }
    return m;
}

}  // namespace advpe
