// advpe - adversarial PE manipulation toolkit

#include "advpe/whitebox.hpp"

#include <algorithm>
#include <cstdio>

#include "advpe/rng.hpp"

namespace advpe {

namespace {

void require_differentiable(const Classifier& model) {
    if (!model.differentiable()) {
        throw Error(ErrorCode::NotDifferentiable,
                    std::string(to_string(model.kind())) + " exposes no input gradient");
    }
}

void finish(AttackTrace& trace, const Classifier& model) {
    trace.threshold = model.threshold();
    trace.evaded = trace.threshold && trace.final_score < *trace.threshold;
}

}  // namespace

std::pair<Bytes, AttackTrace> attack(ByteView z, const Classifier& model, ManipulationKind kind,
                                     const WhiteboxConfig& config) {
    require_differentiable(model);
    if (config.gamma == 0 || config.iterations == 0) {
        throw Error(ErrorCode::InvalidConfig, "gamma and iterations must be at least 1");
    }
    const auto slot = PayloadSlot::create(z, kind, config.requested_size);
    const auto& positions = slot.positions();
    const auto window = static_cast<std::size_t>(model.window());

    std::vector<std::size_t> active;
    for (std::size_t k = 0; k < positions.size(); ++k) {
        if (positions[k] < window) {
            active.push_back(k);
        }
    }

    Bytes t = slot.current_payload();
    if (config.random_init) {
        Rng rng(config.seed);
        for (auto& b : t) {
            b = rng.byte();
        }
    }

    const Matrix E = model.embedding_table();
    Matrix x = model.embed(slot.apply(t));
    Matrix grad;
    Scalar score = model.score_and_gradient(x, grad);

    AttackTrace trace;
    trace.initial_score = score;
    trace.queries = 1;
    std::vector<bool> tabu(positions.size(), false);
    std::vector<std::pair<Scalar, std::size_t>> ranked;

    for (std::size_t it = 1; it <= config.iterations; ++it) {
        auto rank = [&] {
            ranked.clear();
            for (std::size_t k : active) {
                if (tabu[k]) {
                    continue;
                }
                const Scalar g = grad.row(static_cast<Index>(positions[k])).norm();
                if (g > 0) {
                    ranked.emplace_back(g, k);
                }
            }
        };
        rank();
        if (ranked.empty() && std::find(tabu.begin(), tabu.end(), true) != tabu.end()) {
            std::fill(tabu.begin(), tabu.end(), false);
            rank();
        }
        const std::size_t take = std::min(config.gamma, ranked.size());
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(),
                          [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });

        Bytes proposal = t;
        std::size_t changed = 0;
        for (std::size_t r = 0; r < take; ++r) {
            const std::size_t k = ranked[r].second;
            const auto p = static_cast<Index>(positions[k]);
            const auto b = reconstruct_byte(x.row(p), -grad.row(p), E);
            if (b && *b != proposal[k]) {
                proposal[k] = *b;
                ++changed;
            }
        }
        auto mark_tabu = [&] {
            for (std::size_t r = 0; r < take; ++r) {
                tabu[ranked[r].second] = true;
            }
        };
        if (changed == 0) {
            mark_tabu();
            trace.records.push_back({it, score, 0});
            continue;
        }

        Matrix x_next = model.embed(slot.apply(proposal));
        Matrix grad_next;
        const Scalar next = model.score_and_gradient(x_next, grad_next);
        ++trace.queries;
        if (next <= score) {
            t = std::move(proposal);
            x = std::move(x_next);
            grad = std::move(grad_next);
            score = next;
            std::fill(tabu.begin(), tabu.end(), false);
            trace.records.push_back({it, score, changed});
        } else {
            mark_tabu();
            trace.records.push_back({it, score, 0});
        }
    }

    Bytes out = slot.apply(t);
    trace.final_score = score;
    trace.payload = std::move(t);
    finish(trace, model);
    return {std::move(out), std::move(trace)};
}

std::pair<Bytes, AttackTrace> fgsm_attack(ByteView z, const Classifier& model, const FgsmRegions& regions,
                                          const WhiteboxConfig& config, FgsmMode mode) {
    require_differentiable(model);
    AttackTrace trace;
    if (config.iterations == 0) {
        trace.initial_score = trace.final_score = model.score(z);
        trace.queries = 1;
        finish(trace, model);
        return {Bytes(z.begin(), z.end()), std::move(trace)};
    }

    Bytes base(z.begin(), z.end());
    std::vector<std::size_t> positions;
    if (regions.slack) {
        positions = slack_mask(z).positions();
    }
    if (regions.padding && regions.padding_size > 0) {
        ManipulationVector pad{Bytes(regions.padding_size, 0), regions.padding_size};
        base = apply_padding(z, pad);
        for (std::size_t i = z.size(); i < base.size(); ++i) {
            positions.push_back(i);
        }
    }
    const auto window = static_cast<std::size_t>(model.window());
    std::erase_if(positions, [window](std::size_t p) { return p >= window; });

    const Matrix E = model.embedding_table();
    Matrix x = model.embed(base);
    Matrix grad;
    trace.initial_score = model.score_and_gradient(x, grad);
    trace.queries = 1;
    const std::size_t steps = mode == FgsmMode::SingleStep ? 1 : config.iterations;
    for (std::size_t it = 1; it <= steps; ++it) {
        for (std::size_t p : positions) {
            const auto row = static_cast<Index>(p);
            x.row(row) -= config.epsilon * grad.row(row).array().sign().matrix();
        }
        const Scalar s = model.score_and_gradient(x, grad);
        ++trace.queries;
        trace.records.push_back({it, s, positions.size()});
        if (mode == FgsmMode::UntilEvasion && model.threshold() && s < *model.threshold()) {
            break;
        }
    }

    Bytes out = base;
    trace.payload.reserve(positions.size());
    for (std::size_t p : positions) {
        out[p] = nearest_byte(x.row(static_cast<Index>(p)), E);
        trace.payload.push_back(out[p]);
    }
    trace.final_score = model.score(out);
    ++trace.queries;
    finish(trace, model);
    return {std::move(out), std::move(trace)};
}

void write_trace(std::ostream& out, const AttackTrace& trace) {
    char line[96];
    std::snprintf(line, sizeof line, "0 %.17g 0\n", trace.initial_score);
    out << line;
    for (const auto& r : trace.records) {
        std::snprintf(line, sizeof line, "%zu %.17g %zu\n", r.iteration, r.score, r.bytes_changed);
        out << line;
    }
}

}  // namespace advpe
