// advpe - adversarial PE manipulation toolkit

#include "advpe/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <json.hpp>
#include <map>
#include <mutex>
#include <thread>

#include "advpe/blackbox.hpp"
#include "advpe/calibration.hpp"
#include "advpe/manipulations.hpp"
#include "advpe/validator.hpp"
#include "advpe/whitebox.hpp"

namespace advpe {

namespace {

constexpr std::array<std::pair<Strategy, std::string_view>, 8> strategy_names{{
    {Strategy::FullDos, "full-dos"},
    {Strategy::Extend, "extend"},
    {Strategy::Shift, "shift"},
    {Strategy::PartialDos, "partial-dos"},
    {Strategy::Padding, "padding"},
    {Strategy::Fgsm, "fgsm"},
    {Strategy::Genetic, "genetic"},
    {Strategy::Gamma, "gamma"},
}};

using json = nlohmann::json;

[[noreturn]] void bad_key(const std::string& key, const std::string& why) {
    throw Error(ErrorCode::InvalidConfig, "key '" + key + "': " + why);
}

template <typename T>
T read_key(const json& j, const std::string& key, const std::string& path) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        bad_key(path, e.what());
    }
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& prefix) {
    if (!j.is_object()) {
        bad_key(prefix.empty() ? "<root>" : prefix, "expected an object");
    }
    for (const auto& [k, v] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
            bad_key(prefix.empty() ? k : prefix + "." + k, "unknown key");
        }
    }
}

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

ManipulationKind manipulation_of(Strategy s) {
    switch (s) {
        case Strategy::FullDos: return ManipulationKind::FullDos;
        case Strategy::Extend: return ManipulationKind::Extend;
        case Strategy::Shift: return ManipulationKind::Shift;
        case Strategy::PartialDos: return ManipulationKind::PartialDos;
        case Strategy::Padding: return ManipulationKind::Padding;
        default: break;
    }
    throw Error(ErrorCode::InvalidConfig, "strategy " + std::string(to_string(s)) + " is not a byte manipulation");
}

struct CellOutput {
    CellResult result;
    Bytes adversarial;
};

CellOutput run_cell(const AttackSpec& spec, const NamedModel& target, const Sample& sample, std::uint64_t seed,
                    const CampaignInputs& inputs) {
    CellOutput out;
    auto& r = out.result;
    r.attack = spec.label();
    r.model = target.name;
    r.sample = sample.name;
    const auto& model = target.model;
    r.initial_score = model.score(sample.bytes);
    r.over_window = model.window() > 0 && static_cast<Index>(sample.bytes.size()) >= model.window();

    AttackTrace trace;
    try {
        switch (spec.strategy) {
            case Strategy::Fgsm: {
                WhiteboxConfig cfg;
                cfg.iterations = spec.iterations;
                cfg.epsilon = spec.epsilon;
                cfg.seed = seed;
                FgsmRegions regions;
                regions.padding_size = spec.effective_request_size();
                std::tie(out.adversarial, trace) = fgsm_attack(sample.bytes, model, regions, cfg);
                break;
            }
            case Strategy::Genetic: {
                GeneticConfig cfg{spec.population, spec.queries, spec.mutation_prob, seed};
                const LocalScorer local(model);
                const MeteredScorer metered(local);
                auto res = genetic_attack(sample.bytes, metered, manipulation_from_string(spec.manipulation), cfg,
                                          spec.effective_request_size());
                out.adversarial = std::move(res.adversarial);
                trace = std::move(res.trace);
                trace.queries = metered.queries();
                break;
            }
            case Strategy::Gamma: {
                GeneticConfig cfg{spec.population, spec.queries, spec.mutation_prob, seed};
                GammaConfig gamma{spec.lambda, inputs.benign_pool, spec.max_sections};
                const LocalScorer local(model);
                const MeteredScorer metered(local);
                auto res = gamma_padding_attack(sample.bytes, metered, gamma, cfg);
                out.adversarial = std::move(res.adversarial);
                trace = std::move(res.trace);
                trace.queries = metered.queries();
                break;
            }
            default: {
                WhiteboxConfig cfg;
                cfg.gamma = spec.gamma_bytes;
                cfg.iterations = spec.iterations;
                cfg.requested_size = spec.effective_request_size();
                cfg.seed = seed;
                std::tie(out.adversarial, trace) = attack(sample.bytes, model, manipulation_of(spec.strategy), cfg);
                break;
            }
        }
    } catch (const Error& e) {
        r.error = e.what();
        r.final_score = r.initial_score;
        r.scores = {r.initial_score};
        r.evaded = r.final_score < *model.threshold();
        out.adversarial = sample.bytes;
        return out;
    }

    r.final_score = trace.final_score;
    r.evaded = r.final_score < *model.threshold();
    r.queries = trace.queries;
    r.payload_bytes = spec.strategy == Strategy::Gamma ? out.adversarial.size() - sample.bytes.size()
                                                       : trace.payload.size();
    const double denominator =
        model.window() > 0 ? static_cast<double>(model.window()) : static_cast<double>(sample.bytes.size());
    r.payload_fraction = static_cast<double>(r.payload_bytes) / denominator;
    r.scores.reserve(trace.records.size() + 1);
    r.scores.push_back(r.initial_score);
    for (const auto& rec : trace.records) {
        r.scores.push_back(rec.score);
    }
    r.equivalent = structural_equivalence(sample.bytes, out.adversarial).equivalent();
    return out;
}

}  // namespace

std::string_view to_string(Strategy s) noexcept {
    for (const auto& [k, v] : strategy_names) {
        if (k == s) {
            return v;
        }
    }
    return "unknown";
}

Strategy strategy_from_string(std::string_view name) {
    for (const auto& [k, v] : strategy_names) {
        if (v == name) {
            return k;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown strategy '" + std::string(name) + "'");
}

bool is_gradient_strategy(Strategy s) noexcept { return s != Strategy::Genetic && s != Strategy::Gamma; }

std::string AttackSpec::label() const {
    if (strategy == Strategy::Genetic) {
        return "genetic-" + manipulation;
    }
    return std::string(to_string(strategy));
}

std::size_t AttackSpec::effective_request_size() const {
    if (request_size) {
        return *request_size;
    }
    switch (strategy) {
        case Strategy::Extend: return 512;
        case Strategy::Shift: return 1024;
        case Strategy::Padding:
        case Strategy::Fgsm: return default_padding_size;
        case Strategy::Genetic: {
            const auto kind = manipulation_from_string(manipulation);
            if (kind == ManipulationKind::Extend) return 512;
            if (kind == ManipulationKind::Shift) return 1024;
            if (kind == ManipulationKind::Padding) return default_padding_size;
            return 0;
        }
        default: return 0;
    }
}

CampaignConfig campaign_config_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("campaign config is not valid JSON: ") + e.what());
    }
    check_keys(j, {"attacks", "models", "fpr", "samples", "seed", "workers", "timeout_seconds"}, "");
    CampaignConfig cfg;
    if (j.contains("models")) cfg.models = read_key<std::vector<std::string>>(j, "models", "models");
    if (j.contains("fpr")) cfg.fpr = read_key<double>(j, "fpr", "fpr");
    if (j.contains("samples")) cfg.samples = read_key<std::size_t>(j, "samples", "samples");
    if (j.contains("seed")) cfg.seed = read_key<std::uint64_t>(j, "seed", "seed");
    if (j.contains("workers")) cfg.workers = read_key<std::size_t>(j, "workers", "workers");
    if (j.contains("timeout_seconds")) cfg.timeout_seconds = read_key<double>(j, "timeout_seconds", "timeout_seconds");
    if (!(cfg.fpr >= 0.0 && cfg.fpr <= 1.0)) {
        bad_key("fpr", "must lie in [0, 1]");
    }
    if (j.contains("attacks")) {
        if (!j["attacks"].is_array()) {
            bad_key("attacks", "expected an array");
        }
        for (std::size_t i = 0; i < j["attacks"].size(); ++i) {
            const auto& a = j["attacks"][i];
            const std::string p = "attacks[" + std::to_string(i) + "]";
            check_keys(a, {"strategy", "manipulation", "iterations", "gamma_bytes", "request_size", "epsilon",
                           "population", "queries", "mutation_prob", "lambda", "max_sections"},
                       p);
            AttackSpec s;
            const auto strategy = read_key<std::string>(a, "strategy", p + ".strategy");
            try {
                s.strategy = strategy_from_string(strategy);
            } catch (const Error& e) {
                bad_key(p + ".strategy", e.what());
            }
            if (a.contains("manipulation")) {
                s.manipulation = read_key<std::string>(a, "manipulation", p + ".manipulation");
                try {
                    manipulation_from_string(s.manipulation);
                } catch (const Error& e) {
                    bad_key(p + ".manipulation", e.what());
                }
            }
            if (a.contains("iterations")) s.iterations = read_key<std::size_t>(a, "iterations", p + ".iterations");
            if (a.contains("gamma_bytes")) s.gamma_bytes = read_key<std::size_t>(a, "gamma_bytes", p + ".gamma_bytes");
            if (a.contains("request_size")) s.request_size = read_key<std::size_t>(a, "request_size", p + ".request_size");
            if (a.contains("epsilon")) s.epsilon = read_key<double>(a, "epsilon", p + ".epsilon");
            if (a.contains("population")) s.population = read_key<std::size_t>(a, "population", p + ".population");
            if (a.contains("queries")) s.queries = read_key<std::size_t>(a, "queries", p + ".queries");
            if (a.contains("mutation_prob")) s.mutation_prob = read_key<double>(a, "mutation_prob", p + ".mutation_prob");
            if (a.contains("lambda")) s.lambda = read_key<double>(a, "lambda", p + ".lambda");
            if (a.contains("max_sections")) s.max_sections = read_key<std::size_t>(a, "max_sections", p + ".max_sections");
            if (s.iterations == 0) bad_key(p + ".iterations", "must be at least 1");
            if (s.gamma_bytes == 0) bad_key(p + ".gamma_bytes", "must be at least 1");
            if (s.population < 2) bad_key(p + ".population", "must be at least 2");
            if (s.queries < s.population) bad_key(p + ".queries", "must be at least the population size");
            if (s.lambda < 0) bad_key(p + ".lambda", "must be non-negative");
            cfg.attacks.push_back(std::move(s));
        }
    }
    return cfg;
}

std::vector<LabeledBytes> labeled(const std::vector<Sample>& samples) {
    std::vector<LabeledBytes> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        out.push_back({s.bytes, s.label});
    }
    return out;
}

double calibrate_on(Classifier& model, const std::vector<Sample>& corpus, double target_fpr) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : corpus) {
        scores.push_back(model.score(s.bytes));
        labels.push_back(s.label);
    }
    const double theta = calibrate_threshold(scores, labels, target_fpr);
    model.set_threshold(theta);
    return theta;
}

double CampaignResult::final_detection_rate(const std::string& attack, const std::string& model) const {
    const ModelSummary* summary = nullptr;
    for (const auto& m : models) {
        if (m.name == model) summary = &m;
    }
    if (!summary) {
        throw Error(ErrorCode::InvalidConfig, "unknown model '" + model + "'");
    }
    std::vector<double> finals;
    for (const auto& c : cells) {
        if (c.attack == attack && c.model == model) finals.push_back(c.final_score);
    }
    return detection_rate(finals, summary->threshold);
}

CampaignResult run_campaign(const CampaignConfig& config, const CampaignInputs& inputs) {
    std::vector<const NamedModel*> targets;
    for (const auto& m : inputs.models) {
        if (!m.model.threshold()) {
            throw Error(ErrorCode::UncalibratedTarget, "model '" + m.name + "' has no threshold");
        }
        if (config.models.empty() || std::find(config.models.begin(), config.models.end(), m.name) != config.models.end()) {
            targets.push_back(&m);
        }
    }
    for (const auto& name : config.models) {
        if (std::none_of(inputs.models.begin(), inputs.models.end(), [&](const auto& m) { return m.name == name; })) {
            bad_key("models", "unknown model '" + name + "'");
        }
    }
    std::map<std::string, int> labels;
    for (const auto& a : config.attacks) {
        if (++labels[a.label()] > 1) {
            bad_key("attacks", "duplicate attack '" + a.label() + "'");
        }
    }

    const std::size_t n_samples =
        config.samples == 0 ? inputs.malware.size() : std::min(config.samples, inputs.malware.size());
    const std::span<const Sample> samples(inputs.malware.data(), n_samples);

    CampaignResult result;
    for (const auto* t : targets) {
        std::vector<double> clean;
        for (const auto& s : samples) clean.push_back(t->model.score(s.bytes));
        result.models.push_back({t->name, *t->model.threshold(), detection_rate(clean, *t->model.threshold())});
    }

    struct Job {
        std::size_t attack, model, sample;
    };
    std::vector<Job> jobs;
    for (std::size_t a = 0; a < config.attacks.size(); ++a) {
        for (std::size_t m = 0; m < targets.size(); ++m) {
            if (is_gradient_strategy(config.attacks[a].strategy) && !targets[m]->model.differentiable()) {
                continue;
            }
            for (std::size_t s = 0; s < samples.size(); ++s) {
                jobs.push_back({a, m, s});
            }
        }
    }

    std::vector<CellOutput> outputs(jobs.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> failures;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const auto& job = jobs[i];
            const auto seed = mix(config.seed ^ mix(job.attack * 1000003ULL + job.sample));
            const auto start = std::chrono::steady_clock::now();
            try {
                outputs[i] = run_cell(config.attacks[job.attack], *targets[job.model], samples[job.sample], seed, inputs);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                failures.push_back(std::current_exception());
            }
            const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
            outputs[i].result.wall_seconds = took.count();
            outputs[i].result.timed_out = took.count() > config.timeout_seconds;
        }
    };
    const std::size_t workers = std::max<std::size_t>(
        1, std::min<std::size_t>(jobs.size(), config.workers ? config.workers : std::thread::hardware_concurrency()));
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (!failures.empty()) std::rethrow_exception(failures.front());

    for (std::size_t i = 0; i < jobs.size(); ++i) {
        auto& r = outputs[i].result;
        const auto strategy = config.attacks[jobs[i].attack].strategy;
        if (r.over_window && (strategy == Strategy::Padding || strategy == Strategy::Gamma) && r.error.empty()) {
            ++result.truncation_checks;
            if (r.final_score != r.initial_score) ++result.truncation_violations;
        }
        result.cells.push_back(r);
    }

    for (std::size_t a = 0; a < config.attacks.size(); ++a) {
        const auto label = config.attacks[a].label();
        TransferMatrix tm;
        tm.attack = label;
        for (const auto* t : targets) tm.targets.push_back(t->name);
        std::vector<std::vector<Bytes>> crafted;
        for (std::size_t m = 0; m < targets.size(); ++m) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < jobs.size(); ++i) {
                if (jobs[i].attack == a && jobs[i].model == m) idx.push_back(i);
            }
            if (idx.empty()) continue;
            tm.surrogates.push_back(targets[m]->name);
            crafted.emplace_back();
            for (auto i : idx) crafted.back().push_back(std::move(outputs[i].adversarial));

            Curve curve{label, targets[m]->name, {}, {}};
            std::size_t length = 0;
            for (auto i : idx) length = std::max(length, outputs[i].result.scores.size());
            const double theta = *targets[m]->model.threshold();
            for (std::size_t it = 0; it < length; ++it) {
                std::vector<double> at;
                for (auto i : idx) {
                    const auto& s = outputs[i].result.scores;
                    at.push_back(s[std::min(it, s.size() - 1)]);
                }
                curve.detection_rate.push_back(detection_rate(at, theta));
                double sum = 0.0;
                for (double v : at) sum += v;
                curve.mean_score.push_back(sum / static_cast<double>(at.size()));
            }
            result.curves.push_back(std::move(curve));
        }
        if (crafted.empty()) continue;
        std::vector<const Classifier*> models;
        for (const auto* t : targets) models.push_back(&t->model);
        tm.detection_rate = transfer_evaluate(crafted, models);
        result.transfer.push_back(std::move(tm));
    }
    return result;
}

}  // namespace advpe
