// advpe - adversarial PE manipulation toolkit
// Command-line front end.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "advpe/blackbox.hpp"
#include "advpe/calibration.hpp"
#include "advpe/campaign.hpp"
#include "advpe/corpus.hpp"
#include "advpe/model_io.hpp"
#include "advpe/reports.hpp"
#include "advpe/validator.hpp"
#include "advpe/whitebox.hpp"

namespace {

using namespace advpe;

struct AttackFlags {
    std::optional<std::string> strategy;
    std::string manipulation = "full-dos";
    std::optional<std::size_t> iterations;
    std::optional<std::size_t> gamma_bytes;
    std::optional<std::size_t> request_size;
    std::optional<std::size_t> population;
    std::optional<std::size_t> queries;
    std::optional<double> lambda;
    std::optional<double> epsilon;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--strategy", strategy, "full-dos|extend|shift|partial-dos|padding|fgsm|genetic|gamma")
            ->check(CLI::IsMember({"full-dos", "extend", "shift", "partial-dos", "padding", "fgsm", "genetic", "gamma"}));
        cmd->add_option("--manipulation", manipulation, "byte manipulation searched by the genetic strategy");
        cmd->add_option("--iterations", iterations, "optimizer iterations N");
        cmd->add_option("--gamma-bytes", gamma_bytes, "bytes rewritten per white-box iteration");
        cmd->add_option("--request-size", request_size, "requested injection size for extend/shift/padding");
        cmd->add_option("--population", population, "genetic population size");
        cmd->add_option("--queries", queries, "genetic query budget");
        cmd->add_option("--lambda", lambda, "gamma size penalty");
        cmd->add_option("--epsilon", epsilon, "fgsm step");
    }

    void apply(AttackSpec& s) const {
        if (strategy) s.strategy = strategy_from_string(*strategy);
        if (strategy && *strategy == "genetic") s.manipulation = manipulation;
        if (iterations) s.iterations = *iterations;
        if (gamma_bytes) s.gamma_bytes = *gamma_bytes;
        if (request_size) s.request_size = *request_size;
        if (population) s.population = *population;
        if (queries) s.queries = *queries;
        if (lambda) s.lambda = *lambda;
        if (epsilon) s.epsilon = *epsilon;
    }
};

std::string text_of(const std::string& path) {
    const auto b = read_file(path);
    return std::string(b.begin(), b.end());
}

std::vector<NamedModel> load_models(const std::vector<std::string>& paths) {
    std::vector<NamedModel> models;
    for (const auto& p : paths) {
        auto m = load_model(p);
        std::string name(to_string(m.kind()));
        for (const auto& other : models) {
            if (other.name == name) {
                name = std::filesystem::path(p).stem().string();
            }
        }
        models.push_back({name, std::move(m)});
    }
    return models;
}

int cmd_gen_corpus(const std::string& out_dir, const CorpusSpec& spec) {
    const auto corpus = generate_corpus(spec);
    write_corpus(corpus, out_dir);
    std::printf("wrote %zu samples to %s\n", corpus.size(), out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& corpus_dir, const std::string& kind, const std::string& out, TrainConfig cfg) {
    const auto corpus = read_corpus(corpus_dir);
    const auto data = labeled(corpus);
    const auto result = train(data, model_kind_from_string(kind), cfg);
    save_model(result.model, out);
    std::printf("model=%s train_accuracy=%.4f validation_accuracy=%.4f -> %s\n", kind.c_str(), result.train_accuracy,
                result.validation_accuracy, out.c_str());
    return 0;
}

int cmd_calibrate(const std::string& model_path, const std::string& corpus_dir, double fpr) {
    auto model = load_model(model_path);
    const auto corpus = read_corpus(corpus_dir);
    const double theta = calibrate_on(model, corpus, fpr);
    std::vector<double> malware;
    for (const auto& s : corpus) {
        if (s.label == 1) malware.push_back(model.score(s.bytes));
    }
    save_model(model, model_path);
    std::printf("threshold=%.17g fpr=%g detection_rate=%.4f\n", theta, fpr, detection_rate(malware, theta));
    return 0;
}

int cmd_attack(const std::string& model_path, const std::string& input, const std::string& output,
               const std::string& trace_path, const std::string& corpus_dir, const AttackFlags& flags,
               std::uint64_t seed) {
    const auto model = load_model(model_path);
    const auto z = read_file(input);
    AttackSpec spec;
    flags.apply(spec);
    Bytes adversarial;
    AttackTrace trace;
    if (spec.strategy == Strategy::Genetic || spec.strategy == Strategy::Gamma) {
        GeneticConfig cfg{spec.population, spec.queries, spec.mutation_prob, seed};
        const LocalScorer local(model);
        const MeteredScorer metered(local);
        BlackboxResult res;
        if (spec.strategy == Strategy::Genetic) {
            res = genetic_attack(z, metered, manipulation_from_string(spec.manipulation), cfg,
                                 spec.effective_request_size());
        } else {
            if (corpus_dir.empty()) {
                throw Error(ErrorCode::EmptyBenignPool, "gamma needs --corpus to harvest benign sections");
            }
            std::vector<Sample> goodware;
            for (auto& s : read_corpus(corpus_dir)) {
                if (s.label == 0) goodware.push_back(std::move(s));
            }
            res = gamma_padding_attack(z, metered, {spec.lambda, harvest_sections(goodware, spec.max_sections), spec.max_sections},
                                       cfg);
        }
        adversarial = std::move(res.adversarial);
        trace = std::move(res.trace);
        trace.queries = metered.queries();
    } else {
        WhiteboxConfig cfg;
        cfg.gamma = spec.gamma_bytes;
        cfg.iterations = spec.iterations;
        cfg.epsilon = spec.epsilon;
        cfg.requested_size = spec.effective_request_size();
        cfg.seed = seed;
        if (spec.strategy == Strategy::Fgsm) {
            FgsmRegions regions;
            regions.padding_size = spec.effective_request_size();
            std::tie(adversarial, trace) = fgsm_attack(z, model, regions, cfg);
        } else {
            const auto kind = manipulation_from_string(to_string(spec.strategy));
            std::tie(adversarial, trace) = attack(z, model, kind, cfg);
        }
    }
    const auto report = structural_equivalence(z, adversarial);
    write_file(output, adversarial);
    if (!trace_path.empty()) {
        std::ofstream t(trace_path);
        write_trace(t, trace);
    }
    std::printf("strategy=%s initial=%.6f final=%.6f queries=%zu equivalent=%s", spec.label().c_str(),
                model.score(z), trace.final_score, trace.queries, report.equivalent() ? "yes" : "no");
    if (model.threshold()) {
        std::printf(" threshold=%.6f evaded=%s", *model.threshold(), trace.final_score < *model.threshold() ? "yes" : "no");
    }
    std::printf("\n");
    return report.equivalent() ? 0 : 1;
}

int cmd_campaign(const std::string& config_path, const std::string& corpus_dir,
                 const std::vector<std::string>& model_paths, const std::string& out_dir, const AttackFlags& flags,
                 std::optional<double> fpr, std::optional<std::uint64_t> seed, std::optional<std::size_t> samples,
                 std::optional<std::size_t> workers) {
    CampaignConfig cfg = config_path.empty() ? CampaignConfig{} : campaign_config_from_json(text_of(config_path));
    if (flags.strategy) {
        AttackSpec s;
        flags.apply(s);
        cfg.attacks = {s};
    } else {
        for (auto& a : cfg.attacks) flags.apply(a);
    }
    if (fpr) cfg.fpr = *fpr;
    if (seed) cfg.seed = *seed;
    if (samples) cfg.samples = *samples;
    if (workers) cfg.workers = *workers;

    const auto corpus = read_corpus(corpus_dir);
    CampaignInputs inputs;
    std::vector<Sample> goodware;
    for (const auto& s : corpus) {
        (s.label == 1 ? inputs.malware : goodware).push_back(s);
    }
    inputs.models = load_models(model_paths);
    for (auto& m : inputs.models) {
        calibrate_on(m.model, corpus, cfg.fpr);
    }
    std::size_t max_sections = 0;
    for (const auto& a : cfg.attacks) max_sections = std::max(max_sections, a.max_sections);
    inputs.benign_pool = harvest_sections(goodware, max_sections);

    const auto result = run_campaign(cfg, inputs);
    for (const auto& path : emit_reports(result, out_dir)) {
        std::printf("wrote %s\n", path.c_str());
    }
    for (const auto& c : result.curves) {
        std::printf("%-18s %-12s DR %.4f -> %.4f\n", c.attack.c_str(), c.model.c_str(), c.detection_rate.front(),
                    result.final_detection_rate(c.attack, c.model));
    }
    return 0;
}

int cmd_validate(const std::string& original, const std::string& modified, bool allow_renamed) {
    const auto report = structural_equivalence(read_file(original), read_file(modified), {allow_renamed});
    std::cout << report.to_string();
    return report.equivalent() ? 0 : 1;
}

int cmd_report(const std::string& result_path, const std::string& out_dir) {
    const auto result = result_from_json(text_of(result_path));
    for (const auto& path : emit_reports(result, out_dir, false)) {
        std::printf("wrote %s\n", path.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"advpe: functionality-preserving adversarial manipulation of PE files"};
    app.require_subcommand(1);

    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<double> fpr;
    std::string model_arg, corpus_dir, input, output, trace_path, config_path, result_path;
    std::vector<std::string> model_paths;
    AttackFlags flags;

    CorpusSpec spec;
    auto* gen = app.add_subcommand("gen-corpus", "generate the synthetic labeled PE corpus");
    gen->add_option("--out-dir", out_dir, "output directory")->required();
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--malware", spec.malware_count, "malware samples");
    gen->add_option("--goodware", spec.goodware_count, "goodware samples");

    TrainConfig train_cfg;
    std::optional<Index> window;
    auto* tr = app.add_subcommand("train", "train a classifier on a corpus");
    tr->add_option("--corpus", corpus_dir, "corpus directory")->required();
    tr->add_option("--model", model_arg, "malconv|hier-lin|hier-relu|handcrafted")->required();
    tr->add_option("--out", output, "model file")->required();
    tr->add_option("--iterations", train_cfg.epochs, "training epochs");
    tr->add_option("--window", window, "input window in bytes");
    tr->add_option("--seed", seed, "training seed");

    auto* cal = app.add_subcommand("calibrate", "set the model threshold at a target false-positive rate");
    cal->add_option("--model", model_arg, "model file")->required();
    cal->add_option("--corpus", corpus_dir, "corpus directory")->required();
    cal->add_option("--fpr", fpr, "target false-positive rate (default 0.001)");

    auto* att = app.add_subcommand("attack", "attack one file");
    att->add_option("--model", model_arg, "model file")->required();
    att->add_option("--input", input, "PE file to manipulate")->required();
    att->add_option("--output", output, "adversarial output")->required();
    att->add_option("--trace", trace_path, "write the iteration trace here");
    att->add_option("--corpus", corpus_dir, "corpus directory (benign pool for gamma)");
    att->add_option("--seed", seed, "attack seed");
    flags.add_to(att);

    std::optional<std::size_t> samples, workers;
    auto* camp = app.add_subcommand("campaign", "run an attack campaign and emit reports");
    camp->add_option("--config", config_path, "campaign JSON file");
    camp->add_option("--corpus", corpus_dir, "corpus directory")->required();
    camp->add_option("--model", model_paths, "model files (repeatable)")->required();
    camp->add_option("--out-dir", out_dir, "report directory");
    camp->add_option("--fpr", fpr, "target false-positive rate");
    camp->add_option("--seed", seed, "campaign seed");
    camp->add_option("--samples", samples, "malware samples to attack (0 = all)");
    camp->add_option("--workers", workers, "worker threads (0 = all cores)");
    flags.add_to(camp);

    bool allow_renamed = false;
    auto* val = app.add_subcommand("validate", "check that a manipulated file preserves the original's structure");
    val->add_option("original", input, "original file")->required();
    val->add_option("modified", output, "manipulated file")->required();
    val->add_flag("--allow-renamed-sections", allow_renamed, "section names were rewritten on purpose");

    auto* rep = app.add_subcommand("report", "re-emit reports from a saved campaign result");
    rep->add_option("--in", result_path, "result.json from a campaign")->required();
    rep->add_option("--out-dir", out_dir, "report directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            if (seed) spec.seed = *seed;
            return cmd_gen_corpus(out_dir, spec);
        }
        if (*tr) {
            if (seed) train_cfg.seed = *seed;
            train_cfg.model.window = window;
            return cmd_train(corpus_dir, model_arg, output, train_cfg);
        }
        if (*cal) return cmd_calibrate(model_arg, corpus_dir, fpr.value_or(0.001));
        if (*att) {
            if (!flags.strategy) flags.strategy = "extend";
            return cmd_attack(model_arg, input, output, trace_path, corpus_dir, flags, seed.value_or(0));
        }
        if (*camp) return cmd_campaign(config_path, corpus_dir, model_paths, out_dir, flags, fpr, seed, samples, workers);
        if (*val) return cmd_validate(input, output, allow_renamed);
        if (*rep) return cmd_report(result_path, out_dir);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
