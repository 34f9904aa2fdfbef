// advpe - adversarial PE manipulation toolkit
// Attack campaigns: (attack, model, sample) cells fanned out to a worker pool
// and merged by cell index.

#ifndef ADVPE_CAMPAIGN_HPP
#define ADVPE_CAMPAIGN_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "advpe/corpus.hpp"
#include "advpe/models.hpp"

namespace advpe {

enum class Strategy { FullDos, Extend, Shift, PartialDos, Padding, Fgsm, Genetic, Gamma };

std::string_view to_string(Strategy s) noexcept;
Strategy strategy_from_string(std::string_view name);
bool is_gradient_strategy(Strategy s) noexcept;

struct AttackSpec {
    Strategy strategy = Strategy::Extend;
    std::string manipulation = "full-dos";  // genetic only
    std::size_t iterations = 50;
    std::size_t gamma_bytes = 256;
    std::optional<std::size_t> request_size;  // default depends on strategy
    double epsilon = 0.1;
    std::size_t population = 10;
    std::size_t queries = 3000;
    double mutation_prob = 0.05;
    double lambda = 1e-5;
    std::size_t max_sections = 100;

    // Unique label used in reports, e.g. "extend" or "genetic-full-dos".
    [[nodiscard]] std::string label() const;
    [[nodiscard]] std::size_t effective_request_size() const;
};

struct CampaignConfig {
    std::vector<AttackSpec> attacks;
    std::vector<std::string> models;  // names to attack; empty means all
    double fpr = 0.001;
    std::size_t samples = 20;         // malware samples attacked; 0 means all
    std::uint64_t seed = 0;
    std::size_t workers = 0;          // 0 means hardware concurrency
    double timeout_seconds = 600.0;   // per cell
};

// Parses a JSON campaign description. Unknown or ill-typed keys raise
// Error{InvalidConfig} naming the offending key.
CampaignConfig campaign_config_from_json(std::string_view text);

struct NamedModel {
    std::string name;
    Classifier model;
};

struct CampaignInputs {
    std::vector<Sample> malware;
    std::vector<NamedModel> models;   // calibrated
    std::vector<Bytes> benign_pool;   // for gamma
};

struct CellResult {
    std::string attack;
    std::string model;
    std::string sample;
    double initial_score = 0.0;       // unmodified sample
    double final_score = 0.0;
    bool evaded = false;
    std::size_t payload_bytes = 0;
    double payload_fraction = 0.0;    // payload bytes / model window
    std::size_t queries = 0;
    bool over_window = false;         // sample already fills the model window
    bool equivalent = true;           // output passes structural_equivalence
    bool timed_out = false;
    double wall_seconds = 0.0;
    std::string error;
    std::vector<double> scores;       // initial, then one per iteration/generation
};

struct ModelSummary {
    std::string name;
    double threshold = 0.0;
    double baseline_dr = 0.0;         // over the attacked samples
};

struct Curve {
    std::string attack;
    std::string model;
    std::vector<double> detection_rate;  // index 0 is the unmodified baseline
    std::vector<double> mean_score;
};

struct TransferMatrix {
    std::string attack;
    std::vector<std::string> surrogates;
    std::vector<std::string> targets;
    Eigen::MatrixXd detection_rate;
};

struct CampaignResult {
    std::vector<ModelSummary> models;
    std::vector<CellResult> cells;
    std::vector<Curve> curves;
    std::vector<TransferMatrix> transfer;
    std::size_t truncation_checks = 0;
    std::size_t truncation_violations = 0;

    [[nodiscard]] double final_detection_rate(const std::string& attack, const std::string& model) const;
};

std::vector<LabeledBytes> labeled(const std::vector<Sample>& samples);

// Sets the model threshold at target_fpr over the goodware in `corpus` and
// returns it.
double calibrate_on(Classifier& model, const std::vector<Sample>& corpus, double target_fpr);

// Throws Error{UncalibratedTarget} for a model without threshold and
// Error{InvalidConfig} for unknown model names.
CampaignResult run_campaign(const CampaignConfig& config, const CampaignInputs& inputs);

}  // namespace advpe

#endif  // ADVPE_CAMPAIGN_HPP
