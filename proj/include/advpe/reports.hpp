// advpe - adversarial PE manipulation toolkit
// Plot-ready campaign outputs.
//
//   curves.csv          attack,model,iteration,detection_rate,mean_score
//   transfer_<a>.csv    surrogate x target detection-rate matrix per attack
//   cells.csv           one row per (attack, model, sample)
//   summary.json        thresholds, detection rates, payload-size statistics
//   result.json         the full result, reloadable by the report command
//   timings.csv         wall time per cell (the only non-reproducible file)

#ifndef ADVPE_REPORTS_HPP
#define ADVPE_REPORTS_HPP

#include <string>
#include <vector>

#include "advpe/campaign.hpp"

namespace advpe {

std::string curves_csv(const CampaignResult& result);
std::string transfer_csv(const TransferMatrix& matrix);
std::string cells_csv(const CampaignResult& result);
std::string summary_json(const CampaignResult& result);
std::string timings_csv(const CampaignResult& result);

std::string result_to_json(const CampaignResult& result);
// Throws Error{InvalidConfig} on malformed input.
CampaignResult result_from_json(std::string_view text);

// Writes every report into out_dir (created if missing) and returns the paths.
// Throws Error{Io}.
std::vector<std::string> emit_reports(const CampaignResult& result, const std::string& out_dir,
                                      bool include_timings = true);

}  // namespace advpe

#endif  // ADVPE_REPORTS_HPP
