// advpe - adversarial PE manipulation toolkit

#include "advpe/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace advpe {

double calibrate_threshold(std::span<const double> scores, std::span<const int> labels, double target_fpr) {
    if (scores.size() != labels.size()) {
        throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
    }
    if (!(target_fpr >= 0.0 && target_fpr <= 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "target_fpr must lie in [0, 1]");
    }
    std::vector<double> negatives;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) {
            negatives.push_back(scores[i]);
        }
    }
    if (negatives.empty()) {
        throw Error(ErrorCode::NoNegatives, "calibration needs at least one negative sample");
    }
    std::sort(negatives.begin(), negatives.end());

    std::vector<double> candidates(scores.begin(), scores.end());
    candidates.push_back(std::nextafter(negatives.back(), std::numeric_limits<double>::infinity()));
    std::sort(candidates.begin(), candidates.end());

    const double n = static_cast<double>(negatives.size());
    for (double theta : candidates) {
        const auto at_or_above = negatives.end() - std::lower_bound(negatives.begin(), negatives.end(), theta);
        if (static_cast<double>(at_or_above) / n <= target_fpr) {
            return theta;
        }
    }
    return candidates.back();
}

double detection_rate(std::span<const double> scores, double theta) {
    if (scores.empty()) {
        return 0.0;
    }
    const auto hits = std::count_if(scores.begin(), scores.end(), [theta](double s) { return s >= theta; });
    return static_cast<double>(hits) / static_cast<double>(scores.size());
}

}  // namespace advpe
