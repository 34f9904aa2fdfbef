// advpe - adversarial PE manipulation toolkit
// Detection thresholds at a fixed false-positive rate.

#ifndef ADVPE_CALIBRATION_HPP
#define ADVPE_CALIBRATION_HPP

#include <span>

#include "advpe/common.hpp"

namespace advpe {

// Smallest candidate threshold theta such that the fraction of negatives
// (label 0) scoring >= theta is <= target_fpr. Candidates are the observed
// scores plus the successor of the largest negative score, so a zero-FPR
// threshold always exists.
// Throws Error{NoNegatives}, Error{LengthMismatch}, Error{InvalidConfig}.
double calibrate_threshold(std::span<const double> scores, std::span<const int> labels, double target_fpr);

// Fraction of scores >= theta; 0 for an empty set.
double detection_rate(std::span<const double> scores, double theta);

}  // namespace advpe

#endif  // ADVPE_CALIBRATION_HPP
