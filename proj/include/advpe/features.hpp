// advpe - adversarial PE manipulation toolkit
// Hand-crafted static features for the non-differentiable baseline.

#ifndef ADVPE_FEATURES_HPP
#define ADVPE_FEATURES_HPP

#include <Eigen/Dense>

#include "advpe/common.hpp"

namespace advpe {

inline constexpr Eigen::Index entropy_buckets = 32;
inline constexpr Eigen::Index header_features = 16;
inline constexpr Eigen::Index section_features = 16;
inline constexpr Eigen::Index feature_dimension = entropy_buckets + header_features + section_features;

// Shannon entropy in bits, [0, 8].
double shannon_entropy(ByteView data);

// [0, 32): fraction of 256-byte windows per entropy bucket (width 0.25 bit)
// [32, 48): header scalars
// [48, 64): section statistics
// Propagates parse errors.
Eigen::VectorXd extract_features(ByteView bytes);

}  // namespace advpe

#endif  // ADVPE_FEATURES_HPP
