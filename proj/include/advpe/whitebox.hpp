// advpe - adversarial PE manipulation toolkit
// Gradient attacks against byte-embedding classifiers: the iterative
// closest-positive byte optimizer and the FGSM embedding-space variant.

#ifndef ADVPE_WHITEBOX_HPP
#define ADVPE_WHITEBOX_HPP

#include <Eigen/Dense>
#include <optional>
#include <ostream>
#include <utility>
#include <vector>

#include "advpe/manipulations.hpp"
#include "advpe/models.hpp"

namespace advpe {

struct WhiteboxConfig {
    std::size_t gamma = 256;           // bytes updated per iteration
    std::size_t iterations = 50;
    double step_size_eta = 1.0;        // feature-space step, FGSM-style variants only
    double epsilon = 0.1;              // FGSM step
    std::size_t requested_size = 512;  // Extend/Shift/Padding request
    std::uint64_t seed = 0;
    bool random_init = true;           // otherwise start from the neutral payload
};

struct TraceRecord {
    std::size_t iteration = 0;
    double score = 0.0;
    std::size_t bytes_changed = 0;
};

struct AttackTrace {
    double initial_score = 0.0;
    std::vector<TraceRecord> records;  // one per completed iteration
    double final_score = 0.0;          // score of the returned binary
    Bytes payload;                     // t*
    std::optional<double> threshold;
    bool evaded = false;               // final_score < threshold
    std::size_t queries = 0;           // forward passes consumed
};

// Closest-positive reconstruction. With n = g / |g| and S_j = n . (E_j - x),
// returns argmin over {j in [0, 255] : S_j > 0} of |E_j - (x + n S_j)|, lowest
// index on ties, or nullopt when no S_j is positive. x and g may be rows or
// columns. Throws Error{ZeroGradient} when |g| == 0.
template <typename DerivedX, typename DerivedG, typename DerivedE>
std::optional<std::uint8_t> reconstruct_byte(const Eigen::MatrixBase<DerivedX>& x,
                                             const Eigen::MatrixBase<DerivedG>& g,
                                             const Eigen::MatrixBase<DerivedE>& table) {
    using S = typename DerivedE::Scalar;
    using Row = Eigen::Matrix<S, 1, Eigen::Dynamic>;
    const S norm = g.norm();
    if (norm == S(0)) {
        throw Error(ErrorCode::ZeroGradient, "reconstruction needs a nonzero gradient");
    }
    const Row xr = x.reshaped().transpose();
    const Row n = g.reshaped().transpose() / norm;
    std::optional<std::uint8_t> best;
    S best_distance = S(0);
    for (Eigen::Index j = 0; j < byte_tokens; ++j) {
        const S s = n.dot(table.row(j) - xr);
        if (!(s > S(0))) {
            continue;
        }
        const S distance = (table.row(j) - (xr + n * s)).norm();
        if (!best || distance < best_distance) {
            best = static_cast<std::uint8_t>(j);
            best_distance = distance;
        }
    }
    return best;
}

// Nearest embedding row among the 256 byte tokens, lowest index on ties.
template <typename DerivedX, typename DerivedE>
std::uint8_t nearest_byte(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedE>& table) {
    using S = typename DerivedE::Scalar;
    const Eigen::Matrix<S, 1, Eigen::Dynamic> xr = x.reshaped().transpose();
    Eigen::Index best = 0;
    S best_distance = (table.row(0) - xr).squaredNorm();
    for (Eigen::Index j = 1; j < byte_tokens; ++j) {
        const S d = (table.row(j) - xr).squaredNorm();
        if (d < best_distance) {
            best = j;
            best_distance = d;
        }
    }
    return static_cast<std::uint8_t>(best);
}

// Iterative byte attack through a byte-based manipulation. Each iteration
// ranks editable in-window positions by the row norm of the negative input
// gradient, rewrites up to gamma of them by closest-positive reconstruction,
// and keeps the proposal only if the score does not increase; rejected
// positions sit out the next ranking.
// Throws Error{NotDifferentiable} and propagates manipulation errors.
std::pair<Bytes, AttackTrace> attack(ByteView z, const Classifier& model, ManipulationKind kind,
                                     const WhiteboxConfig& config);

struct FgsmRegions {
    bool padding = true;
    bool slack = true;
    std::size_t padding_size = default_padding_size;
};

enum class FgsmMode {
    SingleStep,    // one signed step, then reconstruct
    UntilEvasion,  // step until the embedded score drops below threshold, at most N steps
};

// Signed-gradient steps in embedding space on padding and/or slack rows,
// followed by one nearest-row reconstruction. iterations == 0 returns z.
std::pair<Bytes, AttackTrace> fgsm_attack(ByteView z, const Classifier& model, const FgsmRegions& regions,
                                          const WhiteboxConfig& config, FgsmMode mode = FgsmMode::UntilEvasion);

// One "iteration score bytes_changed" line per record, preceded by iteration 0
// with the initial score.
void write_trace(std::ostream& out, const AttackTrace& trace);

}  // namespace advpe

#endif  // ADVPE_WHITEBOX_HPP
