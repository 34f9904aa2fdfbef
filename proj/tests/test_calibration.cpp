#include <doctest.h>

#include <algorithm>
#include <vector>

#include "advpe/calibration.hpp"
#include "advpe/rng.hpp"

using namespace advpe;

namespace {

// Brute force: try every real number that could matter, i.e. each observed
// score and a point just above the largest negative, and keep the smallest one
// meeting the false-positive constraint.
double brute_force_threshold(const std::vector<double>& scores, const std::vector<int>& labels, double fpr) {
    std::vector<double> candidates = scores;
    double max_negative = -1e300;
    std::size_t negatives = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == 0) {
            max_negative = std::max(max_negative, scores[i]);
            ++negatives;
        }
    }
    candidates.push_back(std::nextafter(max_negative, 1e300));
    double best = 1e300;
    for (double c : candidates) {
        std::size_t above = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            above += (labels[i] == 0 && scores[i] >= c) ? 1 : 0;
        }
        if (static_cast<double>(above) / static_cast<double>(negatives) <= fpr) best = std::min(best, c);
    }
    return best;
}

}  // namespace

TEST_CASE("separated classes put the threshold above every negative") {
    const std::vector<double> scores{0.1, 0.1, 0.1, 0.9, 0.9};
    const std::vector<int> labels{0, 0, 0, 1, 1};
    const double theta = calibrate_threshold(scores, labels, 0.001);
    CHECK(theta > 0.1);
    CHECK(theta <= 0.9);
    CHECK(detection_rate(std::vector<double>{0.9, 0.9}, theta) == 1.0);
}

TEST_CASE("target fpr 1 gives the minimum score") {
    const std::vector<double> scores{0.4, 0.2, 0.7, 0.3};
    const std::vector<int> labels{0, 1, 0, 1};
    CHECK(calibrate_threshold(scores, labels, 1.0) == 0.2);
}

TEST_CASE("errors") {
    const std::vector<double> scores{0.4, 0.2};
    CHECK_THROWS_AS(calibrate_threshold(scores, std::vector<int>{1, 1}, 0.1), Error);
    CHECK_THROWS_AS(calibrate_threshold(scores, std::vector<int>{1}, 0.1), Error);
    CHECK_THROWS_AS(calibrate_threshold(scores, std::vector<int>{0, 1}, 1.5), Error);
}

TEST_CASE("uniform negatives at fpr 0.1 land near the 0.9 quantile") {
    Rng rng(5);
    std::vector<double> scores(1000);
    for (auto& s : scores) s = rng.uniform();
    const std::vector<int> labels(1000, 0);
    const double theta = calibrate_threshold(scores, labels, 0.1);
    CHECK(theta == doctest::Approx(0.9).epsilon(0.03));
    CHECK(theta == brute_force_threshold(scores, labels, 0.1));
}

TEST_CASE("matches the brute-force oracle and is monotone in the target rate") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 5 + rng.below(60);
        std::vector<double> scores(n);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            scores[i] = static_cast<double>(rng.below(20)) / 20.0;
            labels[i] = rng.chance(0.5) ? 1 : 0;
        }
        labels[0] = 0;
        double previous = -1.0;
        for (double fpr : {1.0, 0.5, 0.2, 0.1, 0.01, 0.0}) {
            const double theta = calibrate_threshold(scores, labels, fpr);
            CHECK(theta == brute_force_threshold(scores, labels, fpr));
            CHECK(theta >= previous);
            previous = theta;
        }
    }
}

TEST_CASE("detection rate counts scores at or above the threshold") {
    CHECK(detection_rate(std::vector<double>{0.1, 0.5, 0.5, 0.9}, 0.5) == 0.75);
    CHECK(detection_rate(std::vector<double>{}, 0.5) == 0.0);
}
