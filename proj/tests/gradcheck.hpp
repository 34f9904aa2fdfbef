// Central finite-difference oracle for d score / d X.

#ifndef ADVPE_TESTS_GRADCHECK_HPP
#define ADVPE_TESTS_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "advpe/models.hpp"
#include "advpe/rng.hpp"

namespace advpe::testing {

inline double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
    return std::abs(analytic - numeric) / scale;
}

// Worst relative error over `directions` random unit directions and the
// `coordinates` largest-magnitude gradient entries.
inline double gradient_check(const Classifier& model, const Matrix& x, Rng& rng, int directions = 3,
                             int coordinates = 5, double h = 1e-4) {
    const Matrix g = model.gradient(x);
    double worst = 0.0;
    for (int k = 0; k < directions; ++k) {
        Matrix v(x.rows(), x.cols());
        for (Index i = 0; i < v.size(); ++i) v.data()[i] = rng.normal();
        v /= v.norm();
        const double numeric = (model.forward(x + h * v) - model.forward(x - h * v)) / (2 * h);
        const double analytic = g.cwiseProduct(v).sum();
        worst = std::max(worst, relative_error(analytic, numeric));
    }
    std::vector<Index> order(static_cast<std::size_t>(g.size()));
    std::iota(order.begin(), order.end(), 0);
    const auto top = std::min<std::size_t>(static_cast<std::size_t>(coordinates), order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                      [&](Index a, Index b) { return std::abs(g.data()[a]) > std::abs(g.data()[b]); });
    for (std::size_t k = 0; k < top; ++k) {
        Matrix xp = x, xm = x;
        xp.data()[order[k]] += h;
        xm.data()[order[k]] -= h;
        const double numeric = (model.forward(xp) - model.forward(xm)) / (2 * h);
        worst = std::max(worst, relative_error(g.data()[order[k]], numeric));
    }
    return worst;
}

inline Matrix random_input(const Classifier& model, Rng& rng) {
    const Index d = model.embedding_table().cols();
    Matrix x(model.window(), d);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    return x;
}

}  // namespace advpe::testing

#endif  // ADVPE_TESTS_GRADCHECK_HPP
