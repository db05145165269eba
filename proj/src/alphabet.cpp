#include "gpfq/alphabet.hpp"

#include <algorithm>
#include <cmath>

namespace gpfq {

Alphabet build_alphabet(int levels, double radius) {
    if (levels < 2) {
        throw std::invalid_argument("alphabet needs at least 2 levels");
    }
    if (!(radius > 0.0)) {
        throw std::invalid_argument("alphabet radius must be positive");
    }
    Alphabet a;
    a.radius = radius;
    a.levels = levels;
    a.elements.resize(static_cast<size_t>(levels));
    // build the negative half and mirror it so the set is exactly symmetric
    for (int j = 0; j < levels / 2; ++j) {
        const double e = radius * (-1.0 + 2.0 * j / (levels - 1));
        a.elements[static_cast<size_t>(j)] = e;
        a.elements[static_cast<size_t>(levels - 1 - j)] = -e;
    }
    if (levels % 2 == 1) a.elements[static_cast<size_t>(levels / 2)] = 0.0;
    return a;
}

Alphabet scale_alphabet(const Alphabet& a, double s) {
    if (!(s > 0.0)) {
        throw std::invalid_argument("alphabet scale must be positive");
    }
    Alphabet out = a;
    out.radius = a.radius * s;
    for (double& e : out.elements) e *= s;
    return out;
}

double radius_from_weights(const Eigen::MatrixXd& weights, double c_alpha) {
    if (weights.size() == 0) {
        throw std::invalid_argument("empty weight matrix");
    }
    if (!(c_alpha > 0.0)) {
        throw std::invalid_argument("c_alpha must be positive");
    }
    std::vector<double> mags(static_cast<size_t>(weights.size()));
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        mags[static_cast<size_t>(i)] = std::abs(weights.data()[i]);
    }
    std::sort(mags.begin(), mags.end());
    const size_t n = mags.size();
    double median;
    if (n % 2 == 1) {
        median = mags[n / 2];
    } else {
        median = 0.5 * (mags[n / 2 - 1] + mags[n / 2]);
    }
    const double radius = c_alpha * median;
    if (radius == 0.0) {
        throw DegenerateAlphabetError("weight median is zero, alphabet radius degenerates");
    }
    return radius;
}

double scalar_quantize(double z, const Alphabet& a) {
    double best = a.elements.front();
    double best_dist = std::abs(z - best);
    for (size_t i = 1; i < a.elements.size(); ++i) {
        const double p = a.elements[i];
        const double d = std::abs(z - p);
        // ascending scan: on a tie the later element has |p| >= |best| iff it
        // is the away-from-zero (or positive) candidate
        if (d < best_dist || (d == best_dist && std::abs(p) >= std::abs(best))) {
            best = p;
            best_dist = d;
        }
    }
    return best;
}

}  // namespace gpfq
