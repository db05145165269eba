#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace gpfq {

/// Thrown when a weight matrix produces a zero-radius alphabet.
class DegenerateAlphabetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Equispaced symmetric codebook { radius * (-1 + 2j/(levels-1)) : j = 0..levels-1 }.
struct Alphabet {
    double radius = 0.0;
    int levels = 0;
    std::vector<double> elements;  // strictly increasing, symmetric about 0
};

Alphabet build_alphabet(int levels, double radius);

/// Alphabet with every element multiplied by s > 0.
Alphabet scale_alphabet(const Alphabet& a, double s);

/// c_alpha * median of |entries|. Even counts take the mean of the central pair.
/// Throws DegenerateAlphabetError if the result is 0.
double radius_from_weights(const Eigen::MatrixXd& weights, double c_alpha);

/// Nearest element of the alphabet. Exact midpoints round away from zero;
/// the z == 0 tie of an even-level alphabet resolves to the positive element.
double scalar_quantize(double z, const Alphabet& a);

}  // namespace gpfq
