#include "gpfq/quantize.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace gpfq {

namespace {

void check_dims(Eigen::Index n_w, Eigen::Index n_cols, const char* what) {
    if (n_w != n_cols) {
        throw std::invalid_argument(std::string(what) +
                                    ": weight length does not match column count");
    }
}

}  // namespace

NeuronQuantizationResult quantize_neuron_first_layer(
    const Eigen::VectorXd& w, const Eigen::MatrixXd& data_columns,
    const Alphabet& a, bool record_trace) {
    const Eigen::Index n = w.size();
    check_dims(n, data_columns.cols(), "quantize_neuron_first_layer");

    NeuronQuantizationResult res;
    res.codes.resize(n);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(data_columns.rows());
    if (record_trace) {
        res.state_norm_trace.reserve(static_cast<size_t>(n));
        res.increment_trace.reserve(static_cast<size_t>(n));
    }
    double sup = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto col = data_columns.col(t);
        const double norm_sq = col.squaredNorm();
        double q;
        double increment = 0.0;
        if (norm_sq == 0.0) {
            // degenerate column: the objective is constant in the code
            q = scalar_quantize(w[t], a);
        } else {
            const double dither = col.dot(u) / norm_sq;
            q = scalar_quantize(w[t] + dither, a);
            const double r = w[t] - q;
            increment = r * r * norm_sq + 2.0 * r * norm_sq * dither;
            u += r * col;
        }
        res.codes[t] = q;
        const double nu = u.norm();
        if (nu > sup) sup = nu;
        if (record_trace) {
            res.state_norm_trace.push_back(nu);
            res.increment_trace.push_back(increment);
        }
    }
    res.final_error = u.norm();
    res.trajectory_sup = sup;
    return res;
}

NeuronQuantizationResult quantize_neuron_hidden_layer(
    const Eigen::VectorXd& w, const Eigen::MatrixXd& analog_columns,
    const Eigen::MatrixXd& quantized_columns, const Alphabet& a,
    bool record_trace) {
    const Eigen::Index n = w.size();
    check_dims(n, analog_columns.cols(), "quantize_neuron_hidden_layer");
    if (analog_columns.rows() != quantized_columns.rows() ||
        analog_columns.cols() != quantized_columns.cols()) {
        throw std::invalid_argument(
            "quantize_neuron_hidden_layer: analog and quantized activations differ in shape");
    }

    NeuronQuantizationResult res;
    res.codes.resize(n);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(analog_columns.rows());
    if (record_trace) res.state_norm_trace.reserve(static_cast<size_t>(n));
    double sup = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const auto y = analog_columns.col(t);
        const auto yt = quantized_columns.col(t);
        const double norm_sq = yt.squaredNorm();
        double q;
        if (norm_sq == 0.0) {
            // all codes give the same objective; keep the MSQ representative
            q = scalar_quantize(w[t], a);
        } else {
            q = scalar_quantize((yt.dot(u) + w[t] * yt.dot(y)) / norm_sq, a);
        }
        u += w[t] * y - q * yt;
        res.codes[t] = q;
        const double nu = u.norm();
        if (nu > sup) sup = nu;
        if (record_trace) res.state_norm_trace.push_back(nu);
    }
    res.final_error = u.norm();
    res.trajectory_sup = sup;
    return res;
}

Eigen::MatrixXd msq_quantize(const Eigen::MatrixXd& weights, const Alphabet& a) {
    Eigen::MatrixXd out(weights.rows(), weights.cols());
    for (Eigen::Index j = 0; j < weights.cols(); ++j) {
        for (Eigen::Index i = 0; i < weights.rows(); ++i) {
            out(i, j) = scalar_quantize(weights(i, j), a);
        }
    }
    return out;
}

ExhaustiveResult exhaustive_optimal_quantize(const Eigen::VectorXd& w,
                                             const Eigen::MatrixXd& data_columns,
                                             const Alphabet& a) {
    const Eigen::Index n = w.size();
    check_dims(n, data_columns.cols(), "exhaustive_optimal_quantize");
    double total = 1.0;
    for (Eigen::Index t = 0; t < n; ++t) total *= a.levels;
    if (total > 2e6) {
        throw std::invalid_argument("exhaustive_optimal_quantize: instance too large");
    }

    const Eigen::VectorXd target = data_columns * w;
    std::vector<int> idx(static_cast<size_t>(n), 0);
    Eigen::VectorXd q(n);
    ExhaustiveResult best;
    best.error = -1.0;
    while (true) {
        for (Eigen::Index t = 0; t < n; ++t) {
            q[t] = a.elements[static_cast<size_t>(idx[static_cast<size_t>(t)])];
        }
        const double err = (target - data_columns * q).norm();
        if (best.error < 0.0 || err < best.error) {
            best.error = err;
            best.codes = q;
        }
        // odometer with the last coordinate fastest: lexicographic code order
        Eigen::Index pos = n - 1;
        while (pos >= 0 && ++idx[static_cast<size_t>(pos)] == a.levels) {
            idx[static_cast<size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
    return best;
}

}  // namespace gpfq
