#pragma once

#include <vector>

#include <Eigen/Core>

#include "gpfq/alphabet.hpp"

namespace gpfq {

struct NeuronQuantizationResult {
    Eigen::VectorXd codes;      // alphabet elements, length N
    double final_error = 0.0;   // ||u_N||_2
    double trajectory_sup = 0.0;  // max_t ||u_t||_2
    // filled only when record_trace is set
    std::vector<double> state_norm_trace;  // ||u_t||_2, t = 1..N
    std::vector<double> increment_trace;   // delta ||u_t||^2 per step, algebraic form
};

/// Greedy path-following quantization of one neuron against the raw data
/// matrix. Columns of data_columns are the per-coordinate vectors X_t; the
/// state u tracks the running error sum_{j<=t} (w_j - q_j) X_j.
NeuronQuantizationResult quantize_neuron_first_layer(
    const Eigen::VectorXd& w, const Eigen::MatrixXd& data_columns,
    const Alphabet& a, bool record_trace = false);

/// Hidden-layer variant: the analog path contributes w_t Y_t, the quantized
/// path subtracts q_t Ytilde_t.
NeuronQuantizationResult quantize_neuron_hidden_layer(
    const Eigen::VectorXd& w, const Eigen::MatrixXd& analog_columns,
    const Eigen::MatrixXd& quantized_columns, const Alphabet& a,
    bool record_trace = false);

/// Entrywise nearest-element rounding.
Eigen::MatrixXd msq_quantize(const Eigen::MatrixXd& weights, const Alphabet& a);

struct ExhaustiveResult {
    Eigen::VectorXd codes;
    double error = 0.0;  // ||X(w - q)||_2 at the minimizer
};

/// Global minimizer of ||X(w - q)||_2^2 over all code vectors by full
/// enumeration, ties broken by lexicographic code order. Rejects instances
/// with more than ~2e6 candidate codes.
ExhaustiveResult exhaustive_optimal_quantize(const Eigen::VectorXd& w,
                                             const Eigen::MatrixXd& data_columns,
                                             const Alphabet& a);

}  // namespace gpfq
