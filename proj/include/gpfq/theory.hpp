#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace gpfq {

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
};

/// OLS fit of log(error) against log(n); needs >= 3 points, all positive.
SlopeFit fit_decay_slope(const std::vector<std::pair<double, double>>& points);

struct DecayConfig {
    int m = 20;
    std::vector<int> n_grid = {128, 256, 512, 1024, 2048, 4096, 8192};
    double sigma = 0.0;  // 0 -> 1/sqrt(m)
    int trials = 50;
    uint64_t seed = 1;
    int levels = 3;
    double radius = 1.0;
    double epsilon = 0.05;
    int threads = 1;
    // assertion windows for the fitted slopes
    double gpfq_slope_lo = -0.65, gpfq_slope_hi = -0.35;
    double msq_slope_lo = -0.10, msq_slope_hi = 0.10;
};

struct GeneralizationConfig {
    int m = 16;
    int n = 1024;
    double sigma = 0.0;    // 0 -> 1/sqrt(m)
    double sigma_z = 0.0;  // 0 -> sigma * sqrt(n/m)
    int trials = 200;
    uint64_t seed = 1;
    double epsilon = 0.05;
    double ratio_bound = 0.0;  // 0 -> pilot-recorded default
    double pass_fraction = 0.95;
};

struct SubspaceConfig {
    int d = 8;
    int m = 64;
    int m_alt = 256;
    int n = 2048;
    double sigma = 0.0;  // 0 -> 1/sqrt(d)
    int trials = 100;
    uint64_t seed = 1;
    double epsilon = 0.05;
};

/// Ratio-bound constant recorded from pilot runs at the pinned seeds.
double generalization_pilot_ratio_bound();

nlohmann::json relative_error_decay_experiment(const DecayConfig& cfg);
nlohmann::json generalization_experiment(const GeneralizationConfig& cfg);
nlohmann::json subspace_experiment(const SubspaceConfig& cfg);
nlohmann::json level_set_check(int trials, uint64_t seed);
nlohmann::json increment_survival_check(const Eigen::VectorXd& u_prev, double w,
                                        const std::vector<double>& alpha_grid,
                                        int samples, uint64_t seed);
nlohmann::json special_case_suite(uint64_t seed);

/// Uniform [-1,1] weights rejection-sampled away from {-1, 0, 1}.
Eigen::VectorXd sample_separated_weights(int n, double epsilon, std::mt19937_64& rng);

}  // namespace gpfq
