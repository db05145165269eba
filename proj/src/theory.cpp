#include "gpfq/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "gpfq/parallel.hpp"
#include "gpfq/quantize.hpp"
#include "gpfq/random.hpp"

namespace gpfq {

namespace {

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double sigma,
                                std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, sigma);
    Eigen::MatrixXd x(rows, cols);
    // column by column so the draw order is part of the format
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            x(i, j) = normal(rng);
        }
    }
    return x;
}

// relative guard for exact-in-theory floating point comparisons
constexpr double kAccumulationSlack = 1e-12;

}  // namespace

Eigen::VectorXd sample_separated_weights(int n, double epsilon, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Eigen::VectorXd w(n);
    for (int t = 0; t < n; ++t) {
        double v;
        do {
            v = unif(rng);
        } while (std::min({std::abs(v + 1.0), std::abs(v), std::abs(v - 1.0)}) <= epsilon);
        w[t] = v;
    }
    return w;
}

SlopeFit fit_decay_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3) {
        throw std::invalid_argument("fit_decay_slope needs at least 3 points");
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [n, e] : points) {
        if (!(n > 0.0) || !(e > 0.0)) {
            throw std::invalid_argument("fit_decay_slope needs positive values");
        }
        const double x = std::log(n), y = std::log(e);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double k = static_cast<double>(points.size());
    SlopeFit fit;
    fit.slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    fit.intercept = (sy - fit.slope * sx) / k;
    return fit;
}

nlohmann::json relative_error_decay_experiment(const DecayConfig& cfg) {
    if (cfg.trials < 1) throw std::invalid_argument("decay: trials must be >= 1");
    if (!(cfg.epsilon > 0.0 && cfg.epsilon < 0.5)) {
        throw std::invalid_argument("decay: epsilon must lie in (0, 1/2)");
    }
    for (int n : cfg.n_grid) {
        if (n < cfg.m) throw std::invalid_argument("decay: every N must be >= m");
    }
    const double sigma = cfg.sigma > 0.0 ? cfg.sigma : 1.0 / std::sqrt(cfg.m);
    const Alphabet alphabet = build_alphabet(cfg.levels, cfg.radius);

    struct Record {
        int n = 0, trial = 0;
        double gpfq_rel = 0, msq_rel = 0, final_error = 0, trajectory_sup = 0;
        double increment_margin = 0;  // max_t (delta ||u||^2 - B/4)
        bool stable = true;
    };
    const int total = static_cast<int>(cfg.n_grid.size()) * cfg.trials;
    std::vector<Record> records(static_cast<size_t>(total));
    parallel_for(total, cfg.threads, [&](int idx) {
        const int gi = idx / cfg.trials;
        const int trial = idx % cfg.trials;
        const int n = cfg.n_grid[static_cast<size_t>(gi)];
        auto rng = make_rng(cfg.seed, (static_cast<uint64_t>(n) << 32) | static_cast<uint64_t>(trial));
        const Eigen::MatrixXd x = gaussian_matrix(cfg.m, n, sigma, rng);
        const Eigen::VectorXd w = sample_separated_weights(n, cfg.epsilon, rng);
        const double denom = (x * w).norm();

        auto res = quantize_neuron_first_layer(w, x, alphabet, /*record_trace=*/true);
        double b = 0.0;
        for (Eigen::Index t = 0; t < n; ++t) b = std::max(b, x.col(t).squaredNorm());
        double margin = -std::numeric_limits<double>::infinity();
        for (double inc : res.increment_trace) margin = std::max(margin, inc - b / 4.0);

        const Eigen::MatrixXd q_msq = msq_quantize(w, alphabet);
        Record& r = records[static_cast<size_t>(idx)];
        r.n = n;
        r.trial = trial;
        r.final_error = res.final_error;
        r.trajectory_sup = res.trajectory_sup;
        r.gpfq_rel = res.final_error / denom;
        r.msq_rel = (x * (w - q_msq.col(0).eval())).norm() / denom;
        r.increment_margin = margin;
        r.stable = res.trajectory_sup <=
                   10.0 * sigma * cfg.m * std::log(static_cast<double>(n));
    });

    std::vector<std::pair<double, double>> gpfq_curve, msq_curve;
    nlohmann::json curve_json = nlohmann::json::array();
    for (size_t gi = 0; gi < cfg.n_grid.size(); ++gi) {
        std::vector<double> g, s;
        for (int trial = 0; trial < cfg.trials; ++trial) {
            const Record& r = records[gi * static_cast<size_t>(cfg.trials) +
                                      static_cast<size_t>(trial)];
            g.push_back(r.gpfq_rel);
            s.push_back(r.msq_rel);
        }
        const double mg = median(g), ms = median(s);
        gpfq_curve.emplace_back(cfg.n_grid[gi], mg);
        msq_curve.emplace_back(cfg.n_grid[gi], ms);
        curve_json.push_back({{"n", cfg.n_grid[gi]},
                              {"median_gpfq_relative_error", mg},
                              {"median_msq_relative_error", ms}});
    }
    const SlopeFit gpfq_fit = fit_decay_slope(gpfq_curve);
    const SlopeFit msq_fit = fit_decay_slope(msq_curve);

    double worst_margin = -std::numeric_limits<double>::infinity();
    int unstable = 0;
    nlohmann::json recs = nlohmann::json::array();
    for (const Record& r : records) {
        worst_margin = std::max(worst_margin, r.increment_margin);
        if (!r.stable) ++unstable;
        recs.push_back({{"n", r.n},
                        {"trial", r.trial},
                        {"relative_error", r.gpfq_rel},
                        {"msq_relative_error", r.msq_rel},
                        {"final_error", r.final_error},
                        {"trajectory_sup", r.trajectory_sup}});
    }
    const double unstable_fraction = static_cast<double>(unstable) / total;
    const bool increments_ok = worst_margin <= kAccumulationSlack;
    const bool slopes_ok = gpfq_fit.slope >= cfg.gpfq_slope_lo &&
                           gpfq_fit.slope <= cfg.gpfq_slope_hi &&
                           msq_fit.slope >= cfg.msq_slope_lo &&
                           msq_fit.slope <= cfg.msq_slope_hi;
    const bool dominance = gpfq_curve.back().second < msq_curve.back().second;
    const bool stability_ok = unstable_fraction <= 0.05;

    return {{"experiment", "decay"},
            {"config",
             {{"m", cfg.m},
              {"n_grid", cfg.n_grid},
              {"sigma", sigma},
              {"trials", cfg.trials},
              {"seed", cfg.seed},
              {"levels", cfg.levels},
              {"radius", cfg.radius},
              {"epsilon", cfg.epsilon}}},
            {"records", recs},
            {"aggregates",
             {{"median_curves", curve_json},
              {"gpfq_slope", gpfq_fit.slope},
              {"gpfq_intercept", gpfq_fit.intercept},
              {"msq_slope", msq_fit.slope},
              {"max_increment_margin", worst_margin},
              {"unstable_fraction", unstable_fraction}}},
            {"checks",
             {{"increment_bound", increments_ok},
              {"slope_windows", slopes_ok},
              {"gpfq_beats_msq_at_largest_n", dominance},
              {"stability_proxy", stability_ok}}},
            {"passed", increments_ok && slopes_ok && dominance && stability_ok}};
}

double generalization_pilot_ratio_bound() {
    // envelope of the ratio statistic over pilot runs at seeds 1..4
    // (m=16, n=1024, 200 trials each): max observed 0.0100, doubled
    return 0.02;
}

nlohmann::json generalization_experiment(const GeneralizationConfig& cfg) {
    if (cfg.n < 4 * cfg.m) {
        throw std::invalid_argument("generalization: require n >= 4m");
    }
    const double sigma = cfg.sigma > 0.0 ? cfg.sigma : 1.0 / std::sqrt(cfg.m);
    const double sigma_z =
        cfg.sigma_z > 0.0 ? cfg.sigma_z : sigma * std::sqrt(static_cast<double>(cfg.n) / cfg.m);
    const double bound_value = (sigma_z * cfg.m /
                                (sigma * (std::sqrt(static_cast<double>(cfg.n)) -
                                          std::sqrt(static_cast<double>(cfg.m))))) *
                               sigma * cfg.m * std::log(static_cast<double>(cfg.n));
    const double ratio_bound =
        cfg.ratio_bound > 0.0 ? cfg.ratio_bound : generalization_pilot_ratio_bound();
    const Alphabet alphabet = build_alphabet(3, 1.0);

    std::vector<double> ratios;
    nlohmann::json recs = nlohmann::json::array();
    for (int trial = 0; trial < cfg.trials; ++trial) {
        auto rng = make_rng(cfg.seed, static_cast<uint64_t>(trial));
        const Eigen::MatrixXd x = gaussian_matrix(cfg.m, cfg.n, sigma, rng);
        const Eigen::VectorXd w = sample_separated_weights(cfg.n, cfg.epsilon, rng);
        auto res = quantize_neuron_first_layer(w, x, alphabet);

        Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        if (sv(sv.size() - 1) <= 1e-10 * sv(0)) {
            throw std::invalid_argument("generalization: data matrix is rank-deficient");
        }
        std::normal_distribution<double> normal(0.0, sigma_z);
        Eigen::VectorXd g(cfg.m);
        for (int i = 0; i < cfg.m; ++i) g[i] = normal(rng);
        const Eigen::VectorXd z = svd.matrixV() * g;
        const double stat = std::abs(z.dot(w - res.codes));
        const double ratio = stat / bound_value;
        ratios.push_back(ratio);
        recs.push_back({{"trial", trial}, {"statistic", stat}, {"ratio", ratio}});
    }
    int within = 0;
    for (double r : ratios) {
        if (r <= ratio_bound) ++within;
    }
    const double fraction = static_cast<double>(within) / cfg.trials;
    const bool passed = fraction >= cfg.pass_fraction;
    return {{"experiment", "generalize"},
            {"config",
             {{"m", cfg.m},
              {"n", cfg.n},
              {"sigma", sigma},
              {"sigma_z", sigma_z},
              {"trials", cfg.trials},
              {"seed", cfg.seed},
              {"epsilon", cfg.epsilon},
              {"ratio_bound", ratio_bound}}},
            {"records", recs},
            {"aggregates",
             {{"bound_value", bound_value},
              {"median_ratio", median(ratios)},
              {"max_ratio", *std::max_element(ratios.begin(), ratios.end())},
              {"fraction_within_bound", fraction}}},
            {"passed", passed}};
}

namespace {

struct SubspaceRun {
    double error_full = 0.0;
    double error_reduced = 0.0;
    bool codes_equal = true;
};

SubspaceRun run_subspace_trial(int d, int m, int n, double sigma, double epsilon,
                               uint64_t seed, uint64_t stream, const Alphabet& alphabet) {
    if (d > m) throw std::invalid_argument("subspace: require d <= m");
    auto rng = make_rng(seed, stream);
    const Eigen::MatrixXd g = gaussian_matrix(m, d, 1.0, rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    const Eigen::MatrixXd z =
        qr.householderQ() * Eigen::MatrixXd::Identity(m, d);
    const Eigen::MatrixXd a = gaussian_matrix(d, n, sigma, rng);
    const Eigen::VectorXd w = sample_separated_weights(n, epsilon, rng);
    const Eigen::MatrixXd x = z * a;

    auto full = quantize_neuron_first_layer(w, x, alphabet);
    auto reduced = quantize_neuron_first_layer(w, a, alphabet);
    SubspaceRun out;
    out.error_full = full.final_error;
    out.error_reduced = reduced.final_error;
    out.codes_equal = (full.codes.array() == reduced.codes.array()).all();
    return out;
}

}  // namespace

nlohmann::json subspace_experiment(const SubspaceConfig& cfg) {
    if (cfg.d > cfg.m || cfg.d > cfg.m_alt) {
        throw std::invalid_argument("subspace: require d <= m");
    }
    const double sigma = cfg.sigma > 0.0 ? cfg.sigma : 1.0 / std::sqrt(cfg.d);
    const Alphabet alphabet = build_alphabet(3, 1.0);

    std::vector<double> errors_m, errors_alt;
    bool all_codes_equal = true;
    nlohmann::json recs = nlohmann::json::array();
    for (int trial = 0; trial < cfg.trials; ++trial) {
        const auto base = run_subspace_trial(cfg.d, cfg.m, cfg.n, sigma, cfg.epsilon,
                                             cfg.seed, static_cast<uint64_t>(trial),
                                             alphabet);
        const auto alt = run_subspace_trial(cfg.d, cfg.m_alt, cfg.n, sigma, cfg.epsilon,
                                            cfg.seed,
                                            (1ULL << 40) + static_cast<uint64_t>(trial),
                                            alphabet);
        all_codes_equal = all_codes_equal && base.codes_equal && alt.codes_equal;
        errors_m.push_back(base.error_full);
        errors_alt.push_back(alt.error_full);
        recs.push_back({{"trial", trial},
                        {"final_error", base.error_full},
                        {"reduced_final_error", base.error_reduced},
                        {"codes_equal", base.codes_equal},
                        {"final_error_alt_m", alt.error_full},
                        {"codes_equal_alt_m", alt.codes_equal}});
    }
    const double med = median(errors_m);
    const double med_alt = median(errors_alt);
    const double ratio = med / med_alt;
    const bool factor_ok = ratio >= 0.5 && ratio <= 2.0;
    return {{"experiment", "subspace"},
            {"config",
             {{"d", cfg.d},
              {"m", cfg.m},
              {"m_alt", cfg.m_alt},
              {"n", cfg.n},
              {"sigma", sigma},
              {"trials", cfg.trials},
              {"seed", cfg.seed},
              {"epsilon", cfg.epsilon}}},
            {"records", recs},
            {"aggregates",
             {{"median_final_error", med},
              {"median_final_error_alt_m", med_alt},
              {"median_ratio", ratio}}},
            {"checks",
             {{"codes_identical", all_codes_equal}, {"median_within_factor_2", factor_ok}}},
            {"passed", all_codes_equal && factor_ok}};
}

nlohmann::json level_set_check(int trials, uint64_t seed) {
    const Alphabet alphabet = build_alphabet(3, 1.0);
    auto rng = make_rng(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif01(0.0, 1.0);
    const int m = 3;

    int violations = 0;
    auto check_triple = [&](const Eigen::VectorXd& u, double w,
                            const Eigen::VectorXd& x) {
        const double norm_sq = x.squaredNorm();
        const double q = scalar_quantize(w + x.dot(u) / norm_sq, alphabet);
        bool ok = true;
        if (w == 0.5) {
            ok = ok && ((q == 1.0) == (x.dot(u) >= 0.0));
        } else {
            const Eigen::VectorXd center = u / (1.0 - 2.0 * w);
            const bool inside = (x - center).squaredNorm() <= center.squaredNorm();
            ok = ok && ((q == 1.0) == (w < 0.5 ? inside : !inside));
        }
        if (w == -0.5) {
            ok = ok && ((q == -1.0) == (x.dot(u) <= 0.0));
        } else {
            const Eigen::VectorXd center = -u / (1.0 + 2.0 * w);
            const bool inside = (x - center).squaredNorm() <= center.squaredNorm();
            ok = ok && ((q == -1.0) == (w > -0.5 ? inside : !inside));
        }
        if (!ok) ++violations;
    };

    for (int i = 0; i < trials; ++i) {
        Eigen::VectorXd u(m), x(m);
        for (int j = 0; j < m; ++j) {
            u[j] = normal(rng);
            x[j] = normal(rng);
        }
        if (u.norm() == 0.0) u[0] = 1.0;
        double w;
        const double pick = unif01(rng);
        if (pick < 0.4) {
            w = (unif01(rng) - 0.5) * 0.98;  // |w| < 1/2
        } else if (pick < 0.8) {
            w = (0.5 + 0.49 * unif01(rng)) * (unif01(rng) < 0.5 ? -1.0 : 1.0);
        } else {
            w = unif01(rng) < 0.5 ? 0.5 : -0.5;
        }
        check_triple(u, w, x);
    }
    return {{"experiment", "levelsets"},
            {"config", {{"trials", trials}, {"seed", seed}}},
            {"violations", violations},
            {"passed", violations == 0}};
}

nlohmann::json increment_survival_check(const Eigen::VectorXd& u_prev, double w,
                                        const std::vector<double>& alpha_grid,
                                        int samples, uint64_t seed) {
    if (!(std::abs(w) > 0.0 && std::abs(w) < 1.0)) {
        throw std::invalid_argument("increment_survival_check: require 0 < |w| < 1");
    }
    if (u_prev.norm() == 0.0) {
        throw std::invalid_argument("increment_survival_check: u_prev must be nonzero");
    }
    const Alphabet alphabet = build_alphabet(3, 1.0);
    auto rng = make_rng(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);

    const int m = static_cast<int>(u_prev.size());
    std::vector<double> ys(static_cast<size_t>(samples));
    std::vector<double> increments(static_cast<size_t>(samples));
    double b = 0.0;
    double max_normalized = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples; ++i) {
        Eigen::VectorXd x(m);
        for (int j = 0; j < m; ++j) x[j] = normal(rng);
        const double norm_sq = x.squaredNorm();
        const double y = x.dot(u_prev) / norm_sq;
        const double q = scalar_quantize(w + y, alphabet);
        const double r = w - q;
        const double inc = r * r + 2.0 * r * y;  // normalized by ||X||^2
        ys[static_cast<size_t>(i)] = y;
        increments[static_cast<size_t>(i)] = inc;
        b = std::max(b, norm_sq);
        max_normalized = std::max(max_normalized, inc);
    }

    auto mu = [&](double lo, double hi) {
        if (!(lo < hi)) return 0.0;
        int count = 0;
        for (double y : ys) {
            if (y > lo && y < hi) ++count;
        }
        return static_cast<double>(count) / samples;
    };
    auto lemma_survival = [&](double alpha) {
        if (w > 0.0) {
            if (alpha > w - w * w) return 0.0;
            if (alpha >= -w - w * w) {
                return mu((alpha - w * w) / (2.0 * w),
                          (alpha - (w - 1.0) * (w - 1.0)) / (2.0 * (w - 1.0)));
            }
            return mu((alpha - (w + 1.0) * (w + 1.0)) / (2.0 * (w + 1.0)),
                      (alpha - (w - 1.0) * (w - 1.0)) / (2.0 * (w - 1.0)));
        }
        if (alpha > -w - w * w) return 0.0;
        if (alpha >= w - w * w) {
            return mu((alpha - (w + 1.0) * (w + 1.0)) / (2.0 * (w + 1.0)),
                      (alpha - w * w) / (2.0 * w));
        }
        return mu((alpha - (w + 1.0) * (w + 1.0)) / (2.0 * (w + 1.0)),
                  (alpha - (w - 1.0) * (w - 1.0)) / (2.0 * (w - 1.0)));
    };

    double max_deviation = 0.0;
    nlohmann::json grid = nlohmann::json::array();
    for (double alpha : alpha_grid) {
        int above = 0;
        for (double inc : increments) {
            if (inc > alpha) ++above;
        }
        const double empirical = static_cast<double>(above) / samples;
        const double predicted = lemma_survival(alpha);
        max_deviation = std::max(max_deviation, std::abs(empirical - predicted));
        grid.push_back({{"alpha", alpha}, {"empirical", empirical}, {"lemma", predicted}});
    }

    const double support_bound = std::abs(w) - w * w;
    int beyond_support = 0;
    for (double inc : increments) {
        if (inc > support_bound) ++beyond_support;
    }
    // Corollary: delta ||u||^2 = ||X||^2 * normalized increment <= B/4
    const bool corollary_ok = max_normalized <= 0.25 + kAccumulationSlack;

    return {{"experiment", "increments"},
            {"config",
             {{"w", w}, {"samples", samples}, {"seed", seed}, {"m", m}}},
            {"grid", grid},
            {"max_deviation", max_deviation},
            {"support_bound", support_bound},
            {"samples_beyond_support", beyond_support},
            {"max_normalized_increment", max_normalized},
            {"checks",
             {{"deviation_zero", max_deviation == 0.0},
              {"support_respected", beyond_support == 0},
              {"increment_corollary", corollary_ok}}},
            {"passed", max_deviation == 0.0 && beyond_support == 0 && corollary_ok}};
}

nlohmann::json special_case_suite(uint64_t seed) {
    const Alphabet alphabet = build_alphabet(3, 1.0);
    const int trials = 100;

    // identical unit columns: greedy first-order noise shaping
    double sigma_delta_sup = 0.0;
    {
        const int n = 1000, m = 8;
        Eigen::MatrixXd x = Eigen::MatrixXd::Zero(m, n);
        x.row(0).setOnes();  // every column is e_1 exactly
        for (int trial = 0; trial < trials; ++trial) {
            auto rng = make_rng(seed, static_cast<uint64_t>(trial));
            std::uniform_real_distribution<double> unif(-1.0, 1.0);
            Eigen::VectorXd w(n);
            for (int t = 0; t < n; ++t) w[t] = unif(rng);
            auto res = quantize_neuron_first_layer(w, x, alphabet, /*record_trace=*/true);
            for (double nu : res.state_norm_trace) {
                sigma_delta_sup = std::max(sigma_delta_sup, nu);
            }
        }
    }
    const bool sigma_delta_ok = sigma_delta_sup <= 0.5;

    // columns orthogonal to the running state: degenerates to MSQ
    double max_norm_identity_dev = 0.0;
    bool adversarial_codes_match = true;
    {
        const int n = 500, m = 16;
        for (int trial = 0; trial < trials; ++trial) {
            auto rng = make_rng(seed, (1ULL << 41) + static_cast<uint64_t>(trial));
            std::normal_distribution<double> normal(0.0, 1.0);
            const Eigen::VectorXd w = sample_separated_weights(n, 0.05, rng);
            Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
            double increments = 0.0;
            for (int t = 0; t < n; ++t) {
                Eigen::VectorXd x(m);
                for (int j = 0; j < m; ++j) x[j] = normal(rng);
                if (u.squaredNorm() > 0.0) {
                    x -= (x.dot(u) / u.squaredNorm()) * u;
                }
                x /= x.norm();
                const double q = scalar_quantize(w[t] + x.dot(u) / x.squaredNorm(), alphabet);
                if (q != scalar_quantize(w[t], alphabet)) adversarial_codes_match = false;
                u += (w[t] - q) * x;
                const double r = w[t] - q;
                increments += r * r;
                const double dev = std::abs(u.squaredNorm() - increments) /
                                   std::max(increments, 1e-30);
                max_norm_identity_dev = std::max(max_norm_identity_dev, dev);
            }
        }
    }
    const bool adversarial_ok = max_norm_identity_dev <= 1e-9 && adversarial_codes_match;

    return {{"experiment", "special"},
            {"config", {{"seed", seed}, {"trials", trials}}},
            {"sigma_delta_max_state_norm", sigma_delta_sup},
            {"adversarial_norm_identity_max_relative_deviation", max_norm_identity_dev},
            {"adversarial_codes_equal_msq", adversarial_codes_match},
            {"checks",
             {{"sigma_delta_bound", sigma_delta_ok}, {"adversarial_case", adversarial_ok}}},
            {"passed", sigma_delta_ok && adversarial_ok}};
}

}  // namespace gpfq
