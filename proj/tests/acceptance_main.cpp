// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Statistical tolerances come from tests/fixtures/theory_pilot.json.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gpfq/alphabet.hpp"
#include "gpfq/io.hpp"
#include "gpfq/network.hpp"
#include "gpfq/quantize.hpp"
#include "gpfq/random.hpp"
#include "gpfq/theory.hpp"

#ifndef GPFQ_FIXTURE_DIR
#define GPFQ_FIXTURE_DIR "tests/fixtures"
#endif

namespace {

using nlohmann::json;
using namespace gpfq;

int failures = 0;

void report(int criterion, const std::string& what, bool ok) {
    std::cout << "criterion " << criterion << " [" << (ok ? "PASS" : "FAIL") << "] "
              << what << std::endl;
    if (!ok) ++failures;
}

json load_fixture() {
    const std::string path = std::string(GPFQ_FIXTURE_DIR) + "/theory_pilot.json";
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open fixture " + path);
    }
    json j;
    in >> j;
    return j;
}

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, double sigma,
                         std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, sigma);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    }
    return m;
}

// per-step argmin of ||u + w x - p x||^2 by enumeration, with the documented
// tie rule (away from zero; positive on the symmetric tie)
double step_argmin(const Eigen::VectorXd& u, double w, const Eigen::VectorXd& x,
                   const Alphabet& a) {
    double best = a.elements.front();
    double best_dist = (u + (w - best) * x).squaredNorm();
    for (double p : a.elements) {
        const double d = (u + (w - p) * x).squaredNorm();
        if (d < best_dist || (d == best_dist && std::abs(p) >= std::abs(best))) {
            best_dist = d;
            best = p;
        }
    }
    return best;
}

void criterion_1() {
    const auto start = std::chrono::steady_clock::now();
    bool ok = true;
    int instances = 0;
    for (int levels : {3, 4}) {
        const Alphabet a = build_alphabet(levels, 1.0);
        for (int rep = 0; rep < 250; ++rep, ++instances) {
            auto rng = make_rng(1001, static_cast<uint64_t>(levels) * 1000 + rep);
            std::uniform_int_distribution<int> pick_n(1, 10), pick_m(1, 6);
            std::uniform_real_distribution<double> unif(-1.2, 1.2);
            const int n = pick_n(rng), m = pick_m(rng);
            const Eigen::MatrixXd x = gaussian(m, n, 1.0, rng);
            Eigen::VectorXd w(n);
            for (int t = 0; t < n; ++t) w[t] = unif(rng);
            const auto res = quantize_neuron_first_layer(w, x, a);
            // replay and compare against the enumerated per-step minimizer
            Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
            for (int t = 0; t < n; ++t) {
                const double oracle = step_argmin(u, w[t], x.col(t), a);
                if (res.codes[t] != oracle) ok = false;
                u += (w[t] - res.codes[t]) * x.col(t);
            }
        }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(1, "closed-form step equals enumerated argmin on " +
                  std::to_string(instances) + " instances (" +
                  std::to_string(secs) + " s)",
           ok && secs < 10.0);
}

void criterion_2() {
    const auto start = std::chrono::steady_clock::now();
    const Alphabet a = build_alphabet(3, 1.0);
    bool ok = true;
    int equal_count = 0;
    for (int rep = 0; rep < 200; ++rep) {
        auto rng = make_rng(1002, static_cast<uint64_t>(rep));
        std::uniform_int_distribution<int> pick_n(1, 8), pick_m(1, 5);
        std::uniform_real_distribution<double> unif(-1.2, 1.2);
        const int n = pick_n(rng), m = pick_m(rng);
        const Eigen::MatrixXd x = gaussian(m, n, 1.0, rng);
        Eigen::VectorXd w(n);
        if (rep < 5) {
            // fixed-point fixtures: weights already on the alphabet
            std::uniform_int_distribution<int> pick(0, 2);
            for (int t = 0; t < n; ++t) w[t] = a.elements[static_cast<size_t>(pick(rng))];
        } else {
            for (int t = 0; t < n; ++t) w[t] = unif(rng);
        }
        const auto greedy = quantize_neuron_first_layer(w, x, a);
        const auto optimal = exhaustive_optimal_quantize(w, x, a);
        if (greedy.final_error < optimal.error - 1e-9) ok = false;
        if (std::abs(greedy.final_error - optimal.error) <= 1e-12) ++equal_count;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(2, "greedy error >= exhaustive optimum on 200 instances, equality in " +
                  std::to_string(equal_count) + " (" + std::to_string(secs) + " s)",
           ok && equal_count >= 1 && secs < 30.0);
}

json criterion_3_and_6(const json& fixture) {
    const auto start = std::chrono::steady_clock::now();
    DecayConfig cfg;
    cfg.seed = fixture.at("decay").at("seed").get<uint64_t>();
    cfg.gpfq_slope_lo = fixture.at("decay").at("gpfq_slope_lo").get<double>();
    cfg.gpfq_slope_hi = fixture.at("decay").at("gpfq_slope_hi").get<double>();
    cfg.msq_slope_lo = fixture.at("decay").at("msq_slope_lo").get<double>();
    cfg.msq_slope_hi = fixture.at("decay").at("msq_slope_hi").get<double>();
    cfg.threads = static_cast<int>(
        std::min<unsigned>(8, std::max<unsigned>(1, std::thread::hardware_concurrency())));
    const json rep = relative_error_decay_experiment(cfg);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double gpfq_slope = rep.at("aggregates").at("gpfq_slope").get<double>();
    const double msq_slope = rep.at("aggregates").at("msq_slope").get<double>();
    std::ostringstream what;
    what << "decay slopes gpfq=" << gpfq_slope << " msq=" << msq_slope
         << ", gpfq beats msq at N=8192 (" << secs << " s)";
    report(3, what.str(),
           rep.at("checks").at("slope_windows").get<bool>() &&
               rep.at("checks").at("gpfq_beats_msq_at_largest_n").get<bool>() &&
               rep.at("checks").at("stability_proxy").get<bool>() && secs < 300.0);
    return rep;
}

void criteria_4_and_5(const json& fixture) {
    const auto start = std::chrono::steady_clock::now();
    const json rep = special_case_suite(fixture.at("special").at("seed").get<uint64_t>());
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(4, "identical-column runs keep ||u_t|| <= 0.5 exactly, sup=" +
                  std::to_string(rep.at("sigma_delta_max_state_norm").get<double>()),
           rep.at("checks").at("sigma_delta_bound").get<bool>() && secs < 15.0);
    report(5, "orthogonal-column runs: norm identity to 1e-9 and codes equal MSQ",
           rep.at("checks").at("adversarial_case").get<bool>());
}

void criterion_6(const json& decay_report) {
    report(6, "increment bound delta||u||^2 <= B/4 over all decay trajectories, "
              "max margin " +
                  std::to_string(decay_report.at("aggregates")
                                     .at("max_increment_margin")
                                     .get<double>()),
           decay_report.at("checks").at("increment_bound").get<bool>());
}

void criterion_7(const json& fixture) {
    const auto start = std::chrono::steady_clock::now();
    const json rep =
        level_set_check(10000, fixture.at("levelsets").at("seed").get<uint64_t>());
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(7, "level-set ball characterization: " +
                  std::to_string(rep.at("violations").get<int>()) +
                  " violations in 10000 triples (" + std::to_string(secs) + " s)",
           rep.at("passed").get<bool>() && secs < 10.0);
}

void criterion_8(const json& fixture) {
    const auto start = std::chrono::steady_clock::now();
    const uint64_t seed = fixture.at("increments").at("seed").get<uint64_t>();
    bool ok = true;
    auto rng = make_rng(seed, 99);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd u(8);
    for (int i = 0; i < u.size(); ++i) u[i] = normal(rng);
    std::vector<double> grid;
    for (int i = 0; i <= 60; ++i) grid.push_back(-1.2 + i * 0.025);
    for (double w : {0.3, -0.3, 0.7, -0.7}) {
        const json rep = increment_survival_check(u, w, grid, 50000, seed);
        ok = ok && rep.at("max_deviation").get<double>() == 0.0 &&
             rep.at("samples_beyond_support").get<int>() == 0;
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report(8, "survival identity exact for w in {+-0.3, +-0.7}, 50000 samples each (" +
                  std::to_string(secs) + " s)",
           ok && secs < 30.0);
}

void criterion_9(const json& fixture) {
    const auto start = std::chrono::steady_clock::now();
    SubspaceConfig cfg;
    cfg.seed = fixture.at("subspace").at("seed").get<uint64_t>();
    const json rep = subspace_experiment(cfg);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream what;
    what << "subspace codes identical, median error ratio "
         << rep.at("aggregates").at("median_ratio").get<double>() << " (" << secs
         << " s)";
    report(9, what.str(),
           rep.at("checks").at("codes_identical").get<bool>() &&
               rep.at("checks").at("median_within_factor_2").get<bool>() && secs < 120.0);
}

void criterion_10(const json& fixture) {
    const auto start = std::chrono::steady_clock::now();
    GeneralizationConfig cfg;
    cfg.seed = fixture.at("generalization").at("seed").get<uint64_t>();
    cfg.ratio_bound = fixture.at("generalization").at("ratio_bound").get<double>();
    const json rep = generalization_experiment(cfg);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream what;
    what << "generalization ratio within pilot bound " << cfg.ratio_bound << " in "
         << rep.at("aggregates").at("fraction_within_bound").get<double>() * 100.0
         << "% of trials (" << secs << " s)";
    report(10, what.str(), rep.at("passed").get<bool>() && secs < 120.0);
}

NetworkModel make_mlp(int input_dim, int hidden, uint64_t seed) {
    auto rng = make_rng(seed, 7);
    NetworkModel model;
    model.input_shape.dims = {input_dim};
    const std::vector<std::pair<int, int>> dims = {
        {input_dim, hidden}, {hidden, 512}, {512, 10}};
    for (size_t l = 0; l < dims.size(); ++l) {
        const auto [in, out] = dims[l];
        const double sigma = 1.0 / std::sqrt(static_cast<double>(in));
        model.layers.emplace_back(
            DenseLayer{gaussian(in, out, sigma, rng), Eigen::VectorXd::Zero(out)});
        if (l + 1 < dims.size()) {
            model.layers.emplace_back(ActivationLayer{ActivationKind::relu});
        }
    }
    return model;
}

double best_relative_error(const NetworkModel& model, const Eigen::MatrixXd& batch,
                           bool use_gpfq, int threads) {
    const Eigen::MatrixXd ref = forward(model, batch);
    double best = std::numeric_limits<double>::infinity();
    for (int c = 1; c <= 6; ++c) {
        NetworkModel quantized;
        if (use_gpfq) {
            QuantizeNetworkOptions options;
            options.levels = 3;
            options.c_alpha = static_cast<double>(c);
            options.threads = threads;
            quantized = quantize_network(model, batch, options).first;
        } else {
            quantized = model;
            for (auto& layer : quantized.layers) {
                if (auto* d = std::get_if<DenseLayer>(&layer)) {
                    const double radius =
                        radius_from_weights(d->weights, static_cast<double>(c));
                    const Alphabet a = build_alphabet(3, radius);
                    d->weights =
                        msq_quantize(d->weights, a).cast<float>().cast<double>();
                }
            }
        }
        const double err = (forward(quantized, batch) - ref).norm() / ref.norm();
        best = std::min(best, err);
    }
    return best;
}

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void criterion_11() {
    const auto start = std::chrono::steady_clock::now();
    const int threads = static_cast<int>(
        std::min<unsigned>(8, std::max<unsigned>(1, std::thread::hardware_concurrency())));
    const int input_dim = 128, samples = 128;
    std::vector<double> gpfq_wide, msq_wide, gpfq_narrow;
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        auto rng = make_rng(1011, seed);
        const Eigen::MatrixXd batch = gaussian(samples, input_dim, 1.0, rng);
        const NetworkModel wide = make_mlp(input_dim, 1024, seed);
        const NetworkModel narrow = make_mlp(input_dim, 64, seed);
        gpfq_wide.push_back(best_relative_error(wide, batch, true, threads));
        msq_wide.push_back(best_relative_error(wide, batch, false, threads));
        gpfq_narrow.push_back(best_relative_error(narrow, batch, true, threads));
    }
    const double g = median_of(gpfq_wide), m = median_of(msq_wide),
                 gn = median_of(gpfq_narrow);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ostringstream what;
    what << "end-to-end MLP medians: gpfq@1024=" << g << " msq@1024=" << m
         << " gpfq@64=" << gn << " (" << secs << " s)";
    report(11, what.str(), g < m && g < gn && secs < 300.0);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_12() {
    const char* bin = std::getenv("GPFQ_BIN");
    if (bin == nullptr) {
        report(12, "GPFQ_BIN not set; cannot exercise the CLI", false);
        return;
    }
    // fixture model + calibration data
    auto rng = make_rng(1012, 0);
    NetworkModel model = make_mlp(16, 48, 77);
    const Eigen::MatrixXd batch = gaussian(12, 16, 1.0, rng);
    save_model(model, "acc_model.nnqm");
    TensorShape shape;
    shape.dims = {16};
    save_data(batch, shape, "acc_data.nnqd");

    auto run = [&](int threads, const std::string& tag) {
        std::ostringstream cmd;
        cmd << '"' << bin << '"' << " quantize --model acc_model.nnqm"
            << " --data acc_data.nnqd --levels 3 --c-alpha 2"
            << " --out acc_q_" << tag << ".nnqm --report acc_r_" << tag << ".json"
            << " --threads " << threads << " 2>/dev/null";
        return std::system(cmd.str().c_str());
    };
    const bool ran = run(1, "t1") == 0 && run(8, "t8") == 0;
    bool ok = ran;
    if (ran) {
        ok = ok && slurp("acc_q_t1.nnqm") == slurp("acc_q_t8.nnqm");
        ok = ok && slurp("acc_r_t1.json") == slurp("acc_r_t8.json");
        // archive round trip is bit exact
        const NetworkModel loaded = load_model("acc_q_t1.nnqm");
        save_model(loaded, "acc_q_rt.nnqm");
        ok = ok && slurp("acc_q_rt.nnqm") == slurp("acc_q_t1.nnqm");
        // library-level determinism across thread counts
        DecayConfig cfg;
        cfg.m = 8;
        cfg.n_grid = {64, 128, 256};
        cfg.trials = 8;
        cfg.seed = 5;
        cfg.threads = 1;
        const json one = relative_error_decay_experiment(cfg);
        cfg.threads = 8;
        const json eight = relative_error_decay_experiment(cfg);
        ok = ok && one == eight;
    }
    report(12, "threads 1 vs 8 give byte-identical artifacts; round trips bit-exact",
           ok);
}

}  // namespace

int main() {
    try {
        const json fixture = load_fixture();
        criterion_1();
        criterion_2();
        const json decay = criterion_3_and_6(fixture);
        criteria_4_and_5(fixture);
        criterion_6(decay);
        criterion_7(fixture);
        criterion_8(fixture);
        criterion_9(fixture);
        criterion_10(fixture);
        criterion_11();
        criterion_12();
    } catch (const std::exception& e) {
        std::cout << "acceptance aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures == 0 ? "all criteria passed" : "criteria failed: ")
              << (failures == 0 ? "" : std::to_string(failures)) << std::endl;
    return failures == 0 ? 0 : 1;
}
