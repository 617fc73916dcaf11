#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "spacte/metrics.hpp"
#include "spacte/rng.hpp"

using namespace spacte;

namespace {

CertificationRecord rec(double radius, bool correct) {
    CertificationRecord r;
    r.radius = radius;
    r.correct = correct;
    r.predicted = correct ? 0 : -1;
    return r;
}

}  // namespace

TEST_CASE("average certified radius arithmetic") {
    CHECK(acr({rec(0.5, true), rec(0.3, false)}) == doctest::Approx(0.25));
    CHECK(acr({rec(0.0, false), rec(0.0, false)}) == doctest::Approx(0.0));
    CHECK(acr({}) == 0.0);
}

TEST_CASE("certified accuracy comparison rule") {
    const std::vector<CertificationRecord> records = {rec(0.5, true), rec(0.2, true),
                                                      rec(0.9, false), rec(0.0, true)};
    CHECK(certified_accuracy(records, 0.0) == doctest::Approx(0.75));
    CHECK(certified_accuracy(records, 0.2) == doctest::Approx(0.5));
    CHECK(certified_accuracy(records, 0.5) == doctest::Approx(0.25));
    CHECK(certified_accuracy(records, 10.0) == doctest::Approx(0.0));
}

TEST_CASE("certified curve is monotone non-increasing") {
    Rng rng(8);
    std::vector<CertificationRecord> records;
    for (int i = 0; i < 200; ++i)
        records.push_back(rec(rng.uniform() * 1.2, rng.uniform() < 0.8));
    const CertifiedCurve curve = certified_curve(records, 1.5, 0.05);
    for (std::size_t i = 1; i < curve.accuracy.size(); ++i)
        CHECK(curve.accuracy[i] <= curve.accuracy[i - 1]);
    CHECK(curve.to_csv().rfind("radius,accuracy\n", 0) == 0);
}

TEST_CASE("acr equals the area under the certified-accuracy curve") {
    Rng rng(21);
    std::vector<CertificationRecord> records;
    for (int i = 0; i < 500; ++i)
        records.push_back(rec(rng.uniform(), rng.uniform() < 0.7));
    // Riemann sum over a fine grid: the curve is a step function of the
    // radii, so a fine rectangle sum reproduces the mean radius mass.
    const double step = 1e-4;
    double area = 0.0;
    for (double r = step; r <= 1.0 + step; r += step)
        area += certified_accuracy(records, r) * step;
    CHECK(area == doctest::Approx(acr(records)).epsilon(0.01));
}

TEST_CASE("histogram counts sum to the sample count") {
    std::vector<double> values = {0.1, 0.2, 0.2, 0.9, -0.5, 0.4, 0.4, 0.4};
    const std::string csv = histogram_csv(values, 4);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    CHECK(line == "bin_left,bin_right,count");
    long long total = 0;
    while (std::getline(is, line)) {
        const std::size_t last = line.rfind(',');
        total += std::stoll(line.substr(last + 1));
    }
    CHECK(total == static_cast<long long>(values.size()));
}

TEST_CASE("log-probability gap closed form on a fixed linear model") {
    // a bias-only linear model producing softmax (0.9, 0.1) for every input
    const ArchitectureSpec spec = mlp_spec(3, 2, 1, {}, 0);
    MultiHeadNetwork net = build_network(spec, 0);
    std::vector<double> flat = net.flatten_params();
    // layer order: weight (2x3) then bias (2)
    for (int i = 0; i < 6; ++i) flat[i] = 0.0;
    flat[6] = std::log(0.9);
    flat[7] = std::log(0.1);
    net.load_flat_params(flat);

    Tensor x(1, 3, 1, 1);
    x.v = {0.5, 0.5, 0.5};
    Rng rng(4);
    const auto gaps = log_prob_gap_samples(net, x, 0, 0.0, 5, rng);
    REQUIRE(gaps.size() == 5);
    for (double g : gaps)
        CHECK(g == doctest::Approx(std::log(9.0)).epsilon(1e-9));  // ln 0.9 - ln 0.1

    const auto wrong_way = log_prob_gap_samples(net, x, 1, 0.0, 2, rng);
    for (double g : wrong_way) CHECK(g == doctest::Approx(-std::log(9.0)).epsilon(1e-9));
}

TEST_CASE("gap sign agrees with per-draw correctness") {
    const ArchitectureSpec spec = mlp_spec(2, 2, 2, {6}, 0);
    MultiHeadNetwork net = build_network(spec, 77);
    Tensor x(1, 2, 1, 1);
    x.v = {0.7, 0.2};
    Rng rng(13);
    Rng rng_copy(13);
    const auto gaps = log_prob_gap_samples(net, x, 0, 0.5, 50, rng);
    for (double g : gaps) {
        Tensor noisy = x;
        for (double& v : noisy.v) v += 0.5 * rng_copy.gaussian();
        const Tensor ens = ensemble_logits_batch(net.forward_all_heads(noisy, Mode::Eval));
        const bool correct = ens.at(0, 0, 0, 0) > ens.at(0, 1, 0, 0);
        if (g > 0) CHECK(correct);
        if (g < 0) CHECK_FALSE(correct);
    }
}

TEST_CASE("easy-hard split boundaries and empty groups") {
    std::vector<SampleAnalysis> samples(4);
    samples[0] = {0.5, 0.2, {true, true}};
    samples[1] = {0.3, 0.4, {true, false}};
    samples[2] = {0.0, 1.9, {false, false}};
    samples[3] = {0.8, 0.1, {true, true}};

    const EasyHardReport at_zero = easy_hard_split(samples, 0.0);
    CHECK(at_zero.easy.count == 3);  // every positive-radius sample is easy
    CHECK(at_zero.hard.count == 1);

    const EasyHardReport above_max = easy_hard_split(samples, 10.0);
    CHECK(above_max.easy.empty);
    CHECK(above_max.hard.count == 4);
    CHECK(above_max.to_text().find("empty") != std::string::npos);

    const EasyHardReport mid = easy_hard_split(samples, 0.4);
    CHECK(mid.easy.count == 2);
    CHECK(mid.easy.mean_smoothed_loss < mid.hard.mean_smoothed_loss);
    CHECK(mid.easy.mean_draw_accuracy >= mid.hard.mean_draw_accuracy);
    CHECK(mid.easy.min_draw_accuracy <= mid.easy.max_draw_accuracy);
}

TEST_CASE("runtime report includes cost accounting and timings") {
    const CostReport cost = estimate_flops(mlp_spec(8, 2, 3, {16}, 2));
    const std::string text = runtime_report(cost, 1.5, 0.02);
    CHECK(text.find("1.5") != std::string::npos);
    CHECK(text.find("0.02") != std::string::npos);
    const std::string without = runtime_report(cost, -1.0, -1.0);
    CHECK(without.find("seconds/epoch") == std::string::npos);
}
