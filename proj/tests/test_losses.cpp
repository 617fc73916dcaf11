#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "spacte/losses.hpp"
#include "spacte/rng.hpp"

using namespace spacte;

TEST_CASE("cross entropy closed forms") {
    std::vector<double> uniform(10, 0.7);
    CHECK(cross_entropy(uniform, 3) == doctest::Approx(std::log(10.0)).epsilon(1e-12));

    std::vector<double> peaked = {60.0, 0.0, 0.0};
    CHECK(cross_entropy(peaked, 0) == doctest::Approx(0.0).epsilon(1e-9));

    std::vector<double> two = {1.0, 0.0};
    CHECK(cross_entropy(two, 1) == doctest::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-12));

    CHECK_THROWS(cross_entropy(std::vector<double>{1.0, std::nan("")}, 0));
    CHECK_THROWS(cross_entropy(two, 5));
}

TEST_CASE("cross entropy gradient is softmax minus onehot") {
    std::vector<double> logits = {0.3, -1.2, 2.0};
    const std::vector<double> p = softmax(logits);
    const std::vector<double> g = cross_entropy_grad(logits, 1);
    CHECK(g[0] == doctest::Approx(p[0]).epsilon(1e-14));
    CHECK(g[1] == doctest::Approx(p[1] - 1.0).epsilon(1e-14));
    CHECK(g[2] == doctest::Approx(p[2]).epsilon(1e-14));
    CHECK(std::accumulate(g.begin(), g.end(), 0.0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cosine diversity closed forms") {
    CHECK(cosine_diversity_loss({{1, 0}, {0, 1}}) == doctest::Approx(0.0));
    CHECK(cosine_diversity_loss({{1, 0}, {1, 0}}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(cosine_diversity_loss({{2, 0}, {1, 1}}) ==
          doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-12));
    CHECK_THROWS(cosine_diversity_loss({{1, 0}}));
    CHECK_THROWS(cosine_diversity_loss({{1, 0}, {0, 0}}));
}

TEST_CASE("cosine diversity is rotation invariant") {
    // rotate both vectors by the same angle: the loss must not change
    const double theta = 0.7;
    auto rot = [&](std::vector<double> v) {
        return std::vector<double>{v[0] * std::cos(theta) - v[1] * std::sin(theta),
                                   v[0] * std::sin(theta) + v[1] * std::cos(theta)};
    };
    const std::vector<std::vector<double>> base = {{2, 0}, {1, 1}, {-0.5, 0.3}};
    std::vector<std::vector<double>> rotated;
    for (const auto& v : base) rotated.push_back(rot(v));
    CHECK(cosine_diversity_loss(rotated) ==
          doctest::Approx(cosine_diversity_loss(base)).epsilon(1e-10));
}

TEST_CASE("cosine diversity gradient matches central finite differences") {
    Rng rng(2024);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::vector<double>> hv(3, std::vector<double>(32));
        for (auto& v : hv) {
            for (double& x : v) x = rng.gaussian();
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            const double target = 0.5 + 1.5 * rng.uniform();
            for (double& x : v) x *= target / norm;
        }
        for (bool normalized : {false, true}) {
            const auto grad = cosine_diversity_grad(hv, normalized);
            const double eps = 1e-5;
            for (int k = 0; k < 3; ++k)
                for (int d = 0; d < 32; d += 7) {
                    auto plus = hv, minus = hv;
                    plus[k][d] += eps;
                    minus[k][d] -= eps;
                    const double fd = (cosine_diversity_loss(plus, normalized) -
                                       cosine_diversity_loss(minus, normalized)) /
                                      (2 * eps);
                    const double scale = std::max({1.0, std::abs(fd), std::abs(grad[k][d])});
                    CHECK(std::abs(grad[k][d] - fd) / scale <= 1e-4);
                }
        }
    }
}

TEST_CASE("head weights closed forms") {
    CHECK(head_weights(std::vector<double>{0.3, 0.7}, 0.2) ==
          std::vector<double>{0.8, 0.2});
    // epsilon = 0.8 with five heads makes every weight 0.2 (up to rounding in 1 - 0.8)
    const auto uniform = head_weights(std::vector<double>{1, 2, 3, 4, 5}, 0.8);
    for (double w : uniform) CHECK(w == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(head_weights(std::vector<double>{0.5, 0.5, 0.9}, 0.2) ==
          std::vector<double>{0.8, 0.1, 0.1});
    CHECK(head_weights(std::vector<double>{3.0}, 0.2) == std::vector<double>{1.0});
    CHECK_THROWS(head_weights(std::vector<double>{1.0, 2.0}, 1.5));
}

TEST_CASE("head weights sum to one and favor the argmin") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> losses(4);
        for (double& v : losses) v = rng.uniform();
        const double eps = 0.05 + 0.6 * rng.uniform();  // eps <= (L-1)/L keeps argmin on top
        const auto w = head_weights(losses, eps);
        CHECK(std::accumulate(w.begin(), w.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        const std::size_t best =
            std::min_element(losses.begin(), losses.end()) - losses.begin();
        for (double v : w) CHECK(w[best] >= v);
    }
}

TEST_CASE("smoothed loss") {
    CHECK(smoothed_loss(std::vector<double>{0.4, 0.8}) == doctest::Approx(0.6));
    CHECK(smoothed_loss(std::vector<double>{1.7}) == doctest::Approx(1.7));
    CHECK_THROWS(smoothed_loss(std::vector<double>{}));
}

TEST_CASE("self-paced weight closed forms") {
    CHECK(spl_weight(0.5, 1.0) == 1.0);
    CHECK(spl_weight(std::log(3.0), 0.0) == doctest::Approx(0.5).epsilon(1e-12));
    const double lambda = std::log(10.0);
    CHECK(spl_weight(lambda + 1.0, lambda) ==
          doctest::Approx(1.1 / (1.0 + std::exp(1.0))).epsilon(1e-9));
    // very large losses must not overflow
    CHECK(spl_weight(5000.0, 1.0) >= 0.0);
    CHECK(std::isfinite(spl_weight(5000.0, 1.0)));
}

TEST_CASE("self-paced weight is non-increasing and 1 on the easy side") {
    const double lambda = 1.3;
    double prev = 2.0;
    for (double loss = -2.0; loss <= 8.0; loss += 0.01) {
        const double w = spl_weight(loss, lambda);
        if (loss <= lambda) CHECK(w == 1.0);
        CHECK(w <= prev + 1e-15);
        prev = w;
    }
}

TEST_CASE("circular shift examples and L-fold identity") {
    TeachingWeights nu(1, 3);
    nu.at(0, 0) = 10;
    nu.at(0, 1) = 20;
    nu.at(0, 2) = 30;
    const TeachingWeights shifted = circular_shift(nu);
    // columns (a,b,c) -> heads receive (c,a,b)
    CHECK(shifted.at(0, 0) == 30);
    CHECK(shifted.at(0, 1) == 10);
    CHECK(shifted.at(0, 2) == 20);

    TeachingWeights round = nu;
    for (int i = 0; i < 3; ++i) round = circular_shift(round);
    CHECK(round.nu == nu.nu);

    TeachingWeights single(2, 1);
    single.at(0, 0) = 4;
    single.at(1, 0) = 5;
    CHECK(circular_shift(single).nu == single.nu);

    TeachingWeights pair(1, 2);
    pair.at(0, 0) = 1;
    pair.at(0, 1) = 2;
    const TeachingWeights swapped = circular_shift(pair);
    CHECK(swapped.at(0, 0) == 2);
    CHECK(swapped.at(0, 1) == 1);
}

namespace {

// Logits tensor with fixed per-head cross entropies: head k gets a two-class
// logit row whose CE for label 0 equals the requested value.
Tensor logits_with_ce(const std::vector<double>& ce_per_head) {
    const int L = static_cast<int>(ce_per_head.size());
    Tensor t(1, L, 2, 1);
    for (int k = 0; k < L; ++k) {
        // CE = log(1 + e^{b-a}); choose a = 0, b = log(e^{CE} - 1)
        t.at(0, k, 0, 0) = 0.0;
        t.at(0, k, 1, 0) = std::log(std::exp(ce_per_head[k]) - 1.0);
    }
    return t;
}

}  // namespace

TEST_CASE("objective closed form") {
    // L=2, m=1, N=1, omega [0.8,0.2], shifted nu [0.5,1.0], per-head CE [1,2]
    std::vector<Tensor> draws = {logits_with_ce({1.0, 2.0})};
    TeachingWeights nu(1, 2);
    nu.at(0, 0) = 0.5;
    nu.at(0, 1) = 1.0;
    const std::vector<int> labels = {0};
    const std::vector<double> omega = {0.8, 0.2};
    const double v = spacte_objective(draws, labels, nu, omega, {});
    CHECK(v == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("objective degenerates to the mean cross entropy") {
    std::vector<Tensor> draws = {logits_with_ce({1.5}), logits_with_ce({0.5})};
    TeachingWeights nu(1, 1);
    const double v = spacte_objective(draws, std::vector<int>{0}, nu, std::vector<double>{1.0}, {});
    CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("objective with zero teaching weights is the cosine term alone") {
    std::vector<Tensor> draws = {logits_with_ce({1.0, 2.0})};
    TeachingWeights nu(1, 2);
    nu.at(0, 0) = 0.0;
    nu.at(0, 1) = 0.0;
    const std::vector<std::vector<double>> hv = {{1, 0}, {1, 0}};
    const double v = spacte_objective(draws, std::vector<int>{0}, nu, std::vector<double>{0.5, 0.5}, hv);
    CHECK(v == doctest::Approx(cosine_diversity_loss(hv)).epsilon(1e-12));
}

TEST_CASE("consistency terms closed forms") {
    // identical draws: KL term vanishes; uniform mean prediction: entropy ln K
    Tensor uniform(1, 1, 10, 1);  // all-zero logits -> uniform softmax
    std::vector<Tensor> draws = {uniform, uniform};

    const TeachingWeights zero = consistency_terms(draws, 0.0, 0.0);
    CHECK(zero.at(0, 0) == doctest::Approx(0.0));

    const TeachingWeights ent = consistency_terms(draws, 5.0, 2.0);
    CHECK(ent.at(0, 0) == doctest::Approx(2.0 * std::log(10.0)).epsilon(1e-9));

    CHECK_THROWS(consistency_terms({uniform}, 1.0, 1.0));
}

TEST_CASE("consistency gradient matches finite differences") {
    Rng rng(77);
    const int N = 2, L = 2, K = 3, m = 2;
    std::vector<Tensor> draws(m, Tensor(N, L, K, 1));
    for (auto& t : draws)
        for (double& v : t.v) v = rng.gaussian();
    TeachingWeights coeff(N, L);
    coeff.at(0, 0) = 0.7;
    coeff.at(0, 1) = 0.3;
    coeff.at(1, 0) = 1.1;
    coeff.at(1, 1) = 0.5;

    std::vector<Tensor> grad(m, Tensor(N, L, K, 1));
    const double base = consistency_value_grad(draws, 0.8, 0.4, coeff, grad);
    CHECK(base == doctest::Approx([&] {
              const TeachingWeights terms = consistency_terms(draws, 0.8, 0.4);
              double s = 0.0;
              for (int n = 0; n < N; ++n)
                  for (int k = 0; k < L; ++k) s += coeff.at(n, k) * terms.at(n, k);
              return s;
          }()).epsilon(1e-10));

    const double eps = 1e-6;
    for (int i = 0; i < m; ++i)
        for (std::size_t j = 0; j < draws[i].v.size(); j += 5) {
            auto plus = draws, minus = draws;
            plus[i].v[j] += eps;
            minus[i].v[j] -= eps;
            auto value_of = [&](const std::vector<Tensor>& d) {
                const TeachingWeights terms = consistency_terms(d, 0.8, 0.4);
                double s = 0.0;
                for (int n = 0; n < N; ++n)
                    for (int k = 0; k < L; ++k) s += coeff.at(n, k) * terms.at(n, k);
                return s;
            };
            const double fd = (value_of(plus) - value_of(minus)) / (2 * eps);
            CHECK(grad[i].v[j] == doctest::Approx(fd).epsilon(1e-4));
        }
}

TEST_CASE("smoothmix mixing loss closed forms") {
    const int N = 1, L = 2, K = 4;
    Tensor logits(N, L, K, 1);
    Rng rng(3);
    for (double& v : logits.v) v = rng.gaussian();
    std::vector<double> y_mix(K, 1.0 / K);

    const TeachingWeights zero = smoothmix_terms(logits, y_mix, 0.0);
    CHECK(zero.at(0, 0) == doctest::Approx(0.0));
    CHECK(zero.at(0, 1) == doctest::Approx(0.0));

    // KL(p||y) with p == y is zero: uniform logits against uniform target
    Tensor flat(N, L, K, 1);
    const TeachingWeights match = smoothmix_terms(flat, y_mix, 3.0);
    CHECK(match.at(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("smoothmix target arithmetic at the mixing boundary") {
    // c4 = 1/2, one-hot base prediction, K = 10:
    // y_mix = 0.5 * onehot + 0.5 * uniform -> 0.55 on the hot class, 0.05 elsewhere
    const double c4 = 0.5;
    std::vector<double> f_tilde(10, 0.0);
    f_tilde[2] = 1.0;
    std::vector<double> y_mix(10);
    for (int c = 0; c < 10; ++c) y_mix[c] = (1 - c4) * f_tilde[c] + c4 / 10.0;
    CHECK(y_mix[2] == doctest::Approx(0.55));
    CHECK(y_mix[0] == doctest::Approx(0.05));
}

TEST_CASE("smoothmix gradient matches finite differences") {
    Rng rng(19);
    const int N = 2, L = 2, K = 3;
    Tensor logits(N, L, K, 1);
    for (double& v : logits.v) v = rng.gaussian();
    std::vector<double> y_mix(N * K);
    for (int n = 0; n < N; ++n) {
        double sum = 0.0;
        for (int c = 0; c < K; ++c) {
            y_mix[n * K + c] = 0.1 + rng.uniform();
            sum += y_mix[n * K + c];
        }
        for (int c = 0; c < K; ++c) y_mix[n * K + c] /= sum;
    }
    TeachingWeights coeff(N, L);
    coeff.at(0, 0) = 0.4;
    coeff.at(0, 1) = 0.9;
    coeff.at(1, 0) = 0.2;
    coeff.at(1, 1) = 1.0;

    Tensor grad(N, L, K, 1);
    smoothmix_value_grad(logits, y_mix, 0.7, coeff, grad);

    auto value_of = [&](const Tensor& lg) {
        const TeachingWeights terms = smoothmix_terms(lg, y_mix, 0.7);
        double s = 0.0;
        for (int n = 0; n < N; ++n)
            for (int k = 0; k < L; ++k) s += coeff.at(n, k) * terms.at(n, k);
        return s;
    };
    const double eps = 1e-6;
    for (std::size_t j = 0; j < logits.v.size(); j += 2) {
        Tensor plus = logits, minus = logits;
        plus.v[j] += eps;
        minus.v[j] -= eps;
        const double fd = (value_of(plus) - value_of(minus)) / (2 * eps);
        CHECK(grad.v[j] == doctest::Approx(fd).epsilon(1e-4));
    }
}
