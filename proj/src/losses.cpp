#include "spacte/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace spacte {

namespace {

double softplus(double z) {
    // log(1 + e^z) without overflow.
    if (z > 0.0) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

double safe_log(double p) { return std::log(std::max(p, 1e-300)); }

// dL/dz from dL/dp through softmax: dz = p * (g - <g, p>).
void softmax_chain(const std::vector<double>& p, const std::vector<double>& g,
                   std::vector<double>& dz) {
    double dot = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) dot += g[c] * p[c];
    dz.resize(p.size());
    for (std::size_t c = 0; c < p.size(); ++c) dz[c] = p[c] * (g[c] - dot);
}

}  // namespace

double log_sum_exp(std::span<const double> logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double s = 0.0;
    for (double v : logits) s += std::exp(v - mx);
    return mx + std::log(s);
}

std::vector<double> softmax(std::span<const double> logits) {
    const double lse = log_sum_exp(logits);
    std::vector<double> p(logits.size());
    for (std::size_t c = 0; c < logits.size(); ++c) p[c] = std::exp(logits[c] - lse);
    return p;
}

double cross_entropy(std::span<const double> logits, int label) {
    if (label < 0 || label >= static_cast<int>(logits.size()))
        throw std::invalid_argument("cross_entropy: label out of range");
    for (double v : logits)
        if (!std::isfinite(v)) throw std::domain_error("cross_entropy: non-finite logits");
    return log_sum_exp(logits) - logits[label];
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, int label) {
    std::vector<double> g = softmax(logits);
    g[label] -= 1.0;
    return g;
}

double cosine_diversity_loss(const std::vector<std::vector<double>>& hv, bool normalized) {
    const int L = static_cast<int>(hv.size());
    if (L < 2) throw std::invalid_argument("cosine_diversity_loss: need at least 2 heads");
    std::vector<double> norms(L);
    for (int i = 0; i < L; ++i) {
        double s = 0.0;
        for (double x : hv[i]) s += x * x;
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0)
            throw std::domain_error("cosine_diversity_loss: zero-norm head vector at index " +
                                    std::to_string(i));
    }
    double loss = 0.0;
    for (int i = 0; i < L; ++i)
        for (int j = i + 1; j < L; ++j) {
            double dot = 0.0;
            for (std::size_t t = 0; t < hv[i].size(); ++t) dot += hv[i][t] * hv[j][t];
            double denom = norms[i] * norms[j];
            if (normalized) denom *= denom;
            loss += 2.0 * dot * dot / denom;  // both ordered pairs
        }
    return loss;
}

std::vector<std::vector<double>> cosine_diversity_grad(
    const std::vector<std::vector<double>>& hv, bool normalized) {
    const int L = static_cast<int>(hv.size());
    if (L < 2) throw std::invalid_argument("cosine_diversity_grad: need at least 2 heads");
    std::vector<double> norms(L);
    for (int i = 0; i < L; ++i) {
        double s = 0.0;
        for (double x : hv[i]) s += x * x;
        norms[i] = std::sqrt(s);
        if (norms[i] == 0.0)
            throw std::domain_error("cosine_diversity_grad: zero-norm head vector at index " +
                                    std::to_string(i));
    }
    std::vector<std::vector<double>> grad(L);
    for (int i = 0; i < L; ++i) grad[i].assign(hv[i].size(), 0.0);
    for (int i = 0; i < L; ++i)
        for (int j = i + 1; j < L; ++j) {
            double dot = 0.0;
            for (std::size_t t = 0; t < hv[i].size(); ++t) dot += hv[i][t] * hv[j][t];
            const double ni = norms[i], nj = norms[j];
            if (!normalized) {
                // term (x2 for ordered pairs) = 2 dot^2 / (ni nj)
                const double a = 4.0 * dot / (ni * nj);
                const double bi = 2.0 * dot * dot / (ni * ni * ni * nj);
                const double bj = 2.0 * dot * dot / (nj * nj * nj * ni);
                for (std::size_t t = 0; t < hv[i].size(); ++t) {
                    grad[i][t] += a * hv[j][t] - bi * hv[i][t];
                    grad[j][t] += a * hv[i][t] - bj * hv[j][t];
                }
            } else {
                const double d2 = ni * ni * nj * nj;
                const double a = 4.0 * dot / d2;
                const double bi = 4.0 * dot * dot / (d2 * ni * ni);
                const double bj = 4.0 * dot * dot / (d2 * nj * nj);
                for (std::size_t t = 0; t < hv[i].size(); ++t) {
                    grad[i][t] += a * hv[j][t] - bi * hv[i][t];
                    grad[j][t] += a * hv[i][t] - bj * hv[j][t];
                }
            }
        }
    return grad;
}

std::vector<double> head_weights(std::span<const double> losses, double eps) {
    const int L = static_cast<int>(losses.size());
    if (L == 0) throw std::invalid_argument("head_weights: empty loss vector");
    for (double v : losses)
        if (!std::isfinite(v)) throw std::domain_error("head_weights: non-finite loss");
    if (L == 1) return {1.0};
    if (eps <= 0.0 || eps >= 1.0)
        throw std::invalid_argument("head_weights: eps must lie in (0,1)");
    int best = 0;
    for (int k = 1; k < L; ++k)
        if (losses[k] < losses[best]) best = k;  // ties keep the lowest index
    std::vector<double> w(L, eps / (L - 1));
    w[best] = 1.0 - eps;
    return w;
}

double smoothed_loss(std::span<const double> per_draw_losses) {
    if (per_draw_losses.empty())
        throw std::invalid_argument("smoothed_loss: need at least one draw");
    double s = 0.0;
    for (double v : per_draw_losses) s += v;
    return s / static_cast<double>(per_draw_losses.size());
}

double spl_weight(double loss, double lambda) {
    if (loss <= lambda) return 1.0;
    return std::exp(softplus(-lambda) - softplus(loss - lambda));
}

TeachingWeights circular_shift(const TeachingWeights& nu) {
    TeachingWeights out(nu.rows, nu.cols);
    for (int n = 0; n < nu.rows; ++n)
        for (int k = 0; k < nu.cols; ++k)
            out.at(n, k) = nu.at(n, (k + nu.cols - 1) % nu.cols);
    return out;
}

double spacte_objective(const std::vector<Tensor>& per_draw_logits,
                        std::span<const int> labels,
                        const TeachingWeights& nu_shifted,
                        std::span<const double> omega,
                        const std::vector<std::vector<double>>& head_vectors,
                        bool normalized_cosine) {
    if (per_draw_logits.empty()) throw std::invalid_argument("spacte_objective: no draws");
    const int m = static_cast<int>(per_draw_logits.size());
    const int N = per_draw_logits[0].n;
    const int L = per_draw_logits[0].c;
    const int K = per_draw_logits[0].h;
    if (static_cast<int>(labels.size()) != N || nu_shifted.rows != N ||
        nu_shifted.cols != L || static_cast<int>(omega.size()) != L)
        throw std::invalid_argument("spacte_objective: shape mismatch");
    double acc = 0.0;
    std::vector<double> row(K);
    for (int i = 0; i < m; ++i) {
        const Tensor& logits = per_draw_logits[i];
        for (int n = 0; n < N; ++n)
            for (int k = 0; k < L; ++k) {
                for (int c = 0; c < K; ++c) row[c] = logits.at(n, k, c, 0);
                acc += omega[k] * nu_shifted.at(n, k) * cross_entropy(row, labels[n]);
            }
    }
    double value = acc / (static_cast<double>(m) * N * L);
    if (head_vectors.size() >= 2)
        value += cosine_diversity_loss(head_vectors, normalized_cosine);
    return value;
}

TeachingWeights consistency_terms(const std::vector<Tensor>& per_draw_logits,
                                  double c1, double c2) {
    if (per_draw_logits.size() < 2)
        throw std::invalid_argument("consistency_terms: need m >= 2 draws");
    const int m = static_cast<int>(per_draw_logits.size());
    const int N = per_draw_logits[0].n;
    const int L = per_draw_logits[0].c;
    const int K = per_draw_logits[0].h;
    TeachingWeights out(N, L);
    std::vector<double> row(K);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < L; ++k) {
            std::vector<std::vector<double>> p(m);
            std::vector<double> p_hat(K, 0.0);
            for (int i = 0; i < m; ++i) {
                for (int c = 0; c < K; ++c) row[c] = per_draw_logits[i].at(n, k, c, 0);
                p[i] = softmax(row);
                for (int c = 0; c < K; ++c) p_hat[c] += p[i][c] / m;
            }
            double kl = 0.0;
            for (int i = 0; i < m; ++i)
                for (int c = 0; c < K; ++c)
                    if (p[i][c] > 0.0)
                        kl += p[i][c] * (safe_log(p[i][c]) - safe_log(p_hat[c]));
            double entropy = 0.0;
            for (int c = 0; c < K; ++c)
                if (p_hat[c] > 0.0) entropy -= p_hat[c] * safe_log(p_hat[c]);
            out.at(n, k) = c1 * kl / m + c2 * entropy;
        }
    return out;
}

double consistency_value_grad(const std::vector<Tensor>& per_draw_logits,
                              double c1, double c2, const TeachingWeights& coeff,
                              std::vector<Tensor>& dlogits) {
    if (per_draw_logits.size() < 2)
        throw std::invalid_argument("consistency_value_grad: need m >= 2 draws");
    const int m = static_cast<int>(per_draw_logits.size());
    const int N = per_draw_logits[0].n;
    const int L = per_draw_logits[0].c;
    const int K = per_draw_logits[0].h;
    double value = 0.0;
    std::vector<double> row(K), g(K), dz(K);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < L; ++k) {
            const double w = coeff.at(n, k);
            std::vector<std::vector<double>> p(m);
            std::vector<double> p_hat(K, 0.0);
            for (int i = 0; i < m; ++i) {
                for (int c = 0; c < K; ++c) row[c] = per_draw_logits[i].at(n, k, c, 0);
                p[i] = softmax(row);
                for (int c = 0; c < K; ++c) p_hat[c] += p[i][c] / m;
            }
            double kl = 0.0, entropy = 0.0;
            for (int i = 0; i < m; ++i)
                for (int c = 0; c < K; ++c)
                    if (p[i][c] > 0.0)
                        kl += p[i][c] * (safe_log(p[i][c]) - safe_log(p_hat[c]));
            for (int c = 0; c < K; ++c)
                if (p_hat[c] > 0.0) entropy -= p_hat[c] * safe_log(p_hat[c]);
            value += w * (c1 * kl / m + c2 * entropy);
            // dL/dp_ic = (c1/m)(log p_ic - log p_hat_c) - (c2/m)(log p_hat_c + 1)
            // (the indirect p_hat terms of the KL cancel exactly).
            for (int i = 0; i < m; ++i) {
                for (int c = 0; c < K; ++c)
                    g[c] = w * ((c1 / m) * (safe_log(p[i][c]) - safe_log(p_hat[c])) -
                                (c2 / m) * (safe_log(p_hat[c]) + 1.0));
                softmax_chain(p[i], g, dz);
                for (int c = 0; c < K; ++c) dlogits[i].at(n, k, c, 0) += dz[c];
            }
        }
    return value;
}

SmoothMixData smoothmix_prepare(MultiHeadNetwork& net, const Tensor& batch,
                                std::span<const int> labels, const VariantConfig& cfg,
                                double sigma, int m, Rng& rng) {
    const int N = batch.n;
    const int L = net.num_heads();
    const int K = net.num_classes();
    SmoothMixData out;
    out.c4 = rng.uniform(0.0, 0.5);

    // One set of m draws, reused for the soft targets and every attack step.
    std::vector<Tensor> noise(m, Tensor(batch.n, batch.c, batch.h, batch.w));
    for (int i = 0; i < m; ++i)
        for (double& v : noise[i].v) v = rng.gaussian(sigma);

    // Soft targets: softmax of the noise-averaged ensemble logits on x.
    std::vector<double> ens_mean(static_cast<std::size_t>(N) * K, 0.0);
    for (int i = 0; i < m; ++i) {
        Tensor noisy = batch;
        for (std::size_t t = 0; t < noisy.v.size(); ++t) noisy.v[t] += noise[i].v[t];
        Tensor logits = net.forward_all_heads(noisy, Mode::Eval);
        Tensor ens = ensemble_logits_batch(logits);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < K; ++c)
                ens_mean[static_cast<std::size_t>(n) * K + c] += ens.at(n, c, 0, 0) / m;
    }
    std::vector<double> f_tilde(static_cast<std::size_t>(N) * K);
    for (int n = 0; n < N; ++n) {
        std::vector<double> p = softmax(
            std::span<const double>(ens_mean.data() + static_cast<std::size_t>(n) * K, K));
        for (int c = 0; c < K; ++c) f_tilde[static_cast<std::size_t>(n) * K + c] = p[c];
    }

    // T steps of per-sample L2-normalized ascent on the smoothed CE of the
    // ensemble. The PGD details are an interpretation of the cited attack.
    Tensor x_adv = batch;
    std::vector<double> row(K);
    for (int step = 0; step < cfg.attack_steps; ++step) {
        Tensor grad(batch.n, batch.c, batch.h, batch.w);
        for (int i = 0; i < m; ++i) {
            Tensor noisy = x_adv;
            for (std::size_t t = 0; t < noisy.v.size(); ++t) noisy.v[t] += noise[i].v[t];
            ForwardCache cache;
            Tensor logits = net.forward_all_heads(noisy, Mode::Eval, &cache);
            Tensor ens = ensemble_logits_batch(logits);
            Tensor dlogits(N, L, K, 1);
            for (int n = 0; n < N; ++n) {
                for (int c = 0; c < K; ++c) row[c] = ens.at(n, c, 0, 0);
                std::vector<double> g = cross_entropy_grad(row, labels[n]);
                for (int k = 0; k < L; ++k)
                    for (int c = 0; c < K; ++c)
                        dlogits.at(n, k, c, 0) = g[c] / (static_cast<double>(L) * m);
            }
            net.zero_grad();  // attack gradients must not leak into training
            Tensor din = net.backward(cache, dlogits);
            for (std::size_t t = 0; t < grad.v.size(); ++t) grad.v[t] += din.v[t];
        }
        net.zero_grad();
        const int per = batch.per_sample();
        for (int n = 0; n < N; ++n) {
            double* g = grad.sample(n);
            double norm = 0.0;
            for (int t = 0; t < per; ++t) norm += g[t] * g[t];
            norm = std::sqrt(norm);
            if (norm == 0.0) continue;
            double* x = x_adv.sample(n);
            for (int t = 0; t < per; ++t) x[t] += cfg.attack_step_size * g[t] / norm;
        }
    }

    out.x_mix = batch;
    for (std::size_t t = 0; t < out.x_mix.v.size(); ++t)
        out.x_mix.v[t] = (1.0 - out.c4) * batch.v[t] + out.c4 * x_adv.v[t];
    out.y_mix.resize(static_cast<std::size_t>(N) * K);
    for (std::size_t t = 0; t < out.y_mix.size(); ++t)
        out.y_mix[t] = (1.0 - out.c4) * f_tilde[t] + out.c4 / K;
    return out;
}

TeachingWeights smoothmix_terms(const Tensor& mix_logits,
                                const std::vector<double>& y_mix, double c3) {
    const int N = mix_logits.n, L = mix_logits.c, K = mix_logits.h;
    TeachingWeights out(N, L);
    std::vector<double> row(K);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < L; ++k) {
            for (int c = 0; c < K; ++c) row[c] = mix_logits.at(n, k, c, 0);
            std::vector<double> p = softmax(row);
            double kl = 0.0;
            for (int c = 0; c < K; ++c)
                if (p[c] > 0.0)
                    kl += p[c] * (safe_log(p[c]) -
                                  safe_log(y_mix[static_cast<std::size_t>(n) * K + c]));
            out.at(n, k) = c3 * kl;
        }
    return out;
}

double smoothmix_value_grad(const Tensor& mix_logits, const std::vector<double>& y_mix,
                            double c3, const TeachingWeights& coeff, Tensor& dlogits) {
    const int N = mix_logits.n, L = mix_logits.c, K = mix_logits.h;
    double value = 0.0;
    std::vector<double> row(K), g(K), dz(K);
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < L; ++k) {
            const double w = coeff.at(n, k);
            for (int c = 0; c < K; ++c) row[c] = mix_logits.at(n, k, c, 0);
            std::vector<double> p = softmax(row);
            double kl = 0.0;
            for (int c = 0; c < K; ++c) {
                const double q = y_mix[static_cast<std::size_t>(n) * K + c];
                if (p[c] > 0.0) kl += p[c] * (safe_log(p[c]) - safe_log(q));
                g[c] = w * c3 * (safe_log(p[c]) - safe_log(q) + 1.0);
            }
            value += w * c3 * kl;
            softmax_chain(p, g, dz);
            for (int c = 0; c < K; ++c) dlogits.at(n, k, c, 0) += dz[c];
        }
    return value;
}

}  // namespace spacte
