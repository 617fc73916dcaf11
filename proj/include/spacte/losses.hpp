#ifndef SPACTE_LOSSES_HPP
#define SPACTE_LOSSES_HPP

#include <span>
#include <vector>

#include "spacte/network.hpp"
#include "spacte/rng.hpp"
#include "spacte/tensor.hpp"

namespace spacte {

enum class VariantKind { Gaussian, Consistency, SmoothMix };

struct VariantConfig {
    VariantKind kind = VariantKind::Gaussian;
    double c1 = 0.0;            // consistency KL coefficient
    double c2 = 0.0;            // consistency entropy coefficient
    double c3 = 0.0;            // smoothmix mixing-loss coefficient
    int attack_steps = 0;       // T
    double attack_step_size = 0.0;
    // c4 is drawn from Uniform[0, 1/2] per batch.
};

// Per-sample-per-head SPL weight matrix nu, N rows, L columns, row-major.
struct TeachingWeights {
    int rows = 0, cols = 0;
    std::vector<double> nu;

    TeachingWeights() = default;
    TeachingWeights(int n, int l) : rows(n), cols(l), nu(static_cast<std::size_t>(n) * l, 1.0) {}
    double& at(int n, int k) { return nu[static_cast<std::size_t>(n) * cols + k]; }
    double at(int n, int k) const { return nu[static_cast<std::size_t>(n) * cols + k]; }
};

// -log softmax(logits)[label], evaluated through log-sum-exp.
double cross_entropy(std::span<const double> logits, int label);

// softmax(logits) - onehot(label), the gradient of cross_entropy w.r.t. logits.
std::vector<double> cross_entropy_grad(std::span<const double> logits, int label);

std::vector<double> softmax(std::span<const double> logits);
double log_sum_exp(std::span<const double> logits);

// Pairwise penalty over ordered pairs: sum_{i != j} <hi,hj>^2 / (|hi| |hj|).
// The denominator is first power, as printed; `normalized` switches to the
// fully scale-free cos^2 form (off by default).
double cosine_diversity_loss(const std::vector<std::vector<double>>& head_vectors,
                             bool normalized = false);

// Analytic gradient of cosine_diversity_loss w.r.t. every head vector.
std::vector<std::vector<double>> cosine_diversity_grad(
    const std::vector<std::vector<double>>& head_vectors, bool normalized = false);

// Head weights: argmin head gets 1-eps, the rest eps/(L-1). Ties break to
// the lowest head index. L=1 returns {1}.
std::vector<double> head_weights(std::span<const double> per_head_losses, double eps);

// Arithmetic mean of the per-draw losses (the smoothed loss of Definition 1).
double smoothed_loss(std::span<const double> per_draw_losses);

// SPL weight: 1 when loss <= lambda, else (1+e^-lambda)/(1+e^(loss-lambda)),
// evaluated in log space to avoid overflow.
double spl_weight(double smoothed_loss_value, double lambda);

// Column k of the result is column k-1 of the input; head 0 receives head
// L-1's column. Pure permutation.
TeachingWeights circular_shift(const TeachingWeights& nu);

// Algorithm-1 line 4 objective value:
//   (1/(mNL)) sum_k w_k sum_n sum_i nu_shifted(n,k) CE(logits[i](n,k,:), y_n)
//   + cosine term on head_vectors (0 when fewer than 2 heads or empty).
// nu and omega are data, not differentiable operands.
double spacte_objective(const std::vector<Tensor>& per_draw_logits,
                        std::span<const int> labels,
                        const TeachingWeights& nu_shifted,
                        std::span<const double> omega,
                        const std::vector<std::vector<double>>& head_vectors,
                        bool normalized_cosine = false);

// Consistency terms (Appendix-style KL + entropy regularizer), value per
// head and sample: c1 * mean_i KL(p_i || p_hat) + c2 * H(p_hat) with p_hat
// the mean of the per-draw softmax outputs. Requires m >= 2 draws.
// Returns an N x L matrix (TeachingWeights reused as a plain matrix).
TeachingWeights consistency_terms(const std::vector<Tensor>& per_draw_logits,
                                  double c1, double c2);

// Weighted consistency loss with gradient accumulation into dlogits (same
// shapes as per_draw_logits). coeff(n,k) multiplies the (n,k) term; the
// returned value is sum_{n,k} coeff(n,k) * term(n,k).
double consistency_value_grad(const std::vector<Tensor>& per_draw_logits,
                              double c1, double c2, const TeachingWeights& coeff,
                              std::vector<Tensor>& dlogits);

// SmoothMix preparation: T-step L2 ascent on the smoothed cross-entropy of
// the ensemble (m draws sampled once from rng and reused per step), then
// mix-up with c4 ~ Uniform[0, 1/2].
struct SmoothMixData {
    Tensor x_mix;               // (N, C, H, W)
    std::vector<double> y_mix;  // N x K, row-major soft targets
    double c4 = 0.0;
};

SmoothMixData smoothmix_prepare(MultiHeadNetwork& net, const Tensor& batch,
                                std::span<const int> labels, const VariantConfig& cfg,
                                double sigma, int m, Rng& rng);

// Mixing loss per head and sample on precomputed x_mix logits:
// c3 * KL(softmax f^k(x_mix) || y_mix). Returns the N x L value matrix.
TeachingWeights smoothmix_terms(const Tensor& mix_logits,
                                const std::vector<double>& y_mix, double c3);

// Weighted mixing loss with gradient accumulation into dlogits.
double smoothmix_value_grad(const Tensor& mix_logits, const std::vector<double>& y_mix,
                            double c3, const TeachingWeights& coeff, Tensor& dlogits);

}  // namespace spacte

#endif  // SPACTE_LOSSES_HPP
