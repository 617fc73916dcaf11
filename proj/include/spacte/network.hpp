#ifndef SPACTE_NETWORK_HPP
#define SPACTE_NETWORK_HPP

#include <cstdint>
#include <memory>
#include <vector>

#include "spacte/arch.hpp"
#include "spacte/layers.hpp"
#include "spacte/tensor.hpp"

namespace spacte {

// Activations captured during forward_all_heads, consumed by backward.
struct ForwardCache {
    Tensor raw_input;
    std::vector<Tensor> backbone;             // [0] = normalized input, then per layer
    std::vector<std::vector<Tensor>> heads;   // per head, inputs to each head layer
    Mode mode = Mode::Train;
};

// Shared backbone g plus L heads h^1..h^L. Parameters are mutated only by
// the trainer; Eval-mode forward passes are side-effect free and may run
// concurrently on disjoint batches.
class MultiHeadNetwork {
  public:
    explicit MultiHeadNetwork(const ArchitectureSpec& spec);

    const ArchitectureSpec& spec() const { return spec_; }
    int num_heads() const { return spec_.num_heads; }
    int num_classes() const { return spec_.num_classes; }

    // Deterministic init: backbone and each head draw from independent
    // sub-seeds so heads differ at step 0.
    void init(std::uint64_t seed);

    // Logits for every head: result tensor has shape (batch, L, K, 1).
    Tensor forward_all_heads(const Tensor& batch, Mode mode,
                             ForwardCache* cache = nullptr);

    // Accumulates parameter gradients from dlogits (batch, L, K, 1) and
    // returns the gradient with respect to the raw input batch.
    Tensor backward(const ForwardCache& cache, const Tensor& dlogits);

    void zero_grad();
    std::vector<ParamRef> params();                  // backbone first, then heads
    std::vector<ParamRef> head_params(int head);     // head k only, 0-based
    std::vector<std::vector<double>*> norm_state();  // batch-norm running stats

    // Flattened trainable parameters of head k (0-based), layer order,
    // weight before bias. Excludes running statistics.
    std::vector<double> head_param_vector(int head);
    std::size_t num_params();

    std::vector<double> flatten_params();
    void load_flat_params(const std::vector<double>& flat);
    std::vector<double> flatten_norm_state();
    void load_flat_norm_state(const std::vector<double>& flat);

  private:
    ArchitectureSpec spec_;
    InputNorm input_norm_;
    std::vector<std::unique_ptr<Layer>> backbone_;
    std::vector<std::vector<std::unique_ptr<Layer>>> heads_;
};

MultiHeadNetwork build_network(const ArchitectureSpec& spec, std::uint64_t seed);

// Arithmetic mean over the head axis. head_logits is (L, K) row-major.
std::vector<double> ensemble_logits(const std::vector<std::vector<double>>& head_logits);

// Mean over the head axis of a (batch, L, K, 1) logits tensor -> (batch, K, 1, 1).
Tensor ensemble_logits_batch(const Tensor& all_head_logits);

}  // namespace spacte

#endif  // SPACTE_NETWORK_HPP
