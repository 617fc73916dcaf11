#ifndef SPACTE_ARCH_HPP
#define SPACTE_ARCH_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace spacte {

// Declarative layer descriptors. A network is a single linear chain of
// these; residual groups expand into basic blocks at build/count time.
enum class LayerKind {
    Conv,           // kernel x kernel, stride, optional bias
    BatchNorm,      // over current channel count
    ReLU,
    ResidualGroup,  // `blocks` basic blocks, first one may stride/widen
    GlobalAvgPool,
    Linear,         // flattens input, out_features outputs, with bias
};

struct LayerDesc {
    LayerKind kind;
    int out_channels = 0;  // Conv / ResidualGroup
    int kernel = 3;        // Conv
    int stride = 1;        // Conv / ResidualGroup (first block)
    bool bias = false;     // Conv
    int blocks = 0;        // ResidualGroup
    int out_features = 0;  // Linear
};

inline LayerDesc conv_desc(int out_channels, int kernel = 3, int stride = 1,
                           bool bias = false) {
    return {LayerKind::Conv, out_channels, kernel, stride, bias, 0, 0};
}
inline LayerDesc bn_desc() { return {LayerKind::BatchNorm}; }
inline LayerDesc relu_desc() { return {LayerKind::ReLU}; }
inline LayerDesc group_desc(int blocks, int out_channels, int stride) {
    return {LayerKind::ResidualGroup, out_channels, 3, stride, false, blocks, 0};
}
inline LayerDesc gap_desc() { return {LayerKind::GlobalAvgPool}; }
inline LayerDesc linear_desc(int out_features) {
    return {LayerKind::Linear, 0, 0, 1, true, 0, out_features};
}

struct InputShape {
    int channels = 0, height = 0, width = 0;
};

// Architecture with a head split point. Layers [0, split_index) form the
// shared backbone; layers [split_index, end) are replicated per head.
// split_index = 0 degenerates to L independent full networks.
struct ArchitectureSpec {
    std::string name;
    InputShape input;
    std::vector<LayerDesc> layers;
    int split_index = 0;
    int num_heads = 1;
    int num_classes = 0;
    // Frozen per-channel input normalization, applied as the first layer so
    // Gaussian noise is added in [0,1] space.
    std::vector<double> input_mean;  // empty = zeros
    std::vector<double> input_std;   // empty = ones

    void validate() const;  // throws std::invalid_argument on violations
};

struct CostReport {
    std::int64_t params_backbone = 0;
    std::int64_t params_per_head = 0;
    std::int64_t params_total_multihead = 0;
    std::int64_t params_total_single = 0;
    std::int64_t params_total_k_dnns = 0;
    double flops_single = 0.0;
    double flops_multihead = 0.0;
    std::string convention = "multiply-accumulate = 2 FLOPs; batch-norm, "
                             "activations and pooling included";

    std::string to_text() const;       // aligned human-readable table
    std::string to_key_value() const;  // key=value block
};

// Exact trainable-parameter counts from the layer shapes.
CostReport count_params(const ArchitectureSpec& spec);

// Analytic FLOPs per forward pass of one input; fills the flops fields of
// the same report (params fields are filled too for convenience).
CostReport estimate_flops(const ArchitectureSpec& spec);

// Built-in specs.
ArchitectureSpec resnet110_cifar_spec(int num_heads, bool split_after_group2);
ArchitectureSpec conv_small_spec(InputShape input, int num_classes, int num_heads,
                                 int split_index);
ArchitectureSpec mlp_spec(int input_dim, int num_classes, int num_heads,
                          const std::vector<int>& hidden_widths, int split_index);

}  // namespace spacte

#endif  // SPACTE_ARCH_HPP
