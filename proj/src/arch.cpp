#include "spacte/arch.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace spacte {

namespace {

struct Shape {
    int c, h, w;
};

struct LayerCost {
    std::int64_t params = 0;
    double flops = 0.0;
};

// Cost of one conv layer and the shape it produces. "Same" padding for odd
// kernels, as in the CIFAR residual networks.
LayerCost conv_cost(Shape& s, int out_c, int kernel, int stride, bool bias) {
    const int oh = (s.h + stride - 1) / stride;
    const int ow = (s.w + stride - 1) / stride;
    LayerCost cost;
    cost.params = static_cast<std::int64_t>(kernel) * kernel * s.c * out_c +
                  (bias ? out_c : 0);
    cost.flops = 2.0 * kernel * kernel * s.c * out_c * oh * ow +
                 (bias ? static_cast<double>(out_c) * oh * ow : 0.0);
    s = {out_c, oh, ow};
    return cost;
}

LayerCost bn_cost(const Shape& s) {
    LayerCost cost;
    cost.params = 2LL * s.c;  // scale and shift; running stats are not trainable
    cost.flops = 2.0 * s.c * s.h * s.w;
    return cost;
}

// One basic residual block: conv-bn-relu-conv-bn (+ projection shortcut when
// the shape changes) then add and relu.
LayerCost block_cost(Shape& s, int out_c, int stride) {
    const Shape in = s;
    LayerCost total;
    auto add = [&](LayerCost c) {
        total.params += c.params;
        total.flops += c.flops;
    };
    add(conv_cost(s, out_c, 3, stride, false));
    add(bn_cost(s));
    total.flops += static_cast<double>(s.c) * s.h * s.w;  // relu
    add(conv_cost(s, out_c, 3, 1, false));
    add(bn_cost(s));
    if (stride != 1 || in.c != out_c) {
        Shape sc = in;
        add(conv_cost(sc, out_c, 1, stride, false));
        add(bn_cost(sc));
    }
    total.flops += static_cast<double>(s.c) * s.h * s.w;  // residual add
    total.flops += static_cast<double>(s.c) * s.h * s.w;  // relu
    return total;
}

LayerCost layer_cost(Shape& s, const LayerDesc& d) {
    switch (d.kind) {
        case LayerKind::Conv:
            return conv_cost(s, d.out_channels, d.kernel, d.stride, d.bias);
        case LayerKind::BatchNorm:
            return bn_cost(s);
        case LayerKind::ReLU: {
            LayerCost c;
            c.flops = static_cast<double>(s.c) * s.h * s.w;
            return c;
        }
        case LayerKind::ResidualGroup: {
            LayerCost total;
            for (int b = 0; b < d.blocks; ++b) {
                LayerCost c = block_cost(s, d.out_channels, b == 0 ? d.stride : 1);
                total.params += c.params;
                total.flops += c.flops;
            }
            return total;
        }
        case LayerKind::GlobalAvgPool: {
            LayerCost c;
            c.flops = static_cast<double>(s.c) * s.h * s.w + s.c;
            s = {s.c, 1, 1};
            return c;
        }
        case LayerKind::Linear: {
            const int in = s.c * s.h * s.w;
            LayerCost c;
            c.params = static_cast<std::int64_t>(in) * d.out_features + d.out_features;
            c.flops = 2.0 * in * d.out_features + d.out_features;
            s = {d.out_features, 1, 1};
            return c;
        }
    }
    throw std::logic_error("unreachable layer kind");
}

struct SplitCost {
    std::int64_t params_backbone = 0, params_head = 0;
    double flops_backbone = 0.0, flops_head = 0.0;
};

SplitCost accumulate(const ArchitectureSpec& spec) {
    Shape s{spec.input.channels, spec.input.height, spec.input.width};
    SplitCost out;
    for (int i = 0; i < static_cast<int>(spec.layers.size()); ++i) {
        LayerCost c = layer_cost(s, spec.layers[i]);
        if (i < spec.split_index) {
            out.params_backbone += c.params;
            out.flops_backbone += c.flops;
        } else {
            out.params_head += c.params;
            out.flops_head += c.flops;
        }
    }
    return out;
}

}  // namespace

void ArchitectureSpec::validate() const {
    if (num_heads < 1) throw std::invalid_argument("num_heads must be positive");
    if (num_classes < 1) throw std::invalid_argument("num_classes must be positive");
    if (input.channels < 1 || input.height < 1 || input.width < 1)
        throw std::invalid_argument("input shape must be positive");
    if (layers.empty()) throw std::invalid_argument("layer list is empty");
    if (split_index < 0 || split_index > static_cast<int>(layers.size()))
        throw std::invalid_argument("split_index out of range");
    if (layers.back().kind != LayerKind::Linear ||
        layers.back().out_features != num_classes)
        throw std::invalid_argument("last layer must be Linear with num_classes outputs");
    if (!input_mean.empty() && static_cast<int>(input_mean.size()) != input.channels)
        throw std::invalid_argument("input_mean size must match channel count");
    if (!input_std.empty() && static_cast<int>(input_std.size()) != input.channels)
        throw std::invalid_argument("input_std size must match channel count");
    for (double s : input_std)
        if (s <= 0.0) throw std::invalid_argument("input_std entries must be positive");
    for (const LayerDesc& d : layers) {
        if (d.kind == LayerKind::Conv && (d.out_channels < 1 || d.kernel < 1 || d.stride < 1))
            throw std::invalid_argument("invalid conv descriptor");
        if (d.kind == LayerKind::ResidualGroup && (d.blocks < 1 || d.out_channels < 1))
            throw std::invalid_argument("invalid residual group descriptor");
        if (d.kind == LayerKind::Linear && d.out_features < 1)
            throw std::invalid_argument("invalid linear descriptor");
    }
}

CostReport count_params(const ArchitectureSpec& spec) {
    return estimate_flops(spec);
}

CostReport estimate_flops(const ArchitectureSpec& spec) {
    spec.validate();
    const SplitCost c = accumulate(spec);
    CostReport r;
    r.params_backbone = c.params_backbone;
    r.params_per_head = c.params_head;
    r.params_total_single = c.params_backbone + c.params_head;
    r.params_total_multihead = c.params_backbone + spec.num_heads * c.params_head;
    r.params_total_k_dnns = spec.num_heads * r.params_total_single;
    r.flops_single = c.flops_backbone + c.flops_head;
    r.flops_multihead = c.flops_backbone + spec.num_heads * c.flops_head;
    return r;
}

std::string CostReport::to_text() const {
    char buf[512];
    std::ostringstream os;
    auto line = [&](const char* label, std::int64_t value) {
        std::snprintf(buf, sizeof(buf), "  %-28s %14lld\n", label,
                      static_cast<long long>(value));
        os << buf;
    };
    os << "parameters\n";
    line("backbone", params_backbone);
    line("per head", params_per_head);
    line("total (multi-head)", params_total_multihead);
    line("total (single network)", params_total_single);
    line("total (L independent nets)", params_total_k_dnns);
    os << "flops per forward pass\n";
    std::snprintf(buf, sizeof(buf), "  %-28s %14.0f\n", "single network", flops_single);
    os << buf;
    std::snprintf(buf, sizeof(buf), "  %-28s %14.0f\n", "multi-head", flops_multihead);
    os << buf;
    std::snprintf(buf, sizeof(buf), "  %-28s %14.3f\n", "multi-head / single",
                  flops_multihead / flops_single);
    os << buf;
    os << "convention: " << convention << "\n";
    return os.str();
}

std::string CostReport::to_key_value() const {
    std::ostringstream os;
    os << "params_backbone=" << params_backbone << "\n"
       << "params_per_head=" << params_per_head << "\n"
       << "params_total_multihead=" << params_total_multihead << "\n"
       << "params_total_single=" << params_total_single << "\n"
       << "params_total_k_dnns=" << params_total_k_dnns << "\n"
       << "flops_single=" << static_cast<std::int64_t>(flops_single) << "\n"
       << "flops_multihead=" << static_cast<std::int64_t>(flops_multihead) << "\n";
    return os.str();
}

ArchitectureSpec resnet110_cifar_spec(int num_heads, bool split_after_group2) {
    ArchitectureSpec spec;
    spec.name = "resnet110";
    spec.input = {3, 32, 32};
    spec.num_classes = 10;
    spec.num_heads = num_heads;
    spec.layers = {
        conv_desc(16, 3, 1, false), bn_desc(), relu_desc(),
        group_desc(18, 16, 1),
        group_desc(18, 32, 2),
        group_desc(18, 64, 2),
        gap_desc(),
        linear_desc(10),
    };
    spec.split_index = split_after_group2 ? 5 : 0;
    return spec;
}

ArchitectureSpec conv_small_spec(InputShape input, int num_classes, int num_heads,
                                 int split_index) {
    ArchitectureSpec spec;
    spec.name = "conv-small";
    spec.input = input;
    spec.num_classes = num_classes;
    spec.num_heads = num_heads;
    spec.layers = {
        conv_desc(8, 3, 1, false), bn_desc(), relu_desc(),
        group_desc(1, 8, 1),
        group_desc(1, 16, 2),
        group_desc(1, 32, 2),
        gap_desc(),
        linear_desc(num_classes),
    };
    // Default split after the second residual group, mirroring the big spec.
    spec.split_index = split_index >= 0 ? split_index : 5;
    return spec;
}

ArchitectureSpec mlp_spec(int input_dim, int num_classes, int num_heads,
                          const std::vector<int>& hidden_widths, int split_index) {
    ArchitectureSpec spec;
    spec.name = "mlp";
    spec.input = {input_dim, 1, 1};
    spec.num_classes = num_classes;
    spec.num_heads = num_heads;
    for (int w : hidden_widths) {
        spec.layers.push_back(linear_desc(w));
        spec.layers.push_back(relu_desc());
    }
    spec.layers.push_back(linear_desc(num_classes));
    spec.split_index = split_index;
    return spec;
}

}  // namespace spacte
