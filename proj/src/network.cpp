#include "spacte/network.hpp"

#include <cmath>
#include <stdexcept>

namespace spacte {

MultiHeadNetwork::MultiHeadNetwork(const ArchitectureSpec& spec)
    : spec_(spec), input_norm_(spec.input_mean, spec.input_std) {
    spec_.validate();
    InputShape shape = spec_.input;
    std::vector<LayerDesc> backbone_descs(spec_.layers.begin(),
                                          spec_.layers.begin() + spec_.split_index);
    std::vector<LayerDesc> head_descs(spec_.layers.begin() + spec_.split_index,
                                      spec_.layers.end());
    backbone_ = build_chain(backbone_descs, shape);
    for (int k = 0; k < spec_.num_heads; ++k) {
        InputShape head_shape = shape;
        heads_.push_back(build_chain(head_descs, head_shape));
    }
}

void MultiHeadNetwork::init(std::uint64_t seed) {
    Rng backbone_rng(sub_seed(seed, seed_tag::kInit, 0));
    for (auto& layer : backbone_) layer->init(backbone_rng);
    for (int k = 0; k < spec_.num_heads; ++k) {
        Rng head_rng(sub_seed(seed, seed_tag::kHead, static_cast<std::uint64_t>(k)));
        for (auto& layer : heads_[k]) layer->init(head_rng);
    }
}

Tensor MultiHeadNetwork::forward_all_heads(const Tensor& batch, Mode mode,
                                           ForwardCache* cache) {
    check_shape(batch, spec_.input.channels, spec_.input.height, spec_.input.width,
                "forward_all_heads");
    if (cache) {
        cache->raw_input = batch;
        cache->backbone.clear();
        cache->heads.assign(heads_.size(), {});
        cache->mode = mode;
    }
    Tensor x = input_norm_.forward(batch, mode);
    if (cache) cache->backbone.push_back(x);
    for (auto& layer : backbone_) {
        x = layer->forward(x, mode);
        if (cache) cache->backbone.push_back(x);
    }
    const int L = spec_.num_heads;
    const int K = spec_.num_classes;
    Tensor logits(batch.n, L, K, 1);
    for (int k = 0; k < L; ++k) {
        Tensor h = x;
        for (auto& layer : heads_[k]) {
            if (cache) cache->heads[k].push_back(h);
            h = layer->forward(h, mode);
        }
        if (h.per_sample() != K)
            throw std::logic_error("head output dimension mismatch");
        for (int n = 0; n < batch.n; ++n)
            for (int c = 0; c < K; ++c) logits.at(n, k, c, 0) = h.at(n, c, 0, 0);
    }
    for (double v : logits.v)
        if (!std::isfinite(v)) throw std::runtime_error("non-finite logits");
    return logits;
}

Tensor MultiHeadNetwork::backward(const ForwardCache& cache, const Tensor& dlogits) {
    const int L = spec_.num_heads;
    const int K = spec_.num_classes;
    const int N = cache.raw_input.n;
    if (dlogits.n != N || dlogits.c != L || dlogits.h != K)
        throw std::invalid_argument("backward: dlogits shape mismatch");
    const Tensor& backbone_out = cache.backbone.back();
    Tensor grad_backbone(backbone_out.n, backbone_out.c, backbone_out.h, backbone_out.w);
    for (int k = 0; k < L; ++k) {
        Tensor g(N, K, 1, 1);
        for (int n = 0; n < N; ++n)
            for (int c = 0; c < K; ++c) g.at(n, c, 0, 0) = dlogits.at(n, k, c, 0);
        for (int li = static_cast<int>(heads_[k].size()) - 1; li >= 0; --li)
            g = heads_[k][li]->backward(cache.heads[k][li], g, cache.mode);
        for (std::size_t i = 0; i < grad_backbone.v.size(); ++i)
            grad_backbone.v[i] += g.v[i];
    }
    Tensor g = grad_backbone;
    for (int li = static_cast<int>(backbone_.size()) - 1; li >= 0; --li)
        g = backbone_[li]->backward(cache.backbone[li], g, cache.mode);
    return input_norm_.backward(cache.raw_input, g, cache.mode);
}

void MultiHeadNetwork::zero_grad() {
    for (ParamRef& p : params())
        std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

std::vector<ParamRef> MultiHeadNetwork::params() {
    std::vector<ParamRef> out;
    for (auto& layer : backbone_) layer->collect_params(out);
    for (auto& head : heads_)
        for (auto& layer : head) layer->collect_params(out);
    return out;
}

std::vector<ParamRef> MultiHeadNetwork::head_params(int head) {
    if (head < 0 || head >= spec_.num_heads)
        throw std::out_of_range("head index out of range");
    std::vector<ParamRef> out;
    for (auto& layer : heads_[head]) layer->collect_params(out);
    return out;
}

std::vector<std::vector<double>*> MultiHeadNetwork::norm_state() {
    std::vector<std::vector<double>*> out;
    for (auto& layer : backbone_) layer->collect_state(out);
    for (auto& head : heads_)
        for (auto& layer : head) layer->collect_state(out);
    return out;
}

std::vector<double> MultiHeadNetwork::head_param_vector(int head) {
    std::vector<double> flat;
    for (ParamRef& p : head_params(head))
        flat.insert(flat.end(), p.value->begin(), p.value->end());
    return flat;
}

std::size_t MultiHeadNetwork::num_params() {
    std::size_t n = 0;
    for (ParamRef& p : params()) n += p.value->size();
    return n;
}

std::vector<double> MultiHeadNetwork::flatten_params() {
    std::vector<double> flat;
    for (ParamRef& p : params())
        flat.insert(flat.end(), p.value->begin(), p.value->end());
    return flat;
}

void MultiHeadNetwork::load_flat_params(const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (ParamRef& p : params()) {
        if (pos + p.value->size() > flat.size())
            throw std::invalid_argument("parameter payload too short");
        std::copy(flat.begin() + pos, flat.begin() + pos + p.value->size(),
                  p.value->begin());
        pos += p.value->size();
    }
    if (pos != flat.size())
        throw std::invalid_argument("parameter payload size mismatch");
}

std::vector<double> MultiHeadNetwork::flatten_norm_state() {
    std::vector<double> flat;
    for (auto* s : norm_state()) flat.insert(flat.end(), s->begin(), s->end());
    return flat;
}

void MultiHeadNetwork::load_flat_norm_state(const std::vector<double>& flat) {
    std::size_t pos = 0;
    for (auto* s : norm_state()) {
        if (pos + s->size() > flat.size())
            throw std::invalid_argument("norm state payload too short");
        std::copy(flat.begin() + pos, flat.begin() + pos + s->size(), s->begin());
        pos += s->size();
    }
    if (pos != flat.size())
        throw std::invalid_argument("norm state payload size mismatch");
}

MultiHeadNetwork build_network(const ArchitectureSpec& spec, std::uint64_t seed) {
    MultiHeadNetwork net(spec);
    net.init(seed);
    return net;
}

std::vector<double> ensemble_logits(const std::vector<std::vector<double>>& head_logits) {
    if (head_logits.empty())
        throw std::invalid_argument("ensemble_logits: empty head axis");
    const std::size_t K = head_logits.front().size();
    std::vector<double> out(K, 0.0);
    for (const auto& row : head_logits) {
        if (row.size() != K)
            throw std::invalid_argument("ensemble_logits: ragged head logits");
        for (std::size_t c = 0; c < K; ++c) out[c] += row[c];
    }
    for (double& v : out) v /= static_cast<double>(head_logits.size());
    return out;
}

Tensor ensemble_logits_batch(const Tensor& all) {
    const int L = all.c, K = all.h;
    Tensor out(all.n, K, 1, 1);
    for (int n = 0; n < all.n; ++n)
        for (int c = 0; c < K; ++c) {
            double acc = 0.0;
            for (int k = 0; k < L; ++k) acc += all.at(n, k, c, 0);
            out.at(n, c, 0, 0) = acc / L;
        }
    return out;
}

}  // namespace spacte
