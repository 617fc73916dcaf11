#include "spacte/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace spacte {

// ---------------------------------------------------------------- InputNorm

InputNorm::InputNorm(std::vector<double> mean, std::vector<double> std_dev)
    : mean_(std::move(mean)), std_(std::move(std_dev)) {}

Tensor InputNorm::forward(const Tensor& in, Mode) {
    Tensor out = in;
    if (mean_.empty() && std_.empty()) return out;
    const int plane = in.plane();
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < in.c; ++c) {
            const double m = mean_.empty() ? 0.0 : mean_[c];
            const double s = std_.empty() ? 1.0 : std_[c];
            double* p = out.sample(n) + static_cast<std::size_t>(c) * plane;
            for (int i = 0; i < plane; ++i) p[i] = (p[i] - m) / s;
        }
    return out;
}

Tensor InputNorm::backward(const Tensor& in, const Tensor& grad_out, Mode) {
    Tensor din = grad_out;
    if (std_.empty()) return din;
    const int plane = in.plane();
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < in.c; ++c) {
            double* p = din.sample(n) + static_cast<std::size_t>(c) * plane;
            for (int i = 0; i < plane; ++i) p[i] /= std_[c];
        }
    return din;
}

// ------------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, bool bias)
    : in_c_(in_channels), out_c_(out_channels), k_(kernel), stride_(stride),
      pad_(kernel / 2), has_bias_(bias),
      weight_(static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel),
      bias_(bias ? out_channels : 0),
      weight_grad_(weight_.size()), bias_grad_(bias_.size()) {}

void Conv2d::init(Rng& rng) {
    const double scale = std::sqrt(2.0 / (static_cast<double>(in_c_) * k_ * k_));
    for (double& w : weight_) w = scale * rng.gaussian();
    for (double& b : bias_) b = 0.0;
}

Tensor Conv2d::forward(const Tensor& in, Mode) {
    if (in.c != in_c_) throw std::invalid_argument("Conv2d: channel mismatch");
    const int oh = (in.h + 2 * pad_ - k_) / stride_ + 1;
    const int ow = (in.w + 2 * pad_ - k_) / stride_ + 1;
    Tensor out(in.n, out_c_, oh, ow);
    for (int n = 0; n < in.n; ++n)
        for (int oc = 0; oc < out_c_; ++oc)
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x) {
                    double acc = has_bias_ ? bias_[oc] : 0.0;
                    for (int ic = 0; ic < in_c_; ++ic)
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = y * stride_ + ky - pad_;
                            if (iy < 0 || iy >= in.h) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ix = x * stride_ + kx - pad_;
                                if (ix < 0 || ix >= in.w) continue;
                                acc += weight_[((static_cast<std::size_t>(oc) * in_c_ + ic) * k_ + ky) * k_ + kx] *
                                       in.at(n, ic, iy, ix);
                            }
                        }
                    out.at(n, oc, y, x) = acc;
                }
    return out;
}

Tensor Conv2d::backward(const Tensor& in, const Tensor& grad_out, Mode) {
    Tensor din(in.n, in.c, in.h, in.w);
    for (int n = 0; n < in.n; ++n)
        for (int oc = 0; oc < out_c_; ++oc)
            for (int y = 0; y < grad_out.h; ++y)
                for (int x = 0; x < grad_out.w; ++x) {
                    const double g = grad_out.at(n, oc, y, x);
                    if (has_bias_) bias_grad_[oc] += g;
                    for (int ic = 0; ic < in_c_; ++ic)
                        for (int ky = 0; ky < k_; ++ky) {
                            const int iy = y * stride_ + ky - pad_;
                            if (iy < 0 || iy >= in.h) continue;
                            for (int kx = 0; kx < k_; ++kx) {
                                const int ix = x * stride_ + kx - pad_;
                                if (ix < 0 || ix >= in.w) continue;
                                const std::size_t wi =
                                    ((static_cast<std::size_t>(oc) * in_c_ + ic) * k_ + ky) * k_ + kx;
                                weight_grad_[wi] += g * in.at(n, ic, iy, ix);
                                din.at(n, ic, iy, ix) += g * weight_[wi];
                            }
                        }
                }
    return din;
}

void Conv2d::collect_params(std::vector<ParamRef>& out) {
    out.push_back({&weight_, &weight_grad_, true});
    if (has_bias_) out.push_back({&bias_, &bias_grad_, true});
}

// -------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, double eps, double momentum)
    : c_(channels), eps_(eps), momentum_(momentum),
      gamma_(channels, 1.0), beta_(channels, 0.0),
      gamma_grad_(channels, 0.0), beta_grad_(channels, 0.0),
      running_mean_(channels, 0.0), running_var_(channels, 1.0) {}

void BatchNorm2d::init(Rng&) {
    std::fill(gamma_.begin(), gamma_.end(), 1.0);
    std::fill(beta_.begin(), beta_.end(), 0.0);
    std::fill(running_mean_.begin(), running_mean_.end(), 0.0);
    std::fill(running_var_.begin(), running_var_.end(), 1.0);
}

void BatchNorm2d::batch_stats(const Tensor& in, std::vector<double>& mean,
                              std::vector<double>& var) const {
    const int plane = in.plane();
    const double count = static_cast<double>(in.n) * plane;
    mean.assign(c_, 0.0);
    var.assign(c_, 0.0);
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < c_; ++c) {
            const double* p = in.sample(n) + static_cast<std::size_t>(c) * plane;
            for (int i = 0; i < plane; ++i) mean[c] += p[i];
        }
    for (int c = 0; c < c_; ++c) mean[c] /= count;
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < c_; ++c) {
            const double* p = in.sample(n) + static_cast<std::size_t>(c) * plane;
            for (int i = 0; i < plane; ++i) {
                const double d = p[i] - mean[c];
                var[c] += d * d;
            }
        }
    for (int c = 0; c < c_; ++c) var[c] /= count;
}

Tensor BatchNorm2d::forward(const Tensor& in, Mode mode) {
    if (in.c != c_) throw std::invalid_argument("BatchNorm2d: channel mismatch");
    std::vector<double> mean, var;
    if (mode == Mode::Eval) {
        mean = running_mean_;
        var = running_var_;
    } else {
        batch_stats(in, mean, var);
        if (mode == Mode::Train)
            for (int c = 0; c < c_; ++c) {
                running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean[c];
                running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * var[c];
            }
    }
    Tensor out(in.n, in.c, in.h, in.w);
    const int plane = in.plane();
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < c_; ++c) {
            const double inv = 1.0 / std::sqrt(var[c] + eps_);
            const double* p = in.sample(n) + static_cast<std::size_t>(c) * plane;
            double* q = out.sample(n) + static_cast<std::size_t>(c) * plane;
            for (int i = 0; i < plane; ++i)
                q[i] = gamma_[c] * (p[i] - mean[c]) * inv + beta_[c];
        }
    return out;
}

Tensor BatchNorm2d::backward(const Tensor& in, const Tensor& grad_out, Mode mode) {
    const int plane = in.plane();
    Tensor din(in.n, in.c, in.h, in.w);
    if (mode == Mode::Eval) {
        for (int n = 0; n < in.n; ++n)
            for (int c = 0; c < c_; ++c) {
                const double inv = 1.0 / std::sqrt(running_var_[c] + eps_);
                const double* p = in.sample(n) + static_cast<std::size_t>(c) * plane;
                const double* g = grad_out.sample(n) + static_cast<std::size_t>(c) * plane;
                double* d = din.sample(n) + static_cast<std::size_t>(c) * plane;
                for (int i = 0; i < plane; ++i) {
                    const double xhat = (p[i] - running_mean_[c]) * inv;
                    gamma_grad_[c] += g[i] * xhat;
                    beta_grad_[c] += g[i];
                    d[i] = gamma_[c] * inv * g[i];
                }
            }
        return din;
    }
    std::vector<double> mean, var;
    batch_stats(in, mean, var);
    const double count = static_cast<double>(in.n) * plane;
    // Per channel: dx = gamma/sqrt(var+eps) * (g - mean(g) - xhat*mean(g*xhat))
    std::vector<double> sum_g(c_, 0.0), sum_gx(c_, 0.0);
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < c_; ++c) {
            const double inv = 1.0 / std::sqrt(var[c] + eps_);
            const double* p = in.sample(n) + static_cast<std::size_t>(c) * plane;
            const double* g = grad_out.sample(n) + static_cast<std::size_t>(c) * plane;
            for (int i = 0; i < plane; ++i) {
                const double xhat = (p[i] - mean[c]) * inv;
                sum_g[c] += g[i];
                sum_gx[c] += g[i] * xhat;
            }
        }
    for (int c = 0; c < c_; ++c) {
        gamma_grad_[c] += sum_gx[c];
        beta_grad_[c] += sum_g[c];
    }
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < c_; ++c) {
            const double inv = 1.0 / std::sqrt(var[c] + eps_);
            const double* p = in.sample(n) + static_cast<std::size_t>(c) * plane;
            const double* g = grad_out.sample(n) + static_cast<std::size_t>(c) * plane;
            double* d = din.sample(n) + static_cast<std::size_t>(c) * plane;
            for (int i = 0; i < plane; ++i) {
                const double xhat = (p[i] - mean[c]) * inv;
                d[i] = gamma_[c] * inv *
                       (g[i] - sum_g[c] / count - xhat * sum_gx[c] / count);
            }
        }
    return din;
}

void BatchNorm2d::collect_params(std::vector<ParamRef>& out) {
    out.push_back({&gamma_, &gamma_grad_, false});
    out.push_back({&beta_, &beta_grad_, false});
}

void BatchNorm2d::collect_state(std::vector<std::vector<double>*>& out) {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
}

// --------------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& in, Mode) {
    Tensor out = in;
    for (double& x : out.v) x = x > 0.0 ? x : 0.0;
    return out;
}

Tensor ReLU::backward(const Tensor& in, const Tensor& grad_out, Mode) {
    Tensor din = grad_out;
    for (std::size_t i = 0; i < in.v.size(); ++i)
        if (in.v[i] <= 0.0) din.v[i] = 0.0;
    return din;
}

// ----------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& in, Mode) {
    Tensor out(in.n, in.c, 1, 1);
    const int plane = in.plane();
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < in.c; ++c) {
            const double* p = in.sample(n) + static_cast<std::size_t>(c) * plane;
            double acc = 0.0;
            for (int i = 0; i < plane; ++i) acc += p[i];
            out.at(n, c, 0, 0) = acc / plane;
        }
    return out;
}

Tensor GlobalAvgPool::backward(const Tensor& in, const Tensor& grad_out, Mode) {
    Tensor din(in.n, in.c, in.h, in.w);
    const int plane = in.plane();
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < in.c; ++c) {
            const double g = grad_out.at(n, c, 0, 0) / plane;
            double* d = din.sample(n) + static_cast<std::size_t>(c) * plane;
            for (int i = 0; i < plane; ++i) d[i] = g;
        }
    return din;
}

// ------------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features)
    : in_f_(in_features), out_f_(out_features),
      weight_(static_cast<std::size_t>(out_features) * in_features),
      bias_(out_features), weight_grad_(weight_.size()), bias_grad_(bias_.size()) {}

void Linear::init(Rng& rng) {
    const double scale = std::sqrt(2.0 / in_f_);
    for (double& w : weight_) w = scale * rng.gaussian();
    for (double& b : bias_) b = 0.0;
}

Tensor Linear::forward(const Tensor& in, Mode) {
    if (in.per_sample() != in_f_) throw std::invalid_argument("Linear: feature mismatch");
    Tensor out(in.n, out_f_, 1, 1);
    for (int n = 0; n < in.n; ++n) {
        const double* x = in.sample(n);
        for (int o = 0; o < out_f_; ++o) {
            const double* w = weight_.data() + static_cast<std::size_t>(o) * in_f_;
            double acc = bias_[o];
            for (int i = 0; i < in_f_; ++i) acc += w[i] * x[i];
            out.at(n, o, 0, 0) = acc;
        }
    }
    return out;
}

Tensor Linear::backward(const Tensor& in, const Tensor& grad_out, Mode) {
    Tensor din(in.n, in.c, in.h, in.w);
    for (int n = 0; n < in.n; ++n) {
        const double* x = in.sample(n);
        double* d = din.sample(n);
        for (int o = 0; o < out_f_; ++o) {
            const double g = grad_out.at(n, o, 0, 0);
            bias_grad_[o] += g;
            double* wg = weight_grad_.data() + static_cast<std::size_t>(o) * in_f_;
            const double* w = weight_.data() + static_cast<std::size_t>(o) * in_f_;
            for (int i = 0; i < in_f_; ++i) {
                wg[i] += g * x[i];
                d[i] += g * w[i];
            }
        }
    }
    return din;
}

void Linear::collect_params(std::vector<ParamRef>& out) {
    out.push_back({&weight_, &weight_grad_, true});
    out.push_back({&bias_, &bias_grad_, true});
}

// --------------------------------------------------------------- BasicBlock

BasicBlock::BasicBlock(int in_channels, int out_channels, int stride)
    : conv1_(in_channels, out_channels, 3, stride, false), bn1_(out_channels),
      conv2_(out_channels, out_channels, 3, 1, false), bn2_(out_channels) {
    if (stride != 1 || in_channels != out_channels) {
        proj_conv_ = std::make_unique<Conv2d>(in_channels, out_channels, 1, stride, false);
        proj_bn_ = std::make_unique<BatchNorm2d>(out_channels);
    }
}

void BasicBlock::init(Rng& rng) {
    conv1_.init(rng);
    bn1_.init(rng);
    conv2_.init(rng);
    bn2_.init(rng);
    if (proj_conv_) {
        proj_conv_->init(rng);
        proj_bn_->init(rng);
    }
}

Tensor BasicBlock::forward(const Tensor& in, Mode mode) {
    Tensor a = conv1_.forward(in, mode);
    Tensor b = bn1_.forward(a, mode);
    ReLU relu;
    Tensor c = relu.forward(b, mode);
    Tensor d = conv2_.forward(c, mode);
    Tensor e = bn2_.forward(d, mode);
    Tensor shortcut = in;
    if (proj_conv_) {
        Tensor p = proj_conv_->forward(in, mode);
        shortcut = proj_bn_->forward(p, mode);
    }
    for (std::size_t i = 0; i < e.v.size(); ++i) e.v[i] += shortcut.v[i];
    return relu.forward(e, mode);
}

Tensor BasicBlock::backward(const Tensor& in, const Tensor& grad_out, Mode mode) {
    const Mode replay = mode == Mode::Eval ? Mode::Eval : Mode::Replay;
    // Replay the forward pass to recover intermediate activations.
    Tensor a = conv1_.forward(in, replay);
    Tensor b = bn1_.forward(a, replay);
    ReLU relu;
    Tensor c = relu.forward(b, replay);
    Tensor d = conv2_.forward(c, replay);
    Tensor e = bn2_.forward(d, replay);
    Tensor shortcut = in;
    Tensor proj_pre;
    if (proj_conv_) {
        proj_pre = proj_conv_->forward(in, replay);
        shortcut = proj_bn_->forward(proj_pre, replay);
    }
    Tensor sum = e;
    for (std::size_t i = 0; i < sum.v.size(); ++i) sum.v[i] += shortcut.v[i];

    Tensor g = relu.backward(sum, grad_out, replay);
    // Residual add fans the gradient into both branches.
    Tensor g_main = bn2_.backward(d, g, replay);
    g_main = conv2_.backward(c, g_main, replay);
    g_main = relu.backward(b, g_main, replay);
    g_main = bn1_.backward(a, g_main, replay);
    Tensor din = conv1_.backward(in, g_main, replay);
    if (proj_conv_) {
        Tensor g_proj = proj_bn_->backward(proj_pre, g, replay);
        g_proj = proj_conv_->backward(in, g_proj, replay);
        for (std::size_t i = 0; i < din.v.size(); ++i) din.v[i] += g_proj.v[i];
    } else {
        for (std::size_t i = 0; i < din.v.size(); ++i) din.v[i] += g.v[i];
    }
    return din;
}

void BasicBlock::collect_params(std::vector<ParamRef>& out) {
    conv1_.collect_params(out);
    bn1_.collect_params(out);
    conv2_.collect_params(out);
    bn2_.collect_params(out);
    if (proj_conv_) {
        proj_conv_->collect_params(out);
        proj_bn_->collect_params(out);
    }
}

void BasicBlock::collect_state(std::vector<std::vector<double>*>& out) {
    bn1_.collect_state(out);
    bn2_.collect_state(out);
    if (proj_bn_) proj_bn_->collect_state(out);
}

// -------------------------------------------------------------- build_chain

std::vector<std::unique_ptr<Layer>> build_chain(
    const std::vector<LayerDesc>& descs, InputShape& shape) {
    std::vector<std::unique_ptr<Layer>> chain;
    for (const LayerDesc& d : descs) {
        switch (d.kind) {
            case LayerKind::Conv:
                chain.push_back(std::make_unique<Conv2d>(shape.channels, d.out_channels,
                                                         d.kernel, d.stride, d.bias));
                shape.channels = d.out_channels;
                shape.height = (shape.height + d.stride - 1) / d.stride;
                shape.width = (shape.width + d.stride - 1) / d.stride;
                break;
            case LayerKind::BatchNorm:
                chain.push_back(std::make_unique<BatchNorm2d>(shape.channels));
                break;
            case LayerKind::ReLU:
                chain.push_back(std::make_unique<ReLU>());
                break;
            case LayerKind::ResidualGroup:
                for (int b = 0; b < d.blocks; ++b) {
                    const int stride = b == 0 ? d.stride : 1;
                    chain.push_back(std::make_unique<BasicBlock>(
                        shape.channels, d.out_channels, stride));
                    shape.channels = d.out_channels;
                    shape.height = (shape.height + stride - 1) / stride;
                    shape.width = (shape.width + stride - 1) / stride;
                }
                break;
            case LayerKind::GlobalAvgPool:
                chain.push_back(std::make_unique<GlobalAvgPool>());
                shape.height = shape.width = 1;
                break;
            case LayerKind::Linear:
                chain.push_back(std::make_unique<Linear>(
                    shape.channels * shape.height * shape.width, d.out_features));
                shape = {d.out_features, 1, 1};
                break;
        }
    }
    return chain;
}

}  // namespace spacte
