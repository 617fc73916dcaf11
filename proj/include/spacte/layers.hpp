#ifndef SPACTE_LAYERS_HPP
#define SPACTE_LAYERS_HPP

#include <memory>
#include <vector>

#include "spacte/arch.hpp"
#include "spacte/rng.hpp"
#include "spacte/tensor.hpp"

namespace spacte {

// Train: batch statistics, running stats updated.
// Replay: batch statistics, running stats untouched (used when a composite
//         layer re-runs its forward pass inside backward).
// Eval: frozen running statistics; forward is then free of side effects.
enum class Mode { Train, Replay, Eval };

// Reference to one trainable parameter vector. `decay` marks parameters
// subject to weight decay (normalization scale/shift are exempt).
struct ParamRef {
    std::vector<double>* value;
    std::vector<double>* grad;
    bool decay;
};

class Layer {
  public:
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& in, Mode mode) = 0;

    // Accumulates parameter gradients (+=) and returns the gradient w.r.t.
    // the layer input. `mode` selects which statistics the forward pass used.
    virtual Tensor backward(const Tensor& in, const Tensor& grad_out, Mode mode) = 0;

    // Weight-before-bias, in layer order.
    virtual void collect_params(std::vector<ParamRef>& out) {}

    // Non-trainable state (batch-norm running statistics).
    virtual void collect_state(std::vector<std::vector<double>*>& out) {}

    virtual void init(Rng& rng) {}
};

// Frozen per-channel (x - mean) / std. The noise convention keeps inputs in
// [0,1]; normalization lives inside the network.
class InputNorm final : public Layer {
  public:
    InputNorm(std::vector<double> mean, std::vector<double> std_dev);
    Tensor forward(const Tensor& in, Mode mode) override;
    Tensor backward(const Tensor& in, const Tensor& grad_out, Mode mode) override;

  private:
    std::vector<double> mean_, std_;
};

class Conv2d final : public Layer {
  public:
    Conv2d(int in_channels, int out_channels, int kernel, int stride, bool bias);
    Tensor forward(const Tensor& in, Mode mode) override;
    Tensor backward(const Tensor& in, const Tensor& grad_out, Mode mode) override;
    void collect_params(std::vector<ParamRef>& out) override;
    void init(Rng& rng) override;

  private:
    int in_c_, out_c_, k_, stride_, pad_;
    bool has_bias_;
    std::vector<double> weight_, bias_, weight_grad_, bias_grad_;
};

class BatchNorm2d final : public Layer {
  public:
    explicit BatchNorm2d(int channels, double eps = 1e-5, double momentum = 0.1);
    Tensor forward(const Tensor& in, Mode mode) override;
    Tensor backward(const Tensor& in, const Tensor& grad_out, Mode mode) override;
    void collect_params(std::vector<ParamRef>& out) override;
    void collect_state(std::vector<std::vector<double>*>& out) override;
    void init(Rng& rng) override;

  private:
    void batch_stats(const Tensor& in, std::vector<double>& mean,
                     std::vector<double>& var) const;

    int c_;
    double eps_, momentum_;
    std::vector<double> gamma_, beta_, gamma_grad_, beta_grad_;
    std::vector<double> running_mean_, running_var_;
};

class ReLU final : public Layer {
  public:
    Tensor forward(const Tensor& in, Mode mode) override;
    Tensor backward(const Tensor& in, const Tensor& grad_out, Mode mode) override;
};

class GlobalAvgPool final : public Layer {
  public:
    Tensor forward(const Tensor& in, Mode mode) override;
    Tensor backward(const Tensor& in, const Tensor& grad_out, Mode mode) override;
};

// Flattens (c,h,w) and applies Wx + b.
class Linear final : public Layer {
  public:
    Linear(int in_features, int out_features);
    Tensor forward(const Tensor& in, Mode mode) override;
    Tensor backward(const Tensor& in, const Tensor& grad_out, Mode mode) override;
    void collect_params(std::vector<ParamRef>& out) override;
    void init(Rng& rng) override;

  private:
    int in_f_, out_f_;
    std::vector<double> weight_, bias_, weight_grad_, bias_grad_;
};

// conv-bn-relu-conv-bn plus shortcut (1x1 conv + bn projection when the
// shape changes), then add and relu. Backward replays the forward pass to
// recover intermediate activations instead of caching them.
class BasicBlock final : public Layer {
  public:
    BasicBlock(int in_channels, int out_channels, int stride);
    Tensor forward(const Tensor& in, Mode mode) override;
    Tensor backward(const Tensor& in, const Tensor& grad_out, Mode mode) override;
    void collect_params(std::vector<ParamRef>& out) override;
    void collect_state(std::vector<std::vector<double>*>& out) override;
    void init(Rng& rng) override;

  private:
    Conv2d conv1_;
    BatchNorm2d bn1_;
    Conv2d conv2_;
    BatchNorm2d bn2_;
    std::unique_ptr<Conv2d> proj_conv_;
    std::unique_ptr<BatchNorm2d> proj_bn_;
};

// Expands a layer descriptor chain into concrete layers, tracking shapes.
// `shape` is updated in place to the chain's output shape.
std::vector<std::unique_ptr<Layer>> build_chain(
    const std::vector<LayerDesc>& descs, InputShape& shape);

}  // namespace spacte

#endif  // SPACTE_LAYERS_HPP
