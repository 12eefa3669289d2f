#pragma once

#include "nct/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

namespace nct {

enum class Activation { Relu, Identity };

struct DenseLayer {
    Matrix weight;  // out x in
    Vector bias;    // out
    Activation activation = Activation::Identity;

    bool operator==(const DenseLayer& other) const;
};

struct SgdOptions {
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 5e-4;  // L2 on weights, never on biases
};

struct ParameterGrads {
    std::vector<Matrix> weight;
    std::vector<Vector> bias;
};

/// Activations recorded by a forward pass; tied to the parameter version that
/// produced them.
struct ForwardCache {
    std::vector<Matrix> inputs;       // input to each layer
    std::vector<Matrix> preactivations;
    std::uint64_t version = 0;
    std::uint64_t owner = 0;
};

/// Immutable parameter copy. Cheap to copy and safe to share across threads.
class MlpSnapshot {
public:
    MlpSnapshot() = default;
    explicit MlpSnapshot(std::vector<DenseLayer> layers);

    Matrix forward(const Matrix& inputs) const;
    const std::vector<DenseLayer>& layers() const;
    bool empty() const noexcept { return !layers_; }

    friend bool operator==(const MlpSnapshot& a, const MlpSnapshot& b);

private:
    std::shared_ptr<const std::vector<DenseLayer>> layers_;
};

/// Dense network: ReLU on hidden layers, identity on the output layer.
/// Batches are matrices with one sample per column.
class Mlp {
public:
    explicit Mlp(std::vector<DenseLayer> layers);

    /// dims = {input, hidden..., output}; weights and biases uniform in
    /// [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    static Mlp random(const std::vector<Eigen::Index>& dims, std::uint64_t seed);

    Eigen::Index input_dim() const;
    Eigen::Index output_dim() const;
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::size_t parameter_count() const;

    bool frozen() const noexcept { return frozen_; }
    void set_frozen(bool frozen) noexcept { frozen_ = frozen; }
    std::uint64_t version() const noexcept { return version_; }

    Matrix forward(const Matrix& inputs) const;
    Matrix forward(const Matrix& inputs, ForwardCache& cache) const;

    /// Accumulates parameter gradients into `grads` (resized on first use) and
    /// returns the gradient with respect to the inputs. Works on frozen nets so
    /// gradients can pass through to upstream modules.
    Matrix backward(const ForwardCache& cache, const Matrix& grad_outputs,
                    ParameterGrads& grads) const;

    /// SGD with momentum: v = momentum * v + g + wd * W; W -= lr * v.
    /// No-op when frozen.
    void step(const ParameterGrads& grads, const SgdOptions& options);

    Matrix backward_and_step(const ForwardCache& cache, const Matrix& grad_outputs,
                             const SgdOptions& options);

    MlpSnapshot snapshot() const;
    /// Restores parameters and clears momentum buffers.
    void restore(const MlpSnapshot& snapshot);

    /// Mutable parameter access for gradient checks; bumps the version.
    DenseLayer& mutable_layer(std::size_t index);

private:
    void check_cache(const ForwardCache& cache) const;
    void reset_velocity();

    std::vector<DenseLayer> layers_;
    std::vector<Matrix> weight_velocity_;
    std::vector<Vector> bias_velocity_;
    bool frozen_ = false;
    std::uint64_t version_ = 1;
    std::uint64_t id_ = 0;
};

/// lr_min + 0.5 (lr_0 - lr_min)(1 + cos(pi e / E)).
double cosine_annealed_lr(double base_lr, double min_lr, int epoch, int total_epochs);

/// Versioned text checkpoint; parameters use 17 significant digits so a
/// write/read cycle is bitwise exact.
void write_mlp(std::ostream& out, const Mlp& net);
Mlp read_mlp(std::istream& in);

}  // namespace nct
