#include "nct/mlp.hpp"

#include "nct/error.hpp"
#include "nct/text_format.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

namespace nct {

namespace {

std::uint64_t next_instance_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

Matrix apply_layer(const DenseLayer& layer, const Matrix& x, Matrix* pre_out) {
    Matrix pre = layer.weight * x;
    pre.colwise() += layer.bias;
    if (pre_out) *pre_out = pre;
    if (layer.activation == Activation::Relu) return pre.cwiseMax(0.0);
    return pre;
}

Matrix run_layers(const std::vector<DenseLayer>& layers, const Matrix& inputs) {
    if (layers.empty() || inputs.rows() != layers.front().weight.cols()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                        std::to_string(layers.empty() ? 0 : layers.front().weight.cols()));
    }
    Matrix x = inputs;
    for (const auto& layer : layers) x = apply_layer(layer, x, nullptr);
    return x;
}

}  // namespace

// Bitwise comparison, so identical NaN payloads compare equal.
bool DenseLayer::operator==(const DenseLayer& other) const {
    auto same = [](const auto& a, const auto& b) {
        return a.size() == 0 ||
               std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
    };
    return activation == other.activation && weight.rows() == other.weight.rows() &&
           weight.cols() == other.weight.cols() && bias.size() == other.bias.size() &&
           same(weight, other.weight) && same(bias, other.bias);
}

MlpSnapshot::MlpSnapshot(std::vector<DenseLayer> layers)
    : layers_(std::make_shared<const std::vector<DenseLayer>>(std::move(layers))) {}

Matrix MlpSnapshot::forward(const Matrix& inputs) const { return run_layers(layers(), inputs); }

const std::vector<DenseLayer>& MlpSnapshot::layers() const {
    static const std::vector<DenseLayer> none;
    return layers_ ? *layers_ : none;
}

bool operator==(const MlpSnapshot& a, const MlpSnapshot& b) { return a.layers() == b.layers(); }

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)), id_(next_instance_id()) {
    if (layers_.empty()) throw Error(ErrorCode::ShapeMismatch, "network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (l.bias.size() != l.weight.rows() ||
            (i > 0 && l.weight.cols() != layers_[i - 1].weight.rows())) {
            throw Error(ErrorCode::ShapeMismatch, "layer " + std::to_string(i) + " shape mismatch");
        }
    }
    reset_velocity();
}

Mlp Mlp::random(const std::vector<Eigen::Index>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw Error(ErrorCode::ShapeMismatch, "need input and output dims");
    Rng rng(seed);
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(dims[i]));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        DenseLayer layer;
        layer.weight.resize(dims[i + 1], dims[i]);
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = uniform(rng);
        layer.bias.resize(dims[i + 1]);
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = uniform(rng);
        layer.activation = i + 2 < dims.size() ? Activation::Relu : Activation::Identity;
        layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
}

Eigen::Index Mlp::input_dim() const { return layers_.front().weight.cols(); }
Eigen::Index Mlp::output_dim() const { return layers_.back().weight.rows(); }

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
}

Matrix Mlp::forward(const Matrix& inputs) const { return run_layers(layers_, inputs); }

Matrix Mlp::forward(const Matrix& inputs, ForwardCache& cache) const {
    if (inputs.rows() != input_dim()) {
        throw Error(ErrorCode::ShapeMismatch, "input has " + std::to_string(inputs.rows()) +
                                                  " rows, network expects " +
                                                  std::to_string(input_dim()));
    }
    cache.inputs.clear();
    cache.preactivations.clear();
    cache.version = version_;
    cache.owner = id_;
    Matrix x = inputs;
    for (const auto& layer : layers_) {
        cache.inputs.push_back(x);
        Matrix pre;
        x = apply_layer(layer, x, &pre);
        cache.preactivations.push_back(std::move(pre));
    }
    return x;
}

void Mlp::check_cache(const ForwardCache& cache) const {
    if (cache.owner != id_ || cache.version != version_ || cache.inputs.size() != layers_.size()) {
        throw Error(ErrorCode::StaleCache, "forward cache does not match current parameters");
    }
}

Matrix Mlp::backward(const ForwardCache& cache, const Matrix& grad_outputs,
                     ParameterGrads& grads) const {
    check_cache(cache);
    const Eigen::Index batch = cache.inputs.front().cols();
    if (grad_outputs.rows() != output_dim() || grad_outputs.cols() != batch) {
        throw Error(ErrorCode::ShapeMismatch, "output gradient shape mismatch");
    }
    if (grads.weight.size() != layers_.size()) {
        grads.weight.clear();
        grads.bias.clear();
        for (const auto& l : layers_) {
            grads.weight.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
            grads.bias.push_back(Vector::Zero(l.bias.size()));
        }
    }
    Matrix delta = grad_outputs;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const auto& layer = layers_[i];
        if (layer.activation == Activation::Relu) {
            delta = delta.cwiseProduct(
                (cache.preactivations[i].array() > 0.0).cast<double>().matrix());
        }
        grads.weight[i].noalias() += delta * cache.inputs[i].transpose();
        grads.bias[i] += delta.rowwise().sum();
        delta = layer.weight.transpose() * delta;
    }
    return delta;
}

void Mlp::step(const ParameterGrads& grads, const SgdOptions& options) {
    if (frozen_) return;
    if (grads.weight.size() != layers_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "gradient layer count mismatch");
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto& layer = layers_[i];
        weight_velocity_[i] = options.momentum * weight_velocity_[i] + grads.weight[i] +
                              options.weight_decay * layer.weight;
        bias_velocity_[i] = options.momentum * bias_velocity_[i] + grads.bias[i];
        layer.weight -= options.learning_rate * weight_velocity_[i];
        layer.bias -= options.learning_rate * bias_velocity_[i];
    }
    ++version_;
}

Matrix Mlp::backward_and_step(const ForwardCache& cache, const Matrix& grad_outputs,
                              const SgdOptions& options) {
    ParameterGrads grads;
    Matrix grad_inputs = backward(cache, grad_outputs, grads);
    step(grads, options);
    return grad_inputs;
}

MlpSnapshot Mlp::snapshot() const { return MlpSnapshot(layers_); }

void Mlp::restore(const MlpSnapshot& snapshot) {
    const auto& layers = snapshot.layers();
    if (layers.size() != layers_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "snapshot layer count mismatch");
    }
    layers_ = layers;
    reset_velocity();
    ++version_;
}

DenseLayer& Mlp::mutable_layer(std::size_t index) {
    ++version_;
    return layers_.at(index);
}

void Mlp::reset_velocity() {
    weight_velocity_.clear();
    bias_velocity_.clear();
    for (const auto& l : layers_) {
        weight_velocity_.push_back(Matrix::Zero(l.weight.rows(), l.weight.cols()));
        bias_velocity_.push_back(Vector::Zero(l.bias.size()));
    }
}

double cosine_annealed_lr(double base_lr, double min_lr, int epoch, int total_epochs) {
    if (total_epochs <= 0) return base_lr;
    const double phase = std::numbers::pi * static_cast<double>(epoch) / total_epochs;
    return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(phase));
}

void write_mlp(std::ostream& out, const Mlp& net) {
    out << "nct-mlp 1\n" << net.layers().size() << ' ' << (net.frozen() ? 1 : 0) << '\n';
    for (const auto& layer : net.layers()) {
        out << layer.weight.rows() << ' ' << layer.weight.cols() << ' '
            << (layer.activation == Activation::Relu ? "relu" : "identity") << '\n';
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
                if (c) out << ' ';
                out << format_double(layer.weight(r, c));
            }
            out << '\n';
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
            if (r) out << ' ';
            out << format_double(layer.bias(r));
        }
        out << '\n';
    }
}

Mlp read_mlp(std::istream& in) {
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    int frozen = 0;
    if (!(in >> magic >> version) || magic != "nct-mlp" || version != 1) {
        throw Error(ErrorCode::ParseError, "not an nct-mlp v1 checkpoint");
    }
    if (!(in >> count >> frozen) || count == 0) throw Error(ErrorCode::ParseError, "bad layer count");
    auto next = [&in]() {
        std::string token;
        if (!(in >> token)) throw Error(ErrorCode::ParseError, "truncated checkpoint");
        return parse_double(token);
    };
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i < count; ++i) {
        Eigen::Index rows = 0, cols = 0;
        std::string act;
        if (!(in >> rows >> cols >> act) || rows <= 0 || cols <= 0) {
            throw Error(ErrorCode::ParseError, "bad layer header");
        }
        DenseLayer layer;
        layer.activation = act == "relu" ? Activation::Relu : Activation::Identity;
        layer.weight.resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = next();
        layer.bias.resize(rows);
        for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = next();
        layers.push_back(std::move(layer));
    }
    Mlp net(std::move(layers));
    net.set_frozen(frozen != 0);
    return net;
}

}  // namespace nct
