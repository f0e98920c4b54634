#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace bodyfit {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Aligned storage keeps Eigen's vectorized summation order independent of
// heap addresses, so reruns are bit-identical.
using TensorData = std::vector<double, Eigen::aligned_allocator<double>>;

/// Row-major buffer with up to four dimensions. Dimension 0 is the batch
/// for all layer inputs and outputs.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, double fill = 0.0);
    Tensor(std::vector<int> shape, const std::vector<double>& data);

    static Tensor fromMatrix(const RowMatrix& m);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }
    std::vector<double> values() const { return {data_.begin(), data_.end()}; }

    // View as (dim 0) x (product of the remaining dims).
    Eigen::Map<RowMatrix> matrix();
    Eigen::Map<const RowMatrix> matrix() const;

    void reshape(std::vector<int> shape);

private:
    std::vector<int> shape_;
    TensorData data_;
};

enum class LayerKind { Dense, Conv3x3, MaxPool2, Relu, Dropout, Residual };

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int units = 0;        // dense outputs or conv output channels
    double rate = 0.0;    // dropout probability
    int from = -1;        // residual source: output of layer `from`, -1 = graph input
};

struct Parameter {
    std::string name;
    std::vector<int> shape;
    Eigen::VectorXd value;
    Eigen::VectorXd grad;
};

/// Sequential network of dense, conv2d 3x3 (same padding), maxpool 2x2,
/// relu, dropout and residual-add layers with reverse-mode gradients.
/// Shapes exclude the batch dimension and are checked as layers are added.
class LayerGraph {
public:
    LayerGraph() = default;
    LayerGraph(std::vector<int> inputShape, uint64_t seed);

    int addDense(int units);
    int addConv3x3(int channels);
    int addMaxPool2();
    int addRelu();
    int addDropout(double rate);
    // Adds the output of layer `from` (or the graph input for -1) to the
    // current activation. Shapes must agree.
    int addResidual(int from);

    // Runs the graph and keeps what backward() needs. Dropout draws its mask
    // from (seed, step, layer, element) in train mode and is the identity
    // otherwise.
    Tensor forward(const Tensor& input, bool train);
    // Eval-mode forward without caching; safe to call concurrently.
    Tensor predict(const Tensor& input) const;
    // Accumulates parameter gradients and returns the input gradient.
    // Requires a preceding forward().
    Tensor backward(const Tensor& upstream);
    void zeroGrad();

    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    size_t numParameters() const;

    const std::vector<int>& inputShape() const { return inputShape_; }
    const std::vector<int>& outputShape() const { return shapes_.back(); }
    const std::vector<LayerSpec>& layers() const { return layers_; }
    uint64_t seed() const { return seed_; }
    // Optimizer step counter; also selects the dropout masks.
    uint64_t step() const { return step_; }
    void setStep(uint64_t step) { step_ = step; }

    nlohmann::json manifest() const;
    // Directory with manifest.json and one little-endian float64 .bin per parameter.
    void save(const std::string& directory) const;
    static LayerGraph load(const std::string& directory);

private:
    struct Cache {
        std::vector<Tensor> activations;  // [0] = input, [i + 1] = output of layer i
        std::vector<std::vector<int>> argmax;
        std::vector<std::vector<double>> masks;
        std::vector<std::vector<RowMatrix>> columns;
        bool valid = false;
    };

    int push(const LayerSpec& spec, std::vector<int> outShape);
    void initParameters(int layer, int fanIn, const std::vector<int>& weightShape, int biasSize);
    Tensor run(const Tensor& input, bool train, Cache* cache) const;
    void checkInput(const Tensor& input) const;

    std::vector<int> inputShape_;
    uint64_t seed_ = 0;
    uint64_t step_ = 0;
    std::vector<LayerSpec> layers_;
    std::vector<std::vector<int>> shapes_;  // [0] = input shape, [i + 1] = output of layer i
    std::vector<int> paramIndex_;           // first parameter of each layer, -1 if none
    std::vector<Parameter> params_;
    Cache cache_;
};

struct RmspropConfig {
    double learningRate = 3e-4;
    double decay = 0.99;
    double epsilon = 1e-8;
};

// acc <- decay acc + (1 - decay) g^2; param <- param - lr g / (sqrt(acc) + eps)
void rmspropUpdate(Eigen::VectorXd& param, Eigen::VectorXd& accumulator, const Eigen::VectorXd& grad,
                   const RmspropConfig& cfg);

class Rmsprop {
public:
    explicit Rmsprop(RmspropConfig cfg = {}) : cfg_(cfg) {}

    // Applies one update from the accumulated gradients and advances the
    // graph's step counter.
    void step(LayerGraph& graph);
    const RmspropConfig& config() const { return cfg_; }
    void setLearningRate(double lr) { cfg_.learningRate = lr; }
    const std::vector<Eigen::VectorXd>& accumulators() const { return acc_; }

private:
    RmspropConfig cfg_;
    std::vector<Eigen::VectorXd> acc_;
};

}  // namespace bodyfit
