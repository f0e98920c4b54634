#include "bodyfit/nnet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>

#include "bodyfit/errors.hpp"
#include "bodyfit/rng.hpp"

namespace bodyfit {

namespace {

size_t product(const std::vector<int>& shape, size_t from = 0) {
    size_t p = 1;
    for (size_t i = from; i < shape.size(); ++i) p *= static_cast<size_t>(shape[i]);
    return p;
}

std::string shapeString(const std::vector<int>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out + ")";
}

std::vector<int> withBatch(int batch, const std::vector<int>& shape) {
    std::vector<int> out{batch};
    out.insert(out.end(), shape.begin(), shape.end());
    return out;
}

const char* kindName(LayerKind k) {
    switch (k) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv3x3: return "conv3x3";
        case LayerKind::MaxPool2: return "maxpool2";
        case LayerKind::Relu: return "relu";
        case LayerKind::Dropout: return "dropout";
        case LayerKind::Residual: return "residual";
    }
    return "?";
}

LayerKind kindFromName(const std::string& s) {
    for (LayerKind k : {LayerKind::Dense, LayerKind::Conv3x3, LayerKind::MaxPool2, LayerKind::Relu, LayerKind::Dropout,
                        LayerKind::Residual})
        if (s == kindName(k)) return k;
    throw IoError("unknown layer type '" + s + "'");
}

// Columns for one sample: (c * 9 + ky * 3 + kx) x (y * w + x), zero padded.
void im2col(const double* image, int channels, int h, int w, RowMatrix& col) {
    col.setZero(channels * 9, h * w);
    for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                double* row = col.data() + static_cast<size_t>(c * 9 + ky * 3 + kx) * h * w;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const double* src = image + (static_cast<size_t>(c) * h + sy) * w;
                    for (int x = 0; x < w; ++x) {
                        const int sx = x + kx - 1;
                        if (sx >= 0 && sx < w) row[y * w + x] = src[sx];
                    }
                }
            }
}

void col2im(const RowMatrix& col, int channels, int h, int w, double* image) {
    for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const double* row = col.data() + static_cast<size_t>(c * 9 + ky * 3 + kx) * h * w;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    double* dst = image + (static_cast<size_t>(c) * h + sy) * w;
                    for (int x = 0; x < w; ++x) {
                        const int sx = x + kx - 1;
                        if (sx >= 0 && sx < w) dst[sx] += row[y * w + x];
                    }
                }
            }
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor::Tensor(std::vector<int> shape, double fill) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 4) throw ValidationError("tensor rank must be 1..4");
    for (int d : shape_)
        if (d < 0) throw ValidationError("tensor dimensions must be nonnegative");
    data_.assign(product(shape_), fill);
}

Tensor::Tensor(std::vector<int> shape, const std::vector<double>& data)
    : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (shape_.empty() || shape_.size() > 4) throw ValidationError("tensor rank must be 1..4");
    if (data_.size() != product(shape_)) throw ValidationError("tensor data length does not match its shape");
}

Tensor Tensor::fromMatrix(const RowMatrix& m) {
    Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
    std::copy(m.data(), m.data() + m.size(), t.data());
    return t;
}

Eigen::Map<RowMatrix> Tensor::matrix() {
    const Eigen::Index rows = shape_.empty() ? 0 : shape_[0];
    return {data_.data(), rows, rows ? static_cast<Eigen::Index>(data_.size()) / rows : 0};
}

Eigen::Map<const RowMatrix> Tensor::matrix() const {
    const Eigen::Index rows = shape_.empty() ? 0 : shape_[0];
    return {data_.data(), rows, rows ? static_cast<Eigen::Index>(data_.size()) / rows : 0};
}

void Tensor::reshape(std::vector<int> shape) {
    if (product(shape) != data_.size()) throw ValidationError("reshape changes the element count");
    shape_ = std::move(shape);
}

// ---------------------------------------------------------------------------

LayerGraph::LayerGraph(std::vector<int> inputShape, uint64_t seed) : inputShape_(std::move(inputShape)), seed_(seed) {
    if (inputShape_.empty() || inputShape_.size() > 3) throw ValidationError("graph input must have 1..3 dimensions");
    for (int d : inputShape_)
        if (d <= 0) throw ValidationError("graph input dimensions must be positive");
    shapes_.push_back(inputShape_);
}

int LayerGraph::push(const LayerSpec& spec, std::vector<int> outShape) {
    layers_.push_back(spec);
    shapes_.push_back(std::move(outShape));
    paramIndex_.push_back(-1);
    cache_.valid = false;
    return static_cast<int>(layers_.size()) - 1;
}

void LayerGraph::initParameters(int layer, int fanIn, const std::vector<int>& weightShape, int biasSize) {
    paramIndex_[layer] = static_cast<int>(params_.size());
    CounterRng rng(seed_, StreamTag::Init, static_cast<uint64_t>(layer));
    const double limit = std::sqrt(6.0 / fanIn);
    Parameter w{"layer" + std::to_string(layer) + ".weight", weightShape, Eigen::VectorXd(product(weightShape)), {}};
    for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value[i] = rng.uniform(-limit, limit);
    w.grad = Eigen::VectorXd::Zero(w.value.size());
    Parameter b{"layer" + std::to_string(layer) + ".bias", {biasSize}, Eigen::VectorXd::Zero(biasSize),
                Eigen::VectorXd::Zero(biasSize)};
    params_.push_back(std::move(w));
    params_.push_back(std::move(b));
}

int LayerGraph::addDense(int units) {
    if (units <= 0) throw ValidationError("dense units must be positive");
    const int in = static_cast<int>(product(shapes_.back()));
    const int idx = push({LayerKind::Dense, units, 0.0, -1}, {units});
    initParameters(idx, in, {units, in}, units);
    return idx;
}

int LayerGraph::addConv3x3(int channels) {
    if (channels <= 0) throw ValidationError("conv channels must be positive");
    const std::vector<int> s = shapes_.back();
    if (s.size() != 3) throw ValidationError("conv3x3 needs a (channels, height, width) input, got " + shapeString(s));
    const int idx = push({LayerKind::Conv3x3, channels, 0.0, -1}, {channels, s[1], s[2]});
    initParameters(idx, s[0] * 9, {channels, s[0], 3, 3}, channels);
    return idx;
}

int LayerGraph::addMaxPool2() {
    const std::vector<int> s = shapes_.back();
    if (s.size() != 3 || s[1] % 2 != 0 || s[2] % 2 != 0 || s[1] < 2 || s[2] < 2)
        throw ValidationError("maxpool2 needs a (channels, even height, even width) input, got " + shapeString(s));
    return push({LayerKind::MaxPool2, 0, 0.0, -1}, {s[0], s[1] / 2, s[2] / 2});
}

int LayerGraph::addRelu() { return push({LayerKind::Relu, 0, 0.0, -1}, shapes_.back()); }

int LayerGraph::addDropout(double rate) {
    if (!(rate >= 0 && rate < 1)) throw ValidationError("dropout rate must be in [0, 1)");
    return push({LayerKind::Dropout, 0, rate, -1}, shapes_.back());
}

int LayerGraph::addResidual(int from) {
    if (from < -1 || from >= static_cast<int>(layers_.size()))
        throw ValidationError("residual source must be an earlier layer");
    if (shapes_[static_cast<size_t>(from + 1)] != shapes_.back())
        throw ValidationError("residual shapes differ: " + shapeString(shapes_[static_cast<size_t>(from + 1)]) + " vs " +
                              shapeString(shapes_.back()));
    return push({LayerKind::Residual, 0, 0.0, from}, shapes_.back());
}

size_t LayerGraph::numParameters() const {
    size_t n = 0;
    for (const auto& p : params_) n += static_cast<size_t>(p.value.size());
    return n;
}

void LayerGraph::checkInput(const Tensor& input) const {
    if (layers_.empty()) throw ValidationError("graph has no layers");
    if (input.rank() != static_cast<int>(inputShape_.size()) + 1 ||
        !std::equal(inputShape_.begin(), inputShape_.end(), input.shape().begin() + 1))
        throw ValidationError("input shape " + shapeString(input.shape()) + " does not match graph input " +
                              shapeString(inputShape_));
}

Tensor LayerGraph::run(const Tensor& input, bool train, Cache* cache) const {
    checkInput(input);
    const int batch = input.dim(0);
    const int n = static_cast<int>(layers_.size());
    std::vector<Tensor> local;
    std::vector<Tensor>& acts = cache ? cache->activations : local;
    acts.assign(static_cast<size_t>(n) + 1, Tensor());
    acts[0] = input;
    if (cache) {
        cache->argmax.assign(n, {});
        cache->masks.assign(n, {});
        cache->columns.assign(n, {});
    }
    for (int i = 0; i < n; ++i) {
        const LayerSpec& L = layers_[i];
        const Tensor& x = acts[i];
        Tensor y(withBatch(batch, shapes_[i + 1]));
        switch (L.kind) {
            case LayerKind::Dense: {
                const Parameter& w = params_[paramIndex_[i]];
                const Parameter& b = params_[paramIndex_[i] + 1];
                const Eigen::Map<const RowMatrix> W(w.value.data(), w.shape[0], w.shape[1]);
                y.matrix().noalias() = x.matrix() * W.transpose();
                y.matrix().rowwise() += b.value.transpose();
                break;
            }
            case LayerKind::Conv3x3: {
                const Parameter& w = params_[paramIndex_[i]];
                const Parameter& b = params_[paramIndex_[i] + 1];
                const int cin = shapes_[i][0], h = shapes_[i][1], wd = shapes_[i][2], cout = L.units;
                const Eigen::Map<const RowMatrix> W(w.value.data(), cout, cin * 9);
                const size_t inStride = static_cast<size_t>(cin) * h * wd, outStride = static_cast<size_t>(cout) * h * wd;
                if (cache) cache->columns[i].resize(batch);
                RowMatrix col;
                for (int s = 0; s < batch; ++s) {
                    RowMatrix& c = cache ? cache->columns[i][s] : col;
                    im2col(x.data() + s * inStride, cin, h, wd, c);
                    Eigen::Map<RowMatrix> out(y.data() + s * outStride, cout, h * wd);
                    out.noalias() = W * c;
                    out.colwise() += b.value;
                }
                break;
            }
            case LayerKind::MaxPool2: {
                const int c = shapes_[i][0], h = shapes_[i][1], wd = shapes_[i][2];
                const int oh = h / 2, ow = wd / 2;
                std::vector<int>* arg = cache ? &cache->argmax[i] : nullptr;
                if (arg) arg->resize(y.size());
                size_t o = 0;
                for (int s = 0; s < batch; ++s)
                    for (int ch = 0; ch < c; ++ch) {
                        const size_t base = (static_cast<size_t>(s) * c + ch) * h * wd;
                        for (int py = 0; py < oh; ++py)
                            for (int px = 0; px < ow; ++px, ++o) {
                                size_t best = base + static_cast<size_t>(2 * py) * wd + 2 * px;
                                for (int dy = 0; dy < 2; ++dy)
                                    for (int dx = 0; dx < 2; ++dx) {
                                        const size_t k = base + static_cast<size_t>(2 * py + dy) * wd + 2 * px + dx;
                                        if (x[k] > x[best]) best = k;
                                    }
                                y[o] = x[best];
                                if (arg) (*arg)[o] = static_cast<int>(best);
                            }
                    }
                break;
            }
            case LayerKind::Relu:
                for (size_t k = 0; k < y.size(); ++k) y[k] = x[k] > 0 ? x[k] : 0.0;
                break;
            case LayerKind::Dropout: {
                if (!train || L.rate == 0.0) {
                    y = x;
                    break;
                }
                CounterRng rng(seed_, StreamTag::Dropout, (static_cast<uint64_t>(i) << 40) | (step_ & 0xFFFFFFFFFFull));
                const double keep = 1.0 - L.rate;
                std::vector<double> mask(y.size());
                for (size_t k = 0; k < y.size(); ++k) {
                    mask[k] = rng.uniform() < L.rate ? 0.0 : 1.0 / keep;
                    y[k] = x[k] * mask[k];
                }
                if (cache) cache->masks[i] = std::move(mask);
                break;
            }
            case LayerKind::Residual: {
                const Tensor& src = acts[static_cast<size_t>(L.from + 1)];
                for (size_t k = 0; k < y.size(); ++k) y[k] = x[k] + src[k];
                break;
            }
        }
        acts[i + 1] = std::move(y);
    }
    if (cache) cache->valid = true;
    return acts.back();
}

Tensor LayerGraph::forward(const Tensor& input, bool train) { return run(input, train, &cache_); }

Tensor LayerGraph::predict(const Tensor& input) const { return run(input, false, nullptr); }

void LayerGraph::zeroGrad() {
    for (auto& p : params_) p.grad.setZero();
}

Tensor LayerGraph::backward(const Tensor& upstream) {
    if (!cache_.valid) throw ValidationError("backward called without a cached forward pass");
    const auto& acts = cache_.activations;
    if (upstream.shape() != acts.back().shape()) throw ValidationError("upstream gradient shape mismatch");
    const int n = static_cast<int>(layers_.size());
    const int batch = acts[0].dim(0);
    std::vector<Tensor> grads(static_cast<size_t>(n) + 1);
    grads[n] = upstream;
    auto accumulate = [&](size_t idx, const Tensor& g) {
        if (grads[idx].empty() && g.size() > 0) {
            grads[idx] = g;
        } else {
            for (size_t k = 0; k < g.size(); ++k) grads[idx][k] += g[k];
        }
    };
    for (int i = n - 1; i >= 0; --i) {
        const LayerSpec& L = layers_[i];
        const Tensor& x = acts[i];
        Tensor& gy = grads[i + 1];
        if (gy.empty()) gy = Tensor(acts[i + 1].shape());
        Tensor gx(x.shape());
        switch (L.kind) {
            case LayerKind::Dense: {
                Parameter& w = params_[paramIndex_[i]];
                Parameter& b = params_[paramIndex_[i] + 1];
                const Eigen::Map<const RowMatrix> W(w.value.data(), w.shape[0], w.shape[1]);
                Eigen::Map<RowMatrix> dW(w.grad.data(), w.shape[0], w.shape[1]);
                dW.noalias() += gy.matrix().transpose() * x.matrix();
                b.grad += gy.matrix().colwise().sum().transpose();
                gx.matrix().noalias() = gy.matrix() * W;
                break;
            }
            case LayerKind::Conv3x3: {
                Parameter& w = params_[paramIndex_[i]];
                Parameter& b = params_[paramIndex_[i] + 1];
                const int cin = shapes_[i][0], h = shapes_[i][1], wd = shapes_[i][2], cout = L.units;
                const Eigen::Map<const RowMatrix> W(w.value.data(), cout, cin * 9);
                Eigen::Map<RowMatrix> dW(w.grad.data(), cout, cin * 9);
                const size_t inStride = static_cast<size_t>(cin) * h * wd, outStride = static_cast<size_t>(cout) * h * wd;
                RowMatrix dcol;
                for (int s = 0; s < batch; ++s) {
                    const Eigen::Map<const RowMatrix> g(gy.data() + s * outStride, cout, h * wd);
                    const RowMatrix& col = cache_.columns[i][s];
                    dW.noalias() += g * col.transpose();
                    b.grad += g.rowwise().sum();
                    dcol.noalias() = W.transpose() * g;
                    col2im(dcol, cin, h, wd, gx.data() + s * inStride);
                }
                break;
            }
            case LayerKind::MaxPool2: {
                const auto& arg = cache_.argmax[i];
                for (size_t o = 0; o < gy.size(); ++o) gx[static_cast<size_t>(arg[o])] += gy[o];
                break;
            }
            case LayerKind::Relu:
                for (size_t k = 0; k < gx.size(); ++k) gx[k] = x[k] > 0 ? gy[k] : 0.0;
                break;
            case LayerKind::Dropout: {
                const auto& mask = cache_.masks[i];
                if (mask.empty()) {
                    gx = gy;
                } else {
                    for (size_t k = 0; k < gx.size(); ++k) gx[k] = gy[k] * mask[k];
                }
                break;
            }
            case LayerKind::Residual:
                gx = gy;
                accumulate(static_cast<size_t>(L.from + 1), gy);
                break;
        }
        accumulate(static_cast<size_t>(i), gx);
    }
    return grads[0];
}

// ---------------------------------------------------------------------------

nlohmann::json LayerGraph::manifest() const {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& L : layers_) {
        nlohmann::json j{{"type", kindName(L.kind)}};
        if (L.kind == LayerKind::Dense || L.kind == LayerKind::Conv3x3) j["units"] = L.units;
        if (L.kind == LayerKind::Dropout) j["rate"] = L.rate;
        if (L.kind == LayerKind::Residual) j["from"] = L.from;
        layers.push_back(j);
    }
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : params_) params.push_back({{"name", p.name}, {"shape", p.shape}, {"file", p.name + ".bin"}});
    return {{"format", "bodyfit-layergraph-1"},
            {"input_shape", inputShape_},
            {"seed", seed_},
            {"step", step_},
            {"layers", layers},
            {"parameters", params}};
}

void LayerGraph::save(const std::string& directory) const {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec) throw IoError("cannot create checkpoint directory '" + directory + "': " + ec.message());
    {
        std::ofstream out(fs::path(directory) / "manifest.json");
        if (!out) throw IoError("cannot write checkpoint manifest in '" + directory + "'");
        out << manifest().dump(2) << "\n";
    }
    for (const auto& p : params_) {
        std::ofstream out(fs::path(directory) / (p.name + ".bin"), std::ios::binary);
        if (!out) throw IoError("cannot write parameter file for " + p.name);
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            uint64_t bits = std::bit_cast<uint64_t>(p.value[i]);
            unsigned char bytes[8];
            for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
            out.write(reinterpret_cast<const char*>(bytes), 8);
        }
        if (!out) throw IoError("write failed for " + p.name);
    }
}

LayerGraph LayerGraph::load(const std::string& directory) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(directory) / "manifest.json");
    if (!in) throw IoError("no checkpoint manifest in '" + directory + "'");
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(in);
        LayerGraph g(m.at("input_shape").get<std::vector<int>>(), m.at("seed").get<uint64_t>());
        for (const auto& L : m.at("layers")) {
            switch (kindFromName(L.at("type").get<std::string>())) {
                case LayerKind::Dense: g.addDense(L.at("units").get<int>()); break;
                case LayerKind::Conv3x3: g.addConv3x3(L.at("units").get<int>()); break;
                case LayerKind::MaxPool2: g.addMaxPool2(); break;
                case LayerKind::Relu: g.addRelu(); break;
                case LayerKind::Dropout: g.addDropout(L.at("rate").get<double>()); break;
                case LayerKind::Residual: g.addResidual(L.at("from").get<int>()); break;
            }
        }
        g.setStep(m.at("step").get<uint64_t>());
        const auto& plist = m.at("parameters");
        if (plist.size() != g.params_.size()) throw IoError("checkpoint parameter count does not match its layers");
        for (size_t k = 0; k < plist.size(); ++k) {
            Parameter& p = g.params_[k];
            if (plist[k].at("shape").get<std::vector<int>>() != p.shape)
                throw IoError("checkpoint parameter " + p.name + " has the wrong shape");
            const fs::path file = fs::path(directory) / plist[k].at("file").get<std::string>();
            std::ifstream bin(file, std::ios::binary);
            if (!bin) throw IoError("missing parameter file " + file.string());
            std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
            if (bytes.size() != static_cast<size_t>(p.value.size()) * 8) throw IoError("parameter file " + file.string() + " has the wrong size");
            for (Eigen::Index i = 0; i < p.value.size(); ++i) {
                uint64_t bits = 0;
                for (int b = 0; b < 8; ++b) bits |= static_cast<uint64_t>(bytes[static_cast<size_t>(8 * i + b)]) << (8 * b);
                p.value[i] = std::bit_cast<double>(bits);
            }
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed checkpoint manifest in '" + directory + "': " + e.what());
    } catch (const ValidationError& e) {
        throw IoError("inconsistent checkpoint in '" + directory + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------

void rmspropUpdate(Eigen::VectorXd& param, Eigen::VectorXd& accumulator, const Eigen::VectorXd& grad,
                   const RmspropConfig& cfg) {
    if (param.size() != grad.size() || accumulator.size() != grad.size())
        throw ValidationError("rmsprop: shape mismatch");
    accumulator = cfg.decay * accumulator + (1.0 - cfg.decay) * grad.cwiseAbs2();
    param.array() -= cfg.learningRate * grad.array() / (accumulator.array().sqrt() + cfg.epsilon);
}

void Rmsprop::step(LayerGraph& graph) {
    auto& params = graph.parameters();
    if (acc_.empty()) {
        for (const auto& p : params) acc_.push_back(Eigen::VectorXd::Zero(p.value.size()));
    }
    if (acc_.size() != params.size()) throw ValidationError("rmsprop: optimizer bound to a different graph");
    for (size_t k = 0; k < params.size(); ++k) rmspropUpdate(params[k].value, acc_[k], params[k].grad, cfg_);
    graph.setStep(graph.step() + 1);
}

}  // namespace bodyfit
