#include "impact/toynet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "impact/rng.hpp"

namespace impact {

Activation parse_activation(const std::string& tag) {
    if (tag == "identity") return Activation::Identity;
    if (tag == "relu") return Activation::Relu;
    if (tag == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation tag: " + tag);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Tanh: return "tanh";
    }
    throw ConfigError("unreachable activation tag");
}

LossKind parse_loss(const std::string& tag) {
    if (tag == "mse") return LossKind::Mse;
    if (tag == "softmax-cross-entropy") return LossKind::SoftmaxCrossEntropy;
    throw ConfigError("unknown loss tag: " + tag);
}

std::string to_string(LossKind k) {
    return k == LossKind::Mse ? "mse" : "softmax-cross-entropy";
}

DatasetKind parse_dataset_kind(const std::string& tag) {
    if (tag == "hetero" || tag == "heterogeneous-regression") return DatasetKind::Hetero;
    if (tag == "iso" || tag == "isotropic-regression") return DatasetKind::Iso;
    if (tag == "lowrank" || tag == "lowrank-activation") return DatasetKind::LowRank;
    throw ConfigError("unknown dataset kind: " + tag);
}

std::string to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::Hetero: return "hetero";
        case DatasetKind::Iso: return "iso";
        case DatasetKind::LowRank: return "lowrank";
    }
    throw ConfigError("unreachable dataset kind");
}

std::size_t ModelLayer::in_dim() const {
    return is_dense() ? std::get<DenseParams>(params).w.cols()
                      : std::get<FactoredLayer>(params).in_dim();
}

std::size_t ModelLayer::out_dim() const {
    return is_dense() ? std::get<DenseParams>(params).w.rows()
                      : std::get<FactoredLayer>(params).out_dim();
}

std::size_t ModelLayer::param_count() const {
    if (is_dense()) {
        const auto& p = std::get<DenseParams>(params);
        return p.w.size() + p.b.size();
    }
    return std::get<FactoredLayer>(params).param_count();
}

std::size_t ToyModel::param_count() const {
    std::size_t total = 0;
    for (const auto& layer : layers) total += layer.param_count();
    return total;
}

void ToyModel::validate() const {
    if (layers.empty()) throw ConfigError("model has no layers");
    std::set<std::string> names;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!names.insert(layers[i].name).second)
            throw ConfigError("duplicate layer name: " + layers[i].name);
        if (i + 1 < layers.size() && layers[i].out_dim() != layers[i + 1].in_dim())
            throw DimensionError("layer dimension chain broken between '" + layers[i].name +
                                 "' (out " + std::to_string(layers[i].out_dim()) + ") and '" +
                                 layers[i + 1].name + "' (in " +
                                 std::to_string(layers[i + 1].in_dim()) + ")");
    }
}

namespace {

Vector apply_activation(Activation act, const Vector& z) {
    Vector out(z.size());
    switch (act) {
        case Activation::Identity: return z;
        case Activation::Relu:
            for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] > 0.0 ? z[i] : 0.0;
            return out;
        case Activation::Tanh:
            for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::tanh(z[i]);
            return out;
    }
    throw ConfigError("unreachable activation");
}

Vector activation_grad(Activation act, const Vector& z) {
    Vector out(z.size(), 1.0);
    switch (act) {
        case Activation::Identity: return out;
        case Activation::Relu:
            for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] > 0.0 ? 1.0 : 0.0;
            return out;
        case Activation::Tanh:
            for (std::size_t i = 0; i < z.size(); ++i) {
                const double t = std::tanh(z[i]);
                out[i] = 1.0 - t * t;
            }
            return out;
    }
    throw ConfigError("unreachable activation");
}

Vector softmax(const Vector& z) {
    const double peak = *std::max_element(z.begin(), z.end());
    Vector out(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] - peak);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

// Per-layer forward scratch: input, pre-activation, and the factored
// intermediate h = W1 x when applicable.
struct LayerTrace {
    Vector input;
    Vector pre_act;
    Vector hidden;  // factored layers only
};

Vector affine_forward(const ModelLayer& layer, const Vector& x, LayerTrace& trace) {
    trace.input = x;
    if (layer.is_dense()) {
        const auto& p = std::get<DenseParams>(layer.params);
        trace.pre_act = add(matvec(p.w, x), p.b);
    } else {
        const auto& f = std::get<FactoredLayer>(layer.params);
        trace.hidden = matvec(f.w1, x);
        trace.pre_act = add(matvec(f.w2, trace.hidden), f.b_prime);
    }
    return trace.pre_act;
}

}  // namespace

ForwardResult forward(const ToyModel& model, const Vector& x) {
    model.validate();
    if (x.size() != model.input_dim())
        throw DimensionError("forward: input length " + std::to_string(x.size()) +
                             " vs model input dim " + std::to_string(model.input_dim()));
    ForwardResult result;
    Vector current = x;
    for (const auto& layer : model.layers) {
        LayerTrace trace;
        const Vector pre = affine_forward(layer, current, trace);
        result.taps.push_back({layer.name, pre, {}, norm_sq(current)});
        current = apply_activation(layer.act, pre);
    }
    result.output = std::move(current);
    return result;
}

double loss_value(LossKind kind, const Vector& output, const Vector& target) {
    if (output.size() != target.size())
        throw DimensionError("loss: output/target length mismatch");
    if (kind == LossKind::Mse) {
        return norm_sq(sub(output, target)) / static_cast<double>(output.size());
    }
    const Vector probs = softmax(output);
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i)
        if (target[i] != 0.0) loss -= target[i] * std::log(std::max(probs[i], 1e-300));
    return loss;
}

namespace {

Vector loss_grad(LossKind kind, const Vector& output, const Vector& target) {
    if (kind == LossKind::Mse)
        return scale(sub(output, target), 2.0 / static_cast<double>(output.size()));
    return sub(softmax(output), target);
}

}  // namespace

BackwardResult backward(const ToyModel& model, const Vector& x, const Vector& target) {
    model.validate();
    if (x.size() != model.input_dim())
        throw DimensionError("backward: input length vs model input dim mismatch");
    if (target.size() != model.output_dim())
        throw DimensionError("backward: target length " + std::to_string(target.size()) +
                             " vs model output dim " + std::to_string(model.output_dim()));

    const std::size_t depth = model.layers.size();
    std::vector<LayerTrace> traces(depth);
    BackwardResult result;
    Vector current = x;
    for (std::size_t l = 0; l < depth; ++l) {
        const Vector pre = affine_forward(model.layers[l], current, traces[l]);
        result.taps.push_back({model.layers[l].name, pre, {}, norm_sq(current)});
        current = apply_activation(model.layers[l].act, pre);
    }
    result.loss = loss_value(model.loss, current, target);

    result.grads.resize(depth);
    Vector delta = loss_grad(model.loss, current, target);  // d loss / d post-activation
    for (std::size_t idx = depth; idx-- > 0;) {
        const auto& layer = model.layers[idx];
        const LayerTrace& trace = traces[idx];
        // Gradient at the pre-activation: chain through the nonlinearity.
        const Vector dz = hadamard(delta, activation_grad(layer.act, trace.pre_act));
        result.taps[idx].grad_wrt_y = dz;

        if (layer.is_dense()) {
            const auto& p = std::get<DenseParams>(layer.params);
            result.grads[idx] = DenseGrads{outer(dz, trace.input), dz};
            delta = matvec(transpose(p.w), dz);
        } else {
            const auto& f = std::get<FactoredLayer>(layer.params);
            const Vector dh = matvec(transpose(f.w2), dz);
            result.grads[idx] =
                FactoredGrads{outer(dh, trace.input), outer(dz, trace.hidden), dz};
            delta = matvec(transpose(f.w1), dh);
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

namespace {

// Orthonormal target directions shared by all seeds of a kind: the task is
// fixed, the seed only draws samples.
constexpr std::uint64_t kTaskSeed = 0x1a2b3c4d5e6f7788ULL;
constexpr double kNoiseStd = 0.1;
constexpr double kHeteroScaleMax = 8.0;
constexpr double kHeteroScaleDecay = 0.25;
// The heterogeneous task also amplifies input directions the targets ignore,
// so activations carry high-variance components with near-zero gradients.
constexpr std::size_t kHeteroNuisanceCount = 5;
constexpr double kHeteroNuisanceAmp = 4.0;
constexpr double kHeteroDominantNoise = 0.1;

Matrix orthonormal_rows(std::size_t count, std::size_t dim, Rng& rng) {
    Matrix m(count, dim);
    for (std::size_t i = 0; i < count; ++i) {
        Vector v(dim);
        for (auto& e : v) e = rng.normal();
        // Modified Gram-Schmidt against earlier rows.
        for (std::size_t k = 0; k < i; ++k) {
            const Vector prev = m.row(k);
            const double proj = dot(v, prev);
            for (std::size_t j = 0; j < dim; ++j) v[j] -= proj * prev[j];
        }
        const double len = norm(v);
        if (len < 1e-8) throw DomainError("orthonormal_rows: degenerate draw");
        for (std::size_t j = 0; j < dim; ++j) m(i, j) = v[j] / len;
    }
    return m;
}

}  // namespace

Dataset make_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed, std::size_t input_dim,
                     std::size_t target_dim, std::size_t latent_dim) {
    if (n < 1) throw ConfigError("make_dataset: need at least one sample");
    if (latent_dim < 1 || latent_dim > input_dim)
        throw ConfigError("make_dataset: latent_dim out of range");

    if (target_dim > input_dim)
        throw ConfigError("make_dataset: target_dim exceeds input_dim");
    Rng task_rng(kTaskSeed + static_cast<std::uint64_t>(kind) * 977);
    const std::size_t nuisance_count =
        kind == DatasetKind::Hetero
            ? std::min(kHeteroNuisanceCount, input_dim - target_dim)
            : 0;
    // One orthonormal family: target directions first, nuisance directions
    // after them, so amplifying the latter leaves every v_i^T x untouched.
    const Matrix frame = orthonormal_rows(target_dim + nuisance_count, input_dim, task_rng);
    const Matrix latent_basis = orthonormal_rows(latent_dim, input_dim, task_rng);

    Vector scales(target_dim, 1.0);
    Vector noise_stds(target_dim, kNoiseStd);
    if (kind == DatasetKind::Hetero) {
        double s = kHeteroScaleMax;
        for (std::size_t i = 0; i < target_dim; ++i, s *= kHeteroScaleDecay) {
            scales[i] = s;
            noise_stds[i] = kNoiseStd * s;
        }
        // The dominant dimension carries an irreducible noise floor, so its
        // loss gradient stays large no matter how well the model fits.
        noise_stds[0] = kHeteroDominantNoise * scales[0];
    }

    Rng rng(seed);
    Dataset data;
    data.kind = kind;
    data.inputs.reserve(n);
    data.targets.reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        Vector x(input_dim, 0.0);
        if (kind == DatasetKind::LowRank) {
            // Anisotropic coefficients over the latent basis.
            for (std::size_t k = 0; k < latent_dim; ++k) {
                const double coeff =
                    rng.normal() * (3.0 / static_cast<double>(k + 1));
                for (std::size_t j = 0; j < input_dim; ++j) x[j] += coeff * latent_basis(k, j);
            }
        } else {
            for (auto& e : x) e = rng.normal();
            for (std::size_t k = 0; k < nuisance_count; ++k) {
                const Vector dir = frame.row(target_dim + k);
                const double along = dot(dir, x);
                for (std::size_t j = 0; j < input_dim; ++j)
                    x[j] += (kHeteroNuisanceAmp - 1.0) * along * dir[j];
            }
        }

        Vector t(target_dim);
        for (std::size_t i = 0; i < target_dim; ++i)
            t[i] = scales[i] * dot(frame.row(i), x) + noise_stds[i] * rng.normal();
        data.inputs.push_back(std::move(x));
        data.targets.push_back(std::move(t));
    }
    return data;
}

ToyModel make_mlp(const std::vector<std::size_t>& widths, LossKind loss, std::uint64_t seed) {
    if (widths.size() < 2) throw ConfigError("make_mlp: need at least input and output widths");
    Rng rng(seed);
    ToyModel model;
    model.loss = loss;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t d_in = widths[l];
        const std::size_t d_out = widths[l + 1];
        Matrix w(d_out, d_in);
        const double std_dev = std::sqrt(1.0 / static_cast<double>(d_in));
        for (auto& e : w.data()) e = std_dev * rng.normal();
        ModelLayer layer;
        layer.name = "fc" + std::to_string(l);
        layer.act = l + 2 < widths.size() ? Activation::Tanh : Activation::Identity;
        layer.params = DenseParams{std::move(w), Vector(d_out, 0.0)};
        model.layers.push_back(std::move(layer));
    }
    model.validate();
    return model;
}

double train(ToyModel& model, const Dataset& data, std::size_t epochs, double lr,
             std::uint64_t seed) {
    model.validate();
    if (data.inputs.empty()) throw ConfigError("train: empty dataset");
    if (epochs < 1) throw ConfigError("train: need at least one epoch");
    if (!(lr >= 0.0)) throw ConfigError("train: learning rate must be non-negative");

    Rng rng(seed);
    std::vector<std::size_t> order(data.inputs.size());
    std::iota(order.begin(), order.end(), 0);

    double final_loss = 0.0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        // Fisher-Yates with the portable generator, one fresh shuffle per epoch.
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.index(i)]);

        double epoch_loss = 0.0;
        for (std::size_t idx : order) {
            const BackwardResult back = backward(model, data.inputs[idx], data.targets[idx]);
            if (!std::isfinite(back.loss))
                throw TrainingDivergenceError("train: loss became non-finite at epoch " +
                                              std::to_string(epoch));
            epoch_loss += back.loss;
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                auto& layer = model.layers[l];
                if (layer.is_dense()) {
                    auto& p = std::get<DenseParams>(layer.params);
                    const auto& g = std::get<DenseGrads>(back.grads[l]);
                    for (std::size_t i = 0; i < p.w.size(); ++i)
                        p.w.data()[i] -= lr * g.dw.data()[i];
                    for (std::size_t i = 0; i < p.b.size(); ++i) p.b[i] -= lr * g.db[i];
                } else {
                    auto& f = std::get<FactoredLayer>(layer.params);
                    const auto& g = std::get<FactoredGrads>(back.grads[l]);
                    for (std::size_t i = 0; i < f.w1.size(); ++i)
                        f.w1.data()[i] -= lr * g.dw1.data()[i];
                    for (std::size_t i = 0; i < f.w2.size(); ++i)
                        f.w2.data()[i] -= lr * g.dw2.data()[i];
                    for (std::size_t i = 0; i < f.b_prime.size(); ++i)
                        f.b_prime[i] -= lr * g.db_prime[i];
                }
            }
        }
        final_loss = epoch_loss / static_cast<double>(data.inputs.size());
    }
    return final_loss;
}

EvalResult evaluate(const ToyModel& model, const Dataset& data) {
    model.validate();
    if (data.inputs.empty()) throw ConfigError("evaluate: empty dataset");
    double loss_acc = 0.0;
    double metric_acc = 0.0;
    for (std::size_t i = 0; i < data.inputs.size(); ++i) {
        const Vector out = forward(model, data.inputs[i]).output;
        loss_acc += loss_value(model.loss, out, data.targets[i]);
        if (model.loss == LossKind::Mse) {
            metric_acc += norm_sq(sub(out, data.targets[i])) /
                          static_cast<double>(out.size());
        } else {
            const auto pred = std::max_element(out.begin(), out.end()) - out.begin();
            const auto truth = std::max_element(data.targets[i].begin(),
                                                data.targets[i].end()) -
                               data.targets[i].begin();
            metric_acc += pred == truth ? 1.0 : 0.0;
        }
    }
    const double count = static_cast<double>(data.inputs.size());
    EvalResult result;
    result.loss = loss_acc / count;
    result.metric =
        model.loss == LossKind::Mse ? std::sqrt(metric_acc / count) : metric_acc / count;
    return result;
}

void swap_layer(ToyModel& model, const std::string& layer_name, FactoredLayer factored) {
    for (auto& layer : model.layers) {
        if (layer.name != layer_name) continue;
        if (factored.in_dim() != layer.in_dim() || factored.out_dim() != layer.out_dim())
            throw DimensionError("swap_layer: factored dims " +
                                 std::to_string(factored.out_dim()) + "x" +
                                 std::to_string(factored.in_dim()) + " vs layer '" +
                                 layer_name + "' dims " + std::to_string(layer.out_dim()) +
                                 "x" + std::to_string(layer.in_dim()));
        layer.params = std::move(factored);
        return;
    }
    throw ConfigError("swap_layer: no layer named '" + layer_name + "'");
}

}  // namespace impact
