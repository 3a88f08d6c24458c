#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "impact/compressor.hpp"
#include "impact/linalg.hpp"

namespace impact {

enum class Activation { Identity, Relu, Tanh };
enum class LossKind { Mse, SoftmaxCrossEntropy };

Activation parse_activation(const std::string& tag);
std::string to_string(Activation a);
LossKind parse_loss(const std::string& tag);
std::string to_string(LossKind k);

struct DenseParams {
    Matrix w;  // d_out x d_in
    Vector b;  // d_out

    bool operator==(const DenseParams&) const = default;
};

/// One model layer: an affine map (dense or factored) followed by an
/// elementwise nonlinearity. Compression swaps the affine part only.
struct ModelLayer {
    std::string name;
    Activation act = Activation::Identity;
    std::variant<DenseParams, FactoredLayer> params;

    bool is_dense() const { return std::holds_alternative<DenseParams>(params); }
    std::size_t in_dim() const;
    std::size_t out_dim() const;
    std::size_t param_count() const;
};

struct ToyModel {
    LossKind loss = LossKind::Mse;
    std::vector<ModelLayer> layers;

    std::size_t input_dim() const { return layers.front().in_dim(); }
    std::size_t output_dim() const { return layers.back().out_dim(); }
    std::size_t param_count() const;
    /// Throws if the model is empty, has duplicate names, or dims don't chain.
    void validate() const;
};

/// Pre-activation snapshot of one linear layer for the profiler:
/// y = Wx + b (or W2 W1 x + b'), the gradient of the loss at y, and the
/// squared norm of the layer input.
struct TapRecord {
    std::string layer_name;
    Vector y;
    Vector grad_wrt_y;  // empty until backward fills it
    double input_norm_sq = 0.0;
};

struct ForwardResult {
    Vector output;
    std::vector<TapRecord> taps;
};

ForwardResult forward(const ToyModel& model, const Vector& x);

struct DenseGrads {
    Matrix dw;
    Vector db;
};
struct FactoredGrads {
    Matrix dw1;
    Matrix dw2;
    Vector db_prime;
};
using LayerGrads = std::variant<DenseGrads, FactoredGrads>;

struct BackwardResult {
    double loss = 0.0;
    std::vector<TapRecord> taps;    // grad_wrt_y populated
    std::vector<LayerGrads> grads;  // one per layer, in model order
};

/// Exact reverse-mode gradients of the scalar loss for one sample.
BackwardResult backward(const ToyModel& model, const Vector& x, const Vector& target);

double loss_value(LossKind kind, const Vector& output, const Vector& target);

enum class DatasetKind { Hetero, Iso, LowRank };
DatasetKind parse_dataset_kind(const std::string& tag);
std::string to_string(DatasetKind k);

struct Dataset {
    DatasetKind kind = DatasetKind::Iso;
    std::vector<Vector> inputs;
    std::vector<Vector> targets;
};

/// Synthetic regression data. The target map (directions, per-dimension
/// scales) is a fixed property of the kind so different seeds draw fresh
/// samples of the same task; the seed drives inputs and noise only.
///   hetero  - per-dimension target scales decay geometrically, so a few
///             output dimensions dominate the loss gradient
///   iso     - all dimensions at scale 1 (uniform sensitivity control)
///   lowrank - inputs confined to a latent_dim-dimensional subspace
Dataset make_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed,
                     std::size_t input_dim = 16, std::size_t target_dim = 8,
                     std::size_t latent_dim = 2);

/// MLP with the given widths (widths[0] = input dim, widths.back() = output
/// dim), tanh hidden activations, identity output, scaled-Gaussian init.
ToyModel make_mlp(const std::vector<std::size_t>& widths, LossKind loss, std::uint64_t seed);

/// Plain per-sample SGD with a fixed per-seed shuffle. Returns the mean
/// training loss after the final epoch. Throws TrainingDivergenceError if
/// the loss leaves the finite range.
double train(ToyModel& model, const Dataset& data, std::size_t epochs, double lr,
             std::uint64_t seed);

struct EvalResult {
    double loss = 0.0;
    double metric = 0.0;  // rmse for mse models, accuracy for cross-entropy
};
EvalResult evaluate(const ToyModel& model, const Dataset& data);

/// Replace the affine part of the named layer with a factored one.
void swap_layer(ToyModel& model, const std::string& layer_name, FactoredLayer factored);

}  // namespace impact
