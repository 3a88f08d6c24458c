#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "impact/compressor.hpp"
#include "impact/modelio.hpp"
#include "impact/toynet.hpp"

namespace impact::pipeline {

/// Shell-style glob over layer names: '*' matches any run, '?' one character.
bool glob_match(const std::string& pattern, const std::string& name);

/// Run every dataset sample through the model (one backward pass per sample)
/// and finalize per-layer statistics for all linear layers.
StatsFile profile_model(const ToyModel& model, const Dataset& data);

/// Figure-style gradient-heterogeneity rows for every profiled layer.
std::vector<GradDiagRow> diagnostic_rows(const StatsFile& stats);

enum class Method { Impact, Svd, Fwsvd, Afm };
Method parse_method(const std::string& tag);
std::string to_string(Method m);

struct LayerOutcome {
    std::string name;
    bool compressed = false;        // false: layer kept dense
    std::size_t rank = 0;           // 0 when kept dense
    std::size_t params_before = 0;
    std::size_t params_after = 0;
    double h_closed_form = 0.0;     // residual energy of the method's basis
    std::string note;
};

struct CompressResult {
    ToyModel model;
    std::vector<LayerOutcome> layers;
};

/// Apply one method to every dense layer whose name matches layer_glob.
/// Baselines (svd/fwsvd) and afm are run at the per-layer rank IMPACT's
/// energy rule selects under cfg, so methods compare at matched parameter
/// budgets; a layer IMPACT declines to shrink stays dense for every method.
CompressResult compress_model(const ToyModel& model, const StatsFile& stats, Method method,
                              const ImpactConfig& cfg, const std::string& layer_glob,
                              bool parallel = false);

struct SweepOptions {
    std::vector<double> keep_ratios;
    double eta = 0.5;
    std::string layer_glob = "*";
    bool parallel = false;
};

/// compress + evaluate every method at every keep ratio, at matched ranks.
std::vector<ReportRow> sweep(const ToyModel& model, const StatsFile& stats,
                             const Dataset& eval_data, const SweepOptions& opts);

}  // namespace impact::pipeline
