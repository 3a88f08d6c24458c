#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "impact/profiler.hpp"
#include "impact/toynet.hpp"

namespace impact {

/// Profiled statistics for the layers of one model. The on-disk format is a
/// versioned JSON document with floats at 17 significant digits, so
/// read(write(x)) == x at full 64-bit precision.
struct StatsFile {
    static constexpr int kVersion = 1;

    struct Layer {
        std::string name;
        ProfiledLayer prof;
    };
    std::vector<Layer> layers;

    const ProfiledLayer* find(const std::string& name) const;
};

void write_stats(const std::string& path, const StatsFile& stats);
StatsFile read_stats(const std::string& path);

/// Models carry the loss tag plus dense/factored layers; dimension chaining
/// is validated on load.
void write_model(const std::string& path, const ToyModel& model);
ToyModel read_model(const std::string& path);

/// One CSV line of a compression/evaluation report.
struct ReportRow {
    std::string method;
    std::string layer_scope;
    double eta = 0.0;
    double keep_ratio = 0.0;
    std::string rank_per_layer;  // "name:r;name:r" pairs
    std::size_t params_total = 0;
    double params_ratio = 0.0;  // compressed / original parameter count
    double eval_loss = 0.0;
    double eval_metric = 0.0;
    std::string h_per_layer;  // "name:h;name:h" pairs
    std::string notes;
};

/// Fixed-header CSV, rows sorted by method then keep_ratio descending.
void write_report(const std::string& path, std::vector<ReportRow> rows);

/// Gradient-heterogeneity diagnostic: per-dimension RMS gradient magnitudes
/// sorted descending and normalized by their mean (they sum to d per layer).
struct GradDiagRow {
    std::string layer;
    std::size_t sorted_index = 0;
    double normalized_magnitude = 0.0;
};

void write_grad_diagnostic(const std::string& path, const std::vector<GradDiagRow>& rows);

/// 17-significant-digit decimal rendering used by every writer; injective
/// over finite doubles.
std::string format_double(double v);

}  // namespace impact
