#include "impact/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <future>

namespace impact::pipeline {

bool glob_match(const std::string& pattern, const std::string& name) {
    // Iterative wildcard match with backtracking on the last '*'.
    std::size_t p = 0, s = 0;
    std::size_t star = std::string::npos, star_s = 0;
    while (s < name.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[s])) {
            ++p;
            ++s;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            star_s = s;
        } else if (star != std::string::npos) {
            p = star + 1;
            s = ++star_s;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

StatsFile profile_model(const ToyModel& model, const Dataset& data) {
    model.validate();
    if (data.inputs.empty()) throw ConfigError("profile: empty dataset");

    std::vector<LayerStatsAccumulator> accs;
    accs.reserve(model.layers.size());
    for (const auto& layer : model.layers) accs.emplace_back(layer.out_dim());

    for (std::size_t i = 0; i < data.inputs.size(); ++i) {
        const BackwardResult back = backward(model, data.inputs[i], data.targets[i]);
        for (std::size_t l = 0; l < back.taps.size(); ++l)
            accs[l].accumulate(back.taps[l].y, back.taps[l].grad_wrt_y,
                               back.taps[l].input_norm_sq);
    }

    StatsFile stats;
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        stats.layers.push_back({model.layers[l].name, accs[l].finalize()});
    return stats;
}

std::vector<GradDiagRow> diagnostic_rows(const StatsFile& stats) {
    std::vector<GradDiagRow> rows;
    for (const auto& layer : stats.layers) {
        const Vector mags = normalized_grad_magnitudes(layer.prof);
        for (std::size_t i = 0; i < mags.size(); ++i)
            rows.push_back({layer.name, i, mags[i]});
    }
    return rows;
}

Method parse_method(const std::string& tag) {
    if (tag == "impact") return Method::Impact;
    if (tag == "svd") return Method::Svd;
    if (tag == "fwsvd") return Method::Fwsvd;
    if (tag == "afm") return Method::Afm;
    throw ConfigError("unknown method: " + tag);
}

std::string to_string(Method m) {
    switch (m) {
        case Method::Impact: return "impact";
        case Method::Svd: return "svd";
        case Method::Fwsvd: return "fwsvd";
        case Method::Afm: return "afm";
    }
    throw ConfigError("unreachable method tag");
}

namespace {

struct LayerJob {
    std::size_t index = 0;
    std::optional<FactoredLayer> factored;
    LayerOutcome outcome;
};

LayerJob compress_one(const ToyModel& model, std::size_t index, const ProfiledLayer& prof,
                      Method method, const ImpactConfig& cfg) {
    const auto& layer = model.layers[index];
    const auto& dense = std::get<DenseParams>(layer.params);

    LayerJob job;
    job.index = index;
    job.outcome.name = layer.name;
    job.outcome.params_before = layer.param_count();
    job.outcome.params_after = layer.param_count();

    // IMPACT's energy rule fixes the rank budget every method runs at.
    std::optional<FactoredLayer> impact = factorize_impact(dense.w, dense.b, prof, cfg);
    if (!impact) {
        job.outcome.note = "kept dense (no parameter benefit at selected rank)";
        return job;
    }
    const std::size_t rank = impact->rank;

    std::optional<FactoredLayer> result;
    switch (method) {
        case Method::Impact: result = std::move(impact); break;
        case Method::Afm: {
            ImpactConfig matched = cfg;
            matched.explicit_rank = rank;
            result = afm_factorize(dense.w, dense.b, prof, matched);
            break;
        }
        case Method::Svd: result = svd_factorize(dense.w, dense.b, rank); break;
        case Method::Fwsvd: result = fwsvd_factorize(dense.w, dense.b, prof, rank); break;
    }
    if (!result) {  // afm at the matched explicit rank keeps the same budget
        job.outcome.note = "kept dense (no parameter benefit at selected rank)";
        return job;
    }

    // Residual energy of the method's primary d-side frame against the
    // weighted covariance at the row's eta.
    const double row_eta = method == Method::Afm ? 1.0 : cfg.eta;
    const Vector a = transform_coeff(prof.grad_sq_mean, row_eta, cfg.a_floor);
    const Matrix c = weighted_cov(prof, a);
    Matrix frame;
    if (method == Method::Impact || method == Method::Afm) {
        ImpactConfig basis_cfg = cfg;
        basis_cfg.eta = row_eta;
        basis_cfg.explicit_rank = rank;
        frame = reconstruction_basis(c, basis_cfg).u;
    } else {
        Matrix weighted = dense.w;
        if (method == Method::Fwsvd) {
            Vector wts(prof.d);
            for (std::size_t i = 0; i < prof.d; ++i)
                wts[i] = std::sqrt((*prof.fisher_row)[i] + 1e-12);
            weighted = scale_rows(dense.w, wts);
        }
        frame = truncated_svd(weighted, rank).u;
    }
    double h = trace(c);
    for (std::size_t k = 0; k < rank; ++k) {
        const Vector u_k = frame.col(k);
        h -= dot(u_k, matvec(c, u_k));
    }

    job.outcome.compressed = true;
    job.outcome.rank = rank;
    job.outcome.params_after = result->param_count();
    job.outcome.h_closed_form = h;
    job.factored = std::move(result);
    return job;
}

}  // namespace

CompressResult compress_model(const ToyModel& model, const StatsFile& stats, Method method,
                              const ImpactConfig& cfg, const std::string& layer_glob,
                              bool parallel) {
    model.validate();

    std::vector<std::size_t> targets;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        if (!layer.is_dense() || !glob_match(layer_glob, layer.name)) continue;
        if (!stats.find(layer.name))
            throw ConfigError("compress: no profiled statistics for layer '" + layer.name +
                              "'");
        targets.push_back(l);
    }

    std::vector<LayerJob> jobs(targets.size());
    auto run_one = [&](std::size_t i) {
        const std::size_t l = targets[i];
        return compress_one(model, l, *stats.find(model.layers[l].name), method, cfg);
    };
    if (parallel && targets.size() > 1) {
        std::vector<std::future<LayerJob>> futures;
        futures.reserve(targets.size());
        for (std::size_t i = 0; i < targets.size(); ++i)
            futures.push_back(std::async(std::launch::async, run_one, i));
        for (std::size_t i = 0; i < targets.size(); ++i) jobs[i] = futures[i].get();
    } else {
        for (std::size_t i = 0; i < targets.size(); ++i) jobs[i] = run_one(i);
    }

    CompressResult result;
    result.model = model;
    for (auto& job : jobs) {
        if (job.factored)
            result.model.layers[job.index].params = std::move(*job.factored);
        result.layers.push_back(std::move(job.outcome));
    }
    return result;
}

std::vector<ReportRow> sweep(const ToyModel& model, const StatsFile& stats,
                             const Dataset& eval_data, const SweepOptions& opts) {
    if (opts.keep_ratios.empty()) throw ConfigError("sweep: no keep ratios");
    const std::size_t params_original = model.param_count();

    std::vector<ReportRow> rows;
    for (double keep_ratio : opts.keep_ratios) {
        for (Method method : {Method::Impact, Method::Svd, Method::Fwsvd, Method::Afm}) {
            ImpactConfig cfg;
            cfg.eta = opts.eta;
            cfg.keep_ratio = keep_ratio;
            const CompressResult compressed =
                compress_model(model, stats, method, cfg, opts.layer_glob, opts.parallel);
            const EvalResult eval = evaluate(compressed.model, eval_data);

            ReportRow row;
            row.method = to_string(method);
            row.layer_scope = opts.layer_glob;
            row.eta = method == Method::Afm ? 1.0 : opts.eta;
            row.keep_ratio = keep_ratio;
            std::string ranks, hs;
            for (const auto& layer : compressed.layers) {
                if (!ranks.empty()) ranks += ';';
                if (!hs.empty()) hs += ';';
                ranks += layer.name + ':' +
                         (layer.compressed ? std::to_string(layer.rank) : "dense");
                hs += layer.name + ':' + format_double(layer.h_closed_form);
            }
            row.rank_per_layer = ranks;
            row.h_per_layer = hs;
            row.params_total = compressed.model.param_count();
            row.params_ratio =
                static_cast<double>(row.params_total) / static_cast<double>(params_original);
            row.eval_loss = eval.loss;
            row.eval_metric = eval.metric;
            row.notes = "statistics profiled on the trained model";
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace impact::pipeline
