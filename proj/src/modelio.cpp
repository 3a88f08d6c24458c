#include "impact/modelio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace impact {

namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Writing: hand-rolled JSON emitter so the byte stream is deterministic and
// floats carry exactly 17 significant digits.
// ---------------------------------------------------------------------------

void append_vector(std::string& out, const Vector& v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += format_double(v[i]);
    }
    out += ']';
}

void append_matrix(std::string& out, const Matrix& m, const std::string& indent) {
    out += '[';
    for (std::size_t i = 0; i < m.rows(); ++i) {
        if (i) out += ",";
        out += '\n';
        out += indent;
        append_vector(out, m.row(i));
    }
    out += '\n';
    out += indent.substr(0, indent.size() >= 2 ? indent.size() - 2 : 0);
    out += ']';
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

void check_finite_vector(const Vector& v, const std::string& what) {
    for (double e : v)
        if (!std::isfinite(e)) throw DataError("non-finite value in " + what);
}

void check_finite_matrix(const Matrix& m, const std::string& what) {
    for (double e : m.data())
        if (!std::isfinite(e)) throw DataError("non-finite value in " + what);
}

// Write-temp-then-rename so readers never observe a partial file.
void atomic_write(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("rename to '" + path + "' failed: " + ec.message());
}

// ---------------------------------------------------------------------------
// Reading helpers over nlohmann::json with layer-context error messages.
// ---------------------------------------------------------------------------

json parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
}

const json& field(const json& obj, const std::string& key, const std::string& ctx) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(ctx + ": missing field '" + key + "'");
    return *it;
}

double number_field(const json& obj, const std::string& key, const std::string& ctx) {
    const json& v = field(obj, key, ctx);
    if (!v.is_number()) throw ParseError(ctx + ": field '" + key + "' is not a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw DataError(ctx + ": field '" + key + "' is non-finite");
    return d;
}

std::size_t count_field(const json& obj, const std::string& key, const std::string& ctx) {
    const json& v = field(obj, key, ctx);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ParseError(ctx + ": field '" + key + "' is not a non-negative integer");
    return static_cast<std::size_t>(v.get<long long>());
}

std::string string_field(const json& obj, const std::string& key, const std::string& ctx) {
    const json& v = field(obj, key, ctx);
    if (!v.is_string()) throw ParseError(ctx + ": field '" + key + "' is not a string");
    return v.get<std::string>();
}

Vector vector_field(const json& obj, const std::string& key, const std::string& ctx,
                    std::size_t expected_len) {
    const json& v = field(obj, key, ctx);
    if (!v.is_array()) throw ParseError(ctx + ": field '" + key + "' is not an array");
    if (v.size() != expected_len)
        throw ParseError(ctx + ": field '" + key + "' has length " +
                         std::to_string(v.size()) + ", expected " +
                         std::to_string(expected_len));
    Vector out;
    out.reserve(v.size());
    for (const json& e : v) {
        if (!e.is_number()) throw ParseError(ctx + ": non-numeric entry in '" + key + "'");
        const double d = e.get<double>();
        if (!std::isfinite(d)) throw DataError(ctx + ": non-finite entry in '" + key + "'");
        out.push_back(d);
    }
    return out;
}

Matrix matrix_field(const json& obj, const std::string& key, const std::string& ctx,
                    std::size_t rows, std::size_t cols) {
    const json& v = field(obj, key, ctx);
    if (!v.is_array()) throw ParseError(ctx + ": field '" + key + "' is not an array");
    if (v.size() != rows)
        throw ParseError(ctx + ": field '" + key + "' has " + std::to_string(v.size()) +
                         " rows, expected " + std::to_string(rows));
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const json& row = v[i];
        if (!row.is_array() || row.size() != cols)
            throw ParseError(ctx + ": row " + std::to_string(i) + " of '" + key +
                             "' has length " +
                             std::to_string(row.is_array() ? row.size() : 0) + ", expected " +
                             std::to_string(cols));
        for (std::size_t j = 0; j < cols; ++j) {
            if (!row[j].is_number())
                throw ParseError(ctx + ": non-numeric entry in '" + key + "'");
            const double d = row[j].get<double>();
            if (!std::isfinite(d))
                throw DataError(ctx + ": non-finite entry in '" + key + "'");
            out(i, j) = d;
        }
    }
    return out;
}

void check_header(const json& doc, const std::string& format, const std::string& path) {
    if (!doc.is_object()) throw ParseError("'" + path + "': top level is not an object");
    if (string_field(doc, "format", path) != format)
        throw ParseError("'" + path + "': not a " + format + " file");
    const json& version = field(doc, "version", path);
    if (!version.is_number_integer() || version.get<int>() != 1)
        throw VersionError("'" + path + "': unsupported version " + version.dump() +
                           " (this build reads version 1)");
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const ProfiledLayer* StatsFile::find(const std::string& name) const {
    for (const auto& layer : layers)
        if (layer.name == name) return &layer.prof;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Stats files
// ---------------------------------------------------------------------------

void write_stats(const std::string& path, const StatsFile& stats) {
    std::string out;
    out += "{\n  \"format\": \"impact-stats\",\n  \"version\": 1,\n  \"layers\": [";
    for (std::size_t l = 0; l < stats.layers.size(); ++l) {
        const auto& layer = stats.layers[l];
        const auto& prof = layer.prof;
        const std::string ctx = "stats layer '" + layer.name + "'";
        if (prof.mean.size() != prof.d || prof.grad_sq_mean.size() != prof.d ||
            prof.cov.rows() != prof.d || prof.cov.cols() != prof.d)
            throw DimensionError(ctx + ": inconsistent dimensions");
        check_finite_vector(prof.mean, ctx + " mean");
        check_finite_vector(prof.grad_sq_mean, ctx + " grad_sq_mean");
        check_finite_matrix(prof.cov, ctx + " cov");

        if (l) out += ",";
        out += "\n    {\n      \"name\": \"" + escape(layer.name) + "\",\n";
        out += "      \"d\": " + std::to_string(prof.d) + ",\n";
        out += "      \"n\": " + std::to_string(prof.n) + ",\n";
        out += "      \"mean\": ";
        append_vector(out, prof.mean);
        out += ",\n      \"cov\": ";
        append_matrix(out, prof.cov, "        ");
        out += ",\n      \"grad_sq_mean\": ";
        append_vector(out, prof.grad_sq_mean);
        if (prof.fisher_row) {
            check_finite_vector(*prof.fisher_row, ctx + " fisher_row");
            out += ",\n      \"fisher_row\": ";
            append_vector(out, *prof.fisher_row);
        }
        out += "\n    }";
    }
    out += "\n  ]\n}\n";
    atomic_write(path, out);
}

StatsFile read_stats(const std::string& path) {
    const json doc = parse_file(path);
    check_header(doc, "impact-stats", path);
    const json& layers = field(doc, "layers", path);
    if (!layers.is_array()) throw ParseError("'" + path + "': 'layers' is not an array");

    StatsFile stats;
    for (const json& entry : layers) {
        if (!entry.is_object()) throw ParseError("'" + path + "': layer entry is not an object");
        StatsFile::Layer layer;
        layer.name = string_field(entry, "name", path);
        const std::string ctx = "layer '" + layer.name + "'";

        ProfiledLayer& prof = layer.prof;
        prof.d = count_field(entry, "d", ctx);
        prof.n = count_field(entry, "n", ctx);
        if (prof.d < 1) throw ParseError(ctx + ": d must be >= 1");
        if (prof.n < 2) throw DataError(ctx + ": n must be >= 2 for a meaningful covariance");
        prof.mean = vector_field(entry, "mean", ctx, prof.d);
        prof.cov = matrix_field(entry, "cov", ctx, prof.d, prof.d);
        prof.grad_sq_mean = vector_field(entry, "grad_sq_mean", ctx, prof.d);
        if (entry.contains("fisher_row"))
            prof.fisher_row = vector_field(entry, "fisher_row", ctx, prof.d);

        for (double g : prof.grad_sq_mean)
            if (g < 0.0) throw DataError(ctx + ": negative grad_sq_mean entry");
        if (prof.fisher_row)
            for (double f : *prof.fisher_row)
                if (f < 0.0) throw DataError(ctx + ": negative fisher_row entry");

        const double asym = max_abs(sub(prof.cov, transpose(prof.cov)));
        if (asym > 1e-9 * (1.0 + max_abs(prof.cov)))
            throw DataError(ctx + ": covariance asymmetry " + format_double(asym) +
                            " beyond tolerance");
        prof.cov = scale(add(prof.cov, transpose(prof.cov)), 0.5);
        const SymEigResult eig = sym_eig(prof.cov);
        if (eig.eigenvalues.back() < -1e-8 * (1.0 + max_abs(prof.cov)))
            throw DataError(ctx + ": covariance is not numerically PSD (min eigenvalue " +
                            format_double(eig.eigenvalues.back()) + ")");

        stats.layers.push_back(std::move(layer));
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

void write_model(const std::string& path, const ToyModel& model) {
    model.validate();
    std::string out;
    out += "{\n  \"format\": \"impact-model\",\n  \"version\": 1,\n";
    out += "  \"loss\": \"" + to_string(model.loss) + "\",\n  \"layers\": [";
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& layer = model.layers[l];
        const std::string ctx = "model layer '" + layer.name + "'";
        if (l) out += ",";
        out += "\n    {\n      \"name\": \"" + escape(layer.name) + "\",\n";
        out += "      \"activation\": \"" + to_string(layer.act) + "\",\n";
        if (layer.is_dense()) {
            const auto& p = std::get<DenseParams>(layer.params);
            check_finite_matrix(p.w, ctx + " w");
            check_finite_vector(p.b, ctx + " b");
            out += "      \"kind\": \"dense\",\n      \"w\": ";
            append_matrix(out, p.w, "        ");
            out += ",\n      \"b\": ";
            append_vector(out, p.b);
        } else {
            const auto& f = std::get<FactoredLayer>(layer.params);
            check_finite_matrix(f.w1, ctx + " w1");
            check_finite_matrix(f.w2, ctx + " w2");
            check_finite_vector(f.b_prime, ctx + " b_prime");
            out += "      \"kind\": \"factored\",\n      \"w1\": ";
            append_matrix(out, f.w1, "        ");
            out += ",\n      \"w2\": ";
            append_matrix(out, f.w2, "        ");
            out += ",\n      \"b_prime\": ";
            append_vector(out, f.b_prime);
            out += ",\n      \"provenance\": {\"method\": \"" + escape(f.provenance.method) +
                   "\", \"eta\": " + format_double(f.provenance.eta) +
                   ", \"keep_ratio\": " + format_double(f.provenance.keep_ratio) +
                   ", \"note\": \"" + escape(f.provenance.note) + "\"}";
        }
        out += "\n    }";
    }
    out += "\n  ]\n}\n";
    atomic_write(path, out);
}

ToyModel read_model(const std::string& path) {
    const json doc = parse_file(path);
    check_header(doc, "impact-model", path);

    ToyModel model;
    model.loss = parse_loss(string_field(doc, "loss", path));
    const json& layers = field(doc, "layers", path);
    if (!layers.is_array()) throw ParseError("'" + path + "': 'layers' is not an array");
    if (layers.empty()) throw ParseError("'" + path + "': model has no layers");

    for (const json& entry : layers) {
        if (!entry.is_object()) throw ParseError("'" + path + "': layer entry is not an object");
        ModelLayer layer;
        layer.name = string_field(entry, "name", path);
        const std::string ctx = "layer '" + layer.name + "'";
        layer.act = parse_activation(string_field(entry, "activation", ctx));
        const std::string kind = string_field(entry, "kind", ctx);

        if (kind == "dense") {
            const json& w = field(entry, "w", ctx);
            if (!w.is_array() || w.empty() || !w[0].is_array())
                throw ParseError(ctx + ": 'w' is not a matrix");
            const std::size_t rows = w.size();
            const std::size_t cols = w[0].size();
            DenseParams p;
            p.w = matrix_field(entry, "w", ctx, rows, cols);
            p.b = vector_field(entry, "b", ctx, rows);
            layer.params = std::move(p);
        } else if (kind == "factored") {
            const json& w1 = field(entry, "w1", ctx);
            const json& w2 = field(entry, "w2", ctx);
            if (!w1.is_array() || w1.empty() || !w1[0].is_array() || !w2.is_array() ||
                w2.empty() || !w2[0].is_array())
                throw ParseError(ctx + ": 'w1'/'w2' are not matrices");
            const std::size_t r = w1.size();
            const std::size_t n = w1[0].size();
            const std::size_t d = w2.size();
            FactoredLayer f;
            f.w1 = matrix_field(entry, "w1", ctx, r, n);
            f.w2 = matrix_field(entry, "w2", ctx, d, r);
            if (f.w2.cols() != r)
                throw ParseError(ctx + ": w2 has " + std::to_string(f.w2.cols()) +
                                 " columns, expected rank " + std::to_string(r));
            f.b_prime = vector_field(entry, "b_prime", ctx, d);
            f.rank = r;
            const json& prov = field(entry, "provenance", ctx);
            if (!prov.is_object()) throw ParseError(ctx + ": 'provenance' is not an object");
            f.provenance.method = string_field(prov, "method", ctx);
            f.provenance.eta = number_field(prov, "eta", ctx);
            f.provenance.keep_ratio = number_field(prov, "keep_ratio", ctx);
            f.provenance.note = string_field(prov, "note", ctx);
            layer.params = std::move(f);
        } else {
            throw ParseError(ctx + ": unknown layer kind '" + kind + "'");
        }
        model.layers.push_back(std::move(layer));
    }

    try {
        model.validate();
    } catch (const Error& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
    return model;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

namespace {

std::string csv_safe(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace

void write_report(const std::string& path, std::vector<ReportRow> rows) {
    if (rows.empty()) throw ConfigError("write_report: no rows");
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.method != b.method) return a.method < b.method;
        return a.keep_ratio > b.keep_ratio;
    });

    std::string out =
        "method,layer_scope,eta,keep_ratio,rank_per_layer,params_total,params_ratio,"
        "eval_loss,eval_metric,h_per_layer,notes\n";
    for (const auto& r : rows) {
        out += csv_safe(r.method) + ',' + csv_safe(r.layer_scope) + ',' +
               format_double(r.eta) + ',' + format_double(r.keep_ratio) + ',' +
               csv_safe(r.rank_per_layer) + ',' + std::to_string(r.params_total) + ',' +
               format_double(r.params_ratio) + ',' + format_double(r.eval_loss) + ',' +
               format_double(r.eval_metric) + ',' + csv_safe(r.h_per_layer) + ',' +
               csv_safe(r.notes) + '\n';
    }
    atomic_write(path, out);
}

void write_grad_diagnostic(const std::string& path, const std::vector<GradDiagRow>& rows) {
    if (rows.empty()) throw ConfigError("write_grad_diagnostic: no rows");
    std::string out = "layer,sorted_index,normalized_grad_magnitude\n";
    for (const auto& r : rows)
        out += csv_safe(r.layer) + ',' + std::to_string(r.sorted_index) + ',' +
               format_double(r.normalized_magnitude) + '\n';
    atomic_write(path, out);
}

}  // namespace impact
