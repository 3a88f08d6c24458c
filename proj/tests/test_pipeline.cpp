#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "impact/pipeline.hpp"
#include "impact/rng.hpp"
#include "oracles.hpp"

using namespace impact;
using pipeline::Method;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    static const auto dir = [] {
        auto d = std::filesystem::temp_directory_path() / "impact_pipeline_tests";
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir / name;
}

struct TrainedFixture {
    ToyModel model;
    Dataset train_data;
    Dataset heldout;
    StatsFile stats;
};

const TrainedFixture& fixture() {
    static const TrainedFixture fix = [] {
        TrainedFixture f;
        f.train_data = make_dataset(DatasetKind::Hetero, 250, 901);
        f.heldout = make_dataset(DatasetKind::Hetero, 250, 902);
        f.model = make_mlp({16, 32, 16, 8}, LossKind::Mse, 903);
        train(f.model, f.train_data, 25, 0.02, 904);
        f.stats = pipeline::profile_model(f.model, f.train_data);
        return f;
    }();
    return fix;
}

}  // namespace

TEST_CASE("glob matching") {
    CHECK(pipeline::glob_match("*", "anything"));
    CHECK(pipeline::glob_match("fc*", "fc12"));
    CHECK(pipeline::glob_match("fc?", "fc1"));
    CHECK_FALSE(pipeline::glob_match("fc?", "fc12"));
    CHECK_FALSE(pipeline::glob_match("fc*", "dense0"));
    CHECK(pipeline::glob_match("*2", "fc2"));
    CHECK(pipeline::glob_match("f*c*2", "fc2"));
    CHECK_FALSE(pipeline::glob_match("", "x"));
    CHECK(pipeline::glob_match("", ""));
}

TEST_CASE("profiling counts one sample per dataset example") {
    const auto& fix = fixture();
    for (const auto& layer : fix.stats.layers)
        CHECK(layer.prof.n == fix.train_data.inputs.size());
}

TEST_CASE("full-energy uniform compression keeps the model function") {
    // keep_ratio = 100 with eta = 1 reproduces every activation the profiler
    // saw; the model function on the training support is unchanged.
    const auto& fix = fixture();
    ImpactConfig cfg;
    cfg.eta = 1.0;
    cfg.keep_ratio = 100.0;
    cfg.replace_only_if_smaller = false;
    const auto result =
        pipeline::compress_model(fix.model, fix.stats, Method::Impact, cfg, "*");
    const double before = evaluate(fix.model, fix.train_data).loss;
    const double after = evaluate(result.model, fix.train_data).loss;
    CHECK(after == doctest::Approx(before).epsilon(1e-8));
}

TEST_CASE("layer filters restrict compression") {
    const auto& fix = fixture();
    ImpactConfig cfg;
    cfg.eta = 0.5;
    cfg.keep_ratio = 60.0;
    const auto result =
        pipeline::compress_model(fix.model, fix.stats, Method::Impact, cfg, "fc1");
    CHECK(result.layers.size() == 1);
    CHECK(result.layers[0].name == "fc1");
    CHECK(result.model.layers[0].is_dense());
    CHECK_FALSE(result.model.layers[1].is_dense());
    CHECK(result.model.layers[2].is_dense());
}

TEST_CASE("compress fails cleanly when statistics are missing") {
    const auto& fix = fixture();
    StatsFile partial;
    partial.layers.push_back(fix.stats.layers[0]);
    ImpactConfig cfg;
    CHECK_THROWS_AS(
        pipeline::compress_model(fix.model, partial, Method::Impact, cfg, "*"), ConfigError);
}

TEST_CASE("parallel compression matches serial bit for bit") {
    const auto& fix = fixture();
    ImpactConfig cfg;
    cfg.eta = 0.5;
    cfg.keep_ratio = 70.0;
    const auto serial =
        pipeline::compress_model(fix.model, fix.stats, Method::Impact, cfg, "*", false);
    const auto parallel =
        pipeline::compress_model(fix.model, fix.stats, Method::Impact, cfg, "*", true);
    REQUIRE(serial.model.layers.size() == parallel.model.layers.size());
    for (std::size_t l = 0; l < serial.model.layers.size(); ++l) {
        if (serial.model.layers[l].is_dense()) {
            CHECK(parallel.model.layers[l].is_dense());
            continue;
        }
        const auto& a = std::get<FactoredLayer>(serial.model.layers[l].params);
        const auto& b = std::get<FactoredLayer>(parallel.model.layers[l].params);
        CHECK(a.w1 == b.w1);
        CHECK(a.w2 == b.w2);
        CHECK(a.b_prime == b.b_prime);
    }
}

TEST_CASE("baselines run at impact's matched rank") {
    const auto& fix = fixture();
    ImpactConfig cfg;
    cfg.eta = 0.5;
    cfg.keep_ratio = 70.0;
    const auto impact_result =
        pipeline::compress_model(fix.model, fix.stats, Method::Impact, cfg, "*");
    for (Method m : {Method::Svd, Method::Fwsvd, Method::Afm}) {
        const auto other = pipeline::compress_model(fix.model, fix.stats, m, cfg, "*");
        REQUIRE(other.layers.size() == impact_result.layers.size());
        for (std::size_t i = 0; i < other.layers.size(); ++i) {
            CHECK(other.layers[i].rank == impact_result.layers[i].rank);
            CHECK(other.layers[i].params_after == impact_result.layers[i].params_after);
        }
    }
}

TEST_CASE("sweep emits one row per method and keep ratio") {
    const auto& fix = fixture();
    pipeline::SweepOptions opts;
    opts.keep_ratios = {90.0, 70.0, 50.0};
    opts.eta = 0.5;
    const auto rows = pipeline::sweep(fix.model, fix.stats, fix.heldout, opts);
    CHECK(rows.size() == 12);
    for (const auto& row : rows) {
        CHECK(row.params_total > 0);
        CHECK(row.params_ratio <= 1.0);
        CHECK(std::isfinite(row.eval_loss));
    }
    const auto path = temp_path("sweep.csv");
    write_report(path.string(), rows);
}

TEST_CASE("file-mediated pipeline equals the in-process path") {
    const auto& fix = fixture();

    // In-process: compress directly.
    ImpactConfig cfg;
    cfg.eta = 0.5;
    cfg.keep_ratio = 70.0;
    const auto direct =
        pipeline::compress_model(fix.model, fix.stats, Method::Impact, cfg, "*");

    // File-mediated: model and stats take a round trip through disk first.
    const auto model_path = temp_path("composed_model.json");
    const auto stats_path = temp_path("composed_stats.json");
    write_model(model_path.string(), fix.model);
    write_stats(stats_path.string(), fix.stats);
    const ToyModel model2 = read_model(model_path.string());
    const StatsFile stats2 = read_stats(stats_path.string());
    const auto mediated = pipeline::compress_model(model2, stats2, Method::Impact, cfg, "*");

    const auto out_a = temp_path("composed_out_a.json");
    const auto out_b = temp_path("composed_out_b.json");
    write_model(out_a.string(), direct.model);
    write_model(out_b.string(), mediated.model);
    std::ifstream fa(out_a, std::ios::binary), fb(out_b, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(fa)), {});
    const std::string bb((std::istreambuf_iterator<char>(fb)), {});
    CHECK(ba == bb);
}
