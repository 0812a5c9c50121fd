// lurk command line: simulate the study generators, fit a data file, or run
// the benchmark suites. All outputs are plot-ready tables; all commands are
// bit-reproducible for a fixed --seed.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "lurk/lurk.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNotConverged = 2;
constexpr int kExitBenchmarkFailures = 3;

struct SimulateArgs {
    std::string suite = "toy";
    int replicates = 2;
    int levels = 50;
    bool randomize = true;
    double noise_sd = 0.01;
    double shock_magnitude = 0.5;
    double trend_slope = 2.0;
    std::uint64_t seed = 0;
    std::string yield_table;
    std::string out_dir;
};

int run_simulate(const SimulateArgs& args) {
    lurk::Dataset data;
    lurk::GroundTruth truth;
    if (args.suite == "toy") {
        lurk::ToySpec spec;
        spec.levels = args.levels;
        spec.replicates = args.replicates;
        spec.randomize = args.randomize;
        spec.noise_sd = args.noise_sd;
        spec.shock_magnitude = args.shock_magnitude;
        spec.trend_slope = args.trend_slope;
        spec.seed = args.seed;
        spec.shock_indices = lurk::ToySpec::scaled_shock_indices(spec.n());
        std::tie(data, truth) = lurk::gen_toy(spec);
    } else {
        lurk::DegradationSpec spec;
        spec.levels = args.levels;
        spec.replicates = args.replicates;
        spec.seed = args.seed;
        if (!args.yield_table.empty()) {
            const auto table = lurk::io::parse_data_csv(lurk::io::read_text(args.yield_table),
                                                        "yield table");
            std::vector<std::pair<double, double>> rows;
            for (lurk::Index i = 0; i < table.y.size(); ++i)
                rows.emplace_back(table.t[i], table.y[i]);
            spec.yield_fn = lurk::tabulated_yield_fn(std::move(rows));
        }
        std::tie(data, truth) = lurk::gen_degradation_study(spec);
    }
    fs::create_directories(args.out_dir);
    lurk::io::write_text(fs::path(args.out_dir) / "data.csv",
                         lurk::io::to_data_csv(lurk::io::raw_table(data)));
    lurk::io::write_text(fs::path(args.out_dir) / "truth.json",
                         lurk::io::truth_to_json(truth).dump(2) + "\n");
    std::cout << "wrote " << data.n() << " rows to " << args.out_dir << "/data.csv\n";
    return kExitOk;
}

struct FitArgs {
    std::string data_file;
    std::string config_file;
    std::uint64_t seed = 0;
    bool seed_given = false;
    double pred_t = 0.5;
    std::string out_dir;
};

int run_fit(const FitArgs& args) {
    lurk::FitConfig config;
    if (!args.config_file.empty())
        config = lurk::io::parse_config(lurk::io::read_text(args.config_file),
                                        args.config_file);
    if (args.seed_given) config.seed = args.seed;

    const lurk::io::DataTable table =
        lurk::io::parse_data_csv(lurk::io::read_text(args.data_file), args.data_file);
    const lurk::Dataset data(table.X, table.t, table.y);
    const lurk::FitResult fit = lurk::fit(data, config);

    lurk::io::write_result_bundle(args.out_dir, fit, args.pred_t);
    const auto effects = lurk::sudden_series(fit);
    std::cout << "fit " << (fit.converged ? "converged" : "DID NOT CONVERGE") << " after "
              << fit.iterations << " outer iterations\n"
              << "  mu=" << fit.hyper.mu << " tau2=" << fit.hyper.tau2
              << " sigma2=" << fit.hyper.sigma2 << " eta=" << fit.hyper.eta
              << " lambda=" << fit.hyper.lambda << "\n"
              << "  change points: " << effects.change_points.size() << "\n"
              << "  bundle written to " << args.out_dir << "\n";
    return fit.converged ? kExitOk : kExitNotConverged;
}

struct BenchmarkArgs {
    std::string suite = "replication";
    int repeats = 30;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out_dir;
};

int run_benchmark(const BenchmarkArgs& args) {
    const lurk::BenchmarkSuite suite = args.suite == "replication"
                                           ? lurk::BenchmarkSuite::replication
                                           : lurk::BenchmarkSuite::randomization;
    const lurk::BenchmarkTable table =
        lurk::benchmark(suite, args.repeats, args.seed, {}, args.threads);
    fs::create_directories(args.out_dir);
    lurk::io::write_text(fs::path(args.out_dir) / "mse.csv", lurk::io::to_mse_csv(table));

    std::cout << "suite=" << args.suite << " repeats=" << args.repeats << "\n";
    std::cout << "config,median_mse_sudden,median_mse_gradual,median_mse_prediction\n";
    for (const std::string& cfg : table.configs) {
        std::cout << cfg << "," << lurk::benchmark_median(table, cfg, &lurk::BenchmarkRow::mse_sudden)
                  << "," << lurk::benchmark_median(table, cfg, &lurk::BenchmarkRow::mse_gradual)
                  << ","
                  << lurk::benchmark_median(table, cfg, &lurk::BenchmarkRow::mse_prediction)
                  << "\n";
    }
    return table.has_failures() ? kExitBenchmarkFailures : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lurk: discover gradual and sudden effects of unrecorded variables"};
    app.require_subcommand(1);

    SimulateArgs sim;
    CLI::App* simulate = app.add_subcommand("simulate", "generate a study dataset");
    simulate->add_option("--suite", sim.suite)->check(CLI::IsMember({"toy", "degradation"}));
    simulate->add_option("--replicates", sim.replicates);
    simulate->add_option("--levels", sim.levels);
    simulate->add_flag("--randomize,!--no-randomize", sim.randomize,
                       "shuffle the run order (toy suite)");
    simulate->add_option("--noise-sd", sim.noise_sd);
    simulate->add_option("--shock-magnitude", sim.shock_magnitude);
    simulate->add_option("--trend-slope", sim.trend_slope);
    simulate->add_option("--seed", sim.seed);
    simulate->add_option("--yield-table", sim.yield_table,
                         "two-column CSV (t=energy, y=yield) replacing the synthetic curve");
    simulate->add_option("--out", sim.out_dir)->required();

    FitArgs fit_args;
    CLI::App* fit_cmd = app.add_subcommand("fit", "fit a data file and write the result bundle");
    fit_cmd->add_option("--data", fit_args.data_file)->required();
    fit_cmd->add_option("--config", fit_args.config_file);
    auto* seed_opt = fit_cmd->add_option("--seed", fit_args.seed);
    fit_cmd->add_option("--pred-t", fit_args.pred_t, "scaled time of the prediction slice");
    fit_cmd->add_option("--out", fit_args.out_dir)->required();

    BenchmarkArgs bench;
    CLI::App* bench_cmd = app.add_subcommand("benchmark", "run a simulation study suite");
    bench_cmd->add_option("--suite", bench.suite)
        ->check(CLI::IsMember({"replication", "randomization"}));
    bench_cmd->add_option("--repeats", bench.repeats);
    bench_cmd->add_option("--seed", bench.seed);
    bench_cmd->add_option("--threads", bench.threads);
    bench_cmd->add_option("--out", bench.out_dir)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (simulate->parsed()) return run_simulate(sim);
        if (fit_cmd->parsed()) {
            fit_args.seed_given = seed_opt->count() > 0;
            return run_fit(fit_args);
        }
        return run_benchmark(bench);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}
