#include "nct/error.hpp"
#include "nct/etf_terminus.hpp"
#include "nct/experiment.hpp"
#include "nct/metrics.hpp"
#include "nct/text_format.hpp"
#include "nct/theorem_oracle.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr const char* kVersion = "nctcil 1.0.0 (contract revision 1)";

// Exit codes: 0 success, 1 configuration or usage error, 2 invariant violation during a run.
constexpr int kExitConfig = 1;
constexpr int kExitInvariant = 2;

int report(const nct::Error& e, int code) {
    std::cerr << "ERROR " << nct::error_code_name(e.code()) << ": " << e.what() << '\n';
    return code;
}

nlohmann::ordered_json number_or_null(double x) {
    if (std::isnan(x)) return nullptr;
    return x;
}

std::vector<int> parse_counts(const std::string& csv) {
    std::vector<int> counts;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            counts.push_back(v);
        } catch (const std::exception&) {
            throw nct::Error(nct::ErrorCode::ConfigError, "bad count '" + item + "'");
        }
    }
    return counts;
}

int cmd_run(const std::string& config_path, const std::string& out, const std::optional<std::uint64_t>& seed,
            bool deterministic_flag) {
    nct::ExperimentConfig config;
    try {
        config = nct::load_config(config_path);
        if (seed) config.seed = *seed;
        if (deterministic_flag) config.deterministic = true;
        if (!out.empty()) config.output_dir = out;
        if (config.output_dir.empty()) {
            throw nct::Error(nct::ErrorCode::ConfigError, "no output directory (use --out)");
        }
        config.make_plan();
    } catch (const nct::Error& e) {
        return report(e, kExitConfig);
    }
    try {
        const auto result = nct::run_experiment(config, config.output_dir);
        std::cout << "A " << nct::format_double(result.average_accuracy) << " PD "
                  << nct::format_double(result.performance_drop) << '\n';
    } catch (const nct::Error& e) {
        return report(e, e.code() == nct::ErrorCode::ConfigError ? kExitConfig : kExitInvariant);
    }
    return 0;
}

int cmd_plan(const std::string& config_path, const std::optional<std::uint64_t>& seed) {
    try {
        auto config = nct::load_config(config_path);
        if (seed) config.seed = *seed;
        std::cout << config.make_plan().to_json() << '\n';
    } catch (const nct::Error& e) {
        return report(e, kExitConfig);
    }
    return 0;
}

int cmd_etf(int d, int k, const std::string& kind, std::uint64_t seed, bool verify) {
    try {
        const auto terminus = nct::build_terminus(d, k, nct::parse_frame_kind(kind), seed);
        if (verify) {
            const auto g = nct::verify_geometry(terminus, 1e-8);
            nlohmann::ordered_json j;
            j["max_norm_dev"] = g.max_norm_dev;
            j["max_offdiag_dev"] = g.max_offdiag_dev;
            j["colsum_norm"] = g.colsum_norm;
            j["pass"] = g.pass;
            std::cout << j.dump(2) << '\n';
            return g.pass ? 0 : kExitInvariant;
        }
        nct::write_terminus(std::cout, terminus);
    } catch (const nct::Error& e) {
        return report(e, kExitConfig);
    }
    return 0;
}

int cmd_oracle(int k, int d, const std::string& loss_text, const std::string& counts_csv, std::uint64_t seed,
               int sessions) {
    try {
        const auto loss = nct::parse_oracle_loss(loss_text);
        const auto counts = parse_counts(counts_csv);
        if (static_cast<int>(counts.size()) != k) {
            throw nct::Error(nct::ErrorCode::ConfigError,
                             "--counts needs " + std::to_string(k) + " entries, got " + std::to_string(counts.size()));
        }
        nct::OracleProblem problem{nct::build_terminus(d, k, nct::FrameKind::SimplexEtf, seed),
                                   nct::split_sessions(counts, sessions), loss, nct::derive_seed(seed, 1)};
        const auto solution = nct::solve(problem, nct::OracleOptions{});
        const double tol = loss == nct::OracleLoss::Misalignment ? 1e-4 : 1e-2;
        const auto r = nct::check_nc_terminus(solution.features, solution.labels, problem.terminus, tol);
        nlohmann::ordered_json j;
        j["loss"] = nct::oracle_loss_name(loss);
        j["residual_norm"] = r.residual_norm;
        j["residual_align"] = r.residual_align;
        j["residual_cross"] = r.residual_cross;
        j["converged"] = solution.converged;
        j["pass"] = r.pass;
        auto& blocks = j["sessions"] = nlohmann::ordered_json::array();
        for (const auto& b : solution.blocks) {
            blocks.push_back({{"iterations", b.iterations}, {"final_update", b.final_update}});
        }
        std::cout << j.dump(2) << '\n';
    } catch (const nct::Error& e) {
        return report(e, kExitConfig);
    }
    return 0;
}

int cmd_metrics(const std::string& dump_path, const std::string& terminus_path) {
    try {
        std::ifstream in(dump_path);
        if (!in) throw nct::Error(nct::ErrorCode::ConfigError, "cannot open " + dump_path);
        nct::Matrix features;
        std::vector<nct::ClassId> labels;
        nct::read_feature_dump(in, features, labels);

        std::vector<nct::ClassId> scope = labels;
        std::sort(scope.begin(), scope.end());
        scope.erase(std::unique(scope.begin(), scope.end()), scope.end());

        nlohmann::ordered_json j;
        j["samples"] = features.cols();
        j["classes"] = scope.size();
        if (!terminus_path.empty()) {
            std::ifstream tin(terminus_path);
            if (!tin) throw nct::Error(nct::ErrorCode::ConfigError, "cannot open " + terminus_path);
            const auto terminus = nct::read_terminus(tin);
            const auto d = nct::nc_diagnostics(features, labels, terminus.matrix(), scope);
            j["avg_cross_cos"] = number_or_null(d.avg_cross_cos);
            j["avg_self_cos"] = number_or_null(d.avg_self_cos);
            j["trace_ratio"] = number_or_null(d.trace_ratio);
        } else {
            j["trace_ratio"] = nct::trace_ratio(features, labels, scope);
        }
        std::cout << j.dump(2) << '\n';
    } catch (const nct::Error& e) {
        return report(e, kExitConfig);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Class-incremental learning with a fixed neural-collapse terminus"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
    auto* run = app.add_subcommand("run", "Train an incremental stream and write metrics");
    run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "Output directory");
    run->add_option("--seed", seed, "Override the root seed");
    run->add_flag("--deterministic", deterministic, "Force deterministic execution");

    auto* plan = app.add_subcommand("plan", "Print the session plan as JSON");
    plan->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
    plan->add_option("--seed", seed, "Override the root seed");

    int d = 0, k = 0;
    std::string kind = "etf";
    std::uint64_t etf_seed = 0;
    bool verify = false;
    auto* etf = app.add_subcommand("etf", "Build a terminus and print it");
    etf->add_option("--d", d, "Feature dimension")->required();
    etf->add_option("--K", k, "Number of prototypes")->required();
    etf->add_option("--kind", kind, "etf or orthogonal");
    etf->add_option("--seed", etf_seed, "Seed");
    etf->add_flag("--verify", verify, "Print the geometry report instead");

    std::string loss = "align", counts;
    int sessions = 1;
    auto* oracle = app.add_subcommand("oracle", "Solve the constrained feature problem and report residuals");
    oracle->add_option("--K", k, "Number of classes")->required();
    oracle->add_option("--d", d, "Feature dimension")->required();
    oracle->add_option("--loss", loss, "ce or align");
    oracle->add_option("--counts", counts, "Comma-separated per-class sample counts")->required();
    oracle->add_option("--seed", etf_seed, "Seed");
    oracle->add_option("--sessions", sessions, "Number of sessions the classes are split across");

    std::string dump_path, terminus_path;
    auto* metrics = app.add_subcommand("metrics", "Recompute diagnostics from a feature dump");
    metrics->add_option("--dump", dump_path, "Feature dump")->required()->check(CLI::ExistingFile);
    metrics->add_option("--terminus", terminus_path, "Terminus file")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "ERROR " << nct::error_code_name(nct::ErrorCode::ConfigError) << ": " << e.what() << '\n';
        std::cerr << app.help();
        return kExitConfig;
    }

    if (*run) return cmd_run(config_path, out_dir, seed, deterministic);
    if (*plan) return cmd_plan(config_path, seed);
    if (*etf) return cmd_etf(d, k, kind, etf_seed, verify);
    if (*oracle) return cmd_oracle(k, d, loss, counts, etf_seed, sessions);
    if (*metrics) return cmd_metrics(dump_path, terminus_path);
    return kExitConfig;
}
