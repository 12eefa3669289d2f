// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero if
// any criterion fails.

#include "nct/error.hpp"
#include "nct/etf_terminus.hpp"
#include "nct/experiment.hpp"
#include "nct/losses.hpp"
#include "nct/metrics.hpp"
#include "nct/mlp.hpp"
#include "nct/theorem_oracle.hpp"
#include "nct/trainer.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unistd.h>
#include <string>

using namespace nct;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

// Shared CIL stream: 10 base classes then 5 sessions of 2. Overlapping classes
// (sigma 1.5) and a small rehearsal budget, 4 exemplars per 100 training samples.
ExperimentConfig cil_stream(std::uint64_t seed) {
    ExperimentConfig c;
    c.seed = seed;
    c.task.input_dim = 16;
    c.task.num_classes = 20;
    c.task.radius = 4.0;
    c.task.sigma = 1.5;
    c.task.train_per_class = 100;
    c.task.test_per_class = 50;
    c.plan.base_classes = 10;
    c.plan.steps = 5;
    c.plan.per_step = 2;
    c.trainer.regime = Regime::Cil;
    c.trainer.exemplars_per_class = 4;
    return c;
}

ExperimentConfig fixed_ftc(ExperimentConfig c) {
    c.trainer.classifier = ClassifierKind::FixedTerminus;
    c.trainer.loss = LossKind::Misalignment;
    c.trainer.schedule = PrototypeSchedule::FlyToCollapse;
    return c;
}

ExperimentConfig fixed_nct(ExperimentConfig c) {
    c = fixed_ftc(c);
    c.trainer.schedule = PrototypeSchedule::NctOnly;
    return c;
}

ExperimentConfig learnable_ce(ExperimentConfig c) {
    c.trainer.classifier = ClassifierKind::Learnable;
    c.trainer.loss = LossKind::CrossEntropy;
    return c;
}

RunReport run_config(const ExperimentConfig& c,
                     const IncrementalLearner::SessionObserver& observer = {}) {
    IncrementalLearner learner(c.resolved_trainer(), c.make_plan(), c.resolved_task());
    return learner.run(observer);
}

// 1 -------------------------------------------------------------------------
Outcome etf_geometry() {
    Outcome o{true, ""};
    const std::pair<int, int> shapes[] = {{3, 3}, {8, 8}, {32, 20}, {101, 101}};
    for (auto [d, k] : shapes) {
        const auto t = build_terminus(d, k, FrameKind::SimplexEtf, 1);
        const auto g = verify_geometry(t, 1e-8);
        // Independent recheck of the pairwise cosine.
        const Matrix gram = t.matrix().transpose() * t.matrix();
        double worst = 0.0;
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                worst = std::max(worst, std::abs(gram(i, j) - (i == j ? 1.0 : -1.0 / (k - 1))));
        const bool ok = g.pass && worst <= 1e-8;
        o.pass = o.pass && ok;
        o.detail += "(" + std::to_string(d) + "," + std::to_string(k) + ") gram_dev=" + fmt(worst, 2) + " ";
    }
    return o;
}

// 2 -------------------------------------------------------------------------
Outcome gradient_suite() {
    Rng rng(2024);
    std::uniform_int_distribution<int> pick_dim(0, 2);
    const Eigen::Index dims[] = {4, 16, 64};
    double worst_align = 0.0, worst_distill = 0.0, worst_ce = 0.0;
    for (int i = 0; i < 100; ++i) {
        const Eigen::Index d = dims[pick_dim(rng)];
        const Vector mu = testing::random_vector(d, rng);
        const Vector w = testing::random_vector(d, rng).normalized();
        const Vector prev = testing::random_vector(d, rng);
        const auto a = misalignment_loss(mu, w);
        const Vector na = testing::numeric_gradient(
            [&](const Vector& x) {
                const double c = x.normalized().dot(w);
                return 0.5 * (c - 1.0) * (c - 1.0);
            },
            mu);
        worst_align = std::max(worst_align, testing::relative_error(a.grad, na));
        const auto dl = distillation_loss(mu, prev);
        const Vector nd = testing::numeric_gradient(
            [&](const Vector& x) {
                const double c = x.normalized().dot(prev.normalized());
                return 0.5 * (c - 1.0) * (c - 1.0);
            },
            mu);
        worst_distill = std::max(worst_distill, testing::relative_error(dl.grad, nd));
    }
    // CE over a fixed terminus, with a reference written out from the softmax definition.
    for (int i = 0; i < 100; ++i) {
        const Eigen::Index d = dims[pick_dim(rng)];
        const int k = static_cast<int>(std::min<Eigen::Index>(d, 8));
        const auto t = build_terminus(d, k, FrameKind::SimplexEtf, static_cast<std::uint64_t>(i));
        std::vector<ClassId> active;
        for (int c = 0; c < k; ++c) active.push_back(c);
        const ClassId label = i % k;
        const double scale = 1.0 + (i % 5) * 4.0;
        const Vector mu = testing::random_vector(d, rng);
        const auto ce = cross_entropy_fixed(mu, t, active, label, scale);
        const Vector nc = testing::numeric_gradient(
            [&](const Vector& x) {
                const Vector u = x.normalized();
                double zmax = -1e300;
                std::vector<double> z;
                for (ClassId c : active) {
                    z.push_back(scale * t.matrix().col(c).dot(u));
                    zmax = std::max(zmax, z.back());
                }
                double sum = 0.0;
                for (double v : z) sum += std::exp(v - zmax);
                return -(z[static_cast<std::size_t>(label)] - zmax) + std::log(sum);
            },
            mu);
        worst_ce = std::max(worst_ce, testing::relative_error(ce.grad, nc));
    }

    // End to end: misalignment loss through a 16-32-32-d backbone.
    const Eigen::Index d = 8;
    Mlp net = Mlp::random({16, 32, 32, d}, 77);
    const Matrix x = testing::random_matrix(16, 4, rng);
    const Vector w = build_terminus(d, 4, FrameKind::SimplexEtf, 5).prototype(2);
    auto total_loss = [&](const Mlp& m) {
        const Matrix out = m.forward(x);
        double s = 0.0;
        for (Eigen::Index i = 0; i < out.cols(); ++i) {
            const double c = out.col(i).normalized().dot(w);
            s += 0.5 * (c - 1.0) * (c - 1.0);
        }
        return s;
    };
    ForwardCache cache;
    const Matrix out = net.forward(x, cache);
    Matrix grad_out(out.rows(), out.cols());
    for (Eigen::Index i = 0; i < out.cols(); ++i) grad_out.col(i) = misalignment_loss(out.col(i), w).grad;
    ParameterGrads grads;
    net.backward(cache, grad_out, grads);
    double worst_net = 0.0;
    std::uniform_int_distribution<int> pick_layer(0, static_cast<int>(net.layers().size()) - 1);
    for (int s = 0; s < 20; ++s) {
        const auto li = static_cast<std::size_t>(pick_layer(rng));
        const auto& layer = net.layers()[li];
        const bool bias = s % 4 == 3;
        std::uniform_int_distribution<Eigen::Index> pr(0, layer.weight.rows() - 1);
        std::uniform_int_distribution<Eigen::Index> pc(0, layer.weight.cols() - 1);
        const Eigen::Index r = pr(rng), c = pc(rng);
        double& param = bias ? net.mutable_layer(li).bias(r) : net.mutable_layer(li).weight(r, c);
        const double keep = param;
        param = keep + 1e-5;
        const double up = total_loss(net);
        param = keep - 1e-5;
        const double down = total_loss(net);
        param = keep;
        const double numeric = (up - down) / 2e-5;
        const double analytic = bias ? grads.bias[li](r) : grads.weight[li](r, c);
        worst_net = std::max(worst_net, testing::relative_error(analytic, numeric, 1e-6));
    }
    const bool pass = worst_align < 1e-4 && worst_distill < 1e-4 && worst_ce < 1e-4 && worst_net < 1e-3;
    return {pass, "align=" + fmt(worst_align, 2) + " distill=" + fmt(worst_distill, 2) +
                      " ce=" + fmt(worst_ce, 2) + " backbone=" + fmt(worst_net, 2)};
}

// 3 -------------------------------------------------------------------------
Outcome oracle_witness() {
    const int k = 10, d = 12, sessions = 3;
    const std::vector<std::pair<std::string, std::vector<int>>> regimes{
        {"balanced", std::vector<int>(k, 20)},
        {"longtail", long_tail_counts(k, 50, 0.02)},
        {"fewshot", std::vector<int>(k, 5)}};
    Outcome o{true, ""};
    for (OracleLoss loss : {OracleLoss::Misalignment, OracleLoss::CrossEntropy}) {
        const double tol = loss == OracleLoss::Misalignment ? 1e-4 : 1e-2;
        std::vector<TerminusResiduals> res;
        bool converged = true;
        for (const auto& [name, counts] : regimes) {
            OracleProblem p{build_terminus(d, k, FrameKind::SimplexEtf, 3), split_sessions(counts, sessions), loss, 9};
            const auto sol = solve(p, OracleOptions{});
            converged = converged && sol.converged;
            res.push_back(check_nc_terminus(sol.features, sol.labels, p.terminus, tol));
        }
        double worst = 0.0, spread = 0.0;
        for (const auto& r : res) {
            worst = std::max({worst, r.residual_align, r.residual_cross});
            for (const auto& q : res) {
                spread = std::max({spread, std::abs(r.residual_align - q.residual_align),
                                   std::abs(r.residual_cross - q.residual_cross)});
            }
        }
        const bool ok = converged && worst <= tol && spread < 1e-3;
        o.pass = o.pass && ok;
        o.detail += std::string(oracle_loss_name(loss)) + ": max_residual=" + fmt(worst, 2) +
                    " spread=" + fmt(spread, 2) + " ";
    }
    return o;
}

// 4 -------------------------------------------------------------------------
Outcome cil_ordering() {
    double a_ftc = 0.0, a_nct = 0.0, a_learn = 0.0;
    bool pd_ok = true;
    std::string pds;
    for (auto seed : kSeeds) {
        const auto ftc = run_config(fixed_ftc(cil_stream(seed)));
        const auto nct = run_config(fixed_nct(cil_stream(seed)));
        const auto learn = run_config(learnable_ce(cil_stream(seed)));
        a_ftc += ftc.average_accuracy / kSeeds.size();
        a_nct += nct.average_accuracy / kSeeds.size();
        a_learn += learn.average_accuracy / kSeeds.size();
        pd_ok = pd_ok && ftc.performance_drop < learn.performance_drop;
        pds += fmt(ftc.performance_drop, 3) + "<" + fmt(learn.performance_drop, 3) + " ";
    }
    const bool pass = a_ftc >= a_nct && a_nct >= a_learn && pd_ok;
    return {pass, "A ftc=" + fmt(a_ftc) + " nct=" + fmt(a_nct) + " learnable=" + fmt(a_learn) +
                      " PD(ftc<learnable) " + pds};
}

// 5 -------------------------------------------------------------------------
Outcome ltcil() {
    int wins = 0;
    std::string detail;
    for (auto seed : kSeeds) {
        auto base = cil_stream(seed);
        base.trainer.regime = Regime::Ltcil;
        base.plan.rho = 0.05;
        base.plan.n_max = 100;
        base.plan.order = LongTailOrder::Ordered;
        const auto ours = run_config(fixed_ftc(base));
        const auto learn = run_config(learnable_ce(base));
        if (ours.average_accuracy > learn.average_accuracy) ++wins;
        detail += fmt(ours.average_accuracy) + "/" + fmt(learn.average_accuracy) + " ";
    }
    return {wins == 3, "A ours/learnable " + detail + "wins=" + std::to_string(wins) + "/3"};
}

// 6 -------------------------------------------------------------------------
ExperimentConfig fscil_stream(std::uint64_t seed) {
    ExperimentConfig c = cil_stream(seed);
    c.task.num_classes = 18;
    c.trainer.regime = Regime::Fscil;
    c.plan.base_classes = 10;
    c.plan.steps = 4;
    c.plan.per_step = 2;
    c.plan.shots = 5;
    // Few-shot sessions get many passes over very little data.
    c.trainer.incremental_epochs = 100;
    return c;
}

Outcome fscil() {
    bool frozen_ok = true, memory_ok = true;
    int wins = 0;
    std::string detail;
    for (auto seed : kSeeds) {
        const auto c = fixed_nct(fscil_stream(seed));
        Rng rng(derive_seed(seed, 99));
        const Matrix probe = testing::random_matrix(c.task.input_dim, 16, rng, c.task.radius);
        Matrix reference;
        const SessionPlan plan = c.make_plan();
        auto observer = [&](const IncrementalLearner& l, const SessionOutcome& s) {
            const Matrix h = l.backbone_features(probe);
            if (s.t == 0) {
                reference = h;
            } else {
                frozen_ok = frozen_ok && h.size() == reference.size() &&
                            std::memcmp(h.data(), reference.data(), sizeof(double) * h.size()) == 0;
            }
            // After session t closes, memory holds every class of sessions 0..t.
            memory_ok = memory_ok && l.feature_means().size() == plan.classes_through(s.t).size();
        };
        const auto ours = run_config(c, observer);
        const auto learn = run_config(learnable_ce(fscil_stream(seed)));
        const double a = ours.sessions.back().accuracy, b = learn.sessions.back().accuracy;
        if (a > b) ++wins;
        detail += fmt(a) + "/" + fmt(b) + " ";
    }
    return {frozen_ok && memory_ok && wins == 3,
            std::string("probe_bitwise=") + (frozen_ok ? "ok" : "changed") +
                " memory_sizes=" + (memory_ok ? "ok" : "wrong") + " final A ours/learnable " + detail};
}

// 7 -------------------------------------------------------------------------
Outcome oversized_terminus() {
    double worst = 0.0;
    std::string detail;
    for (auto seed : kSeeds) {
        auto exact = fixed_ftc(cil_stream(seed));
        exact.trainer.feature_dim = 100;
        auto wide = exact;
        wide.trainer.terminus_size = 100;
        const double a = run_config(exact).average_accuracy;
        const double b = run_config(wide).average_accuracy;
        worst = std::max(worst, std::abs(a - b));
        detail += fmt(b) + "/" + fmt(a) + " ";
    }
    return {worst <= 0.05, "A K100/K20 " + detail + "max_gap=" + fmt(worst, 3)};
}

// 8 -------------------------------------------------------------------------
Outcome gcil() {
    ExperimentConfig c = fixed_ftc(cil_stream(1));
    c.trainer.regime = Regime::Gcil;
    c.task.num_classes = 30;
    c.plan.base_classes = 10;
    c.plan.steps = 10;
    c.plan.per_step = 2;
    c.plan.shots = 5;
    c.plan.rho = 0.05;
    c.trainer.incremental_epochs = 100;
    try {
        const SessionPlan plan = c.make_plan();
        std::string modes;
        for (const auto& s : plan.sessions) modes += std::string(session_mode_name(s.mode)).substr(0, 2) + " ";
        const auto report = run_config(c);
        const double chance = 1.0 / static_cast<double>(plan.total_classes());
        const double last = report.sessions.back().accuracy;
        return {last >= 5.0 * chance, "modes " + modes + "final=" + fmt(last) + " threshold=" + fmt(5.0 * chance)};
    } catch (const Error& e) {
        return {false, std::string("ERROR ") + std::string(error_code_name(e.code())) + ": " + e.what()};
    }
}

// 9 -------------------------------------------------------------------------
Outcome diagnostics_oracle() {
    Rng rng(9);
    double worst = 0.0;
    for (int f = 0; f < 20; ++f) {
        const int k = 2 + f % 9;
        const Eigen::Index d = 3 + f % 7;
        std::vector<ClassId> y;
        for (int c = 0; c < k; ++c)
            for (int i = 0; i < 1 + (f + c) % 50; ++i) y.push_back(c);
        const Matrix x = testing::random_matrix(d, static_cast<Eigen::Index>(y.size()), rng);
        const Matrix w = testing::random_matrix(d, k, rng);
        std::vector<ClassId> scope;
        for (int c = 0; c < k; ++c) scope.push_back(c);
        worst = std::max({worst, std::abs(nc_cross_cos(x, y, w, scope) - testing::brute_cross_cos(x, y, w, scope)),
                          std::abs(nc_self_cos(x, y, w, scope) - testing::brute_self_cos(x, y, w, scope)),
                          std::abs(trace_ratio(x, y, scope) - testing::brute_trace_ratio(x, y, scope))});
    }
    const int k = 6;
    const auto t = build_terminus(8, k, FrameKind::SimplexEtf, 4);
    Matrix x(8, 3 * k);
    std::vector<ClassId> y, scope;
    for (int c = 0; c < k; ++c) {
        scope.push_back(c);
        for (int i = 0; i < 3; ++i) {
            x.col(3 * c + i) = t.prototype(c);
            y.push_back(c);
        }
    }
    const double cross = nc_cross_cos(x, y, t.matrix(), scope);
    const double self = nc_self_cos(x, y, t.matrix(), scope);
    const double tr = trace_ratio(x, y, scope);
    const bool vertex_ok = std::abs(cross + 1.0 / (k - 1)) <= 1e-9 && std::abs(self - 1.0) <= 1e-9 &&
                           std::abs(tr) <= 1e-9;
    return {worst <= 1e-12 && vertex_ok,
            "max_dev=" + fmt(worst, 2) + " vertex cross=" + fmt(cross, 10) + " self=" + fmt(self, 10) +
                " trace=" + fmt(tr, 2)};
}

// 10 ------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome reproducibility() {
    const fs::path root = fs::temp_directory_path() / ("nct_accept_" + std::to_string(::getpid()));
    std::vector<ExperimentConfig> configs{fixed_ftc(cil_stream(5)), learnable_ce(fscil_stream(5))};
    configs[0].trainer.incremental_epochs = 10;
    int files = 0;
    bool same = true;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const fs::path a = root / ("a" + std::to_string(i)), b = root / ("b" + std::to_string(i));
        run_experiment(configs[i], a);
        run_experiment(configs[i], b);
        for (const auto& entry : fs::directory_iterator(a)) {
            const fs::path other = b / entry.path().filename();
            same = same && fs::exists(other) && slurp(entry.path()) == slurp(other);
            ++files;
        }
    }
    fs::remove_all(root);
    return {same && files >= 10, std::to_string(files) + " files compared"};
}

struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    Outcome (*check)();
};

}  // namespace

int main() {
    const Criterion criteria[] = {
        {1, "etf_geometry", 1.0, etf_geometry},
        {2, "gradient_suite", 30.0, gradient_suite},
        {3, "oracle_terminus_witness", 120.0, oracle_witness},
        {4, "cil_directional_ordering", 300.0, cil_ordering},
        {5, "ltcil_unmodified", 300.0, ltcil},
        {6, "fscil_contracts", 300.0, fscil},
        {7, "oversized_terminus", 300.0, oversized_terminus},
        {8, "gcil_end_to_end", 300.0, gcil},
        {9, "nc_diagnostics_oracle", 60.0, diagnostics_oracle},
        {10, "reproducibility", 300.0, reproducibility},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs < c.limit_seconds;
        const bool pass = o.pass && in_time;
        if (!pass) ++failed;
        std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << ": " << o.detail
                  << " [" << fmt(secs, 3) << "s, limit " << fmt(c.limit_seconds, 3) << "s"
                  << (in_time ? "" : ", over time") << "]" << std::endl;
    }
    std::cout << (failed == 0 ? "ALL CRITERIA PASS" : std::to_string(failed) + " CRITERIA FAILED") << std::endl;
    return failed == 0 ? 0 : 1;
}
