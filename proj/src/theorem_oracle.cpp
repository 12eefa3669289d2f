#include "nct/theorem_oracle.hpp"

#include "nct/error.hpp"
#include "nct/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace nct {

namespace {

constexpr double kInitRadius = 0.1;
constexpr double kMaxStep = 1e12;
constexpr int kMaxHalvings = 80;

// Per-sample loss gradients (columns) for a block.
Matrix sample_gradients(const Matrix& m, std::span<const ClassId> labels, const Matrix& w,
                        OracleLoss loss) {
    Matrix grads(m.rows(), m.cols());
    if (loss == OracleLoss::Misalignment) {
        for (Eigen::Index i = 0; i < m.cols(); ++i) {
            const auto proto = w.col(labels[static_cast<std::size_t>(i)]);
            grads.col(i) = (proto.dot(m.col(i)) - 1.0) * proto;
        }
        return grads;
    }
    const Matrix logits = w.transpose() * m;
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
        const LossValueAndGrad ce = softmax_cross_entropy(logits.col(i), labels[static_cast<std::size_t>(i)]);
        grads.col(i) = w * ce.grad;
    }
    return grads;
}

void project_to_ball(Matrix& m) {
    for (Eigen::Index i = 0; i < m.cols(); ++i) {
        const double n = m.col(i).norm();
        if (n > 1.0) m.col(i) /= n;
    }
}

// Objective of a block made of several sessions: sum of per-session means.
struct Block {
    std::vector<Eigen::Index> columns;
    std::vector<std::vector<Eigen::Index>> session_columns;
};

double block_objective(const Matrix& all, const std::vector<ClassId>& labels, const Block& block,
                       const EtfTerminus& terminus, OracleLoss loss) {
    double total = 0.0;
    for (const auto& cols : block.session_columns) {
        Matrix m(all.rows(), static_cast<Eigen::Index>(cols.size()));
        std::vector<ClassId> l;
        for (std::size_t j = 0; j < cols.size(); ++j) {
            m.col(static_cast<Eigen::Index>(j)) = all.col(cols[j]);
            l.push_back(labels[static_cast<std::size_t>(cols[j])]);
        }
        total += oracle_objective(m, l, terminus, loss);
    }
    return total;
}

BlockConvergence descend(Matrix& all, const std::vector<ClassId>& labels, const Block& block,
                         const EtfTerminus& terminus, OracleLoss loss, const OracleOptions& opt) {
    const auto n = static_cast<Eigen::Index>(block.columns.size());
    Matrix m(all.rows(), n);
    std::vector<ClassId> l;
    for (Eigen::Index j = 0; j < n; ++j) {
        m.col(j) = all.col(block.columns[static_cast<std::size_t>(j)]);
        l.push_back(labels[static_cast<std::size_t>(block.columns[static_cast<std::size_t>(j)])]);
    }
    // Session-local indices for the objective.
    Block local;
    {
        Eigen::Index at = 0;
        for (const auto& cols : block.session_columns) {
            std::vector<Eigen::Index> s;
            for (std::size_t j = 0; j < cols.size(); ++j) s.push_back(at++);
            local.session_columns.push_back(std::move(s));
        }
    }

    BlockConvergence conv;
    double step = opt.step;
    double objective = block_objective(m, l, local, terminus, loss);
    conv.objective_history.push_back(objective);
    for (int it = 0; it < opt.max_iterations; ++it) {
        const Matrix grads = sample_gradients(m, l, terminus.matrix(), loss);
        Matrix candidate;
        double cand_obj = 0.0;
        bool accepted = false;
        for (int h = 0; h <= kMaxHalvings; ++h) {
            candidate = m - step * grads;
            project_to_ball(candidate);
            cand_obj = block_objective(candidate, l, local, terminus, loss);
            if (cand_obj <= objective + 1e-15 * std::max(1.0, std::abs(objective))) {
                accepted = true;
                break;
            }
            step *= 0.5;
            ++conv.halvings;
        }
        conv.iterations = it + 1;
        if (!accepted) break;
        conv.final_update = (candidate - m).colwise().norm().maxCoeff();
        m = std::move(candidate);
        objective = std::min(objective, cand_obj);
        conv.objective_history.push_back(cand_obj);
        if (conv.final_update < opt.tol) {
            conv.converged = true;
            break;
        }
        if (opt.adaptive_step) step = std::min(step * 2.0, kMaxStep);
    }
    for (Eigen::Index j = 0; j < n; ++j) all.col(block.columns[static_cast<std::size_t>(j)]) = m.col(j);
    return conv;
}

struct Layout {
    Matrix init;
    std::vector<ClassId> labels;
    std::vector<int> session_of;
    std::vector<std::vector<Eigen::Index>> session_columns;
};

Layout lay_out(const OracleProblem& p) {
    Layout out;
    Eigen::Index total = 0;
    for (const auto& s : p.sessions)
        for (const auto& cc : s) {
            if (cc.class_id < 0 || cc.class_id >= p.terminus.size()) {
                throw Error(ErrorCode::IndexOutOfRange, "oracle class outside terminus");
            }
            if (cc.count < 1) throw Error(ErrorCode::InvalidArgument, "class count must be >= 1");
            total += cc.count;
        }
    if (total == 0) throw Error(ErrorCode::EmptyList, "oracle problem has no samples");

    const Eigen::Index d = p.terminus.dim();
    out.init.resize(d, total);
    Rng rng(p.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    Eigen::Index col = 0;
    for (std::size_t t = 0; t < p.sessions.size(); ++t) {
        std::vector<Eigen::Index> cols;
        for (const auto& cc : p.sessions[t]) {
            for (int i = 0; i < cc.count; ++i) {
                Vector v(d);
                do {
                    for (Eigen::Index r = 0; r < d; ++r) v(r) = normal(rng);
                } while (!(v.norm() > 1e-12));
                const double radius = kInitRadius * std::pow(uniform(rng), 1.0 / static_cast<double>(d));
                out.init.col(col) = radius * v.normalized();
                out.labels.push_back(cc.class_id);
                out.session_of.push_back(static_cast<int>(t));
                cols.push_back(col++);
            }
        }
        out.session_columns.push_back(std::move(cols));
    }
    return out;
}

void check_options(const OracleOptions& o) {
    if (!(o.step > 0.0)) throw Error(ErrorCode::InvalidArgument, "step size must be positive");
}

}  // namespace

std::string_view oracle_loss_name(OracleLoss loss) noexcept {
    return loss == OracleLoss::CrossEntropy ? "ce" : "align";
}

OracleLoss parse_oracle_loss(std::string_view text) {
    if (text == "ce") return OracleLoss::CrossEntropy;
    if (text == "align" || text == "misalignment") return OracleLoss::Misalignment;
    throw Error(ErrorCode::ParseError, "unknown oracle loss '" + std::string(text) + "'");
}

double oracle_objective(const Matrix& features, std::span<const ClassId> labels,
                        const EtfTerminus& terminus, OracleLoss loss) {
    if (features.cols() == 0) return 0.0;
    const Matrix& w = terminus.matrix();
    double sum = 0.0;
    if (loss == OracleLoss::Misalignment) {
        for (Eigen::Index i = 0; i < features.cols(); ++i) {
            const double a = w.col(labels[static_cast<std::size_t>(i)]).dot(features.col(i)) - 1.0;
            sum += 0.5 * a * a;
        }
    } else {
        const Matrix logits = w.transpose() * features;
        for (Eigen::Index i = 0; i < features.cols(); ++i) {
            const double top = logits.col(i).maxCoeff();
            const double lse = top + std::log((logits.col(i).array() - top).exp().sum());
            sum += lse - logits(labels[static_cast<std::size_t>(i)], i);
        }
    }
    return sum / static_cast<double>(features.cols());
}

OracleSolution solve(const OracleProblem& problem, const OracleOptions& options) {
    check_options(options);
    Layout layout = lay_out(problem);
    OracleSolution sol;
    sol.features = std::move(layout.init);
    sol.labels = std::move(layout.labels);
    sol.session_of = std::move(layout.session_of);
    sol.converged = true;
    for (const auto& cols : layout.session_columns) {
        Block block;
        block.columns = cols;
        block.session_columns = {cols};
        sol.blocks.push_back(
            descend(sol.features, sol.labels, block, problem.terminus, problem.loss, options));
        sol.converged = sol.converged && sol.blocks.back().converged;
    }
    return sol;
}

OracleSolution solve_joint(const OracleProblem& problem, const OracleOptions& options) {
    check_options(options);
    Layout layout = lay_out(problem);
    OracleSolution sol;
    sol.features = std::move(layout.init);
    sol.labels = std::move(layout.labels);
    sol.session_of = std::move(layout.session_of);
    Block block;
    for (const auto& cols : layout.session_columns) {
        block.columns.insert(block.columns.end(), cols.begin(), cols.end());
        block.session_columns.push_back(cols);
    }
    sol.blocks.push_back(
        descend(sol.features, sol.labels, block, problem.terminus, problem.loss, options));
    sol.converged = sol.blocks.back().converged;
    return sol;
}

void require_converged(const OracleSolution& solution) {
    for (std::size_t b = 0; b < solution.blocks.size(); ++b) {
        if (!solution.blocks[b].converged) {
            throw Error(ErrorCode::NotConverged,
                        "block " + std::to_string(b) + " stopped after " +
                            std::to_string(solution.blocks[b].iterations) +
                            " iterations, last update " +
                            std::to_string(solution.blocks[b].final_update));
        }
    }
}

std::vector<int> long_tail_counts(int classes, int n_max, double rho) {
    std::vector<int> counts;
    for (int k = 0; k < classes; ++k) {
        const double exponent = classes > 1 ? static_cast<double>(k) / (classes - 1) : 0.0;
        counts.push_back(std::max(1, static_cast<int>(std::lround(n_max * std::pow(rho, exponent)))));
    }
    return counts;
}

std::vector<std::vector<ClassCount>> split_sessions(std::span<const int> counts, int sessions) {
    if (sessions < 1 || static_cast<std::size_t>(sessions) > counts.size()) {
        throw Error(ErrorCode::InvalidArgument, "cannot split classes into that many sessions");
    }
    std::vector<std::vector<ClassCount>> out(static_cast<std::size_t>(sessions));
    const auto k = counts.size();
    std::size_t at = 0;
    for (std::size_t s = 0; s < out.size(); ++s) {
        const std::size_t size = k / out.size() + (s < k % out.size() ? 1 : 0);
        for (std::size_t j = 0; j < size; ++j, ++at) {
            out[s].push_back({static_cast<ClassId>(at), counts[at]});
        }
    }
    return out;
}

TerminusResiduals check_nc_terminus(const Matrix& features, std::span<const ClassId> labels,
                                    const EtfTerminus& terminus, double tol) {
    if (static_cast<std::size_t>(features.cols()) != labels.size() ||
        features.rows() != terminus.dim()) {
        throw Error(ErrorCode::ShapeMismatch, "features do not match labels or terminus");
    }
    TerminusResiduals r;
    const Matrix inner = terminus.matrix().transpose() * features;
    const double target = terminus.target_cross_cosine();
    for (Eigen::Index i = 0; i < features.cols(); ++i) {
        const ClassId y = labels[static_cast<std::size_t>(i)];
        r.residual_norm = std::max(r.residual_norm, std::abs(features.col(i).norm() - 1.0));
        r.residual_align = std::max(r.residual_align, std::abs(inner(y, i) - 1.0));
        for (Eigen::Index k = 0; k < inner.rows(); ++k) {
            if (k == y) continue;
            r.residual_cross = std::max(r.residual_cross, std::abs(inner(k, i) - target));
        }
    }
    r.pass = r.residual_norm <= tol && r.residual_align <= tol && r.residual_cross <= tol;
    return r;
}

}  // namespace nct
