#include "nct/stream.hpp"

#include "nct/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nct {

namespace {

constexpr std::uint64_t kMeanTag = 0x6d65616e;
constexpr std::uint64_t kTrainTag = 0x747261696e;
constexpr std::uint64_t kTestTag = 0x74657374;
constexpr std::uint64_t kModeTag = 0x6d6f6465;
constexpr std::uint64_t kPoolTag = 0x706f6f6c;
constexpr std::uint64_t kShuffleTag = 0x73687566;

void require_classes(int needed, const SyntheticTaskSpec& task) {
    if (needed > task.num_classes) {
        throw Error(ErrorCode::NotEnoughClasses, "plan needs " + std::to_string(needed) +
                                                     " classes, task has " +
                                                     std::to_string(task.num_classes));
    }
}

void require_layout(int k0, int steps, int per_step) {
    if (k0 < 1 || steps < 0 || (steps > 0 && per_step < 1)) {
        throw Error(ErrorCode::InvalidArgument, "invalid session layout");
    }
}

// Sessions over consecutive class ids with a per-class count function.
template <typename CountFn>
SessionPlan consecutive_plan(int k0, int steps, int per_step, SessionMode incremental_mode,
                             CountFn count_of) {
    SessionPlan plan;
    ClassId next = 0;
    for (int t = 0; t <= steps; ++t) {
        SessionDescriptor s;
        s.t = t;
        s.mode = t == 0 ? SessionMode::Normal : incremental_mode;
        const int size = t == 0 ? k0 : per_step;
        for (int i = 0; i < size; ++i) {
            s.classes.push_back(next);
            s.counts.push_back(count_of(t, next));
            ++next;
        }
        plan.sessions.push_back(std::move(s));
    }
    return plan;
}

int decayed_count(int n_max, double rho, int rank, int total) {
    if (total <= 1) return n_max;
    const double exponent = static_cast<double>(rank) / static_cast<double>(total - 1);
    return std::max(1, static_cast<int>(std::lround(n_max * std::pow(rho, exponent))));
}

}  // namespace

Matrix SyntheticTaskSpec::class_means() const {
    Rng rng(derive_seed(seed, kMeanTag));
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix means(input_dim, num_classes);
    for (int c = 0; c < num_classes; ++c) {
        Vector v(input_dim);
        do {
            for (Eigen::Index i = 0; i < input_dim; ++i) v(i) = normal(rng);
        } while (!(v.norm() > 1e-6));
        means.col(c) = radius * v.normalized();
    }
    return means;
}

std::string_view session_mode_name(SessionMode mode) noexcept {
    switch (mode) {
        case SessionMode::Normal: return "normal";
        case SessionMode::LongTail: return "longtail";
        case SessionMode::FewShot: return "fewshot";
    }
    return "normal";
}

SessionMode parse_session_mode(std::string_view text) {
    if (text == "normal" || text == "nm") return SessionMode::Normal;
    if (text == "longtail" || text == "lt") return SessionMode::LongTail;
    if (text == "fewshot" || text == "fs") return SessionMode::FewShot;
    throw Error(ErrorCode::ParseError, "unknown session mode '" + std::string(text) + "'");
}

std::string_view long_tail_order_name(LongTailOrder order) noexcept {
    return order == LongTailOrder::Ordered ? "ordered" : "shuffled";
}

LongTailOrder parse_long_tail_order(std::string_view text) {
    if (text == "ordered") return LongTailOrder::Ordered;
    if (text == "shuffled") return LongTailOrder::Shuffled;
    throw Error(ErrorCode::ParseError, "unknown long-tail order '" + std::string(text) + "'");
}

int SessionDescriptor::min_count() const {
    return counts.empty() ? 0 : *std::min_element(counts.begin(), counts.end());
}

int SessionDescriptor::total_count() const { return std::accumulate(counts.begin(), counts.end(), 0); }

bool operator==(const SessionDescriptor& a, const SessionDescriptor& b) {
    return a.t == b.t && a.classes == b.classes && a.mode == b.mode && a.counts == b.counts;
}

std::size_t SessionPlan::total_classes() const {
    std::size_t n = 0;
    for (const auto& s : sessions) n += s.classes.size();
    return n;
}

std::vector<ClassId> SessionPlan::classes_through(int t) const {
    std::vector<ClassId> out;
    for (const auto& s : sessions) {
        if (s.t > t) break;
        out.insert(out.end(), s.classes.begin(), s.classes.end());
    }
    return out;
}

std::string SessionPlan::to_json() const {
    nlohmann::ordered_json root;
    root["sessions"] = nlohmann::ordered_json::array();
    for (const auto& s : sessions) {
        nlohmann::ordered_json js;
        js["t"] = s.t;
        js["classes"] = s.classes;
        js["mode"] = session_mode_name(s.mode);
        js["counts"] = s.counts;
        root["sessions"].push_back(std::move(js));
    }
    root["seed"] = seed;
    return root.dump(2);
}

SessionPlan SessionPlan::from_json(std::string_view text) {
    try {
        const auto root = nlohmann::json::parse(text);
        SessionPlan plan;
        plan.seed = root.at("seed").get<std::uint64_t>();
        for (const auto& js : root.at("sessions")) {
            SessionDescriptor s;
            s.t = js.at("t").get<int>();
            s.classes = js.at("classes").get<std::vector<ClassId>>();
            s.mode = parse_session_mode(js.at("mode").get<std::string>());
            s.counts = js.at("counts").get<std::vector<int>>();
            plan.sessions.push_back(std::move(s));
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("plan json: ") + e.what());
    }
}

SessionPlan plan_cil(int k0, int steps, int per_step, const SyntheticTaskSpec& task) {
    require_layout(k0, steps, per_step);
    require_classes(k0 + steps * per_step, task);
    const int full = task.train_per_class;
    return consecutive_plan(k0, steps, per_step, SessionMode::Normal,
                            [full](int, ClassId) { return full; });
}

SessionPlan plan_ltcil(int k0, int steps, int per_step, double rho, int n_max,
                       LongTailOrder order, std::uint64_t seed, const SyntheticTaskSpec& task) {
    require_layout(k0, steps, per_step);
    if (!(rho > 0.0 && rho <= 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must be in (0, 1]");
    if (n_max < 1 || n_max > task.train_per_class) {
        throw Error(ErrorCode::NotEnoughSamples, "n_max outside [1, train_per_class]");
    }
    const int total = k0 + steps * per_step;
    require_classes(total, task);

    std::vector<int> rank(static_cast<std::size_t>(total));
    std::iota(rank.begin(), rank.end(), 0);
    if (order == LongTailOrder::Shuffled) {
        Rng rng(derive_seed(seed, kShuffleTag));
        std::shuffle(rank.begin(), rank.end(), rng);
    }
    SessionPlan plan = consecutive_plan(
        k0, steps, per_step, SessionMode::LongTail, [&](int, ClassId c) {
            return decayed_count(n_max, rho, rank[static_cast<std::size_t>(c)], total);
        });
    plan.sessions.front().mode = SessionMode::LongTail;
    plan.seed = seed;
    return plan;
}

SessionPlan plan_fscil(int k0, int steps, int ways, int shots, const SyntheticTaskSpec& task) {
    require_layout(k0, steps, ways);
    require_classes(k0 + steps * ways, task);
    if (shots < 1 || shots > task.train_per_class) {
        throw Error(ErrorCode::NotEnoughSamples, "shot count " + std::to_string(shots) +
                                                     " exceeds available samples");
    }
    const int full = task.train_per_class;
    return consecutive_plan(k0, steps, ways, SessionMode::FewShot,
                            [=](int t, ClassId) { return t == 0 ? full : shots; });
}

std::vector<SessionMode> sample_session_modes(int steps, std::uint64_t seed) {
    Rng rng(derive_seed(seed, kModeTag));
    std::uniform_int_distribution<int> pick(0, 2);
    std::vector<SessionMode> modes;
    modes.reserve(static_cast<std::size_t>(std::max(steps, 0)));
    for (int i = 0; i < steps; ++i) modes.push_back(static_cast<SessionMode>(pick(rng)));
    return modes;
}

SessionPlan plan_gcil(int k0, int steps, int per_step, int shots, double rho,
                      std::uint64_t seed, const SyntheticTaskSpec& task) {
    require_layout(k0, steps, per_step);
    require_classes(k0 + steps * per_step, task);
    if (!(rho > 0.0 && rho <= 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must be in (0, 1]");
    if (shots < 1 || shots > task.train_per_class) {
        throw Error(ErrorCode::NotEnoughSamples, "shot count exceeds available samples");
    }
    const int full = task.train_per_class;
    const auto modes = sample_session_modes(steps, seed);

    std::vector<ClassId> pool(static_cast<std::size_t>(task.num_classes - k0));
    std::iota(pool.begin(), pool.end(), k0);
    Rng rng(derive_seed(seed, kPoolTag));

    SessionPlan plan;
    plan.seed = seed;
    SessionDescriptor base;
    for (ClassId c = 0; c < k0; ++c) {
        base.classes.push_back(c);
        base.counts.push_back(full);
    }
    plan.sessions.push_back(std::move(base));

    for (int t = 1; t <= steps; ++t) {
        SessionDescriptor s;
        s.t = t;
        s.mode = modes[static_cast<std::size_t>(t - 1)];
        for (int j = 0; j < per_step; ++j) {
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            const std::size_t at = pick(rng);
            s.classes.push_back(pool[at]);
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
            switch (s.mode) {
                case SessionMode::Normal: s.counts.push_back(full); break;
                case SessionMode::FewShot: s.counts.push_back(shots); break;
                case SessionMode::LongTail:
                    s.counts.push_back(decayed_count(full, rho, j, per_step));
                    break;
            }
        }
        plan.sessions.push_back(std::move(s));
    }
    return plan;
}

std::vector<SessionBatch> materialize(const SessionPlan& plan, const SyntheticTaskSpec& task,
                                      Split split) {
    const Matrix means = task.class_means();
    const std::uint64_t split_seed = derive_seed(task.seed, split == Split::Train ? kTrainTag : kTestTag);
    std::vector<SessionBatch> out;
    for (const auto& s : plan.sessions) {
        SessionBatch batch;
        batch.t = s.t;
        int total = 0;
        for (std::size_t i = 0; i < s.classes.size(); ++i) {
            if (s.classes[i] < 0 || s.classes[i] >= task.num_classes) {
                throw Error(ErrorCode::UnknownClass, "plan class outside task label space");
            }
            total += split == Split::Train ? s.counts[i] : task.test_per_class;
        }
        batch.inputs.resize(task.input_dim, total);
        Eigen::Index col = 0;
        for (std::size_t i = 0; i < s.classes.size(); ++i) {
            const ClassId c = s.classes[i];
            const int n = split == Split::Train ? s.counts[i] : task.test_per_class;
            Rng rng(derive_seed(split_seed, static_cast<std::uint64_t>(c)));
            std::normal_distribution<double> normal(0.0, 1.0);
            for (int k = 0; k < n; ++k) {
                for (Eigen::Index r = 0; r < task.input_dim; ++r) {
                    batch.inputs(r, col) = means(r, c) + task.sigma * normal(rng);
                }
                batch.labels.push_back(c);
                ++col;
            }
        }
        out.push_back(std::move(batch));
    }
    return out;
}

}  // namespace nct
