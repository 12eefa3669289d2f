#include "nct/experiment.hpp"

#include "nct/error.hpp"
#include "nct/text_format.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace nct {

namespace {

constexpr std::uint64_t kStreamTag = 11;
constexpr std::uint64_t kSamplerTag = 12;
constexpr std::uint64_t kTrainerTag = 13;

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

long long parse_int(const std::string& v) {
    std::size_t used = 0;
    long long out = 0;
    try {
        out = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw Error(ErrorCode::ConfigError, "not an integer: '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& v) {
    std::size_t used = 0;
    std::uint64_t out = 0;
    try {
        out = std::stoull(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty() || v.front() == '-') {
        throw Error(ErrorCode::ConfigError, "not an unsigned integer: '" + v + "'");
    }
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error(ErrorCode::ConfigError, "not a boolean: '" + v + "'");
}

double parse_real(const std::string& v) {
    try {
        return parse_double(v);
    } catch (const Error&) {
        throw Error(ErrorCode::ConfigError, "not a number: '" + v + "'");
    }
}

std::vector<Eigen::Index> parse_dims(const std::string& v) {
    std::vector<Eigen::Index> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(static_cast<Eigen::Index>(parse_int(item)));
    }
    return out;
}

std::string join_dims(const std::vector<Eigen::Index>& dims) {
    std::string out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(dims[i]);
    }
    return out;
}

// Rethrows enum parse failures as config errors.
template <typename Fn>
auto as_config(Fn fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
using Getter = std::function<std::string(const ExperimentConfig&)>;

struct Field {
    std::string section;
    std::string key;
    Setter set;
    Getter get;
};

std::string num(double v) { return format_double(v); }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        auto add = [&f](std::string s, std::string k, Setter set, Getter get) {
            f.push_back(Field{std::move(s), std::move(k), std::move(set), std::move(get)});
        };
        // run
        add("run", "seed", [](auto& c, auto& v) { c.seed = parse_u64(v); },
            [](auto& c) { return std::to_string(c.seed); });
        add("run", "deterministic", [](auto& c, auto& v) { c.deterministic = parse_bool(v); },
            [](auto& c) { return std::string(c.deterministic ? "true" : "false"); });
        add("run", "output_dir", [](auto& c, auto& v) { c.output_dir = v; },
            [](auto& c) { return c.output_dir; });
        // stream
        add("stream", "input_dim", [](auto& c, auto& v) { c.task.input_dim = parse_int(v); },
            [](auto& c) { return std::to_string(c.task.input_dim); });
        add("stream", "num_classes", [](auto& c, auto& v) { c.task.num_classes = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.task.num_classes); });
        add("stream", "radius", [](auto& c, auto& v) { c.task.radius = parse_real(v); },
            [](auto& c) { return num(c.task.radius); });
        add("stream", "sigma", [](auto& c, auto& v) { c.task.sigma = parse_real(v); },
            [](auto& c) { return num(c.task.sigma); });
        add("stream", "train_per_class", [](auto& c, auto& v) { c.task.train_per_class = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.task.train_per_class); });
        add("stream", "test_per_class", [](auto& c, auto& v) { c.task.test_per_class = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.task.test_per_class); });
        // plan
        add("plan", "base_classes", [](auto& c, auto& v) { c.plan.base_classes = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.plan.base_classes); });
        add("plan", "steps", [](auto& c, auto& v) { c.plan.steps = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.plan.steps); });
        add("plan", "per_step", [](auto& c, auto& v) { c.plan.per_step = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.plan.per_step); });
        add("plan", "shots", [](auto& c, auto& v) { c.plan.shots = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.plan.shots); });
        add("plan", "rho", [](auto& c, auto& v) { c.plan.rho = parse_real(v); },
            [](auto& c) { return num(c.plan.rho); });
        add("plan", "n_max", [](auto& c, auto& v) { c.plan.n_max = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.plan.n_max); });
        add("plan", "lt_order", [](auto& c, auto& v) { c.plan.order = as_config([&] { return parse_long_tail_order(v); }); },
            [](auto& c) { return std::string(long_tail_order_name(c.plan.order)); });
        // trainer
        add("trainer", "regime", [](auto& c, auto& v) { c.trainer.regime = as_config([&] { return parse_regime(v); }); },
            [](auto& c) { return std::string(regime_name(c.trainer.regime)); });
        add("trainer", "base_epochs", [](auto& c, auto& v) { c.trainer.base_epochs = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.trainer.base_epochs); });
        add("trainer", "incremental_epochs", [](auto& c, auto& v) { c.trainer.incremental_epochs = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.trainer.incremental_epochs); });
        add("trainer", "base_lr", [](auto& c, auto& v) { c.trainer.base_lr = parse_real(v); },
            [](auto& c) { return num(c.trainer.base_lr); });
        add("trainer", "incremental_lr", [](auto& c, auto& v) { c.trainer.incremental_lr = parse_real(v); },
            [](auto& c) { return num(c.trainer.incremental_lr); });
        add("trainer", "min_lr_ratio", [](auto& c, auto& v) { c.trainer.min_lr_ratio = parse_real(v); },
            [](auto& c) { return num(c.trainer.min_lr_ratio); });
        add("trainer", "momentum", [](auto& c, auto& v) { c.trainer.momentum = parse_real(v); },
            [](auto& c) { return num(c.trainer.momentum); });
        add("trainer", "weight_decay", [](auto& c, auto& v) { c.trainer.weight_decay = parse_real(v); },
            [](auto& c) { return num(c.trainer.weight_decay); });
        add("trainer", "head_weight_decay", [](auto& c, auto& v) { c.trainer.head_weight_decay = parse_real(v); },
            [](auto& c) { return num(c.trainer.head_weight_decay); });
        add("trainer", "batch_size", [](auto& c, auto& v) { c.trainer.batch_size = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.trainer.batch_size); });
        add("trainer", "lambda", [](auto& c, auto& v) { c.trainer.lambda_base = parse_real(v); },
            [](auto& c) { return num(c.trainer.lambda_base); });
        add("trainer", "adaptive_lambda", [](auto& c, auto& v) { c.trainer.adaptive_lambda = parse_bool(v); },
            [](auto& c) { return std::string(c.trainer.adaptive_lambda ? "true" : "false"); });
        add("trainer", "exemplars_per_class", [](auto& c, auto& v) { c.trainer.exemplars_per_class = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.trainer.exemplars_per_class); });
        add("trainer", "classifier", [](auto& c, auto& v) { c.trainer.classifier = as_config([&] { return parse_classifier(v); }); },
            [](auto& c) { return std::string(classifier_name(c.trainer.classifier)); });
        add("trainer", "loss", [](auto& c, auto& v) { c.trainer.loss = as_config([&] { return parse_loss_kind(v); }); },
            [](auto& c) { return std::string(loss_kind_name(c.trainer.loss)); });
        add("trainer", "ce_scale", [](auto& c, auto& v) { c.trainer.ce_scale = parse_real(v); },
            [](auto& c) { return num(c.trainer.ce_scale); });
        add("trainer", "schedule", [](auto& c, auto& v) { c.trainer.schedule = as_config([&] { return parse_schedule(v); }); },
            [](auto& c) { return std::string(schedule_name(c.trainer.schedule)); });
        add("trainer", "frame", [](auto& c, auto& v) { c.trainer.frame = as_config([&] { return parse_frame_kind(v); }); },
            [](auto& c) { return std::string(frame_kind_name(c.trainer.frame)); });
        add("trainer", "terminus_size", [](auto& c, auto& v) { c.trainer.terminus_size = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.trainer.terminus_size); });
        add("trainer", "fewshot_threshold", [](auto& c, auto& v) { c.trainer.fewshot_threshold = static_cast<int>(parse_int(v)); },
            [](auto& c) { return std::to_string(c.trainer.fewshot_threshold); });
        add("trainer", "hidden", [](auto& c, auto& v) { c.trainer.hidden = parse_dims(v); },
            [](auto& c) { return join_dims(c.trainer.hidden); });
        add("trainer", "feature_dim", [](auto& c, auto& v) { c.trainer.feature_dim = parse_int(v); },
            [](auto& c) { return std::to_string(c.trainer.feature_dim); });
        add("trainer", "intermediate_dim", [](auto& c, auto& v) { c.trainer.intermediate_dim = parse_int(v); },
            [](auto& c) { return std::to_string(c.trainer.intermediate_dim); });
        add("trainer", "projection_width", [](auto& c, auto& v) { c.trainer.projection_width = parse_int(v); },
            [](auto& c) { return std::to_string(c.trainer.projection_width); });
        return f;
    }();
    return table;
}

nlohmann::ordered_json diag_json(const NcDiagnostics& d) {
    auto val = [](double x) -> nlohmann::ordered_json {
        if (std::isnan(x)) return nullptr;
        return x;
    };
    nlohmann::ordered_json j;
    j["avg_cross_cos"] = val(d.avg_cross_cos);
    j["avg_self_cos"] = val(d.avg_self_cos);
    j["trace_ratio"] = val(d.trace_ratio);
    return j;
}

}  // namespace

bool operator==(const TrainerConfig& a, const TrainerConfig& b) {
    return a.regime == b.regime && a.base_epochs == b.base_epochs &&
           a.incremental_epochs == b.incremental_epochs && a.base_lr == b.base_lr &&
           a.incremental_lr == b.incremental_lr && a.min_lr_ratio == b.min_lr_ratio &&
           a.momentum == b.momentum && a.weight_decay == b.weight_decay &&
           a.head_weight_decay == b.head_weight_decay &&
           a.batch_size == b.batch_size && a.lambda_base == b.lambda_base &&
           a.adaptive_lambda == b.adaptive_lambda && a.exemplars_per_class == b.exemplars_per_class &&
           a.classifier == b.classifier && a.loss == b.loss && a.ce_scale == b.ce_scale &&
           a.schedule == b.schedule && a.frame == b.frame && a.terminus_size == b.terminus_size &&
           a.fewshot_threshold == b.fewshot_threshold && a.hidden == b.hidden &&
           a.feature_dim == b.feature_dim && a.intermediate_dim == b.intermediate_dim &&
           a.projection_width == b.projection_width && a.seed == b.seed;
}

bool operator==(const SyntheticTaskSpec& a, const SyntheticTaskSpec& b) {
    return a.input_dim == b.input_dim && a.num_classes == b.num_classes && a.radius == b.radius &&
           a.sigma == b.sigma && a.train_per_class == b.train_per_class &&
           a.test_per_class == b.test_per_class && a.seed == b.seed;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.trainer == b.trainer && a.task == b.task && a.plan == b.plan && a.seed == b.seed &&
           a.deterministic == b.deterministic && a.output_dir == b.output_dir;
}

TrainerConfig ExperimentConfig::resolved_trainer() const {
    TrainerConfig t = trainer;
    t.seed = derive_seed(seed, kTrainerTag);
    return t;
}

SyntheticTaskSpec ExperimentConfig::resolved_task() const {
    SyntheticTaskSpec t = task;
    t.seed = derive_seed(seed, kStreamTag);
    return t;
}

std::uint64_t ExperimentConfig::plan_seed() const { return derive_seed(seed, kSamplerTag); }

SessionPlan ExperimentConfig::make_plan() const {
    const SyntheticTaskSpec t = resolved_task();
    const auto& p = plan;
    switch (trainer.regime) {
        case Regime::Cil: return plan_cil(p.base_classes, p.steps, p.per_step, t);
        case Regime::Ltcil:
            return plan_ltcil(p.base_classes, p.steps, p.per_step, p.rho, p.n_max, p.order,
                              plan_seed(), t);
        case Regime::Fscil: return plan_fscil(p.base_classes, p.steps, p.per_step, p.shots, t);
        case Regime::Gcil:
            return plan_gcil(p.base_classes, p.steps, p.per_step, p.shots, p.rho, plan_seed(), t);
    }
    throw Error(ErrorCode::ConfigError, "unknown regime");
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig config;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw Error(ErrorCode::ConfigError, where + "unterminated section");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            if (section != "run" && section != "stream" && section != "plan" && section != "trainer") {
                throw Error(ErrorCode::ConfigError, where + "unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::ConfigError, where + "expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (section.empty()) throw Error(ErrorCode::ConfigError, where + "key outside a section");
        bool found = false;
        for (const auto& f : fields()) {
            if (f.section == section && f.key == key) {
                try {
                    f.set(config, value);
                } catch (const Error& e) {
                    throw Error(ErrorCode::ConfigError, where + key + ": " + e.what());
                }
                found = true;
                break;
            }
        }
        if (!found) throw Error(ErrorCode::ConfigError, where + "unknown key '" + section + "." + key + "'");
    }
    try {
        config.trainer.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError, e.what());
    }
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigError, "cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string emit_config(const ExperimentConfig& config) {
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) out += '\n';
            section = f.section;
            out += "[" + section + "]\n";
        }
        out += f.key + " = " + f.get(config) + "\n";
    }
    return out;
}

void write_metrics_csv(std::ostream& out, const RunReport& report, Split split) {
    out << "t,A_t,avg_cross_cos_each,avg_cross_cos_acc,avg_self_cos_each,avg_self_cos_acc,"
           "trace_ratio_each,trace_ratio_acc\n";
    for (const auto& s : report.sessions) {
        const NcDiagnostics& each = split == Split::Train ? s.train_each : s.test_each;
        const NcDiagnostics& acc = split == Split::Train ? s.train_acc : s.test_acc;
        out << s.t << ',' << format_double(s.accuracy) << ',' << format_double(each.avg_cross_cos)
            << ',' << format_double(acc.avg_cross_cos) << ',' << format_double(each.avg_self_cos)
            << ',' << format_double(acc.avg_self_cos) << ',' << format_double(each.trace_ratio)
            << ',' << format_double(acc.trace_ratio) << '\n';
    }
}

std::string summary_json(const RunReport& report, const ExperimentConfig& config) {
    nlohmann::ordered_json root;
    root["regime"] = regime_name(config.trainer.regime);
    root["seed"] = config.seed;
    root["A"] = report.average_accuracy;
    root["PD"] = report.performance_drop;
    root["per_session"] = nlohmann::ordered_json::array();
    for (const auto& s : report.sessions) {
        nlohmann::ordered_json js;
        js["t"] = s.t;
        js["A_t"] = s.accuracy;
        js["branch"] = s.branch;
        js["lambda_eff"] = s.lambda_eff;
        if (!s.loss_curve.empty()) js["final_loss"] = s.loss_curve.back();
        js["test"] = {{"each", diag_json(s.test_each)},
                      {"acc", diag_json(s.test_acc)},
                      {"base", diag_json(s.test_base)}};
        js["train"] = {{"each", diag_json(s.train_each)},
                       {"acc", diag_json(s.train_acc)},
                       {"base", diag_json(s.train_base)}};
        root["per_session"].push_back(std::move(js));
    }
    root["warnings"] = report.warnings;
    return root.dump(2) + "\n";
}

RunReport run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
    IncrementalLearner learner(config.resolved_trainer(), config.make_plan(), config.resolved_task());
    RunReport report = learner.run();

    std::filesystem::create_directories(out_dir);
    {
        Eigen::Index total = 0;
        for (const auto& b : learner.test_data()) total += b.inputs.cols();
        Matrix inputs(config.task.input_dim, total);
        std::vector<ClassId> labels;
        labels.reserve(static_cast<std::size_t>(total));
        Eigen::Index col = 0;
        for (const auto& b : learner.test_data()) {
            inputs.middleCols(col, b.inputs.cols()) = b.inputs;
            col += b.inputs.cols();
            labels.insert(labels.end(), b.labels.begin(), b.labels.end());
        }
        std::ofstream dump(out_dir / "test_features.txt");
        write_feature_dump(dump, learner.features(inputs), labels);
        std::ofstream terminus(out_dir / "terminus.txt");
        write_terminus(terminus, learner.terminus());

        std::ofstream train(out_dir / "train_metrics.csv");
        write_metrics_csv(train, report, Split::Train);
        std::ofstream test(out_dir / "test_metrics.csv");
        write_metrics_csv(test, report, Split::Test);
        std::ofstream summary(out_dir / "summary.json");
        summary << summary_json(report, config);
        if (!train || !test || !summary || !dump || !terminus) {
            throw Error(ErrorCode::InvalidArgument, "failed writing outputs to " + out_dir.string());
        }
    }
    return report;
}

}  // namespace nct
