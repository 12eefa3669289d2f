#include "nct/trainer.hpp"

#include "nct/error.hpp"
#include "nct/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nct {

namespace {

constexpr std::uint64_t kTerminusTag = 1;
constexpr std::uint64_t kBackboneTag = 2;
constexpr std::uint64_t kHeadTag = 3;
constexpr std::uint64_t kClassifierTag = 4;
constexpr std::uint64_t kShuffleTag = 5;
constexpr int kProbeSamples = 8;

Matrix normalized_columns(const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
        const double n = out.col(i).norm();
        if (n > kZeroFeatureNorm) out.col(i) /= n;
    }
    return out;
}

Matrix columns_of(const Matrix& m, const std::vector<Eigen::Index>& idx) {
    Matrix out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(idx[j]);
    return out;
}

Matrix hstack(const Matrix& a, const Matrix& b) {
    if (a.cols() == 0) return b;
    if (b.cols() == 0) return a;
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

}  // namespace

std::string_view regime_name(Regime r) noexcept {
    switch (r) {
        case Regime::Cil: return "cil";
        case Regime::Ltcil: return "ltcil";
        case Regime::Fscil: return "fscil";
        case Regime::Gcil: return "gcil";
    }
    return "cil";
}

Regime parse_regime(std::string_view text) {
    if (text == "cil") return Regime::Cil;
    if (text == "ltcil") return Regime::Ltcil;
    if (text == "fscil") return Regime::Fscil;
    if (text == "gcil") return Regime::Gcil;
    throw Error(ErrorCode::ParseError, "unknown regime '" + std::string(text) + "'");
}

std::string_view schedule_name(PrototypeSchedule s) noexcept {
    switch (s) {
        case PrototypeSchedule::FlyToCollapse: return "ftc";
        case PrototypeSchedule::NctOnly: return "nct";
        case PrototypeSchedule::NcmOnly: return "ncm";
    }
    return "ftc";
}

PrototypeSchedule parse_schedule(std::string_view text) {
    if (text == "ftc") return PrototypeSchedule::FlyToCollapse;
    if (text == "nct") return PrototypeSchedule::NctOnly;
    if (text == "ncm") return PrototypeSchedule::NcmOnly;
    throw Error(ErrorCode::ParseError, "unknown prototype schedule '" + std::string(text) + "'");
}

std::string_view classifier_name(ClassifierKind c) noexcept {
    return c == ClassifierKind::FixedTerminus ? "fixed" : "learnable";
}

ClassifierKind parse_classifier(std::string_view text) {
    if (text == "fixed") return ClassifierKind::FixedTerminus;
    if (text == "learnable") return ClassifierKind::Learnable;
    throw Error(ErrorCode::ParseError, "unknown classifier '" + std::string(text) + "'");
}

std::string_view loss_kind_name(LossKind l) noexcept {
    return l == LossKind::Misalignment ? "align" : "ce";
}

LossKind parse_loss_kind(std::string_view text) {
    if (text == "align") return LossKind::Misalignment;
    if (text == "ce") return LossKind::CrossEntropy;
    throw Error(ErrorCode::ParseError, "unknown loss '" + std::string(text) + "'");
}

void TrainerConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigError, what); };
    if (base_epochs < 1 || incremental_epochs < 1) fail("epochs must be >= 1");
    if (base_lr < 0.0 || incremental_lr < 0.0) fail("learning rates must be >= 0");
    if (min_lr_ratio < 0.0 || min_lr_ratio > 1.0) fail("min_lr_ratio must be in [0, 1]");
    if (momentum < 0.0 || momentum >= 1.0) fail("momentum must be in [0, 1)");
    if (weight_decay < 0.0 || head_weight_decay < 0.0) fail("weight decay must be >= 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (lambda_base < 0.0) fail("lambda must be >= 0");
    if (exemplars_per_class < 1) fail("exemplar budget must be >= 1");
    if (!(ce_scale > 0.0)) fail("ce_scale must be positive");
    if (terminus_size < 0) fail("terminus_size must be >= 0");
    if (fewshot_threshold < 0) fail("fewshot_threshold must be >= 0");
    if (feature_dim < 2 || intermediate_dim < 1 || projection_width < 0) fail("bad network dims");
    for (auto h : hidden)
        if (h < 1) fail("hidden widths must be >= 1");
}

std::vector<double> RunReport::accuracies() const {
    std::vector<double> out;
    for (const auto& s : sessions) out.push_back(s.accuracy);
    return out;
}

ClassId predict_from_feature(const Vector& feature, const Matrix& prototypes,
                             std::span<const ClassId> active) {
    if (active.empty()) throw Error(ErrorCode::EmptyList, "no active classes");
    const double norm = feature.norm();
    if (!(norm > kZeroFeatureNorm)) throw Error(ErrorCode::ZeroFeature, "cannot classify a zero feature");
    ClassId best = -1;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (ClassId c : active) {
        const double cos = prototypes.col(c).dot(feature) / (prototypes.col(c).norm() * norm);
        if (cos > best_cos || (cos == best_cos && c < best)) {
            best_cos = cos;
            best = c;
        }
    }
    return best;
}

struct IncrementalLearner::TrainingSet {
    Matrix inputs;  // x when training through the backbone, h otherwise
    std::vector<ClassId> labels;
};

IncrementalLearner::IncrementalLearner(TrainerConfig config, SessionPlan plan, SyntheticTaskSpec task)
    : config_(std::move(config)),
      plan_(std::move(plan)),
      task_(task),
      terminus_(Matrix(), FrameKind::SimplexEtf, 0),
      backbone_(Mlp::random({1, 1}, 0)),
      exemplars_(static_cast<std::size_t>(std::max(config_.exemplars_per_class, 1))) {
    config_.validate();
    if (plan_.sessions.empty()) throw Error(ErrorCode::ConfigError, "plan has no sessions");
    ClassId max_class = 0;
    for (const auto& s : plan_.sessions)
        for (ClassId c : s.classes) max_class = std::max(max_class, c);
    const int k_total = config_.terminus_size > 0 ? config_.terminus_size
                                                  : static_cast<int>(plan_.total_classes());
    if (k_total <= max_class) {
        throw Error(ErrorCode::ConfigError, "terminus smaller than the plan's label space");
    }
    terminus_ = build_terminus(config_.feature_dim, k_total, config_.frame,
                               derive_seed(config_.seed, kTerminusTag));

    std::vector<Eigen::Index> dims{task_.input_dim};
    dims.insert(dims.end(), config_.hidden.begin(), config_.hidden.end());
    dims.push_back(uses_head() ? config_.intermediate_dim : config_.feature_dim);
    backbone_ = Mlp::random(dims, derive_seed(config_.seed, kBackboneTag));
    if (uses_head()) {
        const Eigen::Index width =
            config_.projection_width > 0 ? config_.projection_width : 2 * config_.feature_dim;
        head_ = Mlp::random({config_.intermediate_dim, width, config_.feature_dim},
                            derive_seed(config_.seed, kHeadTag));
    }

    if (config_.classifier == ClassifierKind::Learnable) {
        Rng rng(derive_seed(config_.seed, kClassifierTag));
        const double bound = 1.0 / std::sqrt(static_cast<double>(config_.feature_dim));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        classifier_.resize(config_.feature_dim, k_total);
        for (Eigen::Index c = 0; c < classifier_.cols(); ++c)
            for (Eigen::Index r = 0; r < classifier_.rows(); ++r) classifier_(r, c) = uniform(rng);
        learnable_velocity_ = Matrix::Zero(classifier_.rows(), classifier_.cols());
    } else {
        classifier_ = terminus_.matrix();
    }

    train_ = materialize(plan_, task_, Split::Train);
    test_ = materialize(plan_, task_, Split::Test);
}

bool IncrementalLearner::uses_head() const noexcept {
    return config_.regime == Regime::Fscil || config_.regime == Regime::Gcil;
}

SgdOptions IncrementalLearner::sgd(double lr) const {
    return SgdOptions{lr, config_.momentum, config_.weight_decay};
}

Matrix IncrementalLearner::backbone_features(const Matrix& inputs) const {
    return backbone_.forward(inputs);
}

Matrix IncrementalLearner::features(const Matrix& inputs) const {
    Matrix h = backbone_.forward(inputs);
    return head_ ? head_->forward(h) : h;
}

ClassId IncrementalLearner::predict(const Vector& input) const {
    Matrix x = input;
    return predict_batch(x).front();
}

std::vector<ClassId> IncrementalLearner::predict_batch(const Matrix& inputs) const {
    const Matrix mu = features(inputs);
    std::vector<ClassId> out;
    out.reserve(static_cast<std::size_t>(mu.cols()));
    for (Eigen::Index i = 0; i < mu.cols(); ++i) {
        if (config_.classifier == ClassifierKind::Learnable) {
            if (active_.empty()) throw Error(ErrorCode::EmptyList, "no active classes");
            ClassId best = -1;
            double best_logit = -std::numeric_limits<double>::infinity();
            for (ClassId c : active_) {
                const double z = classifier_.col(c).dot(mu.col(i));
                if (z > best_logit) {
                    best_logit = z;
                    best = c;
                }
            }
            out.push_back(best);
        } else {
            out.push_back(predict_from_feature(mu.col(i), classifier_, active_));
        }
    }
    return out;
}

double IncrementalLearner::lambda_for_session(int t) const {
    if (t <= 0) return 0.0;
    if (!config_.adaptive_lambda) return config_.lambda_base;
    const auto old_classes = static_cast<double>(plan_.classes_through(t - 1).size());
    const auto new_classes =
        static_cast<double>(plan_.sessions.at(static_cast<std::size_t>(t)).classes.size());
    return config_.lambda_base * std::sqrt(old_classes / new_classes);
}

void IncrementalLearner::open_session(const SessionDescriptor& descriptor) {
    if (descriptor.t != completed_) {
        throw Error(ErrorCode::InvalidArgument, "expected session " + std::to_string(completed_) +
                                                    ", got " + std::to_string(descriptor.t));
    }
    for (ClassId c : descriptor.classes) {
        if (std::binary_search(active_.begin(), active_.end(), c)) {
            throw Error(ErrorCode::InvariantViolation,
                        "class " + std::to_string(c) + " reappears in session " +
                            std::to_string(descriptor.t));
        }
        if (c < 0 || c >= terminus_.size()) {
            throw Error(ErrorCode::IndexOutOfRange, "class outside the terminus");
        }
    }
    active_.insert(active_.end(), descriptor.classes.begin(), descriptor.classes.end());
    std::sort(active_.begin(), active_.end());
}

PrototypeState IncrementalLearner::session_prototypes(const SessionDescriptor& descriptor,
                                                      const Matrix& inputs,
                                                      const std::vector<ClassId>& labels,
                                                      bool fly) const {
    const int epochs = descriptor.t == 0 ? config_.base_epochs : config_.incremental_epochs;
    PrototypeState state(epochs);
    for (ClassId c : active_) state.add_fixed_class(c, terminus_.prototype(c));
    if (!fly || descriptor.t == 0 || config_.classifier == ClassifierKind::Learnable ||
        config_.schedule == PrototypeSchedule::NctOnly) {
        return state;
    }
    const Matrix mu = features(inputs);
    for (ClassId c : descriptor.classes) {
        std::vector<Eigen::Index> idx;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
        if (idx.empty()) continue;
        state.add_novel_class(c, compute_ncm(columns_of(mu, idx)), terminus_.prototype(c));
    }
    return state;
}

std::vector<double> IncrementalLearner::run_epochs(const TrainingSet& set,
                                                   const PrototypeState& prototypes, int epochs,
                                                   double lr, double lambda_eff,
                                                   bool through_backbone,
                                                   std::uint64_t session_tag) {
    std::vector<double> curve;
    const auto n = static_cast<std::size_t>(set.inputs.cols());
    if (n == 0) return curve;
    if (!through_backbone && !head_) {
        throw Error(ErrorCode::InvalidArgument, "projection-only training needs a head");
    }

    const bool learnable = config_.classifier == ClassifierKind::Learnable;
    const bool distill = through_backbone && lambda_eff > 0.0;
    if (distill && teacher_backbone_.empty()) {
        throw Error(ErrorCode::MissingTeacher, "distillation requested without a teacher");
    }
    Matrix teacher_mu;
    if (distill) {
        teacher_mu = teacher_backbone_.forward(set.inputs);
        if (!teacher_head_.empty()) teacher_mu = teacher_head_.forward(teacher_mu);
    }

    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(derive_seed(config_.seed, kShuffleTag), session_tag));
    const auto batch_size = static_cast<std::size_t>(config_.batch_size);

    std::size_t skipped = 0;
    for (int e = 0; e < epochs; ++e) {
        const int proto_epoch = config_.schedule == PrototypeSchedule::NcmOnly ? 0 : e;
        Matrix epoch_protos = terminus_.matrix();
        for (ClassId c : active_) epoch_protos.col(c) = prototypes.effective_prototype(c, proto_epoch);
        const EtfTerminus epoch_frame(epoch_protos, terminus_.kind(), terminus_.seed());

        const double lr_e = cosine_annealed_lr(lr, lr * config_.min_lr_ratio, e, epochs);
        const SgdOptions opts = sgd(lr_e);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;

        for (std::size_t start = 0; start < n; start += batch_size) {
            const std::size_t stop = std::min(n, start + batch_size);
            const auto b = static_cast<Eigen::Index>(stop - start);
            Matrix xb(set.inputs.rows(), b);
            std::vector<ClassId> yb;
            for (std::size_t j = start; j < stop; ++j) {
                xb.col(static_cast<Eigen::Index>(j - start)) = set.inputs.col(order[j]);
                yb.push_back(set.labels[static_cast<std::size_t>(order[j])]);
            }

            ForwardCache f_cache, g_cache;
            Matrix mu;
            if (through_backbone) {
                mu = backbone_.forward(xb, f_cache);
                if (head_) mu = head_->forward(mu, g_cache);
            } else {
                mu = head_->forward(xb, g_cache);
            }

            Matrix grad_mu = Matrix::Zero(mu.rows(), b);
            Matrix grad_w;
            if (learnable) grad_w = Matrix::Zero(classifier_.rows(), classifier_.cols());
            for (Eigen::Index i = 0; i < b; ++i) {
                const ClassId y = yb[static_cast<std::size_t>(i)];
                const Vector m = mu.col(i);
                try {
                    LossValueAndGrad main;
                    if (learnable) {
                        Vector logits(static_cast<Eigen::Index>(active_.size()));
                        Eigen::Index label_pos = 0;
                        for (std::size_t k = 0; k < active_.size(); ++k) {
                            logits(static_cast<Eigen::Index>(k)) = classifier_.col(active_[k]).dot(m);
                            if (active_[k] == y) label_pos = static_cast<Eigen::Index>(k);
                        }
                        const LossValueAndGrad ce = softmax_cross_entropy(logits, label_pos);
                        main.value = ce.value;
                        main.grad = Vector::Zero(m.size());
                        for (std::size_t k = 0; k < active_.size(); ++k) {
                            const double g = ce.grad(static_cast<Eigen::Index>(k));
                            main.grad += g * classifier_.col(active_[k]);
                            grad_w.col(active_[k]) += (g / static_cast<double>(b)) * m;
                        }
                    } else if (config_.loss == LossKind::CrossEntropy) {
                        main = cross_entropy_fixed(m, epoch_frame, active_, y, config_.ce_scale);
                    } else {
                        main = misalignment_loss(m, epoch_protos.col(y));
                    }
                    if (distill) {
                        main = combined_loss(main, distillation_loss(m, teacher_mu.col(order[start + static_cast<std::size_t>(i)])),
                                             lambda_eff);
                    }
                    loss_sum += main.value;
                    grad_mu.col(i) = main.grad / static_cast<double>(b);
                } catch (const Error& err) {
                    if (err.code() != ErrorCode::ZeroFeature) throw;
                    ++skipped;
                }
            }

            Matrix grad_h = grad_mu;
            if (head_) {
                ParameterGrads g_grads;
                grad_h = head_->backward(g_cache, grad_mu, g_grads);
                SgdOptions head_opts = opts;
                head_opts.weight_decay = config_.head_weight_decay;
                head_->step(g_grads, head_opts);
            }
            if (through_backbone && !backbone_.frozen()) {
                ParameterGrads f_grads;
                backbone_.backward(f_cache, grad_h, f_grads);
                backbone_.step(f_grads, opts);
            }
            if (learnable) {
                learnable_velocity_ = opts.momentum * learnable_velocity_ + grad_w +
                                      opts.weight_decay * classifier_;
                classifier_ -= opts.learning_rate * learnable_velocity_;
            }
        }
        curve.push_back(loss_sum / static_cast<double>(n));
    }
    if (skipped > 0) {
        warnings_.push_back("session " + std::to_string(completed_) + ": " + std::to_string(skipped) +
                            " zero-feature sample updates skipped");
    }
    return curve;
}

void IncrementalLearner::select_exemplars(const SessionDescriptor& descriptor,
                                          const SessionBatch& data) {
    if (data.inputs.cols() == 0) return;
    const Matrix mu = features(data.inputs);
    for (ClassId c : descriptor.classes) {
        std::vector<Eigen::Index> idx;
        for (std::size_t i = 0; i < data.labels.size(); ++i)
            if (data.labels[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
        if (idx.empty()) continue;
        std::vector<Eigen::Index> picked;
        try {
            picked = herding_select(columns_of(mu, idx), exemplars_.budget());
        } catch (const Error& err) {
            if (err.code() != ErrorCode::ZeroFeature) throw;
            // Herding is undefined on dead features; keep the first samples instead.
            warnings_.push_back("session " + std::to_string(descriptor.t) + ": class " +
                                std::to_string(c) + " has zero features, exemplars taken in order");
            const auto count = std::min(idx.size(), exemplars_.budget());
            for (std::size_t j = 0; j < count; ++j) picked.push_back(static_cast<Eigen::Index>(j));
        }
        std::vector<Exemplar> list;
        for (Eigen::Index p : picked) {
            list.push_back(Exemplar{data.inputs.col(idx[static_cast<std::size_t>(p)]), descriptor.t});
        }
        exemplars_.add_class(c, std::move(list));
    }
}

void IncrementalLearner::record_means(const SessionBatch& data) {
    if (data.inputs.cols() == 0) return;
    const bool was_frozen = backbone_.frozen();
    backbone_.set_frozen(true);
    record_feature_means(backbone_, data.inputs, data.labels, feature_means_);
    backbone_.set_frozen(was_frozen);
}

void IncrementalLearner::close_session(const SessionDescriptor& descriptor,
                                       SessionOutcome& outcome) {
    ++completed_;
    outcome.t = descriptor.t;
    evaluate(outcome);
}

void IncrementalLearner::check_label_space(const std::vector<ClassId>& predictions) const {
    for (ClassId p : predictions) {
        if (p >= 0 && !std::binary_search(active_.begin(), active_.end(), p)) {
            throw Error(ErrorCode::InvariantViolation,
                        "prediction " + std::to_string(p) + " outside the seen label space");
        }
    }
}

void IncrementalLearner::evaluate(SessionOutcome& outcome) const {
    const int t = outcome.t;
    Matrix test_x(task_.input_dim, 0), train_x(task_.input_dim, 0);
    std::vector<ClassId> test_y, train_y;
    for (int s = 0; s <= t; ++s) {
        const auto& te = test_[static_cast<std::size_t>(s)];
        const auto& tr = train_[static_cast<std::size_t>(s)];
        test_x = hstack(test_x, te.inputs);
        train_x = hstack(train_x, tr.inputs);
        test_y.insert(test_y.end(), te.labels.begin(), te.labels.end());
        train_y.insert(train_y.end(), tr.labels.begin(), tr.labels.end());
    }

    const Matrix test_mu = features(test_x);
    std::vector<ClassId> predicted;
    if (config_.classifier == ClassifierKind::Learnable) predicted = predict_batch(test_x);
    const bool by_cosine = predicted.empty();
    for (Eigen::Index i = 0; by_cosine && i < test_mu.cols(); ++i) {
        try {
            predicted.push_back(predict_from_feature(test_mu.col(i), classifier_, active_));
        } catch (const Error& err) {
            if (err.code() != ErrorCode::ZeroFeature) throw;
            predicted.push_back(-1);
        }
    }
    check_label_space(predicted);
    outcome.accuracy = top1_accuracy(predicted, test_y);
    if (!(outcome.accuracy >= 0.0 && outcome.accuracy <= 1.0)) {
        throw Error(ErrorCode::InvariantViolation, "accuracy outside [0, 1]");
    }

    const auto& current = plan_.sessions[static_cast<std::size_t>(t)].classes;
    const auto& base = plan_.sessions.front().classes;
    const Matrix test_unit = normalized_columns(test_mu);
    const Matrix train_unit = normalized_columns(features(train_x));
    outcome.test_each = nc_diagnostics(test_unit, test_y, classifier_, current);
    outcome.test_acc = nc_diagnostics(test_unit, test_y, classifier_, active_);
    outcome.test_base = nc_diagnostics(test_unit, test_y, classifier_, base);
    outcome.train_each = nc_diagnostics(train_unit, train_y, classifier_, current);
    outcome.train_acc = nc_diagnostics(train_unit, train_y, classifier_, active_);
    outcome.train_base = nc_diagnostics(train_unit, train_y, classifier_, base);
}

SessionOutcome IncrementalLearner::train_session_cil(const SessionDescriptor& descriptor,
                                                     const SessionBatch& data) {
    if (head_) throw Error(ErrorCode::InvalidArgument, "CIL training expects a backbone-only model");
    const int t = descriptor.t;
    if (t > 0 && teacher_backbone_.empty()) {
        throw Error(ErrorCode::MissingTeacher, "session " + std::to_string(t) + " has no teacher");
    }
    open_session(descriptor);

    TrainingSet set{data.inputs, data.labels};
    if (t > 0 && !exemplars_.empty()) {
        Matrix ex;
        std::vector<ClassId> ey;
        exemplars_.gather(ex, ey);
        set.inputs = hstack(set.inputs, ex);
        set.labels.insert(set.labels.end(), ey.begin(), ey.end());
    }

    const PrototypeState protos = session_prototypes(descriptor, data.inputs, data.labels, true);
    SessionOutcome outcome;
    outcome.branch = "backbone";
    outcome.lambda_eff = lambda_for_session(t);
    const MlpSnapshot teacher_before = teacher_backbone_;
    outcome.loss_curve =
        run_epochs(set, protos, t == 0 ? config_.base_epochs : config_.incremental_epochs,
                   t == 0 ? config_.base_lr : config_.incremental_lr, outcome.lambda_eff, true,
                   static_cast<std::uint64_t>(t));
    if (!(teacher_backbone_ == teacher_before)) {
        throw Error(ErrorCode::InvariantViolation, "teacher changed during the session");
    }

    if (config_.classifier == ClassifierKind::FixedTerminus &&
        config_.schedule == PrototypeSchedule::NcmOnly && t > 0) {
        for (ClassId c : descriptor.classes)
            if (protos.is_novel(c)) classifier_.col(c) = protos.effective_prototype(c, 0);
    }
    select_exemplars(descriptor, data);
    teacher_backbone_ = backbone_.snapshot();
    close_session(descriptor, outcome);
    return outcome;
}

SessionOutcome IncrementalLearner::train_session_fscil(const SessionDescriptor& descriptor,
                                                       const SessionBatch& data) {
    if (!head_) throw Error(ErrorCode::InvalidArgument, "FSCIL training needs a projection head");
    const int t = descriptor.t;
    open_session(descriptor);
    SessionOutcome outcome;
    const PrototypeState protos = session_prototypes(descriptor, data.inputs, data.labels, false);

    if (t == 0) {
        outcome.branch = "joint";
        backbone_.set_frozen(false);
        head_->set_frozen(false);
        outcome.loss_curve = run_epochs(TrainingSet{data.inputs, data.labels}, protos,
                                        config_.base_epochs, config_.base_lr, 0.0, true, 0);
        backbone_.set_frozen(true);
        record_means(data);
        close_session(descriptor, outcome);
        return outcome;
    }

    outcome.branch = "projection";
    backbone_.set_frozen(true);
    head_->set_frozen(false);
    const std::size_t expected = plan_.classes_through(t - 1).size();
    if (feature_means_.size() != expected) {
        throw Error(ErrorCode::InvariantViolation,
                    "feature-mean memory holds " + std::to_string(feature_means_.size()) +
                        " classes, expected " + std::to_string(expected));
    }
    const Matrix& probe_src = test_.front().inputs;
    const Matrix probe = probe_src.leftCols(std::min<Eigen::Index>(kProbeSamples, probe_src.cols()));
    const Matrix probe_before = backbone_.forward(probe);

    Matrix means;
    std::vector<ClassId> mean_labels;
    feature_means_.gather(means, mean_labels);
    TrainingSet set;
    set.inputs = data.inputs.cols() > 0 ? backbone_.forward(data.inputs)
                                        : Matrix(config_.intermediate_dim, 0);
    set.labels = data.labels;
    set.inputs = hstack(set.inputs, means);
    set.labels.insert(set.labels.end(), mean_labels.begin(), mean_labels.end());
    outcome.loss_curve = run_epochs(set, protos, config_.incremental_epochs, config_.incremental_lr,
                                    0.0, false, static_cast<std::uint64_t>(t));

    if (!(backbone_.forward(probe).array() == probe_before.array()).all()) {
        throw Error(ErrorCode::FrozenViolation, "backbone output changed in session " + std::to_string(t));
    }
    record_means(data);
    close_session(descriptor, outcome);
    return outcome;
}

SessionOutcome IncrementalLearner::train_session_gcil(const SessionDescriptor& descriptor,
                                                      const SessionBatch& data) {
    if (!head_) throw Error(ErrorCode::InvalidArgument, "GCIL training needs a projection head");
    const int t = descriptor.t;
    SessionOutcome outcome;

    if (t == 0) {
        open_session(descriptor);
        const PrototypeState protos = session_prototypes(descriptor, data.inputs, data.labels, false);
        outcome.branch = "joint";
        backbone_.set_frozen(false);
        head_->set_frozen(false);
        outcome.loss_curve = run_epochs(TrainingSet{data.inputs, data.labels}, protos,
                                        config_.base_epochs, config_.base_lr, 0.0, true, 0);
    } else if (descriptor.min_count() > config_.fewshot_threshold) {
        if (teacher_backbone_.empty()) throw Error(ErrorCode::MissingTeacher, "no teacher for session");
        open_session(descriptor);
        outcome.branch = "backbone";
        backbone_.set_frozen(false);
        head_->set_frozen(true);
        TrainingSet set{data.inputs, data.labels};
        if (!exemplars_.empty()) {
            Matrix ex;
            std::vector<ClassId> ey;
            exemplars_.gather(ex, ey);
            set.inputs = hstack(set.inputs, ex);
            set.labels.insert(set.labels.end(), ey.begin(), ey.end());
        }
        const PrototypeState protos = session_prototypes(descriptor, data.inputs, data.labels, true);
        outcome.lambda_eff = lambda_for_session(t);
        const MlpSnapshot head_before = head_->snapshot();
        outcome.loss_curve = run_epochs(set, protos, config_.incremental_epochs,
                                        config_.incremental_lr, outcome.lambda_eff, true,
                                        static_cast<std::uint64_t>(t));
        if (!(head_->snapshot() == head_before)) {
            throw Error(ErrorCode::FrozenViolation, "projection head changed in a backbone session");
        }
        if (config_.classifier == ClassifierKind::FixedTerminus &&
            config_.schedule == PrototypeSchedule::NcmOnly) {
            for (ClassId c : descriptor.classes)
                if (protos.is_novel(c)) classifier_.col(c) = protos.effective_prototype(c, 0);
        }
    } else {
        open_session(descriptor);
        outcome.branch = "projection";
        backbone_.set_frozen(true);
        head_->set_frozen(false);
        const Matrix& probe_src = test_.front().inputs;
        const Matrix probe = probe_src.leftCols(std::min<Eigen::Index>(kProbeSamples, probe_src.cols()));
        const Matrix probe_before = backbone_.forward(probe);
        Matrix means;
        std::vector<ClassId> mean_labels;
        feature_means_.gather(means, mean_labels);
        TrainingSet set;
        set.inputs = data.inputs.cols() > 0 ? backbone_.forward(data.inputs)
                                            : Matrix(config_.intermediate_dim, 0);
        set.labels = data.labels;
        set.inputs = hstack(set.inputs, means);
        set.labels.insert(set.labels.end(), mean_labels.begin(), mean_labels.end());
        // The exemplar store is live in this regime, so its samples are replayed
        // through the frozen backbone next to the stored means.
        if (!exemplars_.empty()) {
            Matrix ex;
            std::vector<ClassId> ey;
            exemplars_.gather(ex, ey);
            set.inputs = hstack(set.inputs, backbone_.forward(ex));
            set.labels.insert(set.labels.end(), ey.begin(), ey.end());
        }
        const PrototypeState protos = session_prototypes(descriptor, data.inputs, data.labels, false);
        outcome.loss_curve = run_epochs(set, protos, config_.incremental_epochs,
                                        config_.incremental_lr, 0.0, false,
                                        static_cast<std::uint64_t>(t));
        if (!(backbone_.forward(probe).array() == probe_before.array()).all()) {
            throw Error(ErrorCode::FrozenViolation, "backbone output changed in a projection session");
        }
    }

    record_means(data);
    select_exemplars(descriptor, data);
    teacher_backbone_ = backbone_.snapshot();
    teacher_head_ = head_->snapshot();
    close_session(descriptor, outcome);
    return outcome;
}

SessionOutcome IncrementalLearner::train_next_session() {
    if (completed_ >= static_cast<int>(plan_.sessions.size())) {
        throw Error(ErrorCode::InvalidArgument, "all planned sessions are done");
    }
    const auto t = static_cast<std::size_t>(completed_);
    const auto& descriptor = plan_.sessions[t];
    switch (config_.regime) {
        case Regime::Cil:
        case Regime::Ltcil: return train_session_cil(descriptor, train_[t]);
        case Regime::Fscil: return train_session_fscil(descriptor, train_[t]);
        case Regime::Gcil: return train_session_gcil(descriptor, train_[t]);
    }
    throw Error(ErrorCode::InvalidArgument, "unknown regime");
}

RunReport IncrementalLearner::run(const SessionObserver& observer) {
    RunReport report;
    while (completed_ < static_cast<int>(plan_.sessions.size())) {
        report.sessions.push_back(train_next_session());
        if (observer) observer(*this, report.sessions.back());
    }
    const auto acc = report.accuracies();
    report.average_accuracy = average_incremental_accuracy(acc);
    report.performance_drop = performance_drop(acc);
    report.warnings = warnings_;
    return report;
}

}  // namespace nct
