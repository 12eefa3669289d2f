#pragma once

#include "nct/etf_terminus.hpp"
#include "nct/memory.hpp"
#include "nct/metrics.hpp"
#include "nct/mlp.hpp"
#include "nct/prototype_flight.hpp"
#include "nct/stream.hpp"
#include "nct/types.hpp"

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nct {

enum class Regime { Cil, Ltcil, Fscil, Gcil };
/// How novel-class prototypes move during an incremental session.
enum class PrototypeSchedule { FlyToCollapse, NctOnly, NcmOnly };
enum class ClassifierKind { FixedTerminus, Learnable };
enum class LossKind { Misalignment, CrossEntropy };

std::string_view regime_name(Regime r) noexcept;
Regime parse_regime(std::string_view text);
std::string_view schedule_name(PrototypeSchedule s) noexcept;
PrototypeSchedule parse_schedule(std::string_view text);
std::string_view classifier_name(ClassifierKind c) noexcept;
ClassifierKind parse_classifier(std::string_view text);
std::string_view loss_kind_name(LossKind l) noexcept;
LossKind parse_loss_kind(std::string_view text);

struct TrainerConfig {
    Regime regime = Regime::Cil;
    int base_epochs = 100;
    int incremental_epochs = 60;
    double base_lr = 0.1;
    double incremental_lr = 0.05;
    double min_lr_ratio = 0.01;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    /// Decay for the projection head. The misalignment loss ignores feature
    /// scale, so decay on the head's output layer shrinks |mu| and inflates the
    /// effective step of later sessions.
    double head_weight_decay = 0.0;
    int batch_size = 64;
    double lambda_base = 5.0;
    /// lambda_eff = lambda_base * sqrt(|old classes| / |new classes|) when set.
    bool adaptive_lambda = true;
    int exemplars_per_class = 20;
    ClassifierKind classifier = ClassifierKind::FixedTerminus;
    LossKind loss = LossKind::Misalignment;
    double ce_scale = 16.0;
    PrototypeSchedule schedule = PrototypeSchedule::FlyToCollapse;
    FrameKind frame = FrameKind::SimplexEtf;
    /// Prototype columns in the terminus; 0 means one per planned class.
    int terminus_size = 0;
    /// GCIL: sessions whose smallest class has more samples than this finetune f.
    int fewshot_threshold = 5;
    std::vector<Eigen::Index> hidden = {64, 64};
    Eigen::Index feature_dim = 32;
    /// Width of f's output when a projection head is used (FSCIL, GCIL).
    Eigen::Index intermediate_dim = 64;
    /// Hidden width of the projection head; 0 means 2 * feature_dim.
    Eigen::Index projection_width = 0;
    std::uint64_t seed = 0;

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

struct SessionOutcome {
    int t = 0;
    double accuracy = 0.0;
    std::string branch;  // "backbone", "projection" or "joint"
    std::vector<double> loss_curve;  // mean training loss per epoch
    double lambda_eff = 0.0;
    NcDiagnostics train_each, train_acc, train_base;
    NcDiagnostics test_each, test_acc, test_base;
};

struct RunReport {
    std::vector<SessionOutcome> sessions;
    double average_accuracy = 0.0;
    double performance_drop = 0.0;
    std::vector<std::string> warnings;

    std::vector<double> accuracies() const;
};

/// argmax_k cos(feature, prototype_k) over `active` classes; ties go to the
/// lowest class id. Throws ZeroFeature or EmptyList.
ClassId predict_from_feature(const Vector& feature, const Matrix& prototypes,
                             std::span<const ClassId> active);

/// Runs one incremental stream end to end. Owns the model (backbone f, optional
/// projection head g, terminus, classifier columns, memories, teacher) and the
/// materialized train/test data.
class IncrementalLearner {
public:
    IncrementalLearner(TrainerConfig config, SessionPlan plan, SyntheticTaskSpec task);

    const TrainerConfig& config() const noexcept { return config_; }
    const SessionPlan& plan() const noexcept { return plan_; }
    const EtfTerminus& terminus() const noexcept { return terminus_; }
    const Mlp& backbone() const noexcept { return backbone_; }
    const std::optional<Mlp>& head() const noexcept { return head_; }
    const ExemplarStore& exemplars() const noexcept { return exemplars_; }
    const FeatureMeanMemory& feature_means() const noexcept { return feature_means_; }
    const MlpSnapshot& teacher() const noexcept { return teacher_backbone_; }
    /// Prediction prototypes, one column per class id.
    const Matrix& classifier() const noexcept { return classifier_; }
    const std::vector<ClassId>& active_classes() const noexcept { return active_; }
    const std::vector<SessionBatch>& train_data() const noexcept { return train_; }
    const std::vector<SessionBatch>& test_data() const noexcept { return test_; }
    int sessions_completed() const noexcept { return completed_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    /// Raw model output mu for a batch (g(f(x)) when a head exists).
    Matrix features(const Matrix& inputs) const;
    /// Backbone output only (h for the two-stage models).
    Matrix backbone_features(const Matrix& inputs) const;

    ClassId predict(const Vector& input) const;
    std::vector<ClassId> predict_batch(const Matrix& inputs) const;

    /// Next session through the regime's training path, then evaluation.
    SessionOutcome train_next_session();

    // Regime-specific session training on explicit data. Each expects
    // `descriptor.t == sessions_completed()`.
    SessionOutcome train_session_cil(const SessionDescriptor& descriptor, const SessionBatch& data);
    SessionOutcome train_session_fscil(const SessionDescriptor& descriptor, const SessionBatch& data);
    SessionOutcome train_session_gcil(const SessionDescriptor& descriptor, const SessionBatch& data);

    using SessionObserver = std::function<void(const IncrementalLearner&, const SessionOutcome&)>;
    RunReport run(const SessionObserver& observer = {});

    double lambda_for_session(int t) const;

private:
    struct TrainingSet;

    bool uses_head() const noexcept;
    SgdOptions sgd(double lr) const;
    void open_session(const SessionDescriptor& descriptor);
    void close_session(const SessionDescriptor& descriptor, SessionOutcome& outcome);
    void evaluate(SessionOutcome& outcome) const;
    PrototypeState session_prototypes(const SessionDescriptor& descriptor, const Matrix& inputs,
                                      const std::vector<ClassId>& labels, bool fly) const;
    std::vector<double> run_epochs(const TrainingSet& set, const PrototypeState& prototypes,
                                   int epochs, double lr, double lambda_eff, bool through_backbone,
                                   std::uint64_t session_tag);
    void select_exemplars(const SessionDescriptor& descriptor, const SessionBatch& data);
    void record_means(const SessionBatch& data);
    void check_label_space(const std::vector<ClassId>& predictions) const;

    TrainerConfig config_;
    SessionPlan plan_;
    SyntheticTaskSpec task_;
    EtfTerminus terminus_;
    Mlp backbone_;
    std::optional<Mlp> head_;
    Matrix classifier_;
    Matrix learnable_velocity_;
    ExemplarStore exemplars_;
    FeatureMeanMemory feature_means_;
    MlpSnapshot teacher_backbone_;
    MlpSnapshot teacher_head_;
    std::vector<ClassId> active_;
    std::vector<SessionBatch> train_;
    std::vector<SessionBatch> test_;
    std::vector<std::string> warnings_;
    int completed_ = 0;
};

}  // namespace nct
