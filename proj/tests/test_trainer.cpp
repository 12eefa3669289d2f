#include "doctest.h"
#include "support.hpp"

#include "nct/error.hpp"
#include "nct/trainer.hpp"

#include <cmath>

using namespace nct;

namespace {

SyntheticTaskSpec small_task(int classes, double sigma = 0.5) {
    SyntheticTaskSpec t;
    t.input_dim = 8;
    t.num_classes = classes;
    t.sigma = sigma;
    t.train_per_class = 30;
    t.test_per_class = 10;
    t.seed = 21;
    return t;
}

TrainerConfig small_config(Regime regime) {
    TrainerConfig c;
    c.regime = regime;
    c.base_epochs = 20;
    c.incremental_epochs = 5;
    c.hidden = {16};
    c.feature_dim = 16;
    c.intermediate_dim = 12;
    c.exemplars_per_class = 3;
    c.seed = 4;
    return c;
}

}  // namespace

TEST_CASE("prediction picks the most aligned prototype") {
    const auto t = build_terminus(6, 5, FrameKind::SimplexEtf, 1);
    const std::vector<ClassId> active{0, 1, 2, 3, 4};
    CHECK(predict_from_feature(t.prototype(3), t.matrix(), active) == 3);
    CHECK(predict_from_feature(10.0 * t.prototype(3), t.matrix(), active) == 3);
    const std::vector<ClassId> some{2, 4};
    CHECK(predict_from_feature(t.prototype(3), t.matrix(), some) == 2);
    CHECK_THROWS_AS(predict_from_feature(Vector::Zero(6), t.matrix(), active), Error);
    CHECK_THROWS_AS(predict_from_feature(t.prototype(0), t.matrix(), std::vector<ClassId>{}), Error);
}

TEST_CASE("prediction ties go to the lowest id") {
    const Matrix w = Matrix::Identity(3, 3);
    const std::vector<ClassId> active{2, 1, 0};
    CHECK(predict_from_feature(Vector::LinSpaced(3, 0.0, 1.0).cwiseSign(), w, active) == 1);
    CHECK(predict_from_feature(Vector::Ones(3), w, active) == 0);
}

TEST_CASE("prediction is invariant to positive scaling") {
    Rng rng(2);
    const auto t = build_terminus(6, 5, FrameKind::SimplexEtf, 2);
    const std::vector<ClassId> active{0, 1, 2, 3, 4};
    for (int i = 0; i < 50; ++i) {
        const Vector f = testing::random_vector(6, rng);
        CHECK(predict_from_feature(f, t.matrix(), active) ==
              predict_from_feature(0.01 * f, t.matrix(), active));
    }
}

TEST_CASE("adaptive distillation weight") {
    auto task = small_task(12);
    auto c = small_config(Regime::Cil);
    c.lambda_base = 5.0;
    const IncrementalLearner balanced(c, plan_cil(2, 2, 2, task), task);
    CHECK(balanced.lambda_for_session(0) == 0.0);
    CHECK(balanced.lambda_for_session(1) == doctest::Approx(5.0));
    CHECK(balanced.lambda_for_session(2) == doctest::Approx(5.0 * std::sqrt(2.0)));
    const IncrementalLearner wide(c, plan_cil(8, 2, 2, task), task);
    CHECK(wide.lambda_for_session(1) == doctest::Approx(10.0));
    c.adaptive_lambda = false;
    const IncrementalLearner flat(c, plan_cil(8, 2, 2, task), task);
    CHECK(flat.lambda_for_session(2) == 5.0);
}

TEST_CASE("base session drives the alignment loss toward zero") {
    auto task = small_task(4, 0.3);
    auto c = small_config(Regime::Cil);
    c.base_epochs = 200;
    IncrementalLearner learner(c, plan_cil(4, 0, 2, task), task);
    const auto out = learner.train_next_session();
    CHECK(out.loss_curve.size() == 200);
    CHECK(out.loss_curve.back() < 1e-2);
    CHECK(out.accuracy > 0.9);
}

TEST_CASE("CIL sessions maintain memories and the teacher") {
    auto task = small_task(8);
    const auto c = small_config(Regime::Cil);
    IncrementalLearner learner(c, plan_cil(4, 2, 2, task), task);
    for (int t = 0; t < 3; ++t) {
        const auto out = learner.train_next_session();
        CHECK(out.t == t);
        CHECK(out.branch == "backbone");
        CHECK(learner.exemplars().size() == static_cast<std::size_t>(3 * (4 + 2 * t)));
        CHECK(learner.teacher() == learner.backbone().snapshot());
        CHECK(learner.active_classes().size() == static_cast<std::size_t>(4 + 2 * t));
        CHECK((t == 0) == (out.lambda_eff == 0.0));
    }
    CHECK_THROWS_AS(learner.train_next_session(), Error);
}

TEST_CASE("FSCIL freezes the backbone and grows the mean memory") {
    auto task = small_task(8);
    auto c = small_config(Regime::Fscil);
    IncrementalLearner learner(c, plan_fscil(4, 2, 2, 5, task), task);
    Rng rng(3);
    const Matrix probe = testing::random_matrix(8, 6, rng);
    learner.train_next_session();
    const Matrix h0 = learner.backbone_features(probe);
    CHECK(learner.feature_means().size() == 4);
    for (int t = 1; t <= 2; ++t) {
        const auto before = learner.head()->snapshot();
        const auto out = learner.train_next_session();
        CHECK(out.branch == "projection");
        CHECK(learner.backbone_features(probe) == h0);
        CHECK_FALSE(learner.head()->snapshot() == before);
        CHECK(learner.feature_means().size() == static_cast<std::size_t>(4 + 2 * t));
    }
}

TEST_CASE("GCIL branches on the smallest class count") {
    auto task = small_task(14);
    auto c = small_config(Regime::Gcil);
    const auto plan = plan_gcil(4, 5, 2, 5, 0.2, 6, task);
    IncrementalLearner learner(c, plan, task);
    int backbone = 0, projection = 0;
    for (std::size_t t = 0; t < plan.sessions.size(); ++t) {
        const auto out = learner.train_next_session();
        if (t == 0) {
            CHECK(out.branch == "joint");
            continue;
        }
        const bool large = plan.sessions[t].min_count() > c.fewshot_threshold;
        CHECK(out.branch == (large ? "backbone" : "projection"));
        (large ? backbone : projection) += 1;
        CHECK(learner.feature_means().size() == plan.classes_through(static_cast<int>(t)).size());
    }
    CHECK(backbone + projection == 5);
}

TEST_CASE("five shots sit on the projection side of the threshold") {
    auto task = small_task(8);
    auto c = small_config(Regime::Gcil);
    SessionPlan plan = plan_cil(4, 2, 2, task);
    plan.sessions[1].counts = {5, 5};
    plan.sessions[1].mode = SessionMode::FewShot;
    plan.sessions[2].counts = {6, 30};
    plan.sessions[2].mode = SessionMode::LongTail;
    IncrementalLearner learner(c, plan, task);
    learner.train_next_session();
    CHECK(learner.train_next_session().branch == "projection");
    CHECK(learner.train_next_session().branch == "backbone");
}

TEST_CASE("runs are deterministic") {
    auto task = small_task(8);
    auto c = small_config(Regime::Cil);
    const auto plan = plan_cil(4, 2, 2, task);
    IncrementalLearner a(c, plan, task), b(c, plan, task);
    const auto ra = a.run();
    const auto rb = b.run();
    CHECK(ra.accuracies() == rb.accuracies());
    CHECK(a.backbone().layers() == b.backbone().layers());
    CHECK(ra.average_accuracy == doctest::Approx(average_incremental_accuracy(ra.accuracies())));
}

TEST_CASE("distillation reduces forgetting of the base classes") {
    auto task = small_task(10, 1.0);
    auto c = small_config(Regime::Cil);
    c.base_epochs = 60;
    c.incremental_epochs = 30;
    const auto plan = plan_cil(6, 2, 2, task);
    auto base_accuracy = [&](double lambda) {
        c.lambda_base = lambda;
        IncrementalLearner learner(c, plan, task);
        learner.run();
        const auto& test = learner.test_data().front();
        const auto predicted = learner.predict_batch(test.inputs);
        return top1_accuracy(predicted, test.labels);
    };
    CHECK(base_accuracy(5.0) > base_accuracy(0.0));
}

TEST_CASE("learnable classifier and orthogonal frame variants run") {
    auto task = small_task(8);
    auto c = small_config(Regime::Ltcil);
    c.classifier = ClassifierKind::Learnable;
    c.loss = LossKind::CrossEntropy;
    const auto plan = plan_ltcil(4, 2, 2, 0.2, 30, LongTailOrder::Ordered, 1, task);
    const auto report = IncrementalLearner(c, plan, task).run();
    CHECK(report.sessions.size() == 3);
    c = small_config(Regime::Cil);
    c.frame = FrameKind::OrthogonalFrame;
    c.schedule = PrototypeSchedule::NcmOnly;
    c.terminus_size = 8;
    const auto r2 = IncrementalLearner(c, plan_cil(4, 2, 2, task), task).run();
    CHECK(r2.sessions.back().accuracy > 0.0);
}

TEST_CASE("configuration checks") {
    auto task = small_task(8);
    const auto plan = plan_cil(4, 2, 2, task);
    auto expect_config_error = [&](auto mutate) {
        auto c = small_config(Regime::Cil);
        mutate(c);
        try {
            IncrementalLearner(c, plan, task);
        } catch (const Error& e) {
            return e.code() == ErrorCode::ConfigError;
        }
        return false;
    };
    CHECK(expect_config_error([](TrainerConfig& c) { c.base_epochs = 0; }));
    CHECK(expect_config_error([](TrainerConfig& c) { c.momentum = 1.0; }));
    CHECK(expect_config_error([](TrainerConfig& c) { c.lambda_base = -1.0; }));
    CHECK(expect_config_error([](TrainerConfig& c) { c.terminus_size = 3; }));
    CHECK(expect_config_error([](TrainerConfig& c) { c.hidden = {0}; }));
    CHECK(parse_regime(regime_name(Regime::Gcil)) == Regime::Gcil);
    CHECK(parse_schedule(schedule_name(PrototypeSchedule::NcmOnly)) == PrototypeSchedule::NcmOnly);
    CHECK(parse_classifier(classifier_name(ClassifierKind::Learnable)) == ClassifierKind::Learnable);
    CHECK(parse_loss_kind(loss_kind_name(LossKind::CrossEntropy)) == LossKind::CrossEntropy);
    CHECK_THROWS_AS(parse_regime("dil"), Error);
}
