#include <gtest/gtest.h>

#include "stackplay/expand.hpp"

#include <cmath>
#include <set>

using namespace stackplay;
using namespace stackplay::expand;

namespace {

std::map<ClassName, sim::Dataset> pools(std::size_t n, std::uint64_t seed) {
    std::map<ClassName, sim::Dataset> out;
    for (ClassName c : sim::kAllClasses) out[c] = sim::generate_freeplay(c, n, seed * 100 + static_cast<std::uint64_t>(c));
    return out;
}

ExpandConfig tiny() {
    ExpandConfig cfg;
    cfg.base_hidden = {16, 12, 10, 8};
    cfg.static_hidden = {16, 12, 10, 8, 8, 8, 8, 8, 8, 8};
    cfg.added_width = 8;
    cfg.base_samples = 150;
    cfg.finetune_total = 90;
    cfg.test_per_class = 10;
    cfg.base_epochs = 3;
    cfg.finetune_epochs = 2;
    cfg.lr_grid = {1e-3, 1e-4};
    cfg.patience = 0;
    cfg.concept_per_label = 30;
    cfg.seed = 5;
    return cfg;
}

struct Curriculum {
    TransferRun dynamic;
    TransferRun fixed;
    Curriculum() {
        Sampler a(pools(300, 1), 2);
        dynamic = run_curriculum(Mode::dynamic, a, tiny());
        Sampler b(pools(300, 1), 2);
        fixed = run_curriculum(Mode::fixed, b, tiny());
    }
};

const Curriculum& curriculum() {
    static const Curriculum c;
    return c;
}

}  // namespace

TEST(Budget, FloorOfTotalOverClasses) {
    for (std::size_t k = 1; k <= 12; ++k) {
        std::size_t expect = 0;
        while ((expect + 1) * k <= 600) ++expect;
        EXPECT_EQ(samples_per_class(600, k), expect) << k;
    }
    EXPECT_THROW(samples_per_class(600, 0), InputError);
}

TEST(Budget, CurriculumTraceIsNonincreasing) {
    const auto& steps = curriculum().dynamic.steps;
    ASSERT_EQ(steps.size(), 7u);
    for (std::size_t i = 1; i < steps.size(); ++i) {
        const std::size_t k = steps[i].classes.size();
        EXPECT_EQ(k, i + 3);
        EXPECT_EQ(steps[i].samples_per_class, static_cast<std::size_t>(std::floor(90.0 / static_cast<double>(k))));
        EXPECT_EQ(steps[i].samples_total, steps[i].samples_per_class * k);
        if (i > 1) EXPECT_LE(steps[i].samples_per_class, steps[i - 1].samples_per_class);
    }
}

TEST(Curriculum, OrderAndHeadArity) {
    const auto& run = curriculum().dynamic;
    for (std::size_t i = 0; i < kCurriculum.size(); ++i) {
        EXPECT_EQ(run.steps[i + 1].new_class, sim::to_string(kCurriculum[i]));
        EXPECT_EQ(run.steps[i + 1].confusion.classes.size(), i + 4);
    }
    EXPECT_EQ(run.net.layers().back().spec.output_size(), 9);
}

TEST(Curriculum, DynamicGrowsToTenHiddenLayers) {
    const auto& steps = curriculum().dynamic.steps;
    for (std::size_t i = 0; i < steps.size(); ++i) EXPECT_EQ(steps[i].hidden_layers, 4 + i);
    EXPECT_EQ(curriculum().dynamic.net.hidden_count(), 10u);
}

TEST(Curriculum, StaticKeepsTenHiddenLayers) {
    for (const StepReport& s : curriculum().fixed.steps) EXPECT_EQ(s.hidden_layers, 10u);
    EXPECT_EQ(curriculum().fixed.net.layers().back().spec.output_size(), 9);
}

TEST(Curriculum, FrozenLayersBitIdentical) {
    for (const TransferRun* run : {&curriculum().dynamic, &curriculum().fixed}) {
        ASSERT_EQ(run->frozen_reference.size(), 2u);
        for (const StepReport& s : run->steps) EXPECT_TRUE(s.frozen_intact);
        for (std::size_t i = 0; i < 2; ++i) {
            EXPECT_TRUE(run->net.layers()[i].weights == run->frozen_reference[i].weights);
            EXPECT_TRUE(run->net.layers()[i].bias == run->frozen_reference[i].bias);
        }
    }
}

TEST(Curriculum, Deterministic) {
    Sampler s(pools(300, 1), 2);
    const TransferRun again = run_curriculum(Mode::dynamic, s, tiny());
    ASSERT_EQ(again.steps.size(), curriculum().dynamic.steps.size());
    for (std::size_t i = 0; i < again.steps.size(); ++i) {
        EXPECT_EQ(again.steps[i].to_json().dump(), curriculum().dynamic.steps[i].to_json().dump());
    }
    EXPECT_EQ(nn::to_json(again.net).dump(), nn::to_json(curriculum().dynamic.net).dump());
}

TEST(Curriculum, KnownClassRejected) {
    Sampler s(pools(120, 3), 1);
    ExpandConfig cfg = tiny();
    cfg.base_samples = 60;
    TransferRun run = train_base(Mode::dynamic, s, cfg);
    EXPECT_THROW(transfer_step(run, ClassName::egg, s, cfg), InputError);
    transfer_step(run, ClassName::cone, s, cfg);
    EXPECT_THROW(transfer_step(run, ClassName::cone, s, cfg), InputError);
}

TEST(Curriculum, FreezeAllButNewLeavesOnlyNewLayerAndHeadTrainable) {
    Sampler s(pools(120, 3), 1);
    ExpandConfig cfg = tiny();
    cfg.base_samples = 60;
    cfg.freeze_all_but_new = true;
    TransferRun run = train_base(Mode::dynamic, s, cfg);
    const nn::Network before = run.net;
    transfer_step(run, ClassName::cylinder, s, cfg);
    const auto& layers = run.net.layers();
    for (std::size_t i = 0; i + 2 < layers.size(); ++i) {
        EXPECT_TRUE(layers[i].spec.frozen) << i;
        EXPECT_TRUE(layers[i].weights == before.layers()[i].weights) << i;
    }
    EXPECT_FALSE(layers[layers.size() - 2].spec.frozen);
    EXPECT_FALSE(layers.back().spec.frozen);
}

TEST(Sampler, DrawsAreDisjointAndExhaustionNamesClass) {
    auto p = pools(30, 4);
    Sampler s(p, 9);
    const sim::Dataset a = s.draw(ClassName::cone, 20);
    const sim::Dataset b = s.draw(ClassName::cone, 10);
    EXPECT_EQ(s.remaining(ClassName::cone), 0u);
    std::set<std::string> seen;
    for (const auto* d : {&a, &b}) {
        for (const sim::AttemptRecord& r : *d) seen.insert(nlohmann::json(sim::featurize(r, sim::FeatureLayout::freeplay)).dump());
    }
    EXPECT_EQ(seen.size(), 30u);
    try {
        s.draw(ClassName::cone, 1);
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("cone"), std::string::npos);
    }
}

TEST(Split, StratifiedPerLabel) {
    std::vector<sim::Dataset> parts = {sim::generate_freeplay(ClassName::cube, 50, 1),
                                       sim::generate_freeplay(ClassName::sphere, 30, 2)};
    const TrainVal tv = stratified_split(labeled(parts), 0.2, 3);
    EXPECT_EQ(std::count(tv.val.y.begin(), tv.val.y.end(), 0), 10);
    EXPECT_EQ(std::count(tv.val.y.begin(), tv.val.y.end(), 1), 6);
    EXPECT_EQ(tv.train.size(), 64u);
    EXPECT_THROW(stratified_split(labeled(parts), 1.0, 3), InputError);
}

TEST(Mode, Names) {
    EXPECT_EQ(mode_from_string("static"), Mode::fixed);
    EXPECT_EQ(to_string(mode_from_string("dynamic")), "dynamic");
    EXPECT_THROW(mode_from_string("grow"), InputError);
}

TEST(Concept, LabelsFollowRestRotation) {
    sim::AttemptRecord r = sim::generate_freeplay(ClassName::cylinder, 1, 1).front();
    r.post_rotation = Vec3::Zero();
    r.post_up_offset = 0.0;
    EXPECT_EQ(concept_data({r}).y.front(), 0);

    const sim::Dataset capsules = sim::generate_freeplay(ClassName::capsule, 40, 2);
    for (int y : concept_data(capsules).y) EXPECT_EQ(y, 1);
    const sim::Dataset pyramids = sim::generate_freeplay(ClassName::pyramid, 40, 2);
    for (int y : concept_data(pyramids).y) EXPECT_EQ(y, 0);
}

TEST(Concept, DrawIsBalancedAndCoversClasses) {
    Sampler s(pools(100, 6), 1);
    const sim::Dataset d = draw_concept_records(s, 40, 40);
    const nn::LabeledData data = concept_data(d);
    EXPECT_EQ(std::count(data.y.begin(), data.y.end(), 1), 40);
    EXPECT_EQ(data.size(), 80u);
    std::set<ClassName> classes;
    for (const auto& r : d) classes.insert(r.theme_class);
    EXPECT_EQ(classes.size(), 9u);
}

TEST(Concept, ImbalancedTrainingSetRejected) {
    Sampler s(pools(100, 6), 1);
    const ExpandConfig cfg = tiny();
    const sim::Dataset unbalanced = draw_concept_records(s, 30, 31);
    const sim::Dataset test = draw_concept_records(s, 5, 5);
    EXPECT_THROW(train_concept_head(curriculum().dynamic.net, unbalanced, test, cfg), InputError);
}

TEST(Concept, HeadIsBinaryAndAgreesWithOracleAtReportedRate) {
    Sampler s(pools(100, 6), 1);
    const ExpandConfig cfg = tiny();
    const sim::Dataset train = draw_concept_records(s, 30, 30);
    const sim::Dataset test = draw_concept_records(s, 10, 10);
    const ConceptReport rep = train_concept_head(curriculum().dynamic.net, train, test, cfg);
    EXPECT_EQ(rep.net.layers().back().spec.output_size(), 2);
    EXPECT_EQ(rep.net.hidden_count(), 11u);
    EXPECT_EQ(rep.confusion.total(), 20);
    EXPECT_DOUBLE_EQ(rep.oracle_agreement, rep.test_accuracy);
    // the source network itself is untouched
    EXPECT_EQ(curriculum().dynamic.net.layers().back().spec.output_size(), 9);
}
