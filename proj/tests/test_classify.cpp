#include <gtest/gtest.h>

#include "stackplay/classify.hpp"

#include <cmath>

using namespace stackplay;
using namespace stackplay::classify;

namespace {

sim::Dataset small_freeplay(sim::ClassName c, std::size_t n) {
    return sim::generate_freeplay(c, n, 100 + static_cast<std::uint64_t>(c));
}

struct Corpus {
    std::vector<sim::Dataset> data;
    std::vector<std::pair<sim::ClassName, const sim::Dataset*>> per_class;

    explicit Corpus(std::size_t n) {
        for (sim::ClassName c : sim::kAllClasses) data.push_back(small_freeplay(c, n));
        for (std::size_t i = 0; i < data.size(); ++i) per_class.push_back({sim::kAllClasses[i], &data[i]});
    }
};

}  // namespace

TEST(Mds, CollinearPointsKeepDistances) {
    Matrix p(3, 4);
    p << 0, 0, 0, 0,  //
        1, 0, 0, 0,   //
        2, 0, 0, 0;
    const MdsEmbedding e = mds_embed(p);
    const Matrix d = pairwise_distances(e.coords);
    EXPECT_NEAR(d(0, 1), 1.0, 1e-9);
    EXPECT_NEAR(d(1, 2), 1.0, 1e-9);
    EXPECT_NEAR(d(0, 2), 2.0, 1e-9);
    // rank 1: second axis is zero
    EXPECT_LT(e.coords.col(1).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mds, IdenticalPointsEmbedAtOrigin) {
    const Matrix p = Matrix::Constant(6, 5, 3.25);
    const MdsEmbedding e = mds_embed(p);
    EXPECT_EQ(e.coords.rows(), 6);
    EXPECT_LT(e.coords.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_DOUBLE_EQ(e.stress, 0.0);
}

TEST(Mds, PlanarPointsReproduceDistances) {
    Rng rng(4);
    Matrix p(40, 2);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.normal(0.0, 2.0);
    const MdsEmbedding e = mds_embed(p);
    EXPECT_LT((pairwise_distances(e.coords) - pairwise_distances(p)).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(e.stress, 1e-9);
}

TEST(Mds, RigidMotionLeavesDistancesUnchanged) {
    Rng rng(5);
    Matrix p(30, 3);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.normal(0.0, 1.0);
    const double a = 0.7;
    Eigen::Matrix3d rot;
    rot << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    const Matrix moved = (p * rot.transpose()).rowwise() + Eigen::RowVector3d(4, -2, 9);
    const Matrix d1 = pairwise_distances(mds_embed(p).coords);
    const Matrix d2 = pairwise_distances(mds_embed(moved).coords);
    EXPECT_LT((d1 - d2).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Mds, RejectsTooFewPoints) { EXPECT_THROW(mds_embed(Matrix::Zero(2, 3)), InputError); }

TEST(Confusion, RowSumsAndAccuracy) {
    const ConfusionMatrix m = confusion({0, 0, 1, 1, 2, 2, 2}, {0, 1, 1, 1, 2, 0, 2}, {"a", "b", "c"});
    EXPECT_EQ(m.row_sum(0), 2);
    EXPECT_EQ(m.row_sum(2), 3);
    EXPECT_EQ(m.total(), 7);
    EXPECT_DOUBLE_EQ(m.accuracy(), 5.0 / 7.0);
    EXPECT_EQ(m.confusion_between(0, 2), 1);
    EXPECT_DOUBLE_EQ(m.recall()[1], 1.0);
    EXPECT_DOUBLE_EQ(m.precision()[1], 2.0 / 3.0);
    EXPECT_THROW(confusion({3}, {0}, {"a", "b", "c"}), InputError);
}

TEST(Export, ConfusionCsvFollowsClassOrder) {
    const ConfusionMatrix m = confusion({0, 1}, {1, 1}, {"cube", "sphere"});
    EXPECT_EQ(confusion_csv(m), "truth,cube,sphere\ncube,0,1\nsphere,0,1\n");
    EXPECT_EQ(confusion_svg(m, "t"), confusion_svg(m, "t"));
}

TEST(Export, MdsCsvShape) {
    MdsEmbedding e;
    e.coords = Matrix::Random(5, 2);
    e.truth = {"a", "a", "b", "b", "c"};
    e.predicted = e.truth;
    const std::string csv = mds_csv(e);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "x,y,predicted,truth");
    EXPECT_EQ(csv, mds_csv(e));
    EXPECT_EQ(mds_svg(e, "m"), mds_svg(e, "m"));
}

TEST(Split, SizesAndDeterminism) {
    Corpus c(300);
    const Split a = make_split(c.per_class, 100, 50, 3);
    const Split b = make_split(c.per_class, 100, 50, 3);
    EXPECT_EQ(a.train.size(), 900u);
    EXPECT_EQ(a.test.size(), 450u);
    EXPECT_EQ(a.train.x.rows(), 24);
    EXPECT_TRUE(a.train.x == b.train.x);
    EXPECT_TRUE(a.test.y == b.test.y);
    EXPECT_THROW(make_split(c.per_class, 250, 100, 3), InputError);
}

TEST(Baseline, ShuffledLabelsGiveChance) {
    Corpus c(400);
    Split s = make_split(c.per_class, 200, 200, 9);
    Rng rng(9);
    std::shuffle(s.train.y.begin(), s.train.y.end(), rng.engine());
    BaselineConfig cfg;
    cfg.train.epochs = 3;
    cfg.train.lr = 1e-3;
    const BaselineResult r = train_baseline(s, cfg);
    EXPECT_NEAR(r.confusion.accuracy(), 1.0 / 9.0, 0.03);
}

TEST(Baseline, MemorisesOneRowPerClass) {
    Corpus c(20);
    Split s;
    for (std::size_t k = 0; k < c.data.size(); ++k) s.classes.emplace_back(sim::to_string(sim::kAllClasses[k]));
    sim::Dataset rows;
    std::vector<int> y;
    for (int rep = 0; rep < 4; ++rep) {
        for (std::size_t k = 0; k < c.data.size(); ++k) {
            rows.push_back(c.data[k][0]);
            y.push_back(static_cast<int>(k));
        }
    }
    s.train = {feature_matrix(rows, sim::FeatureLayout::freeplay), y};
    s.test = s.train;
    BaselineConfig cfg;
    cfg.train_per_class = 4;
    cfg.train.lr = 1e-3;
    cfg.train.epochs = 150;
    cfg.train.batch_size = 9;
    const BaselineResult r = train_baseline(s, cfg);
    EXPECT_DOUBLE_EQ(r.confusion.accuracy(), 1.0);
    for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(r.confusion.row_sum(k), 4);
}
