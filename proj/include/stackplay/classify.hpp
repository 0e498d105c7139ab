#pragma once

#include "stackplay/nn.hpp"
#include "stackplay/simworld.hpp"

#include <string>
#include <vector>

namespace stackplay::classify {

using nn::Matrix;

/// counts[truth][predicted].
struct ConfusionMatrix {
    std::vector<std::string> classes;
    std::vector<std::vector<long>> counts;

    long total() const;
    long row_sum(std::size_t truth) const;
    double accuracy() const;
    /// counts[a][b] + counts[b][a]
    long confusion_between(std::size_t a, std::size_t b) const;
    std::size_t index_of(const std::string& name) const;
    /// Per-class precision and recall (0 when undefined).
    std::vector<double> precision() const;
    std::vector<double> recall() const;
};

ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted,
                          const std::vector<std::string>& classes);

struct MdsEmbedding {
    Matrix coords;  // n x dims
    double stress = 0.0;
    std::vector<std::string> predicted;
    std::vector<std::string> truth;
};

/// Classical (Torgerson) MDS of the rows of `points`. Each axis is signed so
/// its largest-magnitude coordinate is positive; axes without positive
/// eigenvalue are zero.
MdsEmbedding mds_embed(const Matrix& points, int dims = 2);

Matrix pairwise_distances(const Matrix& points);

struct Split {
    std::vector<std::string> classes;
    nn::LabeledData train;
    nn::LabeledData test;
};

/// Per-class shuffle under `seed`, then the first `train_per_class` records
/// to train and the next `test_per_class` to test. Classes keep the order of
/// `per_class`. Test columns are shuffled jointly so any prefix mixes classes.
Split make_split(const std::vector<std::pair<sim::ClassName, const sim::Dataset*>>& per_class,
                 std::size_t train_per_class, std::size_t test_per_class, std::uint64_t seed,
                 sim::FeatureLayout layout = sim::FeatureLayout::freeplay);

nn::Matrix feature_matrix(const sim::Dataset& records, sim::FeatureLayout layout);

struct BaselineConfig {
    std::vector<int> hidden = {200, 100, 50, 25};
    nn::TrainConfig train{};
    std::size_t train_per_class = 1600;
    std::size_t test_per_class = 400;
    std::size_t mds_points = 200;

    BaselineConfig() {
        train.lr = 1e-4;
        train.batch_size = 32;
        train.epochs = 200;
        train.weight_decay = 0.01;
    }
};

/// Dense leaky-ReLU stack with a linear softmax head, inputs standardised.
nn::Network build_classifier(int input, const std::vector<int>& hidden, int classes, Rng& rng);

struct BaselineResult {
    nn::Network net;
    nn::History history;
    ConfusionMatrix confusion;
    MdsEmbedding mds;
};

/// Trains on split.train for the configured epochs (no early stopping) and
/// evaluates on split.test. Warns when class counts deviate from the
/// configured per-class sizes.
BaselineResult train_baseline(const Split& split, const BaselineConfig& config);

/// MDS of the last hidden layer over the first `n` test columns.
MdsEmbedding embed_last_hidden(const nn::Network& net, const Split& split, std::size_t n);

/// Euclidean distance between the centroids of two labelled groups in an
/// embedding (labels taken from `truth`).
double centroid_distance(const MdsEmbedding& e, const std::string& a, const std::string& b);

// Exports; byte-deterministic.
std::string confusion_csv(const ConfusionMatrix& m);
std::string confusion_svg(const ConfusionMatrix& m, const std::string& title);
std::string mds_csv(const MdsEmbedding& e);
std::string mds_svg(const MdsEmbedding& e, const std::string& title);
nlohmann::json metrics_json(const ConfusionMatrix& m);

}  // namespace stackplay::classify
