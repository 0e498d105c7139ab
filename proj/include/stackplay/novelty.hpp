#pragma once

#include "stackplay/classify.hpp"
#include "stackplay/nn.hpp"
#include "stackplay/simworld.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stackplay::novelty {

using nn::Matrix;
using nn::Vector;

inline constexpr int kPadLength = 10;

/// Pads an episode (rows = attempts, 1..10 of them) to 10 rows by repeating
/// its last row. Throws InputError for an empty or over-long episode.
Matrix pad_episode(const Matrix& episode);

/// Column selection from an rl19 episode: rl19 keeps all 19 columns,
/// rl16_nojitter drops the three jitter columns.
Matrix to_layout(const Matrix& rl19_episode, sim::FeatureLayout layout);

/// Row-major flattening of a padded episode into one input column.
Vector flatten(const Matrix& padded);

struct ClassData {
    std::string name;
    std::vector<Matrix> train;  // padded, first 90
    std::vector<Matrix> dev;    // next 10
    std::vector<Matrix> pool;   // remainder, used for detection batches
};

/// Pads every episode, converts it to `layout` and splits 90/10/remainder in
/// episode order. Throws InputError naming the class when it has fewer than
/// train + dev episodes.
ClassData split_class(const std::string& name, const std::vector<Matrix>& rl19_episodes, sim::FeatureLayout layout,
                      std::size_t train = 90, std::size_t dev = 10);

struct CnnConfig {
    int conv1_filters = 256;
    int conv1_stride = 8;
    int conv2_filters = 128;
    int conv2_kernel = 4;
    int conv2_stride = 2;
    int fc_width = 64;
    int epochs = 500;
    double lr = 1e-3;
    /// Episodes per minibatch.
    int batch_size = 10;
    std::uint64_t seed = 0;
};

/// conv(c -> filters1, kernel c, stride 8) -> conv(kernel 4, stride 2) ->
/// fc 64 -> fc 64 -> linear head, ReLU throughout. Input length 10c.
nn::Network build_cnn(int c, int classes, const CnnConfig& config, Rng& rng);

/// Index of the embedding layer (second fully-connected layer).
inline constexpr std::size_t kEmbeddingLayer = 3;

struct CnnModel {
    nn::Network net;
    std::vector<std::string> classes;
    sim::FeatureLayout layout = sim::FeatureLayout::rl19;
    classify::ConfusionMatrix dev_confusion;

    /// Per-class dev recall, in class order.
    std::vector<double> dev_accuracy() const;
};

/// Trains on the union of the classes' train episodes. Throws InputError for
/// fewer than two classes or mixed feature widths.
CnnModel train_cnn(const std::vector<ClassData>& known, sim::FeatureLayout layout, const CnnConfig& config);

/// Columns of the input matrix for a list of padded episodes.
Matrix batch_matrix(const std::vector<Matrix>& padded);

/// 64-d embeddings, one row per episode.
Matrix embed(const nn::Network& net, const std::vector<Matrix>& padded);

/// Head predictions (class indices), one per episode.
std::vector<int> classify_episodes(const nn::Network& net, const std::vector<Matrix>& padded);

/// 1 - cosine similarity. Throws InputError for a zero-norm vector.
double cosine_distance(const Vector& a, const Vector& b);

struct EmbeddingSet {
    std::string name;
    Matrix vectors;  // one row per sample

    Vector mean() const;
    /// Per-dimension population standard deviation.
    Vector sd() const;
};

struct DetectConfig {
    double threshold = 25.0;
    double z_threshold = 3.0;
    /// Substitute for a zero sum of known-set outlier ratios.
    double epsilon = 1.0;
    /// Divide by the known-set outlier sum once (inside OR only).
    bool single_division = false;
};

struct NoveltyVerdict {
    std::string nearest;
    std::vector<double> rho_batch;  // post-filter outliers of N
    std::vector<double> rho_known;  // post-filter outliers of S
    double dispersion = 0.0;        // cosdist(mu_S, mu_S + sigma_S)
    double centroid_distance = 0.0; // cosdist(mu_S, mu_N)
    double known_sum = 0.0;         // after the epsilon substitution
    double outlier_ratio = 0.0;
    double d_literal = 0.0;
    double d_single = 0.0;
    double d = 0.0;  // the one compared against T
    double threshold = 0.0;
    bool degenerate = false;
    bool is_novel = false;

    nlohmann::json to_json() const;
};

/// rho of each row of `vectors` relative to the known set's mean and spread.
std::vector<double> rho_values(const Matrix& vectors, const Vector& mu_s, double dispersion);

/// Keeps rho > 1, then drops entries whose z-score within that set is >= z.
std::vector<double> filter_outliers(const std::vector<double>& rho, double z);

/// Decision for a batch N against the known set S (rows are embeddings).
/// Throws InputError when N has fewer than 10 rows or S has no spread.
NoveltyVerdict detect(const EmbeddingSet& known, const Matrix& batch, const DetectConfig& config);

/// Plurality of the head's predictions; ties go to the lower class index.
std::size_t nearest_class(const std::vector<int>& predictions, std::size_t classes);

// ------------------------------------------------------------ experiments

struct Condition {
    std::vector<std::string> known;
    std::vector<std::string> probes;

    std::string name() const;
};

/// The four known-class conditions; probes are cylinder/capsule when not
/// known, plus small_cube.
std::vector<Condition> default_conditions();

struct ExperimentConfig {
    std::vector<Condition> conditions = default_conditions();
    std::vector<std::string> datasets = {"accurate", "imprecise"};
    std::vector<sim::FeatureLayout> layouts = {sim::FeatureLayout::rl19, sim::FeatureLayout::rl16_nojitter};
    int runs = 10;
    std::size_t batch_size = 30;
    CnnConfig cnn{};
    DetectConfig detect{};
    /// Retrain the CNN for every run (otherwise once per cell).
    bool retrain_per_run = false;
    int jobs = 1;
    std::uint64_t seed = 0;
};

struct RunResult {
    std::string condition;
    std::string dataset;
    sim::FeatureLayout layout = sim::FeatureLayout::rl19;
    int run = 0;
    std::string probe;
    NoveltyVerdict verdict;
    bool correct = false;
};

struct CellSummary {
    std::string condition;
    std::string dataset;
    sim::FeatureLayout layout = sim::FeatureLayout::rl19;
    std::string probe;
    int runs = 0;
    int correct = 0;
    double accuracy = 0.0;
    /// Wilson 95% interval.
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct ExperimentResult {
    std::vector<RunResult> runs;
    std::vector<CellSummary> cells;
    /// Dev confusion summed over the CNNs of each condition/dataset/layout.
    std::map<std::string, classify::ConfusionMatrix> dev_confusion;

    /// Mean accuracy over all runs matching the filters ("" = any).
    double accuracy(const std::string& condition, const std::string& dataset, const std::string& probe,
                    std::optional<sim::FeatureLayout> layout) const;
};

/// Episodes per dataset name and class name (rl19 matrices, unpadded).
using EpisodeLibrary = std::map<std::string, std::map<std::string, std::vector<Matrix>>>;

ExperimentResult run_experiment_matrix(const EpisodeLibrary& library, const ExperimentConfig& config);

std::pair<double, double> wilson_interval(int successes, int n, double z = 1.96);

std::string results_csv(const ExperimentResult& r);
nlohmann::json summary_json(const ExperimentResult& r);
std::string summary_svg(const ExperimentResult& r, const std::string& dataset);

}  // namespace stackplay::novelty
