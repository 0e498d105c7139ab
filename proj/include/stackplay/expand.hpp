#pragma once

#include "stackplay/classify.hpp"
#include "stackplay/nn.hpp"
#include "stackplay/simworld.hpp"

#include <map>
#include <string>
#include <vector>

namespace stackplay::expand {

using sim::ClassName;

inline const std::vector<ClassName> kBaseClasses = {ClassName::cube, ClassName::sphere, ClassName::egg};
inline const std::vector<ClassName> kCurriculum = {ClassName::cylinder, ClassName::rect_prism, ClassName::cone,
                                                   ClassName::capsule,  ClassName::pyramid,    ClassName::small_cube};

enum class Mode { dynamic, fixed };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

struct ExpandConfig {
    std::vector<int> base_hidden = {200, 100, 50, 25};
    /// Hidden widths of the constant-size network.
    std::vector<int> static_hidden = {200, 100, 50, 25, 25, 25, 25, 25, 25, 25};
    int added_width = 25;
    std::size_t base_samples = 5000;
    std::size_t finetune_total = 600;
    std::size_t test_per_class = 200;
    double val_fraction = 0.2;
    int base_epochs = 100;
    int finetune_epochs = 100;
    std::vector<double> lr_grid = {1e-3, 1e-4, 1e-5};
    int batch_size = 32;
    double weight_decay = 0.01;
    int patience = 15;
    int frozen_layers = 2;
    /// Freeze every layer except the newly added one at each step.
    bool freeze_all_but_new = false;
    std::size_t concept_per_label = 300;
    std::size_t concept_test = 120;
    std::uint64_t seed = 0;

    nn::TrainConfig train_config(int epochs, std::uint64_t stream) const;
};

/// Draws fresh, non-overlapping records per class from fixed pools; each
/// class is visited in its own seeded permutation.
class Sampler {
public:
    Sampler(std::map<ClassName, sim::Dataset> pools, std::uint64_t seed);

    /// Throws InputError naming the class and shortfall when exhausted.
    sim::Dataset draw(ClassName c, std::size_t n);
    std::size_t remaining(ClassName c) const;

private:
    struct Pool {
        sim::Dataset records;
        std::vector<std::size_t> order;
        std::size_t cursor = 0;
    };
    std::map<ClassName, Pool> pools_;
};

/// Builds a labelled set from per-class record lists (label = list index).
nn::LabeledData labeled(const std::vector<sim::Dataset>& per_class);

struct TrainVal {
    nn::LabeledData train;
    nn::LabeledData val;
};

/// Per-label split: round(fraction * n_label) of each label go to val.
TrainVal stratified_split(const nn::LabeledData& data, double val_fraction, std::uint64_t seed);

/// floor(total / k), the per-class fine-tuning budget with k classes.
std::size_t samples_per_class(std::size_t total, std::size_t k);

struct StepReport {
    int step = 0;
    std::vector<std::string> classes;
    std::string new_class;
    std::size_t samples_per_class = 0;
    std::size_t samples_total = 0;
    double chosen_lr = 0.0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    classify::ConfusionMatrix confusion;
    /// Share of old-class test probes whose argmax over the old classes is
    /// unchanged by the step (1 for the base step).
    double head_preservation = 1.0;
    std::size_t hidden_layers = 0;
    bool frozen_intact = true;

    nlohmann::json to_json() const;
};

struct TransferRun {
    Mode mode = Mode::dynamic;
    nn::Network net;
    std::vector<ClassName> classes;
    std::vector<StepReport> steps;
    /// Copies of the permanently frozen layers taken right after base training.
    std::vector<nn::Layer> frozen_reference;

    bool frozen_layers_intact() const;
};

/// Trains the base network on cube/sphere/egg (lr grid, early stopping on a
/// stratified validation split) and records step 0.
TransferRun train_base(Mode mode, Sampler& sampler, const ExpandConfig& config);

/// One class-incremental step. Throws InputError when the class is known.
void transfer_step(TransferRun& run, ClassName new_class, Sampler& sampler, const ExpandConfig& config);

/// Base followed by every curriculum step.
TransferRun run_curriculum(Mode mode, Sampler& sampler, const ExpandConfig& config);

struct ConceptReport {
    nn::Network net;
    double chosen_lr = 0.0;
    double test_accuracy = 0.0;
    /// Agreement between predictions and label_contact on the test set.
    double oracle_agreement = 0.0;
    classify::ConfusionMatrix confusion;

    nlohmann::json to_json() const;
};

inline const std::vector<std::string> kConceptLabels = {"flat", "round"};

/// Labels records with label_contact (0 = flat, 1 = round).
nn::LabeledData concept_data(const sim::Dataset& records);

/// Draws `flat` flat and `round` round records spread over all nine classes.
sim::Dataset draw_concept_records(Sampler& sampler, std::size_t flat, std::size_t round);

/// Adds a hidden layer on top of the source's last hidden layer, swaps in a
/// binary head, and fine-tunes on exactly concept_per_label samples of each
/// label. Throws InputError when the training labels are not balanced.
ConceptReport train_concept_head(const nn::Network& source, const sim::Dataset& train_records,
                                 const sim::Dataset& test_records, const ExpandConfig& config);

}  // namespace stackplay::expand
