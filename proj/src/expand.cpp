#include "stackplay/expand.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stackplay::expand {

std::string_view to_string(Mode m) { return m == Mode::dynamic ? "dynamic" : "static"; }

Mode mode_from_string(std::string_view s) {
    if (s == "dynamic") return Mode::dynamic;
    if (s == "static") return Mode::fixed;
    throw InputError("unknown transfer mode '" + std::string(s) + "' (expected dynamic or static)");
}

nn::TrainConfig ExpandConfig::train_config(int epochs, std::uint64_t stream) const {
    nn::TrainConfig c;
    c.lr = lr_grid.empty() ? 1e-4 : lr_grid.front();
    c.lr_grid = lr_grid;
    c.batch_size = batch_size;
    c.epochs = epochs;
    c.weight_decay = weight_decay;
    c.patience = patience;
    c.seed = Rng::derive(seed, stream).next();
    return c;
}

// --------------------------------------------------------------- sampler

Sampler::Sampler(std::map<ClassName, sim::Dataset> pools, std::uint64_t seed) {
    for (auto& [cls, records] : pools) {
        Pool p;
        p.order.resize(records.size());
        std::iota(p.order.begin(), p.order.end(), 0);
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(cls));
        std::shuffle(p.order.begin(), p.order.end(), rng.engine());
        p.records = std::move(records);
        pools_.emplace(cls, std::move(p));
    }
}

sim::Dataset Sampler::draw(ClassName c, std::size_t n) {
    const auto it = pools_.find(c);
    if (it == pools_.end()) throw InputError(fmt::format("no sample pool for class {}", sim::to_string(c)));
    Pool& p = it->second;
    if (p.cursor + n > p.order.size()) {
        throw InputError(fmt::format("sample pool for {} exhausted: need {} more records, {} left",
                                     sim::to_string(c), n, p.order.size() - p.cursor));
    }
    sim::Dataset out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(p.records[p.order[p.cursor++]]);
    return out;
}

std::size_t Sampler::remaining(ClassName c) const {
    const auto it = pools_.find(c);
    return it == pools_.end() ? 0 : it->second.order.size() - it->second.cursor;
}

// ------------------------------------------------------------------ data

nn::LabeledData labeled(const std::vector<sim::Dataset>& per_class) {
    sim::Dataset all;
    std::vector<int> y;
    for (std::size_t k = 0; k < per_class.size(); ++k) {
        all.insert(all.end(), per_class[k].begin(), per_class[k].end());
        y.insert(y.end(), per_class[k].size(), static_cast<int>(k));
    }
    return {classify::feature_matrix(all, sim::FeatureLayout::freeplay), std::move(y)};
}

TrainVal stratified_split(const nn::LabeledData& data, double val_fraction, std::uint64_t seed) {
    if (val_fraction < 0.0 || val_fraction >= 1.0) throw InputError("validation fraction must be in [0, 1)");
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < data.size(); ++i) by_label[data.y[i]].push_back(i);
    std::vector<std::size_t> train_idx, val_idx;
    Rng rng(seed);
    for (auto& [label, idx] : by_label) {
        std::shuffle(idx.begin(), idx.end(), rng.engine());
        const auto n_val = static_cast<std::size_t>(std::lround(val_fraction * static_cast<double>(idx.size())));
        val_idx.insert(val_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
        train_idx.insert(train_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    }
    return {data.subset(train_idx), data.subset(val_idx)};
}

std::size_t samples_per_class(std::size_t total, std::size_t k) {
    if (k == 0) throw InputError("samples_per_class needs k > 0");
    return total / k;
}

namespace {

std::vector<std::string> names(const std::vector<ClassName>& classes) {
    std::vector<std::string> out;
    for (ClassName c : classes) out.emplace_back(sim::to_string(c));
    return out;
}

nn::LabeledData draw_labeled(Sampler& sampler, const std::vector<ClassName>& classes, std::size_t per_class) {
    std::vector<sim::Dataset> parts;
    for (ClassName c : classes) parts.push_back(sampler.draw(c, per_class));
    return labeled(parts);
}

void apply_freezing(TransferRun& run, const ExpandConfig& config, std::size_t new_layer) {
    auto& layers = run.net.layers();
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        const bool original = i < static_cast<std::size_t>(config.frozen_layers);
        layers[i].spec.frozen = original || (config.freeze_all_but_new && i != new_layer);
    }
    layers.back().spec.frozen = false;
}

}  // namespace

bool TransferRun::frozen_layers_intact() const {
    for (std::size_t i = 0; i < frozen_reference.size(); ++i) {
        const nn::Layer& now = net.layers().at(i);
        if (!(now.weights == frozen_reference[i].weights) || !(now.bias == frozen_reference[i].bias)) return false;
    }
    return true;
}

nlohmann::json StepReport::to_json() const {
    return {{"step", step},
            {"classes", classes},
            {"new_class", new_class},
            {"samples_per_class", samples_per_class},
            {"samples_total", samples_total},
            {"chosen_lr", chosen_lr},
            {"val_accuracy", val_accuracy},
            {"test_accuracy", test_accuracy},
            {"confusion", confusion.counts},
            {"head_preservation", head_preservation},
            {"hidden_layers", hidden_layers},
            {"frozen_intact", frozen_intact}};
}

// ------------------------------------------------------------- curriculum

TransferRun train_base(Mode mode, Sampler& sampler, const ExpandConfig& config) {
    TransferRun run;
    run.mode = mode;
    run.classes = kBaseClasses;
    const std::size_t k = run.classes.size();
    std::vector<sim::Dataset> parts;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t n = config.base_samples / k + (i < config.base_samples % k ? 1 : 0);
        parts.push_back(sampler.draw(run.classes[i], n));
    }
    const TrainVal tv = stratified_split(labeled(parts), config.val_fraction, Rng::derive(config.seed, 10).next());

    Rng init = Rng::derive(config.seed, 11);
    const auto& hidden = mode == Mode::dynamic ? config.base_hidden : config.static_hidden;
    run.net = classify::build_classifier(static_cast<int>(tv.train.x.rows()), hidden, static_cast<int>(k), init);
    nn::fit_input_standardization(run.net, tv.train.x);
    const nn::History h = nn::train_with_grid(run.net, tv.train, tv.val, config.train_config(config.base_epochs, 12));

    const nn::LabeledData test = draw_labeled(sampler, run.classes, config.test_per_class);
    StepReport r;
    r.step = 0;
    r.classes = names(run.classes);
    r.samples_per_class = config.base_samples / k;
    r.samples_total = config.base_samples;
    r.chosen_lr = h.chosen_lr;
    r.val_accuracy = h.best_val_accuracy;
    r.confusion = classify::confusion(test.y, nn::predict(run.net, test.x), r.classes);
    r.test_accuracy = r.confusion.accuracy();
    r.hidden_layers = run.net.hidden_count();
    run.steps.push_back(std::move(r));

    for (int i = 0; i < config.frozen_layers && i + 1 < static_cast<int>(run.net.size()); ++i) {
        run.frozen_reference.push_back(run.net.layers()[static_cast<std::size_t>(i)]);
    }
    return run;
}

void transfer_step(TransferRun& run, ClassName new_class, Sampler& sampler, const ExpandConfig& config) {
    if (std::find(run.classes.begin(), run.classes.end(), new_class) != run.classes.end()) {
        throw InputError(fmt::format("class {} is already known", sim::to_string(new_class)));
    }
    const int step = static_cast<int>(run.steps.size());
    const nn::Network source = run.net;
    run.classes.push_back(new_class);
    const std::size_t k = run.classes.size();
    const std::size_t per_class = samples_per_class(config.finetune_total, k);

    const TrainVal tv = stratified_split(draw_labeled(sampler, run.classes, per_class), config.val_fraction,
                                         Rng::derive(config.seed, 200 + static_cast<std::uint64_t>(step)).next());

    Rng rng = Rng::derive(config.seed, 100 + static_cast<std::uint64_t>(step));
    std::size_t new_layer = run.net.size();  // none
    if (run.mode == Mode::dynamic) {
        nn::mutate_head(run.net, nn::HeadMutation::add_layer_and_class, rng, config.added_width);
        new_layer = run.net.size() - 2;
    } else {
        nn::mutate_head(run.net, nn::HeadMutation::add_class, rng);
    }
    apply_freezing(run, config, new_layer);
    const nn::History h = nn::train_with_grid(
        run.net, tv.train, tv.val, config.train_config(config.finetune_epochs, 300 + static_cast<std::uint64_t>(step)));

    const nn::LabeledData test = draw_labeled(sampler, run.classes, config.test_per_class);
    StepReport r;
    r.step = step;
    r.classes = names(run.classes);
    r.new_class = std::string(sim::to_string(new_class));
    r.samples_per_class = per_class;
    r.samples_total = per_class * k;
    r.chosen_lr = h.chosen_lr;
    r.val_accuracy = h.best_val_accuracy;
    const nn::Matrix logits = run.net.forward(test.x);
    r.confusion = classify::confusion(test.y, nn::argmax_columns(logits), r.classes);
    r.test_accuracy = r.confusion.accuracy();

    const std::vector<int> before = nn::predict(source, test.x);
    const std::vector<int> after_old = nn::argmax_columns(logits.topRows(static_cast<Eigen::Index>(k - 1)));
    std::size_t probes = 0, kept = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (test.y[i] >= static_cast<int>(k - 1)) continue;
        ++probes;
        kept += before[i] == after_old[i];
    }
    r.head_preservation = probes ? static_cast<double>(kept) / static_cast<double>(probes) : 1.0;
    r.hidden_layers = run.net.hidden_count();
    r.frozen_intact = run.frozen_layers_intact();
    run.steps.push_back(std::move(r));
}

TransferRun run_curriculum(Mode mode, Sampler& sampler, const ExpandConfig& config) {
    TransferRun run = train_base(mode, sampler, config);
    spdlog::info("{} base: test accuracy {:.4f}", to_string(mode), run.steps.back().test_accuracy);
    for (ClassName c : kCurriculum) {
        transfer_step(run, c, sampler, config);
        spdlog::info("{} +{}: test accuracy {:.4f} ({} per class)", to_string(mode), sim::to_string(c),
                     run.steps.back().test_accuracy, run.steps.back().samples_per_class);
    }
    return run;
}

// ---------------------------------------------------------------- concept

nn::LabeledData concept_data(const sim::Dataset& records) {
    std::vector<int> y;
    y.reserve(records.size());
    for (const sim::AttemptRecord& r : records) {
        y.push_back(sim::label_contact(sim::object_class(r.theme_class), r.post_rotation) == sim::Contact::round);
    }
    return {classify::feature_matrix(records, sim::FeatureLayout::freeplay), std::move(y)};
}

sim::Dataset draw_concept_records(Sampler& sampler, std::size_t flat, std::size_t round) {
    sim::Dataset out;
    std::size_t have[2] = {0, 0};
    const std::size_t need[2] = {flat, round};
    constexpr std::size_t kChunk = 8;
    while (have[0] < need[0] || have[1] < need[1]) {
        for (ClassName c : sim::kAllClasses) {
            for (const sim::AttemptRecord& r : sampler.draw(c, kChunk)) {
                const int label = sim::label_contact(sim::object_class(c), r.post_rotation) == sim::Contact::round;
                if (have[label] < need[label]) {
                    ++have[label];
                    out.push_back(r);
                }
            }
        }
    }
    return out;
}

nlohmann::json ConceptReport::to_json() const {
    return {{"chosen_lr", chosen_lr},
            {"test_accuracy", test_accuracy},
            {"oracle_agreement", oracle_agreement},
            {"labels", kConceptLabels},
            {"confusion", confusion.counts}};
}

ConceptReport train_concept_head(const nn::Network& source, const sim::Dataset& train_records,
                                 const sim::Dataset& test_records, const ExpandConfig& config) {
    const nn::LabeledData data = concept_data(train_records);
    const auto rounds = static_cast<std::size_t>(std::count(data.y.begin(), data.y.end(), 1));
    if (rounds != config.concept_per_label || data.size() - rounds != config.concept_per_label) {
        throw InputError(fmt::format("concept head needs {0} flat + {0} round samples, got {1} flat + {2} round",
                                     config.concept_per_label, data.size() - rounds, rounds));
    }
    if (source.size() < 2) throw InputError("concept head needs a source with hidden layers");

    ConceptReport rep;
    rep.net = source;
    auto& layers = rep.net.layers();
    layers.pop_back();
    const int width = layers.back().spec.output_size();
    Rng rng = Rng::derive(config.seed, 400);
    nn::Network top = nn::Network::build({nn::LayerSpec::dense(width, config.added_width, nn::Activation::leaky_relu),
                                          nn::LayerSpec::dense(config.added_width, 2, nn::Activation::linear)},
                                         rng);
    for (nn::Layer& l : top.layers()) layers.push_back(std::move(l));

    const TrainVal tv = stratified_split(data, config.val_fraction, Rng::derive(config.seed, 401).next());
    const nn::History h = nn::train_with_grid(rep.net, tv.train, tv.val, config.train_config(config.finetune_epochs, 402));
    rep.chosen_lr = h.chosen_lr;

    const nn::LabeledData test = concept_data(test_records);
    const std::vector<int> pred = nn::predict(rep.net, test.x);
    rep.confusion = classify::confusion(test.y, pred, kConceptLabels);
    rep.test_accuracy = rep.confusion.accuracy();
    std::size_t agree = 0;
    for (std::size_t i = 0; i < test_records.size(); ++i) {
        const sim::Contact truth =
            sim::label_contact(sim::object_class(test_records[i].theme_class), test_records[i].post_rotation);
        agree += (pred[i] == 1) == (truth == sim::Contact::round);
    }
    rep.oracle_agreement = test_records.empty() ? 0.0 : static_cast<double>(agree) / static_cast<double>(test_records.size());
    return rep;
}

}  // namespace stackplay::expand
