#include "stackplay/novelty.hpp"

#include "stackplay/plot.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <future>
#include <numeric>
#include <set>

namespace stackplay::novelty {

Matrix pad_episode(const Matrix& episode) {
    if (episode.rows() < 1 || episode.rows() > kPadLength) {
        throw InputError(fmt::format("episode must have 1..{} attempts, got {}", kPadLength, episode.rows()));
    }
    Matrix out(kPadLength, episode.cols());
    out.topRows(episode.rows()) = episode;
    for (Eigen::Index r = episode.rows(); r < kPadLength; ++r) out.row(r) = episode.row(episode.rows() - 1);
    return out;
}

namespace {

std::vector<Eigen::Index> layout_columns(sim::FeatureLayout layout) {
    if (layout == sim::FeatureLayout::freeplay) throw InputError("episode layouts are rl19 or rl16_nojitter");
    const auto all = sim::feature_names(sim::FeatureLayout::rl19);
    const auto keep = sim::feature_names(layout);
    std::vector<Eigen::Index> cols;
    for (const auto& name : keep) {
        const auto it = std::find(all.begin(), all.end(), name);
        cols.push_back(static_cast<Eigen::Index>(it - all.begin()));
    }
    return cols;
}

}  // namespace

Matrix to_layout(const Matrix& rl19_episode, sim::FeatureLayout layout) {
    const auto width = static_cast<Eigen::Index>(sim::feature_width(sim::FeatureLayout::rl19));
    if (rl19_episode.cols() != width) {
        throw InputError(fmt::format("expected {} rl19 columns, got {}", width, rl19_episode.cols()));
    }
    const auto cols = layout_columns(layout);
    Matrix out(rl19_episode.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = rl19_episode.col(cols[j]);
    return out;
}

Vector flatten(const Matrix& padded) {
    Vector v(padded.size());
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < padded.rows(); ++r) {
        for (Eigen::Index c = 0; c < padded.cols(); ++c) v(k++) = padded(r, c);
    }
    return v;
}

ClassData split_class(const std::string& name, const std::vector<Matrix>& rl19_episodes, sim::FeatureLayout layout,
                      std::size_t train, std::size_t dev) {
    if (rl19_episodes.size() < train + dev) {
        throw InputError(fmt::format("class {} has {} episodes; need at least {} (train {} + dev {})", name,
                                     rl19_episodes.size(), train + dev, train, dev));
    }
    ClassData d;
    d.name = name;
    for (std::size_t i = 0; i < rl19_episodes.size(); ++i) {
        Matrix e = pad_episode(to_layout(rl19_episodes[i], layout));
        if (i < train) {
            d.train.push_back(std::move(e));
        } else if (i < train + dev) {
            d.dev.push_back(std::move(e));
        } else {
            d.pool.push_back(std::move(e));
        }
    }
    return d;
}

nn::Network build_cnn(int c, int classes, const CnnConfig& config, Rng& rng) {
    if (c < 1 || classes < 2) throw InputError("cnn needs c >= 1 and at least two classes");
    using nn::Activation;
    using nn::LayerSpec;
    const auto conv1 = LayerSpec::conv1d(kPadLength * c, 1, config.conv1_filters, c, config.conv1_stride,
                                         Activation::relu);
    const auto conv2 = LayerSpec::conv1d(conv1.out_len(), config.conv1_filters, config.conv2_filters,
                                         config.conv2_kernel, config.conv2_stride, Activation::relu);
    return nn::Network::build({conv1, conv2, LayerSpec::dense(conv2.output_size(), config.fc_width, Activation::relu),
                               LayerSpec::dense(config.fc_width, config.fc_width, Activation::relu),
                               LayerSpec::dense(config.fc_width, classes, Activation::linear)},
                              rng);
}

std::vector<double> CnnModel::dev_accuracy() const { return dev_confusion.recall(); }

Matrix batch_matrix(const std::vector<Matrix>& padded) {
    if (padded.empty()) return Matrix(0, 0);
    Matrix x(padded.front().size(), static_cast<Eigen::Index>(padded.size()));
    for (std::size_t i = 0; i < padded.size(); ++i) {
        if (padded[i].size() != x.rows()) throw InputError("episodes have mixed widths");
        x.col(static_cast<Eigen::Index>(i)) = flatten(padded[i]);
    }
    return x;
}

CnnModel train_cnn(const std::vector<ClassData>& known, sim::FeatureLayout layout, const CnnConfig& config) {
    if (known.size() < 2) throw InputError("cnn training needs at least two known classes");
    const int c = static_cast<int>(sim::feature_width(layout));
    std::vector<Matrix> train_eps, dev_eps;
    std::vector<int> train_y, dev_y;
    CnnModel model;
    model.layout = layout;
    for (std::size_t k = 0; k < known.size(); ++k) {
        for (const auto& e : known[k].train) {
            if (e.cols() != c) throw InputError(fmt::format("class {} is not in layout {}", known[k].name,
                                                            sim::to_string(layout)));
            train_eps.push_back(e);
            train_y.push_back(static_cast<int>(k));
        }
        for (const auto& e : known[k].dev) {
            dev_eps.push_back(e);
            dev_y.push_back(static_cast<int>(k));
        }
        model.classes.push_back(known[k].name);
    }
    Rng rng = Rng::derive(config.seed, 0);
    model.net = build_cnn(c, static_cast<int>(known.size()), config, rng);
    nn::LabeledData data{batch_matrix(train_eps), train_y};
    nn::fit_input_standardization(model.net, data.x);

    nn::TrainConfig tc;
    tc.lr = config.lr;
    tc.batch_size = config.batch_size;
    tc.epochs = config.epochs;
    tc.seed = Rng::derive(config.seed, 1).next();
    nn::train(model.net, data, tc);

    model.dev_confusion = classify::confusion(dev_y, classify_episodes(model.net, dev_eps), model.classes);
    return model;
}

Matrix embed(const nn::Network& net, const std::vector<Matrix>& padded) {
    if (padded.empty()) return Matrix(0, 0);
    const auto acts = net.activations(batch_matrix(padded));
    return acts.at(kEmbeddingLayer).transpose();
}

std::vector<int> classify_episodes(const nn::Network& net, const std::vector<Matrix>& padded) {
    if (padded.empty()) return {};
    return nn::predict(net, batch_matrix(padded));
}

double cosine_distance(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw InputError("cosine distance of vectors with different sizes");
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw InputError("cosine distance of a zero-norm vector");
    return 1.0 - a.dot(b) / (na * nb);
}

Vector EmbeddingSet::mean() const { return vectors.colwise().mean().transpose(); }

Vector EmbeddingSet::sd() const {
    const Vector mu = mean();
    const Matrix centred = vectors.rowwise() - mu.transpose();
    return (centred.array().square().colwise().sum() / static_cast<double>(vectors.rows())).sqrt().transpose();
}

nlohmann::json NoveltyVerdict::to_json() const {
    return {{"nearest", nearest},
            {"rho_batch", rho_batch},
            {"rho_known", rho_known},
            {"dispersion", dispersion},
            {"centroid_distance", centroid_distance},
            {"known_sum", known_sum},
            {"outlier_ratio", outlier_ratio},
            {"d_literal", d_literal},
            {"d_single", d_single},
            {"d", d},
            {"threshold", threshold},
            {"degenerate", degenerate},
            {"is_novel", is_novel}};
}

std::vector<double> rho_values(const Matrix& vectors, const Vector& mu_s, double dispersion) {
    std::vector<double> rho(static_cast<std::size_t>(vectors.rows()));
    for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
        rho[static_cast<std::size_t>(i)] = cosine_distance(mu_s, vectors.row(i).transpose()) / dispersion;
    }
    return rho;
}

std::vector<double> filter_outliers(const std::vector<double>& rho, double z) {
    std::vector<double> out;
    for (double r : rho) {
        if (r > 1.0) out.push_back(r);
    }
    if (out.size() < 2) return out;
    const double n = static_cast<double>(out.size());
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
    double var = 0.0;
    for (double r : out) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    if (sd == 0.0) return out;
    std::vector<double> kept;
    for (double r : out) {
        if ((r - mean) / sd < z) kept.push_back(r);
    }
    return kept;
}

NoveltyVerdict detect(const EmbeddingSet& known, const Matrix& batch, const DetectConfig& config) {
    if (batch.rows() < 10) throw InputError(fmt::format("detection batch needs >= 10 samples, got {}", batch.rows()));
    if (known.vectors.rows() < 2) throw InputError("known set needs at least two samples");
    if (batch.cols() != known.vectors.cols()) throw InputError("batch and known set have different widths");

    NoveltyVerdict v;
    v.nearest = known.name;
    v.threshold = config.threshold;
    const Vector mu_s = known.mean();
    const Vector sigma_s = known.sd();
    v.dispersion = cosine_distance(mu_s, mu_s + sigma_s);
    if (!(v.dispersion > 0.0)) {
        throw InputError(fmt::format("known set {} has no angular spread", known.name));
    }
    const Vector mu_n = batch.colwise().mean().transpose();
    v.centroid_distance = cosine_distance(mu_s, mu_n);

    v.rho_batch = filter_outliers(rho_values(batch, mu_s, v.dispersion), config.z_threshold);
    v.rho_known = filter_outliers(rho_values(known.vectors, mu_s, v.dispersion), config.z_threshold);
    const double sum_n = std::accumulate(v.rho_batch.begin(), v.rho_batch.end(), 0.0);
    v.known_sum = std::accumulate(v.rho_known.begin(), v.rho_known.end(), 0.0);
    if (v.known_sum == 0.0) {
        v.degenerate = true;
        v.known_sum = config.epsilon;
        spdlog::warn("known set {} has no outliers; using epsilon {}", known.name, config.epsilon);
    }
    v.outlier_ratio = sum_n / v.known_sum;
    v.d_single = v.outlier_ratio * v.centroid_distance / v.dispersion;
    v.d_literal = v.d_single / v.known_sum;
    v.d = config.single_division ? v.d_single : v.d_literal;
    v.is_novel = v.d > config.threshold;
    return v;
}

std::size_t nearest_class(const std::vector<int>& predictions, std::size_t classes) {
    if (classes == 0) throw InputError("nearest class needs at least one class");
    std::vector<std::size_t> votes(classes, 0);
    for (int p : predictions) {
        if (p < 0 || static_cast<std::size_t>(p) >= classes) throw InputError("prediction outside class range");
        ++votes[static_cast<std::size_t>(p)];
    }
    return static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

// ------------------------------------------------------------ experiments

std::string Condition::name() const {
    std::string s;
    for (const auto& k : known) s += (s.empty() ? "" : "+") + k;
    return s;
}

std::vector<Condition> default_conditions() {
    const std::vector<std::vector<std::string>> sets = {{"cube", "sphere"},
                                                        {"cube", "sphere", "cylinder"},
                                                        {"cube", "sphere", "capsule"},
                                                        {"cube", "sphere", "cylinder", "capsule"}};
    std::vector<Condition> out;
    for (const auto& known : sets) {
        Condition c{known, {}};
        for (const std::string p : {"cylinder", "capsule"}) {
            if (std::find(known.begin(), known.end(), p) == known.end()) c.probes.push_back(p);
        }
        c.probes.push_back("small_cube");
        out.push_back(c);
    }
    return out;
}

double ExperimentResult::accuracy(const std::string& condition, const std::string& dataset, const std::string& probe,
                                  std::optional<sim::FeatureLayout> layout) const {
    long n = 0, ok = 0;
    for (const auto& r : runs) {
        if (!condition.empty() && r.condition != condition) continue;
        if (!dataset.empty() && r.dataset != dataset) continue;
        if (!probe.empty() && r.probe != probe) continue;
        if (layout && r.layout != *layout) continue;
        ++n;
        ok += r.correct ? 1 : 0;
    }
    return n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0;
}

std::pair<double, double> wilson_interval(int successes, int n, double z) {
    if (n <= 0) return {0.0, 1.0};
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

namespace {

struct Cell {
    std::size_t condition = 0, dataset = 0, layout = 0;
};

struct CellOutput {
    std::vector<RunResult> runs;
    classify::ConfusionMatrix dev;
};

const std::vector<Matrix>& episodes_of(const EpisodeLibrary& lib, const std::string& dataset,
                                       const std::string& cls) {
    const auto d = lib.find(dataset);
    if (d == lib.end()) throw InputError(fmt::format("no episodes for dataset {}", dataset));
    const auto c = d->second.find(cls);
    if (c == d->second.end()) throw InputError(fmt::format("dataset {} has no episodes for class {}", dataset, cls));
    return c->second;
}

void add_confusion(classify::ConfusionMatrix& into, const classify::ConfusionMatrix& m) {
    if (into.classes.empty()) {
        into = m;
        return;
    }
    for (std::size_t i = 0; i < m.counts.size(); ++i) {
        for (std::size_t j = 0; j < m.counts[i].size(); ++j) into.counts[i][j] += m.counts[i][j];
    }
}

CellOutput run_cell(const EpisodeLibrary& lib, const ExperimentConfig& config, const Cell& cell) {
    const Condition& cond = config.conditions[cell.condition];
    const std::string& dataset = config.datasets[cell.dataset];
    const sim::FeatureLayout layout = config.layouts[cell.layout];
    const std::uint64_t cell_key = (cell.condition * 16 + cell.dataset) * 16 + cell.layout;

    std::vector<ClassData> known;
    for (const auto& k : cond.known) known.push_back(split_class(k, episodes_of(lib, dataset, k), layout));
    std::map<std::string, ClassData> probes;
    for (const auto& p : cond.probes) {
        const auto it = std::find(cond.known.begin(), cond.known.end(), p);
        probes[p] = it != cond.known.end() ? known[static_cast<std::size_t>(it - cond.known.begin())]
                                           : split_class(p, episodes_of(lib, dataset, p), layout);
    }

    CellOutput out;
    std::optional<CnnModel> model;
    std::vector<EmbeddingSet> known_sets;
    for (int run = 0; run < config.runs; ++run) {
        if (!model || config.retrain_per_run) {
            CnnConfig cc = config.cnn;
            const std::uint64_t train_key = config.retrain_per_run ? static_cast<std::uint64_t>(run) : 0;
            cc.seed = Rng::derive(config.seed, cell_key * 1024 + train_key).next();
            spdlog::info("training cnn {} / {} / {} (run {})", cond.name(), dataset, sim::to_string(layout), run);
            model = train_cnn(known, layout, cc);
            add_confusion(out.dev, model->dev_confusion);
            known_sets.clear();
            for (const auto& k : known) known_sets.push_back({k.name, embed(model->net, k.train)});
        }
        Rng draw = Rng::derive(config.seed ^ 0x5eedULL, cell_key * 1024 + static_cast<std::uint64_t>(run));
        for (const auto& p : cond.probes) {
            const ClassData& pd = probes.at(p);
            std::vector<std::size_t> idx(pd.pool.size());
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), draw.engine());
            const std::size_t n = std::min(config.batch_size, idx.size());
            if (n < config.batch_size) {
                spdlog::warn("{} pool has {} episodes; batch of {} requested", p, idx.size(), config.batch_size);
            }
            std::vector<Matrix> batch;
            for (std::size_t i = 0; i < n; ++i) batch.push_back(pd.pool[idx[i]]);
            const std::size_t s = nearest_class(classify_episodes(model->net, batch), known.size());

            RunResult r;
            r.condition = cond.name();
            r.dataset = dataset;
            r.layout = layout;
            r.run = run;
            r.probe = p;
            r.verdict = detect(known_sets[s], embed(model->net, batch), config.detect);
            const bool is_known = std::find(cond.known.begin(), cond.known.end(), p) != cond.known.end();
            const bool expect_novel = !is_known && p != "small_cube";
            r.correct = r.verdict.is_novel == expect_novel;
            out.runs.push_back(std::move(r));
        }
    }
    return out;
}

}  // namespace

ExperimentResult run_experiment_matrix(const EpisodeLibrary& library, const ExperimentConfig& config) {
    if (config.runs < 1) throw InputError("experiment needs at least one run");
    if (config.batch_size < 10) throw InputError("detection batch size must be >= 10");
    std::vector<Cell> cells;
    for (std::size_t d = 0; d < config.datasets.size(); ++d) {
        for (std::size_t l = 0; l < config.layouts.size(); ++l) {
            for (std::size_t c = 0; c < config.conditions.size(); ++c) cells.push_back({c, d, l});
        }
    }
    std::vector<CellOutput> outputs(cells.size());
    const std::size_t jobs = static_cast<std::size_t>(std::max(1, config.jobs));
    for (std::size_t start = 0; start < cells.size(); start += jobs) {
        std::vector<std::future<CellOutput>> futures;
        const std::size_t end = std::min(cells.size(), start + jobs);
        for (std::size_t i = start; i < end; ++i) {
            futures.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred,
                                         [&, i] { return run_cell(library, config, cells[i]); }));
        }
        for (std::size_t i = start; i < end; ++i) outputs[i] = futures[i - start].get();
    }

    ExperimentResult result;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const Cell& cell = cells[i];
        const std::string key = fmt::format("{}/{}/{}", config.conditions[cell.condition].name(),
                                            config.datasets[cell.dataset], sim::to_string(config.layouts[cell.layout]));
        result.dev_confusion[key] = outputs[i].dev;
        for (const auto& p : config.conditions[cell.condition].probes) {
            CellSummary s;
            s.condition = config.conditions[cell.condition].name();
            s.dataset = config.datasets[cell.dataset];
            s.layout = config.layouts[cell.layout];
            s.probe = p;
            for (const auto& r : outputs[i].runs) {
                if (r.probe != p) continue;
                ++s.runs;
                s.correct += r.correct ? 1 : 0;
            }
            s.accuracy = s.runs ? static_cast<double>(s.correct) / s.runs : 0.0;
            std::tie(s.ci_low, s.ci_high) = wilson_interval(s.correct, s.runs);
            result.cells.push_back(s);
        }
        for (auto& r : outputs[i].runs) result.runs.push_back(std::move(r));
    }
    return result;
}

std::string results_csv(const ExperimentResult& r) {
    std::string out =
        "condition,dataset,layout,run,probe,nearest,d,d_single,outlier_ratio,centroid_distance,dispersion,"
        "batch_outliers,known_outliers,degenerate,is_novel,correct\n";
    for (const auto& x : r.runs) {
        const auto& v = x.verdict;
        out += fmt::format("{},{},{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{},{},{}\n", x.condition,
                           x.dataset, sim::to_string(x.layout), x.run, x.probe, v.nearest, v.d, v.d_single,
                           v.outlier_ratio, v.centroid_distance, v.dispersion, v.rho_batch.size(), v.rho_known.size(),
                           v.degenerate ? 1 : 0, v.is_novel ? 1 : 0, x.correct ? 1 : 0);
    }
    return out;
}

nlohmann::json summary_json(const ExperimentResult& r) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : r.cells) {
        cells.push_back({{"condition", c.condition},
                         {"dataset", c.dataset},
                         {"layout", sim::to_string(c.layout)},
                         {"probe", c.probe},
                         {"runs", c.runs},
                         {"correct", c.correct},
                         {"accuracy", c.accuracy},
                         {"ci95", {c.ci_low, c.ci_high}}});
    }
    nlohmann::json by_layout = nlohmann::json::object();
    for (auto layout : {sim::FeatureLayout::rl19, sim::FeatureLayout::rl16_nojitter}) {
        by_layout[std::string(sim::to_string(layout))] = r.accuracy("", "", "", layout);
    }
    nlohmann::json dev = nlohmann::json::object();
    for (const auto& [key, m] : r.dev_confusion) dev[key] = {{"classes", m.classes}, {"counts", m.counts}};
    return {{"format", "stackplay.novelty_summary"},
            {"version", 1},
            {"cells", cells},
            {"accuracy_by_layout", by_layout},
            {"dev_confusion", dev}};
}

std::string summary_svg(const ExperimentResult& r, const std::string& dataset) {
    std::vector<std::string> cats;
    std::vector<double> values, errors;
    for (const auto& c : r.cells) {
        if (c.dataset != dataset) continue;
        cats.push_back(fmt::format("{} | {} | {}", c.condition, c.probe, sim::to_string(c.layout)));
        values.push_back(c.accuracy);
        errors.push_back((c.ci_high - c.ci_low) / 2.0);
    }
    return plot::bar_svg(cats, values, errors, fmt::format("Novelty detection accuracy ({})", dataset));
}

}  // namespace stackplay::novelty
