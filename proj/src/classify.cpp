#include "stackplay/classify.hpp"

#include "stackplay/plot.hpp"

#include <Eigen/Eigenvalues>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stackplay::classify {

long ConfusionMatrix::total() const {
    long t = 0;
    for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), 0L);
    return t;
}

long ConfusionMatrix::row_sum(std::size_t truth) const {
    return std::accumulate(counts.at(truth).begin(), counts.at(truth).end(), 0L);
}

double ConfusionMatrix::accuracy() const {
    const long t = total();
    if (t == 0) return 0.0;
    long hits = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) hits += counts[i][i];
    return static_cast<double>(hits) / static_cast<double>(t);
}

long ConfusionMatrix::confusion_between(std::size_t a, std::size_t b) const { return counts.at(a).at(b) + counts.at(b).at(a); }

std::size_t ConfusionMatrix::index_of(const std::string& name) const {
    const auto it = std::find(classes.begin(), classes.end(), name);
    if (it == classes.end()) throw InputError("class '" + name + "' not in confusion matrix");
    return static_cast<std::size_t>(it - classes.begin());
}

std::vector<double> ConfusionMatrix::precision() const {
    std::vector<double> p(counts.size(), 0.0);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        long col = 0;
        for (const auto& row : counts) col += row[c];
        p[c] = col ? static_cast<double>(counts[c][c]) / static_cast<double>(col) : 0.0;
    }
    return p;
}

std::vector<double> ConfusionMatrix::recall() const {
    std::vector<double> r(counts.size(), 0.0);
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const long row = row_sum(c);
        r[c] = row ? static_cast<double>(counts[c][c]) / static_cast<double>(row) : 0.0;
    }
    return r;
}

ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& predicted,
                          const std::vector<std::string>& classes) {
    if (truth.size() != predicted.size()) throw InputError("truth/prediction length mismatch");
    const int k = static_cast<int>(classes.size());
    ConfusionMatrix m{classes, std::vector<std::vector<long>>(classes.size(), std::vector<long>(classes.size(), 0))};
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i] < 0 || truth[i] >= k || predicted[i] < 0 || predicted[i] >= k) {
            throw InputError("label outside class list");
        }
        ++m.counts[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
    }
    return m;
}

// ------------------------------------------------------------------- MDS

Matrix pairwise_distances(const Matrix& points) {
    const Eigen::Index n = points.rows();
    Matrix d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (points.row(i) - points.row(j)).norm();
    }
    return d;
}

MdsEmbedding mds_embed(const Matrix& points, int dims) {
    const Eigen::Index n = points.rows();
    if (n < 3) throw InputError("mds_embed needs at least 3 points");
    if (dims < 1) throw InputError("mds_embed needs dims >= 1");
    const Matrix d = pairwise_distances(points);
    const Matrix d2 = d.array().square().matrix();
    const Matrix j = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
    Matrix b = -0.5 * j * d2 * j;
    b = 0.5 * (b + b.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(b);
    if (eig.info() != Eigen::Success) throw PipelineError("MDS eigendecomposition failed");

    MdsEmbedding e;
    e.coords = Matrix::Zero(n, dims);
    const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
    for (int k = 0; k < dims && k < n; ++k) {
        const Eigen::Index idx = n - 1 - k;  // eigenvalues ascend
        const double lambda = eig.eigenvalues()[idx];
        if (lambda <= 1e-12 * scale) continue;
        nn::Vector v = eig.eigenvectors().col(idx);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0) v = -v;
        e.coords.col(k) = v * std::sqrt(lambda);
    }
    const Matrix fitted = pairwise_distances(e.coords);
    const double denom = d.squaredNorm();
    e.stress = denom > 0 ? std::sqrt((d - fitted).squaredNorm() / denom) : 0.0;
    return e;
}

// ----------------------------------------------------------------- split

Matrix feature_matrix(const sim::Dataset& records, sim::FeatureLayout layout) {
    const auto width = static_cast<Eigen::Index>(sim::feature_width(layout));
    Matrix x(width, static_cast<Eigen::Index>(records.size()));
    for (std::size_t i = 0; i < records.size(); ++i) {
        const std::vector<double> f = sim::featurize(records[i], layout);
        x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const nn::Vector>(f.data(), width);
    }
    return x;
}

Split make_split(const std::vector<std::pair<sim::ClassName, const sim::Dataset*>>& per_class,
                 std::size_t train_per_class, std::size_t test_per_class, std::uint64_t seed,
                 sim::FeatureLayout layout) {
    Split s;
    sim::Dataset train_records, test_records;
    std::vector<int> train_y, test_y;
    for (std::size_t k = 0; k < per_class.size(); ++k) {
        const auto& [cls, data] = per_class[k];
        s.classes.emplace_back(sim::to_string(cls));
        if (data->size() < train_per_class + test_per_class) {
            throw InputError(fmt::format("class {} has {} records, split needs {}", sim::to_string(cls),
                                         data->size(), train_per_class + test_per_class));
        }
        std::vector<std::size_t> idx(data->size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng = Rng::derive(seed, k);
        std::shuffle(idx.begin(), idx.end(), rng.engine());
        for (std::size_t i = 0; i < train_per_class + test_per_class; ++i) {
            const bool to_train = i < train_per_class;
            (to_train ? train_records : test_records).push_back((*data)[idx[i]]);
            (to_train ? train_y : test_y).push_back(static_cast<int>(k));
        }
    }
    std::vector<std::size_t> order(test_records.size());
    std::iota(order.begin(), order.end(), 0);
    Rng mix = Rng::derive(seed, 0x7e57);
    std::shuffle(order.begin(), order.end(), mix.engine());
    sim::Dataset mixed;
    std::vector<int> mixed_y;
    for (std::size_t i : order) {
        mixed.push_back(test_records[i]);
        mixed_y.push_back(test_y[i]);
    }
    s.train = {feature_matrix(train_records, layout), std::move(train_y)};
    s.test = {feature_matrix(mixed, layout), std::move(mixed_y)};
    return s;
}

// -------------------------------------------------------------- baseline

nn::Network build_classifier(int input, const std::vector<int>& hidden, int classes, Rng& rng) {
    std::vector<nn::LayerSpec> specs;
    int prev = input;
    for (int h : hidden) {
        specs.push_back(nn::LayerSpec::dense(prev, h, nn::Activation::leaky_relu));
        prev = h;
    }
    specs.push_back(nn::LayerSpec::dense(prev, classes, nn::Activation::linear));
    return nn::Network::build(specs, rng);
}

MdsEmbedding embed_last_hidden(const nn::Network& net, const Split& split, std::size_t n) {
    n = std::min<std::size_t>(n, split.test.size());
    const Matrix x = split.test.x.leftCols(static_cast<Eigen::Index>(n));
    const std::vector<Matrix> acts = net.activations(x);
    const Matrix& hidden = acts.at(acts.size() - 2);
    MdsEmbedding e = mds_embed(hidden.transpose(), 2);
    const std::vector<int> pred = nn::argmax_columns(acts.back());
    for (std::size_t i = 0; i < n; ++i) {
        e.truth.push_back(split.classes[static_cast<std::size_t>(split.test.y[i])]);
        e.predicted.push_back(split.classes[static_cast<std::size_t>(pred[i])]);
    }
    return e;
}

BaselineResult train_baseline(const Split& split, const BaselineConfig& config) {
    std::vector<std::size_t> counts(split.classes.size(), 0);
    for (int y : split.train.y) ++counts.at(static_cast<std::size_t>(y));
    for (std::size_t k = 0; k < counts.size(); ++k) {
        if (counts[k] != config.train_per_class) {
            spdlog::warn("class {} has {} training samples, expected {}", split.classes[k], counts[k],
                         config.train_per_class);
        }
    }
    Rng rng = Rng::derive(config.train.seed, 0xba5e);
    BaselineResult r;
    r.net = build_classifier(static_cast<int>(split.train.x.rows()), config.hidden,
                             static_cast<int>(split.classes.size()), rng);
    nn::fit_input_standardization(r.net, split.train.x);
    r.history = nn::train(r.net, split.train, config.train);
    r.confusion = confusion(split.test.y, nn::predict(r.net, split.test.x), split.classes);
    if (split.test.size() >= 3) r.mds = embed_last_hidden(r.net, split, config.mds_points);
    return r;
}

double centroid_distance(const MdsEmbedding& e, const std::string& a, const std::string& b) {
    auto centroid = [&](const std::string& name) {
        nn::Vector c = nn::Vector::Zero(e.coords.cols());
        int n = 0;
        for (std::size_t i = 0; i < e.truth.size(); ++i) {
            if (e.truth[i] == name) {
                c += e.coords.row(static_cast<Eigen::Index>(i)).transpose();
                ++n;
            }
        }
        if (n == 0) throw InputError("no embedded points of class " + name);
        return nn::Vector(c / n);
    };
    return (centroid(a) - centroid(b)).norm();
}

// ---------------------------------------------------------------- export

std::string confusion_csv(const ConfusionMatrix& m) {
    std::string s = "truth";
    for (const auto& c : m.classes) s += "," + c;
    s += "\n";
    for (std::size_t r = 0; r < m.counts.size(); ++r) {
        s += m.classes[r];
        for (long v : m.counts[r]) s += fmt::format(",{}", v);
        s += "\n";
    }
    return s;
}

std::string confusion_svg(const ConfusionMatrix& m, const std::string& title) {
    std::vector<std::vector<double>> v;
    for (const auto& row : m.counts) v.emplace_back(row.begin(), row.end());
    return plot::heatmap_svg(v, m.classes, title);
}

std::string mds_csv(const MdsEmbedding& e) {
    std::string s = "x,y,predicted,truth\n";
    for (Eigen::Index i = 0; i < e.coords.rows(); ++i) {
        const double y = e.coords.cols() > 1 ? e.coords(i, 1) : 0.0;
        s += fmt::format("{:.17g},{:.17g},{},{}\n", e.coords(i, 0), y,
                         static_cast<std::size_t>(i) < e.predicted.size() ? e.predicted[i] : "",
                         static_cast<std::size_t>(i) < e.truth.size() ? e.truth[i] : "");
    }
    return s;
}

std::string mds_svg(const MdsEmbedding& e, const std::string& title) {
    std::vector<plot::Series> groups;
    for (std::size_t i = 0; i < e.truth.size(); ++i) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const plot::Series& g) { return g.name == e.truth[i]; });
        if (it == groups.end()) {
            groups.push_back({e.truth[i], {}, {}});
            it = groups.end() - 1;
        }
        it->x.push_back(e.coords(static_cast<Eigen::Index>(i), 0));
        it->y.push_back(e.coords.cols() > 1 ? e.coords(static_cast<Eigen::Index>(i), 1) : 0.0);
    }
    return plot::scatter_svg(groups, title);
}

nlohmann::json metrics_json(const ConfusionMatrix& m) {
    nlohmann::json per_class = nlohmann::json::object();
    const auto p = m.precision();
    const auto r = m.recall();
    for (std::size_t i = 0; i < m.classes.size(); ++i) {
        per_class[m.classes[i]] = {{"precision", p[i]}, {"recall", r[i]}, {"support", m.row_sum(i)}};
    }
    return {{"accuracy", m.accuracy()}, {"total", m.total()}, {"classes", m.classes}, {"per_class", per_class}};
}

}  // namespace stackplay::classify
