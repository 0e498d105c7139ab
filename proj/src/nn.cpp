#include "stackplay/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace stackplay::nn {

using nlohmann::json;

std::string to_string(Activation a) {
    switch (a) {
        case Activation::linear: return "linear";
        case Activation::relu: return "relu";
        case Activation::leaky_relu: return "leaky_relu";
        case Activation::tanh: return "tanh";
    }
    return "unknown";
}

std::string to_string(LayerKind k) { return k == LayerKind::dense ? "dense" : "conv1d"; }

namespace {

Activation activation_from_string(const std::string& s) {
    for (Activation a : {Activation::linear, Activation::relu, Activation::leaky_relu, Activation::tanh}) {
        if (to_string(a) == s) return a;
    }
    throw InputError("unknown activation '" + s + "'");
}

Matrix activate(const Matrix& z, const LayerSpec& spec) {
    switch (spec.activation) {
        case Activation::linear: return z;
        case Activation::relu: return z.cwiseMax(0.0);
        case Activation::leaky_relu: return z.unaryExpr([a = spec.alpha](double v) { return v > 0.0 ? v : a * v; });
        case Activation::tanh: return z.array().tanh().matrix();
    }
    return z;
}

/// d_post (in place) becomes d_pre.
void activation_backward(Matrix& d, const Matrix& pre, const Matrix& post, const LayerSpec& spec) {
    switch (spec.activation) {
        case Activation::linear: return;
        case Activation::relu: d = d.cwiseProduct((pre.array() > 0.0).cast<double>().matrix()); return;
        case Activation::leaky_relu: {
            const double a = spec.alpha;
            d = d.cwiseProduct(pre.unaryExpr([a](double v) { return v > 0.0 ? 1.0 : a; }));
            return;
        }
        case Activation::tanh: d = d.cwiseProduct((1.0 - post.array().square()).matrix()); return;
    }
}

/// Gathers every kernel window into one column: column (b * L + p) holds
/// sample b's input positions [p * stride, p * stride + kernel).
Matrix im2col(const Matrix& x, const LayerSpec& s) {
    const int L = s.out_len();
    const int rows = s.kernel * s.in_channels;
    const Eigen::Index batch = x.cols();
    Matrix cols(rows, L * batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
        for (int p = 0; p < L; ++p) {
            cols.col(b * L + p) = x.col(b).segment(static_cast<Eigen::Index>(p) * s.stride * s.in_channels, rows);
        }
    }
    return cols;
}

}  // namespace

// ------------------------------------------------------------------ spec

LayerSpec LayerSpec::dense(int in, int out, Activation act, double alpha) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in_dim = in;
    s.out_dim = out;
    s.activation = act;
    s.alpha = alpha;
    return s;
}

LayerSpec LayerSpec::conv1d(int in_len, int in_channels, int filters, int kernel, int stride, Activation act) {
    LayerSpec s;
    s.kind = LayerKind::conv1d;
    s.in_len = in_len;
    s.in_channels = in_channels;
    s.filters = filters;
    s.kernel = kernel;
    s.stride = stride;
    s.activation = act;
    if (kernel <= 0 || stride <= 0 || kernel > in_len) throw InputError("invalid conv1d geometry");
    return s;
}

int LayerSpec::out_len() const {
    return kind == LayerKind::conv1d ? (in_len - kernel) / stride + 1 : 1;
}

int LayerSpec::input_size() const { return kind == LayerKind::dense ? in_dim : in_len * in_channels; }
int LayerSpec::output_size() const { return kind == LayerKind::dense ? out_dim : out_len() * filters; }
int LayerSpec::weight_rows() const { return kind == LayerKind::dense ? out_dim : filters; }
int LayerSpec::weight_cols() const { return kind == LayerKind::dense ? in_dim : kernel * in_channels; }

// --------------------------------------------------------------- network

Network Network::build(const std::vector<LayerSpec>& specs, Rng& rng) {
    Network net;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const LayerSpec& s = specs[i];
        if (i > 0 && specs[i - 1].output_size() != s.input_size()) {
            throw InputError("layer " + std::to_string(i) + " input size does not match previous output");
        }
        Layer layer{s, Matrix(s.weight_rows(), s.weight_cols()), Vector::Zero(s.weight_rows())};
        const double bound = std::sqrt(6.0 / s.weight_cols());
        for (Eigen::Index k = 0; k < layer.weights.size(); ++k) layer.weights.data()[k] = rng.uniform(-bound, bound);
        net.layers_.push_back(std::move(layer));
    }
    return net;
}

int Network::input_size() const { return layers_.empty() ? 0 : layers_.front().spec.input_size(); }
int Network::output_size() const { return layers_.empty() ? 0 : layers_.back().spec.output_size(); }

void Network::set_input_transform(Vector shift, Vector scale) {
    if (shift.size() != scale.size()) throw InputError("input transform shift/scale size mismatch");
    shift_ = std::move(shift);
    scale_ = std::move(scale);
}

Matrix Network::transform_input(const Matrix& x) const {
    if (shift_.size() == 0) return x;
    if (shift_.size() != x.rows()) throw InputError("input transform does not match input rows");
    return (x.colwise() - shift_).array().colwise() * scale_.array();
}

Matrix Network::forward(const Matrix& x_raw, Trace* trace) const {
    if (layers_.empty()) throw InputError("empty network");
    if (x_raw.rows() != input_size()) {
        throw InputError("input has " + std::to_string(x_raw.rows()) + " rows, network expects " +
                         std::to_string(input_size()));
    }
    Matrix a = transform_input(x_raw);
    if (trace) {
        trace->input = a;
        trace->pre.clear();
        trace->post.clear();
    }
    const Eigen::Index batch = a.cols();
    for (const Layer& layer : layers_) {
        const LayerSpec& s = layer.spec;
        Matrix z;
        if (s.kind == LayerKind::dense) {
            z = (layer.weights * a).colwise() + layer.bias;
        } else {
            const Matrix cols = im2col(a, s);
            Matrix zc = (layer.weights * cols).colwise() + layer.bias;
            z = Eigen::Map<Matrix>(zc.data(), static_cast<Eigen::Index>(s.output_size()), batch);
        }
        a = activate(z, s);
        if (trace) {
            trace->pre.push_back(std::move(z));
            trace->post.push_back(a);
        }
    }
    return a;
}

std::vector<Matrix> Network::activations(const Matrix& x) const {
    Trace t;
    forward(x, &t);
    return t.post;
}

Gradients Network::backward(const Trace& trace, const Matrix& d_out, Matrix* d_input) const {
    Gradients g;
    g.weights.resize(layers_.size());
    g.bias.resize(layers_.size());
    std::size_t lowest = layers_.size();
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (!layers_[i].spec.frozen) {
            lowest = i;
            break;
        }
    }
    g.first_trainable = lowest;
    const std::size_t stop = d_input ? 0 : lowest;

    Matrix d = d_out;
    const Eigen::Index batch = d_out.cols();
    for (std::size_t i = layers_.size(); i-- > stop;) {
        const Layer& layer = layers_[i];
        const LayerSpec& s = layer.spec;
        activation_backward(d, trace.pre[i], trace.post[i], s);
        const Matrix& a_in = i == 0 ? trace.input : trace.post[i - 1];
        const bool need_input_grad = i > stop || d_input != nullptr;
        if (s.kind == LayerKind::dense) {
            if (!s.frozen) {
                g.weights[i] = d * a_in.transpose();
                g.bias[i] = d.rowwise().sum();
            }
            if (need_input_grad) d = layer.weights.transpose() * d;
        } else {
            const int L = s.out_len();
            const Eigen::Map<const Matrix> dz(d.data(), s.filters, static_cast<Eigen::Index>(L) * batch);
            if (!s.frozen) {
                const Matrix cols = im2col(a_in, s);
                g.weights[i] = dz * cols.transpose();
                g.bias[i] = dz.rowwise().sum();
            }
            if (need_input_grad) {
                const Matrix dcols = layer.weights.transpose() * dz;
                Matrix dx = Matrix::Zero(s.input_size(), batch);
                const int rows = s.kernel * s.in_channels;
                for (Eigen::Index b = 0; b < batch; ++b) {
                    for (int p = 0; p < L; ++p) {
                        dx.col(b).segment(static_cast<Eigen::Index>(p) * s.stride * s.in_channels, rows) +=
                            dcols.col(b * L + p);
                    }
                }
                d = std::move(dx);
            }
        }
    }
    if (d_input) {
        *d_input = shift_.size() ? Matrix(d.array().colwise() * scale_.array()) : d;
    }
    return g;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

bool Network::operator==(const Network& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    if (shift_.size() != o.shift_.size() || shift_ != o.shift_ || scale_ != o.scale_) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& a = layers_[i];
        const Layer& b = o.layers_[i];
        if (a.spec.kind != b.spec.kind || a.spec.frozen != b.spec.frozen ||
            a.spec.activation != b.spec.activation || a.spec.alpha != b.spec.alpha ||
            a.spec.input_size() != b.spec.input_size() || a.spec.output_size() != b.spec.output_size()) {
            return false;
        }
        if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols()) return false;
        if (a.weights != b.weights || a.bias != b.bias) return false;
    }
    return true;
}

void fit_input_standardization(Network& net, const Matrix& x) {
    if (x.cols() == 0) throw InputError("cannot standardise on an empty matrix");
    const Vector mean = x.rowwise().mean();
    const Vector var = (x.colwise() - mean).array().square().rowwise().mean();
    Vector scale(var.size());
    for (Eigen::Index i = 0; i < var.size(); ++i) scale[i] = var[i] > 1e-24 ? 1.0 / std::sqrt(var[i]) : 1.0;
    net.set_input_transform(mean, scale);
}

// ------------------------------------------------------------------ loss

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
        const double m = logits.col(c).maxCoeff();
        p.col(c) = (logits.col(c).array() - m).exp().matrix();
        p.col(c) /= p.col(c).sum();
    }
    return p;
}

double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* d_logits) {
    if (static_cast<std::size_t>(logits.cols()) != labels.size()) throw InputError("label count mismatch");
    const Eigen::Index n = logits.cols();
    double loss = 0.0;
    Matrix p(logits.rows(), n);
    for (Eigen::Index c = 0; c < n; ++c) {
        const int y = labels[static_cast<std::size_t>(c)];
        if (y < 0 || y >= logits.rows()) throw InputError("label outside softmax arity");
        const double m = logits.col(c).maxCoeff();
        const Vector shifted = logits.col(c).array() - m;
        const double lse = std::log(shifted.array().exp().sum());
        loss += lse - shifted(y);
        p.col(c) = (shifted.array() - lse).exp().matrix();
        p(y, c) -= 1.0;
    }
    if (d_logits) *d_logits = p / static_cast<double>(n);
    return loss / static_cast<double>(n);
}

std::vector<int> argmax_columns(const Matrix& m) {
    std::vector<int> out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        Eigen::Index r = 0;
        m.col(c).maxCoeff(&r);
        out[static_cast<std::size_t>(c)] = static_cast<int>(r);
    }
    return out;
}

// ------------------------------------------------------------------ adam

void Adam::ensure_shapes(const Network& net) {
    const auto& layers = net.layers();
    bool ok = m_w_.size() == layers.size();
    for (std::size_t i = 0; ok && i < layers.size(); ++i) {
        ok = m_w_[i].rows() == layers[i].weights.rows() && m_w_[i].cols() == layers[i].weights.cols();
    }
    if (ok) return;
    m_w_.clear();
    v_w_.clear();
    m_b_.clear();
    v_b_.clear();
    for (const Layer& l : layers) {
        m_w_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
        v_w_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
        m_b_.push_back(Vector::Zero(l.bias.size()));
        v_b_.push_back(Vector::Zero(l.bias.size()));
    }
    t_ = 0;
}

void Adam::step(Network& net, const Gradients& grads) {
    ensure_shapes(net);
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    auto& layers = net.layers();
    for (std::size_t i = grads.first_trainable; i < layers.size(); ++i) {
        Layer& l = layers[i];
        if (l.spec.frozen) continue;
        const Matrix& gw = grads.weights[i];
        const Vector& gb = grads.bias[i];
        m_w_[i] = beta1 * m_w_[i] + (1.0 - beta1) * gw;
        v_w_[i] = beta2 * v_w_[i] + (1.0 - beta2) * gw.cwiseProduct(gw);
        m_b_[i] = beta1 * m_b_[i] + (1.0 - beta1) * gb;
        v_b_[i] = beta2 * v_b_[i] + (1.0 - beta2) * gb.cwiseProduct(gb);
        const Matrix update =
            ((m_w_[i].array() / c1) / ((v_w_[i].array() / c2).sqrt() + eps)).matrix() + weight_decay * l.weights;
        l.weights -= lr * update;
        l.bias -= lr * ((m_b_[i].array() / c1) / ((v_b_[i].array() / c2).sqrt() + eps)).matrix();
    }
}

namespace {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
    return json{{"shape", {m.rows(), m.cols()}}, {"data", flat}};
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("shape").at(0).get<Eigen::Index>();
    const auto cols = j.at("shape").at(1).get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw InputError("matrix data does not match shape");
    Matrix m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
    return m;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

json Adam::to_json() const {
    json j{{"kind", "adam"},  {"lr", lr},   {"beta1", beta1}, {"beta2", beta2},
           {"eps", eps},      {"weight_decay", weight_decay}, {"step", t_}};
    json m = json::array(), v = json::array(), mb = json::array(), vb = json::array();
    for (std::size_t i = 0; i < m_w_.size(); ++i) {
        m.push_back(matrix_to_json(m_w_[i]));
        v.push_back(matrix_to_json(v_w_[i]));
        mb.push_back(vector_to_json(m_b_[i]));
        vb.push_back(vector_to_json(v_b_[i]));
    }
    j["m_w"] = std::move(m);
    j["v_w"] = std::move(v);
    j["m_b"] = std::move(mb);
    j["v_b"] = std::move(vb);
    return j;
}

Adam Adam::from_json(const json& j) {
    Adam a(j.at("lr").get<double>(), j.at("weight_decay").get<double>());
    a.beta1 = j.at("beta1").get<double>();
    a.beta2 = j.at("beta2").get<double>();
    a.eps = j.at("eps").get<double>();
    a.t_ = j.at("step").get<long>();
    for (const auto& m : j.at("m_w")) a.m_w_.push_back(matrix_from_json(m));
    for (const auto& m : j.at("v_w")) a.v_w_.push_back(matrix_from_json(m));
    for (const auto& m : j.at("m_b")) a.m_b_.push_back(vector_from_json(m));
    for (const auto& m : j.at("v_b")) a.v_b_.push_back(vector_from_json(m));
    return a;
}

bool Adam::operator==(const Adam& o) const {
    if (lr != o.lr || beta1 != o.beta1 || beta2 != o.beta2 || eps != o.eps || weight_decay != o.weight_decay ||
        t_ != o.t_ || m_w_.size() != o.m_w_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < m_w_.size(); ++i) {
        if (m_w_[i] != o.m_w_[i] || v_w_[i] != o.v_w_[i] || m_b_[i] != o.m_b_[i] || v_b_[i] != o.v_b_[i]) {
            return false;
        }
    }
    return true;
}

// -------------------------------------------------------------- training

LabeledData LabeledData::subset(const std::vector<std::size_t>& idx) const {
    LabeledData out;
    out.x.resize(x.rows(), static_cast<Eigen::Index>(idx.size()));
    out.y.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        out.x.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(idx[k]));
        out.y.push_back(y[idx[k]]);
    }
    return out;
}

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw InputError("train config: lr must be > 0");
    if (batch_size < 1) throw InputError("train config: batch_size must be >= 1");
    if (epochs < 0) throw InputError("train config: epochs must be >= 0");
    for (double g : lr_grid) {
        if (!(g > 0.0)) throw InputError("train config: lr_grid entries must be > 0");
    }
}

History train(Network& net, const LabeledData& data, const TrainConfig& config, const LabeledData* validation,
              Adam* optimizer) {
    config.validate();
    if (static_cast<std::size_t>(data.x.cols()) != data.y.size()) throw InputError("data/label count mismatch");
    for (int y : data.y) {
        if (y < 0 || y >= net.output_size()) throw InputError("label outside softmax arity");
    }
    Adam local(config.lr, config.weight_decay);
    Adam& adam = optimizer ? *optimizer : local;

    Rng rng(config.seed);
    History hist;
    hist.chosen_lr = config.lr;
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Network best = net;
    int since_best = 0;
    const bool early = validation != nullptr && config.patience > 0;

    Trace trace;
    Matrix d_logits;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            Matrix xb(data.x.rows(), static_cast<Eigen::Index>(end - start));
            std::vector<int> yb(end - start);
            for (std::size_t k = start; k < end; ++k) {
                xb.col(static_cast<Eigen::Index>(k - start)) = data.x.col(static_cast<Eigen::Index>(order[k]));
                yb[k - start] = data.y[order[k]];
            }
            const Matrix logits = net.forward(xb, &trace);
            const double loss = softmax_cross_entropy(logits, yb, &d_logits);
            if (!std::isfinite(loss)) {
                throw PipelineError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                                    std::to_string(start) + " (lr " + std::to_string(adam.lr) + ")");
            }
            loss_sum += loss * static_cast<double>(end - start);
            adam.step(net, net.backward(trace, d_logits));
        }
        hist.loss.push_back(data.size() ? loss_sum / static_cast<double>(data.size()) : 0.0);
        if (validation) {
            const double acc = accuracy(net, *validation);
            hist.val_accuracy.push_back(acc);
            if (hist.best_epoch < 0 || acc >= hist.best_val_accuracy) {
                hist.best_val_accuracy = acc;
                hist.best_epoch = epoch;
                if (early) best = net;
                since_best = 0;
            } else if (early && ++since_best >= config.patience) {
                break;
            }
        }
    }
    if (early && hist.best_epoch >= 0) net = best;
    if (!validation) hist.best_epoch = config.epochs - 1;
    return hist;
}

History train_with_grid(Network& net, const LabeledData& data, const LabeledData& validation,
                        const TrainConfig& config) {
    config.validate();
    const std::vector<double> grid = config.lr_grid.empty() ? std::vector<double>{config.lr} : config.lr_grid;
    std::optional<Network> best_net;
    History best_hist;
    for (double lr : grid) {
        Network candidate = net;
        TrainConfig c = config;
        c.lr = lr;
        History h = train(candidate, data, c, &validation);
        h.chosen_lr = lr;
        if (!best_net || h.best_val_accuracy > best_hist.best_val_accuracy) {
            best_net = std::move(candidate);
            best_hist = std::move(h);
        }
    }
    net = std::move(*best_net);
    return best_hist;
}

std::vector<int> predict(const Network& net, const Matrix& x) { return argmax_columns(net.forward(x)); }

double accuracy(const Network& net, const LabeledData& data) {
    if (data.size() == 0) return 0.0;
    const std::vector<int> p = predict(net, data.x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < p.size(); ++i) hits += p[i] == data.y[i];
    return static_cast<double>(hits) / static_cast<double>(p.size());
}

// ------------------------------------------------------------ grad check

namespace {

// Analytic and central-difference gradients, one flat vector pair per layer.
std::vector<std::pair<Vector, Vector>> gradient_pairs(Network& net, const Vector& input, int label, double h) {
    const Matrix x = input;
    const std::vector<int> y{label};
    Trace trace;
    Matrix d_logits;
    softmax_cross_entropy(net.forward(x, &trace), y, &d_logits);
    const Gradients g = net.backward(trace, d_logits);
    auto loss_at = [&]() { return softmax_cross_entropy(net.forward(x), y, nullptr); };
    auto numeric = [&](double& p) {
        const double saved = p;
        p = saved + h;
        const double up = loss_at();
        p = saved - h;
        const double down = loss_at();
        p = saved;
        return (up - down) / (2.0 * h);
    };

    std::vector<std::pair<Vector, Vector>> out;
    for (std::size_t i = g.first_trainable; i < net.size(); ++i) {
        Layer& layer = net.layers()[i];
        if (layer.spec.frozen) continue;
        const Eigen::Index nw = layer.weights.size();
        Vector a(nw + layer.bias.size()), n(nw + layer.bias.size());
        for (Eigen::Index k = 0; k < nw; ++k) {
            a(k) = g.weights[i].data()[k];
            n(k) = numeric(layer.weights.data()[k]);
        }
        for (Eigen::Index k = 0; k < layer.bias.size(); ++k) {
            a(nw + k) = g.bias[i][k];
            n(nw + k) = numeric(layer.bias[k]);
        }
        out.emplace_back(std::move(a), std::move(n));
    }
    return out;
}

}  // namespace

double grad_check(Network net, const Vector& input, int label, double h) {
    double worst = 0.0;
    for (const auto& [a, n] : gradient_pairs(net, input, label, h)) {
        for (Eigen::Index k = 0; k < a.size(); ++k) {
            worst = std::max(worst, std::abs(a(k) - n(k)) / std::max({std::abs(a(k)), std::abs(n(k)), 1e-12}));
        }
    }
    return worst;
}

double grad_check_layers(Network net, const Vector& input, int label, double h) {
    double worst = 0.0;
    for (const auto& [a, n] : gradient_pairs(net, input, label, h)) {
        worst = std::max(worst, (a - n).norm() / std::max({a.norm(), n.norm(), 1e-12}));
    }
    return worst;
}

// ---------------------------------------------------------- head surgery

void mutate_head(Network& net, HeadMutation mode, Rng& rng, int width, Activation activation) {
    auto& layers = net.layers();
    if (layers.size() < 2 || layers.back().spec.kind != LayerKind::dense) {
        throw InputError("mutate_head needs a dense softmax head above at least one hidden layer");
    }
    if (mode == HeadMutation::add_layer || mode == HeadMutation::add_layer_and_class) {
        Layer& head = layers.back();
        const int in = head.spec.in_dim;
        LayerSpec spec = LayerSpec::dense(in, width, activation);
        Layer fresh{spec, Matrix(width, in), Vector::Zero(width)};
        const double bound = 0.1 * std::sqrt(6.0 / in);
        for (Eigen::Index k = 0; k < fresh.weights.size(); ++k) fresh.weights.data()[k] = rng.uniform(-bound, bound);
        if (width == in) fresh.weights += Matrix::Identity(width, in);
        if (width != in) {
            // head columns no longer line up with its input; redraw them
            head.spec.in_dim = width;
            head.weights = Matrix(head.spec.out_dim, width);
            const double hb = std::sqrt(6.0 / width);
            for (Eigen::Index k = 0; k < head.weights.size(); ++k) head.weights.data()[k] = rng.uniform(-hb, hb);
        }
        layers.insert(layers.end() - 1, std::move(fresh));
    }
    if (mode == HeadMutation::add_class || mode == HeadMutation::add_layer_and_class) {
        Layer& head = layers.back();
        const Eigen::Index rows = head.weights.rows();
        const Eigen::Index cols = head.weights.cols();
        Matrix w(rows + 1, cols);
        w.topRows(rows) = head.weights;
        const double bound = 0.1 * std::sqrt(6.0 / static_cast<double>(cols));
        for (Eigen::Index c = 0; c < cols; ++c) w(rows, c) = rng.uniform(-bound, bound);
        Vector b(rows + 1);
        b.head(rows) = head.bias;
        b(rows) = 0.0;
        head.weights = std::move(w);
        head.bias = std::move(b);
        head.spec.out_dim = static_cast<int>(rows + 1);
    }
}

// ------------------------------------------------------------ checkpoint

json to_json(const Network& net) {
    json layers = json::array();
    for (const Layer& l : net.layers()) {
        const LayerSpec& s = l.spec;
        json j{{"kind", to_string(s.kind)},
               {"activation", to_string(s.activation)},
               {"alpha", s.alpha},
               {"frozen", s.frozen},
               {"weights", matrix_to_json(l.weights)},
               {"bias", vector_to_json(l.bias)}};
        if (s.kind == LayerKind::dense) {
            j["in_dim"] = s.in_dim;
            j["out_dim"] = s.out_dim;
        } else {
            j["in_len"] = s.in_len;
            j["in_channels"] = s.in_channels;
            j["filters"] = s.filters;
            j["kernel"] = s.kernel;
            j["stride"] = s.stride;
        }
        layers.push_back(std::move(j));
    }
    json out{{"format", "stackplay.network"}, {"version", 1}, {"layers", std::move(layers)}};
    if (net.input_shift().size()) {
        out["input_shift"] = vector_to_json(net.input_shift());
        out["input_scale"] = vector_to_json(net.input_scale());
    }
    return out;
}

Network network_from_json(const json& j) {
    if (j.value("format", "") != "stackplay.network") throw InputError("not a stackplay network checkpoint");
    if (j.value("version", 0) != 1) throw InputError("unsupported network checkpoint version");
    Network net;
    for (const json& lj : j.at("layers")) {
        LayerSpec s;
        const Activation act = activation_from_string(lj.at("activation").get<std::string>());
        if (lj.at("kind").get<std::string>() == "dense") {
            s = LayerSpec::dense(lj.at("in_dim").get<int>(), lj.at("out_dim").get<int>(), act);
        } else {
            s = LayerSpec::conv1d(lj.at("in_len").get<int>(), lj.at("in_channels").get<int>(),
                                  lj.at("filters").get<int>(), lj.at("kernel").get<int>(),
                                  lj.at("stride").get<int>(), act);
        }
        s.alpha = lj.at("alpha").get<double>();
        s.frozen = lj.at("frozen").get<bool>();
        Layer layer{s, matrix_from_json(lj.at("weights")), vector_from_json(lj.at("bias"))};
        if (layer.weights.rows() != s.weight_rows() || layer.weights.cols() != s.weight_cols() ||
            layer.bias.size() != s.weight_rows()) {
            throw InputError("checkpoint layer shapes are inconsistent");
        }
        if (!net.layers().empty() && net.layers().back().spec.output_size() != s.input_size()) {
            throw InputError("checkpoint layers do not chain");
        }
        net.layers().push_back(std::move(layer));
    }
    if (j.contains("input_shift")) {
        net.set_input_transform(vector_from_json(j.at("input_shift")), vector_from_json(j.at("input_scale")));
    }
    return net;
}

void save_checkpoint(const std::string& path, const Network& net, const json& metadata, const Adam* optimizer) {
    json j{{"network", to_json(net)}, {"metadata", metadata}};
    if (optimizer) j["optimizer"] = optimizer->to_json();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw PipelineError("cannot write checkpoint " + path);
    out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PipelineError("cannot read checkpoint " + path);
    const json j = json::parse(in);
    Checkpoint c{network_from_json(j.at("network")), std::nullopt, j.value("metadata", json::object())};
    if (j.contains("optimizer")) c.optimizer = Adam::from_json(j.at("optimizer"));
    return c;
}

}  // namespace stackplay::nn
