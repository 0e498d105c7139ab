#pragma once

#include "stackplay/common.hpp"

#include <Eigen/Dense>

#include <functional>
#include "json.hpp"
#include <optional>
#include <string>
#include <vector>

namespace stackplay::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { linear, relu, leaky_relu, tanh };
enum class LayerKind { dense, conv1d };

std::string to_string(Activation a);
std::string to_string(LayerKind k);

/// Shape and behaviour of one layer. Activations flow through the network as
/// column vectors; a conv1d layer reads its input as `in_len` positions of
/// `in_channels` values (position-major) and writes `out_len()` positions of
/// `filters` values in the same order.
struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    int in_dim = 0;
    int out_dim = 0;
    int in_len = 0;
    int in_channels = 1;
    int filters = 0;
    int kernel = 0;
    int stride = 1;
    Activation activation = Activation::linear;
    double alpha = 0.01;
    bool frozen = false;

    static LayerSpec dense(int in, int out, Activation act, double alpha = 0.01);
    static LayerSpec conv1d(int in_len, int in_channels, int filters, int kernel, int stride, Activation act);

    int input_size() const;
    int output_size() const;
    /// floor((in_len - kernel) / stride) + 1 for conv1d.
    int out_len() const;
    /// Row/column count of the weight matrix.
    int weight_rows() const;
    int weight_cols() const;
};

struct Layer {
    LayerSpec spec;
    Matrix weights;  // dense: out x in; conv1d: filters x (kernel * in_channels)
    Vector bias;
};

/// Per-layer values kept by a forward pass for backpropagation.
struct Trace {
    Matrix input;
    std::vector<Matrix> pre;   // before activation
    std::vector<Matrix> post;  // after activation
};

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> bias;
    /// Only layers at index >= first_trainable carry gradients.
    std::size_t first_trainable = 0;
};

class Network {
public:
    Network() = default;

    /// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
    static Network build(const std::vector<LayerSpec>& specs, Rng& rng);

    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::size_t size() const { return layers_.size(); }
    std::size_t hidden_count() const { return layers_.empty() ? 0 : layers_.size() - 1; }
    int input_size() const;
    int output_size() const;

    /// Optional per-input standardisation (x - shift) * scale applied before
    /// the first layer; not a trainable parameter.
    void set_input_transform(Vector shift, Vector scale);
    const Vector& input_shift() const { return shift_; }
    const Vector& input_scale() const { return scale_; }

    /// Columns of `x` are samples. Returns the last layer's output (logits for
    /// a classifier). Throws InputError on shape mismatch.
    Matrix forward(const Matrix& x, Trace* trace = nullptr) const;

    /// Output of every layer for one batch (index i = layer i's activation).
    std::vector<Matrix> activations(const Matrix& x) const;

    /// Backpropagates `d_out` (gradient of the loss w.r.t. the network
    /// output). Stops at the lowest trainable layer unless `d_input` is
    /// requested.
    Gradients backward(const Trace& trace, const Matrix& d_out, Matrix* d_input = nullptr) const;

    std::size_t parameter_count() const;

    bool operator==(const Network& other) const;

private:
    Matrix transform_input(const Matrix& x) const;

    std::vector<Layer> layers_;
    Vector shift_;
    Vector scale_;
};

/// Sets the input transform to per-row z-scores of `x` (columns are
/// samples). Rows with zero spread keep scale 1.
void fit_input_standardization(Network& net, const Matrix& x);

Matrix softmax(const Matrix& logits);

/// Mean softmax cross-entropy over columns and its gradient w.r.t. logits.
double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels, Matrix* d_logits);

std::vector<int> argmax_columns(const Matrix& m);

/// Adam with decoupled weight decay applied to weights (not biases). Frozen
/// layers are skipped entirely.
class Adam {
public:
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    Adam() = default;
    Adam(double lr, double weight_decay) : lr(lr), weight_decay(weight_decay) {}

    void step(Network& net, const Gradients& grads);
    void reset() { m_w_.clear(); v_w_.clear(); m_b_.clear(); v_b_.clear(); t_ = 0; }

    long steps() const { return t_; }

    nlohmann::json to_json() const;
    static Adam from_json(const nlohmann::json& j);
    bool operator==(const Adam& other) const;

private:
    void ensure_shapes(const Network& net);

    std::vector<Matrix> m_w_, v_w_;
    std::vector<Vector> m_b_, v_b_;
    long t_ = 0;
};

/// Column-per-sample inputs with integer class labels.
struct LabeledData {
    Matrix x;
    std::vector<int> y;

    std::size_t size() const { return y.size(); }
    LabeledData subset(const std::vector<std::size_t>& idx) const;
};

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 32;
    int epochs = 200;
    double weight_decay = 0.0;
    std::vector<double> lr_grid;
    /// Epochs without validation-accuracy improvement before stopping; 0
    /// disables early stopping.
    int patience = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct History {
    std::vector<double> loss;
    std::vector<double> val_accuracy;
    int best_epoch = -1;
    double best_val_accuracy = 0.0;
    double chosen_lr = 0.0;
};

/// Minibatch training with Adam. With a validation set and patience > 0 the
/// weights of the best validation epoch are restored. Throws PipelineError on
/// a non-finite loss.
History train(Network& net, const LabeledData& data, const TrainConfig& config,
              const LabeledData* validation = nullptr, Adam* optimizer = nullptr);

/// Trains one copy per learning rate in config.lr_grid (or config.lr when the
/// grid is empty) and keeps the copy with the best validation accuracy;
/// earlier grid entries win ties.
History train_with_grid(Network& net, const LabeledData& data, const LabeledData& validation,
                        const TrainConfig& config);

std::vector<int> predict(const Network& net, const Matrix& x);
double accuracy(const Network& net, const LabeledData& data);

/// Central-difference audit of every trainable parameter against
/// backpropagation for the softmax cross-entropy of one sample. Returns
/// max |g_a - g_n| / max(|g_a|, |g_n|, 1e-12).
double grad_check(Network net, const Vector& input, int label, double h = 1e-5);

/// Same audit per layer: max over layers of ||g_a - g_n|| / max(||g_a||, ||g_n||)
/// (weights and bias together). Insensitive to round-off on near-zero entries.
double grad_check_layers(Network net, const Vector& input, int label, double h = 1e-5);

enum class HeadMutation { add_class, add_layer, add_layer_and_class };

/// Grows the classifier. add_class appends one softmax row; add_layer inserts
/// a `width`-unit dense layer between the last hidden layer and the head. New
/// parameters are drawn at 0.1x the init scale; an inserted layer whose width
/// matches its input starts from the identity plus that noise.
void mutate_head(Network& net, HeadMutation mode, Rng& rng, int width = 25,
                 Activation activation = Activation::leaky_relu);

// Checkpoints: versioned JSON, weights row-major as decimal arrays.
nlohmann::json to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

struct Checkpoint {
    Network net;
    std::optional<Adam> optimizer;
    nlohmann::json metadata;
};

void save_checkpoint(const std::string& path, const Network& net, const nlohmann::json& metadata,
                     const Adam* optimizer = nullptr);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stackplay::nn
