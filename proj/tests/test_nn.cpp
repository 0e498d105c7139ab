#include <gtest/gtest.h>

#include "stackplay/nn.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace stackplay;
using namespace stackplay::nn;

namespace {

Vector random_vector(int n, Rng& rng) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal(0.0, 1.0);
    return v;
}

/// Two Gaussian blobs on either side of x0 = 0.
LabeledData separable(int n, std::uint64_t seed) {
    Rng rng(seed);
    LabeledData d;
    d.x.resize(2, n);
    for (int i = 0; i < n; ++i) {
        const int y = i % 2;
        d.x(0, i) = (y ? 1.5 : -1.5) + rng.normal(0.0, 0.3);
        d.x(1, i) = rng.normal(0.0, 1.0);
        d.y.push_back(y);
    }
    return d;
}

double logit_sum_abs(const Network& net) {
    double s = 0.0;
    for (const Layer& l : net.layers()) s += l.weights.cwiseAbs().sum() + l.bias.cwiseAbs().sum();
    return s;
}

}  // namespace

TEST(GradCheck, ThreeLayerDense) {
    Rng rng(11);
    Network net = Network::build({LayerSpec::dense(6, 8, Activation::leaky_relu),
                                  LayerSpec::dense(8, 5, Activation::leaky_relu),
                                  LayerSpec::dense(5, 3, Activation::linear)},
                                 rng);
    EXPECT_LT(grad_check(net, random_vector(6, rng), 2), 1e-4);
}

TEST(GradCheck, LinearSingleLayerIsExact) {
    Rng rng(12);
    Network net = Network::build({LayerSpec::dense(4, 3, Activation::linear)}, rng);
    EXPECT_LT(grad_check(net, random_vector(4, rng), 0), 1e-7);
}

TEST(GradCheck, Conv1dStack) {
    Rng rng(13);
    const LayerSpec c1 = LayerSpec::conv1d(10, 3, 4, 3, 1, Activation::tanh);
    const LayerSpec c2 = LayerSpec::conv1d(c1.out_len(), 4, 2, 2, 2, Activation::leaky_relu);
    Network net = Network::build({c1, c2, LayerSpec::dense(c2.output_size(), 3, Activation::linear)}, rng);
    EXPECT_LT(grad_check(net, random_vector(30, rng), 1), 1e-4);
}

TEST(GradCheck, EveryActivation) {
    for (Activation a : {Activation::linear, Activation::relu, Activation::leaky_relu, Activation::tanh}) {
        Rng rng(14);
        Network net = Network::build({LayerSpec::dense(5, 7, a), LayerSpec::dense(7, 4, Activation::linear)}, rng);
        EXPECT_LT(grad_check(net, random_vector(5, rng), 3), 1e-4) << to_string(a);
    }
}

TEST(GradCheck, LayerNormBoundedByElementwise) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(40 + seed);
        Network net = Network::build({LayerSpec::dense(6, 7, Activation::leaky_relu),
                                      LayerSpec::dense(7, 5, Activation::leaky_relu),
                                      LayerSpec::dense(5, 3, Activation::linear)},
                                     rng);
        const Vector x = random_vector(6, rng);
        const double layer = grad_check_layers(net, x, 1);
        EXPECT_LT(layer, 1e-6);
        EXPECT_LE(layer, 2.0 * grad_check(net, x, 1) + 1e-15);
    }
}

TEST(GradCheck, FrozenLowerLayersAndInputTransform) {
    Rng rng(15);
    Network net = Network::build({LayerSpec::dense(4, 6, Activation::tanh), LayerSpec::dense(6, 6, Activation::tanh),
                                  LayerSpec::dense(6, 2, Activation::linear)},
                                 rng);
    net.layers()[0].spec.frozen = true;
    net.set_input_transform(Vector::Constant(4, 0.5), Vector::Constant(4, 2.0));
    EXPECT_LT(grad_check(net, random_vector(4, rng), 1), 1e-4);
}

TEST(Backward, InputGradientMatchesFiniteDifference) {
    Rng rng(16);
    Network net = Network::build({LayerSpec::conv1d(6, 2, 3, 2, 1, Activation::tanh),
                                  LayerSpec::dense(15, 2, Activation::linear)},
                                 rng);
    const Vector x = random_vector(12, rng);
    Trace t;
    Matrix d_logits, d_x;
    softmax_cross_entropy(net.forward(x, &t), {0}, &d_logits);
    net.backward(t, d_logits, &d_x);
    for (int i = 0; i < 12; ++i) {
        Vector up = x, down = x;
        up[i] += 1e-5;
        down[i] -= 1e-5;
        const double num = (softmax_cross_entropy(net.forward(up), {0}, nullptr) -
                            softmax_cross_entropy(net.forward(down), {0}, nullptr)) / 2e-5;
        EXPECT_NEAR(d_x(i, 0), num, 1e-7);
    }
}

TEST(Forward, ZeroWeightsGiveUniformSoftmax) {
    Rng rng(1);
    Network net = Network::build({LayerSpec::dense(3, 5, Activation::relu), LayerSpec::dense(5, 4, Activation::linear)},
                                 rng);
    for (Layer& l : net.layers()) l.weights.setZero();
    const Matrix p = softmax(net.forward(Matrix::Random(3, 6)));
    EXPECT_LT((p.array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(Forward, SoftmaxColumnsSumToOne) {
    Rng rng(2);
    Network net = Network::build({LayerSpec::dense(4, 9, Activation::linear)}, rng);
    Matrix x = 50.0 * Matrix::Random(4, 20);
    const Matrix p = softmax(net.forward(x));
    for (Eigen::Index c = 0; c < p.cols(); ++c) EXPECT_NEAR(p.col(c).sum(), 1.0, 1e-12);
    EXPECT_TRUE(p.allFinite());
}

TEST(Forward, ConvOutputLengthAndWindow) {
    const LayerSpec s = LayerSpec::conv1d(24, 1, 2, 3, 1, Activation::linear);
    EXPECT_EQ(s.out_len(), 22);
    EXPECT_EQ(LayerSpec::conv1d(10, 1, 1, 3, 2, Activation::linear).out_len(), 4);

    Rng rng(3);
    Network net = Network::build({s}, rng);
    net.layers()[0].weights << 1, 0, 0,  // picks window start
                               0, 0, 1;  // picks window end
    net.layers()[0].bias << 0.0, 10.0;
    Vector x(24);
    for (int i = 0; i < 24; ++i) x[i] = i;
    const Matrix y = net.forward(x);
    for (int p = 0; p < 22; ++p) {
        EXPECT_DOUBLE_EQ(y(2 * p, 0), p);
        EXPECT_DOUBLE_EQ(y(2 * p + 1, 0), p + 2 + 10.0);
    }
}

TEST(Forward, EpisodeConvFeatureMapLength) {
    // 10 attempts x 19 features, kernel one attempt wide, stride 8
    EXPECT_EQ(LayerSpec::conv1d(190, 1, 256, 19, 8, Activation::leaky_relu).out_len(), (190 - 19) / 8 + 1);
    EXPECT_EQ(LayerSpec::conv1d(190, 1, 256, 19, 8, Activation::leaky_relu).out_len(), 22);
}

TEST(Forward, IdentityDenseLayer) {
    Rng rng(5);
    Network net = Network::build({LayerSpec::dense(4, 4, Activation::linear)}, rng);
    net.layers()[0].weights.setIdentity();
    const Matrix x = Matrix::Random(4, 3);
    EXPECT_TRUE(net.forward(x) == x);
}

TEST(Forward, ShapeMismatchThrows) {
    Rng rng(4);
    Network net = Network::build({LayerSpec::dense(3, 2, Activation::linear)}, rng);
    EXPECT_THROW(net.forward(Matrix::Zero(4, 1)), InputError);
    EXPECT_THROW(Network::build({LayerSpec::dense(3, 2, Activation::linear), LayerSpec::dense(3, 2, Activation::linear)},
                                rng),
                 InputError);
}

TEST(Train, SeparableToySetReachesFullAccuracy) {
    const LabeledData d = separable(20, 5);
    Rng rng(5);
    Network net = Network::build({LayerSpec::dense(2, 8, Activation::leaky_relu),
                                  LayerSpec::dense(8, 2, Activation::linear)},
                                 rng);
    TrainConfig c;
    c.lr = 1e-2;
    c.batch_size = 4;
    c.epochs = 200;
    train(net, d, c);
    EXPECT_DOUBLE_EQ(accuracy(net, d), 1.0);
}

TEST(Train, AllFrozenLeavesParametersAndLossUnchanged) {
    const LabeledData d = separable(20, 6);
    Rng rng(6);
    Network net = Network::build({LayerSpec::dense(2, 4, Activation::tanh), LayerSpec::dense(4, 2, Activation::linear)},
                                 rng);
    for (Layer& l : net.layers()) l.spec.frozen = true;
    const Network before = net;
    TrainConfig c;
    c.epochs = 5;
    c.batch_size = 20;
    const History h = train(net, d, c);
    EXPECT_TRUE(net == before);
    // only the shuffle order differs between epochs
    for (double loss : h.loss) EXPECT_NEAR(loss, h.loss.front(), 1e-14);
}

TEST(Train, FrozenLayersStayBitIdentical) {
    const LabeledData d = separable(40, 7);
    Rng rng(7);
    Network net = Network::build({LayerSpec::dense(2, 6, Activation::tanh), LayerSpec::dense(6, 6, Activation::tanh),
                                  LayerSpec::dense(6, 2, Activation::linear)},
                                 rng);
    net.layers()[0].spec.frozen = true;
    const Matrix w0 = net.layers()[0].weights;
    const Vector b0 = net.layers()[0].bias;
    const Matrix w1 = net.layers()[1].weights;
    TrainConfig c;
    c.lr = 1e-2;
    c.epochs = 10;
    c.weight_decay = 0.01;
    train(net, d, c);
    EXPECT_TRUE(net.layers()[0].weights == w0);
    EXPECT_TRUE(net.layers()[0].bias == b0);
    EXPECT_FALSE(net.layers()[1].weights == w1);
}

TEST(Train, DecoupledDecayShrinksWeightsOnZeroGradient) {
    Rng rng(8);
    Network net = Network::build({LayerSpec::dense(3, 4, Activation::linear)}, rng);
    Adam adam(1e-2, 0.01);
    Gradients g;
    g.weights = {Matrix::Zero(4, 3)};
    g.bias = {Vector::Zero(4)};
    double norm = net.layers()[0].weights.norm();
    for (int step = 0; step < 20; ++step) {
        const Matrix before = net.layers()[0].weights;
        adam.step(net, g);
        const double next = net.layers()[0].weights.norm();
        EXPECT_LT(next, norm);
        // closed-form: w <- (1 - lr * wd) w
        EXPECT_LT((net.layers()[0].weights - (1.0 - 1e-4) * before).cwiseAbs().maxCoeff(), 1e-15);
        norm = next;
    }
}

TEST(Train, DeterministicForSameSeed) {
    const LabeledData d = separable(30, 9);
    auto run = [&] {
        Rng rng(9);
        Network net = Network::build({LayerSpec::dense(2, 5, Activation::leaky_relu),
                                      LayerSpec::dense(5, 2, Activation::linear)},
                                     rng);
        TrainConfig c;
        c.lr = 1e-2;
        c.epochs = 15;
        c.batch_size = 7;
        c.seed = 42;
        train(net, d, c);
        return net;
    };
    EXPECT_TRUE(run() == run());
}

TEST(Train, NonFiniteLossThrows) {
    LabeledData d = separable(4, 10);
    d.x(0, 0) = std::nan("");
    Rng rng(10);
    Network net = Network::build({LayerSpec::dense(2, 2, Activation::linear)}, rng);
    TrainConfig c;
    c.epochs = 1;
    EXPECT_THROW(train(net, d, c), PipelineError);
}

TEST(Train, GridKeepsBestValidationCopy) {
    const LabeledData d = separable(40, 11);
    const LabeledData v = separable(40, 12);
    Rng rng(11);
    Network net = Network::build({LayerSpec::dense(2, 4, Activation::tanh), LayerSpec::dense(4, 2, Activation::linear)},
                                 rng);
    TrainConfig c;
    c.epochs = 20;
    c.lr_grid = {1e-9, 1e-2};
    const History h = train_with_grid(net, d, v, c);
    EXPECT_DOUBLE_EQ(h.chosen_lr, 1e-2);
    EXPECT_DOUBLE_EQ(accuracy(net, v), h.best_val_accuracy);
}

TEST(Train, InvalidConfigRejected) {
    TrainConfig c;
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), InputError);
    c = TrainConfig{};
    c.lr = -1.0;
    EXPECT_THROW(c.validate(), InputError);
}

TEST(MutateHead, AddClassPreservesExistingRows) {
    Rng rng(20);
    Network net = Network::build({LayerSpec::dense(24, 25, Activation::leaky_relu),
                                  LayerSpec::dense(25, 9, Activation::linear)},
                                 rng);
    const Matrix w = net.layers().back().weights;
    const Vector b = net.layers().back().bias;
    mutate_head(net, HeadMutation::add_class, rng);
    EXPECT_EQ(net.output_size(), 10);
    EXPECT_TRUE(net.layers().back().weights.topRows(9) == w);
    EXPECT_TRUE(net.layers().back().bias.head(9) == b);
    // new row at 0.1x the init scale
    EXPECT_LE(net.layers().back().weights.row(9).cwiseAbs().maxCoeff(), 0.1 * std::sqrt(6.0 / 25.0));
}

TEST(MutateHead, AddLayerGrowsHiddenStackAndKeepsOldWeights) {
    Rng rng(21);
    Network net = Network::build({LayerSpec::dense(24, 200, Activation::leaky_relu),
                                  LayerSpec::dense(200, 100, Activation::leaky_relu),
                                  LayerSpec::dense(100, 50, Activation::leaky_relu),
                                  LayerSpec::dense(50, 25, Activation::leaky_relu),
                                  LayerSpec::dense(25, 9, Activation::linear)},
                                 rng);
    const Network before = net;
    mutate_head(net, HeadMutation::add_layer, rng);
    EXPECT_EQ(net.hidden_count(), 5u);
    EXPECT_EQ(net.output_size(), 9);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_TRUE(net.layers()[i].weights == before.layers()[i].weights);
    EXPECT_TRUE(net.layers().back().weights == before.layers().back().weights);
    EXPECT_FALSE(net.layers()[4].spec.frozen);
}

TEST(MutateHead, AddLayerAndClassComposes) {
    Rng rng(22);
    Network net = Network::build({LayerSpec::dense(6, 25, Activation::leaky_relu),
                                  LayerSpec::dense(25, 3, Activation::linear)},
                                 rng);
    const Matrix head = net.layers().back().weights;
    mutate_head(net, HeadMutation::add_layer_and_class, rng);
    EXPECT_EQ(net.hidden_count(), 2u);
    EXPECT_EQ(net.output_size(), 4);
    EXPECT_TRUE(net.layers().back().weights.topRows(3) == head);
    const Vector x = Vector::Random(6);
    EXPECT_EQ(net.forward(x).rows(), 4);
}

TEST(MutateHead, RejectsHeadlessNetwork) {
    Rng rng(23);
    Network net = Network::build({LayerSpec::dense(3, 2, Activation::linear)}, rng);
    EXPECT_THROW(mutate_head(net, HeadMutation::add_class, rng), InputError);
}

TEST(Checkpoint, RoundTripIsBitExactIncludingOptimizer) {
    Rng rng(30);
    Network net = Network::build({LayerSpec::conv1d(8, 2, 3, 3, 1, Activation::leaky_relu),
                                  LayerSpec::dense(18, 4, Activation::tanh), LayerSpec::dense(4, 3, Activation::linear)},
                                 rng);
    net.layers()[0].spec.frozen = true;
    net.set_input_transform(Vector::Random(16), Vector::Random(16));
    LabeledData d;
    d.x = Matrix::Random(16, 12);
    for (int i = 0; i < 12; ++i) d.y.push_back(i % 3);
    Adam adam(1e-3, 0.01);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 5;
    train(net, d, c, nullptr, &adam);

    const auto path = std::filesystem::temp_directory_path() / "stackplay_nn_ckpt.json";
    save_checkpoint(path.string(), net, {{"note", "test"}}, &adam);
    const Checkpoint back = load_checkpoint(path.string());
    std::filesystem::remove(path);
    EXPECT_TRUE(back.net == net);
    ASSERT_TRUE(back.optimizer.has_value());
    EXPECT_TRUE(*back.optimizer == adam);
    EXPECT_EQ(back.metadata.at("note"), "test");
    EXPECT_GT(logit_sum_abs(back.net), 0.0);
}

TEST(Checkpoint, RejectsForeignJson) {
    EXPECT_THROW(network_from_json(nlohmann::json{{"format", "other"}}), InputError);
}
