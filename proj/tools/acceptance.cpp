// stackplay_acceptance: one PASS/FAIL line per acceptance criterion.
//
//   stackplay_acceptance [--criterion N]... [--out DIR] [--cli PATH]

#include "stackplay/classify.hpp"
#include "stackplay/expand.hpp"
#include "stackplay/novelty.hpp"
#include "stackplay/plot.hpp"
#include "stackplay/policy.hpp"
#include "stackplay/simworld.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>

#ifndef STACKPLAY_CLI_PATH
#define STACKPLAY_CLI_PATH "stackplay"
#endif

namespace fs = std::filesystem;
using namespace stackplay;
using nn::Matrix;
using nn::Vector;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradTolLinear = 1e-7;
constexpr double kBaselineMin = 0.70;
constexpr double kChanceMultiple = 3.0;
constexpr double kBaselineMinutes = 10.0;
constexpr double kTransferMin = 0.75;
constexpr int kTransferSeeds = 5;
constexpr double kTransferMinutes = 15.0;
constexpr double kConceptMin = 0.95;
constexpr double kConceptMinutes = 2.0;
constexpr double kRlMinutes = 30.0;
constexpr double kOracleTol = 1e-9;
constexpr int kOracleSets = 100;
constexpr int kSelfTrials = 50;
constexpr double kMatrixMinutes = 45.0;
constexpr double kSmallCubeNotNovel = 0.90;
constexpr double kCapsuleNovel = 0.90;

struct Verdict {
    bool pass = false;
    std::string detail;
};

double minutes_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
}

std::string pf(bool b) { return b ? "ok" : "FAIL"; }

fs::path g_out;
std::string g_cli = STACKPLAY_CLI_PATH;
std::uint64_t g_seed = 1;

void save(const std::string& name, const std::string& bytes) {
    if (g_out.empty()) return;
    fs::create_directories(g_out);
    plot::write_text_file((g_out / name).string(), bytes);
}

std::map<sim::ClassName, sim::Dataset> pools(std::size_t n, std::uint64_t seed) {
    std::map<sim::ClassName, sim::Dataset> out;
    for (sim::ClassName c : sim::kAllClasses) {
        out[c] = sim::generate_freeplay(c, n, seed * 1000 + static_cast<std::uint64_t>(c));
    }
    return out;
}

// ------------------------------------------------------------------ 1

Verdict gradient_audit() {
    using nn::Activation;
    using nn::LayerSpec;
    double worst = 0.0, worst_linear = 0.0, worst_elem = 0.0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        Rng rng(g_seed * 10 + s);
        for (Activation a : {Activation::relu, Activation::leaky_relu, Activation::tanh}) {
            const nn::Network dense = nn::Network::build(
                {LayerSpec::dense(6, 7, a), LayerSpec::dense(7, 5, a), LayerSpec::dense(5, 3, Activation::linear)}, rng);
            const nn::Network conv = nn::Network::build({LayerSpec::conv1d(24, 1, 4, 6, 3, a),
                                                         LayerSpec::conv1d(7, 4, 3, 3, 2, a),
                                                         LayerSpec::dense(9, 3, Activation::linear)},
                                                        rng);
            Vector x6(6), x24(24);
            for (auto i = 0; i < 6; ++i) x6(i) = rng.normal();
            for (auto i = 0; i < 24; ++i) x24(i) = rng.normal();
            worst = std::max({worst, nn::grad_check_layers(dense, x6, 1), nn::grad_check_layers(conv, x24, 2)});
            worst_elem = std::max({worst_elem, nn::grad_check(dense, x6, 1), nn::grad_check(conv, x24, 2)});
        }
        const nn::Network linear = nn::Network::build(
            {LayerSpec::dense(5, 4, Activation::linear), LayerSpec::dense(4, 3, Activation::linear)}, rng);
        Vector x5(5);
        for (auto i = 0; i < 5; ++i) x5(i) = rng.normal();
        worst_linear = std::max({worst_linear, nn::grad_check_layers(linear, x5, 0), nn::grad_check(linear, x5, 0)});
    }
    const bool pass = worst < kGradTol && worst_linear < kGradTolLinear;
    return {pass, fmt::format("per-layer relative error, relu/leaky/tanh dense and conv1d stacks {:.2e} (< {:.0e}); "
                              "linear {:.2e} (< {:.0e}, elementwise too); elementwise max (round-off bound on "
                              "near-zero entries) {:.2e}",
                              worst, kGradTol, worst_linear, kGradTolLinear, worst_elem)};
}

// ------------------------------------------------------------------ 2

Verdict baseline() {
    const auto t0 = std::chrono::steady_clock::now();
    classify::BaselineConfig cfg;
    cfg.train.seed = g_seed;
    const auto data = pools(cfg.train_per_class + cfg.test_per_class, g_seed);
    std::vector<std::pair<sim::ClassName, const sim::Dataset*>> per_class;
    for (const auto& [c, d] : data) per_class.emplace_back(c, &d);
    const auto split = classify::make_split(per_class, cfg.train_per_class, cfg.test_per_class, g_seed);
    const auto r = classify::train_baseline(split, cfg);
    const double mins = minutes_since(t0);
    const auto& m = r.confusion;
    const long cone_pyr = m.confusion_between(m.index_of("cone"), m.index_of("pyramid"));
    const long cone_cube = m.confusion_between(m.index_of("cone"), m.index_of("cube"));
    const double acc = m.accuracy();
    const double chance = 1.0 / static_cast<double>(m.classes.size());
    save("baseline_confusion.csv", classify::confusion_csv(m));
    const bool pass = acc >= kBaselineMin && acc >= kChanceMultiple * chance && cone_pyr >= cone_cube &&
                      mins < kBaselineMinutes && split.train.size() == 14400 && split.test.size() == 3600;
    return {pass, fmt::format("accuracy {:.4f} (>= {:.2f}, >= {:.1f}x chance {:.3f}); cone<->pyramid {} >= "
                              "cone<->cube {}; split {}/{}; {:.1f} min (< {:.0f})",
                              acc, kBaselineMin, kChanceMultiple, chance, cone_pyr, cone_cube, split.train.size(),
                              split.test.size(), mins, kBaselineMinutes)};
}

// ------------------------------------------------------------------ 3, 4

expand::TransferRun curriculum(expand::Mode mode, std::uint64_t seed) {
    expand::Sampler sampler(pools(4000, seed), seed);
    expand::ExpandConfig cfg;
    cfg.seed = seed;
    return expand::run_curriculum(mode, sampler, cfg);
}

Verdict transfer() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> dyn, fix;
    bool complete = true, intact = true;
    for (int i = 0; i < kTransferSeeds; ++i) {
        const std::uint64_t seed = g_seed + static_cast<std::uint64_t>(i);
        const auto d = curriculum(expand::Mode::dynamic, seed);
        const auto f = curriculum(expand::Mode::fixed, seed);
        complete = complete && d.classes.size() == 9 && f.classes.size() == 9 && d.steps.size() == 7;
        intact = intact && d.frozen_layers_intact() && f.frozen_layers_intact();
        for (const auto& s : d.steps) intact = intact && s.frozen_intact;
        dyn.push_back(d.steps.back().test_accuracy);
        fix.push_back(f.steps.back().test_accuracy);
        spdlog::info("seed {}: dynamic {:.4f}, static {:.4f}", seed, dyn.back(), fix.back());
    }
    const double mins = minutes_since(t0);
    const double md = std::accumulate(dyn.begin(), dyn.end(), 0.0) / kTransferSeeds;
    const double mf = std::accumulate(fix.begin(), fix.end(), 0.0) / kTransferSeeds;
    std::string per_seed;
    for (std::size_t i = 0; i < dyn.size(); ++i) per_seed += fmt::format(" {:.3f}/{:.3f}", dyn[i], fix[i]);
    const bool pass = complete && intact && md >= kTransferMin && md > mf && mins < kTransferMinutes;
    return {pass, fmt::format("curriculum complete {}; frozen layers intact {}; dynamic mean {:.4f} (>= {:.2f}) vs "
                              "static mean {:.4f}; per seed dyn/static{}; {:.1f} min (< {:.0f})",
                              pf(complete), pf(intact), md, kTransferMin, mf, per_seed, mins, kTransferMinutes)};
}

Verdict budget_trace() {
    const auto run = curriculum(expand::Mode::dynamic, g_seed);
    bool exact = true;
    std::string trace;
    for (const auto& s : run.steps) {
        if (s.step == 0) continue;
        const std::size_t k = s.classes.size();
        const std::size_t expect = 600 / k;
        exact = exact && s.samples_per_class == expect && s.samples_total == expect * k;
        trace += fmt::format(" K={}:{}", k, s.samples_per_class);
    }
    exact = exact && run.steps.size() == 7;
    return {exact, fmt::format("per-class budget equals floor(600/K) at every step:{}", trace)};
}

// ------------------------------------------------------------------ 5

Verdict concept_head() {
    const auto t0 = std::chrono::steady_clock::now();
    expand::Sampler sampler(pools(4000, g_seed), g_seed);
    expand::ExpandConfig cfg;
    cfg.seed = g_seed;
    const auto run = expand::run_curriculum(expand::Mode::dynamic, sampler, cfg);
    const auto train = expand::draw_concept_records(sampler, cfg.concept_per_label, cfg.concept_per_label);
    const auto test = expand::draw_concept_records(sampler, cfg.concept_test / 2, cfg.concept_test / 2);
    const auto rep = expand::train_concept_head(run.net, train, test, cfg);
    const double mins = minutes_since(t0);
    const bool agree = rep.oracle_agreement == rep.test_accuracy;
    const bool pass = rep.test_accuracy >= kConceptMin && agree && rep.confusion.total() == 120 &&
                      mins < kConceptMinutes;
    save("concept_confusion.csv", classify::confusion_csv(rep.confusion));
    return {pass, fmt::format("accuracy {:.4f} on {} held-out samples (>= {:.2f}); oracle agreement {:.4f} ({}); "
                              "{:.1f} min incl. source curriculum (< {:.0f})",
                              rep.test_accuracy, rep.confusion.total(), kConceptMin, rep.oracle_agreement,
                              agree ? "equal" : "differs", mins, kConceptMinutes)};
}

// ------------------------------------------------------------------ 6

Verdict rl() {
    const auto t0 = std::chrono::steady_clock::now();
    bool table = true;
    for (int k = 1; k <= 10; ++k) {
        table = table && policy::reward(policy::Outcome::miss, k) == -1.0;
        table = table && policy::reward(policy::Outcome::touch, k) == 9.0;
        table = table && policy::reward(policy::Outcome::stacked, k) == 1000.0 - 100.0 * (k - 1);
    }
    for (int k : {0, 11}) {
        try {
            policy::reward(policy::Outcome::stacked, k);
            table = false;
        } catch (const InputError&) {
        }
    }
    policy::Td3Config tc;
    tc.seed = g_seed;
    const auto tr = policy::td3_train(tc);
    policy::EvalConfig ec;
    ec.seed = g_seed;
    const auto ev = policy::evaluate_classes(tr.accurate.agent.actor, policy::kEvalClasses, ec);
    std::map<sim::ClassName, const policy::EvalResult*> by;
    for (const auto& e : ev) by[e.theme] = &e;
    using sim::ClassName;
    const double cube = by[ClassName::cube]->mean_episode_reward();
    const double cyl = by[ClassName::cylinder]->mean_episode_reward();
    const double cap = by[ClassName::capsule]->mean_episode_reward();
    const double sph = by[ClassName::sphere]->mean_episode_reward();
    const bool order = cube > cyl && cyl > cap && cap > sph;
    const std::size_t sphere_successes = by[ClassName::sphere]->successes;
    const double mins = minutes_since(t0);
    const bool pass = table && tr.reached_accurate && tr.accurate.success_rate >= 0.9 && order &&
                      sphere_successes == 0 && mins < kRlMinutes;
    save("rl_curve.csv", policy::curve_csv(tr.curve));
    return {pass, fmt::format("reward table {}; accurate policy {} at step {} (rolling success {:.3f}); mean reward "
                              "cube {:.1f} > cylinder {:.1f} > capsule {:.1f} > sphere {:.1f} {}; sphere successes {}; "
                              "{:.2f} min (< {:.0f})",
                              pf(table), tr.reached_accurate ? "reached" : "NOT reached", tr.accurate.step,
                              tr.accurate.success_rate, cube, cyl, cap, sph, pf(order), sphere_successes, mins,
                              kRlMinutes)};
}

// ------------------------------------------------------------------ 7

double brute_cos(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return 1.0 - dot / std::sqrt(na * nb);
}

double brute_sum(const std::vector<double>& rho) {
    std::vector<double> o;
    std::copy_if(rho.begin(), rho.end(), std::back_inserter(o), [](double r) { return r > 1.0; });
    if (o.size() < 2) return std::accumulate(o.begin(), o.end(), 0.0);
    double mean = std::accumulate(o.begin(), o.end(), 0.0) / static_cast<double>(o.size());
    double ss = 0.0;
    for (double r : o) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / static_cast<double>(o.size()));
    double sum = 0.0;
    for (double r : o) sum += (sd > 0.0 && (r - mean) / sd >= 3.0) ? 0.0 : r;
    return sum;
}

double brute_d(const Matrix& s, const Matrix& n) {
    const auto dim = static_cast<std::size_t>(s.cols());
    std::vector<double> mu(dim, 0.0), mun(dim, 0.0), var(dim, 0.0), shifted(dim);
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (std::size_t j = 0; j < dim; ++j) mu[j] += s(i, static_cast<Eigen::Index>(j)) / static_cast<double>(s.rows());
    }
    for (Eigen::Index i = 0; i < n.rows(); ++i) {
        for (std::size_t j = 0; j < dim; ++j) mun[j] += n(i, static_cast<Eigen::Index>(j)) / static_cast<double>(n.rows());
    }
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            const double d = s(i, static_cast<Eigen::Index>(j)) - mu[j];
            var[j] += d * d / static_cast<double>(s.rows());
        }
    }
    for (std::size_t j = 0; j < dim; ++j) shifted[j] = mu[j] + std::sqrt(var[j]);
    const double disp = brute_cos(mu, shifted);
    auto rho = [&](const Matrix& m) {
        std::vector<double> out;
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> v(dim);
            for (std::size_t j = 0; j < dim; ++j) v[j] = m(i, static_cast<Eigen::Index>(j));
            out.push_back(brute_cos(mu, v) / disp);
        }
        return out;
    };
    double ss = brute_sum(rho(s));
    if (ss == 0.0) ss = 1.0;
    const double ratio = brute_sum(rho(n)) / ss;
    return ratio * brute_cos(mu, mun) / (disp * ss);
}

Matrix blob(Rng& rng, int rows, const Vector& centre, double noise) {
    Matrix m(rows, centre.size());
    for (int i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < centre.size(); ++j) m(i, j) = centre(j) + rng.normal(0.0, noise);
    }
    return m;
}

Verdict novelty_math() {
    Rng rng(g_seed + 77);
    double worst = 0.0;
    int novel_sets = 0;
    for (int t = 0; t < kOracleSets; ++t) {
        Vector cs(64), cn(64);
        for (int j = 0; j < 64; ++j) {
            cs(j) = rng.uniform(0.0, 1.0);
            cn(j) = t % 2 ? rng.uniform(0.0, 1.0) : cs(j) + rng.normal(0.0, 0.05);
        }
        const Matrix s = blob(rng, 90, cs, rng.uniform(0.002, 0.3));
        const Matrix n = blob(rng, 30, cn, rng.uniform(0.002, 0.3));
        const double d = novelty::detect({"s", s}, n, {}).d;
        const double b = brute_d(s, n);
        worst = std::max(worst, std::abs(d - b) / std::max(1.0, std::abs(b)));
        novel_sets += d > 25.0;
    }
    int self_novel = 0;
    for (int t = 0; t < kSelfTrials; ++t) {
        Vector c(64);
        for (int j = 0; j < 64; ++j) c(j) = rng.uniform(0.0, 1.0);
        const Matrix s = blob(rng, 90, c, rng.uniform(0.002, 0.3));
        self_novel += novelty::detect({"s", s}, s, {}).is_novel;
    }
    int scaling_breaks = 0;
    for (int t = 0; t < kOracleSets; ++t) {
        Vector cs(64), cn(64);
        for (int j = 0; j < 64; ++j) {
            cs(j) = rng.uniform(0.0, 1.0);
            cn(j) = rng.uniform(0.0, 1.0);
        }
        const Matrix s = blob(rng, 60, cs, rng.uniform(0.002, 0.2));
        const Matrix n = blob(rng, 30, t % 2 ? cn : cs, rng.uniform(0.002, 0.2));
        const double k = std::exp(rng.uniform(-6.0, 6.0));
        scaling_breaks += novelty::detect({"s", s}, n, {}).is_novel != novelty::detect({"s", k * s}, k * n, {}).is_novel;
    }
    const bool pass = worst <= kOracleTol && self_novel == 0 && scaling_breaks == 0;
    return {pass, fmt::format("max |D - brute force| {:.2e} (<= {:.0e}) over {} sets ({} novel); self-test novel "
                              "{}/{}; scaling flips {}/{}",
                              worst, kOracleTol, kOracleSets, novel_sets, self_novel, kSelfTrials, scaling_breaks,
                              kOracleSets)};
}

// ------------------------------------------------------------------ 8

novelty::EpisodeLibrary eval_library(const policy::TrainResult& tr, std::uint64_t seed) {
    novelty::EpisodeLibrary lib;
    for (const auto* ck : {&tr.accurate, &tr.imprecise}) {
        policy::EvalConfig ec;
        ec.seed = Rng::derive(seed, ck == &tr.accurate ? 1 : 2).next();
        for (const auto& e : policy::evaluate_classes(ck->agent.actor, policy::kEvalClasses, ec)) {
            auto& slot = lib[std::string(policy::to_string(ck->quality))][std::string(sim::to_string(e.theme))];
            slot = policy::read_episodes_csv(policy::episodes_csv(e.records));
        }
    }
    return lib;
}

Verdict experiment_matrix() {
    const auto t0 = std::chrono::steady_clock::now();
    policy::Td3Config tc;
    tc.seed = g_seed;
    const auto tr = policy::td3_train(tc);
    const auto lib = eval_library(tr, g_seed);
    novelty::ExperimentConfig cfg;
    cfg.seed = g_seed;
    const auto r = novelty::run_experiment_matrix(lib, cfg);
    const double mins = minutes_since(t0);
    save("novelty_results.csv", novelty::results_csv(r));
    save("novelty_summary.json", novelty::summary_json(r).dump(2) + "\n");

    using sim::FeatureLayout;
    const double small = r.accuracy("", "", "small_cube", std::nullopt);
    double small_min = 1.0;
    for (const auto& c : r.cells) {
        if (c.probe == "small_cube") small_min = std::min(small_min, c.accuracy);
    }
    const double capsule = r.accuracy("cube+sphere+cylinder", "", "capsule", FeatureLayout::rl19);
    const double a19 = r.accuracy("", "", "", FeatureLayout::rl19);
    const double a16 = r.accuracy("", "", "", FeatureLayout::rl16_nojitter);
    const double cyl_known = r.accuracy("cube+sphere+cylinder", "", "capsule", std::nullopt);
    const double cap_known = r.accuracy("cube+sphere+capsule", "", "cylinder", std::nullopt);
    const double unknown = [&] {
        long n = 0, ok = 0;
        for (const auto& x : r.runs) {
            if (x.probe == "small_cube") continue;
            ++n;
            ok += x.correct;
        }
        return n ? static_cast<double>(ok) / static_cast<double>(n) : 0.0;
    }();
    const bool pass = small >= kSmallCubeNotNovel && capsule >= kCapsuleNovel && a19 >= a16 &&
                      cyl_known >= cap_known && mins < kMatrixMinutes;
    return {pass, fmt::format("small_cube not novel {:.3f} (>= {:.2f}; worst cell {:.2f}); capsule vs "
                              "cube+sphere+cylinder at c=19 novel {:.3f} (>= {:.2f}); mean accuracy c=19 {:.3f} >= "
                              "c=16 {:.3f} {}; cylinder-known->capsule {:.3f} >= capsule-known->cylinder {:.3f} {}; "
                              "unknown-class probes flagged {:.3f}; {} runs; {:.1f} min (< {:.0f})",
                              small, kSmallCubeNotNovel, small_min, capsule, kCapsuleNovel, a19, a16, pf(a19 >= a16),
                              cyl_known, cap_known, pf(cyl_known >= cap_known), unknown, r.runs.size(), mins,
                              kMatrixMinutes)};
}

// ------------------------------------------------------------------ 9

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = plot::read_text_file(e.path().string());
    }
    return out;
}

Verdict formats() {
    // Whole CLI pipeline twice from empty directories with one config file.
    const fs::path work = fs::temp_directory_path() / fmt::format("stackplay_accept_{}", g_seed);
    fs::remove_all(work);
    fs::create_directories(work);
    const fs::path cfg = work / "small.cfg";
    plot::write_text_file(cfg.string(), fmt::format(R"(seed = {}
freeplay.per_class = 400
baseline.train_per_class = 200
baseline.test_per_class = 50
baseline.epochs = 3
baseline.mds_points = 50
transfer.base_samples = 300
transfer.finetune_total = 90
transfer.test_per_class = 20
transfer.base_epochs = 2
transfer.finetune_epochs = 2
concept.per_label = 30
concept.test = 20
cnn.epochs = 2
experiments.runs = 2
)",
                                                    g_seed));
    const std::vector<std::string> stages = {"gen-freeplay",
                                             "train-baseline",
                                             "mds",
                                             "transfer --mode dynamic",
                                             "transfer --mode static",
                                             "concept",
                                             "rl-train",
                                             "rl-eval --policy accurate",
                                             "rl-eval --policy imprecise",
                                             "train-cnn --known cube,sphere --layout rl19",
                                             "detect --known cube,sphere --layout rl19 --probe capsule",
                                             "experiments"};
    bool ran = true;
    for (const char* dir : {"a", "b"}) {
        for (const auto& s : stages) {
            const std::string cmd = fmt::format("\"{}\" --config \"{}\" --out \"{}\" {} > /dev/null 2>&1", g_cli,
                                                cfg.string(), (work / dir).string(), s);
            if (std::system(cmd.c_str()) != 0) {
                spdlog::error("stage failed: {}", cmd);
                ran = false;
            }
        }
    }
    std::size_t files = 0, differ = 0;
    if (ran) {
        const auto a = read_tree(work / "a");
        const auto b = read_tree(work / "b");
        files = a.size();
        for (const auto& [k, v] : a) {
            const auto it = b.find(k);
            if (it == b.end() || it->second != v) {
                ++differ;
                spdlog::error("differs between runs: {}", k);
            }
        }
        differ += a.size() != b.size();
    }
    const std::string plot_cmd = fmt::format("\"{}\" plot --input \"{}\" --output \"{}\" > /dev/null 2>&1", g_cli,
                                             (work / "a/novelty/novelty_results.csv").string(),
                                             (work / "plot1.svg").string());
    const std::string plot_cmd2 = fmt::format("\"{}\" plot --input \"{}\" --output \"{}\" > /dev/null 2>&1", g_cli,
                                              (work / "a/novelty/novelty_results.csv").string(),
                                              (work / "plot2.svg").string());
    const bool plots = std::system(plot_cmd.c_str()) == 0 && std::system(plot_cmd2.c_str()) == 0 &&
                       plot::read_text_file((work / "plot1.svg").string()) ==
                           plot::read_text_file((work / "plot2.svg").string());

    // Checkpoints: save, load, save again.
    bool ckpt = true;
    if (ran) {
        const std::string raw = plot::read_text_file((work / "a/rl/accurate.json").string());
        const auto p = policy::PolicyCheckpoint::from_json(nlohmann::json::parse(raw));
        ckpt = ckpt && p.to_json().dump(2) + "\n" == raw;
        const fs::path again = work / "policy_again.json";
        policy::save_policy(again.string(), p);
        const auto q = policy::load_policy(again.string());
        ckpt = ckpt && q.agent.actor == p.agent.actor && q.agent.q1_target == p.agent.q1_target &&
               q.agent.actor_opt == p.agent.actor_opt;
        const std::string model = plot::read_text_file((work / "a/baseline/model.json").string());
        ckpt = ckpt && nn::to_json(nn::network_from_json(nlohmann::json::parse(model))).dump() + "\n" == model;
    }

    // Padding on real evaluation episodes.
    bool padding = true;
    std::size_t episodes = 0;
    if (ran) {
        for (const char* cls : {"cube", "sphere", "cylinder", "capsule", "small_cube"}) {
            const auto eps = policy::read_episodes_csv(
                plot::read_text_file((work / "a/rl/eval/accurate" / (std::string(cls) + ".csv")).string()));
            for (const auto& e : eps) {
                const Matrix p = novelty::pad_episode(e);
                padding = padding && p.rows() == 10 && p.topRows(e.rows()) == e;
                for (Eigen::Index r = e.rows(); r < 10; ++r) padding = padding && p.row(r) == e.row(e.rows() - 1);
                ++episodes;
            }
        }
    }
    fs::remove_all(work);
    const bool pass = ran && differ == 0 && files > 0 && plots && ckpt && padding && episodes > 0;
    return {pass, fmt::format("{} stages x2 ran {}; {} artifacts, {} differ; plot deterministic {}; checkpoint "
                              "round trips {}; {} padded episodes exact {}",
                              stages.size(), pf(ran), files, differ, pf(plots), pf(ckpt), episodes, pf(padding))};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks; one PASS/FAIL line per criterion"};
    std::vector<int> which;
    std::string out;
    app.add_option("--criterion", which, "Criterion number (repeatable; default all)")->check(CLI::Range(1, 9));
    app.add_option("--out", out, "Directory for result artifacts");
    app.add_option("--cli", g_cli, "Path to the stackplay executable");
    app.add_option("--seed", g_seed, "Seed");
    CLI11_PARSE(app, argc, argv);
    g_out = out;
    spdlog::set_level(spdlog::level::warn);

    const std::map<int, std::pair<std::string, std::function<Verdict()>>> criteria = {
        {1, {"gradient audit", gradient_audit}},
        {2, {"baseline classifier", baseline}},
        {3, {"dynamic transfer", transfer}},
        {4, {"sample budget trace", budget_trace}},
        {5, {"concept head", concept_head}},
        {6, {"RL policy", rl}},
        {7, {"novelty math oracle", novelty_math}},
        {8, {"novelty experiment matrix", experiment_matrix}},
        {9, {"formats and determinism", formats}},
    };
    if (which.empty()) {
        for (const auto& [k, v] : criteria) which.push_back(k);
    }
    int failed = 0;
    for (int k : which) {
        const auto& [name, fn] = criteria.at(k);
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        fmt::print("criterion {} {} [{}]: {}\n", k, v.pass ? "PASS" : "FAIL", name, v.detail);
        std::fflush(stdout);
        failed += !v.pass;
    }
    return failed == 0 ? 0 : 1;
}
