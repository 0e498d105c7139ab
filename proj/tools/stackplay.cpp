// stackplay: file-based pipeline stages over the library.

#include "stackplay/classify.hpp"
#include "stackplay/expand.hpp"
#include "stackplay/novelty.hpp"
#include "stackplay/plot.hpp"
#include "stackplay/policy.hpp"
#include "stackplay/simworld.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#ifndef STACKPLAY_VERSION
#define STACKPLAY_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace stackplay;
using nlohmann::json;

namespace {

/// Bad flags, config keys or values; exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------------ config

enum class Kind { integer, real, boolean, text };

struct Key {
    std::string name;
    Kind kind;
    std::string fallback;
    std::string help;
};

const std::vector<Key>& schema() {
    static const std::vector<Key> keys = {
        {"seed", Kind::integer, "1", "master seed; every stage derives its streams from it"},
        {"jobs", Kind::integer, "1", "worker cap for data generation, evaluation and experiments"},
        {"out", Kind::text, "out", "artifact root"},
        {"freeplay.per_class", Kind::integer, "3000", "free-play attempts generated per class"},
        {"baseline.train_per_class", Kind::integer, "1600", "baseline training records per class"},
        {"baseline.test_per_class", Kind::integer, "400", "baseline test records per class"},
        {"baseline.epochs", Kind::integer, "200", "baseline epochs"},
        {"baseline.lr", Kind::real, "1e-4", "baseline learning rate"},
        {"baseline.batch", Kind::integer, "32", "baseline minibatch"},
        {"baseline.mds_points", Kind::integer, "200", "test points embedded by mds"},
        {"transfer.base_samples", Kind::integer, "5000", "base-network samples over cube, sphere and egg"},
        {"transfer.finetune_total", Kind::integer, "600", "fine-tuning budget per curriculum step"},
        {"transfer.test_per_class", Kind::integer, "200", "transfer test records per class"},
        {"transfer.base_epochs", Kind::integer, "100", "base-network epochs"},
        {"transfer.finetune_epochs", Kind::integer, "100", "epochs per curriculum step"},
        {"transfer.patience", Kind::integer, "15", "early-stopping patience"},
        {"transfer.freeze_all_but_new", Kind::boolean, "false", "freeze everything except the added layer"},
        {"concept.per_label", Kind::integer, "300", "concept training samples per label"},
        {"concept.test", Kind::integer, "120", "concept test samples (half per label)"},
        {"rl.max_steps", Kind::integer, "200000", "TD3 step cap"},
        {"rl.gamma", Kind::real, "0.99", "TD3 discount"},
        {"rl.start_steps", Kind::integer, "1000", "uniform-random warm-up steps"},
        {"eval.timesteps", Kind::integer, "1000", "attempts per evaluated class"},
        {"eval.noise", Kind::real, "0.1", "Gaussian action noise during evaluation"},
        {"cnn.epochs", Kind::integer, "500", "episode CNN epochs"},
        {"cnn.lr", Kind::real, "1e-3", "episode CNN learning rate"},
        {"cnn.batch", Kind::integer, "10", "episodes per CNN minibatch"},
        {"detect.threshold", Kind::real, "25", "decision threshold T"},
        {"detect.batch", Kind::integer, "30", "probe episodes per detection batch"},
        {"detect.single_division", Kind::boolean, "false", "use the single-division form of D"},
        {"experiments.runs", Kind::integer, "10", "runs per condition, dataset and layout"},
    };
    return keys;
}

class Config {
public:
    Config() {
        for (const auto& k : schema()) values_[k.name] = k.fallback;
    }

    void set(const std::string& key, const std::string& value, const std::string& where) {
        const auto it = std::find_if(schema().begin(), schema().end(), [&](const Key& k) { return k.name == key; });
        if (it == schema().end()) throw UsageError(fmt::format("{}: unknown config key '{}'", where, key));
        check(*it, value, where);
        values_[key] = value;
    }

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw UsageError(fmt::format("cannot read config file {}", path));
        std::string line;
        int n = 0;
        while (std::getline(in, line)) {
            ++n;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw UsageError(fmt::format("{}:{}: expected key = value", path, n));
            set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), fmt::format("{}:{}", path, n));
        }
    }

    long integer(const std::string& k) const { return std::stol(values_.at(k)); }
    std::size_t count(const std::string& k) const { return static_cast<std::size_t>(integer(k)); }
    double real(const std::string& k) const { return std::stod(values_.at(k)); }
    bool boolean(const std::string& k) const { return values_.at(k) == "true" || values_.at(k) == "1"; }
    const std::string& text(const std::string& k) const { return values_.at(k); }

    json to_json() const {
        json j = json::object();
        for (const auto& [k, v] : values_) j[k] = v;
        return j;
    }

private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }

    static void check(const Key& key, const std::string& v, const std::string& where) {
        auto fail = [&](const char* what) {
            throw UsageError(fmt::format("{}: {}: expected {}, got '{}'", where, key.name, what, v));
        };
        std::size_t used = 0;
        try {
            switch (key.kind) {
            case Kind::integer:
                if (std::stol(v, &used) < 0 || used != v.size()) fail("a non-negative integer");
                break;
            case Kind::real:
                std::stod(v, &used);
                if (used != v.size()) fail("a number");
                break;
            case Kind::boolean:
                if (v != "true" && v != "false" && v != "1" && v != "0") fail("true or false");
                break;
            case Kind::text:
                if (v.empty()) fail("a non-empty value");
                break;
            }
        } catch (const std::logic_error&) {
            if (key.kind == Kind::integer) fail("a non-negative integer");
            fail("a number");
        }
    }

    std::map<std::string, std::string> values_;
};

// --------------------------------------------------------------- artifacts

std::string fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

class Stage {
public:
    Stage(const Config& cfg, std::string name, std::string dir) : cfg_(cfg), name_(std::move(name)), dir_(std::move(dir)) {
        fs::create_directories(root() / dir_);
    }

    fs::path root() const { return fs::path(cfg_.text("out")); }
    std::string rel(const std::string& file) const { return (fs::path(dir_) / file).generic_string(); }

    /// Reads an upstream artifact after checking it against its producer's manifest.
    std::string input(const std::string& relpath, const std::string& producer) {
        const fs::path path = root() / relpath;
        if (!fs::exists(path)) {
            throw PipelineError(fmt::format("missing {}; run `stackplay {}` first", path.string(), producer));
        }
        const std::string bytes = plot::read_text_file(path.string());
        const fs::path manifest = path.parent_path() / "manifest.json";
        if (fs::exists(manifest)) {
            const json m = json::parse(plot::read_text_file(manifest.string()));
            const auto& outs = m.at("outputs");
            if (outs.contains(relpath) && outs.at(relpath).get<std::string>() != fnv1a(bytes)) {
                throw PipelineError(fmt::format("{} changed since `stackplay {}` wrote it; rerun that stage",
                                                path.string(), producer));
            }
        }
        inputs_[relpath] = fnv1a(bytes);
        return bytes;
    }

    void output(const std::string& file, const std::string& bytes) {
        const std::string r = rel(file);
        plot::write_text_file((root() / r).string(), bytes);
        outputs_[r] = fnv1a(bytes);
    }

    void output_json(const std::string& file, const json& j) { output(file, j.dump(2) + "\n"); }

    /// Merges with an existing manifest so stages writing several files over
    /// separate invocations keep every entry.
    void finish() {
        const fs::path path = root() / dir_ / "manifest.json";
        json m = json::object();
        if (fs::exists(path)) m = json::parse(plot::read_text_file(path.string()));
        m["stage"] = name_;
        m["version"] = STACKPLAY_VERSION;
        m["seed"] = cfg_.integer("seed");
        m["config"] = cfg_.to_json();
        m["config"].erase("out");
        for (const auto& [k, v] : inputs_) m["inputs"][k] = v;
        for (const auto& [k, v] : outputs_) m["outputs"][k] = v;
        plot::write_text_file(path.string(), m.dump(2) + "\n");
        spdlog::info("{}: wrote {} file(s) under {}", name_, outputs_.size(), (root() / dir_).string());
    }

private:
    const Config& cfg_;
    std::string name_;
    std::string dir_;
    std::map<std::string, std::string> inputs_, outputs_;
};

std::string name_of(sim::ClassName c) { return std::string(sim::to_string(c)); }

sim::Dataset parse_records(const std::string& bytes) {
    std::istringstream in(bytes);
    return sim::read_csv(in);
}

std::string records_csv(const sim::Dataset& d) {
    std::ostringstream out;
    sim::write_csv(out, d);
    return out.str();
}

std::map<sim::ClassName, sim::Dataset> load_freeplay(Stage& st) {
    std::map<sim::ClassName, sim::Dataset> pools;
    for (sim::ClassName c : sim::kAllClasses) {
        pools[c] = parse_records(st.input("freeplay/" + name_of(c) + ".csv", "gen-freeplay"));
    }
    return pools;
}

std::uint64_t stage_seed(const Config& cfg, std::uint64_t stage) {
    return Rng::derive(static_cast<std::uint64_t>(cfg.integer("seed")), stage).next();
}

// ------------------------------------------------------------------ stages

void gen_freeplay(const Config& cfg) {
    Stage st(cfg, "gen-freeplay", "freeplay");
    for (sim::ClassName c : sim::kAllClasses) {
        const auto seed = stage_seed(cfg, 100 + static_cast<std::uint64_t>(c));
        st.output(name_of(c) + ".csv", records_csv(sim::generate_freeplay(c, cfg.count("freeplay.per_class"), seed,
                                                                          static_cast<int>(cfg.integer("jobs")))));
    }
    st.finish();
}

classify::BaselineConfig baseline_config(const Config& cfg) {
    classify::BaselineConfig b;
    b.train_per_class = cfg.count("baseline.train_per_class");
    b.test_per_class = cfg.count("baseline.test_per_class");
    b.train.epochs = static_cast<int>(cfg.integer("baseline.epochs"));
    b.train.lr = cfg.real("baseline.lr");
    b.train.batch_size = static_cast<int>(cfg.integer("baseline.batch"));
    b.train.seed = stage_seed(cfg, 201);
    b.mds_points = cfg.count("baseline.mds_points");
    return b;
}

classify::Split baseline_split(const Config& cfg, const std::map<sim::ClassName, sim::Dataset>& pools) {
    std::vector<std::pair<sim::ClassName, const sim::Dataset*>> per_class;
    for (const auto& [c, d] : pools) per_class.emplace_back(c, &d);
    const auto b = baseline_config(cfg);
    return classify::make_split(per_class, b.train_per_class, b.test_per_class, stage_seed(cfg, 200));
}

void train_baseline(const Config& cfg) {
    Stage st(cfg, "train-baseline", "baseline");
    const auto split = baseline_split(cfg, load_freeplay(st));
    const auto result = classify::train_baseline(split, baseline_config(cfg));
    st.output("model.json", nn::to_json(result.net).dump() + "\n");
    st.output("confusion.csv", classify::confusion_csv(result.confusion));
    st.output("confusion.svg", classify::confusion_svg(result.confusion, "Baseline confusion"));
    st.output_json("metrics.json", classify::metrics_json(result.confusion));
    st.finish();
    fmt::print("baseline test accuracy {:.4f}\n", result.confusion.accuracy());
}

void mds(const Config& cfg) {
    Stage st(cfg, "mds", "mds");
    const auto split = baseline_split(cfg, load_freeplay(st));
    const auto net = nn::network_from_json(json::parse(st.input("baseline/model.json", "train-baseline")));
    const auto e = classify::embed_last_hidden(net, split, cfg.count("baseline.mds_points"));
    st.output("mds.csv", classify::mds_csv(e));
    st.output("mds.svg", classify::mds_svg(e, "Last hidden layer (MDS)"));
    st.finish();
}

expand::ExpandConfig expand_config(const Config& cfg) {
    expand::ExpandConfig e;
    e.base_samples = cfg.count("transfer.base_samples");
    e.finetune_total = cfg.count("transfer.finetune_total");
    e.test_per_class = cfg.count("transfer.test_per_class");
    e.base_epochs = static_cast<int>(cfg.integer("transfer.base_epochs"));
    e.finetune_epochs = static_cast<int>(cfg.integer("transfer.finetune_epochs"));
    e.patience = static_cast<int>(cfg.integer("transfer.patience"));
    e.freeze_all_but_new = cfg.boolean("transfer.freeze_all_but_new");
    e.concept_per_label = cfg.count("concept.per_label");
    e.concept_test = cfg.count("concept.test");
    e.seed = stage_seed(cfg, 300);
    return e;
}

void transfer(const Config& cfg, const std::string& mode_name) {
    const expand::Mode mode = expand::mode_from_string(mode_name);
    const std::string dir = "transfer/" + std::string(expand::to_string(mode));
    Stage st(cfg, "transfer", dir);
    expand::Sampler sampler(load_freeplay(st), stage_seed(cfg, 301));
    const auto run = expand::run_curriculum(mode, sampler, expand_config(cfg));
    json steps = json::array();
    std::string budget = "step,classes,samples_per_class,samples_total,test_accuracy\n";
    for (const auto& s : run.steps) {
        steps.push_back(s.to_json());
        budget += fmt::format("{},{},{},{},{:.17g}\n", s.step, s.classes.size(), s.samples_per_class,
                              s.samples_total, s.test_accuracy);
    }
    st.output("model.json", nn::to_json(run.net).dump() + "\n");
    st.output_json("report.json", {{"mode", expand::to_string(mode)},
                                   {"frozen_intact", run.frozen_layers_intact()},
                                   {"steps", steps}});
    st.output("budget.csv", budget);
    st.output("confusion.csv", classify::confusion_csv(run.steps.back().confusion));
    st.output("confusion.svg", classify::confusion_svg(run.steps.back().confusion,
                                                       fmt::format("Final confusion ({})", expand::to_string(mode))));
    st.finish();
    fmt::print("{} transfer final accuracy {:.4f}\n", expand::to_string(mode), run.steps.back().test_accuracy);
}

void concept_head(const Config& cfg) {
    Stage st(cfg, "concept", "concept");
    const auto net = nn::network_from_json(json::parse(st.input("transfer/dynamic/model.json", "transfer --mode dynamic")));
    expand::Sampler sampler(load_freeplay(st), stage_seed(cfg, 400));
    const auto ec = expand_config(cfg);
    const auto train = expand::draw_concept_records(sampler, ec.concept_per_label, ec.concept_per_label);
    const auto test = expand::draw_concept_records(sampler, ec.concept_test / 2, ec.concept_test - ec.concept_test / 2);
    const auto rep = expand::train_concept_head(net, train, test, ec);
    st.output("model.json", nn::to_json(rep.net).dump() + "\n");
    st.output_json("report.json", rep.to_json());
    st.output("confusion.csv", classify::confusion_csv(rep.confusion));
    st.finish();
    fmt::print("concept test accuracy {:.4f} (oracle agreement {:.4f})\n", rep.test_accuracy, rep.oracle_agreement);
}

void rl_train(const Config& cfg) {
    Stage st(cfg, "rl-train", "rl");
    policy::Td3Config tc;
    tc.max_steps = cfg.integer("rl.max_steps");
    tc.gamma = cfg.real("rl.gamma");
    tc.start_steps = cfg.integer("rl.start_steps");
    tc.seed = stage_seed(cfg, 500);
    const auto r = policy::td3_train(tc);
    st.output_json("accurate.json", r.accurate.to_json());
    st.output_json("imprecise.json", r.imprecise.to_json());
    st.output("curve.csv", policy::curve_csv(r.curve));
    st.output("curve.svg", policy::curve_svg(r.curve, "TD3 training (cube on cube)"));
    st.finish();
    fmt::print("accurate {} at step {} (success {:.3f}); imprecise at step {} (success {:.3f}{})\n",
               r.reached_accurate ? "reached" : "not reached", r.accurate.step, r.accurate.success_rate,
               r.imprecise.step, r.imprecise.success_rate, r.imprecise.fallback ? ", fallback" : "");
}

std::vector<sim::ClassName> class_list(const std::string& spec, const std::vector<sim::ClassName>& all) {
    if (spec == "all") return all;
    std::vector<sim::ClassName> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(sim::class_from_string(item));
        } catch (const InputError& e) {
            throw UsageError(e.what());
        }
    }
    return out;
}

void rl_eval(const Config& cfg, const std::string& which, const std::string& classes) {
    const auto quality = policy::quality_from_string(which);
    Stage st(cfg, "rl-eval", "rl/eval/" + which);
    const auto ck = policy::PolicyCheckpoint::from_json(json::parse(st.input("rl/" + which + ".json", "rl-train")));
    if (ck.quality != quality) throw PipelineError("rl/" + which + ".json holds a different policy quality");
    policy::EvalConfig ec;
    ec.timesteps = cfg.integer("eval.timesteps");
    ec.action_noise = cfg.real("eval.noise");
    ec.seed = stage_seed(cfg, which == "accurate" ? 600 : 601);
    const auto results = policy::evaluate_classes(ck.agent.actor, class_list(classes, policy::kEvalClasses), ec,
                                                  static_cast<int>(cfg.integer("jobs")));
    for (const auto& r : results) {
        st.output(name_of(r.theme) + ".csv", policy::episodes_csv(r.records));
        st.output_json(name_of(r.theme) + ".json", {{"class", name_of(r.theme)},
                                                    {"episodes", r.episodes()},
                                                    {"successes", r.successes},
                                                    {"mean_episode_reward", r.mean_episode_reward()},
                                                    {"sd_episode_reward", r.sd_episode_reward()}});
        fmt::print("{:<11} episodes {:>4}  successes {:>4}  mean reward {:9.2f} (sd {:.2f})\n", name_of(r.theme),
                   r.episodes(), r.successes, r.mean_episode_reward(), r.sd_episode_reward());
    }
    st.finish();
}

sim::FeatureLayout layout_arg(const std::string& s) {
    if (s == "rl19") return sim::FeatureLayout::rl19;
    if (s == "rl16" || s == "rl16_nojitter") return sim::FeatureLayout::rl16_nojitter;
    throw UsageError("layout must be rl19 or rl16, got '" + s + "'");
}

std::string layout_tag(sim::FeatureLayout l) { return l == sim::FeatureLayout::rl19 ? "rl19" : "rl16"; }

std::vector<std::string> split_names(const std::string& s) {
    std::vector<std::string> out;
    for (auto c : class_list(s, policy::kEvalClasses)) out.push_back(name_of(c));
    return out;
}

std::vector<novelty::Matrix> load_episodes(Stage& st, const std::string& dataset, const std::string& cls) {
    return policy::read_episodes_csv(
        st.input(fmt::format("rl/eval/{}/{}.csv", dataset, cls), fmt::format("rl-eval --policy {}", dataset)));
}

novelty::CnnConfig cnn_config(const Config& cfg, std::uint64_t stream) {
    novelty::CnnConfig c;
    c.epochs = static_cast<int>(cfg.integer("cnn.epochs"));
    c.lr = cfg.real("cnn.lr");
    c.batch_size = static_cast<int>(cfg.integer("cnn.batch"));
    c.seed = stage_seed(cfg, stream);
    return c;
}

novelty::DetectConfig detect_config(const Config& cfg) {
    novelty::DetectConfig d;
    d.threshold = cfg.real("detect.threshold");
    d.single_division = cfg.boolean("detect.single_division");
    return d;
}

std::string cnn_name(const std::vector<std::string>& known, sim::FeatureLayout layout, const std::string& dataset) {
    std::string k;
    for (const auto& c : known) k += (k.empty() ? "" : "+") + c;
    return fmt::format("{}_{}_{}", k, layout_tag(layout), dataset);
}

void train_cnn(const Config& cfg, const std::string& known_arg, const std::string& layout_arg_s,
               const std::string& dataset) {
    const auto known = split_names(known_arg);
    const auto layout = layout_arg(layout_arg_s);
    Stage st(cfg, "train-cnn", "novelty/cnn");
    std::vector<novelty::ClassData> data;
    for (const auto& k : known) data.push_back(novelty::split_class(k, load_episodes(st, dataset, k), layout));
    const auto model = novelty::train_cnn(data, layout, cnn_config(cfg, 700));
    const std::string name = cnn_name(known, layout, dataset);
    json meta = {{"classes", model.classes},
                 {"layout", layout_tag(layout)},
                 {"dataset", dataset},
                 {"dev_accuracy", model.dev_accuracy()},
                 {"dev_confusion", model.dev_confusion.counts}};
    st.output(name + ".json", json({{"network", nn::to_json(model.net)}, {"metadata", meta}}).dump() + "\n");
    st.output(name + "_dev_confusion.csv", classify::confusion_csv(model.dev_confusion));
    st.finish();
    for (std::size_t i = 0; i < model.classes.size(); ++i) {
        fmt::print("dev accuracy {:<10} {:.2f}\n", model.classes[i], model.dev_accuracy()[i]);
    }
}

void detect(const Config& cfg, const std::string& known_arg, const std::string& layout_arg_s,
            const std::string& dataset, const std::string& probe_arg, int run) {
    const auto known = split_names(known_arg);
    const auto layout = layout_arg(layout_arg_s);
    const std::string probe = split_names(probe_arg).at(0);
    const std::string name = cnn_name(known, layout, dataset);
    Stage st(cfg, "detect", "novelty/detect");
    const json ck = json::parse(st.input("novelty/cnn/" + name + ".json",
                                         fmt::format("train-cnn --known {} --layout {}", known_arg, layout_arg_s)));
    const nn::Network net = nn::network_from_json(ck.at("network"));

    std::vector<novelty::EmbeddingSet> sets;
    for (const auto& k : known) {
        const auto d = novelty::split_class(k, load_episodes(st, dataset, k), layout);
        sets.push_back({k, novelty::embed(net, d.train)});
    }
    const auto pd = novelty::split_class(probe, load_episodes(st, dataset, probe), layout);
    Rng rng = Rng::derive(stage_seed(cfg, 800), static_cast<std::uint64_t>(run));
    std::vector<std::size_t> idx(pd.pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    std::vector<novelty::Matrix> batch;
    for (std::size_t i = 0; i < std::min(cfg.count("detect.batch"), idx.size()); ++i) batch.push_back(pd.pool[idx[i]]);
    const auto s = novelty::nearest_class(novelty::classify_episodes(net, batch), known.size());
    const auto v = novelty::detect(sets[s], novelty::embed(net, batch), detect_config(cfg));
    json out = v.to_json();
    out["probe"] = probe;
    out["known"] = known;
    out["run"] = run;
    st.output(fmt::format("{}__{}_run{}.json", name, probe, run), out.dump(2) + "\n");
    st.finish();
    fmt::print("{} vs {}: nearest {}, D = {:.6g} (single division {:.6g}), T = {} -> {}\n", probe, name, v.nearest, v.d,
               v.d_single, v.threshold, v.is_novel ? "novel" : "known");
}

void experiments(const Config& cfg) {
    Stage st(cfg, "experiments", "novelty");
    novelty::ExperimentConfig ec;
    ec.runs = static_cast<int>(cfg.integer("experiments.runs"));
    ec.batch_size = cfg.count("detect.batch");
    ec.cnn = cnn_config(cfg, 700);
    ec.detect = detect_config(cfg);
    ec.jobs = static_cast<int>(cfg.integer("jobs"));
    ec.seed = stage_seed(cfg, 900);
    novelty::EpisodeLibrary lib;
    for (const auto& dataset : ec.datasets) {
        for (const auto& cls : {"cube", "sphere", "cylinder", "capsule", "small_cube"}) {
            lib[dataset][cls] = load_episodes(st, dataset, cls);
        }
    }
    const auto r = novelty::run_experiment_matrix(lib, ec);
    st.output("novelty_results.csv", novelty::results_csv(r));
    st.output_json("novelty_summary.json", novelty::summary_json(r));
    for (const auto& dataset : ec.datasets) {
        st.output("novelty_" + dataset + ".svg", novelty::summary_svg(r, dataset));
    }
    for (const auto& [key, m] : r.dev_confusion) {
        std::string file = key;
        std::replace(file.begin(), file.end(), '/', '_');
        st.output("dev_confusion_" + file + ".csv", classify::confusion_csv(m));
        st.output("dev_confusion_" + file + ".svg", classify::confusion_svg(m, "CNN dev confusion " + key));
    }
    st.finish();
    fmt::print("{:<34} {:<10} {:<5} {:<11} {:>8}  {}\n", "condition", "dataset", "c", "probe", "accuracy", "95% CI");
    for (const auto& c : r.cells) {
        fmt::print("{:<34} {:<10} {:<5} {:<11} {:>8.2f}  [{:.2f}, {:.2f}]\n", c.condition, c.dataset,
                   sim::feature_width(c.layout), c.probe, c.accuracy, c.ci_low, c.ci_high);
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

void plot_csv(const std::string& input, const std::string& output, std::string x, std::vector<std::string> ys,
              const std::string& title) {
    std::istringstream in(plot::read_text_file(input));
    std::string line;
    if (!std::getline(in, line)) throw PipelineError(input + " is empty");
    const auto header = split_csv_line(line);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (!line.empty()) rows.push_back(split_csv_line(line));
    }
    auto numeric = [&](std::size_t col) {
        if (rows.empty()) return false;
        for (const auto& r : rows) {
            std::size_t used = 0;
            try {
                if (col >= r.size()) return false;
                std::stod(r[col], &used);
            } catch (const std::logic_error&) {
                return false;
            }
            if (used != r[col].size()) return false;
        }
        return true;
    };
    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw UsageError(fmt::format("{} has no column '{}'", input, name));
        return static_cast<std::size_t>(it - header.begin());
    };
    std::vector<std::size_t> numeric_cols;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (numeric(j)) numeric_cols.push_back(j);
    }
    if (numeric_cols.empty()) throw PipelineError(input + " has no numeric columns");
    const std::size_t xc = x.empty() ? numeric_cols.front() : column(x);
    if (ys.empty()) {
        for (std::size_t j : numeric_cols) {
            if (j != xc) ys.push_back(header[j]);
        }
    }
    std::vector<plot::Series> series;
    for (const auto& y : ys) {
        const std::size_t yc = column(y);
        if (!numeric(yc)) throw UsageError(fmt::format("column '{}' is not numeric", y));
        plot::Series s{y, {}, {}};
        for (std::size_t i = 0; i < rows.size(); ++i) {
            s.x.push_back(numeric(xc) ? std::stod(rows[i][xc]) : static_cast<double>(i));
            s.y.push_back(std::stod(rows[i][yc]));
        }
        series.push_back(std::move(s));
    }
    plot::write_text_file(output, plot::line_svg(series, title.empty() ? fs::path(input).filename().string() : title,
                                                 header[xc], ys.size() == 1 ? ys.front() : "value"));
}

std::string schema_help() {
    std::string s = "Config keys (flat `key = value`, `#` comments):\n";
    for (const auto& k : schema()) s += fmt::format("  {:<30} {:<8} {}\n", k.name, k.fallback, k.help);
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stackplay: stacking-play simulation, classification, transfer, RL and novelty detection"};
    app.footer(schema_help());
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_dir;
    long seed = -1, jobs = -1;
    std::vector<std::string> sets;
    bool verbose = false;
    app.add_option("--config", config_path, "Config file (key = value)");
    app.add_option("--out", out_dir, "Artifact root directory");
    app.add_option("--seed", seed, "Master seed");
    app.add_option("--jobs", jobs, "Worker cap");
    app.add_option("--set", sets, "Override a config key (key=value), repeatable");
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    std::string mode = "dynamic", which = "accurate", classes = "all", known = "cube,sphere", layout = "rl19",
                dataset = "accurate", probe, plot_in, plot_out, plot_x, plot_title;
    std::vector<std::string> plot_y;
    int run = 0;

    auto* gen = app.add_subcommand("gen-freeplay", "Generate free-play attempts for all nine classes");
    auto* base = app.add_subcommand("train-baseline", "Train the 9-class behaviour classifier");
    auto* mds_cmd = app.add_subcommand("mds", "MDS of the baseline's last hidden layer");
    auto* tr = app.add_subcommand("transfer", "Class-incremental transfer over the curriculum");
    tr->add_option("--mode", mode, "dynamic or static")->check(CLI::IsMember({"dynamic", "static"}));
    auto* con = app.add_subcommand("concept", "Flat/round concept head on the dynamic transfer network");
    auto* rlt = app.add_subcommand("rl-train", "Train the TD3 stacking policy");
    auto* rle = app.add_subcommand("rl-eval", "Evaluate a policy and write episode datasets");
    rle->add_option("--policy", which, "accurate or imprecise")->check(CLI::IsMember({"accurate", "imprecise"}));
    rle->add_option("--class", classes, "Class name, comma list or 'all'");
    auto* cnn = app.add_subcommand("train-cnn", "Train the episode CNN on known classes");
    cnn->add_option("--known", known, "Comma-separated known classes");
    cnn->add_option("--layout", layout, "rl19 or rl16");
    cnn->add_option("--dataset", dataset, "accurate or imprecise")->check(CLI::IsMember({"accurate", "imprecise"}));
    auto* det = app.add_subcommand("detect", "Decide whether a probe batch is a novel class");
    det->add_option("--probe", probe, "Probe class")->required();
    det->add_option("--known", known, "Comma-separated known classes");
    det->add_option("--layout", layout, "rl19 or rl16");
    det->add_option("--dataset", dataset, "accurate or imprecise")->check(CLI::IsMember({"accurate", "imprecise"}));
    det->add_option("--run", run, "Batch draw index");
    auto* exp = app.add_subcommand("experiments", "Full novelty experiment matrix");
    auto* plt = app.add_subcommand("plot", "Line plot of numeric columns of a CSV");
    plt->add_option("--input", plot_in, "CSV file")->required()->check(CLI::ExistingFile);
    plt->add_option("--output", plot_out, "SVG file")->required();
    plt->add_option("--x", plot_x, "x column (default: first numeric column)");
    plt->add_option("--y", plot_y, "y columns (default: every other numeric column)");
    plt->add_option("--title", plot_title, "Plot title");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    Config cfg;
    try {
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
            cfg.set(s.substr(0, eq), s.substr(eq + 1), "--set");
        }
        if (!out_dir.empty()) cfg.set("out", out_dir, "--out");
        if (seed >= 0) cfg.set("seed", std::to_string(seed), "--seed");
        if (jobs >= 0) cfg.set("jobs", std::to_string(jobs), "--jobs");

        if (*gen) gen_freeplay(cfg);
        if (*base) train_baseline(cfg);
        if (*mds_cmd) mds(cfg);
        if (*tr) transfer(cfg, mode);
        if (*con) concept_head(cfg);
        if (*rlt) rl_train(cfg);
        if (*rle) rl_eval(cfg, which, classes);
        if (*cnn) train_cnn(cfg, known, layout, dataset);
        if (*det) detect(cfg, known, layout, dataset, probe, run);
        if (*exp) experiments(cfg);
        if (*plt) plot_csv(plot_in, plot_out, plot_x, plot_y, plot_title);
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
