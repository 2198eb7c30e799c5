// structprobe: train, evaluate, visualize and sweep structural probes.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "structprobe/checkpoint.hpp"
#include "structprobe/embedding_store.hpp"
#include "structprobe/evaluator.hpp"
#include "structprobe/sweep.hpp"
#include "structprobe/trainer.hpp"
#include "structprobe/treebank.hpp"
#include "structprobe/viz.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace structprobe;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flags shared by the subcommands. Unset optionals fall back to the config
// file, then to built-in defaults.
struct Flags {
    std::optional<std::string> config;
    std::optional<std::string> treebank_train, treebank_dev, treebank_test, embeddings, out;
    std::optional<std::string> kernel, rbf_mode, pair_kernel, optimizer, mode;
    std::optional<std::size_t> layer, max_epochs, batch_size, threads;
    std::optional<long> rank;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr, c, sigma, a, b;
    std::optional<int> degree;
    std::optional<bool> exclude_punct, train_affine;
    std::vector<std::string> checkpoints, sent_ids, csvs;
    std::vector<long> ranks;
    bool overwrite = false;
    bool fixed_scale = false;
};

void add_data_flags(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON config file; flags override its fields");
    app->add_option("--treebank-train", f.treebank_train, "training CoNLL-U file");
    app->add_option("--treebank-dev", f.treebank_dev, "dev CoNLL-U file");
    app->add_option("--treebank-test", f.treebank_test, "test CoNLL-U file");
    app->add_option("--embeddings", f.embeddings, "embedding container (.spb)");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--exclude-punct", f.exclude_punct, "drop edges touching PUNCT tokens when scoring (default true)");
    app->add_flag("--overwrite", f.overwrite, "replace an existing output directory");
}

void add_train_flags(CLI::App* app, Flags& f) {
    app->add_option("--kernel", f.kernel, std::string("probe kernel ") + std::string(kKernelNames));
    app->add_option("--layer", f.layer, "embedding layer (0 = first block)");
    app->add_option("--rank", f.rank, "probe rank k");
    app->add_option("--rbf-mode", f.rbf_mode, "elementwise | scalar");
    app->add_option("--pair-kernel", f.pair_kernel, "kernel used by bilinear-ref: poly | rbf | sigmoid");
    app->add_option("--seed", f.seed, "random seed");
    app->add_option("--max-epochs", f.max_epochs);
    app->add_option("--lr", f.lr, "initial learning rate");
    app->add_option("--batch-size", f.batch_size);
    app->add_option("--optimizer", f.optimizer, "adam | sgd");
    app->add_option("--threads", f.threads, "worker threads (capped by STRUCTPROBE_THREADS)");
    app->add_option("--c", f.c, "polynomial shift");
    app->add_option("--degree", f.degree, "polynomial degree");
    app->add_option("--sigma", f.sigma, "rbf scale");
    app->add_option("--a", f.a, "sigmoid slope");
    app->add_option("--b", f.b, "sigmoid offset");
    app->add_option("--train-affine", f.train_affine, "train sigmoid a and b");
}

// defaults <- config file <- explicit flags
json effective_config(const Flags& f) {
    json cfg = to_json(TrainConfig{});
    cfg["exclude_punct"] = true;
    if (f.config) {
        std::ifstream in(*f.config);
        if (!in) throw UsageError("--config: cannot open '" + *f.config + "'");
        try {
            cfg.update(json::parse(in));
        } catch (const json::exception& e) {
            throw UsageError("--config: " + std::string(e.what()));
        }
    }
    auto set = [&](const char* key, const auto& v) {
        if (v) cfg[key] = *v;
    };
    set("treebank_train", f.treebank_train);
    set("treebank_dev", f.treebank_dev);
    set("treebank_test", f.treebank_test);
    set("embeddings", f.embeddings);
    set("out", f.out);
    set("kernel", f.kernel);
    set("rbf_mode", f.rbf_mode);
    set("pair_kernel", f.pair_kernel);
    set("optimizer", f.optimizer);
    set("layer", f.layer);
    set("rank", f.rank);
    set("seed", f.seed);
    set("max_epochs", f.max_epochs);
    set("initial_lr", f.lr);
    set("batch_size", f.batch_size);
    set("threads", f.threads);
    set("c", f.c);
    set("degree", f.degree);
    set("sigma", f.sigma);
    set("a", f.a);
    set("b", f.b);
    set("exclude_punct", f.exclude_punct);
    set("train_affine", f.train_affine);
    if (const char* cap = std::getenv("STRUCTPROBE_THREADS")) {
        const auto limit = std::strtoul(cap, nullptr, 10);
        if (limit > 0 && cfg["threads"].get<std::size_t>() > limit) cfg["threads"] = limit;
    }
    return cfg;
}

TrainConfig train_config(const json& cfg) {
    TrainConfig c;
    try {
        merge_json(c, cfg);
        validate(c);
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        if (msg.find("unknown kernel") != std::string::npos) msg += "; expected one of " + std::string(kKernelNames);
        throw UsageError(msg);
    } catch (const json::exception& e) {
        throw UsageError(std::string("bad config value: ") + e.what());
    }
    return c;
}

std::string flag_name(const std::string& key) {
    std::string f = "--" + key;
    std::replace(f.begin(), f.end(), '_', '-');
    return f;
}

std::string require_path(const json& cfg, const std::string& key, bool must_exist = true) {
    if (!cfg.contains(key) || cfg[key].get<std::string>().empty()) throw UsageError(flag_name(key) + " is required");
    auto p = cfg[key].get<std::string>();
    if (must_exist && !fs::exists(p)) throw UsageError(flag_name(key) + ": file not found: " + p);
    return p;
}

std::optional<std::string> optional_path(const json& cfg, const std::string& key) {
    if (!cfg.contains(key)) return std::nullopt;
    auto p = cfg[key].get<std::string>();
    if (!fs::exists(p)) throw UsageError(flag_name(key) + ": file not found: " + p);
    return p;
}

fs::path prepare_out_dir(const json& cfg, bool overwrite) {
    const fs::path out = require_path(cfg, "out", false);
    if (fs::exists(out) && !fs::is_empty(out)) {
        if (!overwrite) throw UsageError("output directory '" + out.string() + "' is not empty; pass --overwrite");
        fs::remove_all(out);
    }
    fs::create_directories(out);
    return out;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

void report_missing(const Alignment& a, const std::string& split, const std::map<std::string, std::string>& skipped) {
    if (a.missing.empty()) return;
    std::cerr << split << ": " << a.missing.size() << " sentence(s) have no embeddings";
    std::size_t known = 0;
    for (const auto& id : a.missing) known += skipped.count(id);
    if (known) std::cerr << " (" << known << " listed in the extractor skip log)";
    std::cerr << ":";
    for (std::size_t i = 0; i < a.missing.size() && i < 10; ++i) std::cerr << ' ' << a.missing[i];
    if (a.missing.size() > 10) std::cerr << " ...";
    std::cerr << "\n";
}

struct Split {
    std::string name;
    std::vector<Sentence> treebank;
};

std::vector<Example> examples_for(const EmbeddingSet& set, const Split& split, std::size_t layer,
                                  const std::map<std::string, std::string>& skipped) {
    auto a = align(set, split.treebank);
    report_missing(a, split.name, skipped);
    return make_examples(set, a, layer);
}

int cmd_train(const Flags& f) {
    const json cfg = effective_config(f);
    const auto config = train_config(cfg);
    const Split train_split{"train", read_conllu_file(require_path(cfg, "treebank_train"))};
    const Split dev_split{"dev", read_conllu_file(require_path(cfg, "treebank_dev"))};
    const auto emb_path = require_path(cfg, "embeddings");
    const auto out = prepare_out_dir(cfg, f.overwrite);

    const auto set = read_container(emb_path);
    const auto skipped = read_skip_log(emb_path);
    const auto train_ex = examples_for(set, train_split, config.layer, skipped);
    const auto dev_ex = examples_for(set, dev_split, config.layer, skipped);

    auto result = train(config, train_ex, dev_ex);
    write_run_directory(out, cfg, result, config);
    const bool exclude_punct = cfg["exclude_punct"].get<bool>();
    const auto dev_report = evaluate(result.params, dev_ex, exclude_punct);
    std::cout << "trained " << kernel_name(config.kernel) << " probe, layer " << config.layer << ", rank "
              << config.rank << ": best epoch " << result.report.best_epoch << ", dev loss "
              << result.report.best_dev_loss << ", dev UUAS " << dev_report.uuas << "\n"
              << "run directory: " << out.string() << "\n";
    return 0;
}

int cmd_eval(const Flags& f) {
    if (f.checkpoints.size() != 1) throw UsageError("--checkpoint is required (exactly one)");
    json cfg = effective_config(f);
    const auto ck = read_checkpoint(f.checkpoints.front());
    if (!f.layer) cfg["layer"] = ck.training.value("layer", std::size_t{0});
    const std::size_t layer = cfg["layer"].get<std::size_t>();
    const bool exclude_punct = cfg["exclude_punct"].get<bool>();
    const auto emb_path = require_path(cfg, "embeddings");

    std::vector<Split> splits;
    if (auto p = optional_path(cfg, "treebank_dev")) splits.push_back({"dev", read_conllu_file(*p)});
    if (auto p = optional_path(cfg, "treebank_test")) splits.push_back({"test", read_conllu_file(*p)});
    if (splits.empty()) throw UsageError("--treebank-dev or --treebank-test is required");
    const auto out = prepare_out_dir(cfg, f.overwrite);

    const auto set = read_container(emb_path);
    const auto skipped = read_skip_log(emb_path);
    write_json(out / "config.json", cfg);
    for (const auto& split : splits) {
        const auto ex = examples_for(set, split, layer, skipped);
        auto report = evaluate(ck.params, ex, exclude_punct);
        report.config["layer"] = layer;
        report.config["split"] = split.name;
        write_json(out / ("eval_" + split.name + ".json"), to_json(report));
        std::cout << split.name << " UUAS " << report.uuas << " (" << ex.size() << " sentences)\n";
    }
    return 0;
}

int cmd_viz(const Flags& f) {
    const json cfg = effective_config(f);
    if (f.sent_ids.empty() == f.csvs.empty())
        throw UsageError("viz needs either --sent-id (arc diagrams) or --csv (sweep chart), not both");
    const auto out = prepare_out_dir(cfg, f.overwrite);

    if (!f.csvs.empty()) {
        const std::string mode = f.mode.value_or("layers");
        if (mode != "layers" && mode != "ranks") throw UsageError("--mode must be layers or ranks");
        std::vector<std::pair<std::string, SweepTable>> tables;
        for (const auto& spec : f.csvs) {
            auto eq = spec.find('=');
            auto name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
            auto path = eq == std::string::npos ? spec : spec.substr(eq + 1);
            if (!fs::exists(path)) throw UsageError("--csv: file not found: " + path);
            tables.emplace_back(name, read_sweep_csv(path));
        }
        std::ofstream svg(out / "chart.svg");
        svg << render_line_chart(sweep_chart(tables, mode == "ranks"));
        std::cout << "wrote " << (out / "chart.svg").string() << "\n";
        return 0;
    }

    if (f.checkpoints.empty()) throw UsageError("--checkpoint is required for arc diagrams");
    const auto emb_path = require_path(cfg, "embeddings");
    std::vector<Sentence> treebank;
    for (const auto* key : {"treebank_test", "treebank_dev", "treebank_train"})
        if (auto p = optional_path(cfg, key)) {
            auto more = read_conllu_file(*p);
            treebank.insert(treebank.end(), more.begin(), more.end());
        }
    if (treebank.empty()) throw UsageError("a treebank (--treebank-test/-dev/-train) is required");
    const auto set = read_container(emb_path);

    for (const auto& ck_path : f.checkpoints) {
        const auto ck = read_checkpoint(ck_path);
        const std::size_t layer = f.layer ? *f.layer : ck.training.value("layer", std::size_t{0});
        for (const auto& id : f.sent_ids) {
            auto s = std::find_if(treebank.begin(), treebank.end(), [&](const Sentence& x) { return x.sent_id == id; });
            if (s == treebank.end()) throw UsageError("--sent-id: '" + id + "' not found in the treebanks");
            const auto ex = make_examples(set, align(set, std::span(&*s, 1)), layer);
            if (ex.empty()) throw std::runtime_error("sentence '" + id + "' has no embeddings or fewer than 2 tokens");
            const auto report = evaluate(ck.params, ex, cfg["exclude_punct"].get<bool>());

            ArcDiagramSpec spec;
            for (const auto& t : s->tokens) spec.tokens.push_back(t.form);
            for (const auto& e : gold_edges(*s, false)) spec.gold_edges.push_back(e);
            for (const auto& e : report.sentences[0].predicted.edges) spec.predicted_edges.push_back({e.edge, e.strength});
            spec.title = std::string(kernel_name(ck.params.kernel)) + " probe, layer " + std::to_string(layer) +
                         ", sentence " + id;
            if (f.fixed_scale) spec.scale = StrengthScale::fixed();
            const auto file = out / (id + "." + std::string(kernel_name(ck.params.kernel)) + ".svg");
            std::ofstream svg(file);
            svg << render_arcs(spec);
            std::cout << "wrote " << file.string() << "\n";
        }
    }
    return 0;
}

int cmd_sweep(const Flags& f) {
    const json cfg = effective_config(f);
    const std::string mode = f.mode.value_or("");
    if (mode != "layers" && mode != "ranks") throw UsageError("--mode is required: layers or ranks");
    const auto config = train_config(cfg);
    const std::vector<long> ranks = f.ranks.empty() ? kDefaultRanks : f.ranks;
    if (mode == "ranks") {
        try {
            validate_ranks(ranks);
        } catch (const std::invalid_argument& e) {
            throw UsageError(std::string("--ranks: ") + e.what());
        }
    }
    const auto train_tb = read_conllu_file(require_path(cfg, "treebank_train"));
    const auto dev_tb = read_conllu_file(require_path(cfg, "treebank_dev"));
    std::vector<Sentence> test_tb;
    if (auto p = optional_path(cfg, "treebank_test")) test_tb = read_conllu_file(*p);
    const auto emb_path = require_path(cfg, "embeddings");
    const auto out = prepare_out_dir(cfg, f.overwrite);
    const auto set = read_container(emb_path);
    write_json(out / "config.json", cfg);

    const SweepInputs in{&set, train_tb, dev_tb, test_tb};
    const SweepOptions opt{cfg["exclude_punct"].get<bool>(), out};
    const auto table = mode == "layers" ? layer_sweep(config, in, opt) : rank_sweep(config, ranks, in, opt);
    write_sweep_csv(table, out / "sweep.csv");
    std::ofstream svg(out / "sweep.svg");
    svg << render_line_chart(sweep_chart({{std::string(kernel_name(config.kernel)), table}}, mode == "ranks"));
    for (const auto& r : table.rows) {
        std::cout << table.key_name << ' ' << r.key << ": dev UUAS " << r.uuas_dev;
        if (r.uuas_test) std::cout << ", test UUAS " << *r.uuas_test;
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train and evaluate structural probes over contextual embeddings"};
    app.require_subcommand(1);
    Flags f;

    auto* train_cmd = app.add_subcommand("train", "train a probe and write a run directory");
    add_data_flags(train_cmd, f);
    add_train_flags(train_cmd, f);

    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint (UUAS, per-edge strengths)");
    add_data_flags(eval_cmd, f);
    eval_cmd->add_option("--checkpoint", f.checkpoints, "probe checkpoint");
    eval_cmd->add_option("--layer", f.layer, "embedding layer (default: the checkpoint's)");

    auto* viz_cmd = app.add_subcommand("viz", "render arc diagrams or sweep charts");
    add_data_flags(viz_cmd, f);
    viz_cmd->add_option("--checkpoint", f.checkpoints, "probe checkpoint(s); one diagram per checkpoint");
    viz_cmd->add_option("--layer", f.layer, "embedding layer (default: the checkpoint's)");
    viz_cmd->add_option("--sent-id", f.sent_ids, "sentence(s) to draw");
    viz_cmd->add_option("--csv", f.csvs, "sweep CSV as name=path (repeatable)");
    viz_cmd->add_option("--mode", f.mode, "chart axis: layers | ranks");
    viz_cmd->add_flag("--fixed-scale", f.fixed_scale, "color strengths over the full [0, 2] range");

    auto* sweep_cmd = app.add_subcommand("sweep", "train one probe per layer or per rank");
    add_data_flags(sweep_cmd, f);
    add_train_flags(sweep_cmd, f);
    sweep_cmd->add_option("--mode", f.mode, "layers | ranks");
    sweep_cmd->add_option("--ranks", f.ranks, "ranks for --mode ranks (default 1 2 4 ... 256)")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train_cmd) return cmd_train(f);
        if (*eval_cmd) return cmd_eval(f);
        if (*viz_cmd) return cmd_viz(f);
        if (*sweep_cmd) return cmd_sweep(f);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
