#pragma once

// Layer and rank sweeps: one trained probe per setting, scored on dev and
// (optionally) test.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "structprobe/embedding_store.hpp"
#include "structprobe/evaluator.hpp"
#include "structprobe/trainer.hpp"
#include "structprobe/viz.hpp"

namespace structprobe {

inline const std::vector<long> kDefaultRanks = {1, 2, 4, 8, 16, 32, 64, 128, 256};

struct SweepInputs {
    const EmbeddingSet* embeddings = nullptr;
    std::span<const Sentence> train;
    std::span<const Sentence> dev;
    std::span<const Sentence> test;  // may be empty
};

struct SweepOptions {
    bool exclude_punct = true;
    std::optional<std::filesystem::path> out_dir;  // per-run directories land here
};

struct SweepRow {
    long key = 0;
    double uuas_dev = 0;
    std::optional<double> uuas_test;
};

struct SweepTable {
    std::string key_name;  // "layer" or "rank"
    std::vector<SweepRow> rows;
};

namespace detail {

struct SplitExamples {
    std::vector<Example> train, dev, test;
};

inline SplitExamples split_examples(const SweepInputs& in, std::size_t layer) {
    SplitExamples out;
    out.train = make_examples(*in.embeddings, align(*in.embeddings, in.train), layer);
    out.dev = make_examples(*in.embeddings, align(*in.embeddings, in.dev), layer);
    if (!in.test.empty()) out.test = make_examples(*in.embeddings, align(*in.embeddings, in.test), layer);
    return out;
}

inline SweepRow run_one(const TrainConfig& config, const SplitExamples& data, long key, const SweepOptions& opt,
                        const std::string& run_name) {
    auto result = train(config, data.train, data.dev);
    if (opt.out_dir) write_run_directory(*opt.out_dir / run_name, to_json(config), result, config);
    SweepRow row{key, evaluate(result.params, data.dev, opt.exclude_punct).uuas, std::nullopt};
    if (!data.test.empty()) row.uuas_test = evaluate(result.params, data.test, opt.exclude_punct).uuas;
    return row;
}

inline std::string padded(long v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03ld", v);
    return buf;
}

}  // namespace detail

inline SweepTable layer_sweep(const TrainConfig& base, const SweepInputs& in, const SweepOptions& opt = {}) {
    if (!in.embeddings) throw std::invalid_argument("sweep needs an embedding set");
    SweepTable table{"layer", {}};
    for (std::size_t l = 0; l < in.embeddings->num_layers; ++l) {
        TrainConfig config = base;
        config.layer = l;
        const auto data = detail::split_examples(in, l);
        table.rows.push_back(detail::run_one(config, data, static_cast<long>(l), opt, "layer_" + detail::padded(static_cast<long>(l))));
    }
    return table;
}

inline void validate_ranks(std::span<const long> ranks) {
    if (ranks.empty()) throw std::invalid_argument("rank list is empty");
    std::set<long> seen;
    for (long r : ranks) {
        if (r < 1) throw std::invalid_argument("rank " + std::to_string(r) + " must be >= 1");
        if (!seen.insert(r).second) throw std::invalid_argument("duplicate rank " + std::to_string(r));
    }
}

inline SweepTable rank_sweep(const TrainConfig& base, std::span<const long> ranks, const SweepInputs& in,
                             const SweepOptions& opt = {}) {
    validate_ranks(ranks);
    if (!in.embeddings) throw std::invalid_argument("sweep needs an embedding set");
    const auto data = detail::split_examples(in, base.layer);
    SweepTable table{"rank", {}};
    for (long r : ranks) {
        TrainConfig config = base;
        config.rank = r;
        table.rows.push_back(detail::run_one(config, data, r, opt, "rank_" + detail::padded(r)));
    }
    return table;
}

inline void write_sweep_csv(const SweepTable& t, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << "sweep_key,uuas_dev,uuas_test\n";
    out.precision(10);
    for (const auto& r : t.rows) {
        out << r.key << ',' << r.uuas_dev << ',';
        if (r.uuas_test) out << *r.uuas_test;
        out << '\n';
    }
}

inline SweepTable read_sweep_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("sweep_key,uuas_dev,uuas_test", 0) != 0)
        throw std::runtime_error("'" + path.string() + "' is not a sweep CSV");
    SweepTable t;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string key, dev, test;
        std::getline(row, key, ',');
        std::getline(row, dev, ',');
        std::getline(row, test, ',');
        try {
            SweepRow r{std::stol(key), std::stod(dev), std::nullopt};
            if (!test.empty()) r.uuas_test = std::stod(test);
            t.rows.push_back(r);
        } catch (const std::exception&) {
            throw std::runtime_error("bad row at " + path.string() + ":" + std::to_string(line_no));
        }
    }
    return t;
}

/// One series per (name, table); uses test UUAS when every row has it, dev otherwise.
inline LineChartSpec sweep_chart(const std::vector<std::pair<std::string, SweepTable>>& tables, bool rank_axis) {
    LineChartSpec chart;
    chart.x_label = rank_axis ? "probe rank" : "layer";
    chart.log2_x = rank_axis;
    bool all_test = true;
    for (const auto& [name, t] : tables)
        for (const auto& r : t.rows) all_test = all_test && r.uuas_test.has_value();
    chart.y_label = all_test ? "UUAS (test)" : "UUAS (dev)";
    chart.title = rank_axis ? "UUAS by probe rank" : "UUAS by layer";
    for (const auto& [name, t] : tables) {
        Series s{name, {}};
        for (const auto& r : t.rows)
            s.points.emplace_back(static_cast<double>(r.key), all_test ? *r.uuas_test : r.uuas_dev);
        chart.series.push_back(std::move(s));
    }
    return chart;
}

}  // namespace structprobe
