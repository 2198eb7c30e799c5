#pragma once

// Tree prediction from probe distances and attachment scoring.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "structprobe/probe.hpp"
#include "structprobe/trainer.hpp"
#include "structprobe/treebank.hpp"

namespace structprobe {

struct PredictedEdge {
    Edge edge;
    double weight = 0;    // squared predicted distance
    double strength = 0;  // d_B / d_T, filled in when gold distances are known
};

struct PredictedTree {
    std::vector<PredictedEdge> edges;  // sorted by edge

    EdgeSet edge_set() const {
        EdgeSet s;
        for (const auto& e : edges) s.insert(e.edge);
        return s;
    }
};

/// Ratio of predicted (non-squared) distance to gold tree distance.
inline double strength(double predicted_distance, int tree_distance) {
    if (tree_distance < 1) throw std::invalid_argument("tree distance must be >= 1");
    return predicted_distance / tree_distance;
}

/// Minimum spanning tree of the complete graph weighted by dm (Kruskal).
/// Equal weights are broken by the lexicographically smaller (i, j).
inline PredictedTree extract_mst(const DistanceMatrix& dm) {
    const Eigen::Index T = dm.size();
    if (T < 2) throw std::invalid_argument("MST needs at least 2 tokens");
    if (!dm.values.allFinite()) throw NumericError("non-finite weight in distance matrix");

    std::vector<std::tuple<double, Eigen::Index, Eigen::Index>> candidates;
    candidates.reserve(static_cast<std::size_t>(T * (T - 1) / 2));
    for (Eigen::Index i = 0; i < T; ++i)
        for (Eigen::Index j = i + 1; j < T; ++j) candidates.emplace_back(dm(i, j), i, j);
    std::sort(candidates.begin(), candidates.end());

    std::vector<Eigen::Index> parent(static_cast<std::size_t>(T));
    std::iota(parent.begin(), parent.end(), Eigen::Index{0});
    auto find = [&](Eigen::Index x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };

    PredictedTree tree;
    for (const auto& [w, i, j] : candidates) {
        auto ri = find(i), rj = find(j);
        if (ri == rj) continue;
        parent[ri] = rj;
        tree.edges.push_back({Edge(static_cast<std::size_t>(i + 1), static_cast<std::size_t>(j + 1)), w, 0});
        if (static_cast<Eigen::Index>(tree.edges.size()) == T - 1) break;
    }
    std::sort(tree.edges.begin(), tree.edges.end(),
              [](const PredictedEdge& a, const PredictedEdge& b) { return a.edge < b.edge; });
    return tree;
}

struct EdgeCounts {
    std::size_t correct = 0;
    std::size_t gold = 0;
};

inline EdgeCounts count_edges(const PredictedTree& predicted, const Sentence& gold, bool exclude_punct) {
    const auto g = gold_edges(gold, exclude_punct);
    auto p = predicted.edge_set();
    if (exclude_punct) p = filter_punct(gold, p);
    EdgeCounts c;
    c.gold = g.size();
    for (const auto& e : p) c.correct += g.count(e);
    return c;
}

/// Corpus UUAS in percent, micro-averaged over gold edges.
inline double uuas(std::span<const PredictedTree> predicted, std::span<const Sentence* const> gold, bool exclude_punct) {
    if (predicted.size() != gold.size())
        throw std::invalid_argument("predicted and gold lists differ in length");
    std::size_t correct = 0, total = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        auto c = count_edges(predicted[i], *gold[i], exclude_punct);
        correct += c.correct;
        total += c.gold;
    }
    if (total == 0) throw std::invalid_argument("UUAS is undefined: corpus has no gold edges");
    return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

inline double uuas(std::span<const PredictedTree> predicted, std::span<const Sentence> gold, bool exclude_punct) {
    std::vector<const Sentence*> ptrs;
    for (const auto& s : gold) ptrs.push_back(&s);
    return uuas(predicted, std::span<const Sentence* const>(ptrs), exclude_punct);
}

struct SentenceRecord {
    std::string sent_id;
    EdgeSet gold_edges;
    PredictedTree predicted;
    std::vector<bool> correct;  // parallel to predicted.edges
};

struct EvalReport {
    double uuas = 0;
    bool exclude_punct = true;
    nlohmann::json config;  // kernel, layer, rank, rbf_mode, ...
    std::vector<SentenceRecord> sentences;
};

/// Predicts trees for every example, fills strengths and scores the corpus.
inline EvalReport evaluate(const ProbeParams& p, std::span<const Example> examples, bool exclude_punct) {
    if (examples.empty()) throw std::invalid_argument("cannot evaluate an empty corpus");
    EvalReport report;
    report.exclude_punct = exclude_punct;
    report.config = kernel_params_json(p);
    report.config["rank"] = p.rank();
    report.config["exclude_punct"] = exclude_punct;

    std::vector<PredictedTree> trees;
    std::vector<const Sentence*> gold;
    for (const auto& ex : examples) {
        SentenceRecord rec;
        rec.sent_id = ex.sentence->sent_id;
        rec.gold_edges = gold_edges(*ex.sentence, false);
        rec.predicted = extract_mst(distance_matrix(p, ex.H));
        for (auto& e : rec.predicted.edges) {
            e.strength = strength(std::sqrt(e.weight), ex.gold.at(e.edge.first - 1, e.edge.second - 1));
            rec.correct.push_back(rec.gold_edges.count(e.edge) > 0);
        }
        trees.push_back(rec.predicted);
        gold.push_back(ex.sentence);
        report.sentences.push_back(std::move(rec));
    }
    report.uuas = uuas(trees, gold, exclude_punct);
    return report;
}

inline nlohmann::json to_json(const EvalReport& r) {
    auto sentences = nlohmann::json::array();
    for (const auto& s : r.sentences) {
        auto gold = nlohmann::json::array();
        for (const auto& e : s.gold_edges) gold.push_back({e.first, e.second});
        auto pred = nlohmann::json::array();
        for (std::size_t i = 0; i < s.predicted.edges.size(); ++i) {
            const auto& e = s.predicted.edges[i];
            pred.push_back({{"edge", {e.edge.first, e.edge.second}},
                            {"squared_distance", e.weight},
                            {"strength", e.strength},
                            {"correct", static_cast<bool>(s.correct[i])}});
        }
        sentences.push_back({{"sent_id", s.sent_id}, {"gold_edges", gold}, {"predicted_edges", pred}});
    }
    return {{"uuas", r.uuas}, {"exclude_punct", r.exclude_punct}, {"config", r.config}, {"sentences", sentences}};
}

}  // namespace structprobe
