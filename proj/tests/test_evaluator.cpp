#include <gtest/gtest.h>

#include <random>

#include "structprobe/evaluator.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace structprobe;

namespace {

DistanceMatrix random_weights(Eigen::Index T, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.1, 10.0);
    DistanceMatrix dm{Eigen::MatrixXd::Zero(T, T)};
    for (Eigen::Index i = 0; i < T; ++i)
        for (Eigen::Index j = i + 1; j < T; ++j) dm.values(i, j) = dm.values(j, i) = u(rng);
    return dm;
}

double total_weight(const PredictedTree& t, const DistanceMatrix& dm) {
    double w = 0;
    for (const auto& e : t.edges) w += dm(e.edge.first - 1, e.edge.second - 1);
    return w;
}

bool spans(const PredictedTree& t, std::size_t T) {
    std::vector<std::size_t> parent(T + 1);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x];
        return x;
    };
    for (const auto& e : t.edges) parent[find(e.edge.first)] = find(e.edge.second);
    for (std::size_t i = 2; i <= T; ++i)
        if (find(i) != find(1)) return false;
    return t.edges.size() == T - 1;
}

}  // namespace

TEST(Mst, TwoTokens) {
    DistanceMatrix dm{Eigen::MatrixXd{{0, 3.5}, {3.5, 0}}};
    auto t = extract_mst(dm);
    ASSERT_EQ(t.edges.size(), 1u);
    EXPECT_EQ(t.edges[0].edge, Edge(1, 2));
    EXPECT_EQ(t.edges[0].weight, 3.5);
}

TEST(Mst, GoldDistancesRecoverGoldTree) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        auto s = oracle::random_tree(2 + trial % 12, rng);
        const auto d = tree_distances(s);
        DistanceMatrix dm{Eigen::MatrixXd(s.size(), s.size())};
        for (std::size_t i = 0; i < s.size(); ++i)
            for (std::size_t j = 0; j < s.size(); ++j) dm.values(i, j) = d.at(i, j);
        EXPECT_EQ(extract_mst(dm).edge_set(), gold_edges(s, false));
    }
}

TEST(Mst, MatchesBruteForceEnumeration) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index T = 2 + trial % 5;
        const auto dm = random_weights(T, rng);
        const auto t = extract_mst(dm);
        EXPECT_TRUE(spans(t, static_cast<std::size_t>(T)));
        EXPECT_NEAR(total_weight(t, dm), oracle::brute_force_mst_weight(dm.values), 1e-12);
    }
}

TEST(Mst, TiesBreakLexicographically) {
    // All weights equal: Kruskal keeps the star around token 1.
    DistanceMatrix dm{Eigen::MatrixXd::Ones(4, 4) - Eigen::MatrixXd::Identity(4, 4)};
    EXPECT_EQ(extract_mst(dm).edge_set(), (EdgeSet{{1, 2}, {1, 3}, {1, 4}}));
}

TEST(Mst, RejectsBadInput) {
    EXPECT_THROW(extract_mst(DistanceMatrix{Eigen::MatrixXd::Zero(1, 1)}), std::invalid_argument);
    DistanceMatrix dm{Eigen::MatrixXd::Zero(3, 3)};
    dm.values(0, 1) = dm.values(1, 0) = NAN;
    EXPECT_THROW(extract_mst(dm), NumericError);
}

TEST(Uuas, PerfectAndPartial) {
    auto s = parse_conllu(
        "1\tI\t_\tPRON\t_\t_\t2\t_\t_\t_\n2\tsaw\t_\tVERB\t_\t_\t0\t_\t_\t_\n3\tit\t_\tPRON\t_\t_\t2\t_\t_\t_\n\n");
    PredictedTree gold_tree{{{Edge(1, 2), 1, 0}, {Edge(2, 3), 1, 0}}};
    EXPECT_DOUBLE_EQ(uuas(std::vector{gold_tree}, s, false), 100.0);
    PredictedTree half{{{Edge(1, 2), 1, 0}, {Edge(1, 3), 1, 0}}};
    EXPECT_DOUBLE_EQ(uuas(std::vector{half}, s, false), 50.0);

    EXPECT_THROW(uuas(std::vector<PredictedTree>{}, std::vector<Sentence>{}, false), std::invalid_argument);
    EXPECT_THROW(uuas(std::vector{half, half}, s, false), std::invalid_argument);
}

TEST(Uuas, MicroAveragedOverEdges) {
    // Sentence A: 1 of 1 edge right; sentence B: 0 of 3. Micro = 25%, macro would be 50%.
    auto sents = parse_conllu(
        "1\ta\t_\tX\t_\t_\t0\t_\t_\t_\n2\tb\t_\tX\t_\t_\t1\t_\t_\t_\n\n"
        "1\ta\t_\tX\t_\t_\t0\t_\t_\t_\n2\tb\t_\tX\t_\t_\t1\t_\t_\t_\n3\tc\t_\tX\t_\t_\t2\t_\t_\t_\n"
        "4\td\t_\tX\t_\t_\t3\t_\t_\t_\n\n");
    std::vector<PredictedTree> pred{{{{Edge(1, 2), 0, 0}}},
                                    {{{Edge(1, 3), 0, 0}, {Edge(1, 4), 0, 0}, {Edge(2, 4), 0, 0}}}};
    EXPECT_DOUBLE_EQ(uuas(pred, sents, false), 25.0);
}

TEST(Uuas, PunctuationFilteredOnBothSides) {
    auto s = parse_conllu(
        "1\tHi\t_\tINTJ\t_\t_\t2\t_\t_\t_\n2\tthere\t_\tADV\t_\t_\t0\t_\t_\t_\n3\t!\t_\tPUNCT\t_\t_\t2\t_\t_\t_\n\n");
    PredictedTree pred{{{Edge(1, 3), 0, 0}, {Edge(2, 3), 0, 0}}};
    EXPECT_DOUBLE_EQ(uuas(std::vector{pred}, s, false), 50.0);
    EXPECT_DOUBLE_EQ(uuas(std::vector{pred}, s, true), 0.0);
}

TEST(Strength, Ratio) {
    EXPECT_EQ(strength(1.0, 1), 1.0);
    EXPECT_EQ(strength(0.0, 4), 0.0);
    EXPECT_EQ(strength(3.0, 2), 1.5);
    EXPECT_THROW(strength(1.0, 0), std::invalid_argument);
}

TEST(Uuas, InvariantUnderMonotoneTransforms) {
    std::mt19937_64 rng(3);
    std::vector<Sentence> sents;
    std::vector<DistanceMatrix> dms;
    for (int i = 0; i < 50; ++i) {
        sents.push_back(oracle::random_tree(2 + i % 9, rng, 0.15));
        dms.push_back(random_weights(static_cast<Eigen::Index>(sents.back().size()), rng));
    }
    auto score = [&](auto transform) {
        std::vector<PredictedTree> trees;
        for (const auto& dm : dms) trees.push_back(extract_mst(DistanceMatrix{dm.values.unaryExpr(transform)}));
        return uuas(trees, sents, true);
    };
    const double base = score([](double x) { return x; });
    EXPECT_EQ(score([](double x) { return x * x; }), base);
    EXPECT_EQ(score([](double x) { return x + 7; }), base);
}

TEST(Evaluate, ReportsStrengthsAndScaleInvariance) {
    synthetic::PlantedOptions opt;
    opt.n_train = 0;
    opt.n_dev = 25;
    opt.n_test = 0;
    const auto task = synthetic::make_planted(opt);
    const auto examples = make_examples(task.embeddings, align(task.embeddings, task.dev), 0);

    ProbeParams p{task.planted_B, Kernel::Linear, {}, false};
    const auto report = evaluate(p, examples, true);
    EXPECT_DOUBLE_EQ(report.uuas, 100.0);
    for (const auto& s : report.sentences)
        for (std::size_t i = 0; i < s.predicted.edges.size(); ++i) {
            EXPECT_TRUE(s.correct[i]);
            EXPECT_NEAR(s.predicted.edges[i].strength, 1.0, 1e-5);
        }
    const auto json = to_json(report);
    EXPECT_EQ(json["config"]["kernel"], "linear");
    EXPECT_EQ(json["config"]["exclude_punct"], true);

    std::mt19937_64 rng(4);
    ProbeParams r{synthetic::gaussian(4, opt.dim, rng), Kernel::Linear, {}, false};
    const auto before = evaluate(r, examples, false);
    r.B *= 3.7;
    const auto after = evaluate(r, examples, false);
    EXPECT_EQ(before.uuas, after.uuas);
    for (std::size_t i = 0; i < before.sentences.size(); ++i)
        EXPECT_EQ(before.sentences[i].predicted.edge_set(), after.sentences[i].predicted.edge_set());
}
