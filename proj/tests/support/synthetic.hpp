#pragma once

// Planted-solution corpora: random dependency trees with embeddings built so
// a known linear map sends every sentence onto an exact squared-distance
// embedding of its tree metric.
//
// Each edge gets its own orthonormal direction in R^k; a token sits at the
// sum of the directions on its path from the root, so the squared distance
// between two tokens equals their tree distance. The k-dim positions are
// lifted into R^n by a random orthogonal Q with nuisance coordinates in the
// complement; the planted map is the first k rows of Qᵀ.

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

#include "structprobe/embedding_store.hpp"
#include "structprobe/treebank.hpp"
#include "support/oracles.hpp"

namespace synthetic {

struct PlantedOptions {
    std::size_t n_train = 300;
    std::size_t n_dev = 60;
    std::size_t n_test = 60;
    std::size_t min_tokens = 3;
    std::size_t max_tokens = 9;  // must satisfy max_tokens - 1 <= intrinsic_rank
    Eigen::Index intrinsic_rank = 8;
    Eigen::Index dim = 16;
    std::size_t num_layers = 1;
    std::size_t planted_layer = 0;
    double nuisance_scale = 1.0;
    std::uint64_t seed = 7;
};

struct PlantedTask {
    std::vector<structprobe::Sentence> train, dev, test;
    structprobe::EmbeddingSet embeddings;
    Eigen::MatrixXd planted_B;  // k×n
};

inline Eigen::MatrixXd gaussian(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
}

inline Eigen::MatrixXd random_orthonormal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(rows, rows, rng));
    Eigen::MatrixXd Q = qr.householderQ();
    return Q.leftCols(cols);
}

/// k×T positions whose pairwise squared distances equal the tree distances.
inline Eigen::MatrixXd tree_positions(const structprobe::Sentence& s, Eigen::Index k, std::mt19937_64& rng) {
    const auto T = static_cast<Eigen::Index>(s.size());
    const Eigen::MatrixXd dirs = random_orthonormal(k, std::max<Eigen::Index>(T - 1, 1), rng);
    // Edge direction index for the edge from token i to its head.
    std::vector<Eigen::Index> edge_of(s.size(), -1);
    Eigen::Index next = 0;
    for (const auto& t : s.tokens)
        if (t.head != 0) edge_of[t.index - 1] = next++;

    const Eigen::VectorXd offset = gaussian(k, 1, rng, 0.5);
    Eigen::MatrixXd X(k, T);
    for (Eigen::Index i = 0; i < T; ++i) {
        Eigen::VectorXd x = offset;
        std::size_t cur = static_cast<std::size_t>(i) + 1;
        while (s.token(cur).head != 0) {
            x += dirs.col(edge_of[cur - 1]);
            cur = s.token(cur).head;
        }
        X.col(i) = x;
    }
    return X;
}

inline PlantedTask make_planted(const PlantedOptions& opt) {
    std::mt19937_64 rng(opt.seed);
    PlantedTask task;
    const Eigen::MatrixXd Q = random_orthonormal(opt.dim, opt.dim, rng);
    task.planted_B = Q.leftCols(opt.intrinsic_rank).transpose();

    auto& set = task.embeddings;
    set.model_name = "planted";
    set.num_layers = opt.num_layers;
    set.dim = static_cast<std::size_t>(opt.dim);
    set.contextual = true;

    std::uniform_int_distribution<std::size_t> len(opt.min_tokens, opt.max_tokens);
    auto make_split = [&](std::vector<structprobe::Sentence>& out, std::size_t count, const std::string& prefix) {
        for (std::size_t s = 0; s < count; ++s) {
            auto sent = oracle::random_tree(len(rng), rng);
            sent.sent_id = prefix + "-" + std::to_string(s + 1);
            const auto T = static_cast<Eigen::Index>(sent.size());

            structprobe::SentenceEmbeddings emb{sent.sent_id, sent.size(), {}};
            emb.values.reserve(opt.num_layers * sent.size() * set.dim);
            for (std::size_t l = 0; l < opt.num_layers; ++l) {
                Eigen::MatrixXd H;  // n×T
                if (l == opt.planted_layer) {
                    Eigen::MatrixXd lifted(opt.dim, T);
                    lifted.topRows(opt.intrinsic_rank) = tree_positions(sent, opt.intrinsic_rank, rng);
                    lifted.bottomRows(opt.dim - opt.intrinsic_rank) =
                        gaussian(opt.dim - opt.intrinsic_rank, T, rng, opt.nuisance_scale);
                    H = Q * lifted;
                } else {
                    H = gaussian(opt.dim, T, rng);
                }
                for (Eigen::Index t = 0; t < T; ++t)
                    for (Eigen::Index c = 0; c < opt.dim; ++c) emb.values.push_back(static_cast<float>(H(c, t)));
            }
            set.sentences.push_back(std::move(emb));
            out.push_back(std::move(sent));
        }
    };
    make_split(task.train, opt.n_train, "train");
    make_split(task.dev, opt.n_dev, "dev");
    make_split(task.test, opt.n_test, "test");
    return task;
}

}  // namespace synthetic
