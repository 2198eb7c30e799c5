#pragma once

// Mini-batch probe training with plateau-based learning-rate decay and
// early stopping; the parameters with the lowest dev loss are returned.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "structprobe/checkpoint.hpp"
#include "structprobe/embedding_store.hpp"
#include "structprobe/probe.hpp"
#include "structprobe/treebank.hpp"

namespace structprobe {

enum class Optimizer { Adam, Sgd };

struct TrainConfig {
    std::size_t max_epochs = 200;
    double initial_lr = 0.001;
    double lr_decay_factor = 0.5;
    std::size_t plateau_patience = 1;
    double plateau_threshold = 1e-4;  // minimum relative dev-loss improvement
    std::size_t early_stop_after = 5;  // number of LR decays
    std::size_t batch_size = 20;
    std::uint64_t seed = 0;
    std::size_t layer = 0;
    Eigen::Index rank = 128;
    Kernel kernel = Kernel::Linear;
    KernelParams hp;
    bool train_affine = false;
    Optimizer optimizer = Optimizer::Adam;
    std::size_t threads = 1;  // 1 = sequential, bit-reproducible reduction
};

inline void validate(const TrainConfig& c) {
    if (!(c.lr_decay_factor > 0 && c.lr_decay_factor < 1))
        throw std::invalid_argument("lr_decay_factor must be in (0, 1)");
    if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (c.max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (!(c.initial_lr > 0)) throw std::invalid_argument("initial_lr must be > 0");
    if (c.rank < 1) throw std::invalid_argument("rank must be >= 1");
    if (c.threads < 1) throw std::invalid_argument("threads must be >= 1");
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return {
        {"max_epochs", c.max_epochs},
        {"initial_lr", c.initial_lr},
        {"lr_decay_factor", c.lr_decay_factor},
        {"plateau_patience", c.plateau_patience},
        {"plateau_threshold", c.plateau_threshold},
        {"early_stop_after", c.early_stop_after},
        {"batch_size", c.batch_size},
        {"seed", c.seed},
        {"layer", c.layer},
        {"rank", c.rank},
        {"kernel", kernel_name(c.kernel)},
        {"c", c.hp.c},
        {"degree", c.hp.degree},
        {"sigma", c.hp.sigma},
        {"a", c.hp.a},
        {"b", c.hp.b},
        {"rbf_mode", rbf_mode_name(c.hp.rbf_mode)},
        {"pair_kernel", kernel_name(c.hp.pair_kernel)},
        {"train_affine", c.train_affine},
        {"optimizer", c.optimizer == Optimizer::Adam ? "adam" : "sgd"},
        {"threads", c.threads},
    };
}

/// Overlays the fields present in j onto c.
inline void merge_json(TrainConfig& c, const nlohmann::json& j) {
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    take("max_epochs", c.max_epochs);
    take("initial_lr", c.initial_lr);
    take("lr_decay_factor", c.lr_decay_factor);
    take("plateau_patience", c.plateau_patience);
    take("plateau_threshold", c.plateau_threshold);
    take("early_stop_after", c.early_stop_after);
    take("batch_size", c.batch_size);
    take("seed", c.seed);
    take("layer", c.layer);
    take("rank", c.rank);
    take("c", c.hp.c);
    take("degree", c.hp.degree);
    take("sigma", c.hp.sigma);
    take("a", c.hp.a);
    take("b", c.hp.b);
    take("train_affine", c.train_affine);
    take("threads", c.threads);
    auto named = [&](const char* key, auto parse, auto& field) {
        if (!j.contains(key)) return;
        auto name = j.at(key).get<std::string>();
        auto v = parse(name);
        if (!v) throw std::invalid_argument(std::string("unknown ") + key + " '" + name + "'");
        field = *v;
    };
    named("kernel", parse_kernel, c.kernel);
    named("pair_kernel", parse_kernel, c.hp.pair_kernel);
    named("rbf_mode", parse_rbf_mode, c.hp.rbf_mode);
    if (j.contains("optimizer")) {
        auto name = j.at("optimizer").get<std::string>();
        if (name == "adam") c.optimizer = Optimizer::Adam;
        else if (name == "sgd") c.optimizer = Optimizer::Sgd;
        else throw std::invalid_argument("unknown optimizer '" + name + "'");
    }
}

/// Adam with bias correction over one parameter tensor.
class Adam {
public:
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    Adam() = default;
    Adam(Eigen::Index rows, Eigen::Index cols)
        : m_(Eigen::MatrixXd::Zero(rows, cols)), v_(Eigen::MatrixXd::Zero(rows, cols)) {}

    void step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, double lr) {
        if (grad.rows() != m_.rows() || grad.cols() != m_.cols() || param.rows() != m_.rows() ||
            param.cols() != m_.cols())
            throw std::invalid_argument("Adam: shape mismatch");
        ++t_;
        m_ = beta1 * m_ + (1 - beta1) * grad;
        v_ = beta2 * v_ + (1 - beta2) * grad.cwiseProduct(grad);
        const double c1 = 1 - std::pow(beta1, static_cast<double>(t_));
        const double c2 = 1 - std::pow(beta2, static_cast<double>(t_));
        param.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
    }

    long steps() const noexcept { return t_; }

private:
    Eigen::MatrixXd m_, v_;
    long t_ = 0;
};

/// One sentence ready for training or evaluation: vectors for a single layer.
struct Example {
    const Sentence* sentence = nullptr;
    Eigen::MatrixXd H;  // dim × T
    TreeDistances gold;
};

/// Builds examples for one layer; sentences shorter than 2 tokens are dropped.
inline std::vector<Example> make_examples(const EmbeddingSet& set, const Alignment& alignment, std::size_t layer) {
    if (layer >= set.num_layers)
        throw std::out_of_range("layer " + std::to_string(layer) + " out of range (container has " +
                                std::to_string(set.num_layers) + " layers)");
    std::vector<Example> out;
    out.reserve(alignment.sentences.size());
    for (const auto& a : alignment.sentences) {
        if (a.sentence->size() < 2) continue;
        out.push_back({a.sentence, set.layer_matrix(a.embedding_index, layer), tree_distances(*a.sentence)});
    }
    return out;
}

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0;
    double dev_loss = 0;
    double lr = 0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_dev_loss = std::numeric_limits<double>::infinity();
    double wall_seconds = 0;
    std::string stop_reason;
    std::string checkpoint_path;
};

inline nlohmann::json to_json(const TrainReport& r, const TrainConfig& c) {
    auto epochs = nlohmann::json::array();
    for (const auto& e : r.epochs)
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_loss", e.dev_loss}, {"lr", e.lr}});
    return {
        {"epochs", epochs},
        {"best_epoch", r.best_epoch},
        {"best_dev_loss", r.best_dev_loss},
        {"wall_seconds", r.wall_seconds},
        {"stop_reason", r.stop_reason},
        {"checkpoint_path", r.checkpoint_path},
        {"plateau_rule",
         {{"relative_threshold", c.plateau_threshold},
          {"patience_epochs", c.plateau_patience},
          {"decay_factor", c.lr_decay_factor},
          {"stop_after_decays", c.early_stop_after}}},
    };
}

struct TrainResult {
    ProbeParams params;
    TrainReport report;
};

namespace detail {

inline LossAndGradient example_loss_and_gradient(const ProbeParams& p, const Example& ex) {
    try {
        auto lg = loss_and_gradient(p, ex.H, ex.gold);
        if (!std::isfinite(lg.loss)) throw NumericError("non-finite loss");
        return lg;
    } catch (const NumericError& e) {
        throw TrainingError("numeric failure on sentence '" + ex.sentence->sent_id + "': " + e.what());
    }
}

// Mean loss and gradient over a batch; chunks are reduced in index order so
// results depend only on the thread count.
inline LossAndGradient batch_loss_and_gradient(const ProbeParams& p, std::span<const Example* const> batch,
                                               std::size_t threads) {
    const std::size_t n = batch.size();
    const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
    std::vector<LossAndGradient> partial(workers);
    for (auto& part : partial) part.grad.B = Eigen::MatrixXd::Zero(p.B.rows(), p.B.cols());

    auto run = [&](std::size_t w) {
        const std::size_t lo = n * w / workers, hi = n * (w + 1) / workers;
        for (std::size_t i = lo; i < hi; ++i) {
            auto lg = example_loss_and_gradient(p, *batch[i]);
            partial[w].loss += lg.loss;
            partial[w].grad.B += lg.grad.B;
            partial[w].grad.a += lg.grad.a;
            partial[w].grad.b += lg.grad.b;
        }
    };

    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w)
                pool.emplace_back([&, w] {
                    try {
                        run(w);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    LossAndGradient total = std::move(partial[0]);
    for (std::size_t w = 1; w < workers; ++w) {
        total.loss += partial[w].loss;
        total.grad.B += partial[w].grad.B;
        total.grad.a += partial[w].grad.a;
        total.grad.b += partial[w].grad.b;
    }
    const double inv = 1.0 / static_cast<double>(n);
    total.loss *= inv;
    total.grad.B *= inv;
    total.grad.a *= inv;
    total.grad.b *= inv;
    return total;
}

}  // namespace detail

/// Mean per-sentence loss.
inline double mean_loss(const ProbeParams& p, std::span<const Example> examples) {
    if (examples.empty()) throw std::invalid_argument("cannot compute loss over an empty set");
    double total = 0;
    for (const auto& ex : examples) total += detail::example_loss_and_gradient(p, ex).loss;
    return total / static_cast<double>(examples.size());
}

inline TrainResult train(const TrainConfig& config, std::span<const Example> train_set, std::span<const Example> dev_set) {
    validate(config);
    if (train_set.empty()) throw TrainingError("training set has no sentences with at least 2 tokens");
    if (dev_set.empty()) throw TrainingError("dev set has no sentences with at least 2 tokens");
    const auto start = std::chrono::steady_clock::now();

    const Eigen::Index dim = train_set.front().H.rows();
    ProbeParams params = init_probe(config.kernel, config.rank, dim, config.hp, config.seed);
    params.train_affine = config.train_affine && config.kernel == Kernel::Sigmoid;

    Adam adam_B(params.B.rows(), params.B.cols()), adam_a(1, 1), adam_b(1, 1);
    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainResult result;
    result.params = params;
    auto& report = result.report;
    double lr = config.initial_lr;
    double plateau_ref = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0, decays = 0;
    std::vector<const Example*> batch;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double train_total = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += config.batch_size) {
            const std::size_t hi = std::min(order.size(), lo + config.batch_size);
            batch.clear();
            for (std::size_t i = lo; i < hi; ++i) batch.push_back(&train_set[order[i]]);
            auto lg = detail::batch_loss_and_gradient(params, batch, config.threads);
            train_total += lg.loss * static_cast<double>(hi - lo);

            if (config.optimizer == Optimizer::Adam) {
                adam_B.step(params.B, lg.grad.B, lr);
                if (params.train_affine) {
                    Eigen::MatrixXd a{{params.hp.a}}, b{{params.hp.b}};
                    adam_a.step(a, Eigen::MatrixXd{{lg.grad.a}}, lr);
                    adam_b.step(b, Eigen::MatrixXd{{lg.grad.b}}, lr);
                    params.hp.a = a(0, 0);
                    params.hp.b = b(0, 0);
                }
            } else {
                params.B -= lr * lg.grad.B;
                if (params.train_affine) {
                    params.hp.a -= lr * lg.grad.a;
                    params.hp.b -= lr * lg.grad.b;
                }
            }
            if (!params.B.allFinite()) throw TrainingError("probe weights became non-finite at epoch " + std::to_string(epoch));
        }

        const double dev_loss = mean_loss(params, dev_set);
        report.epochs.push_back({epoch, train_total / static_cast<double>(order.size()), dev_loss, lr});

        if (dev_loss < report.best_dev_loss) {
            report.best_dev_loss = dev_loss;
            report.best_epoch = epoch;
            result.params = params;
        }
        if (dev_loss < plateau_ref * (1 - config.plateau_threshold)) {
            plateau_ref = dev_loss;
            bad_epochs = 0;
        } else if (++bad_epochs >= config.plateau_patience) {
            bad_epochs = 0;
            ++decays;
            lr *= config.lr_decay_factor;
            if (decays >= config.early_stop_after) {
                report.stop_reason = "early stop after " + std::to_string(decays) + " learning-rate decays";
                break;
            }
        }
    }
    if (report.stop_reason.empty()) report.stop_reason = "max_epochs reached";
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

/// Checkpoint carrying the config snapshot and training summary.
inline Checkpoint make_checkpoint(const TrainResult& r, const TrainConfig& c) {
    Checkpoint ck;
    ck.params = r.params;
    ck.seed = c.seed;
    ck.training = {{"layer", c.layer},
                   {"best_epoch", r.report.best_epoch},
                   {"best_dev_loss", r.report.best_dev_loss},
                   {"epochs_run", r.report.epochs.size()}};
    return ck;
}

/// Writes config.json, metrics.csv, best.ckpt and report.json into dir.
inline void write_run_directory(const std::filesystem::path& dir, const nlohmann::json& effective_config,
                                TrainResult& r, const TrainConfig& c) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "config.json");
        out << effective_config.dump(2) << "\n";
    }
    {
        std::ofstream out(dir / "metrics.csv");
        out << "epoch,train_loss,dev_loss,lr\n";
        out.precision(10);
        for (const auto& e : r.report.epochs)
            out << e.epoch << ',' << e.train_loss << ',' << e.dev_loss << ',' << e.lr << '\n';
    }
    r.report.checkpoint_path = (dir / "best.ckpt").string();
    write_checkpoint(make_checkpoint(r, c), r.report.checkpoint_path);
    std::ofstream out(dir / "report.json");
    out << to_json(r.report, c).dump(2) << "\n";
}

}  // namespace structprobe
