#pragma once

// Structural probes: a projection B followed by an optional per-token
// non-linearity, with distances measured in the resulting feature space.
//
// Matrices of sentence vectors are column-per-token: H is n×T, Z = B·H is k×T.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include "structprobe/treebank.hpp"

namespace structprobe {

enum class Kernel { Linear, Polynomial, Rbf, Sigmoid, BilinearReference };
enum class RbfMode { Elementwise, Scalar };

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string_view kernel_name(Kernel k) {
    switch (k) {
        case Kernel::Linear: return "linear";
        case Kernel::Polynomial: return "poly";
        case Kernel::Rbf: return "rbf";
        case Kernel::Sigmoid: return "sigmoid";
        case Kernel::BilinearReference: return "bilinear-ref";
    }
    return "?";
}

inline constexpr std::string_view kKernelNames = "{linear, poly, rbf, sigmoid, bilinear-ref}";

inline std::optional<Kernel> parse_kernel(std::string_view name) {
    for (auto k : {Kernel::Linear, Kernel::Polynomial, Kernel::Rbf, Kernel::Sigmoid, Kernel::BilinearReference})
        if (kernel_name(k) == name) return k;
    return std::nullopt;
}

inline std::string_view rbf_mode_name(RbfMode m) { return m == RbfMode::Elementwise ? "elementwise" : "scalar"; }

inline std::optional<RbfMode> parse_rbf_mode(std::string_view name) {
    if (name == "elementwise") return RbfMode::Elementwise;
    if (name == "scalar") return RbfMode::Scalar;
    return std::nullopt;
}

struct KernelParams {
    double c = 0.0;   // polynomial shift
    int degree = 2;   // polynomial degree
    double sigma = 1.0;
    double a = 1.0;   // sigmoid slope
    double b = 0.0;   // sigmoid offset
    RbfMode rbf_mode = RbfMode::Elementwise;
    // Two-argument kernel used by BilinearReference: Polynomial, Rbf or Sigmoid.
    Kernel pair_kernel = Kernel::Rbf;

    friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

struct ProbeParams {
    Eigen::MatrixXd B;  // k×n
    Kernel kernel = Kernel::Linear;
    KernelParams hp;
    // Sigmoid only: treat a and b as trainable.
    bool train_affine = false;

    Eigen::Index rank() const { return B.rows(); }
    Eigen::Index dim() const { return B.cols(); }
};

inline void validate(const ProbeParams& p) {
    if (p.B.rows() < 1 || p.B.cols() < 1) throw std::invalid_argument("probe matrix must be at least 1×1");
    if (!p.B.allFinite()) throw NumericError("probe matrix has non-finite entries");
    if (p.hp.c < 0) throw std::invalid_argument("polynomial shift c must be >= 0");
    if (p.hp.degree < 1) throw std::invalid_argument("polynomial degree must be >= 1");
    if (!(p.hp.sigma > 0)) throw std::invalid_argument("rbf sigma must be > 0");
    if (p.kernel == Kernel::BilinearReference && p.hp.pair_kernel != Kernel::Polynomial &&
        p.hp.pair_kernel != Kernel::Rbf && p.hp.pair_kernel != Kernel::Sigmoid)
        throw std::invalid_argument("bilinear-ref pair kernel must be poly, rbf or sigmoid");
}

/// B entries i.i.d. uniform on [-0.05, 0.05].
inline ProbeParams init_probe(Kernel kernel, Eigen::Index rank, Eigen::Index dim, const KernelParams& hp,
                              std::uint64_t seed) {
    ProbeParams p;
    p.kernel = kernel;
    p.hp = hp;
    p.B.resize(rank, dim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    for (Eigen::Index r = 0; r < rank; ++r)
        for (Eigen::Index c = 0; c < dim; ++c) p.B(r, c) = u(rng);
    validate(p);
    return p;
}

/// Symmetric T×T matrix of squared predicted distances.
struct DistanceMatrix {
    Eigen::MatrixXd values;

    Eigen::Index size() const { return values.rows(); }
    double operator()(Eigen::Index i, Eigen::Index j) const { return values(i, j); }
};

namespace detail {

inline bool is_feature_kernel(Kernel k) { return k != Kernel::BilinearReference; }

inline bool scalar_rbf(const ProbeParams& p) { return p.kernel == Kernel::Rbf && p.hp.rbf_mode == RbfMode::Scalar; }

// Applies the per-token non-linearity to projected columns Z (k×T).
inline Eigen::MatrixXd features(const ProbeParams& p, const Eigen::MatrixXd& Z) {
    const auto& hp = p.hp;
    switch (p.kernel) {
        case Kernel::Linear: return Z;
        case Kernel::Polynomial: return (Z.array() + hp.c).pow(hp.degree).matrix();
        case Kernel::Rbf: {
            const double s2 = 2 * hp.sigma * hp.sigma;
            if (hp.rbf_mode == RbfMode::Elementwise) return (-Z.array().square() / s2).exp().matrix();
            return (-Z.colwise().squaredNorm().array() / s2).exp().matrix();
        }
        case Kernel::Sigmoid: return (hp.a * Z.array() + hp.b).tanh().matrix();
        case Kernel::BilinearReference: break;
    }
    throw std::logic_error("bilinear-ref has no per-token feature map");
}

// Elementwise dF/dZ for the elementwise kernels.
inline Eigen::ArrayXXd feature_slope(const ProbeParams& p, const Eigen::MatrixXd& Z, const Eigen::MatrixXd& F) {
    const auto& hp = p.hp;
    switch (p.kernel) {
        case Kernel::Linear: return Eigen::ArrayXXd::Ones(Z.rows(), Z.cols());
        case Kernel::Polynomial:
            if (hp.degree == 1) return Eigen::ArrayXXd::Ones(Z.rows(), Z.cols());
            return hp.degree * (Z.array() + hp.c).pow(hp.degree - 1);
        case Kernel::Rbf: return -Z.array() / (hp.sigma * hp.sigma) * F.array();
        case Kernel::Sigmoid: return hp.a * (1 - F.array().square());
        case Kernel::BilinearReference: break;
    }
    throw std::logic_error("no elementwise slope for this kernel");
}

// Two-argument kernel on projected vectors and its partial derivative in u.
struct PairKernel {
    const KernelParams& hp;

    double value(const Eigen::VectorXd& u, const Eigen::VectorXd& w) const {
        switch (hp.pair_kernel) {
            case Kernel::Polynomial: return std::pow(u.dot(w) + hp.c, hp.degree);
            case Kernel::Rbf: return std::exp(-(u - w).squaredNorm() / (2 * hp.sigma * hp.sigma));
            case Kernel::Sigmoid: return std::tanh(hp.a * u.dot(w) + hp.b);
            default: break;
        }
        throw std::logic_error("unsupported pair kernel");
    }

    // d k(u, w) / du, with w held fixed.
    Eigen::VectorXd grad_first(const Eigen::VectorXd& u, const Eigen::VectorXd& w) const {
        switch (hp.pair_kernel) {
            case Kernel::Polynomial:
                return hp.degree * std::pow(u.dot(w) + hp.c, hp.degree - 1) * w;
            case Kernel::Rbf: return -value(u, w) / (hp.sigma * hp.sigma) * (u - w);
            case Kernel::Sigmoid: {
                const double t = value(u, w);
                return hp.a * (1 - t * t) * w;
            }
            default: break;
        }
        throw std::logic_error("unsupported pair kernel");
    }

    // d k(u, u) / du.
    Eigen::VectorXd grad_diag(const Eigen::VectorXd& u) const {
        if (hp.pair_kernel == Kernel::Rbf) return Eigen::VectorXd::Zero(u.size());
        return 2 * grad_first(u, u);
    }
};

// Signed pre-norm quantity k(u,u) - 2k(u,w) + k(w,w); its absolute value is d².
inline Eigen::MatrixXd bilinear_terms(const ProbeParams& p, const Eigen::MatrixXd& Z) {
    const PairKernel K{p.hp};
    const Eigen::Index T = Z.cols();
    Eigen::VectorXd diag(T);
    for (Eigen::Index i = 0; i < T; ++i) diag(i) = K.value(Z.col(i), Z.col(i));
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(T, T);
    for (Eigen::Index i = 0; i < T; ++i)
        for (Eigen::Index j = i + 1; j < T; ++j) E(i, j) = E(j, i) = diag(i) - 2 * K.value(Z.col(i), Z.col(j)) + diag(j);
    return E;
}

inline Eigen::MatrixXd pairwise_sq(const Eigen::MatrixXd& F) {
    const Eigen::Index T = F.cols();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(T, T);
    for (Eigen::Index i = 0; i < T; ++i)
        for (Eigen::Index j = i + 1; j < T; ++j) D(i, j) = D(j, i) = (F.col(i) - F.col(j)).squaredNorm();
    return D;
}

inline void check_finite(const Eigen::MatrixXd& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string("non-finite value in ") + what);
}

inline double sign(double x) { return (x > 0) - (x < 0); }

}  // namespace detail

/// Per-token feature vector. Not defined for BilinearReference.
inline Eigen::VectorXd feature_map(const ProbeParams& p, const Eigen::VectorXd& h) {
    if (h.size() != p.dim()) throw std::invalid_argument("embedding length does not match probe dimension");
    if (!h.allFinite()) throw NumericError("non-finite embedding");
    Eigen::MatrixXd f = detail::features(p, p.B * h);
    detail::check_finite(f, "feature map");
    return f.col(0);
}

inline DistanceMatrix distance_matrix(const ProbeParams& p, const Eigen::MatrixXd& H) {
    if (H.rows() != p.dim()) throw std::invalid_argument("embedding length does not match probe dimension");
    if (H.cols() < 1) throw std::invalid_argument("sentence must have at least one token");
    const Eigen::MatrixXd Z = p.B * H;
    DistanceMatrix dm;
    if (detail::is_feature_kernel(p.kernel)) {
        const Eigen::MatrixXd F = detail::features(p, Z);
        detail::check_finite(F, "feature map");
        dm.values = detail::pairwise_sq(F);
    } else {
        dm.values = detail::bilinear_terms(p, Z).cwiseAbs();
    }
    detail::check_finite(dm.values, "distance matrix");
    return dm;
}

inline double pair_distance(const ProbeParams& p, const Eigen::VectorXd& hi, const Eigen::VectorXd& hj) {
    Eigen::MatrixXd H(hi.size(), 2);
    H << hi, hj;
    return std::sqrt(distance_matrix(p, H)(0, 1));
}

namespace detail {

inline void check_gold(const Eigen::MatrixXd& H, const TreeDistances& gold) {
    if (static_cast<std::size_t>(H.cols()) != gold.size())
        throw std::invalid_argument("sentence has " + std::to_string(H.cols()) + " vectors but gold tree has " +
                                    std::to_string(gold.size()) + " tokens");
}

inline double loss_from(const DistanceMatrix& dm, const TreeDistances& gold) {
    const Eigen::Index T = dm.size();
    double total = 0;
    for (Eigen::Index i = 0; i < T; ++i)
        for (Eigen::Index j = 0; j < T; ++j) total += std::abs(gold.at(i, j) - dm(i, j));
    return total / static_cast<double>(T * T);
}

}  // namespace detail

/// (1/T²) Σ over ordered pairs of |d_T - d_B²|.
inline double sentence_loss(const ProbeParams& p, const Eigen::MatrixXd& H, const TreeDistances& gold) {
    detail::check_gold(H, gold);
    return detail::loss_from(distance_matrix(p, H), gold);
}

struct Gradient {
    Eigen::MatrixXd B;
    double a = 0;  // only populated for trainable sigmoid
    double b = 0;
};

struct LossAndGradient {
    double loss = 0;
    Gradient grad;
};

/// Loss and its gradient in one pass. Subgradient of |x| at 0 is taken as 0.
inline LossAndGradient loss_and_gradient(const ProbeParams& p, const Eigen::MatrixXd& H, const TreeDistances& gold) {
    detail::check_gold(H, gold);
    const Eigen::Index T = H.cols();
    const double inv_t2 = 1.0 / static_cast<double>(T * T);
    const Eigen::MatrixXd Z = p.B * H;

    LossAndGradient out;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(Z.rows(), T);  // dLoss/dZ

    if (detail::is_feature_kernel(p.kernel)) {
        const Eigen::MatrixXd F = detail::features(p, Z);
        detail::check_finite(F, "feature map");
        DistanceMatrix dm{detail::pairwise_sq(F)};
        out.loss = detail::loss_from(dm, gold);

        // coef.col(i) = Σ_j 4 s_ij/T² (F_i - F_j): derivative of the loss w.r.t. F_i.
        Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(F.rows(), T);
        for (Eigen::Index i = 0; i < T; ++i)
            for (Eigen::Index j = 0; j < T; ++j) {
                if (i == j) continue;
                const double s = detail::sign(dm(i, j) - gold.at(i, j));
                if (s != 0) coef.col(i) += 4 * s * inv_t2 * (F.col(i) - F.col(j));
            }

        if (detail::scalar_rbf(p)) {
            const double inv_s2 = 1.0 / (p.hp.sigma * p.hp.sigma);
            for (Eigen::Index i = 0; i < T; ++i) G.col(i) = coef(0, i) * (-F(0, i) * inv_s2) * Z.col(i);
        } else {
            const Eigen::ArrayXXd slope = detail::feature_slope(p, Z, F);
            G = (coef.array() * slope).matrix();
            if (p.kernel == Kernel::Sigmoid && p.train_affine) {
                const Eigen::ArrayXXd dtanh = 1 - F.array().square();
                out.grad.a = (coef.array() * dtanh * Z.array()).sum();
                out.grad.b = (coef.array() * dtanh).sum();
            }
        }
    } else {
        const Eigen::MatrixXd E = detail::bilinear_terms(p, Z);
        detail::check_finite(E, "bilinear kernel");
        DistanceMatrix dm{E.cwiseAbs()};
        out.loss = detail::loss_from(dm, gold);

        const detail::PairKernel K{p.hp};
        for (Eigen::Index i = 0; i < T; ++i) {
            const Eigen::VectorXd self = K.grad_diag(Z.col(i));
            for (Eigen::Index j = 0; j < T; ++j) {
                if (i == j) continue;
                const double c = 2 * inv_t2 * detail::sign(dm(i, j) - gold.at(i, j)) * detail::sign(E(i, j));
                if (c != 0) G.col(i) += c * (self - 2 * K.grad_first(Z.col(i), Z.col(j)));
            }
        }
    }

    out.grad.B = G * H.transpose();
    detail::check_finite(out.grad.B, "gradient");
    return out;
}

inline Gradient loss_gradient(const ProbeParams& p, const Eigen::MatrixXd& H, const TreeDistances& gold) {
    return loss_and_gradient(p, H, gold).grad;
}

}  // namespace structprobe
