#pragma once

// Adjacency construction for node-embedding sequences.
//
// Five constructors share one contract: the result is a T×T matrix with non-negative entries.
//  - IndirectLearning: cross-node attention over the embeddings, learnable and per instance.
//  - GDM: fixed band whose weights decay geometrically with temporal distance.
//  - KNN: inverse Euclidean distance thresholded against the row mean.
//  - DirectLearning: a free T×T parameter shared by every instance.
//  - AllOne: the fully connected baseline.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>

#include "mmgraph/tensor.hpp"

namespace mmgraph {

enum class AdjacencyKind { IndirectLearning, GDM, KNN, DirectLearning, AllOne };

inline const char* to_string(AdjacencyKind k) {
    switch (k) {
        case AdjacencyKind::IndirectLearning: return "indirect";
        case AdjacencyKind::GDM: return "gdm";
        case AdjacencyKind::KNN: return "knn";
        case AdjacencyKind::DirectLearning: return "direct";
        case AdjacencyKind::AllOne: return "all_one";
    }
    return "?";
}

inline AdjacencyKind parse_adjacency_kind(const std::string& s) {
    for (auto k : {AdjacencyKind::IndirectLearning, AdjacencyKind::GDM, AdjacencyKind::KNN,
                   AdjacencyKind::DirectLearning, AdjacencyKind::AllOne})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown adjacency kind '" + s + "'");
}

/// Learnable d×d maps for the attention-style constructor.
struct IndirectParams {
    Tensor w1, w2, wq, wp;
    double eps = 1e-8;
};

struct GdmParams {
    double lambda = 2.0;  // attenuation; entries shrink by 1/lambda per step
    std::size_t n = 3;    // truncation: entries at distance >= n are zero
};

struct KnnParams {
    double alpha = 1.0;
    double eps = 1e-8;
};

struct DirectParams {
    Tensor a_hat;  // T×T, fixed to the configured sequence length
    double gamma = 1.0;
};

struct AllOneParams {};

/// Constructor choice plus its parameters; the active alternative is the kind.
struct AdjacencySpec {
    std::variant<IndirectParams, GdmParams, KnnParams, DirectParams, AllOneParams> params;

    AdjacencyKind kind() const { return static_cast<AdjacencyKind>(params.index()); }
};

/// T×T non-negative matrix. Learnable kinds keep their tape connection.
struct Adjacency {
    Tensor matrix;

    std::size_t order() const { return matrix.rows(); }
};

inline Adjacency build_indirect(const Tensor& nodes, const IndirectParams& p) {
    detail::require_rank2(nodes, "build_indirect");
    const std::size_t d = nodes.cols();
    for (const Tensor* w : {&p.w1, &p.w2, &p.wq, &p.wp}) {
        if (w->rank() != 2 || w->rows() != d || w->cols() != d)
            throw ShapeError("build_indirect: parameter " + shape_str(w->shape()) + " does not match node width " +
                             std::to_string(d));
    }
    // Nodes are rows, so every map right-multiplies.
    const Tensor q = relu(matmul(nodes, p.wq));
    const Tensor pk = relu(matmul(nodes, p.wp));
    const Tensor left = relu(matmul(q, p.w1));
    const Tensor right = relu(matmul(pk, p.w2));
    const Tensor a_hat = relu(matmul(left, transpose(right)));
    return {row_normalize(a_hat, p.eps)};
}

inline void validate(const GdmParams& p) {
    if (!(p.lambda > 1.0)) throw ConfigError("gdm: lambda must be > 1");
    if (p.n < 2) throw ConfigError("gdm: truncation n must be >= 2");
}

inline Adjacency build_gdm(std::size_t t, const GdmParams& p) {
    validate(p);
    if (t == 0) throw ShapeError("build_gdm: length must be >= 1");
    Tensor a = Tensor::zeros(t, t);
    auto m = a.mutable_data();
    const double decay = 1.0 / p.lambda;
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            const std::size_t dist = i > j ? i - j : j - i;
            if (dist < p.n) m[i * t + j] = std::pow(decay, static_cast<double>(dist));
        }
    }
    return {a};
}

/// Layers needed for every node of a length-t GDM graph to see every other node.
inline std::size_t gdm_full_coverage_layers(std::size_t t, std::size_t n) {
    if (n < 2) throw ConfigError("gdm: truncation n must be >= 2");
    if (t <= 1) return 0;
    return (t - 1 + (n - 2)) / (n - 1);
}

/// Thresholded inverse-distance graph. Self-similarity is left out of the row mean and the
/// diagonal is zero. The result is a constant: no gradient reaches the node embeddings.
inline Adjacency build_knn(const Tensor& nodes, const KnnParams& p) {
    detail::require_rank2(nodes, "build_knn");
    if (p.alpha < 0.0) throw ConfigError("knn: alpha must be >= 0");
    const std::size_t t = nodes.rows(), d = nodes.cols();
    if (t < 2) throw ShapeError("build_knn: need at least two nodes");
    const auto x = nodes.data();
    std::vector<double> sim(t * t, 0.0);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            if (i == j) continue;
            double ss = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = x[j * d + k] - x[i * d + k];
                ss += diff * diff;
            }
            sim[i * t + j] = 1.0 / (std::sqrt(ss) + p.eps);
        }
    }
    Tensor a = Tensor::zeros(t, t);
    auto m = a.mutable_data();
    for (std::size_t i = 0; i < t; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < t; ++j) row += sim[i * t + j];
        const double cut = p.alpha * row / static_cast<double>(t - 1);
        double kept = 0.0;
        for (std::size_t j = 0; j < t; ++j) {
            if (i == j) continue;
            m[i * t + j] = std::max(0.0, sim[i * t + j] - cut);
            kept += m[i * t + j];
        }
        if (kept > 0.0)
            for (std::size_t j = 0; j < t; ++j) m[i * t + j] /= kept;
    }
    return {a};
}

inline Adjacency build_direct(const DirectParams& p) {
    detail::require_rank2(p.a_hat, "build_direct");
    if (p.a_hat.rows() != p.a_hat.cols()) throw ShapeError("build_direct: a_hat must be square");
    return {relu(p.a_hat)};
}

/// Σ_i (Σ_j Â_ij)² + Σ_i (Σ_j relu(Â_ij) − γ)².
inline Tensor direct_reg_loss(const DirectParams& p) {
    const Tensor signed_sums = row_sums(p.a_hat);
    const Tensor positive_mass = row_sums(relu(p.a_hat));
    return add(sum(square(signed_sums)), sum(square(add_scalar(positive_mass, -p.gamma))));
}

inline Adjacency build_all_one(std::size_t t) { return {Tensor::full(t, t, 1.0)}; }

/// Dispatches on the spec. `nodes` supplies T (and the embeddings for instance-specific kinds).
inline Adjacency build_adjacency(const AdjacencySpec& spec, const Tensor& nodes) {
    const std::size_t t = nodes.rows();
    return std::visit(
        [&](const auto& p) -> Adjacency {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, IndirectParams>) {
                return build_indirect(nodes, p);
            } else if constexpr (std::is_same_v<P, GdmParams>) {
                return build_gdm(t, p);
            } else if constexpr (std::is_same_v<P, KnnParams>) {
                return build_knn(nodes, p);
            } else if constexpr (std::is_same_v<P, DirectParams>) {
                if (p.a_hat.rows() != t)
                    throw ShapeError("build_adjacency: direct matrix is " + shape_str(p.a_hat.shape()) +
                                     " but the graph has " + std::to_string(t) + " nodes");
                return build_direct(p);
            } else {
                return build_all_one(t);
            }
        },
        spec.params);
}

// ---------------------------------------------------------------------------------------------
// Export

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// One row per line, comma-separated, round-trip precision.
inline void write_matrix_csv(const Tensor& m, const std::filesystem::path& path) {
    detail::require_rank2(m, "write_matrix_csv");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
        out << '\n';
    }
    if (!out) throw Error("write failed: " + path.string());
}

/// Binary 8-bit PGM heatmap, linear min–max scaling (a constant matrix maps to 0).
inline void write_matrix_pgm(const Tensor& m, const std::filesystem::path& path) {
    detail::require_rank2(m, "write_matrix_pgm");
    const auto v = m.data();
    double lo = 0.0, hi = 0.0;
    if (!v.empty()) {
        lo = *std::min_element(v.begin(), v.end());
        hi = *std::max_element(v.begin(), v.end());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
    std::string pixels(v.size(), '\0');
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double unit = hi > lo ? (v[i] - lo) / (hi - lo) : 0.0;
        pixels[i] = static_cast<char>(static_cast<std::uint8_t>(std::lround(unit * 255.0)));
    }
    out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    if (!out) throw Error("write failed: " + path.string());
}

/// Writes `<stem>.csv` and `<stem>.pgm`.
inline void export_adjacency(const Tensor& m, const std::filesystem::path& stem) {
    write_matrix_csv(m, std::filesystem::path(stem).concat(".csv"));
    write_matrix_pgm(m, std::filesystem::path(stem).concat(".pgm"));
}

}  // namespace mmgraph
