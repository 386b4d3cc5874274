#pragma once

// The full network: one graph encoder per modality, the pooling fusion stage, and a two-layer
// regression head over [fusion readout, mean language node, mean acoustic node, mean visual node].

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmgraph/data.hpp"
#include "mmgraph/gpfn.hpp"

namespace mmgraph {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

inline std::size_t count_params(const NamedParams& params) {
    std::size_t n = 0;
    for (const auto& [name, t] : params) n += t.numel();
    return n;
}

struct ModelConfig {
    Triple lengths{10, 40, 40};
    Triple input_dims{8, 8, 8};
    std::size_t hidden = 32;      // width of every graph iteration and node projection
    std::size_t iterations = 2;   // GraphSAGE iterations per graph
    AdjacencyKind adjacency = AdjacencyKind::IndirectLearning;
    GdmParams gdm;
    KnnParams knn;
    double indirect_eps = 1e-8;
    double gamma = 1.0;
    GpfnConfig gpfn;
    std::size_t pooled_nodes = 0;  // T' of link-similarity pooling; 0 = ceil(T/4)
    std::size_t link_width = 0;    // d'; 0 = hidden
    std::size_t head_hidden = 32;

    std::size_t fused_length() const { return lengths[0] + lengths[1] + lengths[2]; }
    std::size_t link_input_nodes() const { return pooled_node_count(lengths, gpfn); }
    std::size_t link_output_nodes() const {
        return pooled_nodes ? pooled_nodes : (link_input_nodes() + 3) / 4;
    }
    std::size_t readout_width() const {
        if (!gpfn.link_pool) return hidden;
        return link_width ? link_width : hidden;
    }

    void validate() const {
        for (std::size_t m = 0; m < 3; ++m) {
            if (lengths[m] == 0) throw ConfigError("model: every modality length must be >= 1");
            if (input_dims[m] == 0) throw ConfigError("model: every input width must be >= 1");
        }
        if (hidden == 0 || head_hidden == 0) throw ConfigError("model: widths must be >= 1");
        if (iterations == 0) throw ConfigError("model: iterations must be >= 1");
        if (gpfn.pool_size == 0) throw ConfigError("model: pool size must be >= 1");
        if (gpfn.link_pool && link_output_nodes() >= link_input_nodes())
            throw ConfigError("model: link pooling must reduce the node count (T' < T)");
        if (adjacency == AdjacencyKind::GDM) mmgraph::validate(gdm);
        if (adjacency == AdjacencyKind::KNN && knn.alpha < 0.0) throw ConfigError("model: knn alpha must be >= 0");
    }
};

/// Per-forward adjacency matrices, for inspection and export.
struct ForwardTrace {
    std::array<Tensor, 4> adjacency;  // language, acoustic, visual, fused
};

class Model {
public:
    explicit Model(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
        cfg_.validate();
        for (std::size_t m = 0; m < 3; ++m) {
            encoders_[m].adjacency = make_adjacency(cfg_.lengths[m], cfg_.input_dims[m]);
            encoders_[m].conv = make_sage(cfg_.input_dims[m]);
        }
        fusion_.adjacency = make_adjacency(cfg_.fused_length(), cfg_.hidden);
        fusion_.conv = make_sage(cfg_.hidden);
        if (cfg_.gpfn.link_pool) {
            fusion_.link.wz = Tensor::zeros(cfg_.link_input_nodes(), cfg_.link_output_nodes());
            fusion_.link.ws = Tensor::zeros(cfg_.hidden, cfg_.readout_width());
        }
        const std::size_t concat = cfg_.readout_width() + 3 * cfg_.hidden;
        head_w1_ = Tensor::zeros(concat, cfg_.head_hidden);
        head_b1_ = Tensor::zeros(1, cfg_.head_hidden);
        head_w2_ = Tensor::zeros(cfg_.head_hidden, 1);
        head_b2_ = Tensor::zeros(1, 1);
        for (auto& [name, t] : parameters()) t.set_requires_grad(true);
        initialize(seed);
    }

    const ModelConfig& config() const { return cfg_; }

    /// uniform(-1/√fan_in, 1/√fan_in) for every tensor, drawn in parameter order.
    void initialize(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        for (auto& [name, t] : parameters()) {
            const std::size_t fan_in = fan_in_of(name, t);
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            std::uniform_real_distribution<double> dist(-bound, bound);
            for (double& v : t.mutable_data()) v = dist(rng);
        }
    }

    /// Every learnable tensor exactly once, in a stable order. Handles share storage.
    NamedParams parameters() const {
        NamedParams out;
        for (std::size_t m = 0; m < 3; ++m) {
            const std::string prefix = kModalityNames[m];
            add_adjacency(out, prefix, encoders_[m].adjacency);
            add_sage(out, prefix, encoders_[m].conv);
        }
        add_adjacency(out, "fused", fusion_.adjacency);
        add_sage(out, "fused", fusion_.conv);
        if (cfg_.gpfn.link_pool) {
            out.emplace_back("fused.link.wz", fusion_.link.wz);
            out.emplace_back("fused.link.ws", fusion_.link.ws);
        }
        out.emplace_back("head.w1", head_w1_);
        out.emplace_back("head.b1", head_b1_);
        out.emplace_back("head.w2", head_w2_);
        out.emplace_back("head.b2", head_b2_);
        return out;
    }

    std::size_t param_count() const { return count_params(parameters()); }

    void zero_grad() {
        for (auto& [name, t] : parameters()) t.zero_grad();
    }

    /// Scalar score (1×1) for one utterance's three sequences.
    Tensor forward(const std::array<Tensor, 3>& inputs, ForwardTrace* trace = nullptr) const {
        std::array<GraphState, 3> graphs;
        for (std::size_t m = 0; m < 3; ++m) {
            const Tensor& x = inputs[m];
            if (x.rank() != 2 || x.rows() != cfg_.lengths[m] || x.cols() != cfg_.input_dims[m])
                throw ShapeError(std::string("model: ") + kModalityNames[m] + " input " + shape_str(x.shape()) +
                                 " but the model expects [" + std::to_string(cfg_.lengths[m]) + "x" +
                                 std::to_string(cfg_.input_dims[m]) + "]");
            graphs[m] = unimodal_encode({static_cast<Modality>(m), x}, encoders_[m].adjacency, encoders_[m].conv);
            if (trace) trace->adjacency[m] = graphs[m].adjacency;
        }
        const FusedGraph fused = node_sort(graphs[0], graphs[1], graphs[2], fusion_.adjacency);
        if (trace) trace->adjacency[3] = fused.adjacency;
        GraphState g{sage_stack(fused.nodes, fused.adjacency, fusion_.conv), fused.adjacency};
        const GpfnConfig& pc = cfg_.gpfn;
        if (pc.window_pool) g = window_pool(g, aligned_windows(fused.ranges, pc.pool_size), pc.pool_mode);
        if (pc.link_pool) g = link_sim_pool(g, fusion_.link);
        const Tensor readout = row_mean(g.nodes);

        const Tensor rep =
            concat_cols({readout, row_mean(graphs[0].nodes), row_mean(graphs[1].nodes), row_mean(graphs[2].nodes)});
        const Tensor h = relu(add_bias(matmul(rep, head_w1_), head_b1_));
        return add_bias(matmul(h, head_w2_), head_b2_);
    }

    /// B×1 predictions for a batch.
    Tensor forward_batch(std::span<const Utterance* const> batch) const {
        std::vector<Tensor> scores;
        scores.reserve(batch.size());
        for (const Utterance* u : batch) scores.push_back(forward(u->modalities));
        return concat_rows(scores);
    }

    /// Sum of the direct-learning regularizer over every graph (0 for other kinds).
    Tensor regularizer() const {
        Tensor total = Tensor::scalar(0.0);
        auto accumulate = [&](const AdjacencySpec& spec) {
            if (const auto* d = std::get_if<DirectParams>(&spec.params)) total = add(total, direct_reg_loss(*d));
        };
        for (const auto& e : encoders_) accumulate(e.adjacency);
        accumulate(fusion_.adjacency);
        return total;
    }

    bool has_regularizer() const { return cfg_.adjacency == AdjacencyKind::DirectLearning; }

private:
    struct Encoder {
        AdjacencySpec adjacency;
        SageParams conv;
    };

    AdjacencySpec make_adjacency(std::size_t t, std::size_t d) const {
        switch (cfg_.adjacency) {
            case AdjacencyKind::IndirectLearning:
                return {IndirectParams{Tensor::zeros(d, d), Tensor::zeros(d, d), Tensor::zeros(d, d),
                                       Tensor::zeros(d, d), cfg_.indirect_eps}};
            case AdjacencyKind::GDM: return {cfg_.gdm};
            case AdjacencyKind::KNN: return {cfg_.knn};
            case AdjacencyKind::DirectLearning: return {DirectParams{Tensor::zeros(t, t), cfg_.gamma}};
            case AdjacencyKind::AllOne: return {AllOneParams{}};
        }
        throw ConfigError("model: unknown adjacency kind");
    }

    SageParams make_sage(std::size_t in) const {
        SageParams p;
        for (std::size_t k = 0; k < cfg_.iterations; ++k)
            p.layers.push_back(Tensor::zeros(k == 0 ? in : cfg_.hidden, cfg_.hidden));
        p.wo = Tensor::zeros(cfg_.iterations * cfg_.hidden, cfg_.hidden);
        p.bo = Tensor::zeros(1, cfg_.hidden);
        return p;
    }

    static void add_adjacency(NamedParams& out, const std::string& prefix, const AdjacencySpec& spec) {
        if (const auto* p = std::get_if<IndirectParams>(&spec.params)) {
            out.emplace_back(prefix + ".adj.w1", p->w1);
            out.emplace_back(prefix + ".adj.w2", p->w2);
            out.emplace_back(prefix + ".adj.wq", p->wq);
            out.emplace_back(prefix + ".adj.wp", p->wp);
        } else if (const auto* d = std::get_if<DirectParams>(&spec.params)) {
            out.emplace_back(prefix + ".adj.a_hat", d->a_hat);
        }
    }

    static void add_sage(NamedParams& out, const std::string& prefix, const SageParams& p) {
        for (std::size_t k = 0; k < p.layers.size(); ++k)
            out.emplace_back(prefix + ".sage.w" + std::to_string(k + 1), p.layers[k]);
        out.emplace_back(prefix + ".sage.wo", p.wo);
        out.emplace_back(prefix + ".sage.bo", p.bo);
    }

    /// Biases take the fan-in of the weight they follow.
    std::size_t fan_in_of(const std::string& name, const Tensor& t) const {
        if (name == "head.b1") return head_w1_.rows();
        if (name == "head.b2") return head_w2_.rows();
        if (name.ends_with(".sage.bo")) return cfg_.iterations * cfg_.hidden;
        return std::max<std::size_t>(1, t.rows());
    }

    ModelConfig cfg_;
    std::array<Encoder, 3> encoders_;
    GpfnParams fusion_;
    Tensor head_w1_, head_b1_, head_w2_, head_b2_;
};

/// mean |pred − label| + reg_weight · regularizer.
inline Tensor loss(const Tensor& pred, const Tensor& labels, const Tensor& regularizer, double reg_weight) {
    if (pred.empty()) throw ShapeError("loss: empty batch");
    if (pred.numel() != labels.numel()) throw ShapeError("loss: prediction/label count mismatch");
    const Tensor task = mae(pred, Tensor(pred.shape(), std::vector<double>(labels.data().begin(), labels.data().end())));
    if (reg_weight == 0.0) return task;
    return add(task, scale(regularizer, reg_weight));
}

inline Tensor model_loss(const Model& model, const Tensor& pred, const Tensor& labels, double reg_weight) {
    if (!model.has_regularizer()) return loss(pred, labels, Tensor::scalar(0.0), 0.0);
    return loss(pred, labels, model.regularizer(), reg_weight);
}

// ---------------------------------------------------------------------------------------------
// Checkpoints
//
//   "MMG1"
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, rank × u64 extents
//   per tensor, in table order: little-endian f64 payload

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

    std::uint64_t take(std::size_t width, const char* what) {
        if (pos_ + width > bytes_.size())
            throw FormatError(source_ + ": truncated checkpoint while reading " + what);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < width; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += width;
        return v;
    }
    std::string take_bytes(std::size_t n, const char* what) {
        if (pos_ + n > bytes_.size()) throw FormatError(source_ + ": truncated checkpoint while reading " + what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }
    const std::string& source() const { return source_; }

private:
    std::string bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_params(const NamedParams& params) {
    std::string buf = "MMG1";
    detail::put_u32(buf, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        detail::put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf += name;
        detail::put_u32(buf, static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape()) detail::put_u64(buf, e);
    }
    for (const auto& [name, t] : params)
        for (double v : t.data()) detail::put_u64(buf, std::bit_cast<std::uint64_t>(v));
    return buf;
}

/// Validates the whole byte string against `params` before writing any value.
inline void deserialize_params(const std::string& bytes, const NamedParams& params, const std::string& source) {
    detail::Reader r(bytes, source);
    if (r.take_bytes(4, "magic") != "MMG1") throw FormatError(source + ": not an MMG1 checkpoint");
    const std::uint64_t count = r.take(4, "tensor count");
    if (count != params.size())
        throw FormatError(source + ": checkpoint has " + std::to_string(count) + " tensors, model has " +
                          std::to_string(params.size()));
    for (const auto& [name, t] : params) {
        const std::uint64_t len = r.take(4, "name length");
        const std::string got = r.take_bytes(len, "name");
        if (got != name) throw FormatError(source + ": expected tensor '" + name + "', found '" + got + "'");
        const std::uint64_t rank = r.take(4, "rank");
        Shape shape;
        for (std::uint64_t i = 0; i < rank; ++i) shape.push_back(r.take(8, "extent"));
        if (shape != t.shape())
            throw FormatError(source + ": tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                              shape_str(t.shape()));
    }
    std::vector<std::vector<double>> values;
    for (const auto& [name, t] : params) {
        std::vector<double> v(t.numel());
        for (double& x : v) x = std::bit_cast<double>(r.take(8, ("payload of " + name).c_str()));
        values.push_back(std::move(v));
    }
    if (!r.done()) throw FormatError(source + ": trailing bytes after payload");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].second;
        std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
    }
}

inline void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    const std::string bytes = serialize_params(model.parameters());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

inline void load_checkpoint(Model& model, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("missing checkpoint: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    deserialize_params(bytes, model.parameters(), path.string());
}

/// Value snapshot of every parameter (for best-checkpoint tracking).
inline std::vector<std::vector<double>> snapshot(const NamedParams& params) {
    std::vector<std::vector<double>> out;
    for (const auto& [name, t] : params) out.emplace_back(t.data().begin(), t.data().end());
    return out;
}

inline void restore(const NamedParams& params, const std::vector<std::vector<double>>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].second;
        std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
    }
}

}  // namespace mmgraph
