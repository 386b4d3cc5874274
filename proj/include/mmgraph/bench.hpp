#pragma once

// Per-batch training-step timing of the graph model against sequence baselines that swap the
// graph encoders and the fusion stage for a causal TCN stack or a tanh recurrent cell.

#include <algorithm>
#include <chrono>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmgraph/train.hpp"

namespace mmgraph {

/// Causal temporal convolution: x_t = Σ_i f_i N_{t−i} over i < k with t − i ≥ 0.
/// `kernel` is k×d_in×d_out.
inline Tensor tcn_layer(const Tensor& nodes, const Tensor& kernel) {
    detail::require_rank2(nodes, "tcn_layer");
    if (kernel.rank() != 3 || kernel.dim(0) == 0)
        throw ShapeError("tcn_layer: kernel must be k×d_in×d_out with k >= 1, got " + shape_str(kernel.shape()));
    if (kernel.dim(1) != nodes.cols())
        throw ShapeError("tcn_layer: kernel " + shape_str(kernel.shape()) + " vs input " + shape_str(nodes.shape()));
    Tensor out = matmul(nodes, take(kernel, 0));
    for (std::size_t i = 1; i < kernel.dim(0) && i < nodes.rows(); ++i)
        out = add(out, matmul(shift_rows(nodes, i), take(kernel, i)));
    return out;
}

/// h_t = tanh(x_t W_x + h_{t−1} W_h), h_0 = 0. Returns every state, T×d.
inline Tensor recurrent_reference(const Tensor& nodes, const Tensor& wx, const Tensor& wh) {
    detail::require_rank2(nodes, "recurrent_reference");
    if (wx.rows() != nodes.cols() || wh.rows() != wx.cols() || wh.cols() != wx.cols())
        throw ShapeError("recurrent_reference: weights " + shape_str(wx.shape()) + ", " + shape_str(wh.shape()) +
                         " vs input " + shape_str(nodes.shape()));
    const Tensor projected = matmul(nodes, wx);
    std::vector<Tensor> states;
    states.reserve(nodes.rows());
    for (std::size_t t = 0; t < nodes.rows(); ++t) {
        const Tensor x = slice_rows(projected, t, t + 1);
        states.push_back(tanh(t == 0 ? x : add(x, matmul(states.back(), wh))));
    }
    return concat_rows(states);
}

/// Strictly-lower band: entry (t, t−i) is 1 for 1 ≤ i < k. With the self-loop added by the
/// mean aggregator, a GraphSAGE step over this band equals a constant-kernel TCN step divided
/// by min(k, t+1).
inline Tensor causal_band(std::size_t t, std::size_t k) {
    Tensor a = Tensor::zeros(t, t);
    auto m = a.mutable_data();
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t i = 1; i < k && i <= r; ++i) m[r * t + (r - i)] = 1.0;
    return a;
}

enum class SequenceArm { Tcn, Recurrent };

/// The graph model with its three encoders and fusion stage replaced by a sequence model of
/// matched width; the regression head is identical.
class SequenceBaseline {
public:
    SequenceBaseline(SequenceArm arm, const ModelConfig& cfg, std::size_t kernel, std::uint64_t seed)
        : arm_(arm), cfg_(cfg), kernel_(kernel) {
        if (kernel_ == 0) throw ConfigError("bench: tcn kernel must be >= 1");
        for (std::size_t m = 0; m < 3; ++m) stacks_[m] = make_stack(cfg.input_dims[m]);
        stacks_[3] = make_stack(cfg.hidden);
        head_w1_ = Tensor::zeros(4 * cfg.hidden, cfg.head_hidden);
        head_b1_ = Tensor::zeros(1, cfg.head_hidden);
        head_w2_ = Tensor::zeros(cfg.head_hidden, 1);
        head_b2_ = Tensor::zeros(1, 1);
        std::mt19937_64 rng(seed);
        for (auto& [name, t] : parameters()) {
            t.set_requires_grad(true);
            const std::size_t fan_in = t.rank() == 3 ? t.dim(0) * t.dim(1) : std::max<std::size_t>(1, t.rows());
            std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(static_cast<double>(fan_in)),
                                                        1.0 / std::sqrt(static_cast<double>(fan_in)));
            for (double& v : t.mutable_data()) v = dist(rng);
        }
    }

    std::string name() const { return arm_ == SequenceArm::Tcn ? "tcn" : "recurrent"; }

    NamedParams parameters() const {
        NamedParams out;
        const char* names[4] = {"language", "acoustic", "visual", "fused"};
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t k = 0; k < stacks_[s].size(); ++k)
                out.emplace_back(std::string(names[s]) + ".seq" + std::to_string(k), stacks_[s][k]);
        out.emplace_back("head.w1", head_w1_);
        out.emplace_back("head.b1", head_b1_);
        out.emplace_back("head.w2", head_w2_);
        out.emplace_back("head.b2", head_b2_);
        return out;
    }

    Tensor forward(const std::array<Tensor, 3>& inputs) const {
        std::vector<Tensor> encoded;
        std::vector<Tensor> pieces;
        for (std::size_t m = 0; m < 3; ++m) {
            encoded.push_back(run_stack(inputs[m], stacks_[m]));
            pieces.push_back(row_mean(encoded.back()));
        }
        const Tensor fused = run_stack(concat_rows(encoded), stacks_[3]);
        pieces.insert(pieces.begin(), row_mean(fused));
        const Tensor h = relu(add_bias(matmul(concat_cols(pieces), head_w1_), head_b1_));
        return add_bias(matmul(h, head_w2_), head_b2_);
    }

    Tensor forward_batch(std::span<const Utterance* const> batch) const {
        std::vector<Tensor> scores;
        for (const Utterance* u : batch) scores.push_back(forward(u->modalities));
        return concat_rows(scores);
    }

private:
    std::vector<Tensor> make_stack(std::size_t in) const {
        std::vector<Tensor> layers;
        if (arm_ == SequenceArm::Tcn) {
            for (std::size_t k = 0; k < cfg_.iterations; ++k) {
                const std::size_t d_in = k == 0 ? in : cfg_.hidden;
                layers.push_back(Tensor({kernel_, d_in, cfg_.hidden}, std::vector<double>(kernel_ * d_in * cfg_.hidden)));
            }
        } else {
            layers.push_back(Tensor::zeros(in, cfg_.hidden));
            layers.push_back(Tensor::zeros(cfg_.hidden, cfg_.hidden));
        }
        return layers;
    }

    Tensor run_stack(const Tensor& x, const std::vector<Tensor>& layers) const {
        if (arm_ == SequenceArm::Recurrent) return recurrent_reference(x, layers[0], layers[1]);
        Tensor h = x;
        for (const auto& f : layers) h = relu(tcn_layer(h, f));
        return h;
    }

    SequenceArm arm_;
    ModelConfig cfg_;
    std::size_t kernel_;
    std::array<std::vector<Tensor>, 4> stacks_;
    Tensor head_w1_, head_b1_, head_w2_, head_b2_;
};

struct BenchConfig {
    ModelConfig model = [] {
        ModelConfig m;
        m.lengths = {50, 500, 500};
        return m;
    }();
    std::size_t batch_size = 4;
    std::size_t warmup = 5;
    std::size_t timed = 30;
    std::size_t tcn_kernel = 3;
    std::uint64_t seed = 7;
};

struct BenchResult {
    std::string model;
    double median_ms = 0.0;
    std::size_t params = 0;
    double metric = 0.0;  // training-batch MAE on the last timed step
    std::vector<double> samples_ms;
};

namespace detail {

template <class Net>
BenchResult time_arm(const std::string& name, const Net& net, const NamedParams& params,
                     const std::vector<const Utterance*>& batch, const Tensor& labels, const BenchConfig& cfg) {
    BenchResult r;
    r.model = name;
    r.params = count_params(params);
    AdamState state;
    AdamConfig adam;
    auto step = [&] {
        for (auto& [n, t] : params) {
            Tensor h = t;
            h.zero_grad();
        }
        Tape tape;
        Tensor objective;
        {
            TapeScope scope(tape);
            objective = mae(net.forward_batch(batch), labels);
        }
        tape.backward(objective);
        adam_step(params, state, adam);
        return objective.item();
    };
    for (std::size_t i = 0; i < cfg.warmup; ++i) step();
    for (std::size_t i = 0; i < cfg.timed; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        r.metric = step();
        const auto t1 = std::chrono::steady_clock::now();
        r.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::vector<double> sorted = r.samples_ms;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    r.median_ms = n == 0 ? 0.0 : (n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]));
    return r;
}

}  // namespace detail

/// Times a full training step (forward, backward, Adam) per batch for the graph model and the
/// two sequence baselines on identical synthetic batches.
inline std::vector<BenchResult> run_bench(const BenchConfig& cfg) {
    if (cfg.timed == 0) throw ConfigError("bench: need at least one timed batch");
    SynthSpec spec;
    spec.lengths = cfg.model.lengths;
    spec.dims = cfg.model.input_dims;
    spec.seed = cfg.seed;
    spec.count = cfg.batch_size;
    const Dataset data = synth_generate(spec);
    std::vector<const Utterance*> batch;
    for (const auto& u : data.items) batch.push_back(&u);
    const Tensor labels({batch.size(), 1}, labels_of(data));

    std::vector<BenchResult> out;
    const Model graph(cfg.model, cfg.seed);
    out.push_back(detail::time_arm(std::string("graph-") + to_string(cfg.model.adjacency), graph, graph.parameters(),
                                   batch, labels, cfg));
    for (auto arm : {SequenceArm::Tcn, SequenceArm::Recurrent}) {
        const SequenceBaseline net(arm, cfg.model, cfg.tcn_kernel, cfg.seed);
        out.push_back(detail::time_arm(net.name(), net, net.parameters(), batch, labels, cfg));
    }
    return out;
}

inline void write_bench_csv(std::ostream& os, const std::vector<BenchResult>& results) {
    os << "model,median_ms,params,batch_mae,threads\n";
    for (const auto& r : results)
        os << r.model << ',' << format_double(r.median_ms) << ',' << r.params << ',' << format_double(r.metric) << ','
           << thread_count() << '\n';
}

inline void write_bench_table(std::ostream& os, const std::vector<BenchResult>& results) {
    os << "threads: " << thread_count() << '\n';
    os << "model             median ms      params   batch MAE\n";
    for (const auto& r : results) {
        char line[160];
        std::snprintf(line, sizeof line, "%-16s %10.2f %11zu %11.4f\n", r.model.c_str(), r.median_ms, r.params,
                      r.metric);
        os << line;
    }
}

}  // namespace mmgraph
