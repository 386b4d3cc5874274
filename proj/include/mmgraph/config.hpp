#pragma once

// Run configuration read from a sectioned key=value file:
//
//   [model]
//   adjacency = gdm
//   hidden = 32
//
// Blank lines and lines starting with '#' or ';' are ignored. Unknown sections and keys are errors.

#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "mmgraph/bench.hpp"

namespace mmgraph {

struct DataConfig {
    std::string dir;  // empty = synthetic
    SynthSpec synth;
    std::size_t train_count = 800;  // leading items used for training, the rest for validation
};

struct RunConfig {
    DataConfig data;
    ModelConfig model;
    TrainConfig train;
    BenchConfig bench;
    std::string out = "out";

    /// Seeds data generation, parameter initialization and shuffling.
    void set_seed(std::uint64_t seed) {
        data.synth.seed = seed;
        train.seed = seed;
        bench.seed = seed;
    }

    void validate() const {
        if (data.dir.empty()) data.synth.validate();
        if (data.dir.empty() && data.train_count > data.synth.count)
            throw ConfigError("data.train_count exceeds data.count");
        model.validate();
        train.validate();
        bench.model.validate();
        if (bench.timed == 0) throw ConfigError("bench.timed must be >= 1");
        if (bench.batch_size == 0) throw ConfigError("bench.batch_size must be >= 1");
    }
};

namespace detail {

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const auto v = trim(value);
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError(key + ": not a valid number: '" + value + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    const auto v = lower(std::string(trim(value)));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

template <class T, std::size_t N>
std::array<T, N> parse_list(const std::string& key, const std::string& value) {
    const auto cells = split_commas(value);
    if (cells.size() != N)
        throw ConfigError(key + ": expected " + std::to_string(N) + " comma-separated values, got '" + value + "'");
    std::array<T, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = parse_number<T>(key, std::string(cells[i]));
    return out;
}

inline Reduce parse_reduce(const std::string& key, const std::string& value) {
    const auto v = lower(std::string(trim(value)));
    if (v == "mean") return Reduce::Mean;
    if (v == "max") return Reduce::Max;
    throw ConfigError(key + ": expected mean or max, got '" + value + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& config_keys() {
    using R = RunConfig;
    using S = std::string;
    static const std::map<std::string, Setter> keys = {
        {"data.dir", [](R& c, const S&, const S& v) { c.data.dir = std::string(trim(v)); }},
        {"data.count", [](R& c, const S& k, const S& v) { c.data.synth.count = parse_number<std::size_t>(k, v); }},
        {"data.train_count", [](R& c, const S& k, const S& v) { c.data.train_count = parse_number<std::size_t>(k, v); }},
        {"data.lengths", [](R& c, const S& k, const S& v) { c.data.synth.lengths = parse_list<std::size_t, 3>(k, v); }},
        {"data.dims", [](R& c, const S& k, const S& v) { c.data.synth.dims = parse_list<std::size_t, 3>(k, v); }},
        {"data.signal_channels",
         [](R& c, const S& k, const S& v) { c.data.synth.signal_channels = parse_list<std::size_t, 3>(k, v); }},
        {"data.weights", [](R& c, const S& k, const S& v) { c.data.synth.weights = parse_list<double, 3>(k, v); }},
        {"data.noise", [](R& c, const S& k, const S& v) { c.data.synth.noise = parse_number<double>(k, v); }},
        {"data.seed", [](R& c, const S& k, const S& v) { c.data.synth.seed = parse_number<std::uint64_t>(k, v); }},

        {"model.lengths", [](R& c, const S& k, const S& v) { c.model.lengths = parse_list<std::size_t, 3>(k, v); }},
        {"model.input_dims",
         [](R& c, const S& k, const S& v) { c.model.input_dims = parse_list<std::size_t, 3>(k, v); }},
        {"model.hidden", [](R& c, const S& k, const S& v) { c.model.hidden = parse_number<std::size_t>(k, v); }},
        {"model.iterations", [](R& c, const S& k, const S& v) { c.model.iterations = parse_number<std::size_t>(k, v); }},
        {"model.adjacency",
         [](R& c, const S&, const S& v) { c.model.adjacency = parse_adjacency_kind(std::string(trim(v))); }},
        {"model.gdm_lambda", [](R& c, const S& k, const S& v) { c.model.gdm.lambda = parse_number<double>(k, v); }},
        {"model.gdm_n", [](R& c, const S& k, const S& v) { c.model.gdm.n = parse_number<std::size_t>(k, v); }},
        {"model.knn_alpha", [](R& c, const S& k, const S& v) { c.model.knn.alpha = parse_number<double>(k, v); }},
        {"model.knn_eps", [](R& c, const S& k, const S& v) { c.model.knn.eps = parse_number<double>(k, v); }},
        {"model.indirect_eps", [](R& c, const S& k, const S& v) { c.model.indirect_eps = parse_number<double>(k, v); }},
        {"model.gamma", [](R& c, const S& k, const S& v) { c.model.gamma = parse_number<double>(k, v); }},
        {"model.window_pool", [](R& c, const S& k, const S& v) { c.model.gpfn.window_pool = parse_bool(k, v); }},
        {"model.pool_mode", [](R& c, const S& k, const S& v) { c.model.gpfn.pool_mode = parse_reduce(k, v); }},
        {"model.pool_size",
         [](R& c, const S& k, const S& v) { c.model.gpfn.pool_size = parse_number<std::size_t>(k, v); }},
        {"model.link_pool", [](R& c, const S& k, const S& v) { c.model.gpfn.link_pool = parse_bool(k, v); }},
        {"model.pooled_nodes",
         [](R& c, const S& k, const S& v) { c.model.pooled_nodes = parse_number<std::size_t>(k, v); }},
        {"model.link_width", [](R& c, const S& k, const S& v) { c.model.link_width = parse_number<std::size_t>(k, v); }},
        {"model.head_hidden",
         [](R& c, const S& k, const S& v) { c.model.head_hidden = parse_number<std::size_t>(k, v); }},

        {"train.lr", [](R& c, const S& k, const S& v) { c.train.adam.lr = parse_number<double>(k, v); }},
        {"train.beta1", [](R& c, const S& k, const S& v) { c.train.adam.beta1 = parse_number<double>(k, v); }},
        {"train.beta2", [](R& c, const S& k, const S& v) { c.train.adam.beta2 = parse_number<double>(k, v); }},
        {"train.eps", [](R& c, const S& k, const S& v) { c.train.adam.eps = parse_number<double>(k, v); }},
        {"train.batch_size",
         [](R& c, const S& k, const S& v) { c.train.batch_size = parse_number<std::size_t>(k, v); }},
        {"train.epochs", [](R& c, const S& k, const S& v) { c.train.epochs = parse_number<std::size_t>(k, v); }},
        {"train.seed", [](R& c, const S& k, const S& v) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
        {"train.reg_weight", [](R& c, const S& k, const S& v) { c.train.reg_weight = parse_number<double>(k, v); }},

        {"bench.lengths",
         [](R& c, const S& k, const S& v) { c.bench.model.lengths = parse_list<std::size_t, 3>(k, v); }},
        {"bench.batch_size",
         [](R& c, const S& k, const S& v) { c.bench.batch_size = parse_number<std::size_t>(k, v); }},
        {"bench.warmup", [](R& c, const S& k, const S& v) { c.bench.warmup = parse_number<std::size_t>(k, v); }},
        {"bench.timed", [](R& c, const S& k, const S& v) { c.bench.timed = parse_number<std::size_t>(k, v); }},
        {"bench.tcn_kernel",
         [](R& c, const S& k, const S& v) { c.bench.tcn_kernel = parse_number<std::size_t>(k, v); }},
        {"bench.adjacency",
         [](R& c, const S&, const S& v) { c.bench.model.adjacency = parse_adjacency_kind(std::string(trim(v))); }},

        {"output.dir", [](R& c, const S&, const S& v) { c.out = std::string(trim(v)); }},
    };
    return keys;
}

}  // namespace detail

/// Names of every accepted key, as section.key.
inline std::vector<std::string> config_key_names() {
    std::vector<std::string> out;
    for (const auto& [k, _] : detail::config_keys()) out.push_back(k);
    return out;
}

/// Applies one section.key=value pair. Throws ConfigError naming the key on any problem.
inline void apply_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto& keys = detail::config_keys();
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
        it->second(cfg, key, value);
    } catch (const ConfigError& e) {
        if (std::string(e.what()).find(key) != std::string::npos) throw;
        throw ConfigError(key + ": " + e.what());
    } catch (const Error& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

/// Parses config text on top of `base`. Model lengths and input widths default to the data
/// section's values unless the model section sets them.
inline RunConfig parse_config(std::istream& in, const std::string& source = "<config>", RunConfig base = {}) {
    RunConfig cfg = std::move(base);
    std::string section;
    std::string line;
    std::size_t lineno = 0;
    bool model_lengths = false, model_dims = false;
    while (std::getline(in, line)) {
        ++lineno;
        const auto where = source + ":" + std::to_string(lineno) + ": ";
        const std::string text(detail::trim(line));
        if (text.empty() || text[0] == '#' || text[0] == ';') continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw ConfigError(where + "malformed section header '" + text + "'");
            section = detail::lower(std::string(detail::trim(std::string_view(text).substr(1, text.size() - 2))));
            if (section != "data" && section != "model" && section != "train" && section != "bench" &&
                section != "output")
                throw ConfigError(where + "unknown config section '" + section + "'");
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value, got '" + text + "'");
        if (section.empty()) throw ConfigError(where + "key outside of any section");
        const std::string key = section + "." + std::string(detail::trim(std::string_view(text).substr(0, eq)));
        const std::string value(detail::trim(std::string_view(text).substr(eq + 1)));
        try {
            apply_config_value(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
        model_lengths |= key == "model.lengths";
        model_dims |= key == "model.input_dims";
    }
    if (!model_lengths) cfg.model.lengths = cfg.data.synth.lengths;
    if (!model_dims) cfg.model.input_dims = cfg.data.synth.dims;
    // The benchmark keeps its own lengths but shares every other model choice.
    const Triple bench_lengths = cfg.bench.model.lengths;
    const AdjacencyKind bench_kind = cfg.bench.model.adjacency;
    cfg.bench.model = cfg.model;
    cfg.bench.model.lengths = bench_lengths;
    cfg.bench.model.adjacency = bench_kind;
    return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse_config(in, path.string());
}

/// Writes every key with its current value, in the same format parse_config reads.
inline std::string describe_config(const RunConfig& c) {
    auto triple = [](const auto& t) {
        std::string s;
        for (std::size_t i = 0; i < 3; ++i) s += (i ? "," : "") + format_double(static_cast<double>(t[i]));
        return s;
    };
    std::ostringstream os;
    os << "[data]\n"
       << "dir = " << c.data.dir << "\n"
       << "count = " << c.data.synth.count << "\n"
       << "train_count = " << c.data.train_count << "\n"
       << "lengths = " << triple(c.data.synth.lengths) << "\n"
       << "dims = " << triple(c.data.synth.dims) << "\n"
       << "signal_channels = " << triple(c.data.synth.signal_channels) << "\n"
       << "weights = " << triple(c.data.synth.weights) << "\n"
       << "noise = " << format_double(c.data.synth.noise) << "\n"
       << "seed = " << c.data.synth.seed << "\n\n"
       << "[model]\n"
       << "lengths = " << triple(c.model.lengths) << "\n"
       << "input_dims = " << triple(c.model.input_dims) << "\n"
       << "hidden = " << c.model.hidden << "\n"
       << "iterations = " << c.model.iterations << "\n"
       << "adjacency = " << to_string(c.model.adjacency) << "\n"
       << "gdm_lambda = " << format_double(c.model.gdm.lambda) << "\n"
       << "gdm_n = " << c.model.gdm.n << "\n"
       << "knn_alpha = " << format_double(c.model.knn.alpha) << "\n"
       << "knn_eps = " << format_double(c.model.knn.eps) << "\n"
       << "indirect_eps = " << format_double(c.model.indirect_eps) << "\n"
       << "gamma = " << format_double(c.model.gamma) << "\n"
       << "window_pool = " << (c.model.gpfn.window_pool ? "true" : "false") << "\n"
       << "pool_mode = " << (c.model.gpfn.pool_mode == Reduce::Mean ? "mean" : "max") << "\n"
       << "pool_size = " << c.model.gpfn.pool_size << "\n"
       << "link_pool = " << (c.model.gpfn.link_pool ? "true" : "false") << "\n"
       << "# 0 = ceil(T/4) of the nodes entering link pooling\n"
       << "pooled_nodes = " << c.model.pooled_nodes << "\n"
       << "# 0 = hidden\n"
       << "link_width = " << c.model.link_width << "\n"
       << "head_hidden = " << c.model.head_hidden << "\n\n"
       << "[train]\n"
       << "lr = " << format_double(c.train.adam.lr) << "\n"
       << "beta1 = " << format_double(c.train.adam.beta1) << "\n"
       << "beta2 = " << format_double(c.train.adam.beta2) << "\n"
       << "eps = " << format_double(c.train.adam.eps) << "\n"
       << "batch_size = " << c.train.batch_size << "\n"
       << "epochs = " << c.train.epochs << "\n"
       << "seed = " << c.train.seed << "\n"
       << "reg_weight = " << format_double(c.train.reg_weight) << "\n\n"
       << "[bench]\n"
       << "lengths = " << triple(c.bench.model.lengths) << "\n"
       << "adjacency = " << to_string(c.bench.model.adjacency) << "\n"
       << "batch_size = " << c.bench.batch_size << "\n"
       << "warmup = " << c.bench.warmup << "\n"
       << "timed = " << c.bench.timed << "\n"
       << "tcn_kernel = " << c.bench.tcn_kernel << "\n\n"
       << "[output]\n"
       << "dir = " << c.out << "\n";
    return os.str();
}

}  // namespace mmgraph
