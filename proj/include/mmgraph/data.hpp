#pragma once

// Multimodal utterances: a synthetic generator with planted per-modality signals, and a CSV
// directory format for externally extracted features.
//
// Directory layout:
//   meta.csv                 utterance_id,T_l,T_a,T_v,label
//   <id>.language.csv        one time step per row, comma-separated floats
//   <id>.acoustic.csv
//   <id>.visual.csv

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mmgraph/adjacency.hpp"

namespace mmgraph {

inline constexpr std::array<const char*, 3> kModalityNames{"language", "acoustic", "visual"};

using Triple = std::array<std::size_t, 3>;

/// Where the generator planted each modality's signal.
struct SignalTrace {
    std::array<double, 3> value{};
    std::array<Window, 3> span{};
};

struct Utterance {
    std::string id;
    std::array<Tensor, 3> modalities;  // language, acoustic, visual
    double label = 0.0;
    Triple source_lengths{};  // lengths before padding/truncation
    bool adjusted = false;    // padded or truncated on load
    std::optional<SignalTrace> trace;

    const Tensor& language() const { return modalities[0]; }
    const Tensor& acoustic() const { return modalities[1]; }
    const Tensor& visual() const { return modalities[2]; }
};

struct Dataset {
    Triple lengths{};
    Triple dims{};
    std::vector<Utterance> items;

    std::size_t size() const { return items.size(); }
};

struct SynthSpec {
    Triple lengths{10, 40, 40};
    Triple dims{8, 8, 8};
    Triple signal_channels{0, 0, 0};
    std::array<double, 3> weights{0.5, 0.3, 0.2};
    double noise = 0.05;
    std::uint64_t seed = 7;
    std::size_t count = 1000;

    /// Mirrors the 50/500/500 sequence lengths used for real features.
    static SynthSpec full_length() {
        SynthSpec s;
        s.lengths = {50, 500, 500};
        return s;
    }

    void validate() const {
        double wsum = 0.0;
        for (std::size_t m = 0; m < 3; ++m) {
            if (lengths[m] == 0) throw ConfigError("synth: lengths must be >= 1");
            if (dims[m] == 0) throw ConfigError("synth: dims must be >= 1");
            if (signal_channels[m] >= dims[m])
                throw ConfigError(std::string("synth: signal channel ") + std::to_string(signal_channels[m]) +
                                  " out of range for " + kModalityNames[m] + " width " + std::to_string(dims[m]));
            wsum += weights[m];
        }
        if (std::abs(wsum - 1.0) > 1e-9) throw ConfigError("synth: modality weights must sum to 1");
        if (!(noise >= 0.0)) throw ConfigError("synth: noise must be >= 0");
    }
};

/// Background N(0,1); each modality gets u ~ U(-3,3) written into its signal channel over a
/// random contiguous span covering at least a quarter of the sequence.
/// label = clip(Σ w_m u_m, -3, 3) + N(0, noise).
inline Dataset synth_generate(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> signal(-3.0, 3.0);
    Dataset ds{spec.lengths, spec.dims, {}};
    ds.items.reserve(spec.count);
    for (std::size_t n = 0; n < spec.count; ++n) {
        Utterance u;
        u.id = "u" + std::to_string(n);
        u.source_lengths = spec.lengths;
        SignalTrace trace;
        double mix = 0.0;
        for (std::size_t m = 0; m < 3; ++m) {
            const std::size_t t = spec.lengths[m], d = spec.dims[m];
            std::vector<double> x(t * d);
            for (double& v : x) v = gauss(rng);
            const double value = signal(rng);
            const std::size_t min_len = (t + 3) / 4;
            const std::size_t len = std::uniform_int_distribution<std::size_t>(min_len, t)(rng);
            const std::size_t start = std::uniform_int_distribution<std::size_t>(0, t - len)(rng);
            for (std::size_t i = start; i < start + len; ++i) x[i * d + spec.signal_channels[m]] = value;
            u.modalities[m] = Tensor({t, d}, std::move(x));
            trace.value[m] = value;
            trace.span[m] = {start, start + len};
            mix += spec.weights[m] * value;
        }
        u.label = std::clamp(mix, -3.0, 3.0) + (spec.noise > 0.0 ? spec.noise * gauss(rng) : 0.0);
        u.trace = trace;
        ds.items.push_back(std::move(u));
    }
    return ds;
}

/// First `head` items and the rest.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, std::size_t head) {
    if (head > ds.size()) throw ConfigError("split: not enough items");
    Dataset a{ds.lengths, ds.dims, {}}, b{ds.lengths, ds.dims, {}};
    a.items.assign(ds.items.begin(), ds.items.begin() + static_cast<std::ptrdiff_t>(head));
    b.items.assign(ds.items.begin() + static_cast<std::ptrdiff_t>(head), ds.items.end());
    return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------------------------
// CSV directory format

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <class T>
T parse_cell(std::string_view cell, const std::filesystem::path& file, std::size_t line) {
    cell = trim(cell);
    T value{};
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw FormatError(file.string() + ":" + std::to_string(line) + ": not a number: '" + std::string(cell) + "'");
    return value;
}

/// Reads a rectangular numeric CSV; returns (rows, cols, values).
inline std::tuple<std::size_t, std::size_t, std::vector<double>> read_numeric_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw FormatError("missing file: " + file.string());
    std::vector<double> values;
    std::size_t rows = 0, cols = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split_commas(line);
        if (rows == 0) cols = cells.size();
        if (cells.size() != cols)
            throw FormatError(file.string() + ":" + std::to_string(lineno) + ": ragged row (" +
                              std::to_string(cells.size()) + " cells, expected " + std::to_string(cols) + ")");
        for (auto c : cells) values.push_back(parse_cell<double>(c, file, lineno));
        ++rows;
    }
    return {rows, cols, std::move(values)};
}

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream meta(dir / "meta.csv", std::ios::binary);
    if (!meta) throw Error("cannot write " + (dir / "meta.csv").string());
    meta << "utterance_id,T_l,T_a,T_v,label\n";
    for (const auto& u : ds.items) {
        meta << u.id;
        for (const auto& t : u.modalities) meta << ',' << t.rows();
        meta << ',' << format_double(u.label) << '\n';
        for (std::size_t m = 0; m < 3; ++m)
            write_matrix_csv(u.modalities[m], dir / (u.id + "." + kModalityNames[m] + ".csv"));
    }
    if (!meta) throw Error("write failed: " + (dir / "meta.csv").string());
}

/// Loads a dataset directory, zero-padding or truncating every modality to `lengths`.
/// `dims`, when given, pins the feature widths; otherwise the first utterance defines them.
inline Dataset load_dataset(const std::filesystem::path& dir, const Triple& lengths,
                            std::optional<Triple> dims = std::nullopt) {
    const auto meta_path = dir / "meta.csv";
    std::ifstream meta(meta_path);
    if (!meta) throw FormatError("missing file: " + meta_path.string());
    Dataset ds{lengths, dims.value_or(Triple{}), {}};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(meta, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_commas(line);
        if (lineno == 1 && detail::trim(cells[0]) == "utterance_id") continue;
        if (cells.size() != 5)
            throw FormatError(meta_path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
        Utterance u;
        u.id = std::string(detail::trim(cells[0]));
        if (u.id.empty()) throw FormatError(meta_path.string() + ":" + std::to_string(lineno) + ": empty id");
        for (std::size_t m = 0; m < 3; ++m)
            u.source_lengths[m] = detail::parse_cell<std::size_t>(cells[1 + m], meta_path, lineno);
        u.label = detail::parse_cell<double>(cells[4], meta_path, lineno);
        if (!std::isfinite(u.label))
            throw FormatError(meta_path.string() + ":" + std::to_string(lineno) + ": non-finite label");
        for (std::size_t m = 0; m < 3; ++m) {
            const auto file = dir / (u.id + "." + kModalityNames[m] + ".csv");
            auto [rows, cols, values] = detail::read_numeric_csv(file);
            if (rows != u.source_lengths[m])
                throw FormatError("utterance " + u.id + ": " + kModalityNames[m] + " has " + std::to_string(rows) +
                                  " rows but meta.csv says " + std::to_string(u.source_lengths[m]));
            if (rows > 0) {
                if (ds.dims[m] == 0) ds.dims[m] = cols;
                if (cols != ds.dims[m])
                    throw FormatError("utterance " + u.id + ": " + kModalityNames[m] + " width " + std::to_string(cols) +
                                      " but dataset width is " + std::to_string(ds.dims[m]));
            }
            const std::size_t d = ds.dims[m];
            const std::size_t t = lengths[m];
            std::vector<double> x(t * d, 0.0);
            const std::size_t keep = std::min(rows, t);
            if (d > 0) std::copy(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(keep * d), x.begin());
            if (rows != t) u.adjusted = true;
            u.modalities[m] = Tensor({t, d}, std::move(x));
        }
        ds.items.push_back(std::move(u));
    }
    for (std::size_t m = 0; m < 3; ++m) {
        if (ds.dims[m] == 0 && !ds.items.empty())
            throw FormatError(std::string("dataset: could not determine ") + kModalityNames[m] + " width");
        // Empty sequences read before the width was known.
        for (auto& u : ds.items)
            if (u.modalities[m].cols() != ds.dims[m]) u.modalities[m] = Tensor::zeros(lengths[m], ds.dims[m]);
    }
    return ds;
}

}  // namespace mmgraph
