// mmgraph command-line tool: synth | train | eval | bench | export-adj

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "mmgraph/config.hpp"

using namespace mmgraph;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

RunConfig resolve(const Common& c) {
    RunConfig cfg = c.config_path.empty() ? parse_config_string("") : load_config(c.config_path);
    if (c.seed) cfg.set_seed(*c.seed);
    if (c.out) cfg.out = *c.out;
    cfg.validate();
    return cfg;
}

Dataset load_data(const RunConfig& cfg, const std::string& override_dir = {}) {
    const std::string dir = override_dir.empty() ? cfg.data.dir : override_dir;
    if (dir.empty()) return synth_generate(cfg.data.synth);
    Dataset ds = load_dataset(dir, cfg.model.lengths, cfg.model.input_dims);
    std::size_t adjusted = 0;
    for (const auto& u : ds.items) adjusted += u.adjusted;
    if (adjusted) std::cerr << "note: " << adjusted << " utterances padded or truncated to configured lengths\n";
    return ds;
}

std::pair<Dataset, Dataset> train_val(const RunConfig& cfg, const Dataset& ds) {
    if (cfg.data.train_count > ds.size())
        throw ConfigError("data.train_count " + std::to_string(cfg.data.train_count) + " exceeds dataset size " +
                          std::to_string(ds.size()));
    return split_dataset(ds, cfg.data.train_count);
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    return f;
}

void cmd_synth(const RunConfig& cfg) {
    const Dataset ds = synth_generate(cfg.data.synth);
    save_dataset(ds, cfg.out);
    std::cout << "wrote " << ds.size() << " utterances to " << cfg.out << "\n";
}

void cmd_train(const RunConfig& cfg) {
    const Dataset ds = load_data(cfg);
    const auto [train, val] = train_val(cfg, ds);
    Model model(cfg.model, cfg.train.seed);
    const fs::path out = cfg.out;
    auto log = open_out(out / "train_log.csv");
    log << metrics_csv_header() << "\n";
    const FitResult r = fit(model, train, val, cfg.train, [&](const EpochLog& e) {
        log << metrics_csv_line(e.epoch, "train", e.train) << "\n";
        if (!val.items.empty()) log << metrics_csv_line(e.epoch, "val", e.val) << "\n";
        log.flush();
        std::cerr << "epoch " << e.epoch << " train_mae " << e.train.mae << " val_mae " << e.val.mae << "\n";
    });
    save_checkpoint(model, out / "model.ckpt");
    open_out(out / "config.ini") << describe_config(cfg);
    std::cout << "best_epoch," << r.best_epoch << "\nbest_val_mae," << format_double(r.best_val_mae) << "\n";
}

void cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& data_dir) {
    Model model(cfg.model, cfg.train.seed);
    load_checkpoint(model, checkpoint.empty() ? fs::path(cfg.out) / "model.ckpt" : fs::path(checkpoint));
    const Dataset ds = load_data(cfg, data_dir);
    // An explicit dataset is evaluated whole; the configured one on its validation split.
    const Dataset split = data_dir.empty() ? train_val(cfg, ds).second : ds;
    if (split.items.empty()) throw ConfigError("eval: no utterances to evaluate");
    std::cout << metrics_csv_header() << "\n" << metrics_csv_line(0, "eval", evaluate(model, split)) << "\n";
}

void cmd_bench(const RunConfig& cfg) {
    const auto results = run_bench(cfg.bench);
    write_bench_table(std::cout, results);
    auto csv = open_out(fs::path(cfg.out) / "bench.csv");
    write_bench_csv(csv, results);
}

void cmd_export_adj(const RunConfig& cfg, const std::string& which, const std::string& checkpoint,
                    const std::string& data_dir) {
    static const std::map<std::string, std::size_t> slots{{"language", 0}, {"acoustic", 1}, {"visual", 2}, {"fused", 3}};
    const auto slot = slots.find(which);
    if (slot == slots.end()) throw ConfigError("export-adj: unknown graph '" + which + "'");
    Model model(cfg.model, cfg.train.seed);
    const fs::path ckpt = checkpoint.empty() ? fs::path(cfg.out) / "model.ckpt" : fs::path(checkpoint);
    if (!checkpoint.empty() || fs::exists(ckpt)) load_checkpoint(model, ckpt);
    const Dataset ds = load_data(cfg, data_dir);
    const Dataset split = data_dir.empty() ? train_val(cfg, ds).second : ds;
    if (split.items.empty()) throw ConfigError("export-adj: no utterances to average");
    std::vector<double> sum;
    std::size_t n = 0, t = 0;
    for (const auto& u : split.items) {
        ForwardTrace trace;
        model.forward(u.modalities, &trace);
        const Tensor& adj = trace.adjacency[slot->second];
        const auto a = adj.data();
        t = adj.rows();
        if (sum.empty()) {
            sum.assign(a.begin(), a.end());
        } else {
            for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += a[i];
        }
        ++n;
    }
    for (double& v : sum) v /= static_cast<double>(n);
    const fs::path stem = fs::path(cfg.out) / ("adjacency_" + which);
    if (stem.has_parent_path()) fs::create_directories(stem.parent_path());
    export_adjacency(Tensor({t, t}, std::move(sum)), stem);
    std::cout << "wrote " << stem.string() << ".csv and .pgm (" << t << "x" << t << ", mean of " << n << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-based multimodal sequence fusion: synthetic data, training, evaluation, benchmarks"};
    app.require_subcommand(1);
    app.footer("Config keys and defaults (INI sections; --seed overrides every seed):\n\n" +
               describe_config(parse_config_string("")) + "\nMMGRAPH_THREADS caps worker threads.");

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "INI-style config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", common.seed, "Seed for data, initialization and shuffling");
        sub->add_option("--out", common.out, "Output directory");
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset directory");
    add_common(synth);
    auto* train = app.add_subcommand("train", "Train; writes model.ckpt, train_log.csv and config.ini");
    add_common(train);
    std::string checkpoint, data_dir, which;
    auto* eval = app.add_subcommand("eval", "Print metrics as a CSV line");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/model.ckpt)");
    eval->add_option("--data", data_dir, "Dataset directory (default: configured data, validation split)");
    auto* bench = app.add_subcommand("bench", "Time graph, TCN and recurrent training steps; writes bench.csv");
    add_common(bench);
    auto* exp = app.add_subcommand("export-adj", "Write the mean adjacency matrix as CSV and PGM");
    add_common(exp);
    exp->add_option("which", which, "language | acoustic | visual | fused")->required();
    exp->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/model.ckpt if present)");
    exp->add_option("--data", data_dir, "Dataset directory (default: configured data, validation split)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const RunConfig cfg = resolve(common);
        if (*synth) cmd_synth(cfg);
        if (*train) cmd_train(cfg);
        if (*eval) cmd_eval(cfg, checkpoint, data_dir);
        if (*bench) cmd_bench(cfg);
        if (*exp) cmd_export_adj(cfg, which, checkpoint, data_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
