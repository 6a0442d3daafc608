#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evroute/bench/bench.hpp"
#include "evroute/core/dataset.hpp"
#include "evroute/eval/report.hpp"
#include "evroute/models/estimator.hpp"
#include "evroute/models/train.hpp"
#include "evroute/scaling/scaling.hpp"
#include "evroute/simgen/generator.hpp"
#include "evroute/simgen/soc.hpp"

namespace evroute::cli {

inline constexpr const char* kToolVersion = "0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Flag values that parse but make no sense together.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::uint64_t file_hash(const fs::path& p) { return fnv1a64(read_file(p)); }

inline std::ofstream open_output(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
}

/// Manifest next to a run's outputs. `config` mirrors the flag names, so a manifest can be
/// fed back through --config to repeat the run.
inline void write_manifest(const fs::path& path, const std::string& subcommand, ojson config,
                           const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs) {
    ojson m;
    m["tool"] = "evroute";
    m["version"] = kToolVersion;
    m["subcommand"] = subcommand;
    m["config"] = std::move(config);
    m["inputs"] = ojson::array();
    for (const auto& p : inputs) m["inputs"].push_back(p.generic_string());
    m["outputs"] = ojson::array();
    for (const auto& p : outputs) m["outputs"].push_back({{"path", p.generic_string()}, {"fnv1a64", hex64(file_hash(p))}});
    auto out = open_output(path);
    out << m.dump(2) << '\n';
}

inline fs::path manifest_path_for(const fs::path& output) {
    fs::path p = output;
    p.replace_extension(".manifest.json");
    return p;
}

/// Expands `--config file.json` into flags. Keys mirror long flag names; a flag given on the
/// command line wins over the file. A manifest is accepted too (its "config" object is used).
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
    auto it = std::find_if(args.begin(), args.end(),
                           [](const std::string& a) { return a == "--config" || a.rfind("--config=", 0) == 0; });
    if (it == args.end()) return args;
    std::string path;
    if (*it == "--config") {
        if (std::next(it) == args.end()) throw UsageError("--config needs a file path");
        path = *std::next(it);
        args.erase(it, std::next(it, 2));
    } else {
        path = it->substr(9);
        args.erase(it);
    }
    ojson j;
    try {
        j = ojson::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config " + path + " is not valid JSON: " + e.what());
    }
    if (j.contains("subcommand") && j.contains("config")) j = j.at("config");
    if (!j.is_object()) throw UsageError("config " + path + " must hold a JSON object");

    auto given = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(),
                           [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    };
    for (const auto& [key, value] : j.items()) {
        const std::string flag = "--" + key;
        if (given(flag) || value.is_null()) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) args.push_back(flag);
        } else if (value.is_array()) {
            if (value.empty()) continue;
            args.push_back(flag);
            for (const auto& v : value) args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        } else {
            args.push_back(flag);
            args.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    return args;
}

inline std::vector<const Route*> route_ptrs(const Dataset& ds) { return ds.all_routes(); }

struct GenerateArgs {
    std::uint64_t seed = 0;
    std::size_t routes = 1000;
    std::size_t min_length = 20;
    std::size_t max_length = 100;
    unsigned threads = 1;
    std::string out;
};

struct TrainArgs {
    std::string model, data, out;
    std::uint64_t seed = 0;
    double lr = 1e-3;
    std::size_t batch_size = 32, epochs = 100, patience = 10;
    bool no_early_stop = false;
    bool quiet = false;
};

struct EvalArgs {
    std::string data, ckpt_dir, out, level = "route", split = "test";
    std::vector<std::string> models;
    bool no_bps = false;
    std::size_t threads = 1;
};

struct BenchArgs {
    std::vector<std::string> models, kinds;
    std::size_t routes = bench::kDefaultBenchRoutes;
    std::uint64_t seed = 0;
    std::size_t warmups = bench::kDefaultWarmups, repeats = bench::kDefaultRepeats, threads = 1;
    std::size_t chunk = models::kDefaultChunkRoutes;
    std::string out;
};

struct ScaleArgs {
    double segments = 0.0;
    std::size_t input_width = 9;
};

struct FigArgs {
    std::string data, out;
};

inline int cmd_generate(const GenerateArgs& a, std::ostream& out) {
    simgen::GeneratorConfig cfg;
    cfg.seed = a.seed;
    cfg.n_routes = a.routes;
    cfg.min_length = a.min_length;
    cfg.max_length = a.max_length;
    cfg.threads = std::max(1u, a.threads);
    try {
        cfg.validate();
    } catch (const ValidationError& e) {
        throw UsageError(e.what());
    }
    const auto ds = simgen::generate_dataset(cfg);
    const fs::path dir = a.out;
    write_dataset(ds, dir);
    const std::vector<fs::path> outputs{dir / kRoutesFile, dir / kSchemaFile};
    write_manifest(dir / "manifest.json", "generate",
                   {{"seed", a.seed}, {"routes", a.routes}, {"min-length", a.min_length}, {"max-length", a.max_length},
                    {"threads", a.threads}, {"out", a.out}},
                   {}, outputs);
    std::size_t segments = 0;
    for (const auto& r : ds.routes) segments += r.segments.size();
    out << "wrote " << ds.routes.size() << " routes (" << segments << " segments) to " << dir.string() << '\n';
    return kExitOk;
}

inline int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    const auto kind = models::parse_kind(a.model);
    const auto ds = read_dataset(a.data);
    const fs::path dir = a.out;
    fs::create_directories(dir);
    const std::string stem(models::kind_name(kind));
    const fs::path ckpt_path = dir / (stem + ".ckpt");
    std::vector<fs::path> outputs{ckpt_path};

    std::unique_ptr<models::Estimator> model;
    if (kind == models::ModelKind::distance) {
        model = models::fit_distance(ds);
    } else if (kind == models::ModelKind::physics) {
        model = models::make_physics(ds);
    } else {
        model = models::make_network(kind, ds.schema, a.seed);
        models::TrainConfig tc;
        tc.learning_rate = a.lr;
        tc.batch_size = a.batch_size;
        tc.epochs = a.epochs;
        tc.patience = a.patience;
        tc.seed = a.seed;
        tc.early_stopping = !a.no_early_stop;
        try {
            tc.validate();
        } catch (const ValidationError& e) {
            throw UsageError(e.what());
        }
        const auto result = models::train_network(*model, ds, tc, a.quiet ? nullptr : &err);
        const fs::path hist = dir / (stem + ".history.csv");
        {
            auto h = open_output(hist);
            models::write_history_csv(result, h);
        }
        outputs.push_back(hist);
        out << stem << ": best val route MAPE " << result.best_val_mape_pct << "% at epoch " << result.best_epoch
            << " of " << result.history.size() << ", final train loss " << result.final_loss << " kWh\n";
    }
    nn::write_checkpoint(model->to_checkpoint(), ckpt_path);
    write_manifest(dir / (stem + ".manifest.json"), "train",
                   {{"model", a.model}, {"data", a.data}, {"out", a.out}, {"seed", a.seed}, {"lr", a.lr},
                    {"batch-size", a.batch_size}, {"epochs", a.epochs}, {"patience", a.patience},
                    {"no-early-stop", a.no_early_stop}},
                   {fs::path(a.data) / kRoutesFile}, outputs);
    out << "wrote " << ckpt_path.string() << '\n';
    return kExitOk;
}

inline std::vector<fs::path> checkpoint_paths(const std::vector<std::string>& models, const std::string& ckpt_dir) {
    std::vector<fs::path> paths(models.begin(), models.end());
    if (!ckpt_dir.empty()) {
        if (!fs::is_directory(ckpt_dir)) throw IoError(ckpt_dir + " is not a directory");
        std::vector<fs::path> found;
        for (const auto& e : fs::directory_iterator(ckpt_dir))
            if (e.is_regular_file() && e.path().extension() == ".ckpt") found.push_back(e.path());
        std::sort(found.begin(), found.end());
        paths.insert(paths.end(), found.begin(), found.end());
    }
    return paths;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    const auto paths = checkpoint_paths(a.models, a.ckpt_dir);
    if (paths.empty()) throw UsageError("eval needs --models or --ckpt-dir");
    eval::ReportOptions opt;
    opt.level = eval::parse_level(a.level);
    opt.split = parse_split(a.split);
    opt.bps = !a.no_bps;
    opt.threads = std::max<std::size_t>(1, a.threads);

    const auto ds = read_dataset(a.data);
    std::vector<std::unique_ptr<models::Estimator>> owned;
    std::vector<const models::Estimator*> est;
    for (const auto& p : paths) {
        owned.push_back(models::load_estimator(nn::read_checkpoint(p)));
        est.push_back(owned.back().get());
    }
    const auto rep = eval::build_report(est, ds, opt);
    for (const auto& w : rep.warnings) err << "warning: " << w << '\n';

    const fs::path out_path = a.out;
    {
        auto f = open_output(out_path);
        eval::write_report_csv(rep, f);
    }
    eval::write_report_csv(rep, out);
    std::vector<fs::path> inputs{fs::path(a.data) / kRoutesFile};
    inputs.insert(inputs.end(), paths.begin(), paths.end());
    write_manifest(manifest_path_for(out_path), "eval",
                   {{"data", a.data}, {"models", a.models}, {"ckpt-dir", a.ckpt_dir}, {"level", a.level},
                    {"split", a.split}, {"no-bps", a.no_bps}, {"threads", a.threads}, {"out", a.out}},
                   inputs, {out_path});
    return kExitOk;
}

inline int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    if (a.models.empty() && a.kinds.empty()) throw UsageError("bench needs --models or --kinds");
    if (a.routes == 0) throw UsageError("bench needs at least one route");
    simgen::GeneratorConfig cfg;
    cfg.seed = a.seed;
    cfg.n_routes = a.routes;
    const auto ds = simgen::generate_dataset(cfg);
    const auto routes = route_ptrs(ds);

    std::vector<bench::BenchEntry> entries;
    for (const auto& p : a.models)
        entries.push_back({fs::path(p).stem().string(), [p] { return models::load_estimator(nn::read_checkpoint(p)); }});
    for (const auto& k : a.kinds) {
        const auto kind = models::parse_kind(k);
        entries.push_back({k, [kind, &ds, seed = a.seed]() -> std::unique_ptr<models::Estimator> {
                               if (kind == models::ModelKind::distance) return models::fit_distance(ds);
                               if (kind == models::ModelKind::physics) return models::make_physics(ds);
                               return models::make_network(kind, ds.schema, seed);
                           }});
    }
    bench::BenchOptions opt;
    opt.warmups = a.warmups;
    opt.repeats = a.repeats;
    opt.threads = std::max<std::size_t>(1, a.threads);
    opt.chunk_routes = std::max<std::size_t>(1, a.chunk);
    if (opt.repeats == 0) throw UsageError("--repeats must be at least 1");

    const auto rows = bench::bench_grid(entries, routes, opt, &err);
    const fs::path out_path = a.out;
    {
        auto f = open_output(out_path);
        bench::write_bench_csv(rows, f);
    }
    bench::write_bench_csv(rows, out);
    std::vector<fs::path> inputs(a.models.begin(), a.models.end());
    write_manifest(manifest_path_for(out_path), "bench",
                   {{"models", a.models}, {"kinds", a.kinds}, {"routes", a.routes}, {"seed", a.seed},
                    {"warmups", a.warmups}, {"repeats", a.repeats}, {"threads", a.threads}, {"chunk", a.chunk},
                    {"out", a.out}},
                   inputs, {out_path});
    const bool any_failed = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.failed; });
    return any_failed ? kExitRuntime : kExitOk;
}

inline int cmd_scale(const ScaleArgs& a, std::ostream& out, std::ostream& err) {
    if (!(a.segments >= 1.0)) throw UsageError("--segments must be >= 1");
    const double lx = std::log10(a.segments);
    const double ln = scaling::log10_optimal_params(a.segments);
    const double n = scaling::optimal_params_exact(a.segments);
    const auto choice = scaling::preset_for_budget(n, a.input_width);
    char buf[512];
    std::snprintf(buf, sizeof buf, "segments D          = %.0f\n", a.segments);
    out << buf;
    std::snprintf(buf, sizeof buf, "log10(D)            = %.6f\n", lx);
    out << buf;
    std::snprintf(buf, sizeof buf, "log10(N)            = %.2f * %.6f + %.4f = %.6f\n", scaling::kSlope, lx,
                  scaling::kIntercept, ln);
    out << buf;
    std::snprintf(buf, sizeof buf, "N                   = 10^%.6f = %.3f -> %llu parameters\n", ln, n,
                  static_cast<unsigned long long>(scaling::optimal_params(a.segments)));
    out << buf;
    out << "preset              = " << models::kind_name(choice.kind) << " (" << choice.param_count
        << " parameters, budget limit " << scaling::kBudgetSlack << " N)\n";
    if (choice.undersized) err << "warning: " << choice.warning << '\n';

    const double n3m = 3e6;
    std::snprintf(buf, sizeof buf,
                  "note: a 3M-parameter model is optimal under this line only at D = 10^((log10(3e6) - %.4f) / %.2f)"
                  " = %.4g segments; at D = %.4g the line gives %.0f parameters. The two sizes disagree and the"
                  " data unit that would reconcile them is unknown, so both are shown.\n",
                  scaling::kIntercept, scaling::kSlope, scaling::required_segments(n3m), a.segments, n);
    out << buf;
    return kExitOk;
}

inline int cmd_export_fig(const FigArgs& a, std::ostream& out) {
    const auto ds = read_dataset(a.data);
    const fs::path out_path = a.out;
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    simgen::export_soc_scatter(ds, out_path);
    write_manifest(manifest_path_for(out_path), "export-fig", {{"data", a.data}, {"out", a.out}},
                   {fs::path(a.data) / kRoutesFile}, {out_path});
    out << "wrote " << ds.routes.size() << " points to " << out_path.string() << '\n';
    return kExitOk;
}

/// Parses and runs one command line (args[0] is the program name). Returns the exit code.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"EV route energy estimation: data generation, training, evaluation, sizing and benchmarks",
                 "evroute"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    GenerateArgs ga;
    auto* gen = app.add_subcommand("generate", "Generate a synthetic route dataset");
    gen->add_option("--seed", ga.seed, "Generator seed")->capture_default_str();
    gen->add_option("--routes", ga.routes, "Number of routes")->capture_default_str();
    gen->add_option("--min-length", ga.min_length, "Fewest segments per route")->capture_default_str();
    gen->add_option("--max-length", ga.max_length, "Most segments per route")->capture_default_str();
    gen->add_option("--threads", ga.threads, "Worker threads (output does not depend on it)")->capture_default_str();
    gen->add_option("--out", ga.out, "Output directory")->required();

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train (or fit) one model and write its checkpoint");
    std::vector<std::string> kinds;
    for (auto k : models::kAllKinds) kinds.emplace_back(models::kind_name(k));
    tr->add_option("--model", ta.model, "Model kind")->required()->check(CLI::IsMember(kinds));
    tr->add_option("--data", ta.data, "Dataset directory")->required();
    tr->add_option("--out", ta.out, "Output directory for checkpoint, history and manifest")->required();
    tr->add_option("--seed", ta.seed, "Initialisation and shuffling seed")->capture_default_str();
    tr->add_option("--lr", ta.lr, "Adam learning rate")->capture_default_str();
    tr->add_option("--batch-size", ta.batch_size, "Routes per minibatch")->capture_default_str();
    tr->add_option("--epochs", ta.epochs, "Maximum epochs")->capture_default_str();
    tr->add_option("--patience", ta.patience, "Early-stopping patience in epochs")->capture_default_str();
    tr->add_flag("--no-early-stop", ta.no_early_stop, "Run every epoch and keep the final weights");
    tr->add_flag("--quiet", ta.quiet, "Do not log per-epoch progress");

    EvalArgs ea;
    auto* ev = app.add_subcommand("eval", "Score checkpoints and write the comparison report");
    ev->add_option("--data", ea.data, "Dataset directory")->required();
    ev->add_option("--models", ea.models, "Checkpoint files");
    ev->add_option("--ckpt-dir", ea.ckpt_dir, "Directory whose *.ckpt files are all evaluated");
    ev->add_option("--level", ea.level, "route or segment")
        ->check(CLI::IsMember({"route", "segment"}))
        ->capture_default_str();
    ev->add_option("--split", ea.split, "Split to score")
        ->check(CLI::IsMember({"train", "val", "test"}))
        ->capture_default_str();
    ev->add_flag("--no-bps", ea.no_bps, "Skip basis points (no ffn reference needed)");
    ev->add_option("--threads", ea.threads, "Inference threads")->capture_default_str();
    ev->add_option("--out", ea.out, "Report CSV path")->required();

    BenchArgs ba;
    auto* be = app.add_subcommand("bench", "Time inference over a synthetic batch");
    be->add_option("--models", ba.models, "Checkpoint files");
    be->add_option("--kinds", ba.kinds, "Model kinds to time with fresh weights")->check(CLI::IsMember(kinds));
    be->add_option("--routes", ba.routes, "Routes in the batch")->capture_default_str();
    be->add_option("--seed", ba.seed, "Seed for the batch and fresh weights")->capture_default_str();
    be->add_option("--warmups", ba.warmups, "Untimed passes")->capture_default_str();
    be->add_option("--repeats", ba.repeats, "Timed passes")->capture_default_str();
    be->add_option("--threads", ba.threads, "Inference threads")->capture_default_str();
    be->add_option("--chunk", ba.chunk, "Routes per packed inference chunk")->capture_default_str();
    be->add_option("--out", ba.out, "Bench CSV path")->required();

    ScaleArgs sa;
    auto* sc = app.add_subcommand("scale", "Compute-optimal parameter count for a data size");
    sc->add_option("--segments", sa.segments, "Training data size D in segments")->required();
    sc->add_option("--input-width", sa.input_width, "Feature width used for preset sizes")->capture_default_str();

    FigArgs fa;
    auto* fig = app.add_subcommand("export-fig", "Write the returning-SOC vs distance scatter CSV");
    fig->add_option("--data", fa.data, "Dataset directory")->required();
    fig->add_option("--out", fa.out, "Scatter CSV path")->required();

    // Consumed by expand_config before parsing; registered so --help lists it.
    std::string config_path;
    for (auto* sub : {gen, tr, ev, be, sc, fig})
        sub->add_option("--config", config_path, "JSON file of flag values (keys are long flag names); command-line flags win");

    try {
        args = expand_config(std::move(args));
        std::vector<const char*> argv;
        for (const auto& s : args) argv.push_back(s.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_generate(ga, out);
        if (tr->parsed()) return cmd_train(ta, out, err);
        if (ev->parsed()) return cmd_eval(ea, out, err);
        if (be->parsed()) return cmd_bench(ba, out, err);
        if (sc->parsed()) return cmd_scale(sa, out, err);
        if (fig->parsed()) return cmd_export_fig(fa, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run_cli(std::vector<std::string>(argv, argv + argc), out, err);
}

} // namespace evroute::cli
