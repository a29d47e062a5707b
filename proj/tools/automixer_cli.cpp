// automixer: command-line front end.
//
//   automixer <command> [--config FILE] [--set section.key=value]... [--seed N] [--out DIR]
//
// Commands: generate, pretrain, finetune, evaluate, benchmark, sweep, ablate, report.
// Every command writes its artifacts plus a manifest.json under <out>/<command>/.
// Exit status: 0 ok, 2 configuration or usage, 3 data, 4 training.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "automixer/checkpoint.hpp"
#include "automixer/errors.hpp"
#include "automixer/harness.hpp"
#include "automixer/hashing.hpp"
#include "automixer/report.hpp"
#include "automixer/run_config.hpp"
#include "automixer/synth.hpp"
#include "automixer/training.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace automixer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTraining = 4;

const std::vector<std::string> kCommands{"generate", "pretrain",  "finetune", "evaluate",
                                         "benchmark", "sweep", "ablate", "report"};

struct Options {
    std::string command;
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out = "runs/default";
    std::string checkpoint;  // finetune: pretrained AE; evaluate/report: model
};

int exit_code_for(const Error& e) {
    const std::string kind = e.kind();
    if (kind == "data" || kind == "schema") return kExitData;
    if (kind == "config" || kind == "usage") return kExitConfig;
    return kExitTraining;  // training, plus dimension/parameter faults that indicate a bug
}

void fail_line(const std::string& kind, int code, const std::string& message) {
    std::cerr << "error kind=" << kind << " exit=" << code << " message=" << ordered_json(message).dump() << '\n';
}

// Progress records go to stdout and to the command's log file.
class Progress {
public:
    explicit Progress(const fs::path& log_path) : log_(log_path, std::ios::trunc) {
        if (!log_) throw DataError("cannot write log file " + log_path.string());
    }
    void emit(const ordered_json& record) {
        const auto line = record.dump();
        std::cout << line << '\n' << std::flush;
        log_ << line << '\n' << std::flush;
    }

private:
    std::ofstream log_;
};

struct Context {
    Options opts;
    RunConfig config;
    fs::path out;
    fs::path dir;  // <out>/<command>

    fs::path series() const { return config.series.empty() ? out / "data" / "series.csv" : fs::path(config.series); }
    fs::path schema() const { return config.schema.empty() ? out / "data" / "schema.csv" : fs::path(config.schema); }
    fs::path incidents() const {
        return config.incidents.empty() ? out / "data" / "incidents.csv" : fs::path(config.incidents);
    }
    fs::path pretrain_checkpoint() const {
        return !opts.checkpoint.empty() && opts.command == "finetune" ? fs::path(opts.checkpoint)
                                                                       : out / "pretrain" / "checkpoint.json";
    }
    fs::path model_checkpoint() const {
        return !opts.checkpoint.empty() && opts.command != "finetune" ? fs::path(opts.checkpoint)
                                                                       : out / "finetune" / "checkpoint.json";
    }
};

ordered_json file_entries(const std::vector<fs::path>& paths) {
    ordered_json arr = ordered_json::array();
    for (const auto& p : paths) {
        if (!fs::exists(p)) throw DataError("input file not found: " + p.string());
        arr.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}});
    }
    return arr;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

void write_manifest(const Context& ctx, const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
                    ordered_json extra = ordered_json::object()) {
    ordered_json m{{"format", "automixer-manifest"},
                   {"version", 1},
                   {"command", ctx.opts.command},
                   {"seed", ctx.config.seed},
                   {"config_hash", ctx.config.model.hash()},
                   {"config", ctx.config.to_json()},
                   {"inputs", file_entries(inputs)},
                   {"outputs", file_entries(outputs)}};
    for (auto& [k, v] : extra.items()) m[k] = v;
    write_json(ctx.dir / "manifest.json", m);
}

PreparedDataset load_dataset(const Context& ctx) {
    const auto frame = load_frame(ctx.series(), ctx.schema());
    return PreparedDataset::prepare(frame, ctx.config.model.sl, ctx.config.model.fl, ctx.config.split);
}

ProgressSink epoch_sink(Progress& progress) {
    return [&progress](const EpochRecord& r) {
        auto j = r.to_json();
        j["event"] = "epoch";
        progress.emit(j);
    };
}

void check_schema(const ordered_json& meta, const ChannelSchema& schema, const fs::path& ckpt) {
    if (meta.contains("schema") && schema_from_json(meta["schema"]) != schema) {
        throw SchemaError("checkpoint " + ckpt.string() + " was trained on a different channel schema");
    }
}

// ---- commands ---------------------------------------------------------------

std::vector<fs::path> cmd_generate(Context& ctx, Progress& progress) {
    fs::create_directories(ctx.series().parent_path());
    fs::create_directories(ctx.schema().parent_path());
    fs::create_directories(ctx.incidents().parent_path());
    const auto seed = ctx.config.seed;
    std::vector<fs::path> outputs{ctx.series(), ctx.schema(), ctx.incidents()};
    BizITObsFrame frame;
    if (ctx.config.synth_kind == SynthKind::events) {
        auto out = synth_generate(ctx.config.synth, seed);
        frame = std::move(out.frame);
        const auto truth_path = ctx.dir / "ground_truth.csv";
        out.truth.save(truth_path);
        outputs.push_back(truth_path);
    } else {
        frame = synth_latent(ctx.config.latent, seed);
    }
    save_frame(frame, ctx.series());
    frame.schema.save(ctx.schema());
    std::vector<std::string> kpis;
    for (auto i : frame.schema.kpi_indices()) kpis.push_back(frame.schema[i].name);
    save_incidents(synth_incidents(kpis, ctx.config.incidents_per_kpi, seed + 1), ctx.incidents());
    progress.emit({{"event", "generated"}, {"rows", frame.rows()}, {"channels", frame.channels()}});
    write_manifest(ctx, {}, outputs);
    return outputs;
}

std::vector<fs::path> cmd_pretrain(Context& ctx, Progress& progress) {
    const auto data = load_dataset(ctx);
    auto spec = ctx.config.pretrain_spec();
    spec.progress = epoch_sink(progress);
    const auto result = pretrain(data, ctx.config.model, spec);
    const auto ckpt = ctx.dir / "checkpoint.json";
    result.checkpoint.save(ckpt);
    write_manifest(ctx, {ctx.series(), ctx.schema()}, {ckpt},
                   {{"best_epoch", result.best_epoch}, {"best_val_loss", result.best_val_loss}});
    return {ckpt};
}

std::vector<fs::path> cmd_finetune(Context& ctx, Progress& progress) {
    const auto data = load_dataset(ctx);
    auto spec = ctx.config.finetune_spec();
    spec.progress = epoch_sink(progress);
    std::vector<fs::path> inputs{ctx.series(), ctx.schema()};
    std::optional<ChannelAutoEncoder> ae;
    if (spec.mode == TrainMode::pretrained && ctx.config.model.compress) {
        const auto path = ctx.pretrain_checkpoint();
        if (!fs::exists(path)) throw ConfigError("PT finetuning needs a pretrain checkpoint; not found: " + path.string());
        const auto ckpt = Checkpoint::load(path);
        check_schema(ckpt.meta, data.schema(), path);
        ae = autoencoder_from_checkpoint(ckpt);
        inputs.push_back(path);
    } else if (spec.mode == TrainMode::pretrained) {
        spec.mode = TrainMode::no_pretrain;  // plain TSMixer has no autoencoder to load
    }
    const auto result = finetune(data, ctx.config.model, spec, ae ? &*ae : nullptr);
    const auto ckpt = ctx.dir / "checkpoint.json";
    const auto metrics = ctx.dir / "metrics.json";
    result.checkpoint.save(ckpt);
    write_json(metrics, result.test_metrics.to_json());
    progress.emit({{"event", "metrics"}, {"metrics", result.test_metrics.to_json()}});
    write_manifest(ctx, inputs, {ckpt, metrics},
                   {{"best_epoch", result.best_epoch}, {"best_val_loss", result.best_val_loss}});
    return {ckpt, metrics};
}

std::vector<fs::path> cmd_evaluate(Context& ctx, Progress& progress) {
    const auto data = load_dataset(ctx);
    const auto path = ctx.model_checkpoint();
    const auto ckpt = Checkpoint::load(path);
    check_schema(ckpt.meta, data.schema(), path);
    const auto model = model_from_checkpoint(ckpt);
    const auto seed = ckpt.meta.value("seed", std::uint64_t{0});
    const auto report = evaluate(model, data, seed);
    const auto metrics = ctx.dir / "metrics.json";
    write_json(metrics, report.to_json());
    progress.emit({{"event", "metrics"}, {"metrics", report.to_json()}});
    write_manifest(ctx, {ctx.series(), ctx.schema(), path}, {metrics});
    return {metrics};
}

HarnessSpec harness_for(const Context& ctx, Progress& progress) {
    auto spec = ctx.config.harness_spec();
    spec.on_cell = [&progress](const BenchCell& cell) { progress.emit(cell.to_json()); };
    return spec;
}

std::vector<fs::path> cmd_benchmark(Context& ctx, Progress& progress) {
    const auto data = load_dataset(ctx);
    std::vector<Variant> variants;
    if (ctx.config.variants.empty()) variants = default_variants();
    for (const auto& name : ctx.config.variants) variants.push_back(variant_by_name(name));
    const auto table = run_benchmark(data, variants, harness_for(ctx, progress));
    const auto text = ctx.dir / "table.txt";
    const auto results = ctx.dir / "results.jsonl";
    write_text(text, table.to_text());
    write_text(results, table.to_jsonl());
    std::cerr << table.to_text();
    write_manifest(ctx, {ctx.series(), ctx.schema()}, {text, results});
    return {text, results};
}

std::vector<fs::path> cmd_sweep(Context& ctx, Progress& progress) {
    const auto data = load_dataset(ctx);
    const auto table =
        sweep_cr(data, ctx.config.cr_list, variant_by_name(ctx.config.focus_variant), harness_for(ctx, progress));
    const auto text = ctx.dir / "table.txt";
    const auto results = ctx.dir / "results.jsonl";
    write_text(text, table.to_text());
    write_text(results, table.to_jsonl());
    std::cerr << table.to_text();
    write_manifest(ctx, {ctx.series(), ctx.schema()}, {text, results});
    return {text, results};
}

std::vector<fs::path> cmd_ablate(Context& ctx, Progress& progress) {
    const auto data = load_dataset(ctx);
    const auto table =
        ablate_pretraining(data, variant_by_name(ctx.config.focus_variant), harness_for(ctx, progress));
    const auto text = ctx.dir / "table.txt";
    const auto results = ctx.dir / "results.jsonl";
    write_text(text, table.to_text());
    write_text(results, table.to_jsonl());
    std::cerr << table.to_text();
    write_manifest(ctx, {ctx.series(), ctx.schema()}, {text, results});
    return {text, results};
}

std::vector<fs::path> cmd_report(Context& ctx, Progress& progress) {
    const auto data = load_dataset(ctx);
    const auto path = ctx.model_checkpoint();
    const auto ckpt = Checkpoint::load(path);
    check_schema(ckpt.meta, data.schema(), path);
    const auto model = model_from_checkpoint(ckpt);
    auto inputs = collect_report_inputs(model, data);
    inputs.metrics = evaluate(model, data, ckpt.meta.value("seed", std::uint64_t{0}));
    const auto incidents = load_incidents(ctx.incidents());
    const auto report = build_report(inputs, incidents, ctx.config.report);
    for (const auto& n : report.notices) progress.emit({{"event", "notice"}, {"message", n}});
    const auto outputs = write_report(report, ctx.dir);
    write_manifest(ctx, {ctx.series(), ctx.schema(), ctx.incidents(), path}, outputs);
    return outputs;
}

int run(const Options& opts) {
    Context ctx;
    ctx.opts = opts;
    if (!opts.config_path.empty()) {
        ctx.config = load_run_config(opts.config_path);
    }
    for (const auto& o : opts.overrides) apply_override(ctx.config, o);
    if (opts.seed) ctx.config.seed = *opts.seed;
    ctx.config.validate();
    ctx.out = opts.out;
    ctx.dir = ctx.out / opts.command;
    fs::create_directories(ctx.dir);
    Progress progress(ctx.dir / "log.jsonl");
    progress.emit({{"event", "start"}, {"command", opts.command}, {"seed", ctx.config.seed}});

    std::vector<fs::path> outputs;
    if (opts.command == "generate") outputs = cmd_generate(ctx, progress);
    else if (opts.command == "pretrain") outputs = cmd_pretrain(ctx, progress);
    else if (opts.command == "finetune") outputs = cmd_finetune(ctx, progress);
    else if (opts.command == "evaluate") outputs = cmd_evaluate(ctx, progress);
    else if (opts.command == "benchmark") outputs = cmd_benchmark(ctx, progress);
    else if (opts.command == "sweep") outputs = cmd_sweep(ctx, progress);
    else if (opts.command == "ablate") outputs = cmd_ablate(ctx, progress);
    else if (opts.command == "report") outputs = cmd_report(ctx, progress);

    ordered_json paths = ordered_json::array();
    for (const auto& p : outputs) paths.push_back(p.generic_string());
    progress.emit({{"event", "done"}, {"command", opts.command}, {"outputs", paths}});
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AutoMixer: channel-compressed TSMixer for BizITObs forecasting"};
    app.require_subcommand(1);
    Options opts;
    for (const auto& name : kCommands) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", opts.config_path, "INI config file, or a manifest.json to replay");
        sub->add_option("--set", opts.overrides, "Override one key, section.key=value (repeatable)");
        sub->add_option("--seed", opts.seed, "Run seed (overrides train.seed)");
        sub->add_option("--out", opts.out, "Output directory")->capture_default_str();
        if (name == "finetune" || name == "evaluate" || name == "report") {
            sub->add_option("--checkpoint", opts.checkpoint, "Checkpoint path instead of the one under --out");
        }
        sub->callback([&opts, name] { opts.command = name; });
    }
    app.description(app.get_description() + "\nCommands: generate, pretrain, finetune, evaluate, benchmark, sweep, ablate, report");

    if (argc > 1 && argv[1][0] != '-' && std::find(kCommands.begin(), kCommands.end(), argv[1]) == kCommands.end()) {
        fail_line("usage", kExitConfig, std::string("unknown command '") + argv[1] + "'");
        std::cerr << app.help();
        return kExitConfig;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail_line("usage", kExitConfig, e.what());
        std::cerr << app.help();
        return kExitConfig;
    }

    try {
        return run(opts);
    } catch (const Error& e) {
        const int code = exit_code_for(e);
        fail_line(e.kind(), code, e.what());
        return code;
    } catch (const fs::filesystem_error& e) {
        fail_line("data", kExitData, e.what());
        return kExitData;
    } catch (const std::exception& e) {
        fail_line("internal", kExitTraining, e.what());
        return kExitTraining;
    }
}
