#include "cli.hpp"

#include "ksc/config.hpp"
#include "ksc/ddpg.hpp"
#include "ksc/errors.hpp"
#include "ksc/esn_training.hpp"
#include "ksc/io.hpp"
#include "ksc/orchestrator.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>

namespace fs = std::filesystem;

namespace ksc::cli {

namespace {

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> mode;
    std::string out;
    std::string checkpoint;
};

ExperimentConfig effective_config(const CommonOptions& o) {
    if (o.config.empty()) throw std::invalid_argument("--config is required");
    ExperimentConfig c = load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.workers) c.workers = *o.workers;
    if (o.mode) c.mode = parse_mode(*o.mode);
    validate(c);
    return c;
}

// The effective config is written next to the outputs so the manifest hash
// always refers to a file on disk.
RunManifest start_manifest(const std::string& command, const ExperimentConfig& c, const fs::path& config_copy) {
    save_config(c, config_copy);
    RunManifest m;
    m.command = command;
    m.config_path = config_copy.string();
    m.config_hash = file_hash(config_copy);
    m.seed = c.seed;
    m.started = utc_timestamp();
    m.outputs.push_back(config_copy);
    return m;
}

void finish_manifest(RunManifest m, const fs::path& path) {
    m.finished = utc_timestamp();
    write_manifest(m, path);
}

fs::path sibling(const fs::path& file, const std::string& suffix) { return fs::path(file.string() + suffix); }

void ensure_parent(const fs::path& file) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

int gen_dataset(const CommonOptions& o, std::ostream& out) {
    const ExperimentConfig c = effective_config(o);
    DatasetSettings settings = c.dataset();
    if (o.seed) settings.seed = *o.seed;
    const fs::path path = o.out.empty() ? fs::path(c.esn.dataset_path) : fs::path(o.out);
    ensure_parent(path);
    RunManifest m = start_manifest("gen-dataset", c, sibling(path, ".config.json"));
    const Dataset d = generate_dataset(settings, c.workers);
    save_dataset(d, path);
    m.outputs.push_back(path);
    finish_manifest(m, sibling(path, ".manifest.json"));
    out << "wrote " << d.episodes() << " episodes x " << d.episode_length << " steps to " << path.string() << "\n";
    return 0;
}

Dataset dataset_for(const ExperimentConfig& c, const std::string& override_path) {
    const fs::path path = override_path.empty() ? fs::path(c.esn.dataset_path) : fs::path(override_path);
    if (!fs::exists(path)) {
        throw std::runtime_error("dataset " + path.string() + " not found; run gen-dataset first");
    }
    return load_dataset(path);
}

int train_esn_cmd(const CommonOptions& o, const std::string& dataset_path, bool search, int budget, std::ostream& out) {
    const ExperimentConfig c = effective_config(o);
    const Dataset d = dataset_for(c, dataset_path);
    const DatasetSplit split = split_dataset(d.episodes());
    const fs::path path = o.out.empty() ? fs::path(c.model.esn_checkpoint) : fs::path(o.out);
    ensure_parent(path);
    RunManifest m = start_manifest("train-esn", c, sibling(path, ".config.json"));

    EsnParams params = c.esn.params;
    nlohmann::json summary;
    if (search) {
        const SearchResult r = search_hyperparams(params, SearchRanges{}, budget > 0 ? budget : c.esn.search_budget, d,
                                                  split, c.esn.validation, c.seed, c.workers);
        params = r.best;
        summary["search_best_error"] = r.best_error;
        summary["search_candidates"] = r.history.size();
    }
    TrainingReport report;
    const EsnMachine machine = train_esn(params, d, split.train, c.esn.validation.washout, &report);
    save_esn(machine, path);
    const double val = split.validation.empty() ? std::nan("") : evaluate_machine(machine, d, split.validation, c.esn.validation);
    const double test = split.test.empty() ? std::nan("") : evaluate_machine(machine, d, split.test, c.esn.validation);
    summary["format"] = "ksc-esn-summary";
    summary["version"] = kSummaryVersion;
    summary["training_samples"] = report.samples;
    summary["validation_error"] = val;
    summary["test_error"] = test;
    summary["checkpoint"] = path.string();
    summary["params"] = to_json(c)["esn"];
    summary["params"]["leak_rate"] = params.leak_rate;
    summary["params"]["spectral_radius"] = params.spectral_radius;
    summary["params"]["input_scaling"] = params.input_scaling;
    summary["params"]["action_scaling"] = params.action_scaling;
    summary["params"]["tikhonov"] = params.tikhonov;
    const fs::path summary_path = sibling(path, ".summary.json");
    std::ofstream(summary_path) << summary.dump(2) << "\n";
    m.outputs.push_back(path);
    m.outputs.push_back(summary_path);
    finish_manifest(m, sibling(path, ".manifest.json"));
    out << "trained on " << report.samples << " samples; validation error " << val << ", test error " << test << "\n";
    return 0;
}

int validate_esn_cmd(const CommonOptions& o, const std::string& dataset_path, std::ostream& out) {
    const ExperimentConfig c = effective_config(o);
    const fs::path ckpt = o.checkpoint.empty() ? fs::path(c.model.esn_checkpoint) : fs::path(o.checkpoint);
    const EsnMachine machine = load_esn(ckpt);
    const Dataset d = dataset_for(c, dataset_path);
    const DatasetSplit split = split_dataset(d.episodes());
    nlohmann::json result{{"checkpoint", ckpt.string()}};
    if (!split.validation.empty()) result["validation_error"] = evaluate_machine(machine, d, split.validation, c.esn.validation);
    if (!split.test.empty()) result["test_error"] = evaluate_machine(machine, d, split.test, c.esn.validation);
    if (!o.out.empty()) {
        ensure_parent(o.out);
        std::ofstream(o.out) << result.dump(2) << "\n";
    }
    out << result.dump(2) << "\n";
    return 0;
}

nlohmann::json summary_json(const ExperimentConfig& c, const std::vector<EpisodeRecord>& episodes, double wall) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& e : episodes) list.push_back(episode_summary(e));
    return {{"format", "ksc-summary"}, {"version", kSummaryVersion}, {"config", to_json(c)}, {"episodes", list},
            {"wall_seconds", wall}};
}

int train_agent_cmd(const CommonOptions& o, std::ostream& out) {
    const auto started = std::chrono::steady_clock::now();
    const ExperimentConfig c = effective_config(o);
    const fs::path dir = o.out.empty() ? fs::path("run") : fs::path(o.out);
    fs::create_directories(dir);
    RunManifest m = start_manifest("train-agent", c, dir / "config.json");
    Experiment experiment(c);
    const bool resume = !o.checkpoint.empty();
    DdpgAgent agent = resume ? DdpgAgent::load(o.checkpoint) : experiment.make_agent();
    if (agent.state_dim() != experiment.agent_state_dim() || agent.action_dim() != c.control.n_a) {
        throw std::invalid_argument("agent checkpoint dimensions do not match the configured mode");
    }

    const fs::path metrics = dir / "metrics.csv";
    std::ofstream metrics_out(metrics, resume && fs::exists(metrics) ? std::ios::app : std::ios::trunc);
    if (!resume || fs::file_size(metrics) == 0) write_metrics_header(metrics_out);
    TrainOptions options;
    options.best_checkpoint = dir / "agent_best.bin";
    options.latest_checkpoint = dir / "agent_latest.bin";
    options.keep_step_records = false;
    options.on_episode = [&](const EpisodeRecord& r) {
        write_metrics_rows(metrics_out, r);
        metrics_out.flush();
    };
    const TrainingLog log = train(experiment, agent, options);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    nlohmann::json summary = summary_json(c, log.episodes, wall);
    summary["learning_returns"] = log.learning_returns;
    summary["eval_returns"] = log.eval_returns;
    summary["best_eval_return"] = log.best_eval_episode ? nlohmann::json(log.best_eval_return) : nlohmann::json();
    summary["best_checkpoint"] = fs::exists(*options.best_checkpoint) ? options.best_checkpoint->string() : "";
    summary["resumed_from"] = o.checkpoint;
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";

    m.outputs.push_back(metrics);
    m.outputs.push_back(dir / "summary.json");
    if (fs::exists(*options.best_checkpoint)) m.outputs.push_back(*options.best_checkpoint);
    m.outputs.push_back(*options.latest_checkpoint);
    finish_manifest(m, dir / "manifest.json");
    out << "trained " << log.episodes.size() << " episodes in " << wall << " s";
    if (log.best_eval_episode) out << "; best evaluation return " << log.best_eval_return;
    out << "\n";
    return 0;
}

DdpgAgent require_agent(const CommonOptions& o) {
    if (o.checkpoint.empty()) throw std::invalid_argument("--checkpoint is required");
    if (!fs::exists(o.checkpoint)) throw std::runtime_error("agent checkpoint not found: " + o.checkpoint);
    return DdpgAgent::load(o.checkpoint);
}

int evaluate_cmd(const CommonOptions& o, std::optional<int> episodes, bool dump, std::ostream& out) {
    const auto started = std::chrono::steady_clock::now();
    const ExperimentConfig c = effective_config(o);
    DdpgAgent agent = require_agent(o);
    const fs::path dir = o.out.empty() ? fs::path("eval") : fs::path(o.out);
    fs::create_directories(dir);
    RunManifest m = start_manifest("evaluate", c, dir / "config.json");
    Experiment experiment(c);
    std::vector<EpisodeRecord> records;
    const ReturnStatistics stats = evaluate(experiment, agent, episodes.value_or(c.episodes.evaluation), &records, dump);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    const fs::path metrics = dir / "metrics.csv";
    {
        std::ofstream mo(metrics);
        write_metrics_header(mo);
        for (const auto& r : records) write_metrics_rows(mo, r);
    }
    m.outputs.push_back(metrics);
    nlohmann::json summary = summary_json(c, records, wall);
    summary["checkpoint"] = o.checkpoint;
    summary["statistics"] = {{"mean", stats.mean}, {"std", stats.std_dev}, {"min", stats.min}, {"max", stats.max},
                             {"returns", stats.returns}};
    if (dump) {
        nlohmann::json files = nlohmann::json::array();
        for (std::size_t i = 0; i < records.size(); ++i) {
            const fs::path t = dir / ("trajectory_" + std::to_string(i) + ".csv");
            write_trajectory(records[i], t);
            files.push_back(t.string());
            m.outputs.push_back(t);
        }
        summary["trajectories"] = files;
    }
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
    m.outputs.push_back(dir / "summary.json");
    finish_manifest(m, dir / "manifest.json");
    out << "evaluation over " << stats.returns.size() << " episodes: mean return " << stats.mean << " (std "
        << stats.std_dev << ", min " << stats.min << ", max " << stats.max << ")\n";
    return 0;
}

int dump_trajectory_cmd(const CommonOptions& o, long episode, const std::string& stage_name, std::ostream& out) {
    const ExperimentConfig c = effective_config(o);
    DdpgAgent agent = require_agent(o);
    Stage stage = Stage::eval;
    if (stage_name == "random") {
        stage = Stage::random;
    } else if (stage_name != "eval") {
        throw std::invalid_argument("--stage must be eval or random");
    }
    const fs::path path = o.out.empty() ? fs::path("trajectory.csv") : fs::path(o.out);
    ensure_parent(path);
    RunManifest m = start_manifest("dump-trajectory", c, sibling(path, ".config.json"));
    Experiment experiment(c);
    const EpisodeRecord record = experiment.run_episode(agent, stage, episode, Experiment::EpisodeOptions{true});
    write_trajectory(record, path);
    m.outputs.push_back(path);
    finish_manifest(m, sibling(path, ".manifest.json"));
    out << "episode return " << record.total_return << " written to " << path.string() << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Ensemble-filtered reinforcement-learning control of the Kuramoto-Sivashinsky equation"};
    app.require_subcommand(1);
    CommonOptions o;
    std::string dataset_path;
    bool search = false;
    int budget = 0;
    std::optional<int> episodes;
    bool dump = false;
    long episode = 0;
    std::string stage = "eval";

    auto add_common = [&](CLI::App* sub, bool checkpoint) {
        sub->add_option("--config", o.config, "experiment config (JSON)")->required();
        sub->add_option("--seed", o.seed, "override the base seed");
        sub->add_option("--workers", o.workers, "threads for ensemble fan-out")->check(CLI::PositiveNumber);
        sub->add_option("--mode", o.mode, "model_free | damirl_fourier | damirl_esn");
        sub->add_option("--out", o.out, "output file or directory");
        if (checkpoint) sub->add_option("--checkpoint", o.checkpoint, "checkpoint to load");
    };

    auto* gen = app.add_subcommand("gen-dataset", "simulate random-action KS episodes for ESN training");
    add_common(gen, false);
    auto* train_esn_app = app.add_subcommand("train-esn", "fit the ESN readout (optionally searching hyperparameters)");
    add_common(train_esn_app, false);
    train_esn_app->add_option("--dataset", dataset_path, "dataset file (default from config)");
    train_esn_app->add_flag("--search", search, "random search over ESN hyperparameters first");
    train_esn_app->add_option("--budget", budget, "search candidates (default from config)");
    auto* val = app.add_subcommand("validate-esn", "closed-loop error of an ESN checkpoint");
    add_common(val, true);
    val->add_option("--dataset", dataset_path, "dataset file (default from config)");
    auto* train_agent_app = app.add_subcommand("train-agent", "random, learning and evaluation episodes");
    add_common(train_agent_app, true);
    auto* eval = app.add_subcommand("evaluate", "evaluation episodes of a trained agent");
    add_common(eval, true);
    eval->add_option("--episodes", episodes, "number of evaluation episodes")->check(CLI::PositiveNumber);
    eval->add_flag("--dump-trajectory", dump, "write per-episode trajectory CSVs");
    auto* dump_app = app.add_subcommand("dump-trajectory", "run one episode and write its full trajectory");
    add_common(dump_app, true);
    dump_app->add_option("--episode", episode, "episode index (selects the seeds)");
    dump_app->add_option("--stage", stage, "eval | random");

    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (gen->parsed()) return gen_dataset(o, out);
        if (train_esn_app->parsed()) return train_esn_cmd(o, dataset_path, search, budget, out);
        if (val->parsed()) return validate_esn_cmd(o, dataset_path, out);
        if (train_agent_app->parsed()) return train_agent_cmd(o, out);
        if (eval->parsed()) return evaluate_cmd(o, episodes, dump, out);
        if (dump_app->parsed()) return dump_trajectory_cmd(o, episode, stage, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace ksc::cli
