#include "cmis/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cmis/checkpoint.hpp"
#include "cmis/config.hpp"
#include "cmis/evaluation.hpp"
#include "cmis/synth.hpp"

#ifndef CMIS_GIT_DESCRIBE
#define CMIS_GIT_DESCRIBE "unknown"
#endif

namespace cmis::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string git_describe() { return CMIS_GIT_DESCRIBE; }

namespace {

const std::vector<std::string> kVerbs = {"synth", "validate-data", "train", "eval", "ablate", "split-modality", "analyze"};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c == '\n' ? ' ' : c;
    }
    return out;
}

int report(std::ostream& err, int code, const std::string& kind, const std::string& message) {
    err << "error code=" << code << " kind=" << kind << " message=\"" << escape(message) << "\"\n";
    return code;
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
    std::vector<std::uint64_t> out;
    std::stringstream in(list);
    std::string tok;
    while (std::getline(in, tok, ','))
        if (!tok.empty()) out.push_back(std::stoull(tok));
    if (out.empty()) throw UsageError("--seeds needs at least one seed");
    return out;
}

/// Options shared by all verbs.
struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> set;
    int verbosity = 0;
};

void add_common(CLI::App& app, Common& c, bool config_required) {
    auto* opt = app.add_option("--config", c.config, "experiment config file");
    if (config_required) opt->required();
    app.add_option("--out", c.out, "output directory")->required();
    app.add_option("--seed", c.seed, "override train.seed");
    app.add_option("--set", c.set, "override a config key (key=value), repeatable");
    app.add_flag("-v,--verbose", c.verbosity, "more progress output");
}

KeyValues overrides(const Common& c) {
    KeyValues kv;
    for (const auto& s : c.set) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        kv[s.substr(0, eq)] = s.substr(eq + 1);
    }
    if (c.seed) kv["train.seed"] = std::to_string(*c.seed);
    return kv;
}

ExperimentConfig load(const Common& c) {
    if (c.config.empty()) throw ConfigError("--config is required");
    if (!fs::exists(c.config)) throw ConfigError("config file not found: " + c.config);
    return load_config(c.config, overrides(c));
}

fs::path prepare_out(const Common& c) {
    fs::path out(c.out);
    fs::create_directories(out);
    return out;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << '\n';
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Provenance record written by every run.
void write_run_json(const fs::path& out, const std::string& verb, const std::vector<std::string>& args,
                    const ExperimentConfig* cfg, double wall_s, const json& extra = json::object()) {
    json j;
    j["verb"] = verb;
    j["args"] = args;
    j["git_describe"] = git_describe();
    j["started_at"] = utc_now();
    j["wall_time_s"] = wall_s;
    if (cfg) {
        j["config"] = cfg->to_key_values();
        j["config_hash"] = cfg->hash_hex();
        j["seed"] = cfg->train.seed;
    }
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    write_json(out / "run.json", j);
}

/// Ten labeled samples (and the same individuals' negatives) for shape checks.
Dataset dry_run_stub(const ExperimentConfig& cfg) {
    if (cfg.data.source == DataSource::synthetic) {
        SynthConfig s = cfg.synth;
        s.n_individuals = 2;
        s.samples_per_individual = 5;
        s.negatives_per_individual = 2;
        s.validation_fraction = 0.2;
        return generate_synthetic(s).data;
    }
    Dataset full = load_experiment_data(cfg);
    Dataset stub;
    std::set<std::string> people;
    for (const Sample& s : full.validation) {
        if (stub.validation.size() == 2) break;
        stub.validation.push_back(s);
        people.insert(s.individual_id());
    }
    for (const Sample& s : full.train) {
        if (stub.train.size() + stub.validation.size() == 10) break;
        stub.train.push_back(s);
        people.insert(s.individual_id());
    }
    for (const Sample& s : full.negatives)
        if (people.contains(s.individual_id())) stub.negatives.push_back(s);
    if (stub.train.empty() || stub.validation.empty())
        throw DataError("dry run needs at least one training and one validation sample");
    return stub;
}

std::string describe_model(CmisModel& m) {
    std::ostringstream os;
    for (ModuleId id : kAllModules) {
        if (!m.has(id)) continue;
        std::size_t n = 0;
        for (const auto& [_, p] : m.parameters(id)) n += p->value.size();
        os << "  " << std::left << std::setw(6) << to_string(id) << n << " parameters\n";
    }
    return os.str();
}

json evaluation_json(const Evaluation& ev, const std::string& hash) {
    return {{"mse", ev.mse}, {"samples", ev.labels.size()}, {"config_hash", hash}};
}

// ---- verbs ------------------------------------------------------------------

int cmd_synth(const Common& c, const std::vector<std::string>& args, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load(c);
    if (c.seed) cfg.synth.seed = *c.seed;
    const fs::path dir = prepare_out(c);
    const SynthDataset ds = generate_synthetic(cfg.synth);
    export_synthetic(ds, dir);
    out << "wrote " << ds.data.train.size() + ds.data.validation.size() << " labeled and " << ds.data.negatives.size()
        << " negative samples to " << dir.string() << '\n';
    write_run_json(dir, "synth", args, &cfg,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return ok;
}

int cmd_validate(const Common& c, const std::vector<std::string>& args, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    const ExperimentConfig cfg = load(c);
    const fs::path dir = prepare_out(c);
    const Dataset data = load_experiment_data(cfg);
    const NeutralBank bank = build_neutral_bank(data, cfg.ablation.neutral);
    std::set<std::string> people, uncovered;
    for (const auto* split : {&data.train, &data.validation})
        for (const Sample& s : *split) {
            people.insert(s.individual_id());
            if (!bank.covers(s.individual_id())) uncovered.insert(s.individual_id());
        }
    json report = {{"train", data.train.size()},
                   {"validation", data.validation.size()},
                   {"negatives", data.negatives.size()},
                   {"frames", data.frames()},
                   {"width", data.width()},
                   {"individuals", people.size()},
                   {"neutral_strategy", to_string(bank.strategy)},
                   {"neutral_samples", bank.total()},
                   {"individuals_without_neutrals", std::vector<std::string>(uncovered.begin(), uncovered.end())}};
    json stats = json::array();
    for (const auto& st : modality_statistics(data))
        stats.push_back({{"split", st.split}, {"modality", to_string(st.modality)}, {"count", st.count}});
    report["modality"] = stats;
    write_json(dir / "data_report.json", report);
    out << "ok: " << data.train.size() << " train, " << data.validation.size() << " validation, "
        << data.negatives.size() << " negatives; T=" << data.frames() << " H=" << data.width() << "; "
        << uncovered.size() << " individuals without neutrals\n";
    write_run_json(dir, "validate-data", args, &cfg,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return ok;
}

struct TrainOptions {
    std::string resume;
    bool dry_run = false;
};

int cmd_train(const Common& c, const TrainOptions& t, const std::vector<std::string>& args, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg;
    std::unique_ptr<CmisModel> model;
    Progress progress;
    std::vector<MetricsRow> metrics;
    if (!t.resume.empty()) {
        LoadedCheckpoint ck = load_checkpoint(t.resume);
        if (!c.config.empty()) {
            const std::string supplied = load(c).hash_hex();
            if (supplied != ck.config_hash)
                throw ConfigError("config hash mismatch: checkpoint " + ck.config_hash + ", supplied config " + supplied);
        }
        cfg = ck.state.config;
        model = std::move(ck.model);
        progress = ck.state.progress;
        metrics = std::move(ck.state.metrics);
    } else {
        cfg = load(c);
    }
    const fs::path dir = prepare_out(c);
    const Dataset data = t.dry_run ? dry_run_stub(cfg) : load_experiment_data(cfg);
    const ModelConfig mc = cfg.resolved_model(data.width());
    if (!model) model = std::make_unique<CmisModel>(mc, cfg.ablation, cfg.train.seed);
    const NeutralBank bank = build_neutral_bank(data, cfg.ablation.neutral);

    TrainConfig tc = cfg.train;
    if (t.dry_run) {
        tc.epochs = {1, 1, 1, 1};
        tc.max_batches_per_epoch = 1;
        out << "dry run: " << data.train.size() + data.validation.size() << " samples, T=" << data.frames()
            << " H=" << data.width() << ", components " << cfg.ablation.components() << "+R, pooling "
            << to_string(cfg.ablation.pooling) << ", translator " << to_string(cfg.ablation.translator) << '\n'
            << describe_model(*model);
    }
    Trainer trainer(*model, data, bank, tc, cfg.effective_ida());
    trainer.restore(progress, metrics);
    auto state = [&](const Trainer& tr) {
        return CheckpointState{cfg, mc, cfg.train.seed, tr.progress(), tr.metrics()};
    };
    trainer.set_epoch_hook([&](const Trainer& tr) {
        save_checkpoint(dir / "last.ckpt", *model, state(tr));
        write_metrics_csv(dir / "metrics.csv", tr.metrics());
        if (c.verbosity > 0 && !tr.metrics().empty()) {
            const MetricsRow& r = tr.metrics().back();
            out << r.stage << " epoch " << r.epoch << " validation loss " << format_double(r.loss) << '\n';
        }
    });
    trainer.run();
    save_checkpoint(dir / "final.ckpt", *model, state(trainer));
    write_metrics_csv(dir / "metrics.csv", trainer.metrics());

    const Evaluation ev = evaluate_mse(*model, data.validation, cfg.eval.clamp);
    write_predictions_csv(dir / "predictions.csv", ev);
    json result = evaluation_json(ev, cfg.hash_hex());
    result["skipped_translator_samples"] = trainer.skipped_samples();
    result["dry_run"] = t.dry_run;
    write_json(dir / "eval.json", result);
    if (trainer.skipped_samples() > 0)
        out << "skipped " << trainer.skipped_samples() << " translator-stage samples without neutrals\n";
    out << "mse=" << format_double(ev.mse) << '\n';
    write_run_json(dir, "train", args, &cfg,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return ok;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::vector<std::string>& args, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    if (!c.config.empty()) {
        const std::string supplied = load(c).hash_hex();
        if (supplied != ck.config_hash)
            throw ConfigError("config hash mismatch: checkpoint " + ck.config_hash + ", supplied config " + supplied);
    }
    const ExperimentConfig& cfg = ck.state.config;
    if (ck.state.progress.stage != Stage::done) throw std::runtime_error("checkpoint is mid-training; resume it first");
    const fs::path dir = prepare_out(c);
    const Dataset data = load_experiment_data(cfg);
    const Evaluation ev = evaluate_mse(*ck.model, data.validation, cfg.eval.clamp);
    write_predictions_csv(dir / "predictions.csv", ev);
    const DensityTable dens = export_densities(ev.labels, ev.predictions, cfg.eval.density_bandwidth);
    write_density_csv(dir / "densities.csv", dens);
    write_density_svg(dir / "densities.svg", dens);
    json result = evaluation_json(ev, ck.config_hash);
    result["prediction_peak"] = peak_height(dens.predictions);
    result["label_peak"] = peak_height(dens.labels);
    write_json(dir / "eval.json", result);
    out << "mse=" << format_double(ev.mse) << '\n';
    write_run_json(dir, "eval", args, &cfg,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return ok;
}

int cmd_ablate(const Common& c, const std::string& axis, const std::string& seeds, std::size_t jobs,
               const std::vector<std::string>& args, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    const ExperimentConfig cfg = load(c);
    std::vector<AblationSpec> specs;
    if (axis == "components") specs = component_specs(cfg.ablation);
    else if (axis == "translator") specs = translator_variant_specs(cfg.ablation);
    else if (axis == "ida") specs = ida_placement_specs(cfg.ablation);
    else if (axis == "neutral") specs = neutral_strategy_specs(cfg.ablation);
    else throw UsageError("unknown ablation axis '" + axis + "' (components | translator | ida | neutral)");
    const fs::path dir = prepare_out(c);
    const Dataset data = load_experiment_data(cfg);
    const auto rows = run_ablation_matrix(specs, cfg, data, parse_seeds(seeds), jobs);
    write_ablation_csv(dir / "ablation.csv", rows);
    std::map<std::string, std::pair<double, std::size_t>> mean;
    std::vector<std::string> order;
    for (const auto& r : rows) {
        std::string key = r.spec.components() + "+R " + to_string(r.spec.pooling) + " ida=" + to_string(r.spec.ida) +
                          " " + to_string(r.spec.translator) + " " + to_string(r.spec.neutral.strategy);
        if (r.spec.neutral.strategy == NeutralStrategy::peak) key += "(" + format_double(r.spec.neutral.edge) + ")";
        if (!mean.contains(key)) order.push_back(key);
        mean[key].first += r.mse;
        mean[key].second += 1;
    }
    for (const auto& k : order) out << k << " mean_mse=" << format_double(mean[k].first / mean[k].second) << '\n';
    write_run_json(dir, "ablate", args, &cfg,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return ok;
}

int cmd_split_modality(const Common& c, const std::string& seeds, const std::vector<std::string>& args,
                       std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    const ExperimentConfig cfg = load(c);
    const fs::path dir = prepare_out(c);
    const Dataset data = load_experiment_data(cfg);
    const auto stats = modality_statistics(data);
    write_modality_stats_csv(dir / "modality_stats.csv", stats);
    const bool tagged = std::any_of(stats.begin(), stats.end(),
                                    [](const ModalityStats& s) { return s.modality != Modality::unknown; });
    if (!tagged) {
        out << "no modality tags; experiments skipped\n";
    } else {
        const auto rows = modality_experiment(cfg, data, {kAllModalityModes.begin(), kAllModalityModes.end()},
                                              parse_seeds(seeds));
        write_modality_csv(dir / "modality.csv", rows);
        for (const auto& r : rows)
            out << to_string(r.mode) << " seed=" << r.seed << " mse=" << format_double(r.mse) << '\n';
    }
    write_run_json(dir, "split-modality", args, &cfg,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return ok;
}

int cmd_analyze(const Common& c, const std::string& checkpoint, const std::string& individuals,
                const std::vector<std::string>& args, std::ostream& out) {
    const auto start = std::chrono::steady_clock::now();
    LoadedCheckpoint ck = load_checkpoint(checkpoint);
    const ExperimentConfig& cfg = ck.state.config;
    const fs::path dir = prepare_out(c);
    const Dataset data = load_experiment_data(cfg);

    std::vector<Sample> all = data.train;
    all.insert(all.end(), data.validation.begin(), data.validation.end());
    std::pair<std::string, std::string> pair;
    if (!individuals.empty()) {
        const auto comma = individuals.find(',');
        if (comma == std::string::npos) throw UsageError("--individuals expects two ids separated by a comma");
        pair = {individuals.substr(0, comma), individuals.substr(comma + 1)};
    } else {
        std::set<std::string> ids;
        for (const Sample& s : all) ids.insert(s.individual_id());
        if (ids.size() < 2) throw std::runtime_error("analysis needs at least two individuals");
        pair = {*ids.begin(), *std::next(ids.begin())};
    }
    std::vector<Sample> chosen;
    for (const Sample& s : all)
        if (s.individual_id() == pair.first || s.individual_id() == pair.second) chosen.push_back(s);
    std::vector<double> labels;
    std::vector<std::string> ids;
    for (const Sample& s : chosen) {
        labels.push_back(s.label);
        ids.push_back(s.individual_id());
    }
    const FeatureTaps taps = tap_features(*ck.model, chosen);
    const CentroidReport pre = centroid_separation(taps.pre, labels, ids);
    const CentroidReport post = centroid_separation(taps.post, labels, ids);
    {
        std::ofstream f(dir / "centroids.csv");
        f << "tap,individual,bin,min_distance,nearest_bin,omitted\n";
        for (const auto& [tap, rep] : {std::pair{"pre", &pre}, std::pair{"post", &post}})
            for (const auto& e : rep->entries)
                f << tap << ',' << e.individual << ',' << to_string(e.bin) << ','
                  << (e.omitted ? std::string("") : format_double(e.min_distance)) << ','
                  << (e.nearest ? to_string(*e.nearest) : std::string("")) << ',' << (e.omitted ? 1 : 0) << '\n';
    }
    const Evaluation ev = evaluate_mse(*ck.model, data.validation, cfg.eval.clamp);
    const DensityTable dens = export_densities(ev.labels, ev.predictions, cfg.eval.density_bandwidth);
    write_density_csv(dir / "densities.csv", dens);
    write_density_svg(dir / "densities.svg", dens);
    json summary = {{"individuals", {pair.first, pair.second}},
                    {"pre_total", pre.total},
                    {"post_total", post.total},
                    {"difference", post.total - pre.total},
                    {"pre_centers", pre.included()},
                    {"post_centers", post.included()},
                    {"validation_mse", ev.mse},
                    {"prediction_peak", peak_height(dens.predictions)},
                    {"distance_space", "native feature space"}};
    write_json(dir / "analysis.json", summary);
    out << "centroid total pre=" << format_double(pre.total) << " post=" << format_double(post.total) << '\n';
    write_run_json(dir, "analyze", args, &cfg,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    return ok;
}

/// Re-dispatches the command recorded in a run.json with its config
/// snapshot, writing into a new output directory.
std::vector<std::string> replay_args(const fs::path& run_json, const std::string& out_dir) {
    std::ifstream f(run_json);
    if (!f) throw ConfigError("cannot open " + run_json.string());
    const json j = json::parse(f);
    std::vector<std::string> old = j.at("args").get<std::vector<std::string>>();
    const std::string verb = j.at("verb").get<std::string>();
    fs::create_directories(out_dir);
    std::vector<std::string> args{verb};
    if (j.contains("config") && verb != "eval" && verb != "analyze") {
        const fs::path cfg_path = fs::path(out_dir) / "replay.cfg";
        std::ofstream c(cfg_path);
        for (const auto& [k, v] : j.at("config").get<KeyValues>()) c << k << " = " << v << '\n';
        args.push_back("--config");
        args.push_back(cfg_path.string());
    }
    // Config-shaping flags are already folded into the snapshot.
    static const std::set<std::string> dropped = {"--config", "--out", "--set", "--seed"};
    for (std::size_t i = 1; i < old.size(); ++i) {
        if (dropped.contains(old[i])) {
            ++i;
            continue;
        }
        if (old[i].rfind("--config=", 0) == 0 || old[i].rfind("--out=", 0) == 0) continue;
        if ((verb == "eval" || verb == "analyze") && old[i] == "--config") continue;
        args.push_back(old[i]);
    }
    args.push_back("--out");
    args.push_back(out_dir);
    return args;
}

}  // namespace

int dispatch(const std::vector<std::string>& raw, std::ostream& out, std::ostream& err) {
    std::vector<std::string> args = raw;
    try {
        if (args.size() >= 1 && args[0] == "--replay") {
            if (args.size() != 4 || args[2] != "--out")
                return report(err, usage, "usage", "expected: --replay <run.json> --out <dir>");
            args = replay_args(args[1], args[3]);
        }
        if (args.empty() || args[0] == "--help" || args[0] == "-h") {
            out << "usage: cmis <verb> [options]\nverbs:";
            for (const auto& v : kVerbs) out << ' ' << v;
            out << "\n       cmis --replay <run.json> --out <dir>\nconfig keys:\n" << describe_config_keys();
            return args.empty() ? usage : ok;
        }
        const std::string verb = args[0];
        if (std::find(kVerbs.begin(), kVerbs.end(), verb) == kVerbs.end())
            return report(err, usage, "usage", "unknown verb '" + verb + "'");

        CLI::App app{"cmis " + verb};
        Common common;
        TrainOptions train;
        std::string checkpoint, axis = "components", seeds = "0", individuals;
        std::size_t jobs = 1;
        const bool needs_config = verb != "eval" && verb != "analyze" && verb != "train";
        add_common(app, common, needs_config);
        if (verb == "train") {
            app.add_option("--resume", train.resume, "checkpoint to continue from");
            app.add_flag("--dry-run", train.dry_run, "one batch per stage on a 10-sample stub");
        }
        if (verb == "eval" || verb == "analyze") app.add_option("--checkpoint", checkpoint, "checkpoint")->required();
        if (verb == "ablate") {
            app.add_option("--axis", axis, "components | translator | ida | neutral");
            app.add_option("--jobs", jobs, "parallel runs");
        }
        if (verb == "ablate" || verb == "split-modality") app.add_option("--seeds", seeds, "comma-separated seeds");
        if (verb == "analyze") app.add_option("--individuals", individuals, "two individual ids, comma-separated");

        std::vector<std::string> rest(args.begin() + 1, args.end());
        std::reverse(rest.begin(), rest.end());
        try {
            app.parse(rest);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return ok;
        } catch (const CLI::ParseError& e) {
            return report(err, usage, "usage", e.what());
        }
        if (verb == "train" && common.config.empty() && train.resume.empty())
            throw ConfigError("--config is required");

        if (verb == "synth") return cmd_synth(common, args, out);
        if (verb == "validate-data") return cmd_validate(common, args, out);
        if (verb == "train") return cmd_train(common, train, args, out);
        if (verb == "eval") return cmd_eval(common, checkpoint, args, out);
        if (verb == "ablate") return cmd_ablate(common, axis, seeds, jobs, args, out);
        if (verb == "split-modality") return cmd_split_modality(common, seeds, args, out);
        return cmd_analyze(common, checkpoint, individuals, args, out);
    } catch (const UsageError& e) {
        return report(err, usage, "usage", e.what());
    } catch (const ConfigError& e) {
        return report(err, bad_config, "config", e.what());
    } catch (const CheckpointError& e) {
        return report(err, runtime_failure, "checkpoint", e.what());
    } catch (const DataError& e) {
        return report(err, runtime_failure, "data", e.what());
    } catch (const std::exception& e) {
        return report(err, runtime_failure, "runtime", e.what());
    }
}

}  // namespace cmis::cli
