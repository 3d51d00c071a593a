#pragma once

// Stage orchestration over run directories: train -> record -> probe and
// train -> eval, plus cross-run report aggregation. Each stage leaves a
// completion marker carrying a hash of the manifest that produced it, so
// reruns are skipped when nothing changed and refused when something did.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coopnav/checkpoint.hpp"
#include "coopnav/evalharness.hpp"
#include "coopnav/maddpg.hpp"
#include "coopnav/probe.hpp"
#include "coopnav/recorder.hpp"

namespace coopnav {

/// Rerunning a stage over results produced by a different configuration.
struct ManifestMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Stage outputs present without a completion marker (interrupted run).
struct PartialOutputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PipelineConfig {
    TrainConfig train;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    int record_episodes = 4000;
    int eval_episodes = 4000;
    double coverage_radius = 0.3;

    void validate() const {
        train.validate();
        if (seeds.empty()) throw std::invalid_argument("config: seeds must not be empty");
        for (std::size_t i = 0; i < seeds.size(); ++i)
            for (std::size_t j = i + 1; j < seeds.size(); ++j)
                if (seeds[i] == seeds[j])
                    throw std::invalid_argument("config: duplicate seed");
        if (record_episodes <= 0)
            throw std::invalid_argument("config: record_episodes must be positive");
        if (eval_episodes <= 0)
            throw std::invalid_argument("config: eval_episodes must be positive");
        if (!(coverage_radius > 0.0))
            throw std::invalid_argument("config: coverage_radius must be positive");
    }
};

/// Flat key-value config: pipeline keys here, everything else is a TrainConfig
/// key (see train_config_from_json).
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: expected a json object");
    PipelineConfig cfg;
    nlohmann::json train_keys = nlohmann::json::object();
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "seeds") {
                cfg.seeds = value.get<std::vector<std::uint64_t>>();
            } else if (key == "record_episodes") {
                cfg.record_episodes = value.get<int>();
            } else if (key == "eval_episodes") {
                cfg.eval_episodes = value.get<int>();
            } else if (key == "coverage_radius") {
                cfg.coverage_radius = value.get<double>();
            } else {
                train_keys[key] = value;
            }
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument("config: bad value for key '" + key + "'");
        }
    }
    cfg.train = train_config_from_json(train_keys);
    cfg.validate();
    return cfg;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileMissingError("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("config: unparsable json: ") + e.what());
    }
    return pipeline_config_from_json(j);
}

/// One (scheme, seed) run with its fully resolved configuration.
struct RunManifest {
    PipelineConfig config;  // config.train.seed and .scheme are the run's own
    std::filesystem::path run_dir;

    std::string scheme() const { return to_string(config.train.scheme); }
    std::uint64_t seed() const { return config.train.seed; }
};

inline RunManifest make_manifest(const PipelineConfig& base, std::uint64_t seed,
                                 const std::filesystem::path& out_root) {
    RunManifest m;
    m.config = base;
    m.config.train.seed = seed;
    m.config.seeds = {seed};
    m.run_dir = out_root / to_string(base.train.scheme) / ("seed" + std::to_string(seed));
    return m;
}

/// Canonical manifest serialization; the hash of this json names the run's
/// semantic identity (the output path deliberately stays out of it).
inline nlohmann::json manifest_to_json(const RunManifest& m) {
    nlohmann::json j;
    j["scheme"] = m.scheme();
    j["seed"] = m.seed();
    j["train"] = train_config_to_json(m.config.train);
    j["record_episodes"] = m.config.record_episodes;
    j["eval_episodes"] = m.config.eval_episodes;
    j["coverage_radius"] = m.config.coverage_radius;
    return j;
}

inline std::string manifest_hash_hex(const RunManifest& m) {
    std::uint64_t h = fnv1a64(manifest_to_json(m).dump());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

enum class Stage { Train, Record, Probe, Eval };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Train: return "train";
        case Stage::Record: return "record";
        case Stage::Probe: return "probe";
        case Stage::Eval: return "eval";
    }
    throw std::logic_error("stage_name: bad stage");
}

inline std::filesystem::path stage_marker_path(const RunManifest& m, Stage s) {
    return m.run_dir / (std::string(stage_name(s)) + ".done");
}

inline std::vector<std::filesystem::path> stage_outputs(const RunManifest& m, Stage s) {
    switch (s) {
        case Stage::Train:
            return {m.run_dir / "checkpoint", m.run_dir / "learning_curve.tsv"};
        case Stage::Record:
            return {m.run_dir / "record.bin"};
        case Stage::Probe:
            return {m.run_dir / "probe_accuracy.tsv"};
        case Stage::Eval:
            return {m.run_dir / "preference.tsv", m.run_dir / "sheldon_grid.tsv",
                    m.run_dir / "eval_summary.json"};
    }
    throw std::logic_error("stage_outputs: bad stage");
}

/// Marker hash if the stage previously completed, else nullopt.
inline std::optional<std::string> read_marker_hash(const RunManifest& m, Stage s) {
    std::ifstream in(stage_marker_path(m, s));
    if (!in) return std::nullopt;
    nlohmann::json j;
    try {
        in >> j;
        return j.at("manifest_hash").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        return std::string();  // unreadable marker counts as a mismatch
    }
}

inline bool stage_complete(const RunManifest& m, Stage s) {
    auto h = read_marker_hash(m, s);
    return h.has_value() && *h == manifest_hash_hex(m);
}

inline void write_marker(const RunManifest& m, Stage s) {
    nlohmann::json j{{"stage", stage_name(s)},
                     {"scheme", m.scheme()},
                     {"seed", m.seed()},
                     {"manifest_hash", manifest_hash_hex(m)}};
    std::ofstream out(stage_marker_path(m, s), std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write_marker: cannot write " + stage_marker_path(m, s).string());
}

enum class StageOutcome { Ran, Skipped };

/// Shared stage protocol: skip when the marker matches, refuse a silent
/// overwrite when it does not, flag orphaned outputs, otherwise wipe the
/// stage's outputs, run the body, and drop the marker last.
template <class Body>
inline StageOutcome run_stage(const RunManifest& m, Stage s, bool force, Body&& body) {
    namespace fs = std::filesystem;
    const std::string name = stage_name(s);
    if (!force) {
        if (auto h = read_marker_hash(m, s)) {
            if (*h == manifest_hash_hex(m)) return StageOutcome::Skipped;
            throw ManifestMismatchError(name + ": " + m.run_dir.string() +
                                        " holds results from a different configuration"
                                        " (rerun with --force to replace them)");
        }
        for (const fs::path& p : stage_outputs(m, s))
            if (fs::exists(p))
                throw PartialOutputError(name + ": found " + p.string() +
                                         " without a completion marker; a previous run likely"
                                         " died mid-write (rerun with --force to rebuild)");
    }
    fs::create_directories(m.run_dir);
    fs::remove(stage_marker_path(m, s));
    for (const fs::path& p : stage_outputs(m, s)) fs::remove_all(p);
    body();
    write_marker(m, s);
    return StageOutcome::Ran;
}

inline std::vector<std::string> manifest_comments(const RunManifest& m) {
    return {"scheme " + m.scheme(), "seed " + std::to_string(m.seed()),
            "manifest_hash " + manifest_hash_hex(m)};
}

inline void write_learning_curve(const std::filesystem::path& path,
                                 const std::vector<double>& mean_step_reward,
                                 const std::vector<std::string>& comments) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("write_learning_curve: cannot open " + path.string());
    for (const std::string& c : comments) out << "# " << c << '\n';
    out << "episode\tmean_step_reward\n";
    char buf[32];
    for (std::size_t e = 0; e < mean_step_reward.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%.6f", mean_step_reward[e]);
        out << e << '\t' << buf << '\n';
    }
    if (!out) throw std::runtime_error("write_learning_curve: write failed");
}

/// Curve values in file order; comment lines are skipped.
inline std::vector<double> load_learning_curve(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileMissingError("load_learning_curve: cannot open " + path.string());
    std::vector<double> values;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {  // column header
            header_seen = true;
            continue;
        }
        std::istringstream row(line);
        long episode = 0;
        double reward = 0.0;
        if (!(row >> episode >> reward))
            throw FileCorruptError("learning curve: bad row '" + line + "'");
        values.push_back(reward);
    }
    return values;
}

inline StageOutcome run_train_stage(const RunManifest& m, bool force,
                                    const ProgressFn& progress = {}) {
    return run_stage(m, Stage::Train, force, [&] {
        TrainResult result = train(m.config.train, progress);
        save_agents(m.run_dir / "checkpoint", result.agents,
                    {{"manifest_hash", manifest_hash_hex(m)}});
        write_learning_curve(m.run_dir / "learning_curve.tsv", result.episode_mean_reward,
                             manifest_comments(m));
    });
}

inline StageOutcome run_record_stage(const RunManifest& m, bool force) {
    return run_stage(m, Stage::Record, force, [&] {
        TrainedAgents agents = load_agents(m.run_dir / "checkpoint");
        write_record_file(m.run_dir / "record.bin", agents, m.config.record_episodes, m.seed(),
                          {{"manifest_hash", manifest_hash_hex(m)}});
    });
}

inline StageOutcome run_probe_stage(const RunManifest& m, bool force) {
    return run_stage(m, Stage::Probe, force, [&] {
        RecordData records = load_record_file(m.run_dir / "record.bin");
        AccuracyGrid grid = accuracy_curves(records, m.seed());
        write_accuracy_tsv(m.run_dir / "probe_accuracy.tsv", grid, manifest_comments(m));
    });
}

inline StageOutcome run_eval_stage(const RunManifest& m, bool force) {
    return run_stage(m, Stage::Eval, force, [&] {
        TrainedAgents agents = load_agents(m.run_dir / "checkpoint");
        CoverageCriterion criterion{m.config.coverage_radius};
        PreferenceMatrix pref =
                preference_matrix(agents, m.seed(), m.config.eval_episodes, criterion);
        SheldonGrid grid = sheldon_grid(agents, m.seed(), m.config.eval_episodes, criterion);

        RunEval eval;
        eval.scheme = m.scheme();
        eval.seed = m.seed();
        eval.trio_success = pref.qualifying_fraction();
        eval.grid = grid;
        eval.preference = pref;

        {
            std::ofstream out(m.run_dir / "preference.tsv", std::ios::trunc);
            for (const std::string& c : manifest_comments(m)) out << "# " << c << '\n';
            write_preference_tsv(out, pref);
            if (!out) throw std::runtime_error("eval: cannot write preference.tsv");
        }
        {
            std::ofstream out(m.run_dir / "sheldon_grid.tsv", std::ios::trunc);
            for (const std::string& c : manifest_comments(m)) out << "# " << c << '\n';
            write_sheldon_tsv(out, grid);
            if (!out) throw std::runtime_error("eval: cannot write sheldon_grid.tsv");
        }
        nlohmann::json j = run_eval_to_json(eval);
        j["manifest_hash"] = manifest_hash_hex(m);
        std::ofstream out(m.run_dir / "eval_summary.json", std::ios::trunc);
        out << j.dump(2) << '\n';
        if (!out) throw std::runtime_error("eval: cannot write eval_summary.json");
    });
}

/// Output root resolution: explicit flag, then the environment, then ./runs.
inline std::filesystem::path resolve_out_root(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("COOPNAV_OUT_ROOT"); env && *env) return env;
    return "runs";
}

struct FoundRun {
    std::filesystem::path dir;
    RunEval eval;
    std::string manifest_hash;  // empty when the summary predates hashing
};

/// Completed evaluations under root/<scheme>/seed<k>. Runs without a matching
/// eval marker are skipped; schemes without any run surface via
/// SchemeReport::missing.
inline std::vector<FoundRun> find_completed_runs(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    std::vector<FoundRun> found;
    if (!fs::is_directory(root)) return found;
    std::vector<fs::path> scheme_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && entry.path().filename() != "report")
            scheme_dirs.push_back(entry.path());
    std::sort(scheme_dirs.begin(), scheme_dirs.end());
    for (const fs::path& scheme_dir : scheme_dirs) {
        std::vector<fs::path> run_dirs;
        for (const auto& entry : fs::directory_iterator(scheme_dir))
            if (entry.is_directory() &&
                entry.path().filename().string().rfind("seed", 0) == 0)
                run_dirs.push_back(entry.path());
        std::sort(run_dirs.begin(), run_dirs.end());
        for (const fs::path& run_dir : run_dirs) {
            if (!fs::exists(run_dir / "eval.done")) continue;
            FoundRun r;
            r.dir = run_dir;
            r.eval = load_run_eval(run_dir / "eval_summary.json");
            std::ifstream in(run_dir / "eval_summary.json");
            nlohmann::json j;
            in >> j;
            if (j.contains("manifest_hash")) r.manifest_hash = j["manifest_hash"].get<std::string>();
            found.push_back(std::move(r));
        }
    }
    return found;
}

/// Aggregates every completed run under `root` into root/report/: the scheme
/// summary table plus a per-run table with the grid extremes.
inline SchemeReport run_report(const std::filesystem::path& root) {
    namespace fs = std::filesystem;
    std::vector<FoundRun> runs = find_completed_runs(root);
    std::vector<RunEval> evals;
    for (const FoundRun& r : runs) evals.push_back(r.eval);
    SchemeReport report = scheme_report(evals);

    fs::create_directories(root / "report");
    {
        std::ofstream out(root / "report" / "scheme_summary.tsv", std::ios::trunc);
        for (const FoundRun& r : runs)
            out << "# run: " << r.eval.scheme << " seed " << r.eval.seed << " hash "
                << (r.manifest_hash.empty() ? "unknown" : r.manifest_hash) << " ("
                << r.dir.lexically_relative(root).generic_string() << ")\n";
        write_scheme_summary_tsv(out, report);
        if (!out) throw std::runtime_error("report: cannot write scheme_summary.tsv");
    }
    {
        std::ofstream out(root / "report" / "runs.tsv", std::ios::trunc);
        out << "# one row per completed run; sheldon_min/max/mean are over the 3x3 grid\n";
        out << "scheme\tseed\tmanifest_hash\ttrio_success\tsheldon_min\tsheldon_max\tsheldon_mean\n";
        char buf[128];
        for (const FoundRun& r : runs) {
            double mn = 1.0, mx = 0.0, mean = 0.0;
            for (const auto& row : r.eval.grid.success)
                for (double v : row) {
                    mn = std::min(mn, v);
                    mx = std::max(mx, v);
                    mean += v;
                }
            mean /= 9.0;
            std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f\t%.6f", r.eval.trio_success, mn, mx,
                          mean);
            out << r.eval.scheme << '\t' << r.eval.seed << '\t'
                << (r.manifest_hash.empty() ? "unknown" : r.manifest_hash) << '\t' << buf << '\n';
        }
        if (!out) throw std::runtime_error("report: cannot write runs.tsv");
    }
    return report;
}

}  // namespace coopnav
