// Command line front end for the cooperative-navigation laboratory.
//
// Subcommands mirror the pipeline stages (train, record, probe, eval-sheldon)
// plus cross-run aggregation (report). Each stage owns one run directory per
// (scheme, seed) under the output root and refuses to overwrite results
// unless --force is given.
//
// Exit codes: 0 success, 1 unexpected error, 2 usage or configuration error,
// 3 missing prerequisite artifact, 4 partial or corrupt artifact.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coopnav/pipeline.hpp"

namespace {

using namespace coopnav;

struct CliOptions {
    std::string config_path;
    std::string scheme;
    std::optional<std::uint64_t> seed;
    std::optional<long> episodes;
    std::string out_root;
    bool force = false;
};

void add_common_options(CLI::App* cmd, CliOptions& opt, bool with_run_selection) {
    cmd->add_option("--config", opt.config_path, "Flat json config file");
    if (with_run_selection) {
        cmd->add_option("--scheme", opt.scheme, "Training scheme")
                ->check(CLI::IsMember({"vanilla", "shuffle", "shared", "ensemble"}));
        cmd->add_option("--seed", opt.seed, "Run only this seed instead of the config's list");
        cmd->add_option("--episodes", opt.episodes, "Training episode count override");
    }
    cmd->add_option("--out", opt.out_root,
                    "Output root (default: $COOPNAV_OUT_ROOT, then ./runs)");
    cmd->add_flag("--force", opt.force, "Recompute even over existing results");
}

PipelineConfig resolve_config(const CliOptions& opt) {
    PipelineConfig cfg;
    if (!opt.config_path.empty()) cfg = load_pipeline_config(opt.config_path);
    if (!opt.scheme.empty()) cfg.train.scheme.variant = scheme_from_string(opt.scheme).variant;
    if (opt.episodes) cfg.train.episodes = *opt.episodes;
    if (opt.seed) cfg.seeds = {*opt.seed};
    cfg.validate();
    return cfg;
}

const char* outcome_word(StageOutcome o) {
    return o == StageOutcome::Ran ? "done" : "up to date";
}

int run_runs_command(const CliOptions& opt, Stage stage) {
    PipelineConfig cfg = resolve_config(opt);
    std::filesystem::path root = resolve_out_root(opt.out_root);
    for (std::uint64_t seed : cfg.seeds) {
        RunManifest m = make_manifest(cfg, seed, root);
        StageOutcome outcome{};
        switch (stage) {
            case Stage::Train: {
                long every = std::max(1L, m.config.train.episodes / 40);
                ProgressFn progress = [&](long episode, double reward) {
                    if (episode % every == every - 1)
                        std::printf("  episode %ld  mean step reward %.4f\n", episode + 1, reward);
                };
                outcome = run_train_stage(m, opt.force, progress);
                break;
            }
            case Stage::Record:
                outcome = run_record_stage(m, opt.force);
                break;
            case Stage::Probe:
                outcome = run_probe_stage(m, opt.force);
                break;
            case Stage::Eval:
                outcome = run_eval_stage(m, opt.force);
                break;
        }
        std::printf("%s %s seed %llu: %s (manifest %s)\n", stage_name(stage), m.scheme().c_str(),
                    static_cast<unsigned long long>(seed), outcome_word(outcome),
                    manifest_hash_hex(m).c_str());
    }
    return 0;
}

int run_report_command(const CliOptions& opt) {
    std::filesystem::path root = resolve_out_root(opt.out_root);
    SchemeReport report = run_report(root);
    for (const SchemeStats& s : report.stats)
        std::printf("%s: %d run(s), trio %.3f +- %.3f, sheldon %.3f +- %.3f\n", s.scheme.c_str(),
                    s.runs, s.trio_mean, s.trio_std, s.sheldon_mean, s.sheldon_std);
    for (const std::string& s : report.missing)
        std::printf("missing: %s (no completed runs)\n", s.c_str());
    std::printf("report written to %s\n", (root / "report").string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    // Threaded BLAS would make batched updates depend on the scheduler; one
    // thread keeps every artifact bit-reproducible.
    setenv("OPENBLAS_NUM_THREADS", "1", 1);

    CLI::App app{"Cooperative navigation: MADDPG training, intention probing,"
                 " and scripted-agent evaluation"};
    app.require_subcommand(1);

    CliOptions train_opt, record_opt, probe_opt, eval_opt, report_opt;
    CLI::App* cmd_train = app.add_subcommand("train", "Train agents and write checkpoints");
    add_common_options(cmd_train, train_opt, true);
    CLI::App* cmd_record =
            app.add_subcommand("record", "Roll out trained agents and record activations");
    add_common_options(cmd_record, record_opt, true);
    CLI::App* cmd_probe =
            app.add_subcommand("probe", "Fit linear intention probes on recordings");
    add_common_options(cmd_probe, probe_opt, true);
    CLI::App* cmd_eval = app.add_subcommand(
            "eval-sheldon", "Preference matrix and scripted-teammate generalization grid");
    add_common_options(cmd_eval, eval_opt, true);
    CLI::App* cmd_report =
            app.add_subcommand("report", "Aggregate completed runs into summary tables");
    add_common_options(cmd_report, report_opt, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (cmd_train->parsed()) return run_runs_command(train_opt, Stage::Train);
        if (cmd_record->parsed()) return run_runs_command(record_opt, Stage::Record);
        if (cmd_probe->parsed()) return run_runs_command(probe_opt, Stage::Probe);
        if (cmd_eval->parsed()) return run_runs_command(eval_opt, Stage::Eval);
        if (cmd_report->parsed()) return run_report_command(report_opt);
        std::fprintf(stderr, "no subcommand\n");
        return 2;
    } catch (const ManifestMismatchError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const FileMissingError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        std::fprintf(stderr, "hint: run the prerequisite stage first (train -> record -> probe,"
                             " train -> eval-sheldon)\n");
        return 3;
    } catch (const PartialOutputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const FileFormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
