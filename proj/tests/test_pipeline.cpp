#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "coopnav/pipeline.hpp"

using namespace coopnav;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(COOPNAV_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -2;
}

fs::path fresh_root(const std::string& name) {
    fs::path root = fs::temp_directory_path() / ("coopnav_pipeline_" + name);
    fs::remove_all(root);
    fs::create_directories(root);
    return root;
}

fs::path write_smoke_config(const fs::path& dir, const std::string& extra = "") {
    fs::path path = dir / "config.json";
    std::ofstream out(path, std::ios::trunc);
    out << "{\n"
           "  \"episodes\": 60,\n"
           "  \"hidden1\": 8,\n"
           "  \"hidden2\": 8,\n"
           "  \"batch_size\": 32,\n"
           "  \"warmup_transitions\": 32,\n"
           "  \"update_interval_steps\": 50,\n"
           "  \"buffer_capacity\": 4096,\n"
           "  \"seeds\": [0],\n"
           "  \"record_episodes\": 20,\n"
           "  \"eval_episodes\": 10"
        << (extra.empty() ? "" : ",\n  " + extra) << "\n}\n";
    return path;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_CASE("full pipeline smoke run", "[pipeline]") {
    fs::path root = fresh_root("smoke");
    fs::path cfg = write_smoke_config(root);
    std::string common = "--config " + cfg.string() + " --out " + root.string();
    fs::path run_dir = root / "vanilla" / "seed0";

    REQUIRE(run_cli("train " + common) == 0);
    CHECK(fs::exists(run_dir / "train.done"));
    CHECK(fs::exists(run_dir / "checkpoint" / "metadata.json"));
    std::vector<double> curve = load_learning_curve(run_dir / "learning_curve.tsv");
    CHECK(curve.size() == 60);
    CHECK(slurp(run_dir / "checkpoint" / "metadata.json").find("manifest_hash") !=
          std::string::npos);

    REQUIRE(run_cli("record " + common) == 0);
    RecordData records = load_record_file(run_dir / "record.bin");
    CHECK(records.episodes.size() == 20);
    CHECK(records.header.hidden1 == 8);
    CHECK(slurp(run_dir / "record.bin").find("manifest_hash") != std::string::npos);

    REQUIRE(run_cli("probe " + common) == 0);
    std::string probe_tsv = slurp(run_dir / "probe_accuracy.tsv");
    CHECK(probe_tsv.find("predictor\ttarget\tsource\ttimestep\ttest_accuracy") !=
          std::string::npos);
    CHECK(probe_tsv.find("manifest_hash") != std::string::npos);
    int data_rows = 0;
    {
        std::istringstream lines(probe_tsv);
        std::string line;
        while (std::getline(lines, line))
            if (!line.empty() && line[0] != '#' && line[0] != 'p') ++data_rows;
    }
    CHECK(data_rows == 900);

    REQUIRE(run_cli("eval-sheldon " + common) == 0);
    RunEval eval = load_run_eval(run_dir / "eval_summary.json");
    CHECK(eval.scheme == "vanilla");
    CHECK(eval.preference.total_episodes == 10);
    CHECK(slurp(run_dir / "preference.tsv").find("manifest_hash") != std::string::npos);
    CHECK(slurp(run_dir / "sheldon_grid.tsv").find("manifest_hash") != std::string::npos);

    REQUIRE(run_cli("report --out " + root.string()) == 0);
    std::string summary = slurp(root / "report" / "scheme_summary.tsv");
    CHECK(summary.find("vanilla\ttrained\t") != std::string::npos);
    CHECK(summary.find("vanilla\tsheldon\t") != std::string::npos);
    CHECK(summary.find("# missing: shuffle") != std::string::npos);
    CHECK(slurp(root / "report" / "runs.tsv").find("vanilla\t0\t") != std::string::npos);

    SECTION("reruns skip completed stages and leave bytes untouched") {
        std::string before = slurp(run_dir / "record.bin");
        REQUIRE(run_cli("record " + common) == 0);
        REQUIRE(run_cli("train " + common) == 0);
        CHECK(slurp(run_dir / "record.bin") == before);
    }
    fs::remove_all(root);
}

TEST_CASE("stage ordering is guarded", "[pipeline]") {
    fs::path root = fresh_root("ordering");
    fs::path cfg = write_smoke_config(root);
    std::string common = "--config " + cfg.string() + " --out " + root.string();

    CHECK(run_cli("record " + common) == 3);
    CHECK(run_cli("probe " + common) == 3);
    CHECK(run_cli("eval-sheldon " + common) == 3);
    CHECK(run_cli("report --out " + root.string()) == 0);  // missing runs reported, not fatal
    fs::remove_all(root);
}

TEST_CASE("identical manifests reproduce identical bytes", "[pipeline]") {
    fs::path root_a = fresh_root("bytes_a");
    fs::path root_b = fresh_root("bytes_b");
    fs::path cfg = write_smoke_config(root_a);
    for (const fs::path& root : {root_a, root_b}) {
        std::string common = "--config " + cfg.string() + " --out " + root.string();
        REQUIRE(run_cli("train " + common) == 0);
        REQUIRE(run_cli("record " + common) == 0);
    }
    fs::path rel_record = fs::path("vanilla") / "seed0" / "record.bin";
    fs::path rel_actor = fs::path("vanilla") / "seed0" / "checkpoint" / "actor_s0.bin";
    CHECK(slurp(root_a / rel_record) == slurp(root_b / rel_record));
    CHECK(slurp(root_a / rel_actor) == slurp(root_b / rel_actor));
    fs::remove_all(root_a);
    fs::remove_all(root_b);
}

TEST_CASE("configuration errors exit with code 2", "[pipeline]") {
    fs::path root = fresh_root("badcfg");

    fs::path unknown = root / "unknown.json";
    std::ofstream(unknown) << "{\"episodes\": 10, \"typo_key\": 1}\n";
    CHECK(run_cli("train --config " + unknown.string() + " --out " + root.string()) == 2);

    fs::path garbled = root / "garbled.json";
    std::ofstream(garbled) << "{not json\n";
    CHECK(run_cli("train --config " + garbled.string() + " --out " + root.string()) == 2);

    fs::path good = write_smoke_config(root);
    CHECK(run_cli("train --config " + good.string() + " --episodes 0 --out " + root.string()) == 2);
    CHECK(run_cli("train --scheme nonsense --out " + root.string()) == 2);
    CHECK(run_cli("train --config " + (root / "absent.json").string() + " --out " +
                  root.string()) == 3);
    fs::remove_all(root);
}

TEST_CASE("changed manifests are refused without force", "[pipeline]") {
    fs::path root = fresh_root("mismatch");
    fs::path cfg = write_smoke_config(root);
    std::string common = "--config " + cfg.string() + " --out " + root.string();

    REQUIRE(run_cli("train " + common) == 0);
    CHECK(run_cli("train " + common + " --episodes 80") == 2);
    CHECK(run_cli("train " + common + " --episodes 80 --force") == 0);
    std::vector<double> curve =
            load_learning_curve(root / "vanilla" / "seed0" / "learning_curve.tsv");
    CHECK(curve.size() == 80);
    fs::remove_all(root);
}

TEST_CASE("partial outputs are flagged", "[pipeline]") {
    fs::path root = fresh_root("partial");
    fs::path cfg = write_smoke_config(root);
    std::string common = "--config " + cfg.string() + " --out " + root.string();

    REQUIRE(run_cli("train " + common) == 0);
    std::ofstream(root / "vanilla" / "seed0" / "record.bin") << "stub";
    CHECK(run_cli("record " + common) == 4);
    CHECK(run_cli("record " + common + " --force") == 0);
    CHECK(load_record_file(root / "vanilla" / "seed0" / "record.bin").episodes.size() == 20);
    fs::remove_all(root);
}

TEST_CASE("environment variable provides the default output root", "[pipeline]") {
    fs::path root = fresh_root("envroot");
    fs::path cfg = write_smoke_config(root);
    fs::path env_root = root / "from_env";
    setenv("COOPNAV_OUT_ROOT", env_root.string().c_str(), 1);
    int rc = run_cli("train --config " + cfg.string());
    unsetenv("COOPNAV_OUT_ROOT");
    REQUIRE(rc == 0);
    CHECK(fs::exists(env_root / "vanilla" / "seed0" / "train.done"));
    fs::remove_all(root);
}

TEST_CASE("scheme and seed flags select the run directory", "[pipeline]") {
    fs::path root = fresh_root("flags");
    fs::path cfg = write_smoke_config(root);
    std::string common = "--config " + cfg.string() + " --out " + root.string();
    REQUIRE(run_cli("train " + common + " --scheme shuffle --seed 3") == 0);
    CHECK(fs::exists(root / "shuffle" / "seed3" / "train.done"));
    CHECK_FALSE(fs::exists(root / "vanilla"));

    TrainedAgents agents = load_agents(root / "shuffle" / "seed3" / "checkpoint");
    CHECK(agents.config.scheme.variant == SchemeVariant::Shuffle);
    CHECK(agents.config.seed == 3);
    fs::remove_all(root);
}
