#include "clqg/config.hpp"
#include "clqg/records.hpp"
#include "clqg/runner.hpp"

#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace clqg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("clqg_runner_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct Shell {
    int code;
    std::string out;
};

Shell shell(const std::string& args) {
    const std::string cmd = std::string(CLQG_CLI_PATH) + " " + args + " 2>/dev/null";
    std::array<char, 4096> buf{};
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (std::fgets(buf.data(), static_cast<int>(buf.size()), pipe)) out += buf.data();
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

ExperimentConfig small_config(const fs::path& out) {
    ExperimentConfig c = parse_config(R"(
# small pipeline
seed = 42
grid.nx = 32
ladder.depth = 5
replicas = 3
stages = field, measure, clock, lbm
measure.kinds = truncated, derivative
path.T = 0.01
lbm.T = 0.01
lbm.points = 10
estimators = spectrum, modulus, envelope, martingale, seneta_heyde
envelope.points = 200
modulus.points = 100
)");
    c.output = out.string();
    return c;
}

}  // namespace

TEST_CASE("key-value parsing") {
    const auto kv = parse_key_values("a = 1\n# comment\n  b=two words  # trailing\n\n");
    CHECK(kv.values.at("a") == "1");
    CHECK(kv.values.at("b") == "two words");
    CHECK(kv.lines.at("b") == 3);
    CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_key_values("just words\n"), ConfigError);
}

TEST_CASE("config validation names the offending key") {
    auto message = [](const std::string& text) {
        try {
            parse_config(text).validate();
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("grid.nx = 64\n").find("seed") != std::string::npos);
    CHECK(message("seed = 1\ngrid.nx = 64\nladder.depth = 7\n").find("ladder.depth") != std::string::npos);
    CHECK(message("seed = 1\ngrid.nx = 64\nladder.depth = 6\npath.dt = 0.001\n").find("path.dt") != std::string::npos);
    CHECK(message("seed = 1\nkernel.family = gff\ngrid.periodic = true\n").find("grid.periodic") != std::string::npos);
    CHECK(message("seed = 1\nstages = field, paint\n").find("stages") != std::string::npos);
    const std::string unknown = message("seed = 1\nno.such.key = 3\n");
    CHECK(unknown.find("no.such.key") != std::string::npos);
    CHECK(unknown.find("line 2") != std::string::npos);
    CHECK(message("seed = 1\ngrid.nx = many\n").find("grid.nx") != std::string::npos);
    CHECK(message("seed = 1\n").empty());
}

TEST_CASE("canonical config and hash") {
    auto a = parse_config("seed = 1\ngrid.nx = 64\nladder.depth = 6\n");
    auto b = parse_config("ladder.depth = 6\n\ngrid.nx = 64\nseed = 1\nthreads = 8\n");
    CHECK(canonical_config(a) == canonical_config(b));
    CHECK(config_hash(a) == config_hash(b));
    set_config_value(b, "seed", "2");
    CHECK(config_hash(a) != config_hash(b));
    // every schema key appears exactly once
    const std::string canon = canonical_config(a);
    for (const auto& k : config_schema()) {
        if (k.key == "threads" || k.key == "output") continue;
        const bool present = canon.find("\n" + k.key + "=") != std::string::npos || canon.rfind(k.key + "=", 0) == 0;
        CHECK_MESSAGE(present, k.key);
    }
    CHECK(parse_config(canon).seed == 1);
    CHECK(canonical_config(parse_config(canon)) == canon);
}

TEST_CASE("empty estimator list writes field and measure outputs only") {
    const auto dir = scratch("plain");
    ExperimentConfig c = parse_config("seed = 3\ngrid.nx = 16\nladder.depth = 4\nreplicas = 2\n");
    c.output = (dir / "out").string();
    RunOptions o;
    const auto man = run(c, o);
    std::vector<std::string> files;
    for (const auto& [k, v] : man.outputs) files.push_back(k);
    CHECK(files == std::vector<std::string>{"config.txt", "fields.csv", "measures.csv", "measures/truncated_r0.csv"});
    CHECK(fs::exists(dir / "out" / "manifest.json"));
    CHECK_FALSE(fs::exists(dir / "out" / "results.jsonl"));
    CHECK(man.task_seeds.size() == 2);
}

TEST_CASE("determinism across reruns and thread counts") {
    const auto dir = scratch("determinism");
    auto c1 = small_config(dir / "t1");
    c1.threads = 1;
    auto c8 = small_config(dir / "t8");
    c8.threads = 8;
    const auto m1 = run(c1, RunOptions{});
    const auto m8 = run(c8, RunOptions{});
    CHECK(m1.config_hash == m8.config_hash);
    CHECK(m1.outputs == m8.outputs);
    CHECK(m1.manifest_hash == m8.manifest_hash);
    for (const auto& [file, hash] : m1.outputs) CHECK_MESSAGE(slurp(dir / "t1" / file) == slurp(dir / "t8" / file), file);
    CHECK(m1.outputs.count("results.jsonl") == 1);
    CHECK(m1.outputs.count("lbm.jsonl") == 1);
    const auto again = run(c1, RunOptions{});
    CHECK(again.manifest_hash == m1.manifest_hash);

    const auto records = collect_records(dir / "t1");
    REQUIRE(records.size() == 5);
    CHECK(records[0].name == "spectrum");
}

TEST_CASE("field cache") {
    const auto dir = scratch("cache");
    ExperimentConfig c = parse_config("seed = 5\ngrid.nx = 16\nladder.depth = 4\nreplicas = 2\n");
    c.output = (dir / "out").string();
    RunOptions o;
    o.cache_dir = dir / "cache";
    const auto first = run(c, o);
    CHECK(first.cache_hits == 0);
    const auto second = run(c, o);
    CHECK(second.cache_hits == 4);  // two fields and two measures
    CHECK(second.manifest_hash == first.manifest_hash);
    const auto uncached = run(c, RunOptions{});
    CHECK(uncached.manifest_hash == first.manifest_hash);

    // a config change upstream of the field invalidates the entry
    CHECK(field_cache_key(c, 0) != field_cache_key(c, 1));
    auto d = c;
    d.kernel_mass = 2.0;
    CHECK(field_cache_key(c, 0) != field_cache_key(d, 0));
    auto e = c;
    e.beta = 3.0;
    CHECK(field_cache_key(c, 0) == field_cache_key(e, 0));

    for (const auto& entry : fs::directory_iterator(o.cache_dir)) {
        std::fstream fs(entry.path(), std::ios::in | std::ios::out | std::ios::binary);
        fs.seekp(40);
        fs.put('\x55');
    }
    CHECK_THROWS_AS(run(c, o), ChecksumError);
}

TEST_CASE("command line") {
    const auto dir = scratch("cli");
    SUBCASE("spectrum record") {
        const auto r = shell("spectrum --seed 1 --set grid.nx=32 --set ladder.depth=5 -n 2 --q 0.5 -o " +
                             (dir / "spec").string());
        CHECK(r.code == 0);
        const auto rec = record_from_json(Json::parse(r.out));
        CHECK(rec.name == "spectrum");
        CHECK(rec.target == Json::array({1.5}));
    }
    SUBCASE("assumption diagnostics") {
        const auto r = shell("field --check-assumptions --seed 1 --set grid.nx=32 --set ladder.depth=4");
        CHECK(r.code == 0);
        CHECK(r.out.rfind("assumption,statistic,tolerance,verdict\n", 0) == 0);
        CHECK(r.out.find("A.1") != std::string::npos);
    }
    SUBCASE("report on an empty directory") {
        fs::create_directories(dir / "empty");
        const auto r = shell("report " + (dir / "empty").string());
        CHECK(r.code == 0);
        CHECK(r.out == verdict_table({}));
    }
    SUBCASE("exit codes") {
        CHECK(shell("measure --no-such-flag").code == 2);
        CHECK(shell("measure").code == 2);  // no seed
        CHECK(shell("measure --seed 1 --set grid.nx=64 --set ladder.depth=9").code == 2);
        const int capped = shell("lbm --seed 1 --set grid.nx=16 --set ladder.depth=4 --set grid.periodic=true "
                                 "--set path.horizon_cap=1 --T 1000 -o " + (dir / "cap").string())
                               .code;
        CHECK(capped == 4);
        CHECK(shell("--version").code == 0);
    }
    SUBCASE("config file with overrides") {
        std::ofstream(dir / "c.cfg") << "seed = 9\ngrid.nx = 16\nladder.depth = 4\nstages = field\n";
        const auto r = shell("run -c " + (dir / "c.cfg").string() + " --set replicas=2 -o " + (dir / "run").string());
        CHECK(r.code == 0);
        CHECK(fs::exists(dir / "run" / "fields.csv"));
        CHECK(slurp(dir / "run" / "config.txt").find("replicas=2") != std::string::npos);
    }
}
