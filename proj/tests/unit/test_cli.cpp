#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "ie/cli/manifest.hpp"
#include "ie/io/repr1.hpp"
#include "ie/pipeline/report.hpp"

using namespace ie;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("ie_cli_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " " + IE_CLI_PATH + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

RunManifest manifest(const fs::path& p) { return Json::parse(read_text_file(p)).get<RunManifest>(); }

} // namespace

TEST(Cli, UsageErrorsExit64) {
    EXPECT_EQ(run("oracle --no-such-flag"), 64);
    EXPECT_EQ(run(""), 64);
    EXPECT_EQ(run("frobnicate"), 64);
    EXPECT_EQ(run("--help"), 0);
}

TEST(Cli, OracleTableAndSidecarManifest) {
    const auto dir = temp_dir("oracle");
    ASSERT_EQ(run("oracle --gamma 0.9 --T 3 --out " + (dir / "tab.csv").string()), 0);
    std::ifstream in(dir / "tab.csv");
    const auto t = read_csv(in);
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_NEAR(std::stod(t.rows[0][t.column("macro_bits")]), 0.531, 5e-4);
    EXPECT_EQ(std::stod(t.rows[0][t.column("micro_bits")]), 0.0);
    const auto m = manifest(dir / "tab.csv.manifest.json");
    EXPECT_EQ(m.subcommand, "oracle");
    EXPECT_EQ(m.outputs.at("tab.csv"), file_checksum(dir / "tab.csv"));
    fs::remove_all(dir);
}

TEST(Cli, ValidateExitCodes) {
    const auto dir = temp_dir("validate");
    RepresentationStore s({4, 2, 2, 3}, StoreMode::macro, "x");
    for (std::size_t l = 0; l < 2; ++l)
        for (std::size_t t = 0; t < 2; ++t) s.set_slice(l, t, Slice::Ones(4, 3));
    write_store(s, dir / "ok.repr1");
    EXPECT_EQ(run("validate --store " + (dir / "ok.repr1").string()), 0);
    fs::copy_file(dir / "ok.repr1", dir / "bad.repr1");
    {
        // The last four bytes are the final float of slice (1, 1).
        std::fstream f(dir / "bad.repr1", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-4, std::ios::end);
        const unsigned char inf_le[4] = {0x00, 0x00, 0x80, 0x7f};
        f.write(reinterpret_cast<const char*>(inf_le), 4);
    }
    EXPECT_EQ(run("validate --store " + (dir / "bad.repr1").string()), 2);
    EXPECT_EQ(run("validate --store " + (dir / "missing.repr1").string()), 2);
    {
        std::ofstream f(dir / "ragged.txt");
        f << "a b c\na b\n";
    }
    EXPECT_EQ(run("validate --corpus " + (dir / "ragged.txt").string()), 2);
    fs::remove_all(dir);
}

TEST(Cli, ConfigFileWithFlagOverride) {
    const auto dir = temp_dir("config");
    {
        std::ofstream f(dir / "cfg.json");
        f << R"({"gamma": [0.5, 0.7], "T": 2, "out": ")" << (dir / "a.csv").string() << "\"}";
    }
    ASSERT_EQ(run("oracle --config " + (dir / "cfg.json").string() + " --T 4"), 0);
    const auto m = manifest(dir / "a.csv.manifest.json");
    EXPECT_EQ(m.config.at("T"), 4);
    EXPECT_EQ(m.config.at("gamma").size(), 2u);
    EXPECT_EQ(run("oracle --config " + (dir / "nope.json").string()), 2);
    fs::remove_all(dir);
}

TEST(Cli, RerunsWithEqualManifestsGiveEqualOutputs) {
    const auto dir = temp_dir("rerun");
    const std::string corpus = (dir / "c.txt").string();
    ASSERT_EQ(run("synth --domain animal --shots 2 --subsample 64 --seed 3 --out " + corpus), 0);
    const std::string ex = "extract --corpus " + corpus + " --width 8 --blocks 3 --seed 2 --out ";
    ASSERT_EQ(run(ex + (dir / "x").string()), 0);
    const std::string pipeline = "ie --macro " + (dir / "x/macro.repr1").string() + " --micro " +
                                 (dir / "x/micro.repr1").string() +
                                 " --epochs 6 --critic-depth 3 --lr-start 3e-3 --lr-end 1e-6 --bootstrap 2 --out ";
    ASSERT_EQ(run(pipeline + (dir / "r1").string(), "IE_WORKERS=1"), 0);
    ASSERT_EQ(run(pipeline + (dir / "r2").string() + " --workers 3"), 0);
    const auto a = manifest(dir / "r1/manifest.json");
    auto b = manifest(dir / "r2/manifest.json");
    EXPECT_EQ(a.runtime.at("workers"), 1);
    EXPECT_EQ(b.runtime.at("workers"), 3);
    // The configs differ only in the output path.
    b.config["out"] = a.config["out"];
    EXPECT_TRUE(a.same_run(b));
    EXPECT_EQ(a.outputs.at("mi_matrix.csv"), b.outputs.at("mi_matrix.csv"));
    EXPECT_EQ(a.outputs.at("ie_profile.csv"), b.outputs.at("ie_profile.csv"));

    ASSERT_EQ(run("report --profile Human+Toy=" + (dir / "r1").string() + " --out " + (dir / "rep").string()), 0);
    EXPECT_EQ(read_text_file(dir / "rep/compare.csv").substr(0, 22), "Text+Estimator,token0,");
    // A tampered profile no longer matches its estimates.
    {
        std::ofstream f(dir / "r1/ie_profile.csv", std::ios::app);
        f << "99,1\n";
    }
    EXPECT_EQ(run("report --profile Human+Toy=" + (dir / "r1").string() + " --out " + (dir / "rep2").string()), 2);
    fs::remove_all(dir);
}
