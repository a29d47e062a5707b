#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() / ("automixer_cli_" + std::to_string(::getpid()) + "_" +
                                             ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }

    Result run(const std::string& args) const {
        const auto out = root_ / "stdout.txt", err = root_ / "stderr.txt";
        const std::string cmd = std::string("\"") + AUTOMIXER_CLI + "\" " + args + " > \"" + out.string() +
                                "\" 2> \"" + err.string() + "\"";
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
    }

    // Small but complete run settings shared by the pipeline tests.
    std::string small(const fs::path& out) const {
        return "--config \"" + (fs::path(AUTOMIXER_SOURCE_DIR) / "configs" / "default.ini").string() +
               "\" --out \"" + out.string() +
               "\" --set synth.length=600 --set synth.noise_events=4 --set model.nl=1"
               " --set train.epochs_max=2 --set train.pretrain_epochs_max=2 --set train.b=32";
    }

    fs::path root_;
};

}  // namespace

TEST_F(CliTest, UnknownCommandIsAUsageError) {
    const auto r = run("frobnicate");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("error kind=usage exit=2"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("frobnicate"), std::string::npos);
    EXPECT_NE(r.err.find("generate"), std::string::npos) << "usage text lists the commands";
}

TEST_F(CliTest, MissingConfigNamesThePath) {
    const auto r = run("pretrain --config /no/such/file.ini --out \"" + (root_ / "o").string() + "\"");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("/no/such/file.ini"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("kind=config"), std::string::npos) << r.err;
}

TEST_F(CliTest, UnknownKeyAndMissingDataExitCodes) {
    EXPECT_EQ(run("generate --set model.bogus=1 --out \"" + (root_ / "o").string() + "\"").code, 2);
    const auto r = run("pretrain --out \"" + (root_ / "empty").string() + "\"");
    EXPECT_EQ(r.code, 3) << r.err;
    EXPECT_NE(r.err.find("kind=data"), std::string::npos) << r.err;
}

TEST_F(CliTest, MalformedDataIsExitThree) {
    const auto out = root_ / "bad";
    ASSERT_EQ(run("generate " + small(out)).code, 0);
    std::ofstream(out / "data" / "series.csv", std::ios::app) << "not-a-time,1,2\n";
    const auto r = run("pretrain " + small(out));
    EXPECT_EQ(r.code, 3) << r.err;
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << "one machine-parsable line";
}

TEST_F(CliTest, PipelineWritesArtifactsAndManifestReplayIsBitIdentical) {
    const auto out = root_ / "run";
    for (const char* cmd : {"generate", "pretrain", "finetune", "evaluate", "report"}) {
        const auto r = run(std::string(cmd) + " " + small(out));
        ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
        ASSERT_TRUE(fs::exists(out / cmd / "manifest.json")) << cmd;
        ASSERT_TRUE(fs::exists(out / cmd / "log.jsonl")) << cmd;
    }
    EXPECT_TRUE(fs::exists(out / "report" / "report.json"));
    EXPECT_TRUE(fs::exists(out / "report" / "report.html"));

    const auto manifest = nlohmann::json::parse(slurp(out / "finetune" / "manifest.json"));
    EXPECT_EQ(manifest["format"], "automixer-manifest");
    EXPECT_EQ(manifest["command"], "finetune");
    ASSERT_FALSE(manifest["outputs"].empty());
    for (const auto& o : manifest["outputs"]) EXPECT_EQ(o["sha256"].get<std::string>().size(), 64u);

    // progress lines are JSON
    const auto log = slurp(out / "finetune" / "log.jsonl");
    std::istringstream lines(log);
    std::string line;
    std::size_t epochs = 0;
    while (std::getline(lines, line)) epochs += nlohmann::json::parse(line)["event"] == "epoch";
    EXPECT_EQ(epochs, 2u);

    const auto metrics = slurp(out / "evaluate" / "metrics.json");
    const auto report = slurp(out / "report" / "report.json");
    fs::copy(out / "finetune" / "manifest.json", root_ / "replay.json");
    const auto replay = run("finetune --config \"" + (root_ / "replay.json").string() + "\" --out \"" +
                            out.string() + "\"");
    ASSERT_EQ(replay.code, 0) << replay.err;
    EXPECT_EQ(slurp(out / "finetune" / "manifest.json"), slurp(root_ / "replay.json"));
    ASSERT_EQ(run("evaluate " + small(out)).code, 0);
    ASSERT_EQ(run("report " + small(out)).code, 0);
    EXPECT_EQ(slurp(out / "evaluate" / "metrics.json"), metrics);
    EXPECT_EQ(slurp(out / "report" / "report.json"), report);
}

TEST_F(CliTest, BenchmarkWritesTableAndCells) {
    const auto out = root_ / "bench";
    ASSERT_EQ(run("generate " + small(out)).code, 0);
    const auto r = run("benchmark " + small(out) +
                       " --set \"bench.variants=AutoMixer GRU,Persistence\" --set bench.seeds=0");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto table = slurp(out / "benchmark" / "table.txt");
    EXPECT_NE(table.find("AutoMixer GRU"), std::string::npos);
    EXPECT_NE(table.find("Persistence"), std::string::npos);
    std::istringstream lines(slurp(out / "benchmark" / "results.jsonl"));
    std::string line;
    std::size_t records = 0;
    while (std::getline(lines, line)) {
        EXPECT_TRUE(nlohmann::json::accept(line)) << line;
        ++records;
    }
    EXPECT_EQ(records, 4u);  // two cells, two rows
}
