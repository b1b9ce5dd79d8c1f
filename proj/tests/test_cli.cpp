#include "opmod/suite.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using opmod::json;

namespace {

const std::string kCli = OPMOD_CLI_PATH;
const std::string kData = OPMOD_DATA_DIR;

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("opmod_cli_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    int run(const std::string& args) const {
        std::string cmd = kCli + " " + args + " >" + (dir_ / "stdout.txt").string() + " 2>" + (dir_ / "stderr.txt").string();
        int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    static std::string data(const std::string& rel) { return kData + "/" + rel; }
    static std::string slurp(const std::string& p) {
        std::ifstream in(p);
        return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, HelpExitsZero) { EXPECT_EQ(run("--help"), 0); }

TEST_F(Cli, GenInstanceIsReproducible) {
    ASSERT_EQ(run("gen-instance --kind random-cp --seed 5 --out " + path("a.json")), 0);
    ASSERT_EQ(run("gen-instance --kind random-cp --seed 5 --out " + path("b.json")), 0);
    EXPECT_EQ(slurp(path("a.json")), slurp(path("b.json")));
    json j = json::parse(slurp(path("a.json")));
    EXPECT_EQ(j.at("schema"), opmod::kSchema);
    EXPECT_EQ(j.at("type"), "cp_form");
}

TEST_F(Cli, VerifyCsPassesOnShippedForms) {
    for (const char* f : {"kernel.json", "measure.json", "cp_dualvn.json", "positive_map.json", "psi.json"}) {
        EXPECT_EQ(run("verify-cs --trials 50 --in " + data(std::string("instances/") + f) + " --out " + path("r.json")), 0) << f;
        json r = json::parse(slurp(path("r.json")));
        EXPECT_TRUE(r.contains("input_digest")) << f;
        EXPECT_TRUE(r.at("report").at("passed").get<bool>()) << f;
    }
}

TEST_F(Cli, PerturbedInstanceWritesWitness) {
    EXPECT_EQ(run("verify-cs --in " + data("instances/perturbed_cp.json") + " --out " + path("r.json") + " --witness " +
                  path("w.json")),
              1);
    ASSERT_TRUE(fs::exists(path("w.json")));
    json w = json::parse(slurp(path("w.json")));
    EXPECT_FALSE(w.empty());
}

TEST_F(Cli, BadInputsExitTwo) {
    EXPECT_EQ(run("verify-cs --in " + path("missing.json")), 2);
    std::ofstream(path("bad.json")) << "{ not json";
    EXPECT_EQ(run("verify-cs --in " + path("bad.json")), 2);
    std::ofstream(path("noschema.json")) << R"({"type":"sesqui_form"})";
    EXPECT_EQ(run("build-gns --in " + path("noschema.json")), 2);
    EXPECT_EQ(run("gen-instance --kind nope"), 2);
    EXPECT_EQ(run("verify-cs --tol -1 --in " + data("instances/kernel.json")), 2);
}

TEST_F(Cli, BuildCommands) {
    EXPECT_EQ(run("build-gns --in " + data("instances/trace_m2.json") + " --out " + path("g.json")), 0);
    EXPECT_EQ(json::parse(slurp(path("g.json"))).at("report").at("passed"), true);
    EXPECT_EQ(run("build-stinespring --in " + data("instances/cp_bcc.json") + " --out " + path("s.json")), 0);
    EXPECT_EQ(json::parse(slurp(path("s.json"))).at("passed"), true);
    EXPECT_EQ(run("radon-nikodym --psi " + data("instances/cp_dualvn.json") + " --phi " + data("instances/cp_dualvn.json") +
                  " --gamma 1 --out " + path("rn.json")),
              0);
    EXPECT_EQ(run("radon-nikodym --psi " + data("instances/cp_dualvn.json") + " --phi " + data("instances/kernel.json") +
                  " --gamma 1"),
              2);
}

TEST_F(Cli, SuiteIsDeterministicAcrossThreads) {
    ASSERT_EQ(run("run-suite --config " + data("suite_default.json") + " --threads 1 --out " + path("r1.json")), 0);
    ASSERT_EQ(run("run-suite --config " + data("suite_default.json") + " --threads 8 --out " + path("r8.json")), 0);
    std::string a = slurp(path("r1.json"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, slurp(path("r8.json")));
    json r = json::parse(a);
    EXPECT_EQ(r.at("summary").at("failed"), 0);
}

TEST_F(Cli, PerturbedSuiteFails) {
    EXPECT_EQ(run("run-suite --config " + data("suite_perturbed.json") + " --out " + path("r.json")), 1);
    json r = json::parse(slurp(path("r.json")));
    EXPECT_GT(r.at("summary").at("failed").get<int>(), 0);
}
