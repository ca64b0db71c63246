#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "enose/cli.hpp"
#include "enose/dataset.hpp"
#include "support.hpp"

using namespace enose;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::size_t fields(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

// Nine measurements, three per wine class, written once per test binary.
const testing::TempDir& nine() {
    static testing::TempDir dir;
    static bool done = false;
    if (!done) {
        const Result r = invoke({"generate", "--counts", "3,3,3,0", "--seed", "5", "--out", dir.str("ds")});
        REQUIRE(r.code == 0);
        done = true;
    }
    return dir;
}

int exit_status(const std::string& command) {
    const int raw = std::system((command + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

} // namespace

TEST_CASE("generate writes the requested counts") {
    const auto& d = nine();
    const auto ds = dataset::load_dataset(d.str("ds"));
    CHECK(ds.measurements.size() == 9);
    const Result v = invoke({"validate", "--dataset", d.str("ds")});
    CHECK(v.code == 0);
    CHECK(v.out.rfind("ok: 9 measurements", 0) == 0);
}

TEST_CASE("generate with the default config gives 300 measurements") {
    testing::TempDir d;
    const Result r = invoke({"generate", "--out", d.str("full")});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("wrote 300 measurements") != std::string::npos);
    CHECK(r.err.find("effective config") != std::string::npos);
}

TEST_CASE("usage errors exit with 1") {
    CHECK(invoke({}).code == 1);
    CHECK(invoke({"frobnicate"}).code == 1);
    CHECK(invoke({"--config", "/nonexistent/config.json", "generate", "--out", "/tmp/x"}).code == 1);
    CHECK(invoke({"generate"}).code == 1);
    CHECK(invoke({"run", "--repetitions", "0"}).code == 1);
    testing::TempDir d;
    spit(d.str("bad.json"), R"({"repetitions": 2, "colour": "red"})");
    CHECK(invoke({"--config", d.str("bad.json"), "run", "--dataset", nine().str("ds")}).code == 1);
}

TEST_CASE("extract writes a deterministic 9 x 140 fingerprint table") {
    const auto& d = nine();
    testing::TempDir out;
    REQUIRE(invoke({"extract", "--dataset", d.str("ds"), "--out", out.str("a.csv")}).code == 0);
    REQUIRE(invoke({"extract", "--dataset", d.str("ds"), "--out", out.str("b.csv"), "--workers", "3"}).code == 0);
    const std::string a = slurp(out.str("a.csv"));
    CHECK(a == slurp(out.str("b.csv")));
    const auto ls = lines(a);
    REQUIRE(ls.size() == 10);
    for (const auto& l : ls) CHECK(fields(l) == 140);
}

TEST_CASE("data errors exit with 2") {
    testing::TempDir d;
    std::filesystem::create_directories(d.str("empty"));
    CHECK(invoke({"extract", "--dataset", d.str("empty"), "--out", d.str("f.csv")}).code == 2);
    CHECK(invoke({"validate", "--dataset", d.str("missing")}).code == 2);
}

TEST_CASE("pca scores and summary") {
    const auto& d = nine();
    testing::TempDir out;
    REQUIRE(invoke({"extract", "--dataset", d.str("ds"), "--out", out.str("f.csv")}).code == 0);
    const Result r = invoke({"pca", "--fingerprints", out.str("f.csv"), "--n", "3", "--out", out.str("s.csv")});
    REQUIRE(r.code == 0);
    const auto ls = lines(slurp(out.str("s.csv")));
    REQUIRE(ls.size() == 10);
    CHECK(ls[0] == "pc1,pc2,pc3,label,bottle_id");
    CHECK(fields(ls[1]) == 5);
    CHECK(r.out.find("cumulative variance: ") != std::string::npos);

    CHECK(invoke({"pca", "--fingerprints", out.str("f.csv"), "--n", "9"}).code == 2);

    // Every feature is a multiple of one column: a single component explains it all.
    std::string csv = "a,b,c,label,bottle_id\n";
    for (int i = 0; i < 6; ++i) {
        csv += std::to_string(i) + "," + std::to_string(2 * i) + "," + std::to_string(-3 * i) + ",HQ,B" +
               std::to_string(i) + "\n";
    }
    spit(out.str("rank1.csv"), csv);
    const Result one = invoke({"pca", "--fingerprints", out.str("rank1.csv"), "--n", "1", "--raw"});
    REQUIRE(one.code == 0);
    CHECK(one.out.find("pc1: explained 1.0000") != std::string::npos);
}

TEST_CASE("select writes a json report") {
    const auto& d = nine();
    testing::TempDir out;
    const Result r = invoke({"select", "--dataset", d.str("ds"), "--out", out.str("sel.json")});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(out.str("sel.json")));
    CHECK(j.at("chosen_size").get<int>() == static_cast<int>(j.at("chosen_names").size()));
    CHECK(j.at("experiment") == "exp1");
}

TEST_CASE("run, precedence, determinism and compare") {
    const auto& d = nine();
    testing::TempDir out;
    spit(out.str("cfg.json"), R"({"repetitions": 2, "mlp": {"epochs": 40}})");

    const Result conv = invoke({"--config", out.str("cfg.json"), "--out", out.str("conv"), "run", "--dataset",
                             d.str("ds"), "--pipeline", "conventional", "--repetitions", "1"});
    REQUIRE(conv.code == 0);
    CHECK(conv.err.find("\"repetitions\":1") != std::string::npos);
    CHECK(conv.out.find("accuracy (%)") != std::string::npos);
    const auto cj = nlohmann::json::parse(slurp(out.str("conv/report.json")));
    CHECK(cj.at("repetitions") == 1);
    CHECK(cj.at("val_std") == 0.0);
    CHECK(cj.at("val_mean").get<double>() >= 0.95);
    CHECK(slurp(out.str("conv/report.txt")) == conv.out);

    const std::vector<std::string> rapid_args{"--config", out.str("cfg.json"), "run", "--dataset", d.str("ds"),
                                              "--pipeline", "rapid", "--windows", "1,2", "--protocol",
                                              "group-kfold", "--seed", "3"};
    auto with_out = [&](const std::string& dir) {
        auto a = rapid_args;
        a.insert(a.begin(), {"--out", out.str(dir)});
        return a;
    };
    const Result rap = invoke(with_out("rapid"));
    REQUIRE(rap.code == 0);
    CHECK(rap.out.find("earliest window: t=") != std::string::npos);
    CHECK(rap.err.find("\"epochs\":40") != std::string::npos);
    CHECK(std::filesystem::exists(out.str("rapid/sweep.csv")));
    auto rj = nlohmann::json::parse(slurp(out.str("rapid/report.json")));
    CHECK(rj.at("repetitions") == 2);
    const int t = rj.at("window").get<int>();
    CHECK((t == 1 || t == 2));

    REQUIRE(invoke(with_out("rapid2")).code == 0);
    auto rj2 = nlohmann::json::parse(slurp(out.str("rapid2/report.json")));
    rj.erase("metadata");
    rj2.erase("metadata");
    CHECK(rj == rj2);

    const Result same = invoke({"compare", out.str("rapid/report.json"), out.str("rapid/report.json")});
    REQUIRE(same.code == 0);
    CHECK(same.out.find("Mann-Whitney U") != std::string::npos);
    CHECK(same.out.find("p=1") != std::string::npos);
    CHECK(invoke({"compare", out.str("conv/report.json"), out.str("rapid/report.json"), "--out", out.str("cmp.json")})
              .code == 0);
    CHECK(std::filesystem::exists(out.str("cmp.json")));

    nlohmann::json other = nlohmann::json::parse(slurp(out.str("conv/report.json")));
    other["experiment"] = "exp2";
    spit(out.str("other.json"), other.dump());
    const Result refused = invoke({"compare", out.str("conv/report.json"), out.str("other.json")});
    CHECK(refused.code == 2);
    CHECK(refused.err.find("refusing to compare") != std::string::npos);
    CHECK(invoke({"compare", out.str("conv/report.json")}).code == 1);
}

TEST_CASE("sweep prints a csv and the earliest window") {
    const auto& d = nine();
    testing::TempDir out;
    const Result r = invoke({"--out", out.str("sw"), "sweep", "--dataset", d.str("ds"), "--windows", "1,3",
                          "--epochs", "5", "--protocol", "group-kfold"});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("t,seconds,", 0) == 0);
    CHECK(r.out.find("earliest window within") != std::string::npos);
    CHECK(slurp(out.str("sw/sweep.csv")).size() > 0);
    CHECK(nlohmann::json::parse(slurp(out.str("sw/sweep.json"))).at("windows").size() == 2);
}

TEST_CASE("the installed binary maps failures to exit codes") {
    const std::string bin = ENOSE_CLI_PATH;
    CHECK(exit_status(bin) == 1);
    CHECK(exit_status(bin + " --config /nonexistent.json generate --out /tmp/none") == 1);
    CHECK(exit_status(bin + " validate --dataset /nonexistent/dir") == 2);
    CHECK(exit_status(bin + " --help") == 0);
    CHECK(exit_status(bin + " validate --dataset " + nine().str("ds")) == 0);
}
