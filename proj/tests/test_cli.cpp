#include <catch2/catch_amalgamated.hpp>
#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

namespace {

const std::string kCli = MOMENTBOUND_CLI;
const std::string kDataDir = MOMENTBOUND_DATA_DIR;

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run(const std::string& args) {
    std::string cmd = kCli + " " + args + " 2>/dev/null";
    FILE* p = popen(cmd.c_str(), "r");
    REQUIRE(p != nullptr);
    RunResult r;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    int status = pclose(p);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string strip_last_column(const std::string& csv) {
    std::stringstream in(csv), out;
    std::string line;
    while (std::getline(in, line)) {
        auto comma = line.rfind(',');
        out << line.substr(0, comma) << "\n";
    }
    return out.str();
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run("bound " + kDataDir + "/birthdeath.json").exit_code == 1);  // no --target
    CHECK(run("bound " + kDataDir + "/missing.json --target X").exit_code == 1);
    CHECK(run("sweep " + kDataDir + "/dimer.json --target X --r 1.5").exit_code == 1);
    CHECK(run("bound " + kDataDir + "/birthdeath.json --target Y").exit_code == 1);
    CHECK(run("").exit_code == 1);  // subcommand required
}

TEST_CASE("bound emits a JSON row and exits 0 on success") {
    RunResult r = run("bound " + kDataDir + "/birthdeath.json --target X --rho 2");
    REQUIRE(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(r.out);
    CHECK(j["lb"]["status"] == "optimal");
    CHECK(j["ub"]["status"] == "optimal");
    // fixed birth-death: the first moment equation pins E[X] = 10 exactly
    CHECK(std::abs(j["lb"]["value"].get<double>() - 10.0) < 1e-6);
    CHECK(std::abs(j["ub"]["value"].get<double>() - 10.0) < 1e-6);
    CHECK(j["gap"].get<double>() < 1e-6);
}

TEST_CASE("bound --direction min emits a single result object") {
    RunResult r = run("bound " + kDataDir + "/dimer.json --target X --rho 1 --sigma 1 "
                      "--direction min");
    REQUIRE(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(r.out);
    CHECK(j["direction"] == "min");
    CHECK(j["status"] == "optimal");
    CHECK(j["value"].is_number());
}

TEST_CASE("bound --export-sdpa writes the block structure") {
    std::string path = "/tmp/momentbound_cli_test.dat-s";
    std::remove(path.c_str());
    RunResult r = run("bound " + kDataDir + "/dimer.json --target X --rho 1 --sigma 1 "
                      "--direction max --export-sdpa " + path);
    REQUIRE(r.exit_code == 0);
    std::ifstream f(path);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    CHECK(ss.str().find("6 2 2 3 ") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("sweep prints a CSV grid deterministically") {
    std::string args = "sweep " + kDataDir + "/dimer.json --target X --rho 1 --sigma 1 --r 0.2";
    RunResult a = run(args);
    REQUIRE(a.exit_code == 0);
    std::stringstream in(a.out);
    std::string header, row, extra;
    REQUIRE(std::getline(in, header));
    CHECK(header == "r,sigma,lb,ub,gap,lb_status,ub_status,seconds");
    REQUIRE(std::getline(in, row));
    CHECK(row.rfind("0.2,1,", 0) == 0);
    CHECK(row.find("optimal") != std::string::npos);
    CHECK_FALSE(std::getline(in, extra));

    // identical invocation gives identical numbers; only timing may move
    RunResult b = run(args);
    REQUIRE(b.exit_code == 0);
    CHECK(strip_last_column(a.out) == strip_last_column(b.out));
}

TEST_CASE("check runs the oracle on a fixed-parameter network") {
    RunResult r = run("check " + kDataDir + "/birthdeath.json --target X --rho 2 --n-max 200");
    REQUIRE(r.exit_code == 0);
    nlohmann::json j = nlohmann::json::parse(r.out);
    CHECK(j["verdict"] == "PASS");
    CHECK(j["mode"] == "oracle");
    CHECK(std::abs(j["observed_lo"].get<double>() - 10.0) < 1e-8);
    CHECK(j["tail_mass"].get<double>() < 1e-10);
}
