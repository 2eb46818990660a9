#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sys/wait.h>

#include "gexpect/gexpect.hpp"

using namespace gexpect;
using nlohmann::json;
using Catch::Matchers::ContainsSubstring;

namespace {

json corr_sigma_doc() {
    return json::parse(R"({"d": 2, "matrices":
        [[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.5], [0.5, 1.0]], [[0.25, 0.0], [0.0, 1.0]]]})");
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return {};
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    return out;
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

std::string tmp_dir() { return env_or("GEXPECT_TMP", "."); }
std::string cli_bin() { return env_or("GEXPECT_CLI", ""); }
std::string problem(const std::string& name) {
    return env_or("GEXPECT_PROBLEMS", "../problems") + "/" + name;
}

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

// one subprocess per call; stdout/stderr land in unique scratch files
CliRun run_cli(const std::string& args) {
    static int counter = 0;
    const std::string tag = tmp_dir() + "/cli_" + std::to_string(counter++);
    const std::string cmd = cli_bin() + " " + args + " > " + tag + ".out 2> " + tag + ".err";
    const int rc = std::system(cmd.c_str());
    CliRun r;
    if (rc != -1 && WIFEXITED(rc)) r.code = WEXITSTATUS(rc);
    r.out = slurp(tag + ".out");
    r.err = slurp(tag + ".err");
    return r;
}

json parse_payload(const CliRun& r) { return json::parse(r.out); }

bool is_hex16(const std::string& s) {
    if (s.size() != 16) return false;
    for (char c : s)
        if (std::string("0123456789abcdef").find(c) == std::string::npos) return false;
    return true;
}

} // namespace

// ---------------------------------------------------------------------------
// JSON input
// ---------------------------------------------------------------------------

TEST_CASE("covariance set json round trip") {
    const CovarianceSet set = covariance_from_json(corr_sigma_doc());
    REQUIRE(set.dimension() == 2);
    REQUIRE(set.size() == 3);
    REQUIRE(set.matrices()[1](0, 1) == 0.5);

    const json doc = covariance_to_json(set);
    REQUIRE(doc["d"] == 2);
    const CovarianceSet back = covariance_from_json(doc);
    REQUIRE(back.size() == set.size());
    for (std::size_t k = 0; k < set.size(); ++k)
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t j = 0; j < 2; ++j)
                REQUIRE(back.matrices()[k](i, j) == set.matrices()[k](i, j));
}

TEST_CASE("covariance json diagnostics name the offending matrix") {
    REQUIRE_THROWS_AS(covariance_from_json(json::array()), input_error);
    REQUIRE_THROWS_AS(covariance_from_json(json::parse(R"({"d": 1})")), input_error);
    REQUIRE_THROWS_AS(covariance_from_json(json::parse(R"({"matrices": []})")), input_error);

    // second matrix is not square
    const json ragged = json::parse(R"({"matrices": [[[1.0]], [[1.0, 0.0]]]})");
    REQUIRE_THROWS_WITH(covariance_from_json(ragged), ContainsSubstring("matrices[1]"));

    const json textual = json::parse(R"({"matrices": [[["x"]]]})");
    REQUIRE_THROWS_WITH(covariance_from_json(textual), ContainsSubstring("matrices[0]"));

    const json wrong_d = json::parse(R"({"d": 3, "matrices": [[[1.0]]]})");
    REQUIRE_THROWS_WITH(covariance_from_json(wrong_d), ContainsSubstring("does not match"));
}

TEST_CASE("problem json parses fields and applies defaults") {
    const json doc = json::parse(R"({
        "sigma_set": {"d": 1, "matrices": [[[0.25]], [[1.0]]]},
        "times": [0.5, 1.0],
        "payoff": "(x2 - x1)^2",
        "p": 4,
        "mc": {"paths": 1234, "seed": 99}
    })");
    const Problem pb = problem_from_json(doc);
    REQUIRE(pb.sigma_set.dimension() == 1);
    REQUIRE(pb.times == std::vector<double>{0.5, 1.0});
    REQUIRE(pb.p.has_value());
    REQUIRE(*pb.p == 4.0);
    REQUIRE(pb.mc.paths == 1234);
    REQUIRE(pb.mc.seed.has_value());
    REQUIRE(*pb.mc.seed == 99);
    REQUIRE(pb.payoff.has_value());
    const CylinderFunctional f = CylinderFunctional::from_spec(pb.times, *pb.payoff);
    const std::vector<double> point{1.0, 3.0};
    REQUIRE(f.payoff(point) == 4.0);

    const Problem minimal =
        problem_from_json(json::parse(R"({"sigma_set": {"matrices": [[[1.0]]]}})"));
    REQUIRE(minimal.times.empty());
    REQUIRE_FALSE(minimal.payoff.has_value());
    REQUIRE_FALSE(minimal.p.has_value());
    REQUIRE(minimal.mc.paths == 100000);
    REQUIRE_FALSE(minimal.mc.seed.has_value());
}

TEST_CASE("problem json validation") {
    auto parse = [](const char* text) { return problem_from_json(json::parse(text)); };
    REQUIRE_THROWS_AS(parse(R"({"times": [1.0]})"), input_error);
    REQUIRE_THROWS_AS(parse(R"("not an object")"), input_error);

    const std::string sigma = R"("sigma_set": {"matrices": [[[1.0]]]})";
    auto with = [&](const std::string& rest) {
        return json::parse("{" + sigma + ", " + rest + "}");
    };
    REQUIRE_THROWS_AS(problem_from_json(with(R"("times": [1.0, 0.5])")), input_error);
    REQUIRE_THROWS_AS(problem_from_json(with(R"("times": [0.0, 1.0])")), input_error);
    REQUIRE_THROWS_AS(problem_from_json(with(R"("times": [])")), input_error);
    REQUIRE_THROWS_AS(problem_from_json(with(R"("payoff": "x1^2")")), input_error);
    REQUIRE_THROWS_AS(problem_from_json(with(R"("times": [1.0], "payoff": 7)")), input_error);
    REQUIRE_THROWS_AS(problem_from_json(with(R"("mc": {"paths": 0})")), input_error);
    REQUIRE_THROWS_AS(problem_from_json(with(R"("mc": {"seed": -1})")), input_error);
    REQUIRE_THROWS_AS(problem_from_json(with(R"("p": "four")")), input_error);
}

TEST_CASE("json parse errors carry the source tag") {
    REQUIRE_THROWS_WITH(parse_json_text("{oops", "problem file x.json"),
                        ContainsSubstring("problem file x.json"));
}

TEST_CASE("config hash is deterministic and order independent") {
    json a;
    a["alpha"] = 1;
    a["beta"] = json::array({1, 2});
    json b;
    b["beta"] = json::array({1, 2});
    b["alpha"] = 1;
    const std::string ha = config_hash_hex(a);
    REQUIRE(is_hex16(ha));
    REQUIRE(ha == config_hash_hex(a));
    REQUIRE(ha == config_hash_hex(b)); // objects serialize with sorted keys

    json c = a;
    c["beta"] = json::array({1, 3});
    REQUIRE(config_hash_hex(c) != ha);
}

TEST_CASE("result meta carries command, hash, seed, and version") {
    json cfg;
    cfg["k"] = 1;
    const json meta = result_meta("moment", cfg, 42);
    REQUIRE(meta["command"] == "moment");
    REQUIRE(meta["seed"] == 42);
    REQUIRE(meta["version"] == std::string(kSchemaVersion));
    REQUIRE(is_hex16(meta["config_hash"].get<std::string>()));
    REQUIRE(meta.size() == 4); // no timestamps or host data
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

TEST_CASE("csv fields quote exactly when needed") {
    REQUIRE(csv_field("plain") == "plain");
    REQUIRE(csv_field("") == "");
    REQUIRE(csv_field("a,b") == "\"a,b\"");
    REQUIRE(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    REQUIRE(csv_field("line\nbreak") == "\"line\nbreak\"");
    REQUIRE(csv_field("cr\rhere") == "\"cr\rhere\"");
    REQUIRE(csv_row({"a", "b,c", "d"}) == "a,\"b,c\",d\r\n");
    REQUIRE(csv_row({}) == "\r\n");
}

TEST_CASE("numeric formatting round trips bitwise") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> mant(-1.0, 1.0);
    std::uniform_int_distribution<int> expo(-200, 200);
    std::vector<double> samples{0.1,     1.0 / 3.0, 3.0,  1e-300, 6.02e23,
                                -0.0,    2.5,       1e16, -7.25,  0.0};
    for (int i = 0; i < 500; ++i) samples.push_back(std::ldexp(mant(rng), expo(rng)));
    for (double v : samples) {
        const std::string s = format_value(v);
        const double back = std::stod(s);
        REQUIRE(back == v);
        REQUIRE(std::signbit(back) == std::signbit(v));
    }
}

TEST_CASE("path csv round trip preserves nodes bitwise") {
    std::vector<double> times{0.0, 0.1, 0.2, 0.30000000000000004};
    std::vector<double> values{0.0, 0.0, 0.1, -1.0 / 3.0, 0.25, 1e-17, -0.7, 6.02e23};
    const DiscretePath p = DiscretePath::create(times, values, 2);

    const std::string text = path_to_csv(p);
    const auto lines = split_lines(text);
    REQUIRE(lines.size() == 5);
    REQUIRE(lines[0] == "t,x_1,x_2");
    REQUIRE(text.find("\r\n") != std::string::npos);

    const DiscretePath back = path_from_csv(text);
    REQUIRE(back.dim == 2);
    REQUIRE(back.times == times);
    for (std::size_t k = 0; k < p.nodes(); ++k)
        for (std::size_t j = 0; j < 2; ++j) REQUIRE(back.node(k, j) == p.node(k, j));
}

TEST_CASE("path csv rejects malformed tables") {
    // header optional: bare rows parse
    const DiscretePath bare = path_from_csv("0,0\r\n1,0.5\r\n");
    REQUIRE(bare.nodes() == 2);
    REQUIRE(bare.node(1, 0) == 0.5);

    REQUIRE_THROWS_AS(path_from_csv("t,x_1\r\n0,0\r\n"), input_error);
    REQUIRE_THROWS_AS(path_from_csv(""), input_error);
    REQUIRE_THROWS_AS(path_from_csv("0,0\r\n1,0.5,0.7\r\n"), input_error);
    REQUIRE_THROWS_AS(path_from_csv("0\r\n1\r\n"), input_error);
    REQUIRE_THROWS_WITH(path_from_csv("0,0\r\n1,oops\r\n"), ContainsSubstring("row 2"));
}

TEST_CASE("atomic write leaves no temp file behind") {
    const std::string target = tmp_dir() + "/unit_atomic.txt";
    atomic_write(target, "hello\nworld\n");
    REQUIRE(slurp(target) == "hello\nworld\n");
    REQUIRE_FALSE(std::filesystem::exists(target + ".tmp"));
    atomic_write(target, "second");
    REQUIRE(slurp(target) == "second");
}

// ---------------------------------------------------------------------------
// CLI subprocess behavior
// ---------------------------------------------------------------------------

TEST_CASE("cli g-eval emits value, argmax, and reproducibility metadata") {
    REQUIRE_FALSE(cli_bin().empty());
    const CliRun r =
        run_cli("g-eval --problem " + problem("base.json") + " --override matrix=2 --seed 0");
    REQUIRE(r.code == 0);
    const json doc = parse_payload(r);
    REQUIRE(doc["result"]["value"] == 1.0);
    REQUIRE(doc["result"]["argmax"] == 1);
    REQUIRE(doc["result"]["tolerance"] == 0.0);
    REQUIRE(doc["meta"]["command"] == "g-eval");
    REQUIRE(doc["meta"]["seed"] == 0);
    REQUIRE(doc["meta"]["version"] == std::string(kSchemaVersion));
    REQUIRE(is_hex16(doc["meta"]["config_hash"].get<std::string>()));
    REQUIRE(doc["meta"]["tolerances"]["mass_leak"] == 1e-8);
    REQUIRE(r.out.back() == '\n');
}

TEST_CASE("cli payloads are byte identical across repeat runs") {
    REQUIRE_FALSE(cli_bin().empty());
    const std::string f1 = tmp_dir() + "/det_a.json";
    const std::string f2 = tmp_dir() + "/det_b.json";

    // deterministic analytic command
    const std::string margs = "moment --problem " + problem("x4_t1.json") + " --seed 5 --output ";
    REQUIRE(run_cli(margs + f1).code == 0);
    REQUIRE(run_cli(margs + f2).code == 0);
    REQUIRE_FALSE(slurp(f1).empty());
    REQUIRE(slurp(f1) == slurp(f2));

    // sampling command: same seed must reproduce every byte
    const std::string gargs = "gap --problem " + problem("x4_t1.json") +
                              " --override paths=4000 --override grid_points=201"
                              " --override substeps=2 --override quad_nodes=11"
                              " --seed 9 --output ";
    REQUIRE(run_cli(gargs + f1).code == 0);
    REQUIRE(run_cli(gargs + f2).code == 0);
    const std::string gap_payload = slurp(f1);
    REQUIRE_FALSE(gap_payload.empty());
    REQUIRE(gap_payload == slurp(f2));

    // a different seed changes the sampled estimates
    const std::string gargs2 = "gap --problem " + problem("x4_t1.json") +
                               " --override paths=4000 --override grid_points=201"
                               " --override substeps=2 --override quad_nodes=11"
                               " --seed 10 --output ";
    REQUIRE(run_cli(gargs2 + f2).code == 0);
    REQUIRE(gap_payload != slurp(f2));
}

TEST_CASE("cli failure leaves no output file") {
    REQUIRE_FALSE(cli_bin().empty());
    const std::string missing = tmp_dir() + "/definitely_missing.json";
    const std::string out = tmp_dir() + "/never_written.json";
    std::filesystem::remove(out);
    std::filesystem::remove(out + ".tmp");

    const CliRun r = run_cli("expect --problem " + missing + " --output " + out);
    REQUIRE(r.code == 2);
    REQUIRE_THAT(r.err, ContainsSubstring("cannot open"));
    REQUIRE_FALSE(std::filesystem::exists(out));
    REQUIRE_FALSE(std::filesystem::exists(out + ".tmp"));
}

TEST_CASE("cli validation failures exit 2") {
    REQUIRE_FALSE(cli_bin().empty());
    const std::string base = problem("base.json");

    REQUIRE(run_cli("--problem " + base).code == 2);                  // no subcommand
    REQUIRE(run_cli("frobnicate --problem " + base).code == 2);       // unknown subcommand
    const CliRun no_problem = run_cli("moment");
    REQUIRE(no_problem.code == 2);
    REQUIRE_THAT(no_problem.err, ContainsSubstring("--problem is required"));

    const CliRun bad_key = run_cli("moment --problem " + base + " --override nope=3");
    REQUIRE(bad_key.code == 2);
    REQUIRE_THAT(bad_key.err, ContainsSubstring("unknown override key: nope"));

    const CliRun bad_kv = run_cli("moment --problem " + base + " --override p4");
    REQUIRE(bad_kv.code == 2);
    REQUIRE_THAT(bad_kv.err, ContainsSubstring("key=value"));

    const CliRun bad_fmt = run_cli("moment --problem " + base + " --format csv");
    REQUIRE(bad_fmt.code == 2);
    REQUIRE_THAT(bad_fmt.err, ContainsSubstring("csv format"));

    REQUIRE(run_cli("moment --problem " + base + " --seed -3").code == 2);
    REQUIRE(run_cli("expect --problem " + base).code == 2); // base has no payoff

    const CliRun bad_fn = run_cli("approx-pipeline --problem " + base +
                                  " --override eps=0.5 --override functional=bogus");
    REQUIRE(bad_fn.code == 2);
    REQUIRE_THAT(bad_fn.err, ContainsSubstring("unknown path functional"));

    const CliRun no_path = run_cli("mollify --problem " + base);
    REQUIRE(no_path.code == 2);
    REQUIRE_THAT(no_path.err, ContainsSubstring("query path"));
}

TEST_CASE("cli warns once when the seed is defaulted") {
    REQUIRE_FALSE(cli_bin().empty());
    const std::string base = problem("base.json"); // no mc.seed in the file
    const CliRun warned = run_cli("moment --problem " + base);
    REQUIRE(warned.code == 0);
    REQUIRE_THAT(warned.err, ContainsSubstring("notice: seed not specified; defaulting to 0"));

    const CliRun explicit_seed = run_cli("moment --problem " + base + " --seed 0");
    REQUIRE(explicit_seed.code == 0);
    REQUIRE(explicit_seed.err.find("notice") == std::string::npos);

    // problem-provided seed also suppresses the notice
    const CliRun file_seed = run_cli("moment --problem " + problem("abs_b1.json"));
    REQUIRE(file_seed.code == 0);
    REQUIRE(file_seed.err.find("notice") == std::string::npos);
    REQUIRE(parse_payload(file_seed)["meta"]["seed"] == 7);

    // --seed wins over the problem file
    const CliRun override_seed = run_cli("moment --problem " + problem("abs_b1.json") + " --seed 123");
    REQUIRE(parse_payload(override_seed)["meta"]["seed"] == 123);
}

TEST_CASE("cli config hash tracks the effective configuration") {
    REQUIRE_FALSE(cli_bin().empty());
    const std::string base = problem("base.json");
    auto hash_of = [&](const std::string& args) {
        const CliRun r = run_cli("moment --problem " + base + " --seed 0 " + args);
        REQUIRE(r.code == 0);
        return parse_payload(r)["meta"]["config_hash"].get<std::string>();
    };
    const std::string h2 = hash_of("--override p=2");
    const std::string h4 = hash_of("--override p=4");
    REQUIRE(h2 != h4);
    REQUIRE(h4 == hash_of("--override p=4"));
}

TEST_CASE("cli scenario-sup csv table") {
    REQUIRE_FALSE(cli_bin().empty());
    const CliRun r = run_cli("scenario-sup --problem " + problem("abs_b1.json") +
                             " --override paths=2000 --override substeps=2"
                             " --override quad_nodes=11 --format csv --seed 1");
    REQUIRE(r.code == 0);
    const auto lines = split_lines(r.out);
    REQUIRE(lines.size() == 3); // header + one row per constant scenario
    REQUIRE(lines[0] == "command,config_hash,seed,version,scenario,label,estimate,std_error");

    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split_csv(lines[i]);
        REQUIRE(cells.size() == 8);
        REQUIRE(cells[0] == "scenario-sup");
        REQUIRE(is_hex16(cells[1]));
        REQUIRE(cells[2] == "1");
        REQUIRE(cells[3] == std::string(kSchemaVersion));
        REQUIRE(cells[4] == std::to_string(i - 1));
        REQUIRE(std::stod(cells[7]) > 0.0);
    }
    // scenario 1 holds the unit-variance constant scenario: E|B_1| near 0.798
    const auto row = split_csv(lines[2]);
    REQUIRE(row[5] == "1");
    REQUIRE_THAT(std::stod(row[6]), Catch::Matchers::WithinAbs(std::sqrt(2.0 / M_PI), 0.06));
}

TEST_CASE("cli maps capability limits to exit 4") {
    REQUIRE_FALSE(cli_bin().empty());
    const CliRun r =
        run_cli("check-axioms --problem " + problem("corr_2d.json") + " --override pairs=8");
    REQUIRE(r.code == 4);
    REQUIRE_THAT(r.err, ContainsSubstring("capability error"));
}

TEST_CASE("cli maps budget exhaustion to exit 3") {
    REQUIRE_FALSE(cli_bin().empty());
    // 96-step paths cannot be certified by the dyadic projection ladder (max 64
    // nodes), so the deviation budget for eps=0.02 is unreachable
    const CliRun r = run_cli("approx-pipeline --problem " + problem("base.json") +
                             " --override eps=0.02 --override path_steps=96"
                             " --override pipeline_paths=400 --override candidate_budget=24"
                             " --seed 7");
    REQUIRE(r.code == 3);
    REQUIRE_THAT(r.err, ContainsSubstring("budget error"));
    REQUIRE_THAT(r.err, ContainsSubstring("achieved"));
}

TEST_CASE("cli mollify consumes a csv query path") {
    REQUIRE_FALSE(cli_bin().empty());
    std::vector<double> times(9), values(9);
    for (std::size_t k = 0; k < 9; ++k) {
        times[k] = static_cast<double>(k) / 8.0;
        values[k] = 0.9 * times[k];
    }
    const DiscretePath omega = DiscretePath::create(times, values, 1);
    const std::string path_file = tmp_dir() + "/query_path.csv";
    atomic_write(path_file, path_to_csv(omega));

    const CliRun r = run_cli("mollify --problem " + problem("base.json") + " --override path=" +
                             path_file + " --override slope=2 --override candidates=4 --seed 3");
    REQUIRE(r.code == 0);
    const json doc = parse_payload(r);
    REQUIRE(doc["result"]["functional"] == "capped_sup_abs");
    REQUIRE(doc["result"]["tolerance"] == 0.0);
    // 2 scenarios x 4 sampled candidates + dyadic projections of the query
    REQUIRE(doc["result"]["candidates"] == 11);
    const double value = doc["result"]["value"].get<double>();
    REQUIRE(value <= 0.9 + 1e-12); // capped sup of the query itself
    REQUIRE(value >= 0.0);
}
