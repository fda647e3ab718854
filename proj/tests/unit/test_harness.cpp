#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sinebeta/harness/aggregate.hpp"
#include "sinebeta/harness/config.hpp"
#include "sinebeta/harness/io.hpp"
#include "sinebeta/harness/run.hpp"

namespace fs = std::filesystem;
using namespace sinebeta;
using namespace sinebeta::harness;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("sinebeta-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

Overrides simulate_overrides(const fs::path& out) {
  Overrides o;
  o.mode = Mode::simulate;
  o.beta = 0.5;
  o.lambdas = "0,2pi,4pi";
  o.intervals = "0:2pi,2pi:4pi";
  o.replicates = 40;
  o.seed = 5;
  o.output_dir = out.string();
  return o;
}

}  // namespace

TEST_CASE("numbers with pi tokens") {
  CHECK(parse_real("2pi") == doctest::Approx(2.0 * M_PI));
  CHECK(parse_real("-4pi") == doctest::Approx(-4.0 * M_PI));
  CHECK(parse_real("pi") == doctest::Approx(M_PI));
  CHECK(parse_real("0.5*pi") == doctest::Approx(0.5 * M_PI));
  CHECK(parse_real(" 1.25 ") == 1.25);
  CHECK(parse_real("1e-3") == 1e-3);
  CHECK_THROWS_AS(parse_real("two"), ConfigError);
  CHECK_THROWS_AS(parse_real(""), ConfigError);
  const auto ivs = parse_intervals("0:2pi, 4pi:6pi");
  REQUIRE(ivs.size() == 2);
  CHECK(ivs[1].hi == doctest::Approx(6.0 * M_PI));
  CHECK_THROWS_AS(parse_intervals("0-2pi"), ConfigError);
}

TEST_CASE("format_double round trips") {
  for (double v : {0.1, 1.0 / 3.0, 6.283185307179586, 1e-300, 12345.678}) {
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(2.0) == "2");
  CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("atomic writes leave no temporary behind") {
  TempDir d;
  write_atomic(d.path / "sub" / "a.txt", "hello\n");
  CHECK(slurp(d.path / "sub" / "a.txt") == "hello\n");
  CHECK_FALSE(fs::exists(d.path / "sub" / "a.txt.tmp"));
}

TEST_CASE("config file with flag overrides") {
  TempDir d;
  const auto file = d.path / "run.yaml";
  write(file, R"(mode: verify
beta: 0.02
lambdas: [0, 2pi, 4pi, 6pi]
intervals: [[0, 2pi], [4pi, 6pi]]
replicates: 2000
seed: 42
suites: [marginal, independence]
integrator: {step: 0.01, horizon: 3}
)");
  Overrides o;
  o.replicates = 1500;
  const auto c = load_config(file, o);
  CHECK(c.mode == Mode::verify);
  CHECK(c.replicates == 1500);
  CHECK(*c.seed == 42);
  CHECK(c.params.lambdas.size() == 4);
  CHECK(c.suites == std::vector<std::string>{"marginal", "independence"});

  write(file, "beta: 0.02\nbogus: 1\n");
  CHECK_THROWS_AS(load_config(file, {}), ConfigError);
}

TEST_CASE("the seed is mandatory") {
  Overrides o;
  o.mode = Mode::simulate;
  o.beta = 0.1;
  o.intervals = "0:2pi";
  o.replicates = 10;
  CHECK_THROWS_WITH_AS(load_config(std::nullopt, o), doctest::Contains("seed"), ConfigError);
  o.seed = 1;
  CHECK_NOTHROW(load_config(std::nullopt, o));
}

TEST_CASE("interval endpoints must lie on an explicit grid") {
  Overrides o;
  o.mode = Mode::simulate;
  o.beta = 0.1;
  o.lambdas = "0,2pi";
  o.intervals = "0:3";
  o.replicates = 10;
  o.seed = 1;
  CHECK_THROWS_WITH_AS(load_config(std::nullopt, o), doctest::Contains("not in the lambda grid"),
                       ConfigError);
}

TEST_CASE("negative intervals are translated and the grid is completed") {
  Overrides o;
  o.mode = Mode::simulate;
  o.beta = 0.1;
  o.intervals = "-2pi:0,2pi:4pi";
  o.replicates = 10;
  o.seed = 1;
  const auto c = load_config(std::nullopt, o);
  REQUIRE(c.effective_intervals.size() == 2);
  CHECK(c.effective_intervals[0].lo == 0.0);
  CHECK(c.effective_intervals[0].hi == doctest::Approx(2.0 * M_PI));
  CHECK(c.params.lambdas.size() == 3);
}

TEST_CASE("suite requirements are checked up front") {
  Overrides o;
  o.mode = Mode::verify;
  o.beta = 0.1;
  o.intervals = "0:2pi";
  o.replicates = 100;
  o.seed = 1;
  o.suites = "marginal,independence";
  try {
    load_config(std::nullopt, o);
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("500 replicates") != std::string::npos);
    CHECK(msg.find("two disjoint intervals") != std::string::npos);
  }
  o.suites = "nonsense";
  CHECK_THROWS_AS(load_config(std::nullopt, o), ConfigError);
}

TEST_CASE("the output directory can be overridden by the environment") {
  TempDir d;
  auto o = simulate_overrides(d.path / "flag");
  ::setenv("SINEBETA_OUTPUT_DIR", (d.path / "env").c_str(), 1);
  const auto c = load_config(std::nullopt, o);
  ::unsetenv("SINEBETA_OUTPUT_DIR");
  CHECK(c.output_dir == d.path / "env");
}

TEST_CASE("the config hash ignores key order, output directory and workers") {
  TempDir d;
  write(d.path / "a.yaml", "beta: 0.1\nseed: 3\nreplicates: 10\nintervals: [[0, 2pi]]\n");
  write(d.path / "b.yaml", "intervals: [[0, 2pi]]\nreplicates: 10\nseed: 3\nbeta: 0.1\n");
  Overrides o1, o2;
  o1.output_dir = "x";
  o2.output_dir = "y";
  o2.workers = 4;
  const auto a = load_config(d.path / "a.yaml", o1);
  const auto b = load_config(d.path / "b.yaml", o2);
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  Overrides o3;
  o3.seed = 4;
  CHECK(config_hash(load_config(d.path / "a.yaml", o3)) != config_hash(a));
}

TEST_CASE("runs are byte-identical across repeats and worker counts") {
  TempDir d;
  std::ostringstream log;
  std::vector<std::string> jumps, counts;
  for (int workers : {1, 4, 4}) {
    auto o = simulate_overrides(d.path / ("w" + std::to_string(jumps.size())));
    o.workers = workers;
    const auto c = load_config(std::nullopt, o);
    const auto outcome = run(c, log);
    CHECK(outcome.exit_status == 0);
    jumps.push_back(slurp(c.output_dir / "jumps.csv"));
    counts.push_back(slurp(c.output_dir / "counts.csv"));
    const auto manifest = nlohmann::json::parse(slurp(c.output_dir / "manifest.json"));
    CHECK(manifest["path_diagnostics"]["max_floor_decrement_fraction"].get<double>() < 0.01);
  }
  CHECK(jumps[0] == jumps[1]);
  CHECK(jumps[1] == jumps[2]);
  CHECK(counts[0] == counts[1]);
  CHECK(jumps[0].rfind("#schema_version=1\nreplicate,process_id,kind,t_physical,t_rescaled,count_after\n", 0) == 0);
  CHECK(counts[0].rfind("#schema_version=1\nreplicate,interval_id,count,unsettled_flag\n", 0) == 0);
}

TEST_CASE("jump rows are sorted by replicate, process and time") {
  TempDir d;
  std::ostringstream log;
  const auto c = load_config(std::nullopt, simulate_overrides(d.path));
  run(c, log);
  std::istringstream in(slurp(d.path / "jumps.csv"));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::tuple<long, long, double> prev{-1, -1, -1.0};
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string rep, pid, kind, tp;
    std::getline(fields, rep, ',');
    std::getline(fields, pid, ',');
    std::getline(fields, kind, ',');
    std::getline(fields, tp, ',');
    const std::tuple<long, long, double> cur{std::stol(rep), std::stol(pid), std::stod(tp)};
    CHECK(prev <= cur);
    prev = cur;
    ++rows;
  }
  CHECK(rows > 0);
}

TEST_CASE("verify writes report records and the exit status follows them") {
  TempDir d;
  Overrides o;
  o.mode = Mode::verify;
  o.beta = 0.5;
  o.intervals = "0:2pi";
  o.replicates = 500;
  o.seed = 42;
  o.suites = "marginal";
  o.output_dir = d.path.string();
  const auto c = load_config(std::nullopt, o);
  std::ostringstream log;
  const auto outcome = run(c, log);
  const auto doc = nlohmann::json::parse(slurp(d.path / "report.json"));
  CHECK(doc["schema_version"] == 1);
  bool found = false;
  for (const auto& rec : doc["records"]) {
    if (rec["name"].get<std::string>().rfind("poisson_gof", 0) == 0) found = true;
    CHECK(rec["metadata"]["settings_hash"] == config_hash(c));
  }
  CHECK(found);
  const auto verdicts = suite_verdicts(c.suites, outcome.reports);
  CHECK(outcome.exit_status == (verdicts.at("marginal") ? 0 : 1));
  const auto manifest = nlohmann::json::parse(slurp(d.path / "manifest.json"));
  CHECK(manifest["config_hash"] == config_hash(c));
  CHECK(manifest["suites"]["marginal"] == verdicts.at("marginal"));
}

TEST_CASE("suite verdicts need records") {
  stats::TestReport ok;
  ok.suite = "marginal";
  ok.checks.push_back({"x", 0.0, stats::Comparator::less, 1.0});
  auto bad = ok;
  bad.checks[0].value = 2.0;
  auto v = suite_verdicts({"marginal", "exit"}, {ok});
  CHECK(v["marginal"]);
  CHECK_FALSE(v["exit"]);
  v = suite_verdicts({"marginal"}, {ok, bad});
  CHECK_FALSE(v["marginal"]);
}

TEST_CASE("report records round trip through JSON") {
  stats::TestReport r;
  r.suite = "exit";
  r.name = "passage_ks";
  r.statistic = 0.03;
  r.reference = "exponential(1)";
  r.p_value = 0.4;
  r.n = 1000;
  r.checks.push_back({"ks_distance", 0.03, stats::Comparator::less, 0.093});
  r.metadata = {1e-3, {1.0}, 7, "abc"};
  r.details["censored"] = 0.0;
  const auto back = report_from_json(to_json(r));
  CHECK(back.name == r.name);
  CHECK(back.p_value == r.p_value);
  CHECK(back.pass() == r.pass());
  CHECK(back.metadata.lambdas == r.metadata.lambdas);
  auto tampered = to_json(r);
  tampered["pass"] = false;
  CHECK_THROWS(report_from_json(tampered));
}

namespace {

stats::TestReport record(double beta, double statistic, bool pass) {
  stats::TestReport r;
  r.suite = "coupling";
  r.name = "coupling[6.28319,12.5664]";
  r.statistic = statistic;
  r.reference = "0";
  r.n = 100;
  r.checks.push_back({"x", pass ? 0.0 : 2.0, stats::Comparator::less, 1.0});
  r.metadata = {beta, {6.283185307179586, 12.566370614359172}, 1, "h"};
  return r;
}

}  // namespace

TEST_CASE("aggregating a single report is a passthrough") {
  TempDir d;
  write_atomic(d.path / "run1" / "report.json", report_document({record(0.02, 0.5, true)}));
  const auto agg = aggregate_reports(d.path);
  REQUIRE(agg.rows.size() == 1);
  CHECK(agg.rows[0].report.statistic == 0.5);
  CHECK(agg.rows[0].run == "run1");
  CHECK(agg.exit_status == 0);
  CHECK(agg.json["rows"][0]["statistic"] == 0.5);
}

TEST_CASE("aggregating a beta ladder adds trend columns") {
  TempDir d;
  write_atomic(d.path / "b05" / "report.json", report_document({record(0.05, 0.3, true)}));
  write_atomic(d.path / "b02" / "report.json", report_document({record(0.02, 0.2, true)}));
  write_atomic(d.path / "b005" / "report.json", report_document({record(0.005, 0.25, true)}));
  const auto agg = aggregate_reports(d.path);
  REQUIRE(agg.rows.size() == 3);
  CHECK(agg.rows[0].report.metadata.beta == 0.05);
  CHECK(agg.rows[0].trend == "-");
  CHECK(agg.rows[1].trend == "down");
  CHECK(agg.rows[2].trend == "up");
  CHECK(agg.text.find("trend") != std::string::npos);
}

TEST_CASE("duplicate keys keep both rows with their run ids") {
  TempDir d;
  write_atomic(d.path / "a" / "report.json", report_document({record(0.02, 0.2, true)}));
  write_atomic(d.path / "b" / "report.json", report_document({record(0.02, 0.4, false)}));
  const auto agg = aggregate_reports(d.path);
  REQUIRE(agg.rows.size() == 2);
  CHECK(agg.rows[0].run == "a");
  CHECK(agg.rows[1].run == "b");
  CHECK(agg.exit_status == 1);
}

TEST_CASE("malformed reports are skipped with a warning") {
  TempDir d;
  write_atomic(d.path / "good" / "report.json", report_document({record(0.02, 0.2, true)}));
  write_atomic(d.path / "bad" / "report.json", "{not json");
  const auto agg = aggregate_reports(d.path);
  CHECK(agg.rows.size() == 1);
  CHECK(agg.warnings.size() == 1);
  CHECK(agg.exit_status == 2);

  TempDir empty;
  CHECK(aggregate_reports(empty.path).exit_status == 2);
}
