#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "testutil.hpp"

namespace fs = std::filesystem;

namespace {

std::string bin() {
  const char* b = std::getenv("LHFI_BIN");
  REQUIRE_MESSAGE(b != nullptr, "LHFI_BIN must point at the CLI binary");
  return b;
}

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
  REQUIRE(out.good());
}

// Fresh scratch directory per test case, removed on destruction.
struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("lhfi_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path operator/(const std::string& name) const { return path / name; }
};

CliResult run_cli(const TempDir& dir, const std::string& args,
                  const std::string& env_prefix = "") {
  const fs::path out_file = dir / "stdout.log";
  const fs::path err_file = dir / "stderr.log";
  const std::string cmd = env_prefix + bin() + " " + args + " > " + out_file.string() +
                          " 2> " + err_file.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::set<std::string> first_column_set(const std::string& csv_text) {
  std::set<std::string> names;
  const auto rows = parse_csv(csv_text);
  for (std::size_t i = 1; i < rows.size(); ++i) names.insert(rows[i][0]);
  return names;
}

// Simulated 6-site two-level data set shared by the fit tests.
struct Fixture {
  TempDir dir;
  fs::path counts, covariates;

  Fixture() {
    spit(dir / "design.json", R"({
      "n_sites": 6,
      "replicates": 2,
      "cardinality_min": 100,
      "cardinality_max": 300,
      "seed": 21,
      "model_covariates": "salinity",
      "level": "two_level",
      "covariance": "diagonal",
      "upstream_response": "salinity",
      "upstream_driver": "dd",
      "scheme_dd": "grid,0,5.5",
      "true_alpha_0": -1.0,
      "true_alpha": "0.4,0.8",
      "true_theta_2": 1.5,
      "true_sigma_H": 0.6,
      "true_sigma_delta": 0.7,
      "true_sigma_beta": 1.0
    })");
    const fs::path data = dir / "data";
    const CliResult r = run_cli(
        dir, "simulate --design " + (dir / "design.json").string() + " --out " + data.string());
    REQUIRE_MESSAGE(r.code == 0, r.err);
    counts = data / "counts.csv";
    covariates = data / "covariates.csv";
  }

  // Run configuration pointing at the simulated data; fast sampler settings.
  fs::path config(const std::string& extra = "") const {
    static int n = 0;
    const fs::path p = dir / ("config" + std::to_string(n++) + ".json");
    spit(p, std::string("{\n") + "  \"counts_csv\": \"" + counts.string() + "\",\n" +
                "  \"covariates_csv\": \"" + covariates.string() + "\",\n" +
                "  \"n_chains\": 2,\n  \"n_iterations\": 600,\n  \"burn_in\": 200,\n" +
                "  \"thin\": 20,\n  \"seed\": 3" + extra + "\n}\n");
    return p;
  }
};

}  // namespace

TEST_CASE("help and argument errors") {
  TempDir dir;
  CHECK(run_cli(dir, "--help").code == 0);
  CHECK(run_cli(dir, "fit --help").code == 0);
  CHECK(run_cli(dir, "fit").code == 2);           // --config is required
  CHECK(run_cli(dir, "frobnicate").code == 2);    // unknown subcommand
  CHECK(run_cli(dir, "dd --geometry x.csv --west 1").code == 2);  // --east missing
}

TEST_CASE("configuration failures exit with the validation code") {
  Fixture fx;

  SUBCASE("unknown preset") {
    const CliResult r =
        run_cli(fx.dir, "fit --config " + fx.config().string() + " --preset model9");
    CHECK(r.code == 2);
    CHECK(r.err.find("model9") != std::string::npos);
  }
  SUBCASE("malformed json") {
    spit(fx.dir / "bad.json", "{ this is not json");
    const CliResult r = run_cli(fx.dir, "fit --config " + (fx.dir / "bad.json").string());
    CHECK(r.code == 2);
  }
  SUBCASE("unknown config key") {
    const CliResult r = run_cli(
        fx.dir, "fit --config " + fx.config(",\n  \"n_iteratons\": 100").string());
    CHECK(r.code == 2);
    CHECK(r.err.find("n_iteratons") != std::string::npos);
  }
  SUBCASE("unreadable config file") {
    const CliResult r = run_cli(fx.dir, "fit --config " + (fx.dir / "absent.json").string());
    CHECK(r.code == 4);
  }
}

TEST_CASE("ingest failures are stage-tagged and row-addressed") {
  Fixture fx;
  const std::string good_cov = "site,salinity,dd\n1,10,0\n2,12,2\n";

  auto fit_with = [&](const std::string& counts_text, const std::string& cov_text) {
    spit(fx.dir / "c.csv", counts_text);
    spit(fx.dir / "v.csv", cov_text);
    const fs::path cfg = fx.dir / "cfg.json";
    spit(cfg, std::string("{\"counts_csv\": \"") + (fx.dir / "c.csv").string() +
                  "\", \"covariates_csv\": \"" + (fx.dir / "v.csv").string() +
                  "\", \"preset\": \"model4\", \"n_iterations\": 300, \"burn_in\": 100, " +
                  "\"thin\": 10, \"n_chains\": 2, \"seed\": 1}");
    return run_cli(fx.dir, "fit --config " + cfg.string() + " --out " +
                               (fx.dir / "out").string());
  };

  const std::string header = "site,replicate,m1,m2,m3,m4,m5,cardinality\n";

  SUBCASE("negative count") {
    const CliResult r =
        fit_with(header + "1,1,5,3,-1,4,2,50\n2,1,4,4,9,6,2,55\n", good_cov);
    CHECK(r.code == 2);
    CHECK(r.err.find("[ingest]") != std::string::npos);
    CHECK(r.err.find("negative") != std::string::npos);
  }
  SUBCASE("counts exceeding the cardinality") {
    const CliResult r =
        fit_with(header + "1,1,40,20,1,1,1,50\n2,1,4,4,9,6,2,55\n", good_cov);
    CHECK(r.code == 2);
    CHECK(r.err.find("exceed") != std::string::npos);
  }
  SUBCASE("duplicate site-replicate pair") {
    const CliResult r = fit_with(
        header + "1,1,5,3,1,4,2,50\n1,1,5,3,1,4,2,50\n2,1,4,4,9,6,2,55\n", good_cov);
    CHECK(r.code == 2);
    CHECK(r.err.find("duplicate") != std::string::npos);
  }
  SUBCASE("non-numeric cell is addressed by data row and column") {
    const CliResult r =
        fit_with(header + "1,1,5,3,1,4,2,50\n2,1,4,three,9,6,2,55\n", good_cov);
    CHECK(r.code == 2);
    CHECK(r.err.find("row 2") != std::string::npos);
    CHECK(r.err.find("m2") != std::string::npos);
  }
  SUBCASE("covariate table missing a site") {
    const CliResult r = fit_with(header + "1,1,5,3,1,4,2,50\n2,1,4,4,9,6,2,55\n",
                                 "site,salinity,dd\n1,10,0\n");
    CHECK(r.code == 2);
  }
  SUBCASE("sc must lie in (0,1] and depth must be positive") {
    const CliResult bad_sc = fit_with(header + "1,1,5,3,1,4,2,50\n2,1,4,4,9,6,2,55\n",
                                      "site,salinity,dd,sc\n1,10,0,1.5\n2,12,2,0.5\n");
    CHECK(bad_sc.code == 2);
    CHECK(bad_sc.err.find("sc") != std::string::npos);
    const CliResult bad_depth =
        fit_with(header + "1,1,5,3,1,4,2,50\n2,1,4,4,9,6,2,55\n",
                 "site,salinity,dd,depth\n1,10,0,5\n2,12,2,0\n");
    CHECK(bad_depth.code == 2);
    CHECK(bad_depth.err.find("depth") != std::string::npos);
  }
  SUBCASE("a failed run leaves no artifacts behind") {
    const CliResult r =
        fit_with(header + "1,1,5,3,-1,4,2,50\n", good_cov);
    CHECK(r.code == 2);
    CHECK_FALSE(fs::exists(fx.dir / "out" / "summary.csv"));
    CHECK_FALSE(fs::exists(fx.dir / "out" / "health.csv"));
  }
  SUBCASE("a preset needing absent columns names the column") {
    spit(fx.dir / "c.csv", header + "1,1,5,3,1,4,2,50\n2,1,4,4,9,6,2,55\n");
    spit(fx.dir / "v.csv", good_cov);
    const fs::path cfg = fx.dir / "cfg3.json";
    spit(cfg, std::string("{\"counts_csv\": \"") + (fx.dir / "c.csv").string() +
                  "\", \"covariates_csv\": \"" + (fx.dir / "v.csv").string() +
                  "\", \"preset\": \"model3\", \"n_iterations\": 300, \"burn_in\": 100, " +
                  "\"thin\": 10, \"n_chains\": 2, \"seed\": 1}");
    const CliResult r3 = run_cli(fx.dir, "fit --config " + cfg.string());
    CHECK(r3.code == 2);
    CHECK(r3.err.find("depth") != std::string::npos);
  }
}

TEST_CASE("simulate writes the full data set with generative values") {
  Fixture fx;
  CHECK(fs::exists(fx.counts));
  CHECK(fs::exists(fx.covariates));
  const std::string truth = slurp(fx.dir / "data" / "truth.csv");
  const std::set<std::string> names = first_column_set(truth);
  const std::set<std::string> expected = {
      "alpha_0", "alpha_sal", "alpha_DD", "sigma_delta", "theta_2",
      "sigma_H", "sigma_beta", "H_1", "H_2", "H_3", "H_4", "H_5", "H_6"};
  CHECK(names == expected);

  const auto counts_rows = parse_csv(slurp(fx.counts));
  CHECK(counts_rows[0] == std::vector<std::string>{"site", "replicate", "m1", "m2", "m3",
                                                   "m4", "m5", "cardinality"});
  CHECK(counts_rows.size() == 1 + 6 * 2);
  const auto cov_rows = parse_csv(slurp(fx.covariates));
  CHECK(cov_rows[0] == std::vector<std::string>{"site", "dd", "salinity"});
  CHECK(cov_rows.size() == 1 + 6);
}

TEST_CASE("fitted summary carries exactly the variant's parameters") {
  Fixture fx;

  SUBCASE("single-level diagonal variant") {
    const fs::path out = fx.dir / "fit4";
    const CliResult r = run_cli(fx.dir, "fit --config " + fx.config().string() +
                                            " --preset model4 --out " + out.string());
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::set<std::string> names = first_column_set(slurp(out / "summary.csv"));
    const std::set<std::string> expected = {
        "alpha_0", "alpha_DD", "theta_2", "sigma_H", "sigma_beta",
        "H_1", "H_2", "H_3", "H_4", "H_5", "H_6"};
    CHECK(names == expected);

    // Health table: one row per site, ranks a permutation of 1..6.
    const auto health = parse_csv(slurp(out / "health.csv"));
    CHECK(health[0] == std::vector<std::string>{"site", "lhfi", "q2.5", "q97.5", "rank"});
    REQUIRE(health.size() == 7);
    std::set<std::string> ranks, sites;
    for (std::size_t i = 1; i < health.size(); ++i) {
      sites.insert(health[i][0]);
      ranks.insert(health[i][4]);
    }
    CHECK(sites == std::set<std::string>{"1", "2", "3", "4", "5", "6"});
    CHECK(ranks == std::set<std::string>{"1", "2", "3", "4", "5", "6"});

    // DIC report has the three labelled lines.
    const std::string dic = slurp(out / "dic.txt");
    CHECK(dic.find("dic ") == 0);
    CHECK(dic.find("\np_d ") != std::string::npos);
    CHECK(dic.find("\nmean_deviance ") != std::string::npos);
  }

  SUBCASE("two-level correlated variant adds the upstream block") {
    const fs::path out = fx.dir / "fit2";
    const CliResult r = run_cli(fx.dir, "fit --config " + fx.config().string() +
                                            " --preset model2 --out " + out.string());
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::set<std::string> names = first_column_set(slurp(out / "summary.csv"));
    for (const std::string required :
         {"alpha_0", "alpha_sal", "alpha_DD", "rho", "sigma_delta", "variance_ratio"}) {
      CHECK_MESSAGE(names.count(required) == 1, required);
    }
  }
}

TEST_CASE("fits are deterministic and the seed flag overrides the config") {
  Fixture fx;
  const fs::path a = fx.dir / "a", b = fx.dir / "b", c = fx.dir / "c";
  const fs::path cfg = fx.config();
  REQUIRE(run_cli(fx.dir, "fit --config " + cfg.string() + " --preset model1 --out " +
                              a.string()).code == 0);
  REQUIRE(run_cli(fx.dir, "fit --config " + cfg.string() + " --preset model1 --out " +
                              b.string()).code == 0);
  REQUIRE(run_cli(fx.dir, "fit --config " + cfg.string() +
                              " --preset model1 --seed 7 --out " + c.string()).code == 0);

  for (const std::string name :
       {"summary.csv", "health.csv", "dic.txt", "bgr.csv", "trace.csv", "centring.csv"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(a / name));
    CHECK(slurp(a / name) == slurp(b / name));  // byte-identical rerun
  }
  CHECK(slurp(a / "trace.csv") != slurp(c / "trace.csv"));  // seed actually used
}

TEST_CASE("doubling thin halves the stored draws without moving the estimates") {
  Fixture fx;
  const fs::path coarse = fx.dir / "coarse", fine = fx.dir / "fine";
  REQUIRE(run_cli(fx.dir, "fit --config " +
                              fx.config(",\n  \"write_bgr\": false").string() +
                              " --preset model1 --out " + fine.string()).code == 0);
  REQUIRE(run_cli(fx.dir, "fit --config " +
                              fx.config(",\n  \"thin\": 40,\n  \"write_bgr\": false").string() +
                              " --preset model1 --out " + coarse.string()).code == 0);

  const auto fine_rows = parse_csv(slurp(fine / "trace.csv"));
  const auto coarse_rows = parse_csv(slurp(coarse / "trace.csv"));
  CHECK(fine_rows.size() - 1 == 2 * (coarse_rows.size() - 1));

  // alpha_0 pooled means agree within Monte Carlo error.
  const auto& header = fine_rows[0];
  std::size_t col = 0;
  while (col < header.size() && header[col] != "alpha_0") ++col;
  REQUIRE(col < header.size());
  std::vector<double> fine_draws, coarse_draws;
  for (std::size_t i = 1; i < fine_rows.size(); ++i) {
    fine_draws.push_back(std::stod(fine_rows[i][col]));
  }
  for (std::size_t i = 1; i < coarse_rows.size(); ++i) {
    coarse_draws.push_back(std::stod(coarse_rows[i][col]));
  }
  const double gap = std::fabs(testutil::mean(fine_draws) - testutil::mean(coarse_draws));
  const double se = std::sqrt(std::pow(testutil::batch_means_mcse(fine_draws), 2) +
                              std::pow(testutil::batch_means_mcse(coarse_draws), 2));
  CHECK(gap < 3.0 * se + 1e-12);
}

TEST_CASE("quiet logging suppresses progress notes") {
  Fixture fx;
  const CliResult loud = run_cli(fx.dir, "fit --config " + fx.config().string() +
                                             " --preset model4 --out " +
                                             (fx.dir / "loud").string());
  REQUIRE(loud.code == 0);
  CHECK_FALSE(loud.err.empty());
  const CliResult quiet = run_cli(fx.dir,
                                  "fit --config " + fx.config().string() +
                                      " --preset model4 --out " + (fx.dir / "quiet").string(),
                                  "LHFI_LOG=quiet ");
  REQUIRE(quiet.code == 0);
  CHECK(quiet.err.empty());
}

TEST_CASE("dd subcommand prints the projection table") {
  TempDir dir;
  spit(dir / "geometry.csv", "site,easting,northing\n1,0,0\n2,6,8\n3,3,4\n");
  const CliResult r =
      run_cli(dir, "dd --geometry " + (dir / "geometry.csv").string() + " --west 1 --east 2");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out == "site,dd\n1,0\n2,10\n3,5\n");

  const CliResult missing =
      run_cli(dir, "dd --geometry " + (dir / "geometry.csv").string() + " --west 1 --east 9");
  CHECK(missing.code == 2);
  const CliResult no_file =
      run_cli(dir, "dd --geometry " + (dir / "none.csv").string() + " --west 1 --east 2");
  CHECK(no_file.code == 4);
}
