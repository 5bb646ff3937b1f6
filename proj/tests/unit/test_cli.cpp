#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "reform/cli/cli.hpp"
#include "reform/cli/commands.hpp"
#include "reform/envs/dataset.hpp"
#include "reform/trainer/config.hpp"
#include "reform/trainer/trainer.hpp"

using namespace reform;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out, err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "reform");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("reform_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream o(p, std::ios::binary);
  o << s;
}

trainer::TrainConfig tiny_config(const std::string& env = "two-corner-bandit") {
  trainer::TrainConfig c;
  c.env = env;
  c.steps = 6;
  c.batch_size = 8;
  c.hidden = {8, 8};
  c.flow_steps = 3;
  c.eval_interval = 3;
  c.eval_episodes = 4;
  c.dump_samples = 10;
  c.seed = 5;
  return c;
}

// Run directory holding only what `audit` and `viz` read.
fs::path fixture_run(const std::string& name, const trainer::SampleDump& dump,
                     double clip_rate = 0.0) {
  const fs::path dir = fresh_dir(name);
  trainer::TrainConfig cfg = tiny_config();
  cfg.radius = 1.0;
  trainer::save_config(cfg, dir / "config.txt");
  spit(dir / "samples.csv", trainer::format_samples(dump));
  trainer::MetricsRow m;
  m.step = 6;
  m.clip_rate = clip_rate;
  spit(dir / "metrics.csv", trainer::format_metrics({m}));
  return dir;
}

trainer::SampleDump three_points(double last_norm = 0.5) {
  trainer::SampleDump d;
  d.dim = 2;
  d.w = {0.1, 0.2, -0.3, 0.4, 0.0, 0.5};
  d.z = {0.3, 0.4, -0.6, 0.0, 0.0, last_norm};
  d.a = {0.25, 0.5, -0.5, 0.125, 0.0, 0.75};
  return d;
}

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + 1)) ++n;
  return n;
}

// Tags must nest and close; enough to catch truncated or unbalanced output.
bool balanced_xml(const std::string& s) {
  std::vector<std::string> stack;
  std::size_t p = 0;
  while ((p = s.find('<', p)) != std::string::npos) {
    const std::size_t e = s.find('>', p);
    if (e == std::string::npos) return false;
    std::string tag = s.substr(p + 1, e - p - 1);
    p = e + 1;
    if (tag.empty() || tag[0] == '?' || tag[0] == '!') continue;
    if (tag.back() == '/') continue;
    const bool closing = tag[0] == '/';
    std::string name = tag.substr(closing ? 1 : 0);
    name = name.substr(0, name.find_first_of(" \t\n"));
    if (closing) {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      stack.push_back(name);
    }
  }
  return stack.empty();
}

}  // namespace

TEST_CASE("cli: gen-data writes 10000 rows and repeats byte for byte") {
  const fs::path dir = fresh_dir("gen");
  const auto a = run({"gen-data", "--env", "two-corner-bandit", "--episodes", "10000", "--seed",
                      "0", "--out", (dir / "a.rfds").string()});
  const auto b = run({"gen-data", "--env", "two-corner-bandit", "--episodes", "10000", "--seed",
                      "0", "--out", (dir / "b.rfds").string()});
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.out.find("wrote 10000 rows") != std::string::npos);
  CHECK(slurp(dir / "a.rfds") == slurp(dir / "b.rfds"));
  CHECK(envs::read_dataset(dir / "a.rfds").size() == 10000);
}

TEST_CASE("cli: usage and config errors map to their exit codes") {
  const fs::path dir = fresh_dir("errors");
  const auto zero = run({"gen-data", "--env", "two-corner-bandit", "--episodes", "0", "--out",
                         (dir / "x.rfds").string()});
  CHECK(zero.code == 2);
  CHECK(!fs::exists(dir / "x.rfds"));

  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"gen-data", "--env", "nowhere", "--episodes", "3", "--out",
             (dir / "y.rfds").string()})
            .code == 3);
  CHECK(run({"gen-data", "--env", "line-world", "--episodes", "3", "--out",
             (dir / "no/such/dir/z.rfds").string()})
            .code == 4);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("cli: train reports missing keys, unknown variants and dimension mismatches") {
  const fs::path dir = fresh_dir("train_errors");
  REQUIRE(run({"gen-data", "--env", "two-corner-bandit", "--episodes", "64", "--out",
               (dir / "bandit.rfds").string()})
              .code == 0);
  REQUIRE(run({"gen-data", "--env", "line-world", "--episodes", "4", "--out",
               (dir / "line.rfds").string()})
              .code == 0);

  std::string text = trainer::format_config(tiny_config());
  const auto at = text.find("learning_rate =");
  text.erase(at, text.find('\n', at) - at + 1);
  spit(dir / "missing.txt", text);
  const auto missing = run({"train", "--config", (dir / "missing.txt").string(), "--data",
                            (dir / "bandit.rfds").string(), "--out", (dir / "r0").string()});
  CHECK(missing.code == 3);
  CHECK(missing.err.find("learning_rate") != std::string::npos);

  trainer::save_config(tiny_config(), dir / "ok.txt");
  const auto bogus =
      run({"train", "--config", (dir / "ok.txt").string(), "--data", (dir / "bandit.rfds").string(),
           "--out", (dir / "r1").string(), "--variant", "bogus"});
  CHECK(bogus.code == 3);
  CHECK(bogus.err.find("squashed-gaussian-ng") != std::string::npos);
  CHECK(bogus.err.find("fql-") != std::string::npos);

  const auto dims =
      run({"train", "--config", (dir / "ok.txt").string(), "--data", (dir / "line.rfds").string(),
           "--out", (dir / "r2").string()});
  CHECK(dims.code == 3);
  CHECK(dims.err.find("do not match environment") != std::string::npos);

  const auto nodata = run({"train", "--config", (dir / "ok.txt").string(), "--data",
                           (dir / "absent.rfds").string(), "--out", (dir / "r3").string()});
  CHECK(nodata.code == 4);
}

TEST_CASE("cli: train, eval, audit and viz on a real run") {
  const fs::path dir = fresh_dir("pipeline");
  REQUIRE(run({"gen-data", "--env", "two-corner-bandit", "--episodes", "256", "--seed", "1",
               "--out", (dir / "d.rfds").string()})
              .code == 0);
  trainer::save_config(tiny_config(), dir / "c.txt");
  const auto tr =
      run({"train", "--config", (dir / "c.txt").string(), "--data", (dir / "d.rfds").string(),
           "--out", (dir / "run").string(), "--variant", "reform", "--seed", "3"});
  REQUIRE(tr.code == 0);

  const auto metrics = trainer::parse_metrics(slurp(dir / "run" / "metrics.csv"));
  REQUIRE(!metrics.empty());
  for (const auto& m : metrics) {
    CHECK(std::isfinite(m.loss_critic));
    CHECK(std::isfinite(m.loss_bc));
    CHECK(std::isfinite(m.loss_distill));
    CHECK(std::isfinite(m.loss_actor));
    CHECK(std::isfinite(m.eval_return));
  }
  CHECK(trainer::load_config(dir / "run" / "config.txt").seed == 3);

  const auto au = run({"audit", "--run", (dir / "run").string()});
  CHECK(au.code == 0);
  CHECK(au.out.find("audit PASS") != std::string::npos);

  const std::string before = slurp(dir / "run" / "samples.csv") + slurp(dir / "run" / "final.rfck");
  const auto e1 = run({"eval", "--run", (dir / "run").string(), "--episodes", "8", "--seed", "4",
                       "--out", (dir / "e1").string()});
  const auto e2 = run({"eval", "--run", (dir / "run").string(), "--episodes", "8", "--seed", "4",
                       "--out", (dir / "e2").string()});
  REQUIRE(e1.code == 0);
  CHECK(e1.out == e2.out);
  CHECK(slurp(dir / "e1" / "returns.csv") == slurp(dir / "e2" / "returns.csv"));
  CHECK(slurp(dir / "e1" / "samples.csv") == slurp(dir / "e2" / "samples.csv"));

  REQUIRE(run({"viz", "--run", (dir / "run").string(), "--out", (dir / "plot").string()}).code ==
          0);
  CHECK(balanced_xml(slurp(dir / "plot.svg")));
  const std::string after = slurp(dir / "run" / "samples.csv") + slurp(dir / "run" / "final.rfck");
  CHECK(before == after);
}

TEST_CASE("cli: audit flags a latent outside the ball and names its row") {
  const fs::path ok = fixture_run("audit_ok", three_points(1.0));
  const auto pass = run({"audit", "--run", ok.string()});
  CHECK(pass.code == 0);
  CHECK(pass.out.find("audit PASS") != std::string::npos);

  const fs::path bad = fixture_run("audit_bad", three_points(1.01));
  const auto fail = run({"audit", "--run", bad.string()});
  CHECK(fail.code == 1);
  CHECK(fail.out.find("row 2 exceeds") != std::string::npos);
  CHECK(fail.out.find("audit FAIL") != std::string::npos);

  const auto report = cli::audit(bad);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0] == 2);
  CHECK(report.max_norm_row == 2);
  CHECK(report.max_norm == doctest::Approx(1.01));

  const fs::path clipped = fixture_run("audit_clip", three_points(), 0.01);
  const auto clip = run({"audit", "--run", clipped.string()});
  CHECK(clip.code == 1);

  fs::remove(ok / "samples.csv");
  CHECK(run({"audit", "--run", ok.string()}).code == 4);
}

TEST_CASE("cli: viz draws one marker per sample and one boundary circle") {
  const fs::path run_dir = fixture_run("viz", three_points());
  const fs::path out = run_dir.parent_path() / "reform_cli_viz_plot";
  REQUIRE(run({"viz", "--run", run_dir.string(), "--out", out.string()}).code == 0);
  const std::string svg = slurp(out.string() + ".svg");
  CHECK(count(svg, "class=\"action\"") == 3);
  CHECK(count(svg, "<circle") == 1);
  CHECK(svg.find("class=\"boundary\" cx=\"0\" cy=\"0\" r=\"1\"") != std::string::npos);
  CHECK(balanced_xml(svg));

  const std::string csv = slurp(out.string() + ".csv");
  REQUIRE(run({"viz", "--run", run_dir.string(), "--out", out.string()}).code == 0);
  CHECK(slurp(out.string() + ".csv") == csv);
  CHECK(slurp(out.string() + ".svg") == svg);
  CHECK(csv == trainer::format_samples(three_points()));

  trainer::SampleDump empty;
  empty.dim = 2;
  const fs::path none = fixture_run("viz_empty", empty);
  const auto e = run({"viz", "--run", none.string(), "--out", (none / "p").string()});
  CHECK(e.code == 7);
  CHECK(!fs::exists(none / "p.svg"));
}

TEST_CASE("cli: sweep runs match standalone training") {
  const fs::path dir = fresh_dir("sweep");
  REQUIRE(run({"gen-data", "--env", "two-corner-bandit", "--episodes", "128", "--out",
               (dir / "d.rfds").string()})
              .code == 0);
  trainer::save_config(tiny_config(), dir / "c.txt");
  const auto sw = run({"sweep", "--config", (dir / "c.txt").string(), "--data",
                       (dir / "d.rfds").string(), "--out", (dir / "grid").string(), "--variants",
                       "reform,nodistill", "--seeds", "0,1", "--jobs", "2"});
  REQUIRE(sw.code == 0);
  const std::string summary = slurp(dir / "grid" / "summary.csv");
  CHECK(count(summary, "\n") == 5);
  CHECK(summary.rfind("variant,radius,seed,final_return,clip_rate,coverage_low,coverage_high", 0) ==
        0);

  REQUIRE(run({"train", "--config", (dir / "c.txt").string(), "--data", (dir / "d.rfds").string(),
               "--out", (dir / "solo").string(), "--variant", "nodistill", "--seed", "1"})
              .code == 0);
  fs::path swept;
  for (const auto& e : fs::directory_iterator(dir / "grid"))
    if (e.path().filename().string().rfind("nodistill", 0) == 0) swept = e.path() / "seed-1";
  REQUIRE(!swept.empty());
  for (const char* f : {"final.rfck", "metrics.csv", "samples.csv", "config.txt"})
    CHECK(slurp(swept / f) == slurp(dir / "solo" / f));
}
