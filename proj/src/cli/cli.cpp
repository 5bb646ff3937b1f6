#include "reform/cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <string>

#include "reform/cli/commands.hpp"
#include "reform/common/error.hpp"
#include "reform/trainer/logging.hpp"

namespace reform::cli {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reflected-flow offline RL on desk-scale environments", "reform"};
  app.require_subcommand(1);

  GenDataOptions g;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate a behavior-policy dataset (RFDS)");
  gen->add_option("--env", g.env, "two-corner-bandit or line-world")->required();
  gen->add_option("--episodes", g.episodes, "Number of episodes")->required();
  gen->add_option("--seed", g.seed, "Master seed");
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output .rfds path")->required();

  TrainOptions t;
  std::string t_config, t_data, t_out;
  CLI::App* trn = app.add_subcommand("train", "Train one configuration");
  trn->add_option("--config", t_config, "key=value config file")->required();
  trn->add_option("--data", t_data, "RFDS dataset")->required();
  trn->add_option("--out", t_out, "Run directory")->required();
  trn->add_option("--seed", t.seed, "Override the config seed");
  trn->add_option("--variant", t.variant, "Override the config variant");
  trn->add_option("--steps", t.steps, "Override the config step count");

  EvalOptions e;
  std::string e_run, e_out;
  CLI::App* evl = app.add_subcommand("eval", "Evaluate a trained run's final checkpoint");
  evl->add_option("--run", e_run, "Run directory")->required();
  evl->add_option("--episodes", e.episodes, "Episodes (default 32)");
  evl->add_option("--seed", e.seed, "Evaluation seed");
  evl->add_option("--out", e_out, "Directory for returns.csv and samples.csv");

  std::string audit_run;
  CLI::App* aud = app.add_subcommand("audit", "Check latent bounds and the clip rate of a run");
  aud->add_option("--run", audit_run, "Run directory")->required();

  std::string viz_run, viz_out;
  CLI::App* vz = app.add_subcommand("viz", "Scatter plot (SVG) and CSV of a run's sample dump");
  vz->add_option("--run", viz_run, "Run directory")->required();
  vz->add_option("--out", viz_out, "Output path; .svg and .csv are written")->required();

  SweepOptions s;
  std::string s_config, s_data, s_out;
  CLI::App* swp = app.add_subcommand("sweep", "Train a grid of variants, radii and seeds");
  swp->add_option("--config", s_config, "key=value config file")->required();
  swp->add_option("--data", s_data, "RFDS dataset")->required();
  swp->add_option("--out", s_out, "Sweep directory")->required();
  swp->add_option("--variants", s.variants, "Variant tags")->delimiter(',');
  swp->add_option("--xi", s.xis, "gaussian-<xi> values")->delimiter(',');
  swp->add_option("--alpha", s.alphas, "fql-<alpha> values")->delimiter(',');
  swp->add_option("--radius", s.radii, "Latent radii")->delimiter(',');
  swp->add_option("--seeds", s.seeds, "Seeds (default 0)")->delimiter(',');
  swp->add_option("--steps", s.steps, "Override the config step count");
  swp->add_option("--jobs", s.jobs, "Parallel runs (default 1)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : exit_code(ErrorKind::usage);
  }

  g.out = gen_out;
  t.config = t_config;
  t.data = t_data;
  t.out = t_out;
  e.run = e_run;
  e.out = e_out;
  s.config = s_config;
  s.data = s_data;
  s.out = s_out;

  try {
    trainer::log_to_stderr();
    const char* level = std::getenv("RFORM_LOG_LEVEL");
    trainer::set_log_level(level ? level : "info");
    if (gen->parsed()) {
      gen_data(g, out);
    } else if (trn->parsed()) {
      train(t, out);
    } else if (evl->parsed()) {
      eval(e, out);
    } else if (aud->parsed()) {
      const AuditReport r = audit(audit_run);
      print_audit(r, out);
      return r.pass() ? 0 : kAuditFailed;
    } else if (vz->parsed()) {
      viz(viz_run, viz_out, out);
    } else if (swp->parsed()) {
      sweep(s, out);
    }
    return 0;
  } catch (const Error& ex) {
    err << "reform: " << to_string(ex.kind()) << ": " << ex.what() << "\n";
    return exit_code(ex.kind());
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "reform: " << to_string(ErrorKind::io) << ": " << ex.what() << "\n";
    return exit_code(ErrorKind::io);
  } catch (const std::exception& ex) {
    err << "reform: internal error: " << ex.what() << "\n";
    return 10;
  }
}

}  // namespace reform::cli
