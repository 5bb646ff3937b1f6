#include "reform/cli/commands.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <ostream>
#include <thread>

#include "reform/common/binary_io.hpp"
#include "reform/envs/env.hpp"
#include "reform/nn/checkpoint.hpp"
#include "reform/trainer/config.hpp"

namespace reform::cli {

namespace fs = std::filesystem;
using trainer::SampleDump;
using trainer::TrainConfig;

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

fs::path need_file(const fs::path& run, const char* name, const char* what) {
  const fs::path p = run / name;
  if (!fs::is_regular_file(p)) {
    throw IoError("run directory '" + run.string() + "' has no " + what + " (" + name + ")");
  }
  return p;
}

double latent_norm(const SampleDump& d, std::size_t i) {
  double s = 0.0;
  for (std::size_t j = 0; j < d.dim; ++j) s += d.z[i * d.dim + j] * d.z[i * d.dim + j];
  return std::sqrt(s);
}

std::size_t action_dim_of(const TrainConfig& cfg) {
  return envs::make_environment(cfg.env)->action_dim();
}

}  // namespace

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::config: return 3;
    case ErrorKind::io: return 4;
    case ErrorKind::format: return 5;
    case ErrorKind::numeric: return 6;
    case ErrorKind::precondition: return 7;
    case ErrorKind::contract: return 8;
    case ErrorKind::dimension: return 9;
  }
  return 10;
}

// ---- gen-data ---------------------------------------------------------------

envs::TransitionBatch gen_data(const GenDataOptions& opt, std::ostream& out) {
  if (opt.episodes == 0) throw UsageError("--episodes must be positive");
  const auto env = envs::make_environment(opt.env);
  const auto behavior = envs::make_behavior(*env);
  envs::TransitionBatch data = envs::generate_dataset(*env, *behavior, opt.episodes, opt.seed);
  envs::write_dataset(data, opt.out);
  out << "wrote " << data.size() << " rows (state dim " << data.state_dim << ", action dim "
      << data.action_dim << ") to " << opt.out.string() << "\n";
  return data;
}

// ---- train ------------------------------------------------------------------

TrainConfig resolve_config(const TrainOptions& opt) {
  TrainConfig cfg = trainer::load_config(opt.config);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.variant) cfg.variant = trainer::Variant::parse(*opt.variant);
  if (opt.steps) cfg.steps = *opt.steps;
  cfg.validate();
  return cfg;
}

trainer::RunArtifacts train(const TrainOptions& opt, std::ostream& out) {
  const TrainConfig cfg = resolve_config(opt);
  trainer::Trainer t(cfg, envs::read_dataset(opt.data));
  make_dirs(opt.out);
  trainer::RunArtifacts art = t.run(opt.out);
  out << "variant " << cfg.variant.tag() << ", seed " << cfg.seed << ", " << cfg.steps
      << " steps\n";
  if (cfg.steps > 0) {
    out << "final eval return " << num(art.final_eval.mean_return) << " over "
        << art.final_eval.returns.size() << " episodes\n";
  }
  out << "clip rate " << num(art.clip_rate()) << " (" << art.actions_clipped << " of "
      << art.actions_emitted << " actions)\n";
  out << "artifacts in " << opt.out.string() << "\n";
  return art;
}

// ---- eval -------------------------------------------------------------------

trainer::EvalResult eval(const EvalOptions& opt, std::ostream& out) {
  if (opt.episodes == 0) throw UsageError("--episodes must be positive");
  const TrainConfig cfg = trainer::load_config(need_file(opt.run, "config.txt", "config"));
  const auto env = envs::make_environment(cfg.env);
  trainer::Trainer t(cfg, envs::TransitionBatch{env->state_dim(), env->action_dim()});
  t.restore(nn::load_checkpoint(need_file(opt.run, "final.rfck", "final checkpoint").string()));
  Rng rng = Rng::stream(opt.seed, "eval/cli");
  trainer::EvalResult ev = t.evaluate(opt.episodes, rng, true);
  out << "mean return " << num(ev.mean_return) << " over " << opt.episodes << " episodes\n";
  out << "clipped " << ev.clipped << " of " << ev.actions << " actions\n";
  if (!opt.out.empty()) {
    make_dirs(opt.out);
    std::string returns = "episode,return\n";
    for (std::size_t i = 0; i < ev.returns.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, ev.returns[i]);
      returns += buf;
    }
    binary::write_file((opt.out / "returns.csv").string(), returns);
    binary::write_file((opt.out / "samples.csv").string(), trainer::format_samples(ev.samples));
  }
  return ev;
}

// ---- audit ------------------------------------------------------------------

AuditReport audit(const fs::path& run) {
  const TrainConfig cfg = trainer::load_config(need_file(run, "config.txt", "config"));
  const SampleDump dump = trainer::parse_samples(
      binary::read_file(need_file(run, "samples.csv", "sample dump").string()));
  const auto metrics = trainer::parse_metrics(
      binary::read_file(need_file(run, "metrics.csv", "metrics log").string()));

  AuditReport r;
  r.bound = trainer::plan_variant(cfg, action_dim_of(cfg)).latent_bound;
  r.samples = dump.size();
  for (std::size_t i = 0; i < dump.size(); ++i) {
    const double n = latent_norm(dump, i);
    if (n > r.max_norm) {
      r.max_norm = n;
      r.max_norm_row = i;
    }
    if (r.bound && !(n <= *r.bound * (1.0 + 1e-12))) r.violations.push_back(i);
  }
  // The logged rate is cumulative, so the last row covers the whole run.
  if (!metrics.empty()) r.clip_rate = metrics.back().clip_rate;
  return r;
}

void print_audit(const AuditReport& r, std::ostream& out) {
  out << "samples " << r.samples << "\n";
  out << "max latent norm " << num(r.max_norm) << " (row " << r.max_norm_row << ")\n";
  if (r.bound) {
    out << "latent bound " << num(*r.bound) << " (tolerance 1e-12 relative)\n";
  } else {
    out << "latent bound none (variant has an unbounded latent)\n";
  }
  out << "latent violations " << r.violations.size() << "\n";
  const std::size_t shown = std::min<std::size_t>(r.violations.size(), 10);
  for (std::size_t k = 0; k < shown; ++k) {
    out << "  row " << r.violations[k] << " exceeds the bound\n";
  }
  out << "clip rate " << num(r.clip_rate) << " (limit 1e-3)\n";
  out << "audit " << (r.pass() ? "PASS" : "FAIL") << "\n";
}

// ---- viz --------------------------------------------------------------------

std::string render_svg(const SampleDump& dump, double radius) {
  const double half = 1.1 * std::max(radius, 1.0);
  const double mark = half / 120.0;
  const double stroke = half / 400.0;
  auto coord = [&](const std::vector<double>& v, std::size_t i, std::size_t j) {
    return j < dump.dim ? v[i * dump.dim + j] : 0.0;
  };
  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"600\" viewBox=\"" +
       num(-half) + " " + num(-half) + " " + num(2 * half) + " " + num(2 * half) + "\">\n";
  s += "<rect class=\"background\" x=\"" + num(-half) + "\" y=\"" + num(-half) + "\" width=\"" +
       num(2 * half) + "\" height=\"" + num(2 * half) + "\" fill=\"white\"/>\n";
  // Flip y so that up is positive.
  s += "<g transform=\"scale(1,-1)\">\n";
  s += "<rect class=\"box\" x=\"-1\" y=\"-1\" width=\"2\" height=\"2\" fill=\"none\" "
       "stroke=\"#555555\" stroke-width=\"" + num(stroke) + "\"/>\n";
  s += "<circle class=\"boundary\" cx=\"0\" cy=\"0\" r=\"" + num(radius) +
       "\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"" + num(stroke) + "\"/>\n";
  for (std::size_t i = 0; i < dump.size(); ++i) {
    const double x = coord(dump.z, i, 0), y = coord(dump.z, i, 1);
    s += "<path class=\"latent\" d=\"M" + num(x - mark) + " " + num(y) + "H" + num(x + mark) +
         "M" + num(x) + " " + num(y - mark) + "V" + num(y + mark) +
         "\" stroke=\"#2e86c1\" stroke-width=\"" + num(stroke) + "\"/>\n";
  }
  for (std::size_t i = 0; i < dump.size(); ++i) {
    const double x = coord(dump.a, i, 0), y = coord(dump.a, i, 1);
    s += "<rect class=\"action\" x=\"" + num(x - mark / 2) + "\" y=\"" + num(y - mark / 2) +
         "\" width=\"" + num(mark) + "\" height=\"" + num(mark) +
         "\" fill=\"#1e8449\" fill-opacity=\"0.6\"/>\n";
  }
  s += "</g>\n</svg>\n";
  return s;
}

VizOutputs viz(const fs::path& run, const fs::path& out, std::ostream& log) {
  const TrainConfig cfg = trainer::load_config(need_file(run, "config.txt", "config"));
  const SampleDump dump = trainer::parse_samples(
      binary::read_file(need_file(run, "samples.csv", "sample dump").string()));
  if (dump.size() == 0) throw PreconditionError("sample dump in '" + run.string() + "' is empty");
  std::optional<double> radius = trainer::plan_variant(cfg, action_dim_of(cfg)).latent_bound;
  if (!radius) {
    double m = 0.0;
    for (std::size_t i = 0; i < dump.size(); ++i) m = std::max(m, latent_norm(dump, i));
    radius = m;
  }
  VizOutputs o{fs::path(out).replace_extension(".svg"), fs::path(out).replace_extension(".csv")};
  if (o.svg.has_parent_path()) make_dirs(o.svg.parent_path());
  binary::write_file(o.svg.string(), render_svg(dump, *radius));
  binary::write_file(o.csv.string(), trainer::format_samples(dump));
  log << "wrote " << o.svg.string() << " and " << o.csv.string() << " (" << dump.size()
      << " samples)\n";
  return o;
}

// ---- sweep ------------------------------------------------------------------

std::string format_sweep(const std::vector<SweepRow>& rows) {
  std::string s = "variant,radius,seed,final_return,clip_rate,coverage_low,coverage_high\n";
  for (const SweepRow& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof buf, ",%llu,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(r.seed), r.final_return, r.clip_rate,
                  r.coverage_low, r.coverage_high);
    s += r.variant + "," + (r.radius ? num(*r.radius) : std::string("auto")) + buf;
  }
  return s;
}

std::vector<SweepRow> sweep(const SweepOptions& opt, std::ostream& out) {
  std::vector<std::string> tags = opt.variants;
  for (double xi : opt.xis) tags.push_back("gaussian-" + num(xi));
  for (double a : opt.alphas) tags.push_back("fql-" + num(a));
  if (tags.empty()) throw UsageError("sweep needs at least one variant, --xi or --alpha value");
  if (opt.seeds.empty()) throw UsageError("sweep needs at least one seed");
  if (opt.jobs == 0) throw UsageError("--jobs must be positive");

  const TrainConfig base = trainer::load_config(opt.config);
  std::vector<TrainConfig> configs;
  std::vector<SweepRow> rows;
  for (const std::string& tag : tags) {
    const trainer::Variant v = trainer::Variant::parse(tag);
    std::vector<std::optional<double>> radii;
    // gaussian-<xi> fixes its own radius.
    if (opt.radii.empty() || v.kind == trainer::VariantKind::gaussian) {
      radii.push_back(std::nullopt);
    } else {
      for (double r : opt.radii) radii.push_back(r);
    }
    for (const auto& radius : radii) {
      for (std::uint64_t seed : opt.seeds) {
        TrainConfig c = base;
        c.variant = v;
        c.seed = seed;
        if (radius) c.radius = radius;
        if (opt.steps) c.steps = *opt.steps;
        c.validate();
        SweepRow row;
        row.variant = v.tag();
        row.radius = radius;
        row.seed = seed;
        std::string name = row.variant;
        if (radius) name += "-r" + num(*radius);
        row.dir = opt.out / name / ("seed-" + std::to_string(seed));
        configs.push_back(std::move(c));
        rows.push_back(std::move(row));
      }
    }
  }

  const envs::TransitionBatch data = envs::read_dataset(opt.data);
  make_dirs(opt.out);
  std::vector<std::exception_ptr> errors(rows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      try {
        trainer::Trainer t(configs[i], data);
        const trainer::RunArtifacts art = t.run(rows[i].dir);
        rows[i].final_return = art.final_eval.mean_return;
        rows[i].clip_rate = art.clip_rate();
        std::tie(rows[i].coverage_low, rows[i].coverage_high) =
            trainer::corner_coverage(art.final_eval.samples);
        spdlog::info("sweep run {} done: return {:.4g}", rows[i].dir.string(),
                     rows[i].final_return);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const std::size_t n = std::min(opt.jobs, rows.size());
    for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
    worker();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  const std::string summary = format_sweep(rows);
  binary::write_file((opt.out / "summary.csv").string(), summary);
  out << summary;
  return rows;
}

}  // namespace reform::cli
