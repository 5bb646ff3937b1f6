#include "reform/trainer/config.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "reform/common/binary_io.hpp"
#include "reform/common/error.hpp"
#include "reform/envs/env.hpp"

namespace reform::trainer {

namespace {

struct SimpleTag {
  const char* name;
  VariantKind kind;
};

constexpr SimpleTag kSimpleTags[] = {
    {"reform", VariantKind::reform},
    {"nodistill", VariantKind::nodistill},
    {"unbounded", VariantKind::unbounded},
    {"mlp-ng", VariantKind::mlp_ng},
    {"tanh-ng", VariantKind::tanh_ng},
    {"squashed-gaussian-ng", VariantKind::squashed_gaussian_ng},
    {"cube", VariantKind::cube},
    {"billiard", VariantKind::billiard},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Shortest decimal that reads back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + text +
                      "'");
  }
  return v;
}

std::vector<std::size_t> parse_widths(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::uint64_t w = parse_uint(key, trim(item));
    if (w == 0) throw ConfigError("config key '" + key + "': widths must be positive");
    out.push_back(w);
  }
  return out;
}

}  // namespace

std::string Variant::tag() const {
  switch (kind) {
    case VariantKind::gaussian:
      return "gaussian-" + format_double(param);
    case VariantKind::fql:
      return "fql-" + format_double(param);
    default:
      break;
  }
  for (const auto& t : kSimpleTags) {
    if (t.kind == kind) return t.name;
  }
  return "reform";
}

std::string Variant::valid_tags() {
  std::string out;
  for (const auto& t : kSimpleTags) out += std::string(t.name) + ", ";
  return out + "gaussian-<xi> (0 < xi < 1), fql-<alpha> (alpha >= 0)";
}

Variant Variant::parse(const std::string& tag) {
  for (const auto& t : kSimpleTags) {
    if (tag == t.name) return {t.kind, 0.0};
  }
  auto numeric = [&](std::string_view prefix, VariantKind kind) -> std::optional<Variant> {
    if (tag.rfind(prefix, 0) != 0) return std::nullopt;
    const std::string rest = tag.substr(prefix.size());
    double v = 0.0;
    const auto res = std::from_chars(rest.data(), rest.data() + rest.size(), v);
    if (rest.empty() || res.ec != std::errc() || res.ptr != rest.data() + rest.size()) {
      return std::nullopt;
    }
    return Variant{kind, v};
  };
  if (auto g = numeric("gaussian-", VariantKind::gaussian)) {
    if (g->param > 0.0 && g->param < 1.0) return *g;
  } else if (auto f = numeric("fql-", VariantKind::fql)) {
    if (f->param >= 0.0 && std::isfinite(f->param)) return *f;
  }
  throw ConfigError("unknown variant '" + tag + "'; valid variants: " + valid_tags());
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "env",         "variant",        "steps",      "batch_size",    "learning_rate",
      "gamma",       "tau",            "max_grad_norm", "flow_steps", "t_distribution",
      "hidden",      "aggregation",    "radius",     "eval_interval", "eval_episodes",
      "dump_samples", "seed"};
  return keys;
}

void TrainConfig::validate() const {
  envs::make_environment(env);
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "': " + why);
  };
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma", "must lie in [0, 1]");
  if (!(tau >= 0.0 && tau <= 1.0)) fail("tau", "must lie in [0, 1]");
  if (!(max_grad_norm > 0.0)) fail("max_grad_norm", "must be positive");
  if (flow_steps == 0) fail("flow_steps", "must be positive");
  if (t_distribution != "uniform") fail("t_distribution", "only 'uniform' is supported");
  if (radius && !(*radius > 0.0)) fail("radius", "must be positive or 'auto'");
  if (radius && variant.kind == VariantKind::gaussian) {
    fail("radius", "gaussian-<xi> derives its radius from xi; use 'auto'");
  }
  if (eval_interval == 0) fail("eval_interval", "must be positive");
  if (eval_episodes == 0) fail("eval_episodes", "must be positive");
}

std::string format_config(const TrainConfig& c) {
  std::string widths;
  for (std::size_t i = 0; i < c.hidden.size(); ++i) {
    widths += (i ? "," : "") + std::to_string(c.hidden[i]);
  }
  std::ostringstream o;
  o << "env = " << c.env << "\n"
    << "variant = " << c.variant.tag() << "\n"
    << "steps = " << c.steps << "\n"
    << "batch_size = " << c.batch_size << "\n"
    << "learning_rate = " << format_double(c.learning_rate) << "\n"
    << "gamma = " << format_double(c.gamma) << "\n"
    << "tau = " << format_double(c.tau) << "\n"
    << "max_grad_norm = " << format_double(c.max_grad_norm) << "\n"
    << "flow_steps = " << c.flow_steps << "\n"
    << "t_distribution = " << c.t_distribution << "\n"
    << "hidden = " << widths << "\n"
    << "aggregation = " << critic::to_string(c.aggregation) << "\n"
    << "radius = " << (c.radius ? format_double(*c.radius) : "auto") << "\n"
    << "eval_interval = " << c.eval_interval << "\n"
    << "eval_episodes = " << c.eval_episodes << "\n"
    << "dump_samples = " << c.dump_samples << "\n"
    << "seed = " << c.seed << "\n";
  return o.str();
}

TrainConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
      throw ConfigError("unknown config key '" + key + "' on line " + std::to_string(lineno));
    }
    if (!kv.emplace(key, value).second) {
      throw ConfigError("duplicate config key '" + key + "' on line " + std::to_string(lineno));
    }
  }
  for (const auto& key : config_keys()) {
    if (!kv.count(key)) throw ConfigError("missing config key '" + key + "'");
  }
  TrainConfig c;
  c.env = kv["env"];
  c.variant = Variant::parse(kv["variant"]);
  c.steps = parse_uint("steps", kv["steps"]);
  c.batch_size = parse_uint("batch_size", kv["batch_size"]);
  c.learning_rate = parse_double("learning_rate", kv["learning_rate"]);
  c.gamma = parse_double("gamma", kv["gamma"]);
  c.tau = parse_double("tau", kv["tau"]);
  c.max_grad_norm = parse_double("max_grad_norm", kv["max_grad_norm"]);
  c.flow_steps = parse_uint("flow_steps", kv["flow_steps"]);
  c.t_distribution = kv["t_distribution"];
  c.hidden = parse_widths("hidden", kv["hidden"]);
  c.aggregation = critic::aggregation_from_string(kv["aggregation"]);
  if (kv["radius"] == "auto") {
    c.radius.reset();
  } else {
    c.radius = parse_double("radius", kv["radius"]);
  }
  c.eval_interval = parse_uint("eval_interval", kv["eval_interval"]);
  c.eval_episodes = parse_uint("eval_episodes", kv["eval_episodes"]);
  c.dump_samples = parse_uint("dump_samples", kv["dump_samples"]);
  c.seed = parse_uint("seed", kv["seed"]);
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  return parse_config(binary::read_file(path.string()));
}

void save_config(const TrainConfig& cfg, const std::filesystem::path& path) {
  binary::write_file(path.string(), format_config(cfg));
}

double chi_square_radius(std::size_t d, double xi) {
  if (!(xi > 0.0 && xi < 1.0)) throw ConfigError("xi must lie in (0, 1)");
  const boost::math::chi_squared law(static_cast<double>(d));
  return std::sqrt(boost::math::quantile(law, xi));
}

VariantPlan plan_variant(const TrainConfig& cfg, std::size_t d) {
  using geometry::IntegratorMode;
  using geometry::SourceKind;
  const double l = cfg.radius.value_or(std::sqrt(static_cast<double>(d)));
  VariantPlan p;
  p.bc_domain = {d, l};
  p.noise.domain = {d, l};
  p.noise.integrator = {cfg.flow_steps, IntegratorMode::reflect_project, l};
  p.latent_bound = l;
  switch (cfg.variant.kind) {
    case VariantKind::reform:
      break;
    case VariantKind::nodistill:
      p.route = policy::ActorRoute::bc_flow;
      p.distill = false;
      break;
    case VariantKind::unbounded:
      p.bc_source = SourceKind::gaussian;
      p.noise.source = SourceKind::gaussian;
      p.noise.integrator.mode = IntegratorMode::plain;
      p.latent_bound.reset();
      break;
    case VariantKind::gaussian: {
      const double lx = chi_square_radius(d, cfg.variant.param);
      p.bc_source = SourceKind::gaussian;
      p.noise.domain.radius = lx;
      p.noise.integrator.radius = lx;
      p.latent_bound = lx;
      break;
    }
    case VariantKind::mlp_ng:
      p.noise.kind = policy::NoiseKind::mlp;
      break;
    case VariantKind::tanh_ng:
      p.noise.integrator.mode = IntegratorMode::plain;
      p.noise.tanh_output = true;
      break;
    case VariantKind::squashed_gaussian_ng:
      p.noise.kind = policy::NoiseKind::squashed_gaussian;
      break;
    case VariantKind::cube:
      p.bc_source = SourceKind::cube;
      p.noise.source = SourceKind::cube;
      p.noise.integrator.mode = IntegratorMode::reflect_cube;
      p.latent_bound = std::sqrt(static_cast<double>(d));
      break;
    case VariantKind::billiard:
      p.noise.integrator.mode = IntegratorMode::reflect_billiard;
      break;
    case VariantKind::fql:
      // The distillation distance becomes the actor's regularizer instead.
      p.has_generator = false;
      p.distill = false;
      break;
  }
  return p;
}

}  // namespace reform::trainer
