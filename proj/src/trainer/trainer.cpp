#include "reform/trainer/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "reform/common/binary_io.hpp"
#include "reform/common/error.hpp"
#include "reform/geometry/ball.hpp"

namespace reform::trainer {

using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

nn::AdamOptions adam_options(const TrainConfig& c) {
  nn::AdamOptions o;
  o.learning_rate = c.learning_rate;
  o.max_grad_norm = c.max_grad_norm;
  return o;
}

std::vector<nn::Parameter*> concat(std::vector<nn::Parameter*> a,
                                   const std::vector<nn::Parameter*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string axis_name(char prefix, std::size_t j) {
  if (j == 0) return std::string(1, prefix) + "x";
  if (j == 1) return std::string(1, prefix) + "y";
  return std::string(1, prefix) + std::to_string(j);
}

std::string samples_header(std::size_t d) {
  std::string h;
  for (char p : {'w', 'z', 'a'}) {
    for (std::size_t j = 0; j < d; ++j) h += axis_name(p, j) + ",";
  }
  return h + "znorm";
}

Tensor stack_rows(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  Tensor t = Tensor::matrix(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), t.row(i).begin());
  }
  return t;
}

// Clips in place; returns the number of rows that needed it.
std::size_t clip_to_box(Tensor& a) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    bool hit = false;
    for (double& v : a.row(i)) {
      if (v > 1.0 || v < -1.0) {
        v = std::clamp(v, -1.0, 1.0);
        hit = true;
      }
    }
    n += hit;
  }
  return n;
}

void record(SampleDump& d, const Tensor& w, const Tensor& z, const Tensor& a, std::size_t row) {
  for (double v : w.row(row)) d.w.push_back(v);
  for (double v : z.row(row)) d.z.push_back(v);
  for (double v : a.row(row)) d.a.push_back(v);
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, envs::TransitionBatch dataset)
    : cfg_(std::move(cfg)), env_(envs::make_environment(cfg_.env)), data_(std::move(dataset)) {
  cfg_.validate();
  data_.validate();
  if (data_.state_dim != env_->state_dim() || data_.action_dim != env_->action_dim()) {
    throw ConfigError("dataset dims (state " + std::to_string(data_.state_dim) + ", action " +
                      std::to_string(data_.action_dim) + ") do not match environment '" +
                      env_->name() + "' (state " + std::to_string(env_->state_dim()) +
                      ", action " + std::to_string(env_->action_dim()) + ")");
  }
  const std::size_t S = env_->state_dim();
  const std::size_t d = env_->action_dim();
  plan_ = plan_variant(cfg_, d);

  // Each network draws its initial weights from its own stream.
  Rng init_bc = Rng::stream(cfg_.seed, "init/bc");
  Rng init_ng = Rng::stream(cfg_.seed, "init/ng");
  Rng init_os = Rng::stream(cfg_.seed, "init/onestep");
  Rng init_q = Rng::stream(cfg_.seed, "init/critic");
  bc_ = policy::BcFlowPolicy(S, d, cfg_.hidden, plan_.bc_source, plan_.bc_domain, cfg_.flow_steps,
                             init_bc);
  if (plan_.has_generator) ng_ = policy::NoiseGenerator(S, d, cfg_.hidden, plan_.noise, init_ng);
  onestep_ = policy::OneStepPolicy(S, d, cfg_.hidden, init_os);
  critic_ = critic::CriticPair(S, d, cfg_.hidden, cfg_.aggregation, cfg_.gamma, init_q);

  const auto opts = adam_options(cfg_);
  opt_critic_ = nn::Adam(critic_.online_parameters(), opts);
  opt_bc_ = nn::Adam(bc_.parameters(), opts);
  opt_onestep_ = nn::Adam(onestep_.parameters(), opts);
  if (plan_.has_generator) opt_ng_ = nn::Adam(ng_.parameters(), opts);

  rng_data_ = Rng::stream(cfg_.seed, "data");
  rng_bc_ = Rng::stream(cfg_.seed, "bc");
  rng_ng_ = Rng::stream(cfg_.seed, "ng");
  rng_critic_ = Rng::stream(cfg_.seed, "critic");
}

critic::BatchTensors Trainer::sample_batch() {
  if (data_.empty()) throw PreconditionError("training dataset is empty");
  std::vector<std::size_t> idx(cfg_.batch_size);
  for (auto& i : idx) i = rng_data_.below(data_.size());
  return critic::BatchTensors::from(data_.gather(idx));
}

policy::LatentAction Trainer::act(const Tensor& states, Rng& rng, Tensor* w_out) {
  const std::size_t n = states.rows();
  if (!plan_.has_generator) {
    Tensor w = bc_.sample_latent(rng, n);
    Tensor a = onestep_(w, states);
    if (w_out) *w_out = w;
    return {std::move(w), std::move(a)};
  }
  Tensor w = ng_.sample_input(rng, n);
  policy::LatentAction la = policy::compose_policy_action(ng_, onestep_, bc_, states, w, plan_.route);
  if (w_out) *w_out = std::move(w);
  return la;
}

Tensor Trainer::next_actions(const Tensor& next_states) {
  return act(next_states, rng_critic_).action;
}

void Trainer::check_finite(double loss, const char* name) const {
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite " + std::string(name) + " at step " +
                       std::to_string(steps_done_ + 1));
  }
}

double Trainer::update_critic(const critic::BatchTensors& b) {
  const bool terminal = std::all_of(b.dones.data().begin(), b.dones.data().end(),
                                    [](double x) { return x == 1.0; });
  const Tensor a_next = terminal ? Tensor::matrix(b.rewards.rows(), env_->action_dim())
                                 : next_actions(b.next_states);
  nn::zero_grads(opt_critic_.parameters());
  Tape tape;
  const Var loss = critic::td_loss(tape, critic_, b, a_next);
  const double value = tape.value(loss).item();
  check_finite(value, "loss_critic");
  tape.backward(loss);
  opt_critic_.step();
  return value;
}

double Trainer::update_bc(const critic::BatchTensors& b) {
  const std::size_t n = b.actions.rows();
  const Tensor z = bc_.sample_latent(rng_bc_, n);
  Tensor t = Tensor::matrix(n, 1);
  for (double& v : t.data()) v = rng_bc_.uniform();
  nn::zero_grads(opt_bc_.parameters());
  Tape tape;
  const Var loss = policy::bc_loss(tape, bc_, b.states, b.actions, z, t);
  const double value = tape.value(loss).item();
  check_finite(value, "loss_bc");
  tape.backward(loss);
  opt_bc_.step();
  return value;
}

double Trainer::update_distill(const critic::BatchTensors& b) {
  if (!plan_.distill) return 0.0;
  const Tensor z = bc_.sample_latent(rng_bc_, b.states.rows());
  nn::zero_grads(opt_onestep_.parameters());
  Tape tape;
  const Var loss = policy::distill_loss(tape, onestep_, bc_, b.states, z);
  const double value = tape.value(loss).item();
  check_finite(value, "loss_distill");
  tape.backward(loss);
  opt_onestep_.step();
  return value;
}

double Trainer::update_actor(const critic::BatchTensors& b) {
  const std::size_t n = b.states.rows();
  Tape tape;
  Var loss;
  nn::Adam* opt = nullptr;
  if (plan_.has_generator) {
    const Tensor w = ng_.sample_input(rng_ng_, n);
    nn::zero_grads(opt_ng_.parameters());
    loss = policy::actor_loss(tape, ng_, onestep_, bc_, critic_, b.states, w, plan_.route);
    opt = &opt_ng_;
  } else {
    const Tensor z = bc_.sample_latent(rng_ng_, n);
    nn::zero_grads(opt_onestep_.parameters());
    loss = policy::regularized_actor_loss(tape, onestep_, bc_, critic_, b.states, z,
                                          cfg_.variant.param);
    opt = &opt_onestep_;
  }
  const double value = tape.value(loss).item();
  check_finite(value, "loss_actor");
  tape.backward(loss);
  opt->step();
  return value;
}

void Trainer::update_targets() { critic_.update_targets(cfg_.tau); }

StepLosses Trainer::step() {
  const critic::BatchTensors b = sample_batch();
  StepLosses l;
  l.critic = update_critic(b);
  l.bc = update_bc(b);
  l.distill = update_distill(b);
  l.actor = update_actor(b);
  update_targets();
  ++steps_done_;
  return l;
}

EvalResult Trainer::evaluate(std::size_t episodes, Rng& rng, bool keep_samples) {
  const std::size_t S = env_->state_dim();
  const std::size_t d = env_->action_dim();
  EvalResult out;
  out.returns.assign(episodes, 0.0);
  out.samples.dim = d;
  std::vector<std::vector<double>> states(episodes);
  for (auto& s : states) s = env_->reset(rng);
  std::vector<std::size_t> active(episodes);
  for (std::size_t i = 0; i < episodes; ++i) active[i] = i;
  for (std::size_t t = 0; t < env_->horizon() && !active.empty(); ++t) {
    std::vector<std::vector<double>> rows;
    rows.reserve(active.size());
    for (std::size_t i : active) rows.push_back(states[i]);
    Tensor w;
    policy::LatentAction la = act(stack_rows(rows, S), rng, &w);
    out.clipped += clip_to_box(la.action);
    out.actions += active.size();
    std::vector<std::size_t> still;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const std::size_t i = active[k];
      if (keep_samples) record(out.samples, w, la.z, la.action, k);
      envs::StepResult r = env_->step(states[i], la.action.row(k));
      out.returns[i] += r.reward;
      states[i] = std::move(r.next_state);
      if (!r.done) still.push_back(i);
    }
    active = std::move(still);
  }
  double total = 0.0;
  for (double r : out.returns) total += r;
  out.mean_return = episodes ? total / static_cast<double>(episodes) : 0.0;
  emitted_ += out.actions;
  clipped_ += out.clipped;
  return out;
}

EvalResult Trainer::dump_samples(std::size_t n, Rng& rng) {
  EvalResult out;
  out.samples.dim = env_->action_dim();
  if (n == 0) return out;
  std::vector<std::vector<double>> rows(n);
  for (auto& s : rows) s = env_->reset(rng);
  Tensor w;
  policy::LatentAction la = act(stack_rows(rows, env_->state_dim()), rng, &w);
  out.clipped = clip_to_box(la.action);
  out.actions = n;
  for (std::size_t i = 0; i < n; ++i) record(out.samples, w, la.z, la.action, i);
  emitted_ += out.actions;
  clipped_ += out.clipped;
  return out;
}

std::vector<nn::Parameter*> Trainer::all_parameters() {
  std::vector<nn::Parameter*> params = bc_.parameters();
  if (plan_.has_generator) params = concat(params, ng_.parameters());
  params = concat(params, onestep_.parameters());
  params = concat(params, critic_.online_parameters());
  return concat(params, critic_.target_parameters());
}

std::vector<nn::NamedTensor> Trainer::checkpoint() const {
  return nn::snapshot(const_cast<Trainer&>(*this).all_parameters());
}

void Trainer::restore(const std::vector<nn::NamedTensor>& entries) {
  const std::vector<nn::Parameter*> params = all_parameters();
  if (entries.size() != params.size()) {
    throw ContractError("checkpoint has " + std::to_string(entries.size()) +
                        " entries, the configured networks have " +
                        std::to_string(params.size()));
  }
  nn::restore(params, entries);
}

RunArtifacts Trainer::run(const std::filesystem::path& out_dir) {
  const bool write = !out_dir.empty();
  if (write) {
    std::filesystem::create_directories(out_dir);
    save_config(cfg_, out_dir / "config.txt");
    nn::save_checkpoint((out_dir / "init.rfck").string(), checkpoint());
  }
  RunArtifacts art;
  StepLosses sum;
  std::size_t since = 0;
  for (std::size_t k = 1; k <= cfg_.steps; ++k) {
    const StepLosses l = step();
    sum.critic += l.critic;
    sum.bc += l.bc;
    sum.distill += l.distill;
    sum.actor += l.actor;
    ++since;
    if (k % cfg_.eval_interval == 0 || k == cfg_.steps) {
      Rng eval_rng = Rng::stream(cfg_.seed, "eval/" + std::to_string(k));
      EvalResult ev = evaluate(cfg_.eval_episodes, eval_rng);
      const double n = static_cast<double>(since);
      MetricsRow row{k,
                     sum.critic / n,
                     sum.bc / n,
                     sum.distill / n,
                     sum.actor / n,
                     ev.mean_return,
                     emitted_ ? static_cast<double>(clipped_) / emitted_ : 0.0};
      spdlog::info("step {} critic {:.4g} bc {:.4g} distill {:.4g} actor {:.4g} return {:.4g}", k,
                   row.loss_critic, row.loss_bc, row.loss_distill, row.loss_actor,
                   row.eval_return);
      art.metrics.push_back(row);
      sum = {};
      since = 0;
      if (k == cfg_.steps) art.final_eval = std::move(ev);
    }
  }
  if (cfg_.steps > 0) {
    Rng dump_rng = Rng::stream(cfg_.seed, "dump");
    EvalResult dump = dump_samples(cfg_.dump_samples, dump_rng);
    art.final_eval.samples = std::move(dump.samples);
  }
  art.actions_emitted = emitted_;
  art.actions_clipped = clipped_;
  if (write) {
    binary::write_file((out_dir / "metrics.csv").string(), format_metrics(art.metrics));
    if (cfg_.steps > 0) {
      nn::save_checkpoint((out_dir / "final.rfck").string(), checkpoint());
      binary::write_file((out_dir / "samples.csv").string(),
                         format_samples(art.final_eval.samples));
      std::string returns = "episode,return\n";
      for (std::size_t i = 0; i < art.final_eval.returns.size(); ++i) {
        returns += std::to_string(i) + "," + fmt(art.final_eval.returns[i]) + "\n";
      }
      binary::write_file((out_dir / "returns.csv").string(), returns);
    }
  }
  return art;
}

std::pair<double, double> corner_coverage(const SampleDump& s, double corner, double radius) {
  const std::size_t n = s.size();
  if (n == 0) return {0.0, 0.0};
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double dl = 0.0, dh = 0.0;
    for (std::size_t j = 0; j < s.dim; ++j) {
      const double a = s.a[i * s.dim + j];
      dl += (a + corner) * (a + corner);
      dh += (a - corner) * (a - corner);
    }
    lo += std::sqrt(dl) <= radius;
    hi += std::sqrt(dh) <= radius;
  }
  return {static_cast<double>(lo) / n, static_cast<double>(hi) / n};
}

std::string format_metrics(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const MetricsRow& r : rows) {
    out += std::to_string(r.step) + "," + fmt(r.loss_critic) + "," + fmt(r.loss_bc) + "," +
           fmt(r.loss_distill) + "," + fmt(r.loss_actor) + "," + fmt(r.eval_return) + "," +
           fmt(r.clip_rate) + "\n";
  }
  return out;
}

std::string format_samples(const SampleDump& dump) {
  const std::size_t d = dump.dim;
  std::string out = samples_header(d) + "\n";
  for (std::size_t i = 0; i < dump.size(); ++i) {
    for (const auto* col : {&dump.w, &dump.z, &dump.a}) {
      for (std::size_t j = 0; j < d; ++j) out += fmt((*col)[i * d + j]) + ",";
    }
    out += fmt(geometry::norm(std::span<const double>(dump.z.data() + i * d, d))) + "\n";
  }
  return out;
}

namespace {

// Comma-separated doubles; `offset` is the line's position for error reports.
std::vector<double> parse_csv_row(const std::string& line, std::size_t offset,
                                  const char* what, std::size_t row) {
  std::vector<double> vals;
  std::size_t start = 0;
  while (start <= line.size()) {
    const std::size_t end = std::min(line.find(',', start), line.size());
    double v = 0.0;
    const auto r = std::from_chars(line.data() + start, line.data() + end, v);
    if (r.ec != std::errc() || r.ptr != line.data() + end) {
      throw FormatError("bad number in " + std::string(what) + " row " + std::to_string(row),
                        offset + start);
    }
    vals.push_back(v);
    start = end + 1;
  }
  return vals;
}

}  // namespace

std::vector<MetricsRow> parse_metrics(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw FormatError("metrics file does not start with the metrics header", 0);
  }
  std::vector<MetricsRow> rows;
  std::size_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      const std::vector<double> v = parse_csv_row(line, offset, "metrics", rows.size());
      if (v.size() != 7 || !(v[0] >= 0.0) || v[0] != std::floor(v[0])) {
        throw FormatError("metrics row " + std::to_string(rows.size()) + " is malformed", offset);
      }
      rows.push_back({static_cast<std::size_t>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6]});
    }
    offset += line.size() + 1;
  }
  return rows;
}

SampleDump parse_samples(const std::string& csv) {
  std::istringstream in(csv);
  std::string header;
  if (!std::getline(in, header)) throw FormatError("sample dump is empty", 0);
  const std::size_t cols = static_cast<std::size_t>(std::count(header.begin(), header.end(), ','));
  if (cols == 0 || cols % 3 != 0) throw FormatError("malformed sample dump header", 0);
  SampleDump d;
  d.dim = cols / 3;
  if (header != samples_header(d.dim)) throw FormatError("malformed sample dump header", 0);
  std::string line;
  std::size_t offset = header.size() + 1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    const std::vector<double> vals = parse_csv_row(line, offset, "sample dump", row);
    if (vals.size() != cols + 1) {
      throw FormatError("sample dump row " + std::to_string(row) + " has " +
                            std::to_string(vals.size()) + " fields",
                        offset);
    }
    d.w.insert(d.w.end(), vals.begin(), vals.begin() + d.dim);
    d.z.insert(d.z.end(), vals.begin() + d.dim, vals.begin() + 2 * d.dim);
    d.a.insert(d.a.end(), vals.begin() + 2 * d.dim, vals.begin() + 3 * d.dim);
    offset += line.size() + 1;
    ++row;
  }
  return d;
}

}  // namespace reform::trainer
