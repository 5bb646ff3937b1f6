#include "reform/envs/dataset.hpp"

#include <omp.h>

#include "reform/common/binary_io.hpp"
#include "reform/common/error.hpp"

namespace reform::envs {

std::span<const double> TransitionBatch::state(std::size_t i) const {
  return {states.data() + i * state_dim, state_dim};
}
std::span<const double> TransitionBatch::action(std::size_t i) const {
  return {actions.data() + i * action_dim, action_dim};
}
std::span<const double> TransitionBatch::next_state(std::size_t i) const {
  return {next_states.data() + i * state_dim, state_dim};
}

void TransitionBatch::append(std::span<const double> s, std::span<const double> a, double r,
                             std::span<const double> s_next, bool done) {
  if (s.size() != state_dim || s_next.size() != state_dim || a.size() != action_dim) {
    throw DimensionError("transition does not match batch dims");
  }
  states.insert(states.end(), s.begin(), s.end());
  actions.insert(actions.end(), a.begin(), a.end());
  rewards.push_back(r);
  next_states.insert(next_states.end(), s_next.begin(), s_next.end());
  dones.push_back(done ? 1.0 : 0.0);
}

void TransitionBatch::append(const TransitionBatch& o) {
  if (o.state_dim != state_dim || o.action_dim != action_dim) {
    throw DimensionError("cannot concatenate batches with different dims");
  }
  states.insert(states.end(), o.states.begin(), o.states.end());
  actions.insert(actions.end(), o.actions.begin(), o.actions.end());
  rewards.insert(rewards.end(), o.rewards.begin(), o.rewards.end());
  next_states.insert(next_states.end(), o.next_states.begin(), o.next_states.end());
  dones.insert(dones.end(), o.dones.begin(), o.dones.end());
}

TransitionBatch TransitionBatch::gather(std::span<const std::size_t> rows) const {
  TransitionBatch out(state_dim, action_dim);
  out.states.reserve(rows.size() * state_dim);
  out.actions.reserve(rows.size() * action_dim);
  out.next_states.reserve(rows.size() * state_dim);
  out.rewards.reserve(rows.size());
  out.dones.reserve(rows.size());
  for (std::size_t i : rows) {
    if (i >= size()) throw ContractError("row index out of range");
    out.append(state(i), action(i), rewards[i], next_state(i), dones[i] != 0.0);
  }
  return out;
}

void TransitionBatch::validate() const {
  const std::size_t n = rewards.size();
  if (states.size() != n * state_dim || next_states.size() != n * state_dim ||
      actions.size() != n * action_dim || dones.size() != n) {
    throw ContractError("transition batch columns have unequal lengths");
  }
}

std::vector<double> CornerMixtureBehavior::act(std::span<const double>, Rng& rng) const {
  const double c = rng.uniform() < 0.5 ? -kCenter : kCenter;
  for (;;) {
    const double x = c + kStd * rng.normal();
    const double y = c + kStd * rng.normal();
    if (x >= -1.0 && x <= 1.0 && y >= -1.0 && y <= 1.0) return {x, y};
  }
}

std::vector<double> EpsilonRightBehavior::act(std::span<const double>, Rng& rng) const {
  if (rng.uniform() < epsilon_) {
    const double x = rng.uniform(-1.0, 1.0);
    const double y = rng.uniform(-1.0, 1.0);
    return {x, y};
  }
  return {1.0, 0.0};
}

std::unique_ptr<BehaviorPolicy> make_behavior(const Environment& env) {
  if (env.name() == "two-corner-bandit") return std::make_unique<CornerMixtureBehavior>();
  if (env.name() == "line-world") return std::make_unique<EpsilonRightBehavior>();
  throw ConfigError("no behavior policy for environment '" + env.name() + "'");
}

namespace {

Rng episode_stream(std::uint64_t seed, std::size_t episode) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(episode)));
}

TransitionBatch rollout(const Environment& env, const BehaviorPolicy& behavior, Rng rng) {
  TransitionBatch out(env.state_dim(), env.action_dim());
  std::vector<double> s = env.reset(rng);
  for (std::size_t t = 0; t < env.horizon(); ++t) {
    const std::vector<double> a = behavior.act(s, rng);
    StepResult r = env.step(s, a);
    out.append(s, a, r.reward, r.next_state, r.done);
    if (r.done) break;
    s = std::move(r.next_state);
  }
  return out;
}

void require_episodes(std::size_t episodes) {
  if (episodes == 0) throw PreconditionError("episodes must be at least 1");
}

}  // namespace

TransitionBatch generate_dataset(const Environment& env, const BehaviorPolicy& behavior,
                                 std::size_t episodes, std::uint64_t seed) {
  require_episodes(episodes);
  std::vector<TransitionBatch> parts(episodes);
  const auto n = static_cast<std::ptrdiff_t>(episodes);
#pragma omp parallel for schedule(static) if (episodes >= 256)
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    parts[e] = rollout(env, behavior, episode_stream(seed, static_cast<std::size_t>(e)));
  }
  TransitionBatch out(env.state_dim(), env.action_dim());
  for (const auto& p : parts) out.append(p);
  return out;
}

namespace serial {
TransitionBatch generate_dataset(const Environment& env, const BehaviorPolicy& behavior,
                                 std::size_t episodes, std::uint64_t seed) {
  require_episodes(episodes);
  TransitionBatch out(env.state_dim(), env.action_dim());
  for (std::size_t e = 0; e < episodes; ++e) {
    out.append(rollout(env, behavior, episode_stream(seed, e)));
  }
  return out;
}
}  // namespace serial

double behavior_mean_return(const Environment& env, const BehaviorPolicy& behavior,
                            std::size_t episodes, std::uint64_t seed) {
  require_episodes(episodes);
  double total = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    const TransitionBatch ep = rollout(env, behavior, episode_stream(seed, e));
    for (double r : ep.rewards) total += r;
  }
  return total / static_cast<double>(episodes);
}

std::string encode_dataset(const TransitionBatch& b) {
  b.validate();
  binary::Writer w;
  w.bytes("RFDS");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(b.state_dim));
  w.u32(static_cast<std::uint32_t>(b.action_dim));
  w.u64(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    for (double v : b.state(i)) w.f64(v);
    for (double v : b.action(i)) w.f64(v);
    w.f64(b.rewards[i]);
    for (double v : b.next_state(i)) w.f64(v);
    w.f64(b.dones[i]);
  }
  return w.take();
}

TransitionBatch decode_dataset(std::string_view bytes) {
  binary::Reader r(bytes);
  if (r.bytes(4, "magic") != "RFDS") throw FormatError("bad dataset magic", 0);
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version), version_at);
  }
  const std::uint32_t sdim = r.u32("state dim");
  const std::uint32_t adim = r.u32("action dim");
  const std::uint64_t rows = r.u64("row count");
  const std::uint64_t row_bytes = 8ULL * (2ULL * sdim + adim + 2ULL);
  if (rows != 0 && row_bytes * rows / rows != row_bytes) {
    throw FormatError("row count overflows", r.offset());
  }
  if (row_bytes * rows > r.remaining()) {
    // Point at the first row that is not fully present.
    const std::size_t complete = r.remaining() / row_bytes;
    throw FormatError("truncated file: header declares " + std::to_string(rows) + " rows",
                      r.offset() + complete * row_bytes);
  }
  TransitionBatch b(sdim, adim);
  std::vector<double> s(sdim), a(adim), sn(sdim);
  for (std::uint64_t i = 0; i < rows; ++i) {
    for (double& v : s) v = r.f64("state");
    for (double& v : a) v = r.f64("action");
    const double rew = r.f64("reward");
    for (double& v : sn) v = r.f64("next state");
    const std::size_t done_at = r.offset();
    const double done = r.f64("done");
    if (done != 0.0 && done != 1.0) throw FormatError("done flag must be 0 or 1", done_at);
    b.append(s, a, rew, sn, done == 1.0);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last row", r.offset());
  return b;
}

void write_dataset(const TransitionBatch& batch, const std::filesystem::path& path) {
  binary::write_file(path.string(), encode_dataset(batch));
}

TransitionBatch read_dataset(const std::filesystem::path& path) {
  return decode_dataset(binary::read_file(path.string()));
}

}  // namespace reform::envs
