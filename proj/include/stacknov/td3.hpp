#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

#include "stacknov/adam.hpp"
#include "stacknov/env.hpp"
#include "stacknov/nn.hpp"
#include "stacknov/records.hpp"

namespace stacknov {

struct Td3Config {
  double gamma = 0.99;
  double tau = 0.005;
  int policy_delay = 2;
  double explore_noise_frac = 0.1;   // sigma = frac * n
  double smooth_noise_frac = 0.2;    // target smoothing sigma = frac * n
  double smooth_clip_frac = 0.5;     // clip at frac * n
  int batch = 64;
  int warmup = 100;
  double lr = 1e-3;
  std::size_t replay_capacity = 100000;
  // Rewards up to 1000 are scaled down inside the critic updates only;
  // logged rewards stay raw.
  double reward_scale = 1e-3;
};

struct Transition {
  Eigen::Vector3d obs;
  Eigen::Vector2d action;
  double reward = 0.0;
  Eigen::Vector3d next_obs;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(const Transition& t) {
    if (data_.size() < capacity_) {
      data_.push_back(t);
    } else {
      data_[at_] = t;
      at_ = (at_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }

  // Uniform sample with replacement.
  std::vector<Transition> sample(Rng& rng, std::size_t k) const {
    std::vector<Transition> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(data_[rng.index(size())]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t at_ = 0;
  std::vector<Transition> data_;
};

inline Net make_actor_net() {
  Net net;
  net.add<Dense>(3, 64);
  net.add<ReLU>();
  net.add<Dense>(64, 64);
  net.add<ReLU>();
  net.add<Dense>(64, 2);
  net.add<Tanh>();
  return net;
}

inline Net make_critic_net() {
  Net net;
  net.add<Dense>(5, 64);
  net.add<ReLU>();
  net.add<Dense>(64, 64);
  net.add<ReLU>();
  net.add<Dense>(64, 1);
  return net;
}

// target <- tau * online + (1 - tau) * target, elementwise.
inline void polyak_update(Net& target, Net& online, double tau) {
  auto tp = target.params();
  auto op = online.params();
  if (tp.size() != op.size())
    throw std::invalid_argument("polyak_update: parameter block mismatch");
  for (std::size_t i = 0; i < tp.size(); ++i) {
    if (tp[i].value->size() != op[i].value->size())
      throw std::invalid_argument("polyak_update: shape mismatch");
    *tp[i].value = tau * (*op[i].value) + (1 - tau) * (*tp[i].value);
  }
}

struct PolicyParams {
  Net actor, critic1, critic2;
  Net target_actor, target_critic1, target_critic2;
  double n = 1000.0;
  double s = 1.0;
  std::string label;        // "accurate" or "imprecise"
  int timesteps = 0;
  std::uint64_t seed = 0;
  std::vector<double> episode_rewards;   // training curve, one per episode
  long critic_updates = 0;
  long actor_updates = 0;

  Eigen::Vector3d normalize(const Observation& obs) const {
    return {static_cast<double>(obs.height), obs.cog.x() / s, obs.cog.y() / s};
  }

  // Deterministic (noise-free) action in [0, n]^2.
  Eigen::Vector2d act(const Observation& obs) {
    Matrix x(1, 3);
    x.row(0) = normalize(obs).transpose();
    Matrix t = actor.forward(x);
    Eigen::Vector2d a;
    for (int d = 0; d < 2; ++d)
      a[d] = std::clamp((t(0, d) + 1.0) / 2.0 * n, 0.0, n);
    return a;
  }
};

inline PolicyParams make_policy(double n, double s) {
  PolicyParams p;
  p.n = n;
  p.s = s;
  p.actor = make_actor_net();
  p.critic1 = make_critic_net();
  p.critic2 = make_critic_net();
  p.target_actor = make_actor_net();
  p.target_critic1 = make_critic_net();
  p.target_critic2 = make_critic_net();
  return p;
}

namespace detail {

inline Matrix obs_batch(const std::vector<Transition>& batch,
                        const PolicyParams& p, bool next) {
  Matrix m(static_cast<Eigen::Index>(batch.size()), 3);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Eigen::Vector3d& o = next ? batch[i].next_obs : batch[i].obs;
    m.row(static_cast<Eigen::Index>(i)) =
        Eigen::Vector3d(o.x(), o.y() / p.s, o.z() / p.s).transpose();
  }
  return m;
}

}  // namespace detail

// Standard TD3 on the cube-stacking environment.
inline PolicyParams train_policy(const EnvConfig& env_cfg,
                                 const Td3Config& td3, int timesteps,
                                 std::uint64_t seed,
                                 const std::string& label) {
  if (timesteps < td3.warmup)
    throw std::invalid_argument("train_policy: timesteps below warmup");

  PolicyParams p = make_policy(env_cfg.n, env_cfg.s);
  p.label = label;
  p.timesteps = timesteps;
  p.seed = seed;

  Rng init_rng(seed ^ 0x9e3779b97f4a7c15ull);
  p.actor.init(init_rng);
  p.critic1.init(init_rng);
  p.critic2.init(init_rng);
  p.target_actor.set_flat_params(p.actor.flat_params());
  p.target_critic1.set_flat_params(p.critic1.flat_params());
  p.target_critic2.set_flat_params(p.critic2.flat_params());

  AdamOptimizer opt_actor(p.actor.params(), td3.lr);
  AdamOptimizer opt_c1(p.critic1.params(), td3.lr);
  AdamOptimizer opt_c2(p.critic2.params(), td3.lr);

  StackEnv env(env_cfg, seed ^ 0x2545f4914f6cdd1dull);
  Rng noise(seed ^ 0x94d049bb133111ebull);
  ReplayBuffer buffer(td3.replay_capacity);
  ObjectSpec cube = ObjectSpec::make(ObjectKind::Cube, env_cfg.s);

  const double n = env_cfg.n;
  const double sigma_explore = td3.explore_noise_frac * n;
  const double sigma_smooth = td3.smooth_noise_frac * n;
  const double clip_smooth = td3.smooth_clip_frac * n;

  Observation obs = env.reset(cube);
  double episode_reward = 0.0;

  auto critic_update = [&](Net& critic, AdamOptimizer& opt, const Matrix& x,
                           const Matrix& y) {
    Matrix q = critic.forward(x);
    LossResult loss = mse(q, y);
    if (!std::isfinite(loss.loss))
      throw std::runtime_error("train_policy: critic loss diverged (NaN)");
    critic.backward(loss.grad);
    opt.step();
  };

  for (int t = 1; t <= timesteps; ++t) {
    Eigen::Vector2d action;
    if (t <= td3.warmup) {
      action = {noise.uniform(0, n), noise.uniform(0, n)};
    } else {
      action = p.act(obs);
      for (int d = 0; d < 2; ++d)
        action[d] = std::clamp(action[d] + noise.normal(0, sigma_explore), 0.0, n);
    }

    StepOutcome out = env.step(action);
    episode_reward += out.reward;

    Transition tr;
    tr.obs = {static_cast<double>(obs.height), obs.cog.x(), obs.cog.y()};
    tr.action = action;
    tr.reward = out.reward;
    tr.next_obs = {static_cast<double>(out.observation.height),
                   out.observation.cog.x(), out.observation.cog.y()};
    tr.done = out.episode_done;
    buffer.push(tr);

    if (out.episode_done) {
      p.episode_rewards.push_back(episode_reward);
      episode_reward = 0.0;
      obs = env.reset(cube);
    } else {
      obs = out.observation;
    }

    if (t <= td3.warmup || buffer.size() < static_cast<std::size_t>(td3.batch))
      continue;

    std::vector<Transition> batch =
        buffer.sample(noise, static_cast<std::size_t>(td3.batch));
    Eigen::Index B = static_cast<Eigen::Index>(batch.size());

    // Target: r + gamma * (1-done) * min(Q1', Q2')(s', smoothed a').
    Matrix next_obs_m = detail::obs_batch(batch, p, true);
    Matrix ta = p.target_actor.forward(next_obs_m);
    Matrix next_act(B, 2);
    for (Eigen::Index i = 0; i < B; ++i)
      for (int d = 0; d < 2; ++d) {
        double a = (ta(i, d) + 1.0) / 2.0 * n;
        double eps = std::clamp(noise.normal(0, sigma_smooth), -clip_smooth,
                                clip_smooth);
        next_act(i, d) = std::clamp(a + eps, 0.0, n);
      }
    Matrix next_x(B, 5);
    next_x << next_obs_m, next_act / n;
    Matrix q1 = p.target_critic1.forward(next_x);
    Matrix q2 = p.target_critic2.forward(next_x);
    Matrix y(B, 1);
    for (Eigen::Index i = 0; i < B; ++i) {
      double qmin = std::min(q1(i, 0), q2(i, 0));
      y(i, 0) = batch[static_cast<std::size_t>(i)].reward * td3.reward_scale +
                td3.gamma * (batch[static_cast<std::size_t>(i)].done ? 0.0 : 1.0) *
                    qmin;
    }

    Matrix obs_m = detail::obs_batch(batch, p, false);
    Matrix act_m(B, 2);
    for (Eigen::Index i = 0; i < B; ++i)
      act_m.row(i) = batch[static_cast<std::size_t>(i)].action.transpose() / n;
    Matrix x(B, 5);
    x << obs_m, act_m;
    critic_update(p.critic1, opt_c1, x, y);
    critic_update(p.critic2, opt_c2, x, y);
    ++p.critic_updates;

    // Delayed actor update + Polyak averaging.
    if (p.critic_updates % td3.policy_delay == 0) {
      Matrix t_out = p.actor.forward(obs_m);
      Matrix a_scaled = (t_out.array() + 1.0) / 2.0;   // action / n
      Matrix xa(B, 5);
      xa << obs_m, a_scaled;
      Matrix q = p.critic1.forward(xa);
      ensure_finite(q, "actor objective");
      Matrix gq = Matrix::Constant(B, 1, -1.0 / static_cast<double>(B));
      Matrix gx = p.critic1.backward(gq);
      p.critic1.zero_grads();   // critic params are not updated here
      Matrix ga = gx.rightCols(2);
      p.actor.backward(ga * 0.5);   // d(action/n)/d(tanh out) = 1/2
      opt_actor.step();
      ++p.actor_updates;

      polyak_update(p.target_actor, p.actor, td3.tau);
      polyak_update(p.target_critic1, p.critic1, td3.tau);
      polyak_update(p.target_critic2, p.critic2, td3.tau);
    }
  }
  return p;
}

// Run the trained policy deterministically for exactly `timesteps` steps,
// one TimestepRecord per step.
inline std::vector<TimestepRecord> evaluate_policy(
    PolicyParams& policy, const ObjectSpec& theme, const EnvConfig& env_cfg,
    int timesteps, std::uint64_t seed, bool supplemental = false,
    int episode_id_offset = 0) {
  StackEnv env(env_cfg, seed);
  std::vector<TimestepRecord> records;
  records.reserve(static_cast<std::size_t>(timesteps));

  Observation obs = env.reset(theme);
  Orientation start = env.start_orientation();
  int episode_id = episode_id_offset;
  double cum = 0.0;

  for (int t = 0; t < timesteps; ++t) {
    Eigen::Vector2d action = policy.act(obs);
    StepOutcome out = env.step(action);
    cum += out.reward;

    TimestepRecord r;
    r.start_rotation = start.rotation;
    r.start_upright_offset = upright_offset(start);
    r.action = action;
    r.post_rotation = out.post_orientation.rotation;
    r.post_upright_offset = out.post_offset;
    r.jitter_vector = out.jitter_applied;
    r.obs_height = out.observation.height;
    r.obs_cog = out.observation.cog;
    r.reward = out.reward;
    r.cum_episode_reward = cum;
    r.cum_mean_episode_reward = cum / out.attempt;
    r.theme = theme.kind;
    r.episode_id = episode_id;
    r.attempt = out.attempt;
    r.policy_label = policy.label;
    r.seed = seed;
    r.supplemental = supplemental;
    records.push_back(r);

    if (out.episode_done) {
      ++episode_id;
      cum = 0.0;
      obs = env.reset(theme);
      start = env.start_orientation();
    } else {
      obs = out.observation;
    }
  }
  return records;
}

// Fraction of completed episodes that ended in a successful stack.
inline double episode_success_fraction(
    const std::vector<TimestepRecord>& records) {
  int completed = 0, succeeded = 0;
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t j = i;
    bool success = false;
    while (j < records.size() &&
           records[j].episode_id == records[i].episode_id) {
      if (records[j].obs_height == 2.0) success = true;
      ++j;
    }
    int len = static_cast<int>(j - i);
    if (success || len >= kEpisodeLen) {
      ++completed;
      if (success) ++succeeded;
    }
    i = j;
  }
  if (completed == 0) return 0.0;
  return static_cast<double>(succeeded) / completed;
}

// ---------------------------------------------------------------------------
// Policy persistence (JSON with shape metadata).

inline nlohmann::json net_to_json(const Net& net) {
  Vector flat = net.flat_params();
  return {{"size", flat.size()},
          {"values", std::vector<double>(flat.data(), flat.data() + flat.size())}};
}

inline void net_from_json(Net& net, const nlohmann::json& j) {
  auto vals = j.at("values").get<std::vector<double>>();
  Vector flat = Eigen::Map<const Vector>(vals.data(),
                                         static_cast<Eigen::Index>(vals.size()));
  net.set_flat_params(flat);
}

inline void save_policy(const PolicyParams& p, const std::string& path) {
  nlohmann::json j = {{"format", "stacknov-policy"},
                      {"version", 1},
                      {"label", p.label},
                      {"timesteps", p.timesteps},
                      {"seed", p.seed},
                      {"n", p.n},
                      {"s", p.s},
                      {"episode_rewards", p.episode_rewards},
                      {"actor", net_to_json(p.actor)},
                      {"critic1", net_to_json(p.critic1)},
                      {"critic2", net_to_json(p.critic2)},
                      {"target_actor", net_to_json(p.target_actor)},
                      {"target_critic1", net_to_json(p.target_critic1)},
                      {"target_critic2", net_to_json(p.target_critic2)}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_policy: cannot open " + path);
  out << j.dump();
}

inline PolicyParams load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_policy: cannot open " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("format") != "stacknov-policy" || j.at("version") != 1)
    throw std::runtime_error("load_policy: unrecognized format in " + path);
  PolicyParams p = make_policy(j.at("n").get<double>(), j.at("s").get<double>());
  p.label = j.at("label").get<std::string>();
  p.timesteps = j.at("timesteps").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.episode_rewards = j.at("episode_rewards").get<std::vector<double>>();
  net_from_json(p.actor, j.at("actor"));
  net_from_json(p.critic1, j.at("critic1"));
  net_from_json(p.critic2, j.at("critic2"));
  net_from_json(p.target_actor, j.at("target_actor"));
  net_from_json(p.target_critic1, j.at("target_critic1"));
  net_from_json(p.target_critic2, j.at("target_critic2"));
  return p;
}

}  // namespace stacknov
