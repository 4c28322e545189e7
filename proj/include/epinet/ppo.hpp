#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "epinet/environment.hpp"
#include "epinet/logging.hpp"
#include "epinet/nn.hpp"
#include "epinet/parallel.hpp"
#include "epinet/rng.hpp"

namespace epinet {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 1.0;
inline constexpr double kLog2Pi = 1.8378770664093454836;

inline double sigmoid(double z) noexcept
{
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log N(z; mu, exp(log_std)^2).
inline double gaussian_log_prob(double z, double mu, double log_std) noexcept
{
    const double d = (z - mu) * std::exp(-log_std);
    return -0.5 * d * d - log_std - 0.5 * kLog2Pi;
}

/// Log-density of the squashed action a = sigmoid(z) in (0,1):
/// log N(z) - log(a (1 - a)).
inline double squashed_log_prob(double z, double mu, double log_std) noexcept
{
    // log sigmoid(z) + log sigmoid(-z), written to avoid overflow.
    const double log_jac = -std::abs(z) - 2.0 * std::log1p(std::exp(-std::abs(z)));
    return gaussian_log_prob(z, mu, log_std) - log_jac;
}

/// Running mean and variance (parallel-merge form).
struct RunningNormalizer {
    std::vector<double> mean;
    std::vector<double> var;
    double count = 1e-4;
    double clip = 10.0;

    RunningNormalizer() = default;
    explicit RunningNormalizer(std::size_t dim) : mean(dim, 0.0), var(dim, 1.0) {}

    void update(std::span<const Observation> batch)
    {
        if (batch.empty()) {
            return;
        }
        const auto n = static_cast<double>(batch.size());
        for (std::size_t k = 0; k < mean.size(); ++k) {
            double m = 0.0;
            for (const auto& o : batch) {
                m += o[k];
            }
            m /= n;
            double v = 0.0;
            for (const auto& o : batch) {
                v += (o[k] - m) * (o[k] - m);
            }
            v /= n;
            const double delta = m - mean[k];
            const double total = count + n;
            const double new_mean = mean[k] + delta * n / total;
            const double m2 = var[k] * count + v * n + delta * delta * count * n / total;
            mean[k] = new_mean;
            var[k] = m2 / total;
        }
        count += n;
    }

    std::vector<double> normalize(const Observation& o) const
    {
        std::vector<double> x(o.size());
        for (std::size_t k = 0; k < o.size(); ++k) {
            const double v = (o[k] - mean[k]) / std::sqrt(var[k] + 1e-8);
            x[k] = std::clamp(v, -clip, clip);
        }
        return x;
    }
};

/// Actor (Gaussian mean in pre-squash space, state-independent log-std)
/// and critic, plus the observation normaliser and the SD bound the actions
/// are scaled to.
struct PolicyParams {
    nn::Mlp actor;
    nn::Mlp critic;
    double log_std = 0.0;
    RunningNormalizer obs_norm{kObservationDim};
    bool normalize_obs = true;
    double sd_max = 1.0;
    /// Episode length seen by the critic; when positive the critic also
    /// receives the remaining fraction of the episode.
    int value_horizon = 0;

    static std::size_t critic_input_size(int value_horizon) noexcept
    {
        return kObservationDim + (value_horizon > 0 ? 1 : 0);
    }

    static PolicyParams create(const std::vector<std::size_t>& hidden, double sd_max, double init_log_std, Rng& rng,
                               int value_horizon = 0)
    {
        PolicyParams p;
        std::vector<std::size_t> sizes{kObservationDim};
        sizes.insert(sizes.end(), hidden.begin(), hidden.end());
        sizes.push_back(1);
        p.actor = nn::Mlp(sizes);
        sizes.front() = critic_input_size(value_horizon);
        p.critic = nn::Mlp(sizes);
        p.value_horizon = std::max(0, value_horizon);
        p.actor.init(rng, std::sqrt(2.0), 0.01);
        p.critic.init(rng, std::sqrt(2.0), 1.0);
        p.log_std = std::clamp(init_log_std, kLogStdMin, kLogStdMax);
        p.sd_max = sd_max;
        return p;
    }

    std::vector<double> features(const Observation& o) const
    {
        if (normalize_obs) {
            return obs_norm.normalize(o);
        }
        return {o.begin(), o.end()};
    }

    double mean_z(const Observation& o) const { return actor.forward(features(o))[0]; }
    std::vector<double> critic_features(const Observation& o, int step) const
    {
        auto f = features(o);
        if (value_horizon > 0) {
            f.push_back(static_cast<double>(value_horizon - step) / static_cast<double>(value_horizon));
        }
        return f;
    }

    double value(const Observation& o, int step = 0) const { return critic.forward(critic_features(o, step))[0]; }
    /// Deterministic action in [0,1].
    double mean_action(const Observation& o) const { return sigmoid(mean_z(o)); }
    double mean_sd_level(const Observation& o) const { return mean_action(o) * sd_max; }
};

/// Environment seen by the learner: actions in [0,1], observations of
/// fixed dimension.
class PolicyEnv
{
  public:
    virtual ~PolicyEnv() = default;
    virtual Observation reset(std::uint64_t seed) = 0;
    /// Applies the action, writes the next observation, returns the reward.
    virtual double step(double action01, Observation& next, bool& done) = 0;
    /// Decisions per episode, 0 when not fixed.
    virtual int horizon() const noexcept { return 0; }
};

using EnvFactory = std::function<std::unique_ptr<PolicyEnv>()>;

class EpidemicPolicyEnv final : public PolicyEnv
{
  public:
    EpidemicPolicyEnv(std::shared_ptr<const Population> pop, const EnvConfig& cfg,
                      std::shared_ptr<const NullBaseline> baseline)
        : env_(std::move(pop), cfg, std::move(baseline))
    {
    }

    Observation reset(std::uint64_t seed) override { return env_.reset(seed); }

    double step(double action01, Observation& next, bool& done) override
    {
        const auto r = env_.step(env_.level_from_action(action01));
        next = r.observation;
        done = r.done;
        return r.reward;
    }

    int horizon() const noexcept override { return env_.config().n_decisions; }

    EpidemicEnv& env() noexcept { return env_; }

  private:
    EpidemicEnv env_;
};

struct Transition {
    Observation obs{};
    /// Decision index within the episode.
    int step = 0;
    double raw_action = 0.0;  // pre-squash sample z
    double log_prob = 0.0;    // Gaussian log-density of z at collection time
    double reward = 0.0;
    double value = 0.0;
    bool done = false;
    double advantage = 0.0;
    double ret = 0.0;
};

struct RolloutBuffer {
    std::vector<Transition> items;
    void clear() noexcept { items.clear(); }
    std::size_t size() const noexcept { return items.size(); }
};

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

/// Generalised advantage estimates; the value after a terminal transition
/// is 0, and `last_value` bootstraps an unfinished final episode.
inline GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const bool> dones,
                     double gamma, double upsilon, double last_value = 0.0)
{
    const std::size_t n = rewards.size();
    if (n == 0) {
        throw std::invalid_argument("gae: empty buffer");
    }
    if (values.size() != n || dones.size() != n) {
        throw std::invalid_argument("gae: size mismatch");
    }
    GaeResult out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double next_adv = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        const double next_value = dones[k] ? 0.0 : (k + 1 < n ? values[k + 1] : last_value);
        const double carry = dones[k] ? 0.0 : next_adv;
        const double delta = rewards[k] + gamma * next_value - values[k];
        out.advantages[k] = delta + gamma * upsilon * carry;
        out.returns[k] = out.advantages[k] + values[k];
        next_adv = out.advantages[k];
    }
    return out;
}

inline void gae(RolloutBuffer& buf, double gamma, double upsilon)
{
    std::vector<double> r, v;
    std::vector<bool> d;
    for (const auto& t : buf.items) {
        r.push_back(t.reward);
        v.push_back(t.value);
        d.push_back(t.done);
    }
    std::unique_ptr<bool[]> dd(new bool[d.size()]);
    std::copy(d.begin(), d.end(), dd.get());
    const auto res = gae(r, v, std::span<const bool>(dd.get(), d.size()), gamma, upsilon);
    for (std::size_t k = 0; k < buf.items.size(); ++k) {
        buf.items[k].advantage = res.advantages[k];
        buf.items[k].ret = res.returns[k];
    }
}

struct SurrogateResult {
    double objective = 0.0;
    std::size_t used = 0;
    std::size_t dropped = 0;
    std::size_t clipped = 0;
    double approx_kl = 0.0;
    std::vector<double> grad_actor;  // d objective / d actor params
    double grad_log_std = 0.0;
};

/// Mean clipped surrogate over the batch with its gradient (ascent
/// direction). `advantages` parallels `batch`; elements whose probability
/// ratio is not finite are dropped and counted.
inline SurrogateResult clipped_surrogate(const PolicyParams& params, std::span<const Transition> batch,
                                         std::span<const double> advantages, double epsilon)
{
    if (advantages.size() != batch.size()) {
        throw std::invalid_argument("clipped_surrogate: size mismatch");
    }
    SurrogateResult out;
    out.grad_actor.assign(params.actor.parameter_count(), 0.0);
    const double sigma2 = std::exp(2.0 * params.log_std);
    struct Item {
        nn::Mlp::Cache cache;
        double d_mu;
    };
    std::vector<Item> items;
    items.reserve(batch.size());
    double obj = 0.0;
    double g_log_std = 0.0;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        const auto& t = batch[k];
        const double a = advantages[k];
        nn::Mlp::Cache cache;
        const double mu = params.actor.forward(params.features(t.obs), &cache)[0];
        const double logp = gaussian_log_prob(t.raw_action, mu, params.log_std);
        const double ratio = std::exp(logp - t.log_prob);
        if (!std::isfinite(ratio)) {
            ++out.dropped;
            continue;
        }
        ++out.used;
        out.approx_kl += (ratio - 1.0) - (logp - t.log_prob);
        const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
        const double s1 = ratio * a;
        const double s2 = clipped * a;
        obj += std::min(s1, s2);
        if (std::abs(ratio - 1.0) > epsilon) {
            ++out.clipped;
        }
        // d min / d logp = ratio * A on the unclipped branch, else 0.
        const double g = (s1 <= s2) ? s1 : 0.0;
        const double diff = t.raw_action - mu;
        items.push_back({std::move(cache), g * diff / sigma2});
        g_log_std += g * (diff * diff / sigma2 - 1.0);
    }
    if (out.used == 0) {
        return out;
    }
    const double inv = 1.0 / static_cast<double>(out.used);
    out.objective = obj * inv;
    out.approx_kl *= inv;
    out.grad_log_std = g_log_std * inv;
    for (const auto& it : items) {
        const double go = it.d_mu * inv;
        params.actor.backward(it.cache, std::span<const double>(&go, 1), out.grad_actor);
    }
    return out;
}

struct TrainConfig {
    double clip_epsilon = 0.2;
    double gamma = 0.99;
    double gae_upsilon = 0.95;
    double learning_rate = 3e-4;
    int episodes_per_rollout = 64;
    int minibatch_size = 64;
    int epochs = 10;
    double value_coef = 0.5;
    double entropy_coef = 0.0;
    double max_grad_norm = 0.5;
    bool normalize_advantage = true;
    bool normalize_obs = true;
    std::vector<std::size_t> hidden{64, 64};
    double init_log_std = 0.0;
    /// Initial mean action as a fraction of SD_max, set via the actor output bias.
    double init_mean_action = 0.5;
    /// Give the critic the remaining episode fraction.
    bool time_aware_value = true;
    /// Hard cap on training episodes.
    int total_episodes = 20000;
    /// No convergence check before this many episodes.
    int min_episodes = 2000;
    int convergence_window = 200;
    int convergence_span = 500;
    double convergence_tolerance = 0.01;

    void validate() const
    {
        if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
            throw std::invalid_argument("ppo: clip epsilon must lie in (0,1)");
        }
        if (!(gamma > 0.0 && gamma <= 1.0) || !(gae_upsilon >= 0.0 && gae_upsilon <= 1.0)) {
            throw std::invalid_argument("ppo: gamma must lie in (0,1] and upsilon in [0,1]");
        }
        if (!(learning_rate >= 0.0)) {
            throw std::invalid_argument("ppo: learning rate must be non-negative");
        }
        if (episodes_per_rollout < 1 || minibatch_size < 1 || epochs < 1 || total_episodes < 1 ||
            convergence_window < 1 || convergence_span < 1) {
            throw std::invalid_argument("ppo: sizes must be >= 1");
        }
        if (hidden.empty()) {
            throw std::invalid_argument("ppo: need at least one hidden layer");
        }
        if (!(init_mean_action > 0.0 && init_mean_action < 1.0)) {
            throw std::invalid_argument("ppo: initial mean action must lie in (0,1)");
        }
    }
};

struct UpdateStats {
    double policy_objective = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double approx_kl = 0.0;
    double clip_fraction = 0.0;
    double grad_norm = 0.0;
    std::size_t dropped = 0;
};

/// PPO update state: parameters plus one Adam over actor, log-std and
/// critic jointly.
class PpoLearner
{
  public:
    PpoLearner(PolicyParams params, TrainConfig cfg, std::uint64_t seed)
        : params_(std::move(params)), cfg_(std::move(cfg)),
          adam_(params_.actor.parameter_count() + 1 + params_.critic.parameter_count()), rng_(seed)
    {
        cfg_.validate();
    }

    const PolicyParams& params() const noexcept { return params_; }
    PolicyParams& params() noexcept { return params_; }
    const TrainConfig& config() const noexcept { return cfg_; }
    Rng& rng() noexcept { return rng_; }
    const nn::Adam& optimizer() const noexcept { return adam_; }
    nn::Adam& optimizer() noexcept { return adam_; }

    /// K epochs of minibatch descent on -L_clip + c_v (V - R)^2 - c_e H.
    UpdateStats update(RolloutBuffer& buf)
    {
        if (buf.items.empty()) {
            throw std::invalid_argument("ppo: empty rollout buffer");
        }
        const std::size_t n = buf.items.size();
        const std::size_t na = params_.actor.parameter_count();
        const std::size_t nc = params_.critic.parameter_count();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        UpdateStats stats;
        std::size_t batches = 0;
        std::size_t clipped = 0;
        std::size_t used = 0;
        std::vector<double> flat(na + 1 + nc);
        std::vector<double> grad(na + 1 + nc);
        for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
            rng_.shuffle(order);
            for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg_.minibatch_size)) {
                const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg_.minibatch_size));
                std::vector<Transition> batch;
                std::vector<double> adv;
                for (std::size_t k = start; k < end; ++k) {
                    batch.push_back(buf.items[order[k]]);
                    adv.push_back(buf.items[order[k]].advantage);
                }
                if (cfg_.normalize_advantage && adv.size() > 1) {
                    const double m = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(adv.size());
                    double v = 0.0;
                    for (double a : adv) {
                        v += (a - m) * (a - m);
                    }
                    const double sd = std::sqrt(v / static_cast<double>(adv.size() - 1));
                    for (double& a : adv) {
                        a = (a - m) / (sd + 1e-8);
                    }
                }
                const SurrogateResult sur = clipped_surrogate(params_, batch, adv, cfg_.clip_epsilon);
                stats.dropped += sur.dropped;
                clipped += sur.clipped;
                used += sur.used;
                std::fill(grad.begin(), grad.end(), 0.0);
                for (std::size_t k = 0; k < na; ++k) {
                    grad[k] = -sur.grad_actor[k];
                }
                grad[na] = -sur.grad_log_std - cfg_.entropy_coef;
                // Value loss.
                double vloss = 0.0;
                std::span<double> gcrit(grad.data() + na + 1, nc);
                const double scale = 1.0 / static_cast<double>(batch.size());
                for (const auto& t : batch) {
                    nn::Mlp::Cache cache;
                    const double v = params_.critic.forward(params_.critic_features(t.obs, t.step), &cache)[0];
                    const double e = v - t.ret;
                    vloss += e * e;
                    const double gv = cfg_.value_coef * 2.0 * e * scale;
                    params_.critic.backward(cache, std::span<const double>(&gv, 1), gcrit);
                }
                vloss *= scale;
                double norm2 = 0.0;
                for (double g : grad) {
                    norm2 += g * g;
                }
                const double norm = std::sqrt(norm2);
                if (!std::isfinite(norm) || !std::isfinite(vloss) || !std::isfinite(sur.objective)) {
                    throw std::runtime_error("ppo: non-finite loss or gradient (objective " +
                                             std::to_string(sur.objective) + ", value loss " +
                                             std::to_string(vloss) + ")");
                }
                if (cfg_.max_grad_norm > 0.0 && norm > cfg_.max_grad_norm) {
                    const double s = cfg_.max_grad_norm / (norm + 1e-6);
                    for (double& g : grad) {
                        g *= s;
                    }
                }
                pack(flat);
                adam_.step(flat, grad, cfg_.learning_rate);
                unpack(flat);
                stats.policy_objective += sur.objective;
                stats.value_loss += vloss;
                stats.approx_kl += sur.approx_kl;
                stats.grad_norm += norm;
                ++batches;
            }
        }
        const double b = static_cast<double>(std::max<std::size_t>(batches, 1));
        stats.policy_objective /= b;
        stats.value_loss /= b;
        stats.approx_kl /= b;
        stats.grad_norm /= b;
        stats.clip_fraction = used > 0 ? static_cast<double>(clipped) / static_cast<double>(used) : 0.0;
        stats.entropy = 0.5 + 0.5 * kLog2Pi + params_.log_std;
        return stats;
    }

  private:
    void pack(std::vector<double>& flat) const
    {
        const auto& a = params_.actor.params();
        const auto& c = params_.critic.params();
        std::copy(a.begin(), a.end(), flat.begin());
        flat[a.size()] = params_.log_std;
        std::copy(c.begin(), c.end(), flat.begin() + static_cast<std::ptrdiff_t>(a.size() + 1));
    }

    void unpack(const std::vector<double>& flat)
    {
        auto& a = params_.actor.params();
        auto& c = params_.critic.params();
        std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(a.size()), a.begin());
        params_.log_std = std::clamp(flat[a.size()], kLogStdMin, kLogStdMax);
        std::copy(flat.begin() + static_cast<std::ptrdiff_t>(a.size() + 1), flat.end(), c.begin());
    }

    PolicyParams params_;
    TrainConfig cfg_;
    nn::Adam adam_;
    Rng rng_;
};

struct EpisodeRollout {
    std::vector<Transition> transitions;
    std::vector<Observation> observations;
    double total_reward = 0.0;
};

/// Runs one episode with actions sampled from the policy.
inline EpisodeRollout collect_episode(PolicyEnv& env, const PolicyParams& params, std::uint64_t env_seed,
                                      std::uint64_t action_seed)
{
    EpisodeRollout out;
    Rng rng(action_seed);
    Observation obs = env.reset(env_seed);
    const double sd = std::exp(params.log_std);
    bool done = false;
    for (int k = 0; !done; ++k) {
        Transition t;
        t.obs = obs;
        t.step = k;
        out.observations.push_back(obs);
        const double mu = params.mean_z(obs);
        t.raw_action = mu + sd * rng.normal();
        t.log_prob = gaussian_log_prob(t.raw_action, mu, params.log_std);
        t.value = params.value(obs, k);
        Observation next{};
        t.reward = env.step(sigmoid(t.raw_action), next, done);
        t.done = done;
        out.total_reward += t.reward;
        out.transitions.push_back(t);
        obs = next;
    }
    return out;
}

struct TrainResult {
    PolicyParams params;
    std::vector<double> episode_rewards;
    std::vector<double> moving_average;
    std::vector<UpdateStats> updates;
    bool converged = false;
    int episodes = 0;
    std::array<std::uint64_t, 4> rng_state{};
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    long long adam_t = 0;
};

/// Trailing mean over up to `window` entries ending at each index.
inline std::vector<double> moving_average(std::span<const double> xs, int window)
{
    std::vector<double> out(xs.size());
    double s = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        s += xs[k];
        if (k >= static_cast<std::size_t>(window)) {
            s -= xs[k - static_cast<std::size_t>(window)];
        }
        out[k] = s / static_cast<double>(std::min<std::size_t>(k + 1, static_cast<std::size_t>(window)));
    }
    return out;
}

/// Relative improvement of the moving average over the last `span`
/// episodes is below tolerance (denominator floored at 1 reward unit).
inline bool has_converged(std::span<const double> ma, int span, double tolerance)
{
    if (ma.size() <= static_cast<std::size_t>(span)) {
        return false;
    }
    const double now = ma.back();
    const double before = ma[ma.size() - 1 - static_cast<std::size_t>(span)];
    return (now - before) / std::max(std::abs(before), 1.0) < tolerance;
}

struct TrainProgress {
    int episodes = 0;
    double moving_average = 0.0;
    UpdateStats stats;
};

/// PPO with synchronous collection: each rollout gathers whole episodes in
/// parallel under a frozen parameter snapshot, then updates.
inline TrainResult train(const EnvFactory& factory, const TrainConfig& cfg, std::uint64_t master_seed,
                         double sd_max, const std::function<void(const TrainProgress&)>& on_update = {},
                         std::optional<PolicyParams> init = std::nullopt)
{
    cfg.validate();
    Rng init_rng(derive_seed(master_seed, {0x1417ull}));
    const int horizon = cfg.time_aware_value ? factory()->horizon() : 0;
    PolicyParams params = init ? *init : [&] {
        auto p = PolicyParams::create(cfg.hidden, sd_max, cfg.init_log_std, init_rng, horizon);
        p.actor.params().back() = std::log(cfg.init_mean_action / (1.0 - cfg.init_mean_action));
        return p;
    }();
    params.normalize_obs = cfg.normalize_obs;
    PpoLearner learner(std::move(params), cfg, derive_seed(master_seed, {0x5eedull}));
    TrainResult result;
    int rollout = 0;
    while (result.episodes < cfg.total_episodes) {
        const int n_eps = std::min(cfg.episodes_per_rollout, cfg.total_episodes - result.episodes);
        const PolicyParams snapshot = learner.params();
        const auto rollouts = parallel_map(static_cast<std::size_t>(n_eps), [&](std::size_t e) {
            auto env = factory();
            const auto r = static_cast<std::uint64_t>(rollout);
            return collect_episode(*env, snapshot, derive_seed(master_seed, {0xE4ull, r, e}),
                                   derive_seed(master_seed, {0xAC7ull, r, e}));
        });
        RolloutBuffer buf;
        std::vector<Observation> seen;
        for (const auto& ep : rollouts) {
            buf.items.insert(buf.items.end(), ep.transitions.begin(), ep.transitions.end());
            seen.insert(seen.end(), ep.observations.begin(), ep.observations.end());
            result.episode_rewards.push_back(ep.total_reward);
        }
        result.episodes += n_eps;
        gae(buf, cfg.gamma, cfg.gae_upsilon);
        const UpdateStats stats = learner.update(buf);
        if (cfg.normalize_obs) {
            learner.params().obs_norm.update(seen);
        }
        result.updates.push_back(stats);
        ++rollout;
        result.moving_average = moving_average(result.episode_rewards, cfg.convergence_window);
        if (on_update) {
            on_update({result.episodes, result.moving_average.back(), stats});
        }
        if (result.episodes >= cfg.min_episodes &&
            has_converged(result.moving_average, cfg.convergence_span, cfg.convergence_tolerance)) {
            result.converged = true;
            break;
        }
    }
    result.params = learner.params();
    result.rng_state = learner.rng().state();
    result.adam_m = learner.optimizer().first_moment();
    result.adam_v = learner.optimizer().second_moment();
    result.adam_t = learner.optimizer().steps();
    return result;
}

inline void write_learning_curve(std::ostream& out, const TrainResult& r)
{
    out << "episode,reward,moving_average\n";
    char buf[128];
    for (std::size_t k = 0; k < r.episode_rewards.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", k + 1, r.episode_rewards[k], r.moving_average[k]);
        out << buf;
    }
}

inline constexpr std::string_view kCheckpointFormat = "epinet-ppo-checkpoint";

inline nlohmann::json train_config_to_json(const TrainConfig& c)
{
    return {{"clip_epsilon", c.clip_epsilon},
            {"gamma", c.gamma},
            {"gae_upsilon", c.gae_upsilon},
            {"learning_rate", c.learning_rate},
            {"episodes_per_rollout", c.episodes_per_rollout},
            {"minibatch_size", c.minibatch_size},
            {"epochs", c.epochs},
            {"value_coef", c.value_coef},
            {"entropy_coef", c.entropy_coef},
            {"max_grad_norm", c.max_grad_norm},
            {"normalize_advantage", c.normalize_advantage},
            {"normalize_obs", c.normalize_obs},
            {"hidden", c.hidden},
            {"init_log_std", c.init_log_std},
            {"init_mean_action", c.init_mean_action},
            {"time_aware_value", c.time_aware_value},
            {"total_episodes", c.total_episodes},
            {"min_episodes", c.min_episodes},
            {"convergence_window", c.convergence_window},
            {"convergence_span", c.convergence_span},
            {"convergence_tolerance", c.convergence_tolerance}};
}

/// Strict overlay: unknown keys are rejected.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {})
{
    for (const auto& [k, v] : j.items()) {
        if (k == "clip_epsilon") c.clip_epsilon = v.get<double>();
        else if (k == "gamma") c.gamma = v.get<double>();
        else if (k == "gae_upsilon") c.gae_upsilon = v.get<double>();
        else if (k == "learning_rate") c.learning_rate = v.get<double>();
        else if (k == "episodes_per_rollout") c.episodes_per_rollout = v.get<int>();
        else if (k == "minibatch_size") c.minibatch_size = v.get<int>();
        else if (k == "epochs") c.epochs = v.get<int>();
        else if (k == "value_coef") c.value_coef = v.get<double>();
        else if (k == "entropy_coef") c.entropy_coef = v.get<double>();
        else if (k == "max_grad_norm") c.max_grad_norm = v.get<double>();
        else if (k == "normalize_advantage") c.normalize_advantage = v.get<bool>();
        else if (k == "normalize_obs") c.normalize_obs = v.get<bool>();
        else if (k == "hidden") c.hidden = v.get<std::vector<std::size_t>>();
        else if (k == "init_log_std") c.init_log_std = v.get<double>();
        else if (k == "init_mean_action") c.init_mean_action = v.get<double>();
        else if (k == "time_aware_value") c.time_aware_value = v.get<bool>();
        else if (k == "total_episodes") c.total_episodes = v.get<int>();
        else if (k == "min_episodes") c.min_episodes = v.get<int>();
        else if (k == "convergence_window") c.convergence_window = v.get<int>();
        else if (k == "convergence_span") c.convergence_span = v.get<int>();
        else if (k == "convergence_tolerance") c.convergence_tolerance = v.get<double>();
        else throw std::invalid_argument("train config: unknown key " + k);
    }
    c.validate();
    return c;
}

struct Checkpoint {
    PolicyParams params;
    TrainConfig train;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    int episodes = 0;
    bool converged = false;
    std::array<std::uint64_t, 4> rng_state{};
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    long long adam_t = 0;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& c)
{
    const auto& p = c.params;
    return {{"format", kCheckpointFormat},
            {"version", 1},
            {"sd_max", p.sd_max},
            {"lambda", c.lambda},
            {"seed", c.seed},
            {"episodes", c.episodes},
            {"converged", c.converged},
            {"actor", {{"sizes", p.actor.sizes()}, {"params", p.actor.params()}}},
            {"critic", {{"sizes", p.critic.sizes()}, {"params", p.critic.params()}}},
            {"log_std", p.log_std},
            {"normalize_obs", p.normalize_obs},
            {"value_horizon", p.value_horizon},
            {"obs_norm", {{"mean", p.obs_norm.mean}, {"var", p.obs_norm.var}, {"count", p.obs_norm.count}}},
            {"train_config", train_config_to_json(c.train)},
            {"rng_state", c.rng_state},
            {"adam", {{"m", c.adam_m}, {"v", c.adam_v}, {"t", c.adam_t}}}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j)
{
    if (j.value("format", std::string{}) != kCheckpointFormat || j.value("version", 0) != 1) {
        throw std::invalid_argument("not an epinet PPO checkpoint (version 1)");
    }
    Checkpoint c;
    auto load_net = [](const nlohmann::json& n) {
        nn::Mlp m(n.at("sizes").get<std::vector<std::size_t>>());
        const auto params = n.at("params").get<std::vector<double>>();
        if (params.size() != m.parameter_count()) {
            throw std::invalid_argument("checkpoint: parameter count does not match layer sizes");
        }
        m.params() = params;
        return m;
    };
    c.params.actor = load_net(j.at("actor"));
    c.params.critic = load_net(j.at("critic"));
    c.params.value_horizon = j.value("value_horizon", 0);
    if (c.params.actor.input_size() != kObservationDim ||
        c.params.critic.input_size() != PolicyParams::critic_input_size(c.params.value_horizon) ||
        c.params.actor.output_size() != 1 || c.params.critic.output_size() != 1) {
        throw std::invalid_argument("checkpoint: network shapes do not match the observation layout");
    }
    c.params.log_std = j.at("log_std").get<double>();
    c.params.sd_max = j.at("sd_max").get<double>();
    c.params.normalize_obs = j.at("normalize_obs").get<bool>();
    const auto& on = j.at("obs_norm");
    c.params.obs_norm.mean = on.at("mean").get<std::vector<double>>();
    c.params.obs_norm.var = on.at("var").get<std::vector<double>>();
    c.params.obs_norm.count = on.at("count").get<double>();
    if (c.params.obs_norm.mean.size() != kObservationDim || c.params.obs_norm.var.size() != kObservationDim) {
        throw std::invalid_argument("checkpoint: normaliser dimension mismatch");
    }
    c.lambda = j.at("lambda").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.episodes = j.at("episodes").get<int>();
    c.converged = j.at("converged").get<bool>();
    c.train = train_config_from_json(j.at("train_config"));
    c.rng_state = j.at("rng_state").get<std::array<std::uint64_t, 4>>();
    c.adam_m = j.at("adam").at("m").get<std::vector<double>>();
    c.adam_v = j.at("adam").at("v").get<std::vector<double>>();
    c.adam_t = j.at("adam").at("t").get<long long>();
    return c;
}

inline Checkpoint make_checkpoint(const TrainResult& r, const TrainConfig& cfg, double lambda, std::uint64_t seed)
{
    Checkpoint c;
    c.params = r.params;
    c.train = cfg;
    c.lambda = lambda;
    c.seed = seed;
    c.episodes = r.episodes;
    c.converged = r.converged;
    c.rng_state = r.rng_state;
    c.adam_m = r.adam_m;
    c.adam_v = r.adam_v;
    c.adam_t = r.adam_t;
    return c;
}

}  // namespace epinet
