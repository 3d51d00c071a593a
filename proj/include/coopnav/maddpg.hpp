#pragma once

// Centralized-critic, decentralized-actor training over the particle task,
// plus the three slot-assignment variants (shuffle, shared, ensemble).

#include <algorithm>
#include <cstdint>
#include <functional>
#include <set>
#include <string>

#include "coopnav/common.hpp"
#include "coopnav/env.hpp"
#include "coopnav/mlp.hpp"
#include "coopnav/replay.hpp"

namespace coopnav {

enum class SchemeVariant { Vanilla, Shuffle, Shared, Ensemble };

struct Scheme {
    SchemeVariant variant = SchemeVariant::Vanilla;
    int ensemble_size = 3;  // members per slot, ensemble scheme only

    void validate() const {
        if (variant == SchemeVariant::Ensemble && ensemble_size < 2)
            throw std::invalid_argument("Scheme: ensemble needs at least 2 members");
    }
};

inline std::string to_string(const Scheme& s) {
    switch (s.variant) {
        case SchemeVariant::Vanilla: return "vanilla";
        case SchemeVariant::Shuffle: return "shuffle";
        case SchemeVariant::Shared: return "shared";
        case SchemeVariant::Ensemble: return "ensemble";
    }
    throw std::logic_error("to_string: bad scheme");
}

inline Scheme scheme_from_string(const std::string& name) {
    Scheme s;
    if (name == "vanilla")
        s.variant = SchemeVariant::Vanilla;
    else if (name == "shuffle")
        s.variant = SchemeVariant::Shuffle;
    else if (name == "shared")
        s.variant = SchemeVariant::Shared;
    else if (name == "ensemble")
        s.variant = SchemeVariant::Ensemble;
    else
        throw std::invalid_argument("unknown scheme: " + name);
    return s;
}

struct TrainConfig {
    long episodes = 100000;
    int horizon = kHorizon;
    double gamma = 0.95;
    double tau = 0.01;
    double actor_lr = 0.01;
    double critic_lr = 0.01;
    int batch_size = 1024;
    std::size_t buffer_capacity = 1000000;
    int update_interval_steps = 100;
    double exploration_noise_std = 0.1;
    long warmup_transitions = 25600;  // batch_size * horizon at the defaults
    double grad_clip_norm = 0.5;
    double actor_preact_reg = 1e-3;  // penalty on raw actor outputs, keeps the squash unsaturated
    int hidden1 = 128;
    int hidden2 = 128;
    std::uint64_t seed = 0;
    Scheme scheme;
    PhysicsConfig physics;

    void validate() const {
        if (episodes <= 0) throw std::invalid_argument("TrainConfig: episodes must be positive");
        if (horizon != kHorizon) throw std::invalid_argument("TrainConfig: horizon must be 25");
        if (!(gamma > 0.0 && gamma < 1.0))
            throw std::invalid_argument("TrainConfig: gamma outside (0,1)");
        if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("TrainConfig: tau outside (0,1]");
        if (actor_lr <= 0 || critic_lr <= 0)
            throw std::invalid_argument("TrainConfig: learning rates must be positive");
        if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size must be positive");
        if (buffer_capacity < std::size_t(batch_size))
            throw std::invalid_argument("TrainConfig: buffer smaller than a batch");
        if (update_interval_steps <= 0)
            throw std::invalid_argument("TrainConfig: update_interval_steps must be positive");
        if (exploration_noise_std < 0)
            throw std::invalid_argument("TrainConfig: negative noise std");
        if (warmup_transitions < batch_size)
            throw std::invalid_argument("TrainConfig: warmup below batch size");
        if (grad_clip_norm <= 0) throw std::invalid_argument("TrainConfig: grad clip must be positive");
        if (actor_preact_reg < 0) throw std::invalid_argument("TrainConfig: negative actor penalty");
        if (hidden1 <= 0 || hidden2 <= 0)
            throw std::invalid_argument("TrainConfig: hidden widths must be positive");
        scheme.validate();
    }

    MlpSpec actor_spec() const {
        return {kObservationDim, hidden1, hidden2, kActionDim, OutputActivation::Logistic};
    }
    MlpSpec critic_spec() const {
        return {kNumAgents * (kObservationDim + kActionDim), hidden1, hidden2, 1,
                OutputActivation::Identity};
    }
};

inline constexpr int kCriticInputDim = kNumAgents * (kObservationDim + kActionDim);
inline constexpr int critic_obs_offset(int slot) { return slot * kObservationDim; }
inline constexpr int critic_act_offset(int slot) {
    return kNumAgents * kObservationDim + slot * kActionDim;
}

/// Per-slot actors and critics. The actor vector layout depends on the scheme:
/// one entry (shared), slot-major members (ensemble), or one per slot.
struct TrainedAgents {
    TrainConfig config;
    std::vector<ParamSet> actors;
    std::vector<ParamSet> critics;  // always one per slot

    int actor_index(int slot, int member = 0) const {
        if (slot < 0 || slot >= kNumAgents) throw std::out_of_range("actor_index: bad slot");
        switch (config.scheme.variant) {
            case SchemeVariant::Shared:
                return 0;
            case SchemeVariant::Ensemble:
                if (member < 0 || member >= config.scheme.ensemble_size)
                    throw std::out_of_range("actor_index: bad member");
                return slot * config.scheme.ensemble_size + member;
            default:
                return slot;
        }
    }
    ParamSet& actor(int slot, int member = 0) { return actors[actor_index(slot, member)]; }
    const ParamSet& actor(int slot, int member = 0) const {
        return actors[actor_index(slot, member)];
    }
};

inline TrainedAgents make_agents(const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    TrainedAgents a;
    a.config = cfg;
    int n_actors = cfg.scheme.variant == SchemeVariant::Shared ? 1
                 : cfg.scheme.variant == SchemeVariant::Ensemble
                     ? kNumAgents * cfg.scheme.ensemble_size
                     : kNumAgents;
    a.actors.reserve(n_actors);
    for (int i = 0; i < n_actors; ++i) a.actors.push_back(make_params(cfg.actor_spec(), rng));
    a.critics.reserve(kNumAgents);
    for (int i = 0; i < kNumAgents; ++i) a.critics.push_back(make_params(cfg.critic_spec(), rng));
    return a;
}

/// Deterministic policy output plus clamped Gaussian exploration noise.
/// noise_std = 0 draws nothing from the generator.
inline ActionVector act(const ParamSet& actor, const Observation& obs, double noise_std, Rng& rng) {
    ForwardTrace t = forward(actor, std::span<const double>(obs.data(), obs.size()));
    ActionVector a{};
    for (int i = 0; i < kActionDim; ++i) {
        double v = t.output[i];
        if (noise_std > 0) v += noise_std * rng.normal();
        a[i] = clamp01(v);
    }
    return a;
}

/// Policy slot -> world body permutation for one episode.
inline std::array<int, kNumAgents> assign_slots(const Scheme& scheme, Rng& rng) {
    std::array<int, kNumAgents> p = {0, 1, 2};
    if (scheme.variant == SchemeVariant::Shuffle)
        for (int i = kNumAgents - 1; i > 0; --i) {
            int j = int(rng.index(std::uint64_t(i) + 1));
            std::swap(p[i], p[j]);
        }
    return p;
}

/// One ensemble member per slot, i.i.d. uniform.
inline std::array<int, kNumAgents> select_ensemble_members(const Scheme& scheme, Rng& rng) {
    if (scheme.variant != SchemeVariant::Ensemble)
        throw std::logic_error("select_ensemble_members: scheme has no ensemble");
    scheme.validate();
    std::array<int, kNumAgents> m{};
    for (int& v : m) v = int(rng.index(std::uint64_t(scheme.ensemble_size)));
    return m;
}

/// Replay storage: one joint buffer normally, one buffer per (slot, member)
/// under the ensemble scheme so members only see episodes they acted in.
class ReplayStore {
public:
    ReplayStore(const Scheme& scheme, std::size_t capacity) : scheme_(scheme) {
        scheme.validate();
        if (scheme.variant == SchemeVariant::Ensemble) {
            std::size_t per = std::max<std::size_t>(1, capacity / scheme.ensemble_size);
            for (int i = 0; i < kNumAgents * scheme.ensemble_size; ++i) buffers_.emplace_back(per);
        } else {
            buffers_.emplace_back(capacity);
        }
    }

    ReplayBuffer& buffer_for(int slot, int member) {
        if (scheme_.variant != SchemeVariant::Ensemble) return buffers_[0];
        return buffers_[std::size_t(slot) * scheme_.ensemble_size + member];
    }
    const ReplayBuffer& buffer_for(int slot, int member) const {
        return const_cast<ReplayStore*>(this)->buffer_for(slot, member);
    }

    void push(const Transition& t, const std::array<int, kNumAgents>& members) {
        if (scheme_.variant == SchemeVariant::Ensemble) {
            for (int k = 0; k < kNumAgents; ++k) buffer_for(k, members[k]).push(t);
        } else {
            buffers_[0].push(t);
        }
        ++total_pushed_;
    }

    long total_pushed() const { return total_pushed_; }

private:
    Scheme scheme_;
    std::vector<ReplayBuffer> buffers_;
    long total_pushed_ = 0;
};

/// Temporal-difference target for one transition and one slot's critic.
/// Terminal transitions drop the bootstrap term.
inline double critic_target(const Transition& t, int slot,
                            const std::array<const ParamSet*, kNumAgents>& target_actors,
                            const ParamSet& critic, double gamma) {
    if (slot < 0 || slot >= kNumAgents) throw std::out_of_range("critic_target: bad slot");
    if (t.terminal) return t.rew[slot];
    std::vector<double> x(kCriticInputDim);
    for (int j = 0; j < kNumAgents; ++j)
        std::copy(t.next_obs[j].begin(), t.next_obs[j].end(), x.begin() + critic_obs_offset(j));
    for (int j = 0; j < kNumAgents; ++j) {
        ForwardTrace a = forward_target(*target_actors[j],
                                        std::span<const double>(t.next_obs[j].data(),
                                                                t.next_obs[j].size()));
        std::copy(a.output.begin(), a.output.end(), x.begin() + critic_act_offset(j));
    }
    return t.rew[slot] + gamma * forward_target(critic, x).output[0];
}

struct InsufficientReplayError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UpdateDiagnostics {
    std::array<double, kNumAgents> critic_loss{};  // MSE before the update
    std::array<double, kNumAgents> actor_value{};  // mean critic value of the actor batch
};

/// One full update cycle: per slot, critic regression toward the TD target,
/// then actor ascent on the centralized critic with other slots' actions taken
/// from the batch; finally one soft target update per touched parameter set.
inline UpdateDiagnostics update_step(TrainedAgents& agents, ReplayStore& store,
                                     const std::array<int, kNumAgents>& members,
                                     const TrainConfig& cfg, Rng& rng) {
    const int B = cfg.batch_size;
    const bool ensemble = cfg.scheme.variant == SchemeVariant::Ensemble;
    UpdateDiagnostics diag;
    std::set<ParamSet*> touched;

    for (int k = 0; k < kNumAgents; ++k) {
        ReplayBuffer& buf = store.buffer_for(k, members[k]);
        if (buf.size() < std::size_t(B))
            throw InsufficientReplayError("update_step: buffer smaller than a batch");
        auto batch = buf.sample(std::size_t(B), rng);

        // batch matrices in policy-slot order
        std::array<Matrix, kNumAgents> obs, nxt, actm;
        for (int j = 0; j < kNumAgents; ++j) {
            obs[j] = Matrix(B, kObservationDim);
            nxt[j] = Matrix(B, kObservationDim);
            actm[j] = Matrix(B, kActionDim);
        }
        std::vector<double> rew(B);
        std::vector<char> term(B);
        for (int i = 0; i < B; ++i) {
            const Transition& t = *batch[i];
            for (int j = 0; j < kNumAgents; ++j) {
                std::copy(t.obs[j].begin(), t.obs[j].end(), obs[j].row(i));
                std::copy(t.next_obs[j].begin(), t.next_obs[j].end(), nxt[j].row(i));
                std::copy(t.act[j].begin(), t.act[j].end(), actm[j].row(i));
            }
            rew[i] = t.rew[k];
            term[i] = t.terminal ? 1 : 0;
        }

        // TD target: bootstrap through target actors and the target critic.
        // Under the ensemble scheme the slot's own next action comes from the
        // member whose buffer this is; other slots draw a member per batch.
        Matrix xp(B, kCriticInputDim);
        for (int j = 0; j < kNumAgents; ++j) {
            int member = 0;
            if (ensemble)
                member = j == k ? members[k]
                                : int(rng.index(std::uint64_t(cfg.scheme.ensemble_size)));
            const ParamSet& ta = agents.actor(j, member);
            BatchTrace t = forward_batch(ta.target, ta.spec, nxt[j]);
            for (int i = 0; i < B; ++i) {
                std::copy(t.input.row(i), t.input.row(i) + kObservationDim,
                          xp.row(i) + critic_obs_offset(j));
                std::copy(t.output.row(i), t.output.row(i) + kActionDim,
                          xp.row(i) + critic_act_offset(j));
            }
        }
        ParamSet& critic = agents.critics[k];
        BatchTrace qp = forward_batch(critic.target, critic.spec, std::move(xp));
        std::vector<double> y(B);
        for (int i = 0; i < B; ++i)
            y[i] = rew[i] + (term[i] ? 0.0 : cfg.gamma * qp.output(i, 0));

        // critic regression
        Matrix x(B, kCriticInputDim);
        for (int j = 0; j < kNumAgents; ++j)
            for (int i = 0; i < B; ++i) {
                std::copy(obs[j].row(i), obs[j].row(i) + kObservationDim,
                          x.row(i) + critic_obs_offset(j));
                std::copy(actm[j].row(i), actm[j].row(i) + kActionDim,
                          x.row(i) + critic_act_offset(j));
            }
        Matrix x_actor = x;  // reused below with slot k's action replaced
        BatchTrace ct = forward_batch(critic.live, critic.spec, std::move(x));
        Matrix gout(B, 1);
        double loss = 0;
        for (int i = 0; i < B; ++i) {
            double d = ct.output(i, 0) - y[i];
            loss += d * d;
            gout(i, 0) = 2.0 * d / B;
        }
        diag.critic_loss[k] = loss / B;
        MlpGrads cgrads;
        backward_batch(ct, critic.live, critic.spec, gout, cgrads);
        clip_grad_norm(cgrads, cfg.grad_clip_norm);
        adam_step(critic, cgrads, cfg.critic_lr);
        touched.insert(&critic);

        // actor ascent through the freshly updated critic
        ParamSet& actor = agents.actor(k, members[k]);
        BatchTrace at = forward_batch(actor.live, actor.spec, obs[k]);
        for (int i = 0; i < B; ++i)
            std::copy(at.output.row(i), at.output.row(i) + kActionDim,
                      x_actor.row(i) + critic_act_offset(k));
        BatchTrace qt = forward_batch(critic.live, critic.spec, std::move(x_actor));
        double qsum = 0;
        for (int i = 0; i < B; ++i) qsum += qt.output(i, 0);
        diag.actor_value[k] = qsum / B;

        Matrix qgrad(B, 1);
        std::fill(qgrad.data.begin(), qgrad.data.end(), -1.0 / B);  // maximize mean Q
        MlpGrads unused;
        Matrix dx;
        backward_batch(qt, critic.live, critic.spec, qgrad, unused, &dx);

        Matrix da(B, kActionDim);
        for (int i = 0; i < B; ++i)
            std::copy(dx.row(i) + critic_act_offset(k), dx.row(i) + critic_act_offset(k) + kActionDim,
                      da.row(i));
        Matrix preg(B, kActionDim);
        double rscale = 2.0 * cfg.actor_preact_reg / (double(B) * kActionDim);
        for (std::size_t i = 0; i < preg.data.size(); ++i)
            preg.data[i] = rscale * at.output_pre.data[i];
        MlpGrads agrads;
        backward_batch(at, actor.live, actor.spec, da, agrads, nullptr, &preg);
        clip_grad_norm(agrads, cfg.grad_clip_norm);
        adam_step(actor, agrads, cfg.actor_lr);
        touched.insert(&actor);
    }

    for (ParamSet* p : touched) soft_update(*p, cfg.tau);
    return diag;
}

struct TrainResult {
    TrainedAgents agents;
    std::vector<double> episode_mean_reward;  // one entry per episode
};

using ProgressFn = std::function<void(long episode, double mean_step_reward)>;

/// Full training loop. Deterministic for a fixed config (all randomness flows
/// from named substreams of config.seed).
inline TrainResult train(const TrainConfig& cfg, const ProgressFn& progress = {}) {
    cfg.validate();
    Rng init_rng = Rng::derive(cfg.seed, "init");
    Rng env_rng = Rng::derive(cfg.seed, "env");
    Rng noise_rng = Rng::derive(cfg.seed, "noise");
    Rng perm_rng = Rng::derive(cfg.seed, "perm");
    Rng member_rng = Rng::derive(cfg.seed, "member");
    Rng replay_rng = Rng::derive(cfg.seed, "replay");

    TrainResult res{make_agents(cfg, init_rng), {}};
    res.episode_mean_reward.reserve(std::size_t(cfg.episodes));
    ReplayStore store(cfg.scheme, cfg.buffer_capacity);
    const bool ensemble = cfg.scheme.variant == SchemeVariant::Ensemble;
    long steps = 0;

    for (long e = 0; e < cfg.episodes; ++e) {
        auto perm = assign_slots(cfg.scheme, perm_rng);
        std::array<int, kNumAgents> members{};
        if (ensemble) members = select_ensemble_members(cfg.scheme, member_rng);

        WorldState w = reset(env_rng, cfg.physics);
        double reward_sum = 0;
        while (!w.finished()) {
            Transition t;
            std::array<ActionVector, kNumAgents> body_actions{};
            for (int k = 0; k < kNumAgents; ++k) {
                t.obs[k] = observe(w, perm[k]);
                t.act[k] = act(res.agents.actor(k, members[k]), t.obs[k],
                               cfg.exploration_noise_std, noise_rng);
                body_actions[perm[k]] = t.act[k];
            }
            auto [w2, outcome] = step(w, body_actions, cfg.physics);
            for (int k = 0; k < kNumAgents; ++k) {
                t.next_obs[k] = observe(w2, perm[k]);
                t.rew[k] = outcome.reward;
            }
            t.terminal = false;  // horizon truncation is not a terminal state
            store.push(t, members);
            reward_sum += outcome.reward;
            ++steps;

            if (steps % cfg.update_interval_steps == 0 &&
                store.total_pushed() >= cfg.warmup_transitions) {
                bool ready = true;
                for (int k = 0; k < kNumAgents; ++k)
                    if (store.buffer_for(k, members[k]).size() < std::size_t(cfg.batch_size))
                        ready = false;
                if (ready) update_step(res.agents, store, members, cfg, replay_rng);
            }
            w = w2;
        }
        res.episode_mean_reward.push_back(reward_sum / cfg.horizon);
        if (progress) progress(e, res.episode_mean_reward.back());
    }
    return res;
}

}  // namespace coopnav
