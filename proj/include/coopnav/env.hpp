#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "coopnav/common.hpp"

namespace coopnav {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

struct Body {
    Vec2 position;
    Vec2 velocity;
    double radius = 0.15;
    double mass = 1.0;
};

inline constexpr int kNumAgents = 3;
inline constexpr int kNumLandmarks = 3;
inline constexpr int kHorizon = 25;       // fixed episode length, no early termination
inline constexpr int kObservationDim = 14;
inline constexpr int kActionDim = 5;

using Observation = std::array<double, kObservationDim>;
// [0] no-op, [1..4] acceleration magnitudes in +x, -x, +y, -y, each in [0, 1]
using ActionVector = std::array<double, kActionDim>;

struct PhysicsConfig {
    double dt = 0.1;
    double damping = 0.25;
    double force_sensitivity = 5.0;
    double agent_radius = 0.15;
    double landmark_radius = 0.05;
    double agent_mass = 1.0;
    double init_range = 1.0;  // positions drawn uniform in [-init_range, init_range]^2
};

struct WorldState {
    std::array<Body, kNumAgents> agents;
    std::array<Vec2, kNumLandmarks> landmarks;
    int timestep = 0;

    bool finished() const { return timestep >= kHorizon; }
};

struct StepOutcome {
    double reward = 0.0;  // shared across agents
    int collisions = 0;
    std::array<std::array<double, kNumAgents>, kNumLandmarks> distances{};  // [landmark][agent]
};

/// Fresh episode: positions i.i.d. uniform in the init square, velocities zero.
inline WorldState reset(Rng& rng, const PhysicsConfig& cfg = {}) {
    WorldState w;
    const double r = cfg.init_range;
    for (auto& a : w.agents) {
        a.position = {rng.uniform(-r, r), rng.uniform(-r, r)};
        a.velocity = {0.0, 0.0};
        a.radius = cfg.agent_radius;
        a.mass = cfg.agent_mass;
    }
    for (auto& lm : w.landmarks) lm = {rng.uniform(-r, r), rng.uniform(-r, r)};
    w.timestep = 0;
    return w;
}

/// 14-value egocentric observation: own velocity, own position, landmark
/// offsets (fixed landmark order), other-agent offsets (ascending body index,
/// self skipped).
inline Observation observe(const WorldState& w, int agent_index) {
    if (agent_index < 0 || agent_index >= kNumAgents)
        throw std::out_of_range("observe: agent index out of range");
    const Body& self = w.agents[agent_index];
    Observation obs{};
    obs[0] = self.velocity.x;
    obs[1] = self.velocity.y;
    obs[2] = self.position.x;
    obs[3] = self.position.y;
    int i = 4;
    for (const Vec2& lm : w.landmarks) {
        obs[i++] = lm.x - self.position.x;
        obs[i++] = lm.y - self.position.y;
    }
    for (int k = 0; k < kNumAgents; ++k) {
        if (k == agent_index) continue;
        obs[i++] = w.agents[k].position.x - self.position.x;
        obs[i++] = w.agents[k].position.y - self.position.y;
    }
    return obs;
}

/// Net force from the 5-component action: sensitivity * (a[1]-a[2], a[3]-a[4]).
inline Vec2 action_to_force(const ActionVector& a, const PhysicsConfig& cfg = {}) {
    return {cfg.force_sensitivity * (a[1] - a[2]), cfg.force_sensitivity * (a[3] - a[4])};
}

/// Reward, collision count and landmark-agent distances of a state.
/// reward = -(sum over landmarks of min agent distance) - collisions.
inline StepOutcome evaluate_state(const WorldState& w) {
    StepOutcome out;
    double dist_sum = 0.0;
    for (int i = 0; i < kNumLandmarks; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < kNumAgents; ++j) {
            double d = distance(w.landmarks[i], w.agents[j].position);
            out.distances[i][j] = d;
            if (d < best) best = d;
        }
        dist_sum += best;
    }
    for (int a = 0; a < kNumAgents; ++a)
        for (int b = a + 1; b < kNumAgents; ++b) {
            double d = distance(w.agents[a].position, w.agents[b].position);
            if (d < w.agents[a].radius + w.agents[b].radius) ++out.collisions;
        }
    out.reward = -dist_sum - double(out.collisions);
    return out;
}

/// One Euler step. Collisions affect the reward only; bodies pass through
/// each other.
[[nodiscard]] inline std::pair<WorldState, StepOutcome> step(const WorldState& w,
                                               const std::array<ActionVector, kNumAgents>& actions,
                                               const PhysicsConfig& cfg = {}) {
    if (w.finished()) throw std::logic_error("step: episode already finished");
    WorldState next = w;
    for (int k = 0; k < kNumAgents; ++k) {
        Body& b = next.agents[k];
        Vec2 force = action_to_force(actions[k], cfg);
        b.velocity = b.velocity * (1.0 - cfg.damping) + force * (cfg.dt / b.mass);
        b.position = b.position + b.velocity * cfg.dt;
    }
    next.timestep = w.timestep + 1;
    return {next, evaluate_state(next)};
}

/// Per-landmark distance to the closest agent.
inline std::array<double, kNumLandmarks> coverage_distance(const WorldState& w) {
    std::array<double, kNumLandmarks> out{};
    for (int i = 0; i < kNumLandmarks; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < kNumAgents; ++j)
            best = std::min(best, distance(w.landmarks[i], w.agents[j].position));
        out[i] = best;
    }
    return out;
}

}  // namespace coopnav
