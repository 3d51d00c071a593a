#pragma once

// Behavioral metrics for trained populations: which landmark each agent claims,
// whether the trio covers all landmarks, and how a single trained agent copes
// when scripted teammates occupy two of the three landmarks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coopnav/binfile.hpp"
#include "coopnav/env.hpp"
#include "coopnav/maddpg.hpp"
#include "coopnav/sheldon.hpp"

namespace coopnav {

struct CoverageCriterion {
    double radius = 0.3;  // agent radius + landmark radius + slack

    void validate() const {
        if (!(radius > 0.0))
            throw std::invalid_argument("CoverageCriterion: radius must be positive");
    }
};

/// Landmark -> agent assignment minimizing total distance, restricted to
/// bijections where every landmark's assigned agent is within the coverage
/// radius. nullopt when no such bijection exists.
inline std::optional<std::array<int, kNumLandmarks>> landmark_assignment(
        const WorldState& w, const CoverageCriterion& criterion = {}) {
    criterion.validate();
    double dist[kNumLandmarks][kNumAgents];
    for (int l = 0; l < kNumLandmarks; ++l)
        for (int a = 0; a < kNumAgents; ++a) {
            Vec2 d = w.agents[std::size_t(a)].position - w.landmarks[std::size_t(l)];
            dist[l][a] = std::hypot(d.x, d.y);
        }
    std::array<int, kNumLandmarks> perm{0, 1, 2};
    std::optional<std::array<int, kNumLandmarks>> best;
    double best_total = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        bool valid = true;
        for (int l = 0; l < kNumLandmarks; ++l) {
            double d = dist[l][perm[std::size_t(l)]];
            if (d > criterion.radius) {
                valid = false;
                break;
            }
            total += d;
        }
        if (valid && total < best_total) {
            best_total = total;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

/// True iff each landmark can be matched to a distinct agent within the radius.
inline bool episode_success(const WorldState& final_state, const CoverageCriterion& criterion = {}) {
    return landmark_assignment(final_state, criterion).has_value();
}

/// Counts over qualifying episodes (those passing episode_success) of which
/// policy slot ended up covering which landmark.
struct PreferenceMatrix {
    std::array<std::array<std::int64_t, kNumLandmarks>, kNumAgents> counts{};  // [slot][landmark]
    int total_episodes = 0;
    int qualifying_episodes = 0;

    bool empty() const { return qualifying_episodes == 0; }
    double qualifying_fraction() const {
        return total_episodes > 0 ? double(qualifying_episodes) / total_episodes : 0.0;
    }
    double percentage(int slot, int landmark) const {
        if (empty()) return 0.0;
        return 100.0 * double(counts[std::size_t(slot)][std::size_t(landmark)]) / qualifying_episodes;
    }
};

/// success[k][l]: trained slot k on body k, free landmark l, the other two
/// landmarks claimed by scripted agents on the remaining bodies.
struct SheldonGrid {
    std::array<std::array<double, kNumLandmarks>, kNumAgents> success{};
};

/// Runs one episode to the horizon. act_fn(body_index, observation) -> action.
template <class ActFn>
inline WorldState run_episode(WorldState w, ActFn&& act_fn, const PhysicsConfig& physics) {
    while (!w.finished()) {
        std::array<ActionVector, kNumAgents> actions{};
        for (int b = 0; b < kNumAgents; ++b) actions[std::size_t(b)] = act_fn(b, observe(w, b));
        w = step(w, actions, physics).first;
    }
    return w;
}

inline void check_eval_args(int episodes, const CoverageCriterion& criterion) {
    criterion.validate();
    if (episodes <= 0) throw std::invalid_argument("evaluation: episodes must be positive");
}

/// Preference tally for arbitrary per-body controllers (bodies coincide with
/// slots here; the trained-agents overload below handles slot permutation).
template <class ActFn>
inline PreferenceMatrix preference_matrix_fn(ActFn&& act_fn, std::uint64_t seed, int episodes,
                                             const CoverageCriterion& criterion = {},
                                             const PhysicsConfig& physics = {}) {
    check_eval_args(episodes, criterion);
    Rng env_rng = Rng::derive(seed, "eval-env");
    PreferenceMatrix m;
    m.total_episodes = episodes;
    for (int ep = 0; ep < episodes; ++ep) {
        WorldState final_state = run_episode(reset(env_rng, physics), act_fn, physics);
        if (auto assign = landmark_assignment(final_state, criterion)) {
            ++m.qualifying_episodes;
            for (int l = 0; l < kNumLandmarks; ++l)
                ++m.counts[std::size_t((*assign)[std::size_t(l)])][std::size_t(l)];
        }
    }
    return m;
}

/// Noise-free evaluation of a trained population under its own scheme rules:
/// shuffle redraws the slot->body permutation per episode, ensemble redraws
/// the active member per slot per episode. Tallies are per policy slot.
inline PreferenceMatrix preference_matrix(const TrainedAgents& agents, std::uint64_t seed,
                                          int episodes = 4000,
                                          const CoverageCriterion& criterion = {}) {
    check_eval_args(episodes, criterion);
    const TrainConfig& cfg = agents.config;
    const bool ensemble = cfg.scheme.variant == SchemeVariant::Ensemble;
    Rng env_rng = Rng::derive(seed, "eval-env");
    Rng perm_rng = Rng::derive(seed, "eval-perm");
    Rng member_rng = Rng::derive(seed, "eval-member");
    Rng unused(0);  // act() with zero noise never draws
    PreferenceMatrix m;
    m.total_episodes = episodes;
    for (int ep = 0; ep < episodes; ++ep) {
        auto perm = assign_slots(cfg.scheme, perm_rng);
        std::array<int, kNumAgents> members{};
        if (ensemble) members = select_ensemble_members(cfg.scheme, member_rng);
        std::array<int, kNumAgents> slot_of_body{};
        for (int k = 0; k < kNumAgents; ++k) slot_of_body[std::size_t(perm[std::size_t(k)])] = k;
        WorldState final_state = run_episode(
                reset(env_rng, cfg.physics),
                [&](int body, const Observation& obs) {
                    int slot = slot_of_body[std::size_t(body)];
                    return act(agents.actor(slot, members[std::size_t(slot)]), obs, 0.0, unused);
                },
                cfg.physics);
        if (auto assign = landmark_assignment(final_state, criterion)) {
            ++m.qualifying_episodes;
            for (int l = 0; l < kNumLandmarks; ++l)
                ++m.counts[std::size_t(slot_of_body[std::size_t((*assign)[std::size_t(l)])])][std::size_t(l)];
        }
    }
    return m;
}

/// The two indices in {0,1,2} other than `excluded`, ascending.
inline std::array<int, 2> other_indices(int excluded) {
    std::array<int, 2> out{};
    int n = 0;
    for (int i = 0; i < 3; ++i)
        if (i != excluded) out[std::size_t(n++)] = i;
    return out;
}

/// Grid core with a pluggable policy for the evaluated body. For cell (k, l)
/// the evaluated policy drives body k while scripted agents on the remaining
/// bodies claim the two non-free landmarks (lower body -> lower landmark
/// index). Every cell replays the same episode initializations.
template <class CellActFn>
inline SheldonGrid sheldon_grid_fn(CellActFn&& act_fn, std::uint64_t seed, int episodes,
                                   const CoverageCriterion& criterion = {},
                                   const PhysicsConfig& physics = {}) {
    check_eval_args(episodes, criterion);
    SheldonGrid g;
    for (int k = 0; k < kNumAgents; ++k)
        for (int l = 0; l < kNumLandmarks; ++l) {
            Rng env_rng = Rng::derive(seed, "sheldon-env");
            auto bodies = other_indices(k);
            auto claims = other_indices(l);
            SheldonPolicy low{claims[0]};
            SheldonPolicy high{claims[1]};
            int successes = 0;
            for (int ep = 0; ep < episodes; ++ep) {
                WorldState final_state = run_episode(
                        reset(env_rng, physics),
                        [&](int body, const Observation& obs) {
                            if (body == k) return act_fn(k, l, obs);
                            return sheldon_act(body == bodies[0] ? low : high, obs);
                        },
                        physics);
                if (episode_success(final_state, criterion)) ++successes;
            }
            g.success[std::size_t(k)][std::size_t(l)] = double(successes) / episodes;
        }
    return g;
}

/// Sheldon generalization grid for a trained population. Ensemble schemes
/// redraw the evaluated slot's member per episode; shuffle and shared schemes
/// need no extra per-episode state since only one trained slot is present.
inline SheldonGrid sheldon_grid(const TrainedAgents& agents, std::uint64_t seed,
                                int episodes = 4000, const CoverageCriterion& criterion = {}) {
    check_eval_args(episodes, criterion);
    const TrainConfig& cfg = agents.config;
    const bool ensemble = cfg.scheme.variant == SchemeVariant::Ensemble;
    SheldonGrid g;
    Rng unused(0);
    for (int k = 0; k < kNumAgents; ++k)
        for (int l = 0; l < kNumLandmarks; ++l) {
            Rng env_rng = Rng::derive(seed, "sheldon-env");
            Rng member_rng = Rng::derive(seed, "sheldon-member");
            auto bodies = other_indices(k);
            auto claims = other_indices(l);
            SheldonPolicy low{claims[0]};
            SheldonPolicy high{claims[1]};
            int successes = 0;
            for (int ep = 0; ep < episodes; ++ep) {
                int member = ensemble ? member_rng.index(cfg.scheme.ensemble_size) : 0;
                WorldState final_state = run_episode(
                        reset(env_rng, cfg.physics),
                        [&](int body, const Observation& obs) {
                            if (body == k) return act(agents.actor(k, member), obs, 0.0, unused);
                            return sheldon_act(body == bodies[0] ? low : high, obs);
                        },
                        cfg.physics);
                if (episode_success(final_state, criterion)) ++successes;
            }
            g.success[std::size_t(k)][std::size_t(l)] = double(successes) / episodes;
        }
    return g;
}

/// Evaluation outcome of one completed run, the unit scheme_report aggregates.
struct RunEval {
    std::string scheme;
    std::uint64_t seed = 0;
    double trio_success = 0.0;  // qualifying fraction of the trained trio
    SheldonGrid grid;
    PreferenceMatrix preference;
};

struct SchemeStats {
    std::string scheme;
    int runs = 0;
    double trio_mean = 0.0;
    double trio_std = 0.0;     // over runs (seeds)
    double sheldon_mean = 0.0;
    double sheldon_std = 0.0;  // over runs x 9 grid cells
};

struct SchemeReport {
    std::vector<SchemeStats> stats;     // schemes with at least one run
    std::vector<std::string> missing;   // canonical schemes with no runs
};

inline const std::array<std::string, 4>& canonical_schemes() {
    static const std::array<std::string, 4> names{"vanilla", "shuffle", "shared", "ensemble"};
    return names;
}

namespace detail {

inline std::pair<double, double> mean_and_population_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / double(xs.size()))};
}

}  // namespace detail

/// Per-scheme mean and population standard deviation of trained-trio success
/// (one sample per run) and Sheldon success (nine samples per run). Canonical
/// schemes without runs are listed as missing, never an error.
inline SchemeReport scheme_report(const std::vector<RunEval>& runs) {
    std::map<std::string, std::vector<const RunEval*>> by_scheme;
    for (const RunEval& r : runs) by_scheme[r.scheme].push_back(&r);

    std::vector<std::string> order;
    for (const std::string& s : canonical_schemes())
        if (by_scheme.count(s)) order.push_back(s);
    for (const auto& [name, _] : by_scheme)
        if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);

    SchemeReport rep;
    for (const std::string& name : order) {
        const auto& group = by_scheme[name];
        SchemeStats s;
        s.scheme = name;
        s.runs = int(group.size());
        std::vector<double> trio, sheldon;
        for (const RunEval* r : group) {
            trio.push_back(r->trio_success);
            for (int k = 0; k < kNumAgents; ++k)
                for (int l = 0; l < kNumLandmarks; ++l)
                    sheldon.push_back(r->grid.success[std::size_t(k)][std::size_t(l)]);
        }
        std::tie(s.trio_mean, s.trio_std) = detail::mean_and_population_std(trio);
        std::tie(s.sheldon_mean, s.sheldon_std) = detail::mean_and_population_std(sheldon);
        rep.stats.push_back(std::move(s));
    }
    for (const std::string& s : canonical_schemes())
        if (!by_scheme.count(s)) rep.missing.push_back(s);
    return rep;
}

namespace detail {

inline std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace detail

inline void write_preference_tsv(std::ostream& out, const PreferenceMatrix& m) {
    out << "# percentage of qualifying episodes where each agent slot covered each landmark\n";
    out << "# episodes " << m.total_episodes << ", qualifying " << m.qualifying_episodes
        << " (fraction " << detail::fmt6(m.qualifying_fraction()) << ")\n";
    if (m.empty()) out << "# empty: no qualifying episodes\n";
    out << "agent\tlandmark0_pct\tlandmark1_pct\tlandmark2_pct\n";
    for (int k = 0; k < kNumAgents; ++k) {
        out << k;
        for (int l = 0; l < kNumLandmarks; ++l) out << '\t' << detail::fmt6(m.percentage(k, l));
        out << '\n';
    }
}

inline void write_sheldon_tsv(std::ostream& out, const SheldonGrid& g) {
    out << "# success rate with the trained agent in one slot and scripted agents on the other two\n";
    out << "# rows: trained agent slot, columns: free landmark\n";
    out << "agent\tfree_landmark0\tfree_landmark1\tfree_landmark2\n";
    for (int k = 0; k < kNumAgents; ++k) {
        out << k;
        for (int l = 0; l < kNumLandmarks; ++l)
            out << '\t' << detail::fmt6(g.success[std::size_t(k)][std::size_t(l)]);
        out << '\n';
    }
}

inline void write_scheme_summary_tsv(std::ostream& out, const SchemeReport& rep) {
    out << "# success rate per scheme; population 'trained' averages one trio value per run,\n";
    out << "# 'sheldon' averages the nine grid cells of every run\n";
    for (const std::string& s : rep.missing) out << "# missing: " << s << " (no completed runs)\n";
    out << "scheme\tpopulation\tmean\tstd\n";
    for (const SchemeStats& s : rep.stats) {
        out << s.scheme << "\ttrained\t" << detail::fmt6(s.trio_mean) << '\t'
            << detail::fmt6(s.trio_std) << '\n';
        out << s.scheme << "\tsheldon\t" << detail::fmt6(s.sheldon_mean) << '\t'
            << detail::fmt6(s.sheldon_std) << '\n';
    }
}

inline nlohmann::json run_eval_to_json(const RunEval& r) {
    nlohmann::json j;
    j["scheme"] = r.scheme;
    j["seed"] = r.seed;
    j["trio_success"] = r.trio_success;
    std::vector<double> cells;
    for (int k = 0; k < kNumAgents; ++k)
        for (int l = 0; l < kNumLandmarks; ++l)
            cells.push_back(r.grid.success[std::size_t(k)][std::size_t(l)]);
    j["sheldon"] = cells;
    std::vector<std::int64_t> counts;
    for (int k = 0; k < kNumAgents; ++k)
        for (int l = 0; l < kNumLandmarks; ++l)
            counts.push_back(r.preference.counts[std::size_t(k)][std::size_t(l)]);
    j["preference_counts"] = counts;
    j["episodes"] = r.preference.total_episodes;
    j["qualifying_episodes"] = r.preference.qualifying_episodes;
    return j;
}

inline RunEval run_eval_from_json(const nlohmann::json& j) {
    RunEval r;
    try {
        r.scheme = j.at("scheme").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.trio_success = j.at("trio_success").get<double>();
        auto cells = j.at("sheldon").get<std::vector<double>>();
        if (cells.size() != std::size_t(kNumAgents * kNumLandmarks))
            throw FileCorruptError("eval summary: sheldon grid must have 9 entries");
        for (int k = 0; k < kNumAgents; ++k)
            for (int l = 0; l < kNumLandmarks; ++l)
                r.grid.success[std::size_t(k)][std::size_t(l)] =
                        cells[std::size_t(k * kNumLandmarks + l)];
        auto counts = j.at("preference_counts").get<std::vector<std::int64_t>>();
        if (counts.size() != std::size_t(kNumAgents * kNumLandmarks))
            throw FileCorruptError("eval summary: preference counts must have 9 entries");
        for (int k = 0; k < kNumAgents; ++k)
            for (int l = 0; l < kNumLandmarks; ++l)
                r.preference.counts[std::size_t(k)][std::size_t(l)] =
                        counts[std::size_t(k * kNumLandmarks + l)];
        r.preference.total_episodes = j.at("episodes").get<int>();
        r.preference.qualifying_episodes = j.at("qualifying_episodes").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw FileCorruptError(std::string("eval summary: bad json: ") + e.what());
    }
    if (r.scheme.empty()) throw FileCorruptError("eval summary: empty scheme name");
    if (!(r.trio_success >= 0.0 && r.trio_success <= 1.0))
        throw FileCorruptError("eval summary: trio_success outside [0,1]");
    for (int k = 0; k < kNumAgents; ++k)
        for (int l = 0; l < kNumLandmarks; ++l) {
            double v = r.grid.success[std::size_t(k)][std::size_t(l)];
            if (!(v >= 0.0 && v <= 1.0))
                throw FileCorruptError("eval summary: sheldon entry outside [0,1]");
            if (r.preference.counts[std::size_t(k)][std::size_t(l)] < 0)
                throw FileCorruptError("eval summary: negative preference count");
        }
    if (r.preference.total_episodes < 0 || r.preference.qualifying_episodes < 0 ||
        r.preference.qualifying_episodes > r.preference.total_episodes)
        throw FileCorruptError("eval summary: inconsistent episode counts");
    return r;
}

inline void save_run_eval(const std::filesystem::path& path, const RunEval& r) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("save_run_eval: cannot open " + path.string());
    out << run_eval_to_json(r).dump(2) << '\n';
    if (!out) throw std::runtime_error("save_run_eval: write failed");
}

inline RunEval load_run_eval(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileMissingError("load_run_eval: cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FileCorruptError(std::string("eval summary: unparsable json: ") + e.what());
    }
    return run_eval_from_json(j);
}

}  // namespace coopnav
