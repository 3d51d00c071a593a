#pragma once

// Config <-> JSON and checkpoint-directory save/load for trained agents.

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "coopnav/binfile.hpp"
#include "coopnav/maddpg.hpp"
#include "coopnav/params_io.hpp"

namespace coopnav {

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return nlohmann::json{{"episodes", c.episodes},
                          {"horizon", c.horizon},
                          {"gamma", c.gamma},
                          {"tau", c.tau},
                          {"actor_lr", c.actor_lr},
                          {"critic_lr", c.critic_lr},
                          {"batch_size", c.batch_size},
                          {"buffer_capacity", c.buffer_capacity},
                          {"update_interval_steps", c.update_interval_steps},
                          {"exploration_noise_std", c.exploration_noise_std},
                          {"warmup_transitions", c.warmup_transitions},
                          {"grad_clip_norm", c.grad_clip_norm},
                          {"actor_preact_reg", c.actor_preact_reg},
                          {"hidden1", c.hidden1},
                          {"hidden2", c.hidden2},
                          {"seed", c.seed},
                          {"scheme", to_string(c.scheme)},
                          {"ensemble_size", c.scheme.ensemble_size}};
}

/// Starts from defaults and applies the given keys; unknown keys are an error
/// so config typos fail loudly instead of silently using a default.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "episodes")
                c.episodes = value.get<long>();
            else if (key == "horizon")
                c.horizon = value.get<int>();
            else if (key == "gamma")
                c.gamma = value.get<double>();
            else if (key == "tau")
                c.tau = value.get<double>();
            else if (key == "actor_lr")
                c.actor_lr = value.get<double>();
            else if (key == "critic_lr")
                c.critic_lr = value.get<double>();
            else if (key == "batch_size")
                c.batch_size = value.get<int>();
            else if (key == "buffer_capacity")
                c.buffer_capacity = value.get<std::size_t>();
            else if (key == "update_interval_steps")
                c.update_interval_steps = value.get<int>();
            else if (key == "exploration_noise_std")
                c.exploration_noise_std = value.get<double>();
            else if (key == "warmup_transitions")
                c.warmup_transitions = value.get<long>();
            else if (key == "grad_clip_norm")
                c.grad_clip_norm = value.get<double>();
            else if (key == "actor_preact_reg")
                c.actor_preact_reg = value.get<double>();
            else if (key == "hidden1")
                c.hidden1 = value.get<int>();
            else if (key == "hidden2")
                c.hidden2 = value.get<int>();
            else if (key == "seed")
                c.seed = value.get<std::uint64_t>();
            else if (key == "scheme")
                c.scheme.variant = scheme_from_string(value.get<std::string>()).variant;
            else if (key == "ensemble_size")
                c.scheme.ensemble_size = value.get<int>();
            else
                throw std::invalid_argument("config: unknown key '" + key + "'");
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument("config: bad value for key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

namespace detail {

inline std::filesystem::path actor_file(const std::filesystem::path& dir, const Scheme& s, int slot,
                                        int member) {
    switch (s.variant) {
        case SchemeVariant::Shared:
            return dir / "actor_shared.bin";
        case SchemeVariant::Ensemble:
            return dir / ("actor_s" + std::to_string(slot) + "_m" + std::to_string(member) + ".bin");
        default:
            return dir / ("actor_s" + std::to_string(slot) + ".bin");
    }
}

}  // namespace detail

inline void save_agents(const std::filesystem::path& dir, const TrainedAgents& agents,
                        const nlohmann::json& extra_metadata = nlohmann::json::object()) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const Scheme& s = agents.config.scheme;

    nlohmann::json meta{{"format", "coopnav-checkpoint"},
                        {"version", kCheckpointVersion},
                        {"config", train_config_to_json(agents.config)}};
    for (const auto& [key, value] : extra_metadata.items()) meta[key] = value;
    std::ofstream mf(dir / "metadata.json", std::ios::trunc);
    mf << meta.dump(2) << '\n';
    if (!mf) throw std::runtime_error("save_agents: cannot write metadata");

    if (s.variant == SchemeVariant::Shared) {
        save_params(detail::actor_file(dir, s, 0, 0), agents.actors[0].spec, agents.actors[0].live);
    } else {
        int members = s.variant == SchemeVariant::Ensemble ? s.ensemble_size : 1;
        for (int k = 0; k < kNumAgents; ++k)
            for (int m = 0; m < members; ++m) {
                const ParamSet& a = agents.actor(k, m);
                save_params(detail::actor_file(dir, s, k, m), a.spec, a.live);
            }
    }
    for (int k = 0; k < kNumAgents; ++k)
        save_params(dir / ("critic_s" + std::to_string(k) + ".bin"), agents.critics[k].spec,
                    agents.critics[k].live);
}

inline TrainedAgents load_agents(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::path meta_path = dir / "metadata.json";
    std::ifstream mf(meta_path);
    if (!mf) throw FileMissingError("load_agents: missing " + meta_path.string());
    nlohmann::json meta;
    try {
        mf >> meta;
    } catch (const nlohmann::json::exception& e) {
        throw FileCorruptError("load_agents: bad metadata: " + std::string(e.what()));
    }
    if (meta.value("format", "") != "coopnav-checkpoint")
        throw FileVersionError("load_agents: not a checkpoint directory");
    if (meta.value("version", -1) != kCheckpointVersion)
        throw FileVersionError("load_agents: unsupported checkpoint version");
    if (!meta.contains("config")) throw FileCorruptError("load_agents: metadata lacks config");

    TrainedAgents agents;
    agents.config = train_config_from_json(meta["config"]);
    const Scheme& s = agents.config.scheme;

    auto load_into = [&](const fs::path& p, const MlpSpec& want) {
        LoadedParams lp = load_params(p);
        if (lp.spec.input_dim != want.input_dim || lp.spec.output_dim != want.output_dim ||
            lp.spec.hidden1 != want.hidden1 || lp.spec.hidden2 != want.hidden2 ||
            lp.spec.output_activation != want.output_activation)
            throw FileDimensionError("load_agents: " + p.string() + " does not match the config");
        ParamSet ps;
        ps.spec = lp.spec;
        ps.live = lp.params;
        ps.target = lp.params;
        ps.opt.m = make_zero_params(lp.spec);
        ps.opt.v = make_zero_params(lp.spec);
        return ps;
    };

    if (s.variant == SchemeVariant::Shared) {
        agents.actors.push_back(load_into(detail::actor_file(dir, s, 0, 0), agents.config.actor_spec()));
    } else {
        int members = s.variant == SchemeVariant::Ensemble ? s.ensemble_size : 1;
        for (int k = 0; k < kNumAgents; ++k)
            for (int m = 0; m < members; ++m)
                agents.actors.push_back(
                    load_into(detail::actor_file(dir, s, k, m), agents.config.actor_spec()));
    }
    for (int k = 0; k < kNumAgents; ++k)
        agents.critics.push_back(load_into(dir / ("critic_s" + std::to_string(k) + ".bin"),
                                           agents.config.critic_spec()));
    return agents;
}

}  // namespace coopnav
