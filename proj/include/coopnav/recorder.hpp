#pragma once

// Noise-free evaluation episodes persisted as packed 32-bit traces:
// per timestep and agent slot, the observation, both hidden layers, and the
// action, plus per-episode landmark and final body positions.

#include <filesystem>
#include <fstream>
#include <span>

#include <json.hpp>

#include "coopnav/binfile.hpp"
#include "coopnav/maddpg.hpp"

namespace coopnav {

inline constexpr char kRecordMagic[] = "CNAVREC1";
inline constexpr int kRecordVersion = 1;

struct RecordHeader {
    int agents = kNumAgents;
    int horizon = kHorizon;
    int obs_dim = kObservationDim;
    int hidden1 = 128;
    int hidden2 = 128;
    int action_dim = kActionDim;
    std::string scheme = "vanilla";
    int ensemble_size = 3;
    std::uint64_t seed = 0;
    long episodes = 0;

    int fields_per_agent() const { return obs_dim + hidden1 + hidden2 + action_dim; }
};

/// One episode in slot space: index k holds what policy slot k saw and did;
/// final_positions[k] is the last position of the body slot k controlled.
struct EpisodeRecord {
    long episode_index = 0;
    std::array<Vec2, kNumAgents> landmarks{};
    std::array<Vec2, kNumAgents> final_positions{};
    int hidden1 = 0;
    int hidden2 = 0;
    std::vector<float> data;  // [timestep][agent][obs, h1, h2, action]

    int fields_per_agent() const { return kObservationDim + hidden1 + hidden2 + kActionDim; }
    std::span<const float> slice(int t, int agent, int offset, int len) const {
        std::size_t base =
            (std::size_t(t) * kNumAgents + agent) * fields_per_agent() + offset;
        return {data.data() + base, std::size_t(len)};
    }
    std::span<const float> obs(int t, int agent) const {
        return slice(t, agent, 0, kObservationDim);
    }
    std::span<const float> h1(int t, int agent) const {
        return slice(t, agent, kObservationDim, hidden1);
    }
    std::span<const float> h2(int t, int agent) const {
        return slice(t, agent, kObservationDim + hidden1, hidden2);
    }
    std::span<const float> action(int t, int agent) const {
        return slice(t, agent, kObservationDim + hidden1 + hidden2, kActionDim);
    }
};

struct RecordData {
    RecordHeader header;
    std::vector<EpisodeRecord> episodes;
};

/// Runs noise-free episodes under the agents' scheme rules (slot shuffling,
/// ensemble member draws) and streams them to `path`. Extra header fields are
/// merged into the JSON header verbatim.
inline void write_record_file(const std::filesystem::path& path, const TrainedAgents& agents,
                              long episodes, std::uint64_t seed,
                              const nlohmann::json& extra_header = nlohmann::json::object()) {
    if (episodes <= 0) throw std::invalid_argument("write_record_file: episodes must be positive");
    const TrainConfig& cfg = agents.config;
    const Scheme& scheme = cfg.scheme;
    const bool ensemble = scheme.variant == SchemeVariant::Ensemble;

    RecordHeader h;
    h.hidden1 = cfg.hidden1;
    h.hidden2 = cfg.hidden2;
    h.scheme = to_string(scheme);
    h.ensemble_size = scheme.ensemble_size;
    h.seed = seed;
    h.episodes = episodes;

    nlohmann::json header{{"format", "coopnav-record"}, {"version", kRecordVersion},
                          {"agents", h.agents},         {"horizon", h.horizon},
                          {"obs_dim", h.obs_dim},       {"hidden1", h.hidden1},
                          {"hidden2", h.hidden2},       {"action_dim", h.action_dim},
                          {"scheme", h.scheme},         {"ensemble_size", h.ensemble_size},
                          {"seed", h.seed},             {"episodes", h.episodes}};
    for (const auto& [k, v] : extra_header.items()) header[k] = v;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("write_record_file: cannot open " + path.string());
    binfile::write_header(out, kRecordMagic, header);

    Rng env_rng = Rng::derive(seed, "record-env");
    Rng perm_rng = Rng::derive(seed, "record-perm");
    Rng member_rng = Rng::derive(seed, "record-member");

    const int fields = h.fields_per_agent();
    std::vector<float> buf;
    buf.reserve(std::size_t(2 * kNumAgents * 2) + std::size_t(kHorizon) * kNumAgents * fields);

    for (long e = 0; e < episodes; ++e) {
        auto perm = assign_slots(scheme, perm_rng);
        std::array<int, kNumAgents> members{};
        if (ensemble) members = select_ensemble_members(scheme, member_rng);

        WorldState w = reset(env_rng, cfg.physics);
        buf.clear();
        for (const Vec2& lm : w.landmarks) {
            buf.push_back(float(lm.x));
            buf.push_back(float(lm.y));
        }
        std::size_t final_pos_at = buf.size();
        for (int k = 0; k < kNumAgents; ++k) {
            buf.push_back(0);
            buf.push_back(0);
        }

        while (!w.finished()) {
            std::array<ActionVector, kNumAgents> body_actions{};
            for (int k = 0; k < kNumAgents; ++k) {
                Observation o = observe(w, perm[k]);
                ForwardTrace t = forward(agents.actor(k, members[k]),
                                         std::span<const double>(o.data(), o.size()));
                for (double v : o) buf.push_back(float(v));
                for (double v : t.h1) buf.push_back(float(v));
                for (double v : t.h2) buf.push_back(float(v));
                for (int i = 0; i < kActionDim; ++i) {
                    body_actions[perm[k]][i] = t.output[i];
                    buf.push_back(float(t.output[i]));
                }
            }
            w = step(w, body_actions, cfg.physics).first;
        }
        for (int k = 0; k < kNumAgents; ++k) {
            buf[final_pos_at + 2 * k] = float(w.agents[perm[k]].position.x);
            buf[final_pos_at + 2 * k + 1] = float(w.agents[perm[k]].position.y);
        }
        binfile::write_values<float>(out, buf);
    }
    if (!out) throw std::runtime_error("write_record_file: write failed for " + path.string());
}

inline RecordData load_record_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileMissingError("load_record_file: cannot open " + path.string());
    nlohmann::json j = binfile::read_header(in, kRecordMagic);

    if (j.value("format", "") != "coopnav-record")
        throw FileVersionError("load_record_file: not a record file");
    if (j.value("version", -1) != kRecordVersion)
        throw FileVersionError("load_record_file: unsupported version");

    RecordHeader h;
    try {
        h.agents = j.at("agents").get<int>();
        h.horizon = j.at("horizon").get<int>();
        h.obs_dim = j.at("obs_dim").get<int>();
        h.hidden1 = j.at("hidden1").get<int>();
        h.hidden2 = j.at("hidden2").get<int>();
        h.action_dim = j.at("action_dim").get<int>();
        h.scheme = j.at("scheme").get<std::string>();
        h.ensemble_size = j.at("ensemble_size").get<int>();
        h.seed = j.at("seed").get<std::uint64_t>();
        h.episodes = j.at("episodes").get<long>();
    } catch (const nlohmann::json::exception& e) {
        throw FileCorruptError("load_record_file: bad header: " + std::string(e.what()));
    }
    if (h.agents != kNumAgents || h.obs_dim != kObservationDim || h.action_dim != kActionDim ||
        h.horizon != kHorizon || h.hidden1 <= 0 || h.hidden2 <= 0)
        throw FileDimensionError("load_record_file: header dimensions do not match this build");
    if (h.episodes <= 0) throw FileDimensionError("load_record_file: bad episode count");

    const int fields = h.fields_per_agent();
    const std::size_t per_episode = std::size_t(2 * 2 * kNumAgents) +
                                    std::size_t(kHorizon) * kNumAgents * fields;
    RecordData out;
    out.header = h;
    out.episodes.reserve(std::size_t(h.episodes));
    std::vector<float> buf(per_episode);
    for (long e = 0; e < h.episodes; ++e) {
        try {
            binfile::read_values<float>(in, buf);
        } catch (const FileTruncatedError&) {
            throw FileTruncatedError("load_record_file: payload ends inside episode " +
                                     std::to_string(e));
        }
        EpisodeRecord r;
        r.episode_index = e;
        r.hidden1 = h.hidden1;
        r.hidden2 = h.hidden2;
        std::size_t at = 0;
        for (int k = 0; k < kNumAgents; ++k) {
            r.landmarks[k].x = buf[at++];
            r.landmarks[k].y = buf[at++];
        }
        for (int k = 0; k < kNumAgents; ++k) {
            r.final_positions[k].x = buf[at++];
            r.final_positions[k].y = buf[at++];
        }
        r.data.assign(buf.begin() + std::ptrdiff_t(at), buf.end());
        for (float v : buf)
            if (!std::isfinite(v))
                throw FileCorruptError("load_record_file: non-finite value in episode " +
                                       std::to_string(e));
        for (int t = 0; t < kHorizon; ++t)
            for (int k = 0; k < kNumAgents; ++k) {
                for (float v : r.h1(t, k))
                    if (v < 0)
                        throw FileCorruptError("load_record_file: negative rectifier output");
                for (float v : r.h2(t, k))
                    if (v < 0)
                        throw FileCorruptError("load_record_file: negative rectifier output");
            }
        out.episodes.push_back(std::move(r));
    }
    binfile::expect_eof(in);
    return out;
}

}  // namespace coopnav
