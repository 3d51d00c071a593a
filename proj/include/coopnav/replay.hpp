#pragma once

#include <cstddef>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "coopnav/common.hpp"
#include "coopnav/env.hpp"

namespace coopnav {

/// One joint environment step, stored in policy-slot order.
struct Transition {
    std::array<Observation, kNumAgents> obs;
    std::array<ActionVector, kNumAgents> act;
    std::array<double, kNumAgents> rew;
    std::array<Observation, kNumAgents> next_obs;
    bool terminal = false;
};

/// Fixed-capacity ring. Storage grows in even chunks up to the capacity so a
/// short run never pays for the full ring and a long run never doubles past it.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return data_.size(); }

    void push(const Transition& t) {
        if (data_.size() < capacity_) {
            if (data_.size() == data_.capacity()) {
                std::size_t want = std::min(capacity_, data_.capacity() + kGrowChunk);
                data_.reserve(want);
            }
            data_.push_back(t);
        } else {
            data_[next_] = t;
            next_ = (next_ + 1) % capacity_;
        }
    }

    const Transition& operator[](std::size_t i) const { return data_[i]; }

    /// Uniform sample of `batch` distinct indices (Floyd's algorithm); the
    /// returned order is deterministic given the generator state.
    std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
        if (batch > data_.size())
            throw std::invalid_argument("ReplayBuffer::sample: batch exceeds size");
        std::vector<const Transition*> out;
        out.reserve(batch);
        std::unordered_set<std::size_t> chosen;
        chosen.reserve(batch * 2);
        for (std::size_t i = data_.size() - batch; i < data_.size(); ++i) {
            std::size_t j = rng.index(i + 1);
            if (!chosen.insert(j).second) {
                chosen.insert(i);
                j = i;
            }
            out.push_back(&data_[j]);
        }
        return out;
    }

private:
    static constexpr std::size_t kGrowChunk = 65536;
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Transition> data_;
};

}  // namespace coopnav
