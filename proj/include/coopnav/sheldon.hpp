#pragma once

// Scripted point controller that drives one body straight to a fixed landmark.

#include <stdexcept>

#include "coopnav/env.hpp"

namespace coopnav {

struct SheldonPolicy {
    int target_landmark = 0;
    double gain = 2.0;
    double brake = 1.0;
};

inline ActionVector sheldon_act(const SheldonPolicy& policy, const Observation& obs) {
    if (policy.target_landmark < 0 || policy.target_landmark >= kNumLandmarks)
        throw std::out_of_range("sheldon_act: bad target landmark");
    if (policy.gain <= 0 || policy.brake < 0)
        throw std::invalid_argument("sheldon_act: gains must be positive");

    // observation layout: [0,2) velocity, [4,10) egocentric landmarks
    const double ex = obs[4 + 2 * policy.target_landmark];
    const double ey = obs[5 + 2 * policy.target_landmark];
    const double ax = policy.gain * ex - policy.brake * obs[0];
    const double ay = policy.gain * ey - policy.brake * obs[1];

    ActionVector a{};  // slot 0 is the dummy
    if (ax > 0)
        a[1] = clamp01(ax);
    else
        a[2] = clamp01(-ax);
    if (ay > 0)
        a[3] = clamp01(ay);
    else
        a[4] = clamp01(-ay);
    return a;
}

}  // namespace coopnav
