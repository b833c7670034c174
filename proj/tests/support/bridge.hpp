#pragma once

#include "oracles.hpp"

#include <nswhittle/nswhittle.hpp>

namespace oracle {

inline nsw::TransitionKernel to_kernel(const PlainArm& arm) { return nsw::TransitionKernel::from_nested(arm.p); }

inline nsw::RewardTable to_rewards(const PlainArm& arm) { return nsw::RewardTable::from_nested(arm.r); }

inline PlainArm from_library(const nsw::TransitionKernel& k, const nsw::RewardTable& r) {
    PlainArm arm;
    const std::size_t n = k.num_states();
    arm.p.assign(n, Mat(2, Vec(n)));
    arm.r.assign(n, Vec(2));
    for (std::size_t s = 0; s < n; ++s)
        for (int a = 0; a < 2; ++a) {
            for (std::size_t j = 0; j < n; ++j) arm.p[s][a][j] = k(s, a, j);
            arm.r[s][a] = r(s, a);
        }
    return arm;
}

} // namespace oracle
