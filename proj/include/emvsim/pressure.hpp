#pragma once

#include <stdexcept>
#include <vector>

#include "emvsim/network.hpp"

namespace emv::pressure {

struct UndefinedPressure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Per-lane vehicle counts at one instant; densities are x / x_max.
struct PressureSnapshot {
    std::vector<double> count; // indexed by global lane id

    double density(const net::TrafficNetwork& n, int lane_id) const {
        return count.at(static_cast<size_t>(lane_id)) /
               static_cast<double>(n.lane(lane_id).x_max);
    }
};

// w(l): |density(l) - sum over out-links (1/h) * sum of out-lane densities|
double lane_pressure(const net::TrafficNetwork& net, int node_id, int in_lane,
                     const PressureSnapshot& snap);

// P_i: mean of w(l) over all incoming lanes
double intersection_pressure_emvlight(const net::TrafficNetwork& net, int node_id,
                                      const PressureSnapshot& snap);

// w*(l, m): signed density difference of a movement
double presslight_movement_pressure(const net::TrafficNetwork& net, int in_lane,
                                    int out_lane, const PressureSnapshot& snap);

// P*_i: |sum of w*| over the lane-to-lane movement expansion (every incoming
// lane paired with every lane of the non-U-turn out-links)
double presslight_intersection_pressure(const net::TrafficNetwork& net, int node_id,
                                        const PressureSnapshot& snap);

// Signed sum of w* over the movements a phase permits (max-pressure criterion)
double phase_pressure(const net::TrafficNetwork& net, int node_id, int phase,
                      const PressureSnapshot& snap);

} // namespace emv::pressure
