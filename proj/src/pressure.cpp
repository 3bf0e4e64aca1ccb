#include "emvsim/pressure.hpp"

#include <cmath>
#include <set>

namespace emv::pressure {

double lane_pressure(const net::TrafficNetwork& net, int node_id, int in_lane,
                     const PressureSnapshot& snap) {
    std::vector<int> out_links = net.out_links_of_in_lane(node_id, in_lane);
    if (out_links.empty())
        throw UndefinedPressure("lane " + std::to_string(in_lane) +
                                " has no movements at node " + std::to_string(node_id));
    double w = snap.density(net, in_lane);
    for (int lid : out_links) {
        const net::Link& l = net.link(lid);
        double s = 0.0;
        for (int i = 0; i < l.lane_count; ++i) s += snap.density(net, l.first_lane + i);
        w -= s / l.lane_count;
    }
    return std::abs(w);
}

double intersection_pressure_emvlight(const net::TrafficNetwork& net, int node_id,
                                      const PressureSnapshot& snap) {
    std::vector<int> in_lanes = net.incoming_lane_ids(node_id);
    if (in_lanes.empty())
        throw UndefinedPressure("node " + std::to_string(node_id) + " has no incoming lanes");
    double sum = 0.0;
    for (int l : in_lanes) sum += lane_pressure(net, node_id, l, snap);
    return sum / static_cast<double>(in_lanes.size());
}

double presslight_movement_pressure(const net::TrafficNetwork& net, int in_lane,
                                    int out_lane, const PressureSnapshot& snap) {
    return snap.density(net, in_lane) - snap.density(net, out_lane);
}

double presslight_intersection_pressure(const net::TrafficNetwork& net, int node_id,
                                        const PressureSnapshot& snap) {
    const net::Intersection& n = net.node(node_id);
    double sum = 0.0;
    for (int ai = 0; ai < 4; ++ai) {
        int in_id = n.incoming_link[ai];
        if (in_id < 0) continue;
        const net::Link& in = net.link(in_id);
        for (int oi = 0; oi < 4; ++oi) {
            if (oi == ai) continue; // skip the U-turn link
            int out_id = n.outgoing_link[oi];
            if (out_id < 0) continue;
            const net::Link& out = net.link(out_id);
            for (int i = 0; i < in.lane_count; ++i)
                for (int j = 0; j < out.lane_count; ++j)
                    sum += presslight_movement_pressure(net, in.first_lane + i,
                                                        out.first_lane + j, snap);
        }
    }
    return std::abs(sum);
}

double phase_pressure(const net::TrafficNetwork& net, int node_id, int phase,
                      const PressureSnapshot& snap) {
    double sum = 0.0;
    for (const net::Movement& m : net.movements_of_phase(node_id, phase))
        sum += presslight_movement_pressure(net, m.in_lane, m.out_lane, snap);
    return sum;
}

} // namespace emv::pressure
