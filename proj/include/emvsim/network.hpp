#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace emv::net {

// Compass arm slots of an intersection. An incoming link occupies the arm
// pointing toward the neighbor it comes from.
enum class Arm : int { North = 0, East = 1, South = 2, West = 3 };

inline Arm opposite(Arm a) { return static_cast<Arm>((static_cast<int>(a) + 2) % 4); }
// Right-hand traffic: a vehicle entering from arm `a` (heading toward
// opposite(a)) turns left toward...
inline Arm left_target(Arm a) { return static_cast<Arm>((static_cast<int>(a) + 1) % 4); }
inline Arm right_target(Arm a) { return static_cast<Arm>((static_cast<int>(a) + 3) % 4); }

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct LoadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Link {
    int id = -1;
    int from_node = -1;
    int to_node = -1;
    double length_m = 0.0;
    int lane_count = 1;           // h
    int capacity = 0;             // k, vehicles, evenly split across lanes
    double emergency_capacity = 0.0; // C_EC, vehicles
    double v_free_mps = 0.0;      // non-EMV free speed
    double v_emv_mps = 0.0;       // s_f
    int first_lane = -1;          // global index of lane 0

    int lane_capacity() const { return capacity / lane_count; } // x_max per lane
};

struct Lane {
    int id = -1;       // global lane index
    int link_id = -1;
    int index = 0;     // 0 = leftmost
    int x_max = 0;
};

struct Movement {
    int in_lane = -1;  // global lane ids
    int out_lane = -1;
    friend bool operator==(const Movement&, const Movement&) = default;
};

enum class Turn { Left, Through, Right };

struct SignalPhase {
    int index = 0;
    std::vector<Movement> permitted;
};

struct Intersection {
    int id = -1;
    double x_m = 0.0, y_m = 0.0;
    std::array<int, 4> incoming_link{-1, -1, -1, -1};  // by Arm
    std::array<int, 4> outgoing_link{-1, -1, -1, -1};
    std::vector<Movement> movements;                    // M_i (lane-to-link expanded)
    std::vector<SignalPhase> phases;                    // fixed count, 8 by default
    std::vector<int> neighbors;                         // node ids, sorted

    bool has_arm_in(Arm a) const { return incoming_link[static_cast<int>(a)] >= 0; }
    bool has_arm_out(Arm a) const { return outgoing_link[static_cast<int>(a)] >= 0; }
};

struct PhaseOptions {
    bool right_on_any_phase = false;
};

class TrafficNetwork {
public:
    std::vector<Intersection> nodes;
    std::vector<Link> links;
    std::vector<Lane> lanes;

    const Intersection& node(int id) const { return nodes.at(static_cast<size_t>(id)); }
    const Link& link(int id) const { return links.at(static_cast<size_t>(id)); }
    const Lane& lane(int id) const { return lanes.at(static_cast<size_t>(id)); }

    std::vector<int> incoming_lane_ids(int node_id) const;
    std::vector<int> outgoing_lane_ids(int node_id) const;

    // Out-links reachable through a node from an in-lane, grouped by out-link.
    std::vector<int> out_links_of_in_lane(int node_id, int lane_id) const;

    // Directed links out of / into a node, sorted by target/source node id.
    std::vector<int> out_link_ids(int node_id) const;
    std::vector<int> in_link_ids(int node_id) const;

    const std::vector<Movement>& movements_of_phase(int node_id, int phase) const;

    // Arm of link `link_id` at intersection `node_id` (incoming side).
    Arm incoming_arm(int node_id, int link_id) const;

    void validate() const;
};

// Synthetic rows x cols grid of bi-directional links.
TrafficNetwork generate_grid(int rows, int cols, double link_length_m,
                             int lanes_per_link, double ec_ratio,
                             const PhaseOptions& opts = {});

TrafficNetwork load_network(const std::string& path, const PhaseOptions& opts = {});
void save_network(const TrafficNetwork& net, const std::string& path);
std::string serialize_network(const TrafficNetwork& net);
TrafficNetwork parse_network(const std::string& json_text, const PhaseOptions& opts = {});

// Rebuild movements and phases for every node from link geometry.
void build_movements_and_phases(TrafficNetwork& net, const PhaseOptions& opts);

} // namespace emv::net
