#include "emvsim/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace emv::net {

namespace {

constexpr double kEffectiveVehicleLength = 7.5; // m, per-lane slot size
constexpr double kDefaultVFree = 6.0;           // m/s, non-EMV free speed
constexpr double kDefaultVEmv = 12.0;           // m/s, EMV free speed

Arm arm_from_delta(double dx, double dy) {
    if (std::abs(dy) >= std::abs(dx))
        return dy > 0 ? Arm::North : Arm::South;
    return dx > 0 ? Arm::East : Arm::West;
}

Turn turn_of(Arm from_arm, Arm out_arm) {
    if (out_arm == opposite(from_arm)) return Turn::Through;
    if (out_arm == left_target(from_arm)) return Turn::Left;
    if (out_arm == right_target(from_arm)) return Turn::Right;
    return Turn::Left; // U-turn rides with the left slot
}

} // namespace

std::vector<int> TrafficNetwork::incoming_lane_ids(int node_id) const {
    std::vector<int> out;
    for (int a = 0; a < 4; ++a) {
        int lid = node(node_id).incoming_link[a];
        if (lid < 0) continue;
        const Link& l = link(lid);
        for (int i = 0; i < l.lane_count; ++i) out.push_back(l.first_lane + i);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> TrafficNetwork::outgoing_lane_ids(int node_id) const {
    std::vector<int> out;
    for (int a = 0; a < 4; ++a) {
        int lid = node(node_id).outgoing_link[a];
        if (lid < 0) continue;
        const Link& l = link(lid);
        for (int i = 0; i < l.lane_count; ++i) out.push_back(l.first_lane + i);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<int> TrafficNetwork::out_links_of_in_lane(int node_id, int lane_id) const {
    std::set<int> ls;
    for (const Movement& m : node(node_id).movements)
        if (m.in_lane == lane_id) ls.insert(lane(m.out_lane).link_id);
    return {ls.begin(), ls.end()};
}

std::vector<int> TrafficNetwork::out_link_ids(int node_id) const {
    std::vector<int> out;
    for (const Link& l : links)
        if (l.from_node == node_id) out.push_back(l.id);
    std::sort(out.begin(), out.end(), [&](int a, int b) {
        if (link(a).to_node != link(b).to_node) return link(a).to_node < link(b).to_node;
        return a < b;
    });
    return out;
}

std::vector<int> TrafficNetwork::in_link_ids(int node_id) const {
    std::vector<int> out;
    for (const Link& l : links)
        if (l.to_node == node_id) out.push_back(l.id);
    std::sort(out.begin(), out.end(), [&](int a, int b) {
        if (link(a).from_node != link(b).from_node) return link(a).from_node < link(b).from_node;
        return a < b;
    });
    return out;
}

const std::vector<Movement>& TrafficNetwork::movements_of_phase(int node_id, int phase) const {
    const Intersection& n = node(node_id);
    if (phase < 0 || phase >= static_cast<int>(n.phases.size()))
        throw ConfigError("phase index " + std::to_string(phase) + " out of range at node " +
                          std::to_string(node_id));
    return n.phases[static_cast<size_t>(phase)].permitted;
}

Arm TrafficNetwork::incoming_arm(int node_id, int link_id) const {
    const Intersection& n = node(node_id);
    for (int a = 0; a < 4; ++a)
        if (n.incoming_link[a] == link_id) return static_cast<Arm>(a);
    throw ConfigError("link " + std::to_string(link_id) + " does not enter node " +
                      std::to_string(node_id));
}

void TrafficNetwork::validate() const {
    for (const Link& l : links) {
        if (l.from_node < 0 || l.from_node >= static_cast<int>(nodes.size()) ||
            l.to_node < 0 || l.to_node >= static_cast<int>(nodes.size()))
            throw LoadError("link " + std::to_string(l.id) + " references a missing node");
        if (l.from_node == l.to_node)
            throw LoadError("link " + std::to_string(l.id) + " is a self-loop");
        if (l.length_m <= 0)
            throw LoadError("link " + std::to_string(l.id) + " has nonpositive length");
        if (l.capacity <= 0 || l.lane_count < 1)
            throw LoadError("link " + std::to_string(l.id) + " has invalid capacity/lanes");
        if (l.emergency_capacity < 0)
            throw LoadError("link " + std::to_string(l.id) + " has negative emergency capacity");
    }
    // adjacency cross-check
    for (const Intersection& n : nodes) {
        for (int a = 0; a < 4; ++a) {
            if (n.incoming_link[a] >= 0 && link(n.incoming_link[a]).to_node != n.id)
                throw LoadError("adjacency mismatch at node " + std::to_string(n.id));
            if (n.outgoing_link[a] >= 0 && link(n.outgoing_link[a]).from_node != n.id)
                throw LoadError("adjacency mismatch at node " + std::to_string(n.id));
        }
    }
}

void build_movements_and_phases(TrafficNetwork& net, const PhaseOptions& opts) {
    for (Intersection& n : net.nodes) {
        n.movements.clear();
        n.phases.assign(8, {});
        for (int p = 0; p < 8; ++p) n.phases[static_cast<size_t>(p)].index = p;

        // movement slots keyed by (approach arm, turn)
        std::map<std::pair<int, int>, std::vector<Movement>> slots;

        for (int ai = 0; ai < 4; ++ai) {
            int in_id = n.incoming_link[ai];
            if (in_id < 0) continue;
            Arm a = static_cast<Arm>(ai);
            const Link& in = net.link(in_id);

            auto expand = [&](int in_lane, Arm out_arm) {
                int out_id = n.outgoing_link[static_cast<int>(out_arm)];
                if (out_id < 0) return false;
                const Link& out = net.link(out_id);
                for (int j = 0; j < out.lane_count; ++j)
                    slots[{ai, static_cast<int>(turn_of(a, out_arm))}].push_back(
                        {in.first_lane + in_lane, out.first_lane + j});
                return true;
            };

            std::vector<bool> served(static_cast<size_t>(in.lane_count), false);
            if (in.lane_count == 1) {
                served[0] = expand(0, left_target(a)) | expand(0, opposite(a)) |
                            expand(0, right_target(a));
            } else {
                served[0] = expand(0, left_target(a));
                for (int i = 1; i < in.lane_count; ++i)
                    served[static_cast<size_t>(i)] = expand(i, opposite(a));
                if (expand(in.lane_count - 1, right_target(a)))
                    served[static_cast<size_t>(in.lane_count - 1)] = true;
            }
            // lanes left without a movement (missing arm): route them through
            // whatever non-U-turn out-arms exist, else allow the U-turn
            for (int i = 0; i < in.lane_count; ++i) {
                if (served[static_cast<size_t>(i)]) continue;
                bool any = false;
                for (Arm oa : {opposite(a), left_target(a), right_target(a)})
                    any |= expand(i, oa);
                if (!any) expand(i, a); // dead end, U-turn
            }
        }

        for (auto& [key, ms] : slots)
            n.movements.insert(n.movements.end(), ms.begin(), ms.end());

        auto add = [&](int phase, int arm, Turn t) {
            auto it = slots.find({arm, static_cast<int>(t)});
            if (it == slots.end()) return;
            auto& perm = n.phases[static_cast<size_t>(phase)].permitted;
            perm.insert(perm.end(), it->second.begin(), it->second.end());
        };
        constexpr int N = 0, E = 1, S = 2, W = 3;
        // dual-through, dual-left, then one full phase per approach
        add(0, N, Turn::Through); add(0, S, Turn::Through);
        add(1, E, Turn::Through); add(1, W, Turn::Through);
        add(2, N, Turn::Left);    add(2, S, Turn::Left);
        add(3, E, Turn::Left);    add(3, W, Turn::Left);
        add(4, N, Turn::Through); add(4, N, Turn::Left); add(4, N, Turn::Right);
        add(5, S, Turn::Through); add(5, S, Turn::Left); add(5, S, Turn::Right);
        add(6, E, Turn::Through); add(6, E, Turn::Left); add(6, E, Turn::Right);
        add(7, W, Turn::Through); add(7, W, Turn::Left); add(7, W, Turn::Right);
        if (opts.right_on_any_phase) {
            for (int p = 0; p < 8; ++p)
                for (int arm = 0; arm < 4; ++arm) add(p, arm, Turn::Right);
        } else {
            // rights ride with their approach's through slots
            add(0, N, Turn::Right); add(0, S, Turn::Right);
            add(1, E, Turn::Right); add(1, W, Turn::Right);
        }
        // phases must jointly cover M_i; movements never reached by the table
        // (fallback movements of degenerate nodes) go into the approach phase
        std::set<std::pair<int, int>> covered;
        for (const auto& ph : n.phases)
            for (const Movement& m : ph.permitted) covered.insert({m.in_lane, m.out_lane});
        for (const Movement& m : n.movements) {
            if (covered.count({m.in_lane, m.out_lane})) continue;
            Arm a = net.incoming_arm(n.id, net.lane(m.in_lane).link_id);
            int p = 4 + static_cast<int>(a); // the approach's own phase
            n.phases[static_cast<size_t>(p)].permitted.push_back(m);
        }
    }
}

static void finalize(TrafficNetwork& net, const PhaseOptions& opts) {
    // lane table
    net.lanes.clear();
    for (Link& l : net.links) {
        l.first_lane = static_cast<int>(net.lanes.size());
        for (int i = 0; i < l.lane_count; ++i)
            net.lanes.push_back({static_cast<int>(net.lanes.size()), l.id, i, l.lane_capacity()});
    }
    // adjacency by compass arm
    for (Intersection& n : net.nodes) {
        n.incoming_link.fill(-1);
        n.outgoing_link.fill(-1);
        n.neighbors.clear();
    }
    for (const Link& l : net.links) {
        Intersection& to = net.nodes[static_cast<size_t>(l.to_node)];
        Intersection& from = net.nodes[static_cast<size_t>(l.from_node)];
        Arm in_arm = arm_from_delta(from.x_m - to.x_m, from.y_m - to.y_m);
        Arm out_arm = arm_from_delta(to.x_m - from.x_m, to.y_m - from.y_m);
        if (to.incoming_link[static_cast<int>(in_arm)] >= 0)
            throw LoadError("two links enter node " + std::to_string(to.id) +
                            " from the same compass arm");
        if (from.outgoing_link[static_cast<int>(out_arm)] >= 0)
            throw LoadError("two links leave node " + std::to_string(from.id) +
                            " toward the same compass arm");
        to.incoming_link[static_cast<int>(in_arm)] = l.id;
        from.outgoing_link[static_cast<int>(out_arm)] = l.id;
        to.neighbors.push_back(from.id);
        from.neighbors.push_back(to.id);
    }
    for (Intersection& n : net.nodes) {
        std::sort(n.neighbors.begin(), n.neighbors.end());
        n.neighbors.erase(std::unique(n.neighbors.begin(), n.neighbors.end()),
                          n.neighbors.end());
    }
    build_movements_and_phases(net, opts);
    net.validate();
}

TrafficNetwork generate_grid(int rows, int cols, double link_length_m,
                             int lanes_per_link, double ec_ratio,
                             const PhaseOptions& opts) {
    if (rows < 2 || cols < 2) throw ConfigError("grid needs rows, cols >= 2");
    if (lanes_per_link < 1) throw ConfigError("lanes_per_link must be >= 1");
    if (link_length_m <= 0) throw ConfigError("link length must be positive");
    if (ec_ratio < 0 || ec_ratio > 1) throw ConfigError("ec_ratio must be in [0, 1]");

    TrafficNetwork net;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            Intersection n;
            n.id = r * cols + c;
            n.x_m = c * link_length_m;
            n.y_m = r * link_length_m; // row index grows northward
            net.nodes.push_back(n);
        }
    int x_max = static_cast<int>(std::floor(link_length_m / kEffectiveVehicleLength));
    int k = lanes_per_link * x_max;
    auto add_link = [&](int from, int to) {
        Link l;
        l.id = static_cast<int>(net.links.size());
        l.from_node = from;
        l.to_node = to;
        l.length_m = link_length_m;
        l.lane_count = lanes_per_link;
        l.capacity = k;
        l.emergency_capacity = ec_ratio * k;
        l.v_free_mps = kDefaultVFree;
        l.v_emv_mps = kDefaultVEmv;
        net.links.push_back(l);
    };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            int id = r * cols + c;
            if (c + 1 < cols) { add_link(id, id + 1); add_link(id + 1, id); }
            if (r + 1 < rows) { add_link(id, id + cols); add_link(id + cols, id); }
        }
    finalize(net, opts);
    return net;
}

std::string serialize_network(const TrafficNetwork& net) {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const Intersection& n : net.nodes)
        j["nodes"].push_back({{"id", n.id}, {"x_m", n.x_m}, {"y_m", n.y_m}});
    j["links"] = nlohmann::json::array();
    for (const Link& l : net.links)
        j["links"].push_back({{"id", l.id},
                              {"from", l.from_node},
                              {"to", l.to_node},
                              {"length_m", l.length_m},
                              {"lanes", l.lane_count},
                              {"k", l.capacity},
                              {"c_ec", l.emergency_capacity},
                              {"v_free_mps", l.v_free_mps},
                              {"v_emv_mps", l.v_emv_mps}});
    return j.dump(2) + "\n";
}

void save_network(const TrafficNetwork& net, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open " + path + " for writing");
    f << serialize_network(net);
}

TrafficNetwork parse_network(const std::string& text, const PhaseOptions& opts) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw LoadError(std::string("network file is not valid JSON: ") + e.what());
    }
    if (!j.contains("nodes") || !j.contains("links"))
        throw LoadError("network file must have 'nodes' and 'links'");

    TrafficNetwork net;
    std::map<int, int> node_index; // external id -> dense index
    for (const auto& jn : j["nodes"]) {
        Intersection n;
        int ext = jn.at("id").get<int>();
        n.id = static_cast<int>(net.nodes.size());
        n.x_m = jn.at("x_m").get<double>();
        n.y_m = jn.at("y_m").get<double>();
        if (node_index.count(ext)) throw LoadError("duplicate node id " + std::to_string(ext));
        node_index[ext] = n.id;
        net.nodes.push_back(n);
    }
    for (const auto& jl : j["links"]) {
        Link l;
        l.id = static_cast<int>(net.links.size());
        int from = jl.at("from").get<int>(), to = jl.at("to").get<int>();
        if (!node_index.count(from) || !node_index.count(to))
            throw LoadError("link " + jl.at("id").dump() + " references a missing node");
        l.from_node = node_index[from];
        l.to_node = node_index[to];
        l.length_m = jl.at("length_m").get<double>();
        if (l.length_m <= 0)
            throw LoadError("link " + jl.at("id").dump() + " has nonpositive length");
        l.lane_count = jl.value("lanes", 1);
        int default_k = l.lane_count *
            std::max(1, static_cast<int>(std::floor(l.length_m / kEffectiveVehicleLength)));
        l.capacity = jl.value("k", default_k);
        l.emergency_capacity = jl.value("c_ec", 0.0);
        l.v_free_mps = jl.value("v_free_mps", kDefaultVFree);
        l.v_emv_mps = jl.value("v_emv_mps", kDefaultVEmv);
        net.links.push_back(l);
    }
    finalize(net, opts);
    return net;
}

TrafficNetwork load_network(const std::string& path, const PhaseOptions& opts) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot open network file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_network(ss.str(), opts);
}

} // namespace emv::net
