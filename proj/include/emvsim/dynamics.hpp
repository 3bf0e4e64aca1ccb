#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "emvsim/network.hpp"
#include "emvsim/pressure.hpp"
#include "emvsim/rng.hpp"
#include "emvsim/routing.hpp"

namespace emv::dyn {

struct ControlError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Eq.-style emergency-lane speed law: the EMV runs at the link's free EMV
// speed s_f while the non-EMV count leaves room for an emergency lane
// (n <= k + C_EC - k/h), otherwise at the congested non-EMV speed.
double emv_speed(double n_vehicles, const net::Link& link);

// Greenshields-style congested non-EMV speed, floored at 10% of free speed.
double congested_speed(double n_vehicles, const net::Link& link);

enum class VehicleClass { NonEmv, Emv };

struct Vehicle {
    int id = -1;
    VehicleClass cls = VehicleClass::NonEmv;
    std::vector<int> route;   // link ids, connected path
    std::size_t route_pos = 0;
    int lane = -1;            // global lane id while on a link
    double transit_remaining_s = 0.0;
    bool queued = false;
    bool in_network = false;
    bool completed = false;
    double entry_time_s = 0.0;
    double exit_time_s = -1.0;
};

struct FlowConfig {
    std::vector<int> origins;
    std::vector<int> destinations;
    double rate_veh_per_lane_hr = 0.0;
    double start_s = 0.0;
    double end_s = 0.0;
};

struct EmvSpec {
    int origin = -1;
    int destination = -1;
    double dispatch_s = 0.0;
};

struct EmvStatus {
    bool active = false;
    bool arrived = false;
    bool failed = false;      // destination unreachable
    int vehicle_id = -1;
    int link = -1;            // current link id, -1 before dispatch
    double pos_m = 0.0;       // distance travelled from the link start
    int next_link = -1;       // decided crossing target, -1 unknown/none
    bool condition_held = true; // Eq.(2) threshold held so far on this link
    double arrival_time_s = -1.0;
};

struct SimOptions {
    double saturation_headway_s = 2.0;
    double injection_jitter = 0.2; // +-20% of the arithmetic spacing
};

class SimState {
public:
    SimState(const net::TrafficNetwork& net, const std::vector<FlowConfig>& flows,
             std::optional<EmvSpec> emv, double horizon_s, std::uint64_t seed,
             const SimOptions& opts = {});

    // One dynamics step of `dt` seconds under the given per-node phases.
    void step(const std::vector<int>& active_phases, double dt);

    double clock() const { return clock_s_; }
    double lane_occupancy(int lane_id) const { return occupancy_.at(static_cast<size_t>(lane_id)); }
    double link_occupancy(int link_id) const;
    pressure::PressureSnapshot snapshot() const;

    const EmvStatus& emv() const { return emv_; }
    const std::optional<EmvSpec>& emv_spec() const { return emv_spec_; }
    // Distance of the EMV to the stop line of its current link, or -1.
    double emv_distance_to_stop_m() const;
    double emv_progress_fraction() const;

    // Router hook: decides the node the EMV heads to after the current link.
    // Consulted whenever the EMV stands at a stop line.
    std::function<int(int at_node)> emv_next_node;

    // EMV travel-time field induced by current occupancies.
    routing::LinkTimeField emv_link_times() const;

    // ledger / metrics
    int injected() const { return injected_; }
    int in_network() const { return in_network_; }
    int completed_trips() const { return completed_; }
    double completed_duration_sum() const { return completed_duration_sum_; }
    int emergency_lanes_formed() const { return em_lanes_formed_; }
    bool conservation_ok() const { return injected_ == in_network_ + completed_; }

    const net::TrafficNetwork& network() const { return net_; }
    const std::vector<Vehicle>& vehicles() const { return vehicles_; }
    const std::deque<int>& lane_queue(int lane_id) const {
        return queues_.at(static_cast<size_t>(lane_id));
    }

private:
    struct Injection {
        double time_s;
        int origin;
        std::vector<int> route;
    };

    void advance_transits(double dt);
    void discharge_queues(const std::vector<int>& phases, double dt);
    void advance_emv(const std::vector<int>& phases, double dt);
    void inject(double dt);
    int pick_entry_lane(int link_id) const;
    void enter_link(Vehicle& v, int link_id);
    void complete_trip(Vehicle& v);

    const net::TrafficNetwork& net_;
    SimOptions opts_;
    double clock_s_ = 0.0;
    double horizon_s_ = 0.0;
    std::vector<Vehicle> vehicles_;
    std::vector<std::deque<int>> queues_;      // per lane, FIFO of vehicle ids
    std::vector<double> occupancy_;            // per lane, vehicle count
    std::vector<double> cooldown_;             // per lane discharge cooldown
    std::vector<Injection> schedule_;          // sorted by time
    std::size_t next_injection_ = 0;
    std::deque<std::size_t> blocked_entries_;  // schedule indices awaiting space
    std::optional<EmvSpec> emv_spec_;
    EmvStatus emv_;
    int injected_ = 0;
    int in_network_ = 0;
    int completed_ = 0;
    double completed_duration_sum_ = 0.0;
    int em_lanes_formed_ = 0;
};

// Per-node phase decisions at each control step.
class IController {
public:
    virtual ~IController() = default;
    virtual void reset(const net::TrafficNetwork& net, std::uint64_t seed) = 0;
    virtual std::vector<int> decide(const net::TrafficNetwork& net, const SimState& state,
                                    double t) = 0;
};

// EMV route guidance.
class IRouter {
public:
    virtual ~IRouter() = default;
    virtual void on_episode_start(const net::TrafficNetwork& net, const EmvSpec& spec,
                                  const SimState& state) = 0;
    virtual void on_control_step(const net::TrafficNetwork& net, const SimState& state,
                                 double t) = 0;
    virtual int next_node(int at_node) = 0;
};

struct EpisodeMetrics {
    std::optional<double> t_emv_s;      // absent without an EMV spec
    bool emv_failed = false;            // unreachable destination
    double t_avg_s = 0.0;
    int n_completed = 0;
    int em_lanes_formed = 0;
};

struct EpisodeOptions {
    double tick_s = 1.0;
    double control_step_s = 5.0;
    SimOptions sim;
    std::string step_log_path; // per-step CSV when nonempty
};

EpisodeMetrics run_episode(const net::TrafficNetwork& net, const std::vector<FlowConfig>& flows,
                           std::optional<EmvSpec> emv, IController& controller,
                           IRouter* router, double horizon_s, std::uint64_t seed,
                           const EpisodeOptions& opts = {});

// Static shortest path by non-EMV free-flow times (background routing).
std::vector<int> static_vehicle_route(const net::TrafficNetwork& net, int origin, int dest);

} // namespace emv::dyn
