#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "emvsim/dynamics.hpp"
#include "emvsim/network.hpp"
#include "emvsim/pressure.hpp"
#include "emvsim/routing.hpp"

namespace emv::baselines {

struct BaselineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- fixed time -------------------------------------------------------------

struct FixedTimeSpec {
    double cycle_s = 40.0;
    double control_step_s = 5.0;
    std::vector<double> split;        // per-phase weights; empty = equal
    std::uint64_t offset_seed = 0;
    bool randomize_offsets = true;    // false pins every offset to zero
};

// Per-node offset in seconds, drawn once from the spec's seed, quantized to
// whole control steps.
double fixed_time_offset(const FixedTimeSpec& spec, int node);

int fixed_time_phase(const FixedTimeSpec& spec, int node, double t);

class FixedTimeController : public dyn::IController {
public:
    explicit FixedTimeController(FixedTimeSpec spec) : spec_(std::move(spec)) {}
    void reset(const net::TrafficNetwork&, std::uint64_t) override {}
    std::vector<int> decide(const net::TrafficNetwork& net, const dyn::SimState&,
                            double t) override;

private:
    FixedTimeSpec spec_;
};

// ---- max pressure -----------------------------------------------------------

// Keeps `current` while held_s < min_phase_s, otherwise the phase with the
// largest signed pressure over its permitted movements; ties take the lowest
// index.
int max_pressure_phase(const net::TrafficNetwork& net, int node,
                       const pressure::PressureSnapshot& snap, int current, double min_phase_s,
                       double held_s);

class MaxPressureController : public dyn::IController {
public:
    explicit MaxPressureController(double min_phase_s = 5.0) : min_phase_s_(min_phase_s) {
        if (min_phase_s < 5.0) throw BaselineError("min_phase_s must be at least 5 s");
    }
    void reset(const net::TrafficNetwork& net, std::uint64_t seed) override;
    std::vector<int> decide(const net::TrafficNetwork& net, const dyn::SimState& state,
                            double t) override;

private:
    double min_phase_s_;
    std::vector<int> current_;
    std::vector<double> held_;
};

// ---- green wave pre-emption ---------------------------------------------------

// When the EMV is within trigger range of `node`, pick the lowest-index phase
// permitting the movement emv_link -> next_link; otherwise keep base_phase.
int green_wave_override(const net::TrafficNetwork& net, int base_phase, int node, int emv_link,
                        int next_link, double distance_m, double trigger_distance_m);

class GreenWaveController : public dyn::IController {
public:
    GreenWaveController(std::unique_ptr<dyn::IController> base, dyn::IRouter* router,
                        double trigger_distance_m = 200.0);
    void reset(const net::TrafficNetwork& net, std::uint64_t seed) override;
    std::vector<int> decide(const net::TrafficNetwork& net, const dyn::SimState& state,
                            double t) override;

private:
    std::unique_ptr<dyn::IController> base_;
    dyn::IRouter* router_;
    double trigger_m_;
};

// ---- A* routing ----------------------------------------------------------------

// Time-optimal path under t; heuristic is the Manhattan distance over the
// fastest EMV speed in the network (admissible). Throws when unreachable.
std::vector<int> static_astar_route(const net::TrafficNetwork& net,
                                    const routing::LinkTimeField& t, int origin, int dest);

class StaticAStarRouter : public dyn::IRouter {
public:
    void on_episode_start(const net::TrafficNetwork& net, const dyn::EmvSpec& spec,
                          const dyn::SimState& state) override;
    void on_control_step(const net::TrafficNetwork&, const dyn::SimState&, double) override {}
    int next_node(int at) override;

protected:
    int destination_ = -1;
    std::vector<int> next_; // per node successor along the route, -1 elsewhere
    void adopt_route(const net::TrafficNetwork& net, const std::vector<int>& links);
};

class DynamicAStarRouter : public StaticAStarRouter {
public:
    explicit DynamicAStarRouter(double period_s = 50.0) : period_s_(period_s) {}
    void on_control_step(const net::TrafficNetwork& net, const dyn::SimState& state,
                         double t) override;

    // Replan from `from_node` under the given times, keeping earlier hops.
    void refresh(const net::TrafficNetwork& net, const routing::LinkTimeField& t,
                 int from_node);
    int refresh_count() const { return refreshes_; }

private:
    double period_s_;
    double last_refresh_ = 0.0;
    int refreshes_ = 0;
};

} // namespace emv::baselines
