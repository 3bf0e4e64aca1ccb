#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emvsim/dynamics.hpp"
#include "emvsim/network.hpp"
#include "emvsim/nn.hpp"
#include "emvsim/pressure.hpp"
#include "emvsim/routing.hpp"

namespace emv::agents {

struct AgentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class AgentType { Normal = 0, Secondary = 1, Primary = 2 };

// Primary: the intersection the EMV currently heads to. Secondary: the
// routing table's next intersection after the primary. Everyone else Normal.
std::vector<AgentType> classify_agents(const net::TrafficNetwork& net,
                                       const dyn::SimState& state,
                                       const routing::RoutingTable& table);

// Per-type step reward. `emv_out_link` is the link from the primary to the
// secondary intersection; required for Secondary. With `sum_pressure` the
// Normal/Secondary pressure term uses the sum over lanes instead of the mean.
double reward(const net::TrafficNetwork& net, AgentType type, int node,
              const pressure::PressureSnapshot& snap, std::optional<int> emv_out_link,
              double beta = 0.5, bool sum_pressure = false);

// All-pairs hop distances over the intersection adjacency (BFS); -1 when
// unreachable.
std::vector<std::vector<int>> hop_distances(const net::TrafficNetwork& net);

// Spatially discounted reward: r~_i = sum_j alpha^{d(i,j)} r_j over reachable j.
std::vector<double> adjusted_rewards(const std::vector<double>& rewards,
                                     const std::vector<std::vector<int>>& dist, double alpha);

double local_return(double r_tilde, double v_next, double gamma);

// (1/2|B|) sum (R~ - V)^2
double value_loss(const std::vector<double>& returns, const std::vector<double>& values);

// -(1/|B|) sum [ log pi(a) * A~ + lambda * H(pi) ]
double policy_loss(const std::vector<nn::Vec>& probs, const std::vector<int>& actions,
                   const std::vector<double>& advantages, double lambda);

// ---- observation assembly -------------------------------------------------

struct ObsContext {
    const net::TrafficNetwork& net;
    const dyn::SimState& state;
    const routing::FrozenView* view = nullptr; // agent-visible (ETA, Next)
    double horizon_s = 1.0;
};

// 22 reals: 8 in-lane densities, 8 out-lane densities, 4 d_EMV entries by
// arm (-1 padded), normalized ETA, encoded Next arm.
nn::Vec node_feature_block(const ObsContext& ctx, int node);

// 110 reals: self block then the <= 4 sorted neighbors, zero padded.
nn::Vec build_observation(const ObsContext& ctx, int node);

// 32 reals: previous-step policy simplexes of the sorted neighbors.
nn::Vec build_fingerprint(const net::TrafficNetwork& net, int node,
                          const std::vector<nn::Vec>& prev_policies);

// ---- EMVLight decentralized routing (Alg. 1 wiring) ------------------------

class DecentralizedRouter : public dyn::IRouter {
public:
    void on_episode_start(const net::TrafficNetwork& net, const dyn::EmvSpec& spec,
                          const dyn::SimState& state) override;
    void on_control_step(const net::TrafficNetwork& net, const dyn::SimState& state,
                         double t) override;
    int next_node(int at) override;

    const routing::RoutingTable& table() const { return table_; }
    const routing::FrozenView& frozen_view() const { return view_; }

private:
    routing::RoutingTable table_;
    routing::FrozenView view_;
    int last_emv_link_ = -1;
};

// ---- training ---------------------------------------------------------------

struct TrainConfig {
    double horizon_s = 1200.0;
    double control_step_s = 5.0;
    int n_bs = 40;
    double lr_theta = 1e-3;
    double lr_phi = 1e-3;
    double alpha_spatial = 0.90;
    double gamma = 0.99;
    double lambda = 0.01;
    double beta = 0.5;
    int episodes = 100;
    std::uint64_t seed = 0;
    bool lstm = true;
    bool shared_params = false;
    bool sum_pressure = false;
    std::string checkpoint_path; // written at the end when nonempty
    std::string curve_path;      // per-episode CSV when nonempty
};

TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::string& path);

struct EpisodeRecord {
    int episode = 0;
    std::optional<double> t_emv_s;
    double t_avg_s = 0.0;
    double mean_reward = 0.0;
};

struct PolicyBundle {
    bool shared = false;
    std::map<int, nn::ActorCritic> nets; // by node id (single entry when shared)

    const nn::ActorCritic& net_for(int node) const;
    void save(const std::string& path) const;
    static PolicyBundle load(const std::string& path);
};

struct TrainResult {
    std::vector<EpisodeRecord> curve;
    PolicyBundle policies;
};

TrainResult train(const net::TrafficNetwork& net, const std::vector<dyn::FlowConfig>& flows,
                  std::optional<dyn::EmvSpec> emv, const TrainConfig& cfg);

void write_curve_csv(const std::vector<EpisodeRecord>& curve, const std::string& path);

// Greedy evaluation controller for a trained bundle; must share the episode's
// DecentralizedRouter so observations see the frozen (ETA, Next).
class MA2CController : public dyn::IController {
public:
    MA2CController(PolicyBundle bundle, const DecentralizedRouter* router, double horizon_s,
                   double beta = 0.5);

    void reset(const net::TrafficNetwork& net, std::uint64_t seed) override;
    std::vector<int> decide(const net::TrafficNetwork& net, const dyn::SimState& state,
                            double t) override;

private:
    PolicyBundle bundle_;
    const DecentralizedRouter* router_;
    double horizon_s_;
    double beta_;
    std::vector<nn::RecurrentState> rstates_;
    std::vector<nn::Vec> prev_policies_;
};

} // namespace emv::agents
