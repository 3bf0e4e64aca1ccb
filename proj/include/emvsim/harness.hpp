#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emvsim/agents.hpp"
#include "emvsim/dynamics.hpp"
#include "emvsim/network.hpp"

namespace emv::harness {

struct HarnessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridSpec {
    int rows = 5, cols = 5;
    double link_length_m = 300.0;
    int lanes = 2;
    double ec_ratio = 0.0;
};

struct Scenario {
    std::string name;
    std::optional<GridSpec> grid; // generate on demand ...
    std::string network_path;     // ... or load from a file
    std::vector<dyn::FlowConfig> flows;
    std::optional<dyn::EmvSpec> emv;
    double horizon_s = 1200.0;
    double tick_s = 1.0;
    double control_step_s = 5.0;
    std::uint64_t seed = 0;
    int repetitions = 1;

    void validate() const;
    net::TrafficNetwork build_network() const;
};

Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& path);
std::string serialize_scenario(const Scenario& s);

// The four synthetic 5x5 flow configurations: peak rate from 400 s to 800 s,
// non-peak outside; 1 and 2 feed north/south edges toward east/west, 3 and 4
// reuse the rates with a seeded random boundary OD split.
Scenario config_grid5x5(int config_id, std::uint64_t seed = 0);

// ---- benchmark matrix -------------------------------------------------------

struct MatrixSpec {
    std::vector<Scenario> scenarios;
    std::vector<std::string> controllers; // fixed, maxpressure, greenwave, emvlight
    std::vector<std::string> routers;     // none, static, dynamic, decentralized
    int repetitions = 1;
    std::uint64_t seed = 0;
    std::string policy_path; // trained bundle for the emvlight controller
    double beta = 0.5;
};

MatrixSpec parse_matrix(const std::string& json_text);
MatrixSpec load_matrix(const std::string& path);

struct ResultRow {
    std::string scenario, controller, router;
    int reps = 0;                               // successful repetitions
    std::optional<double> t_emv_mean_s, t_emv_std_s;
    double t_avg_mean_s = 0.0, t_avg_std_s = 0.0;
    std::string note;
};

struct ResultTable {
    std::vector<ResultRow> rows;

    std::string to_csv() const;
    std::string to_text() const; // mean +- std layout
};

// Factory for one benchmark cell; the router pointer may be null ("none").
struct EpisodeSetup {
    std::unique_ptr<dyn::IController> controller;
    std::unique_ptr<dyn::IRouter> router;
    bool wants_emv = true;
};

EpisodeSetup make_setup(const net::TrafficNetwork& net, const std::string& controller,
                        const std::string& router, std::uint64_t seed,
                        const std::string& policy_path, double beta, double horizon_s);

// Cross product scenario x controller x router, `repetitions` seeded runs per
// cell. Incompatible combinations and failed episodes annotate their row and
// the matrix keeps going. Honors EMVSIM_WORKERS for parallel cells.
ResultTable run_matrix(const MatrixSpec& spec);

double sample_std(const std::vector<double>& xs, double mean);

// ---- plotting ---------------------------------------------------------------

struct Curve {
    std::string name;
    std::vector<double> values; // y per episode; x is the index
};

// Deterministic SVG: axes, one polyline per curve, legend.
std::string render_learning_plot(const std::vector<Curve>& curves, int width = 640,
                                 int height = 400);
void emit_learning_plot(const std::vector<Curve>& curves, const std::string& path);

std::vector<Curve> curves_from_csv(const std::string& path); // train curve CSV

} // namespace emv::harness
