#pragma once

#include <optional>
#include <string>
#include <vector>

#include "emvsim/dynamics.hpp"
#include "emvsim/geometry.hpp"
#include "emvsim/network.hpp"

namespace emv::access {

struct AccessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AccessNode {
    int id = -1;
    double x_m = 0.0, y_m = 0.0;
    bool signalized = true;
};

struct AccessEdge {
    int u = -1, v = -1;      // undirected road segment
    double length_m = 0.0;
    double speed_mps = 0.0;
};

enum class FacilityKind { Ems, Hospital };

struct Facility {
    int node = -1;
    FacilityKind kind = FacilityKind::Ems;
};

struct AccessGraph {
    std::vector<AccessNode> nodes;
    std::vector<AccessEdge> edges;
    std::vector<Facility> facilities;

    void validate() const;
};

struct Tract {
    geom::Polygon polygon;
    double population = 0.0;
    std::optional<double> area_m2; // livable area override; defaults to the
                                   // polygon area
    double effective_area() const;
};

// I(v): other signalized nodes within the closed radius-r ball over pi r^2.
double intersection_density(const AccessGraph& g, int node, double r_m = 800.0);

// D(e) = alpha * (I_u + I_v) / 2, alpha in s*m^2.
double edge_delay(double alpha, double density_u, double density_v);

// Multi-source Dijkstra over T'(e) = length/speed + edge_delay from every
// facility of the kind; per-node minimum adjusted time.
std::vector<double> adjusted_times(const AccessGraph& g, double alpha, FacilityKind kind,
                                   double r_m = 800.0);

// Voronoi population weights: P(v) = sum_c |R(v) ∩ c| * P(c) / L(c), cells
// clipped to the convex hull of all tract vertices.
std::vector<double> assign_population(const AccessGraph& g, const std::vector<Tract>& tracts);

// cov(tau) = share of population with T' <= tau; taus must be sorted.
std::vector<double> coverage_curve(const std::vector<double>& t_prime,
                                   const std::vector<double>& population,
                                   const std::vector<double>& taus);

struct VulnerableRow {
    int node = -1;
    double t_prime_s = 0.0;
    double population = 0.0;
};

struct VulnerabilityReport {
    std::vector<VulnerableRow> rows; // T' > tau, sorted by node id
    double underserved_population = 0.0;
};

VulnerabilityReport vulnerability_report(const AccessGraph& g,
                                         const std::vector<double>& t_prime,
                                         const std::vector<double>& population,
                                         double tau_s = 240.0);

// ---- EMVLight alpha-halving experiment --------------------------------------

// Seconds the EMV spends inside the +-window around each intersection center
// it traverses (entry at window_m before the stop line, exit at window_m
// past it), restricted to the listed nodes.
std::vector<double> emv_window_transits(const net::TrafficNetwork& net,
                                        const std::vector<dyn::FlowConfig>& flows,
                                        const dyn::EmvSpec& emv, dyn::IController& controller,
                                        dyn::IRouter* router, double horizon_s,
                                        std::uint64_t seed, const std::vector<int>& nodes,
                                        double window_m = 25.0);

struct TransitStats {
    std::string name;
    std::vector<double> transits_s;
    bool trained_policy = true; // false annotates the output with a warning

    double mean() const;
};

// ratio of mean window transit times (the implied alpha scaling factor)
double alpha_scaling(const TransitStats& treatment, const TransitStats& baseline);

// Inner intersections of a rows x cols grid (all four compass neighbors).
std::vector<int> inner_nodes(const net::TrafficNetwork& net);

// ---- file interfaces --------------------------------------------------------

AccessGraph load_access_graph(const std::string& dir); // nodes/edges/facilities.csv
std::vector<Tract> load_tracts(const std::string& geojson_path);

void write_node_times_csv(const std::string& path, const AccessGraph& g,
                          const std::vector<double>& t_prime,
                          const std::vector<double>& population);
void write_coverage_csv(const std::string& path, const std::vector<double>& taus,
                        const std::vector<double>& fractions);
void write_vulnerable_csv(const std::string& path, const VulnerabilityReport& report);

} // namespace emv::access
