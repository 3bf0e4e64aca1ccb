#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "emvsim/accessibility.hpp"
#include "emvsim/harness.hpp"

namespace py = pybind11;
using namespace emv;

namespace {

py::dict metrics_to_dict(const dyn::EpisodeMetrics& m) {
    py::dict d;
    d["t_emv_s"] = m.t_emv_s ? py::object(py::float_(*m.t_emv_s)) : py::none();
    d["emv_failed"] = m.emv_failed;
    d["t_avg_s"] = m.t_avg_s;
    d["n_completed"] = m.n_completed;
    d["em_lanes_formed"] = m.em_lanes_formed;
    return d;
}

py::list run_scenario(const std::string& scenario_json, const std::string& controller,
                      const std::string& router) {
    harness::Scenario sc = harness::parse_scenario(scenario_json);
    net::TrafficNetwork net = sc.build_network();
    py::list out;
    for (int rep = 0; rep < sc.repetitions; ++rep) {
        std::uint64_t seed =
            derive_seed(sc.seed, 0x72756eULL + static_cast<std::uint64_t>(rep));
        harness::EpisodeSetup setup =
            harness::make_setup(net, controller, router, seed, "", 0.5, sc.horizon_s);
        std::optional<dyn::EmvSpec> emv = setup.wants_emv ? sc.emv : std::nullopt;
        dyn::EpisodeOptions opts;
        opts.tick_s = sc.tick_s;
        opts.control_step_s = sc.control_step_s;
        out.append(metrics_to_dict(dyn::run_episode(net, sc.flows, emv, *setup.controller,
                                                    setup.router.get(), sc.horizon_s, seed,
                                                    opts)));
    }
    return out;
}

py::list train(const std::string& config_json) {
    nlohmann::json j = nlohmann::json::parse(config_json);
    if (!j.contains("scenario"))
        throw std::invalid_argument("train config needs a scenario");
    harness::Scenario sc = harness::parse_scenario(j["scenario"].dump());
    agents::TrainConfig cfg =
        agents::parse_train_config(j.value("train", nlohmann::json::object()).dump());
    net::TrafficNetwork net = sc.build_network();
    agents::TrainResult result = agents::train(net, sc.flows, sc.emv, cfg);
    py::list curve;
    for (const agents::EpisodeRecord& r : result.curve) {
        py::dict d;
        d["episode"] = r.episode;
        d["t_emv_s"] = r.t_emv_s ? py::object(py::float_(*r.t_emv_s)) : py::none();
        d["t_avg_s"] = r.t_avg_s;
        d["mean_reward"] = r.mean_reward;
        curve.append(d);
    }
    return curve;
}

} // namespace

PYBIND11_MODULE(_emvsim, m) {
    m.doc() = "traffic-simulation and signal-control laboratory";

    m.def(
        "generate_grid",
        [](int rows, int cols, double len, int lanes, double ec) {
            return net::serialize_network(net::generate_grid(rows, cols, len, lanes, ec));
        },
        py::arg("rows"), py::arg("cols"), py::arg("link_length_m") = 300.0,
        py::arg("lanes") = 2, py::arg("ec_ratio") = 0.0,
        "Generate a synthetic grid network and return its JSON text.");

    m.def(
        "config_grid5x5",
        [](int config_id, std::uint64_t seed) {
            return harness::serialize_scenario(harness::config_grid5x5(config_id, seed));
        },
        py::arg("config_id"), py::arg("seed") = 0,
        "Scenario JSON for the synthetic 5x5 flow configurations 1..4.");

    m.def("run_scenario", &run_scenario, py::arg("scenario_json"),
          py::arg("controller") = "fixed", py::arg("router") = "static",
          "Run a scenario's repetitions; returns one metrics dict per run.");

    m.def("train", &train, py::arg("config_json"),
          "Train policies from a {scenario, train} config; returns the learning curve.");

    m.def(
        "run_matrix",
        [](const std::string& matrix_json) {
            return harness::run_matrix(harness::parse_matrix(matrix_json)).to_csv();
        },
        py::arg("matrix_json"), "Run a controller x router benchmark matrix; returns CSV.");

    m.def(
        "adjusted_times",
        [](const std::string& graph_dir, double alpha, const std::string& kind) {
            access::AccessGraph g = access::load_access_graph(graph_dir);
            access::FacilityKind k = kind == "hospital" ? access::FacilityKind::Hospital
                                                        : access::FacilityKind::Ems;
            return access::adjusted_times(g, alpha, k);
        },
        py::arg("graph_dir"), py::arg("alpha") = 15.0, py::arg("kind") = "ems",
        "Per-node adjusted travel time to the nearest facility of the kind.");

    m.def(
        "render_learning_plot",
        [](const std::vector<std::pair<std::string, std::vector<double>>>& curves) {
            std::vector<harness::Curve> cs;
            for (const auto& [name, values] : curves) cs.push_back({name, values});
            return harness::render_learning_plot(cs);
        },
        py::arg("curves"), "Deterministic SVG text for (name, values) learning curves.");

    m.attr("__version__") = "0.1.0";
}
