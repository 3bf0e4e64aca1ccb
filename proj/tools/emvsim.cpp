// emvsim: traffic-simulation and signal-control laboratory CLI.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "emvsim/accessibility.hpp"
#include "emvsim/harness.hpp"

using namespace emv;
namespace fs = std::filesystem;

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

// run_id, seed, controller, router, t_emv_s, t_avg_s, n_completed, em_lanes_formed
std::string metrics_csv_header() {
    return "run_id,seed,controller,router,t_emv_s,t_avg_s,n_completed,em_lanes_formed\n";
}

std::string metrics_csv_row(int run_id, std::uint64_t seed, const std::string& controller,
                            const std::string& router, const dyn::EpisodeMetrics& m) {
    char buf[256];
    std::string emv = m.t_emv_s ? [&] {
        char b[48];
        std::snprintf(b, sizeof(b), "%.6f", *m.t_emv_s);
        return std::string(b);
    }()
                                : std::string();
    std::snprintf(buf, sizeof(buf), "%d,%llu,%s,%s,%s,%.6f,%d,%d\n", run_id,
                  static_cast<unsigned long long>(seed), controller.c_str(), router.c_str(),
                  emv.c_str(), m.t_avg_s, m.n_completed, m.em_lanes_formed);
    return buf;
}

int cmd_net_gen(int rows, int cols, double len, int lanes, double ec,
                const std::string& out) {
    net::TrafficNetwork g = net::generate_grid(rows, cols, len, lanes, ec);
    net::save_network(g, out);
    std::cout << "wrote " << out << " (" << g.nodes.size() << " nodes, " << g.links.size()
              << " links)\n";
    return 0;
}

int cmd_sim_run(const std::string& config, const std::string& controller,
                const std::string& router, const std::string& out,
                const std::string& step_log) {
    harness::Scenario sc = harness::load_scenario(config);
    net::TrafficNetwork net = sc.build_network();
    std::string csv = metrics_csv_header();
    for (int rep = 0; rep < sc.repetitions; ++rep) {
        std::uint64_t seed = derive_seed(sc.seed, 0x72756eULL + static_cast<std::uint64_t>(rep));
        harness::EpisodeSetup setup =
            harness::make_setup(net, controller, router, seed, "", 0.5, sc.horizon_s);
        std::optional<dyn::EmvSpec> emv = setup.wants_emv ? sc.emv : std::nullopt;
        dyn::EpisodeOptions opts;
        opts.tick_s = sc.tick_s;
        opts.control_step_s = sc.control_step_s;
        if (!step_log.empty() && sc.repetitions == 1) opts.step_log_path = step_log;
        dyn::EpisodeMetrics m = dyn::run_episode(net, sc.flows, emv, *setup.controller,
                                                 setup.router.get(), sc.horizon_s, seed, opts);
        csv += metrics_csv_row(rep, seed, controller, router, m);
        std::printf("run %d: t_emv=%s t_avg=%.2f completed=%d em_lanes=%d%s\n", rep,
                    m.t_emv_s ? std::to_string(*m.t_emv_s).c_str() : "n/a", m.t_avg_s,
                    m.n_completed, m.em_lanes_formed, m.emv_failed ? " (EMV failed)" : "");
    }
    if (!out.empty()) write_file(out, csv);
    return 0;
}

int cmd_train(const std::string& config) {
    std::ifstream in(config);
    if (!in) throw std::runtime_error("cannot read " + config);
    std::stringstream ss;
    ss << in.rdbuf();
    nlohmann::json j = nlohmann::json::parse(ss.str());
    if (!j.contains("scenario")) throw std::runtime_error("train config needs a scenario");
    harness::Scenario sc = harness::parse_scenario(j["scenario"].dump());
    agents::TrainConfig cfg =
        agents::parse_train_config(j.value("train", nlohmann::json::object()).dump());
    net::TrafficNetwork net = sc.build_network();
    agents::TrainResult result = agents::train(net, sc.flows, sc.emv, cfg);
    const agents::EpisodeRecord& last = result.curve.back();
    std::printf("trained %zu episodes; final t_emv=%s t_avg=%.2f mean_reward=%.4f\n",
                result.curve.size(),
                last.t_emv_s ? std::to_string(*last.t_emv_s).c_str() : "n/a", last.t_avg_s,
                last.mean_reward);
    if (!cfg.checkpoint_path.empty()) std::cout << "policy: " << cfg.checkpoint_path << "\n";
    if (!cfg.curve_path.empty()) std::cout << "curve: " << cfg.curve_path << "\n";
    return 0;
}

int cmd_eval(const std::string& matrix_path, const std::string& out,
             const std::string& text_out) {
    harness::MatrixSpec spec = harness::load_matrix(matrix_path);
    harness::ResultTable table = harness::run_matrix(spec);
    std::cout << table.to_text();
    if (!out.empty()) write_file(out, table.to_csv());
    if (!text_out.empty()) write_file(text_out, table.to_text());
    return 0;
}

int cmd_access(const std::string& graph_dir, double alpha, double tau,
               const std::string& out_dir) {
    access::AccessGraph g = access::load_access_graph(graph_dir);

    std::vector<double> population(g.nodes.size(), 1.0);
    fs::path tract_path = fs::path(graph_dir) / "tracts.geojson";
    bool have_tracts = fs::exists(tract_path);
    if (have_tracts)
        population = access::assign_population(g, access::load_tracts(tract_path.string()));

    struct ClassResult {
        std::string name;
        std::vector<double> t;
    };
    std::vector<ClassResult> classes;
    for (auto [kind, name] : {std::pair{access::FacilityKind::Ems, std::string("ems")},
                              {access::FacilityKind::Hospital, std::string("hospital")}}) {
        bool present = false;
        for (const access::Facility& f : g.facilities)
            if (f.kind == kind) present = true;
        if (present) classes.push_back({name, access::adjusted_times(g, alpha, kind)});
    }
    if (classes.empty()) throw std::runtime_error("graph has no facilities");

    fs::create_directories(out_dir);
    char buf[96];

    std::string nt = "node,population";
    for (const ClassResult& c : classes) nt += ",t_" + c.name + "_s";
    nt += "\n";
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.6f", g.nodes[i].id, population[i]);
        nt += buf;
        for (const ClassResult& c : classes) {
            std::snprintf(buf, sizeof(buf), ",%.6f", c.t[i]);
            nt += buf;
        }
        nt += "\n";
    }
    write_file((fs::path(out_dir) / "node_times.csv").string(), nt);

    std::vector<double> taus;
    for (double t = 0.0; t <= std::max(600.0, 2.0 * tau) + 1e-9; t += 10.0) taus.push_back(t);
    std::string cov = "tau_s";
    for (const ClassResult& c : classes) cov += "," + c.name;
    cov += "\n";
    std::vector<std::vector<double>> fracs;
    for (const ClassResult& c : classes)
        fracs.push_back(access::coverage_curve(c.t, population, taus));
    for (size_t i = 0; i < taus.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.1f", taus[i]);
        cov += buf;
        for (const std::vector<double>& f : fracs) {
            std::snprintf(buf, sizeof(buf), ",%.9f", f[i]);
            cov += buf;
        }
        cov += "\n";
    }
    write_file((fs::path(out_dir) / "coverage_curve.csv").string(), cov);

    std::string vul = "kind,node,t_prime_s,population\n";
    for (const ClassResult& c : classes) {
        access::VulnerabilityReport rep =
            access::vulnerability_report(g, c.t, population, tau);
        for (const access::VulnerableRow& r : rep.rows) {
            std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f\n", c.name.c_str(), r.node,
                          r.t_prime_s, r.population);
            vul += buf;
        }
        std::printf("%s: %zu nodes beyond tau=%.0fs, underserved population %.2f\n",
                    c.name.c_str(), rep.rows.size(), tau, rep.underserved_population);
    }
    write_file((fs::path(out_dir) / "vulnerable.csv").string(), vul);
    if (!have_tracts)
        std::cout << "note: no tracts.geojson found; population weights default to 1\n";
    return 0;
}

int cmd_report_plot(const std::string& curve_csv, const std::string& out) {
    harness::emit_learning_plot(harness::curves_from_csv(curve_csv), out);
    std::cout << "wrote " << out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"traffic network simulation and signal-control laboratory"};
    app.require_subcommand(1);

    // net gen
    auto* net_cmd = app.add_subcommand("net", "network utilities")->require_subcommand(1);
    auto* gen = net_cmd->add_subcommand("gen", "generate a synthetic grid network");
    int rows = 5, cols = 5, lanes = 2;
    double len = 300.0, ec = 0.0;
    std::string net_out;
    gen->add_option("--rows", rows, "grid rows")->check(CLI::Range(2, 1000));
    gen->add_option("--cols", cols, "grid columns")->check(CLI::Range(2, 1000));
    gen->add_option("--len", len, "link length in meters");
    gen->add_option("--lanes", lanes, "lanes per link");
    gen->add_option("--ec", ec, "emergency capacity ratio")->check(CLI::Range(0.0, 1.0));
    gen->add_option("-o,--output", net_out, "output JSON file")->required();

    // sim run
    auto* sim_cmd = app.add_subcommand("sim", "simulation")->require_subcommand(1);
    auto* run = sim_cmd->add_subcommand("run", "run a scenario");
    std::string sim_config, sim_controller = "fixed", sim_router = "static", sim_out,
                sim_step_log;
    run->add_option("-c,--config", sim_config, "scenario JSON")->required();
    run->add_option("--controller", sim_controller,
                    "fixed | maxpressure | greenwave | emvlight");
    run->add_option("--router", sim_router, "none | static | dynamic | decentralized");
    run->add_option("-o,--output", sim_out, "episode metrics CSV");
    run->add_option("--log", sim_step_log, "per-step CSV (single repetition only)");

    // train
    auto* train_cmd = app.add_subcommand("train", "train signal-control policies");
    std::string train_config;
    train_cmd->add_option("-c,--config", train_config, "config with scenario + train keys")
        ->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "benchmark matrix");
    std::string matrix_path, eval_out, eval_text;
    eval_cmd->add_option("--matrix", matrix_path, "matrix JSON")->required();
    eval_cmd->add_option("-o,--output", eval_out, "result CSV");
    eval_cmd->add_option("--text", eval_text, "formatted text table file");

    // access run
    auto* access_cmd = app.add_subcommand("access", "accessibility analytics")
                           ->require_subcommand(1);
    auto* arun = access_cmd->add_subcommand("run", "compute adjusted times and coverage");
    std::string graph_dir, access_out;
    double alpha = 15.0, tau = 240.0;
    arun->add_option("--graph", graph_dir, "directory with nodes/edges/facilities csv")
        ->required();
    arun->add_option("--alpha", alpha, "intersection delay factor in s*m^2");
    arun->add_option("--tau", tau, "accessibility threshold in seconds");
    arun->add_option("-o,--output", access_out, "output directory")->required();

    // report plot
    auto* report_cmd = app.add_subcommand("report", "reporting")->require_subcommand(1);
    auto* plot = report_cmd->add_subcommand("plot", "render a learning-curve SVG");
    std::string curve_csv, plot_out;
    plot->add_option("-c,--curve", curve_csv, "training curve CSV")->required();
    plot->add_option("-o,--output", plot_out, "output SVG")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_net_gen(rows, cols, len, lanes, ec, net_out);
        if (run->parsed())
            return cmd_sim_run(sim_config, sim_controller, sim_router, sim_out, sim_step_log);
        if (train_cmd->parsed()) return cmd_train(train_config);
        if (eval_cmd->parsed()) return cmd_eval(matrix_path, eval_out, eval_text);
        if (arun->parsed()) return cmd_access(graph_dir, alpha, tau, access_out);
        if (plot->parsed()) return cmd_report_plot(curve_csv, plot_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
