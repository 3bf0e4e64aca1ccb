#include "emvsim/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "emvsim/baselines.hpp"

namespace emv::harness {

using json = nlohmann::ordered_json;

void Scenario::validate() const {
    if (!grid && network_path.empty())
        throw HarnessError("scenario needs a grid spec or a network file");
    if (grid && network_path.size())
        throw HarnessError("scenario has both a grid spec and a network file");
    if (horizon_s <= 0.0 || tick_s <= 0.0 || control_step_s <= 0.0)
        throw HarnessError("horizon, tick, and control step must be positive");
    if (repetitions < 1) throw HarnessError("repetitions must be >= 1");
    if (emv && emv->dispatch_s >= horizon_s)
        throw HarnessError("EMV dispatch must precede the horizon");
    for (const dyn::FlowConfig& f : flows)
        if (f.origins.empty() || f.destinations.empty())
            throw HarnessError("flows need origins and destinations");
}

net::TrafficNetwork Scenario::build_network() const {
    validate();
    if (grid)
        return net::generate_grid(grid->rows, grid->cols, grid->link_length_m, grid->lanes,
                                  grid->ec_ratio);
    return net::load_network(network_path);
}

namespace {

dyn::FlowConfig parse_flow(const json& j) {
    dyn::FlowConfig f;
    f.origins = j.at("origins").get<std::vector<int>>();
    f.destinations = j.at("destinations").get<std::vector<int>>();
    f.rate_veh_per_lane_hr = j.at("rate_veh_per_lane_hr");
    f.start_s = j.at("start_s");
    f.end_s = j.at("end_s");
    return f;
}

json flow_to_json(const dyn::FlowConfig& f) {
    return {{"origins", f.origins},
            {"destinations", f.destinations},
            {"rate_veh_per_lane_hr", f.rate_veh_per_lane_hr},
            {"start_s", f.start_s},
            {"end_s", f.end_s}};
}

Scenario scenario_from_json(const json& j) {
    Scenario s;
    s.name = j.value("name", "scenario");
    if (j.contains("grid")) {
        const json& g = j["grid"];
        GridSpec spec;
        spec.rows = g.value("rows", 5);
        spec.cols = g.value("cols", 5);
        spec.link_length_m = g.value("link_length_m", 300.0);
        spec.lanes = g.value("lanes", 2);
        spec.ec_ratio = g.value("ec_ratio", 0.0);
        s.grid = spec;
    }
    s.network_path = j.value("network", "");
    for (const json& f : j.value("flows", json::array())) s.flows.push_back(parse_flow(f));
    if (j.contains("emv")) {
        const json& e = j["emv"];
        s.emv = dyn::EmvSpec{e.at("origin"), e.at("destination"), e.value("dispatch_s", 0.0)};
    }
    if (j.contains("sim")) {
        const json& m = j["sim"];
        s.horizon_s = m.value("horizon_s", 1200.0);
        s.tick_s = m.value("tick_s", 1.0);
        s.control_step_s = m.value("control_step_s", 5.0);
        s.seed = m.value("seed", std::uint64_t{0});
        s.repetitions = m.value("repetitions", 1);
    }
    s.validate();
    return s;
}

} // namespace

Scenario parse_scenario(const std::string& json_text) {
    try {
        return scenario_from_json(json::parse(json_text));
    } catch (const json::exception& e) {
        throw HarnessError(std::string("bad scenario JSON: ") + e.what());
    }
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw HarnessError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

std::string serialize_scenario(const Scenario& s) {
    s.validate();
    json j;
    j["name"] = s.name;
    if (s.grid)
        j["grid"] = {{"rows", s.grid->rows},
                     {"cols", s.grid->cols},
                     {"link_length_m", s.grid->link_length_m},
                     {"lanes", s.grid->lanes},
                     {"ec_ratio", s.grid->ec_ratio}};
    else
        j["network"] = s.network_path;
    j["flows"] = json::array();
    for (const dyn::FlowConfig& f : s.flows) j["flows"].push_back(flow_to_json(f));
    if (s.emv)
        j["emv"] = {{"origin", s.emv->origin},
                    {"destination", s.emv->destination},
                    {"dispatch_s", s.emv->dispatch_s}};
    j["sim"] = {{"horizon_s", s.horizon_s},
                {"tick_s", s.tick_s},
                {"control_step_s", s.control_step_s},
                {"seed", s.seed},
                {"repetitions", s.repetitions}};
    return j.dump(2) + "\n";
}

Scenario config_grid5x5(int config_id, std::uint64_t seed) {
    if (config_id < 1 || config_id > 4)
        throw HarnessError("config id must be in 1..4");
    const int rows = 5, cols = 5;
    // row index grows northward: north edge is the top row
    std::vector<int> north, south, east, west;
    for (int c = 0; c < cols; ++c) {
        north.push_back((rows - 1) * cols + c);
        south.push_back(c);
    }
    for (int r = 0; r < rows; ++r) {
        west.push_back(r * cols);
        east.push_back(r * cols + cols - 1);
    }

    double non_peak = (config_id == 1 || config_id == 3) ? 200.0 : 160.0;
    double peak = (config_id == 1 || config_id == 3) ? 240.0 : 320.0;

    std::vector<int> origins, destinations;
    if (config_id <= 2) {
        origins = south;
        origins.insert(origins.end(), north.begin(), north.end());
        destinations = west;
        destinations.insert(destinations.end(), east.begin(), east.end());
    } else {
        // random boundary OD: seeded shuffle, half origins / half destinations
        std::vector<int> boundary;
        for (int id = 0; id < rows * cols; ++id) {
            int r = id / cols, c = id % cols;
            if (r == 0 || r == rows - 1 || c == 0 || c == cols - 1) boundary.push_back(id);
        }
        Rng rng(derive_seed(seed, 0x6f64ULL + static_cast<std::uint64_t>(config_id)));
        for (size_t i = boundary.size(); i > 1; --i)
            std::swap(boundary[i - 1], boundary[rng.next_below(i)]);
        size_t half = boundary.size() / 2;
        origins.assign(boundary.begin(), boundary.begin() + half);
        destinations.assign(boundary.begin() + half, boundary.end());
        std::sort(origins.begin(), origins.end());
        std::sort(destinations.begin(), destinations.end());
    }

    Scenario s;
    s.name = "grid5x5-config" + std::to_string(config_id);
    s.grid = GridSpec{};
    s.flows = {
        {origins, destinations, non_peak, 0.0, 400.0},
        {origins, destinations, peak, 400.0, 800.0},
        {origins, destinations, non_peak, 800.0, 1200.0},
    };
    // corner-to-corner trip dispatched mid-peak
    s.emv = dyn::EmvSpec{0, rows * cols - 1, 600.0};
    s.horizon_s = 1200.0;
    s.seed = seed;
    return s;
}

// ---- benchmark matrix -------------------------------------------------------

MatrixSpec parse_matrix(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw HarnessError(std::string("bad matrix JSON: ") + e.what());
    }
    MatrixSpec m;
    for (int id : j.value("configs", std::vector<int>{}))
        m.scenarios.push_back(config_grid5x5(id, j.value("seed", std::uint64_t{0})));
    for (const json& s : j.value("scenarios", json::array()))
        m.scenarios.push_back(parse_scenario(s.dump()));
    m.controllers = j.value("controllers", std::vector<std::string>{"fixed"});
    m.routers = j.value("routers", std::vector<std::string>{"static"});
    m.repetitions = j.value("repetitions", 1);
    m.seed = j.value("seed", std::uint64_t{0});
    m.policy_path = j.value("policy", "");
    m.beta = j.value("beta", 0.5);
    if (m.scenarios.empty()) throw HarnessError("matrix needs at least one scenario");
    if (m.repetitions < 1) throw HarnessError("repetitions must be >= 1");
    return m;
}

MatrixSpec load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw HarnessError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_matrix(ss.str());
}

EpisodeSetup make_setup(const net::TrafficNetwork& net, const std::string& controller,
                        const std::string& router, std::uint64_t seed,
                        const std::string& policy_path, double beta, double horizon_s) {
    EpisodeSetup setup;
    if (router == "none") {
        setup.router = nullptr;
        setup.wants_emv = false;
    } else if (router == "static") {
        setup.router = std::make_unique<baselines::StaticAStarRouter>();
    } else if (router == "dynamic") {
        setup.router = std::make_unique<baselines::DynamicAStarRouter>();
    } else if (router == "decentralized") {
        setup.router = std::make_unique<agents::DecentralizedRouter>();
    } else {
        throw HarnessError("unknown router: " + router);
    }

    if (controller == "fixed") {
        baselines::FixedTimeSpec spec;
        spec.offset_seed = seed;
        setup.controller = std::make_unique<baselines::FixedTimeController>(spec);
    } else if (controller == "maxpressure") {
        setup.controller = std::make_unique<baselines::MaxPressureController>();
    } else if (controller == "greenwave") {
        if (!setup.router) throw HarnessError("greenwave needs a router");
        baselines::FixedTimeSpec spec;
        spec.offset_seed = seed;
        setup.controller = std::make_unique<baselines::GreenWaveController>(
            std::make_unique<baselines::FixedTimeController>(spec), setup.router.get());
    } else if (controller == "emvlight") {
        auto* dec = dynamic_cast<agents::DecentralizedRouter*>(setup.router.get());
        if (!dec) throw HarnessError("emvlight needs the decentralized router");
        if (policy_path.empty()) throw HarnessError("emvlight needs a policy file");
        setup.controller = std::make_unique<agents::MA2CController>(
            agents::PolicyBundle::load(policy_path), dec, horizon_s, beta);
    } else {
        throw HarnessError("unknown controller: " + controller);
    }
    (void)net;
    return setup;
}

double sample_std(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace {

ResultRow run_cell(const Scenario& sc, const net::TrafficNetwork& net,
                   const std::string& controller, const std::string& router,
                   const MatrixSpec& spec, std::uint64_t cell_seed) {
    ResultRow row;
    row.scenario = sc.name;
    row.controller = controller;
    row.router = router;
    std::vector<double> t_emv, t_avg;
    int failures = 0;
    for (int rep = 0; rep < spec.repetitions; ++rep) {
        std::uint64_t seed = derive_seed(cell_seed, 0x726570ULL + static_cast<std::uint64_t>(rep));
        try {
            EpisodeSetup setup = make_setup(net, controller, router, seed, spec.policy_path,
                                            spec.beta, sc.horizon_s);
            std::optional<dyn::EmvSpec> emv = setup.wants_emv ? sc.emv : std::nullopt;
            dyn::EpisodeOptions opts;
            opts.tick_s = sc.tick_s;
            opts.control_step_s = sc.control_step_s;
            dyn::EpisodeMetrics m = dyn::run_episode(net, sc.flows, emv, *setup.controller,
                                                     setup.router.get(), sc.horizon_s, seed,
                                                     opts);
            if (emv && (m.emv_failed || !m.t_emv_s)) {
                ++failures;
                continue;
            }
            if (m.t_emv_s) t_emv.push_back(*m.t_emv_s);
            t_avg.push_back(m.t_avg_s);
        } catch (const std::exception& e) {
            row.note = e.what();
            return row;
        }
    }
    row.reps = static_cast<int>(t_avg.size());
    if (!t_avg.empty()) {
        double m = 0.0;
        for (double x : t_avg) m += x;
        m /= static_cast<double>(t_avg.size());
        row.t_avg_mean_s = m;
        row.t_avg_std_s = sample_std(t_avg, m);
    }
    if (!t_emv.empty()) {
        double m = 0.0;
        for (double x : t_emv) m += x;
        m /= static_cast<double>(t_emv.size());
        row.t_emv_mean_s = m;
        row.t_emv_std_s = sample_std(t_emv, m);
    }
    if (failures > 0)
        row.note = std::to_string(failures) + "/" + std::to_string(spec.repetitions) +
                   " runs failed";
    return row;
}

int worker_count() {
    if (const char* env = std::getenv("EMVSIM_WORKERS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}

} // namespace

ResultTable run_matrix(const MatrixSpec& spec) {
    struct Cell {
        size_t si;
        std::string controller, router;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (size_t si = 0; si < spec.scenarios.size(); ++si)
        for (size_t ci = 0; ci < spec.controllers.size(); ++ci)
            for (size_t ri = 0; ri < spec.routers.size(); ++ri) {
                std::uint64_t seed = derive_seed(
                    derive_seed(derive_seed(spec.seed, 0x736365ULL + si), 0x637472ULL + ci),
                    0x727465ULL + ri);
                cells.push_back({si, spec.controllers[ci], spec.routers[ri], seed});
            }

    std::vector<net::TrafficNetwork> nets;
    nets.reserve(spec.scenarios.size());
    for (const Scenario& sc : spec.scenarios) nets.push_back(sc.build_network());

    ResultTable table;
    table.rows.resize(cells.size());
    std::atomic<size_t> next{0};
    auto work = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const Cell& c = cells[i];
            table.rows[i] = run_cell(spec.scenarios[c.si], nets[c.si], c.controller, c.router,
                                     spec, c.seed);
        }
    };
    int workers = std::min<int>(worker_count(), static_cast<int>(cells.size()));
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (std::thread& t : pool) t.join();
    }
    return table;
}

namespace {

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

} // namespace

std::string ResultTable::to_csv() const {
    std::string out =
        "scenario,controller,router,reps,t_emv_mean_s,t_emv_std_s,t_avg_mean_s,t_avg_std_s,"
        "note\n";
    for (const ResultRow& r : rows) {
        out += r.scenario + "," + r.controller + "," + r.router + "," +
               std::to_string(r.reps) + ",";
        out += r.t_emv_mean_s ? fmt(*r.t_emv_mean_s) : "";
        out += ",";
        out += r.t_emv_std_s ? fmt(*r.t_emv_std_s) : "";
        out += "," + fmt(r.t_avg_mean_s) + "," + fmt(r.t_avg_std_s) + "," + r.note + "\n";
    }
    return out;
}

std::string ResultTable::to_text() const {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-22s %-12s %-14s %-20s %-20s %s\n", "scenario",
                  "controller", "router", "T_EMV (s)", "T_avg (s)", "note");
    out << line;
    out << std::string(100, '-') << "\n";
    for (const ResultRow& r : rows) {
        std::string emv = "N/A";
        if (r.t_emv_mean_s)
            emv = fmt(*r.t_emv_mean_s) + " +- " + fmt(r.t_emv_std_s.value_or(0.0));
        std::string avg = r.reps > 0 ? fmt(r.t_avg_mean_s) + " +- " + fmt(r.t_avg_std_s) : "N/A";
        std::snprintf(line, sizeof(line), "%-22s %-12s %-14s %-20s %-20s %s\n",
                      r.scenario.c_str(), r.controller.c_str(), r.router.c_str(), emv.c_str(),
                      avg.c_str(), r.note.c_str());
        out << line;
    }
    return out.str();
}

// ---- plotting ---------------------------------------------------------------

std::string render_learning_plot(const std::vector<Curve>& curves, int width, int height) {
    if (curves.empty()) throw HarnessError("plot needs at least one curve");
    size_t max_n = 0;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Curve& c : curves) {
        if (c.values.empty()) throw HarnessError("curve '" + c.name + "' is empty");
        max_n = std::max(max_n, c.values.size());
        for (double v : c.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (hi - lo < 1e-12) { // flat data still needs a finite y range
        hi += 1.0;
        lo -= 1.0;
    }
    const int ml = 50, mr = 10, mt = 10, mb = 35;
    double pw = width - ml - mr, ph = height - mt - mb;
    auto px = [&](size_t i) {
        double f = max_n > 1 ? static_cast<double>(i) / static_cast<double>(max_n - 1) : 0.0;
        return ml + f * pw;
    };
    auto py = [&](double v) { return mt + (hi - v) / (hi - lo) * ph; };
    auto num = [](double v) {
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return std::string(buf);
    };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b"};
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    // axes
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << mt + static_cast<int>(ph) << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << mt + static_cast<int>(ph) << "\" x2=\""
        << ml + static_cast<int>(pw) << "\" y2=\"" << mt + static_cast<int>(ph)
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4
        << "\" font-size=\"10\" text-anchor=\"end\">" << num(hi) << "</text>\n";
    svg << "<text x=\"" << ml - 6 << "\" y=\"" << mt + static_cast<int>(ph) + 4
        << "\" font-size=\"10\" text-anchor=\"end\">" << num(lo) << "</text>\n";
    svg << "<text x=\"" << ml << "\" y=\"" << height - 12 << "\" font-size=\"10\">0</text>\n";
    svg << "<text x=\"" << ml + static_cast<int>(pw) << "\" y=\"" << height - 12
        << "\" font-size=\"10\" text-anchor=\"end\">" << (max_n - 1) << "</text>\n";
    svg << "<text x=\"" << ml + static_cast<int>(pw / 2) << "\" y=\"" << height - 12
        << "\" font-size=\"10\" text-anchor=\"middle\">episode</text>\n";
    // curves
    for (size_t c = 0; c < curves.size(); ++c) {
        const char* color = palette[c % 6];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < curves[c].values.size(); ++i) {
            if (i) svg << " ";
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f", px(i), py(curves[c].values[i]));
            svg << buf;
        }
        svg << "\"/>\n";
        // legend entry
        int ly = mt + 14 + static_cast<int>(c) * 16;
        svg << "<line x1=\"" << ml + static_cast<int>(pw) - 110 << "\" y1=\"" << ly
            << "\" x2=\"" << ml + static_cast<int>(pw) - 90 << "\" y2=\"" << ly
            << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
        svg << "<text x=\"" << ml + static_cast<int>(pw) - 84 << "\" y=\"" << ly + 4
            << "\" font-size=\"11\">" << curves[c].name << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

void emit_learning_plot(const std::vector<Curve>& curves, const std::string& path) {
    std::string svg = render_learning_plot(curves);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw HarnessError("cannot write " + path);
    out << svg;
}

std::vector<Curve> curves_from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw HarnessError("cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw HarnessError(path + " is empty");
    std::vector<std::string> headers;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) headers.push_back(cell);
    }
    if (headers.size() < 2) throw HarnessError(path + " has no value columns");
    std::vector<Curve> curves(headers.size() - 1);
    for (size_t i = 1; i < headers.size(); ++i) curves[i - 1].name = headers[i];
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        size_t col = 0;
        while (std::getline(ss, cell, ',')) {
            if (col > 0 && col - 1 < curves.size() && !cell.empty())
                curves[col - 1].values.push_back(std::stod(cell));
            ++col;
        }
    }
    // drop columns that never held a number (e.g. an all-empty t_emv column)
    curves.erase(std::remove_if(curves.begin(), curves.end(),
                                [](const Curve& c) { return c.values.empty(); }),
                 curves.end());
    if (curves.empty()) throw HarnessError(path + " has no plottable columns");
    return curves;
}

} // namespace emv::harness
