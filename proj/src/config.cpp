#include "lsor/config.hpp"

#include <fstream>
#include <set>

#include "lsor/builtin.hpp"

namespace lsor {

using nlohmann::json;

namespace {

Vec vec_of(const json& j) {
    if (j.is_number()) return Vec::Constant(1, j.get<double>());
    if (!j.is_array()) throw ConfigError("expected a number array");
    Vec v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v(int(i)) = j[i].get<double>();
    return v;
}

double num_or(const json& j, const char* key, double dflt) {
    if (!j.contains(key) || j[key].is_null()) return dflt;
    return j[key].get<double>();
}

SolverConfig solver_from(const json& j, SolverConfig s = {}) {
    if (j.is_null()) return s;
    if (j.contains("method")) s.method = parse_method(j["method"].get<std::string>());
    s.rtol = num_or(j, "rtol", s.rtol);
    s.atol = num_or(j, "atol", s.atol);
    s.h0 = num_or(j, "h0", s.h0);
    s.hmin = num_or(j, "hmin", s.hmin);
    s.hmax = num_or(j, "hmax", s.hmax);
    if (j.contains("max_steps")) s.max_steps = j["max_steps"].get<long>();
    return s;
}

AssessConfig assess_from(const json& j) {
    AssessConfig a;
    if (j.is_null()) return a;
    a.box.mu = num_or(j, "mu", a.box.mu);
    if (j.contains("samples")) a.box.samples = j["samples"].get<int>();
    if (j.contains("scheme")) a.box.scheme = parse_scheme(j["scheme"].get<std::string>());
    if (j.contains("seed")) a.box.seed = j["seed"].get<std::uint64_t>();
    a.xi = num_or(j, "xi", a.xi);
    a.margin = num_or(j, "margin", a.margin);
    a.T = num_or(j, "T", a.T);
    a.k = num_or(j, "k", a.k);
    if (j.contains("growth_samples")) a.growth_samples = j["growth_samples"].get<int>();
    a.blm_solver = solver_from(j.value("blm_solver", json()), a.blm_solver);
    return a;
}

void apply(const Overrides& o, CaseSetup& c) {
    for (SolverConfig* s : {&c.solver, &c.lsor.assess.blm_solver}) {
        if (o.rtol) s->rtol = *o.rtol;
        if (o.atol) s->atol = *o.atol;
    }
    if (o.solver) c.solver.method = parse_method(*o.solver);
    if (o.seed) c.lsor.assess.box.seed = *o.seed;
    if (o.grid) c.grid = c.lsor.grid = *o.grid;
    if (o.repeats) c.repeats = *o.repeats;
}

void harness_from(const json& j, CaseSetup& c) {
    if (j.is_null()) return;
    if (j.contains("grid")) c.grid = j["grid"].get<int>();
    if (j.contains("repeats")) c.repeats = j["repeats"].get<int>();
    c.bench_start = num_or(j, "bench_start", c.bench_start);
    c.bench_horizon = num_or(j, "bench_horizon", c.bench_horizon);
    c.slow_tol = num_or(j, "slow_tol", c.slow_tol);
    c.fast_tol = num_or(j, "fast_tol", c.fast_tol);
    c.lsor.gap_ratio = num_or(j, "gap_ratio", c.lsor.gap_ratio);
    if (j.contains("assess")) c.assess = j["assess"].get<bool>();
}

CaseSetup builtin_case(const json& j) {
    CaseSetup c;
    c.kind = "builtin";
    const std::string name = j.at("system").get<std::string>();
    const double eps = num_or(j, "eps", 0.1);
    c.id = j.value("id", name);
    c.make = [name, eps](double gap) {
        PartitionedSystem ps = trivially_partitioned(builtin::by_name(name, eps));
        ps.gap_ratio = gap;
        return ps;
    };
    const SingularSystem sys = builtin::by_name(name, eps);
    const Vec x0 = j.contains("x0") ? vec_of(j["x0"]) : Vec(Vec::Zero(sys.n));
    const Vec z0 = j.contains("z0") ? vec_of(j["z0"]) : Vec(Vec::Zero(sys.m));
    if (x0.size() != sys.n || z0.size() != sys.m) throw ConfigError("x0/z0 size mismatch");
    c.s0.resize(sys.n + sys.m);
    c.s0 << x0, z0;
    if (j.contains("inputs")) {
        for (const auto& seg : j["inputs"]) c.u.add(seg.at("t").get<double>(), vec_of(seg.at("value")));
    } else {
        const Vec u = j.contains("u") ? vec_of(j["u"]) : Vec(Vec::Zero(sys.p));
        c.u = InputSignal(u);
    }
    if (c.u.dim() != sys.p) throw ConfigError("input size mismatch");
    c.horizon = num_or(j, "horizon", 5.0);
    c.solver = solver_from(j.value("solver", json()));
    c.lsor.assess = assess_from(j.value("assessment", json()));
    if (j.contains("operating_point")) {
        const json& op = j["operating_point"];
        Vec x = op.contains("x") ? vec_of(op["x"]) : Vec(Vec::Zero(sys.n));
        Vec z = op.contains("z") ? vec_of(op["z"]) : Vec(Vec::Zero(sys.m));
        c.lsor.s_op.resize(sys.n + sys.m);
        c.lsor.s_op << x, z;
        c.lsor.u_op = op.contains("u") ? vec_of(op["u"]) : Vec(Vec::Zero(sys.p));
    }
    if (j.contains("eps_list"))
        c.lsor.eps_list = j["eps_list"].get<std::vector<double>>();
    harness_from(j.value("harness", json()), c);
    c.lsor.s0 = c.s0;
    c.lsor.u = c.u;
    c.lsor.horizon = c.horizon;
    c.lsor.grid = c.grid;
    SolverConfig ref = c.solver;
    ref.method = Method::ImplicitStiff;
    ref.rtol = num_or(j.value("harness", json::object()), "reference_rtol", 1e-10);
    ref.atol = ref.rtol * 1e-2;
    c.lsor.study_solver = ref;
    return c;
}

Mode mode_of(const std::string& s) {
    if (s == "grid_tied" || s == "grid-tied") return Mode::GridTied;
    if (s == "islanded") return Mode::Islanded;
    throw ConfigError("mode must be grid_tied or islanded");
}

int bus_index(const json& j, int buses) {
    const int b = j.get<int>();
    if (b < 1 || b > buses) throw ConfigError("bus numbers are 1-based and within the network");
    return b - 1;
}

} // namespace

json read_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config '" + path + "'");
    try {
        return json::parse(is, nullptr, true, true);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

DerParams der_params_from_json(const json& j, DerParams p) {
    if (j.is_null()) return p;
    static const std::set<std::string> known = {
        "omega_c", "omega_cPLL", "K_P_PLL", "K_I_PLL", "K_P_P", "K_I_P", "K_P_V", "K_I_V",
        "K_P_C", "K_I_C", "m", "n", "omega_n", "V_oq_n", "R_f", "L_f", "C_f", "R_d", "R_c", "L_c"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("unknown DER parameter '" + it.key() + "'");
    auto rd = [&](const char* k, double& v) { v = num_or(j, k, v); };
    rd("omega_c", p.omega_c);
    rd("omega_cPLL", p.omega_cPLL);
    rd("K_P_PLL", p.K_P_PLL);
    rd("K_I_PLL", p.K_I_PLL);
    rd("K_P_P", p.K_P_P);
    rd("K_I_P", p.K_I_P);
    rd("K_P_V", p.K_P_V);
    rd("K_I_V", p.K_I_V);
    rd("K_P_C", p.K_P_C);
    rd("K_I_C", p.K_I_C);
    rd("m", p.m);
    rd("n", p.n);
    rd("omega_n", p.omega_n);
    rd("V_oq_n", p.V_oq_n);
    rd("R_f", p.R_f);
    rd("L_f", p.L_f);
    rd("C_f", p.C_f);
    rd("R_d", p.R_d);
    rd("R_c", p.R_c);
    rd("L_c", p.L_c);
    p.validate();
    return p;
}

std::shared_ptr<MicrogridModel> microgrid_from_json(const json& j) {
    const Mode mode = mode_of(j.value("mode", std::string("grid_tied")));
    const std::string conv_s = j.value("dq_convention", std::string("q_aligned"));
    if (conv_s != "q_aligned" && conv_s != "conventional")
        throw ConfigError("dq_convention must be q_aligned or conventional");
    const DqConvention conv = conv_s == "q_aligned" ? DqConvention::QAligned : DqConvention::Conventional;
    const DerParams base = der_params_from_json(j.value("params", json()));

    const json& nj = j.at("network");
    NetworkModel net;
    net.buses = nj.at("buses").get<int>();
    if (net.buses < 1) throw ConfigError("network needs at least one bus");
    for (const auto& l : nj.value("lines", json::array())) {
        Line ln;
        ln.from = bus_index(l.at("from"), net.buses);
        ln.to = bus_index(l.at("to"), net.buses);
        ln.R = l.at("R").get<double>();
        ln.X = l.at("X").get<double>();
        net.lines.push_back(ln);
    }
    net.load_G = Vec::Zero(net.buses);
    net.load_B = Vec::Zero(net.buses);
    for (const auto& ld : nj.value("loads", json::array())) {
        const int b = bus_index(ld.at("bus"), net.buses);
        if (ld.contains("R")) {
            const double R = ld["R"].get<double>();
            if (!(R > 0)) throw ConfigError("load resistance must be positive");
            net.load_G(b) += 1.0 / R;
        }
        net.load_G(b) += num_or(ld, "G", 0.0);
        net.load_B(b) += num_or(ld, "B", 0.0);
    }
    if (nj.contains("pcc_bus") && !nj["pcc_bus"].is_null()) net.pcc_bus = bus_index(nj["pcc_bus"], net.buses);
    if (nj.contains("v_pcc")) {
        const Vec v = vec_of(nj["v_pcc"]);
        if (v.size() != 2) throw ConfigError("v_pcc is a (d, q) pair");
        net.v_pcc = v;
    }
    net.omega_grid = num_or(nj, "omega_grid", net.omega_grid);

    std::vector<DerParams> params;
    for (const auto& d : j.at("ders")) {
        net.der_bus.push_back(bus_index(d.at("bus"), net.buses));
        params.push_back(der_params_from_json(d.value("params", json()), base));
    }

    const json& sj = j.at("scenario");
    Scenario scn;
    scn.mode = mode;
    scn.horizon = sj.at("horizon").get<double>();
    auto der_of = [&](const json& e) {
        if (!e.contains("der") || e["der"].is_null()) return -1;
        const int d = e["der"].get<int>();
        if (d < 1 || d > int(params.size())) throw ConfigError("DER numbers are 1-based");
        return d - 1;
    };
    for (const auto& c : sj.value("commands", json::array()))
        scn.commands.push_back({c.at("t").get<double>(), der_of(c), c.at("P").get<double>(),
                                c.at("Q").get<double>()});
    for (const auto& c : sj.value("setpoints", json::array())) {
        const int d = der_of(c);
        const DerParams& p = params[d < 0 ? 0 : size_t(d)];
        scn.setpoints.push_back({c.at("t").get<double>(), d, num_or(c, "omega", p.omega_n),
                                 num_or(c, "V", p.V_oq_n)});
    }
    for (const auto& l : sj.value("load_events", json::array())) {
        LoadEvent ev;
        ev.t = l.at("t").get<double>();
        ev.bus = bus_index(l.at("bus"), net.buses);
        if (l.contains("dG")) {
            ev.dG = l["dG"].get<double>();
        } else {
            const double R = l.at("R").get<double>();
            if (!(R > 0)) throw ConfigError("load resistance must be positive");
            ev.dG = (l.value("connect", true) ? 1.0 : -1.0) / R;
        }
        scn.loads.push_back(ev);
    }
    return std::make_shared<MicrogridModel>(params, net, scn, conv);
}

namespace {

CaseSetup microgrid_case(const json& j) {
    CaseSetup c;
    c.kind = "microgrid";
    auto model = microgrid_from_json(j);
    c.model = model;
    c.id = j.value("id", std::string(mode_name(model->mode())));
    c.make = [model](double gap) { return from_assembled(assemble_system(model, gap), gap); };
    c.u = model->input_signal();
    c.horizon = model->scenario().horizon;
    c.solver = solver_from(j.value("solver", json()));
    c.lsor.assess = assess_from(j.value("assessment", json()));
    harness_from(j.value("harness", json()), c);

    // start from the pre-disturbance steady state
    const Vec u0 = c.u.at(0.0);
    c.s0 = model->equilibrium(u0);
    c.lsor.s_op = c.s0;
    c.lsor.u_op = u0;
    const json aj = j.value("assessment", json::object());
    if (aj.value("scale", std::string("scenario")) == "scenario") {
        // the box radius is measured against the scenario's own excursion
        Vec ds = Vec::Zero(c.s0.size()), du = Vec::Zero(u0.size());
        Vec guess = c.s0;
        for (const Vec& uv : c.u.values()) {
            du = du.cwiseMax((uv - u0).cwiseAbs());
            if ((uv - u0).cwiseAbs().maxCoeff() == 0.0) continue;
            const Vec se = model->equilibrium(uv, guess);
            ds = ds.cwiseMax((se - c.s0).cwiseAbs());
        }
        c.lsor.s_scale = ds.cwiseMax(1e-2 * (Vec::Ones(ds.size()) + c.s0.cwiseAbs()));
        c.lsor.u_scale = du.cwiseMax(1e-2 * (Vec::Ones(du.size()) + u0.cwiseAbs()));
    }
    c.lsor.s0 = c.s0;
    c.lsor.u = c.u;
    c.lsor.horizon = c.horizon;
    c.lsor.grid = c.grid;
    return c;
}

} // namespace

CaseSetup case_from_json(const json& j, const Overrides& o) {
    const std::string kind = j.value("kind", std::string("builtin"));
    CaseSetup c;
    if (kind == "builtin") c = builtin_case(j);
    else if (kind == "microgrid") c = microgrid_case(j);
    else throw ConfigError("kind must be builtin or microgrid");
    apply(o, c);
    return c;
}

CaseSetup load_case(const std::string& path, const Overrides& o) {
    return case_from_json(read_json(path), o);
}

} // namespace lsor
