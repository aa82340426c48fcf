#include "lsor/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace lsor {

const std::vector<std::string> kVariants = {"full", "rom", "rom-blm", "smallsig"};

Vec PartitionedSystem::join(const Vec& x, const Vec& z) const {
    Vec s(order());
    for (size_t k = 0; k < slow.size(); ++k) s(slow[k]) = x(k);
    for (size_t k = 0; k < fast.size(); ++k) s(fast[k]) = z(k);
    return s;
}

Vec PartitionedSystem::slow_of(const Vec& s) const {
    Vec x(slow.size());
    for (size_t k = 0; k < slow.size(); ++k) x(k) = s(slow[k]);
    return x;
}

Vec PartitionedSystem::fast_of(const Vec& s) const {
    Vec z(fast.size());
    for (size_t k = 0; k < fast.size(); ++k) z(k) = s(fast[k]);
    return z;
}

PartitionedSystem trivially_partitioned(SingularSystem sys) {
    PartitionedSystem ps;
    for (int i = 0; i < sys.n; ++i) ps.slow.push_back(i);
    for (int i = 0; i < sys.m; ++i) ps.fast.push_back(sys.n + i);
    ps.labels = sys.labels();
    ps.sys = std::move(sys);
    return ps;
}

PartitionedSystem from_assembled(const AssembledSystem& as, double gap_ratio) {
    PartitionedSystem ps;
    ps.sys = as.sys;
    ps.slow = as.part.slow;
    ps.fast = as.part.fast;
    ps.labels = as.model->labels();
    ps.gap_ratio = gap_ratio;
    return ps;
}

SingularSystem with_eps_bar(const SingularSystem& sys, double eps) {
    if (!(eps > 0.0)) throw ConfigError("eps must be positive");
    SingularSystem s = sys;
    s.eps = sys.eps * (eps / sys.eps_bar());
    return s;
}

Assumption failed_assumption(const AssessmentReport& rep) {
    for (Assumption a : {Assumption::Growth, Assumption::RomStability, Assumption::BlmStability})
        if (rep.failed == assumption_name(a)) return a;
    return Assumption::EpsilonBound;
}

// ---------------------------------------------------------------------------

namespace {

Vec or_zero(const Vec& v, int n) { return v.size() ? v : Vec(Vec::Zero(n)); }

std::vector<double> breakpoints_in(const InputSignal& u, double t0, double t1) {
    std::vector<double> out;
    for (double b : u.breakpoints())
        if (b > t0 && b < t1) out.push_back(b);
    return out;
}

Vec interp_row(const Trajectory& tr, double t) {
    const auto& ts = tr.times;
    if (t <= ts.front()) return tr.row(0);
    if (t >= ts.back()) return tr.back();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const int k = int(it - ts.begin());
    const double a = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
    return (1.0 - a) * tr.row(k - 1) + a * tr.row(k);
}

void add_stats(SolverStats& a, const SolverStats& b) {
    a.accepted += b.accepted;
    a.rejected += b.rejected;
    a.rhs_evals += b.rhs_evals;
    a.jac_evals += b.jac_evals;
    a.jac_rhs_evals += b.jac_rhs_evals;
    a.factorizations += b.factorizations;
    a.newton_iters += b.newton_iters;
    a.newton_failures += b.newton_failures;
    a.wall_s += b.wall_s;
}

LsorResult attempt(const PartitionedSystem& ps, const LsorOptions& opt) {
    LsorResult r;
    r.ps = ps;
    const SingularSystem& sys = ps.sys;
    const int N = ps.order();
    const Vec s_op = or_zero(opt.s_op, N);
    r.op.x = ps.slow_of(s_op);
    r.op.z = ps.fast_of(s_op);
    r.op.u = or_zero(opt.u_op, sys.p);
    if (opt.s_scale.size()) {
        r.op.x_scale = ps.slow_of(opt.s_scale);
        r.op.z_scale = ps.fast_of(opt.s_scale);
    }
    r.op.u_scale = opt.u_scale;

    const SingularSystem sh = shifted_system(sys, r.op);
    AssessConfig cfg = opt.assess;
    const bool study = !opt.eps_list.empty();
    cfg.with_bounds = !study;
    r.report = assess(sh, cfg);
    r.report.system = sys.name;
    r.qss = std::make_shared<QssMap>(sys);
    r.qss->seed(r.op.z);
    if (!study || !r.report.workspace) return r;

    // error study in the original coordinates
    if (opt.s0.size() != N) throw ConfigError("error study needs an initial state");
    const Vec x0 = ps.slow_of(opt.s0), z0 = ps.fast_of(opt.s0);
    r.qss->seed(z0);
    const StudyRuns runs = error_study_runs(sys, *r.qss, x0, z0, opt.u, opt.horizon, opt.eps_list,
                                            opt.grid, opt.study_solver);
    auto& ws = *r.report.workspace;
    if (std::isnan(cfg.k)) {
        const auto paths = fast_residual_paths(runs.full, runs.rom, *r.qss, opt.u);
        ws.k = fit_tail_k(paths, runs.grid, opt.eps_list, ws.beta_y, ws.mu);
    }
    compute_bounds(r.report, cfg);
    if (std::isnan(cfg.k) && r.report.bounds)
        r.report.bounds->notes.push_back("k fitted from the error-study tails");
    std::vector<double> Ts;
    for (double e : opt.eps_list) {
        double T = NAN;
        try {
            if (!std::isnan(ws.k)) T = epsilon_double_star(ws.beta_y, ws.k, ws.mu, EpsMode::FixEpsSolveT, e).second;
        } catch (const Error&) {
        }
        Ts.push_back(T);
    }
    r.report.errors = verify_error_bounds(runs.full, runs.rom, runs.blm, *r.qss, opt.u,
                                          opt.eps_list, Ts);
    r.report.errors->T = r.report.bounds ? r.report.bounds->T : NAN;
    return r;
}

} // namespace

LsorResult run_lsor(const SystemFactory& make, const LsorOptions& opt) {
    double gap = opt.gap_ratio;
    LsorResult first = attempt(make(gap), opt);
    first.report.attempts = 1;
    if (first.report.verdict == "accepted") return first;

    const std::string why1 = first.report.failed;
    gap *= opt.retry_factor;
    LsorResult second;
    try {
        second = attempt(make(gap), opt);
    } catch (const NoTimeScaleSeparation& e) {
        if (opt.throw_on_reject) throw;
        first.report.attempts = 2;
        first.report.notes.push_back(std::string("re-partition failed: ") + e.what());
        return first;
    }
    second.report.attempts = 2;
    std::ostringstream os;
    os << "first attempt rejected (" << why1 << "); re-partitioned with gap ratio " << gap;
    second.report.notes.insert(second.report.notes.begin(), os.str());
    if (second.report.verdict != "accepted" && opt.throw_on_reject) {
        std::string why = second.report.notes.empty() ? "" : second.report.notes.back();
        throw AssessmentFailed(failed_assumption(second.report), why);
    }
    return second;
}

// ---------------------------------------------------------------------------

Trajectory simulate_rom(QssMap& qss, const Vec& x0, const InputSignal& u, double t0, double t1,
                        const SolverConfig& cfg, const std::vector<double>& grid) {
    const SingularSystem& sys = qss.system();
    ReducedModel rom(std::shared_ptr<QssMap>(&qss, [](QssMap*) {}));
    Rhs rhs = [&](double t, const Vec& x, Vec& dx) { dx = rom.rhs(x, u.at(t)); };
    JacFn jac = nullptr;
    if (cfg.method == Method::ImplicitStiff)
        jac = [&](double t, const Vec& x) { return rom_jacobians(qss, x, u.at(t)).first; };
    EventSchedule ev;
    ev.breakpoints = u.breakpoints();
    Trajectory tr = integrate(rhs, x0, t0, t1, cfg, ev, grid, jac);
    tr.labels = sys.slow_labels;
    return tr;
}

Trajectory simulate_blm(QssMap& qss, const Trajectory& rom, const Vec& z0, const InputSignal& u,
                        const Vec& eps, const SolverConfig& cfg) {
    const SingularSystem& sys = qss.system();
    const int m = sys.m;
    const Vec D = eps.cwiseInverse();
    const Vec& e0 = qss.zero_eps();
    const double t0 = rom.times.front(), t1 = rom.times.back();
    std::vector<double> starts{t0};
    for (double b : breakpoints_in(u, t0, t1)) starts.push_back(b);

    Trajectory out;
    out.times = rom.times;
    out.states = Mat::Zero(rom.size(), m);
    out.labels = sys.fast_labels;

    Vec h_guess = z0;
    Vec y = z0 - qss.solve(rom.row(0), u.at(t0), z0);
    size_t k = 0;
    for (size_t s = 0; s < starts.size(); ++s) {
        const double tb = starts[s];
        const double te = s + 1 < starts.size() ? starts[s + 1] : t1;
        const Vec xb = interp_row(rom, tb), ub = u.at(tb);
        if (s > 0) {
            // keep the reconstructed z continuous across the input step
            const Vec h_old = qss.solve(xb, u.at(starts[s - 1]), h_guess);
            const Vec z_minus = h_old + y;
            h_guess = qss.solve(xb, ub, h_old);
            y = z_minus - h_guess;
        } else {
            h_guess = qss.solve(xb, ub, h_guess);
        }
        const Vec hb = h_guess;
        std::vector<double> te_eval;
        const size_t k0 = k;
        while (k < out.times.size() && (out.times[k] < te || (s + 1 == starts.size() && out.times[k] <= te)))
            te_eval.push_back(out.times[k++]);
        if (te_eval.empty() || te_eval.back() < te) te_eval.push_back(te);
        Rhs rhs = [&](double, const Vec& yy, Vec& dy) {
            dy = D.cwiseProduct(eval_g(sys, xb, yy + hb, ub, e0));
        };
        JacFn jac = nullptr;
        if (cfg.method == Method::ImplicitStiff) {
            jac = [&qss, &D, &xb, &hb, &ub](double, const Vec& yy) {
                return Mat(D.asDiagonal() * qss.dg_dz(xb, yy + hb, ub));
            };
        }
        const Trajectory seg = te > tb ? integrate(rhs, y, tb, te, cfg, {}, te_eval, jac) : Trajectory{};
        for (size_t j = k0; j < k; ++j) out.states.row(int(j)) = seg.states.row(int(j - k0));
        if (seg.size() > 0) {
            y = seg.back();
            add_stats(out.stats, seg.stats);
        }
    }
    return out;
}

StudyRuns error_study_runs(const SingularSystem& sys, QssMap& qss, const Vec& x0, const Vec& z0,
                           const InputSignal& u, double horizon,
                           const std::vector<double>& eps_list, int grid,
                           const SolverConfig& cfg) {
    StudyRuns r;
    r.grid = uniform_grid(0.0, horizon, grid);
    qss.seed(z0);
    r.rom = simulate_rom(qss, x0, u, 0.0, horizon, cfg, r.grid);
    for (double e : eps_list) {
        const SingularSystem se = with_eps_bar(sys, e);
        r.full.push_back(integrate_coupled(se, x0, z0, u, 0.0, horizon, cfg, {}, r.grid));
        r.blm.push_back(simulate_blm(qss, r.rom, z0, u, se.eps, cfg));
    }
    return r;
}

// ---------------------------------------------------------------------------

namespace {

Mat to_natural(const PartitionedSystem& ps, const Mat& xs, const Mat& zs) {
    Mat out(xs.rows(), ps.order());
    for (size_t k = 0; k < ps.slow.size(); ++k) out.col(ps.slow[k]) = xs.col(int(k));
    for (size_t k = 0; k < ps.fast.size(); ++k) out.col(ps.fast[k]) = zs.col(int(k));
    return out;
}

} // namespace

VariantSeries simulate_variant(const CaseSetup& c, const PartitionedSystem& ps,
                               const std::string& variant, const SolverConfig& cfg,
                               const std::vector<double>& grid) {
    const SingularSystem& sys = ps.sys;
    const Vec x0 = ps.slow_of(c.s0), z0 = ps.fast_of(c.s0);
    const double t0 = grid.front(), t1 = grid.back();
    VariantSeries vs;
    if (variant == "full") {
        const Trajectory tr = integrate_coupled(sys, x0, z0, c.u, t0, t1, cfg, {}, grid);
        vs.states = to_natural(ps, tr.states.leftCols(sys.n), tr.states.rightCols(sys.m));
        vs.stats = tr.stats;
        return vs;
    }
    if (variant == "rom" || variant == "rom-blm") {
        QssMap qss(sys);
        qss.seed(z0);
        const Trajectory tr = simulate_rom(qss, x0, c.u, t0, t1, cfg, grid);
        vs.stats = tr.stats;
        Mat zs(tr.size(), sys.m);
        qss.seed(z0);
        for (int k = 0; k < tr.size(); ++k) zs.row(k) = qss.solve(tr.row(k), c.u.at(tr.times[k])).transpose();
        if (variant == "rom-blm") {
            const Trajectory yh = simulate_blm(qss, tr, z0, c.u, sys.eps, cfg);
            zs += yh.states;
            add_stats(vs.stats, yh.stats);
        }
        vs.states = to_natural(ps, tr.states, zs);
        return vs;
    }
    if (variant == "smallsig") {
        const int N = ps.order();
        const Vec s_op = c.lsor.s_op.size() == N ? c.lsor.s_op : c.s0;
        const Vec u_op = c.lsor.u_op.size() == sys.p ? c.lsor.u_op : c.u.at(t0);
        const LinearRom lin = baseline_small_signal(sys, ps.slow_of(s_op), ps.fast_of(s_op), u_op);
        Rhs rhs = [&](double t, const Vec& x, Vec& dx) { dx = lin.rhs(x, c.u.at(t)); };
        JacFn jac = [&](double, const Vec&) { return lin.A; };
        EventSchedule ev;
        ev.breakpoints = c.u.breakpoints();
        const Trajectory tr = integrate(rhs, x0, t0, t1, cfg, ev, grid, jac);
        Mat zs(tr.size(), sys.m);
        for (int k = 0; k < tr.size(); ++k) zs.row(k) = lin.fast(tr.row(k), c.u.at(tr.times[k])).transpose();
        vs.states = to_natural(ps, tr.states, zs);
        vs.stats = tr.stats;
        return vs;
    }
    throw ConfigError("unknown variant '" + variant + "'");
}

std::vector<TimingRow> timing_table(const CaseSetup& c, const PartitionedSystem& ps) {
    const double ts = std::clamp(c.bench_start, 0.0, c.horizon);
    const double tb = std::isnan(c.bench_horizon) ? c.horizon : std::min(ts + c.bench_horizon, c.horizon);
    const auto grid = uniform_grid(ts, tb, 201);
    CaseSetup cb = c;
    if (ts > 0) {
        // untimed lead-in to the window start
        SolverConfig lc = c.solver;
        lc.method = Method::ImplicitStiff;
        const auto lead = simulate_variant(c, ps, "full", lc, {0.0, ts});
        cb.s0 = lead.states.row(1).transpose();
    }
    std::vector<TimingRow> rows;
    for (Method m : {Method::ExplicitRK45, Method::ImplicitStiff}) {
        SolverConfig cfg = c.solver;
        cfg.method = m;
        for (const std::string model : {"full", "rom"}) {
            std::vector<double> walls;
            VariantSeries last;
            for (int r = 0; r < std::max(1, c.repeats); ++r) {
                last = simulate_variant(cb, ps, model, cfg, grid);
                walls.push_back(last.stats.wall_s);
            }
            std::sort(walls.begin(), walls.end());
            TimingRow row;
            row.solver = method_name(m);
            row.model = model;
            row.wall_s = walls[walls.size() / 2];
            row.steps = last.stats.accepted;
            row.rhs_evals = last.stats.rhs_evals + last.stats.jac_rhs_evals;
            rows.push_back(row);
        }
    }
    return rows;
}

RunBundle run_scenario(const CaseSetup& c, bool with_timing) {
    RunBundle b;
    b.id = c.id;
    const PartitionedSystem ps = c.make(c.lsor.gap_ratio);
    b.labels = ps.labels;
    b.slow = ps.slow;
    b.fast = ps.fast;
    b.grid = uniform_grid(0.0, c.horizon, c.grid);
    std::vector<std::string> notes;
    if (c.assess) {
        LsorOptions opt = c.lsor;
        opt.throw_on_reject = false;
        try {
            b.report = run_lsor(c.make, opt).report;
        } catch (const Error& e) {
            notes.push_back(std::string("assessment aborted: ") + e.what());
        }
    }
    for (const auto& v : kVariants) {
        try {
            b.series[v] = simulate_variant(c, ps, v, c.solver, b.grid);
        } catch (const Error& e) {
            if (v == "full" || v == "rom") throw;
            notes.push_back(v + " failed: " + e.what());
        }
    }
    if (with_timing) b.timing = timing_table(c, ps);
    b.metrics = compute_metrics(b, c.u.breakpoints(), c.slow_tol, c.fast_tol);
    b.metrics["scenario"] = c.id;
    b.metrics["notes"] = notes;
    if (b.report && b.report->errors) {
        const auto& e = *b.report->errors;
        b.metrics["error_slopes"] = {{"slope_slow", e.slope_slow}, {"slope_fast", e.slope_fast},
                                     {"slope_fast_T", e.slope_fast_T}};
    }
    if (!b.timing.empty()) {
        nlohmann::json t = nlohmann::json::object();
        for (const auto& r : b.timing) t[r.solver][r.model] = r.wall_s;
        for (const char* s : {"explicit", "stiff"})
            if (t.contains(s)) t[s]["reduced_over_full"] = t[s]["rom"].get<double>() / t[s]["full"].get<double>();
        b.metrics["timing"] = t;
    }
    return b;
}

// ---------------------------------------------------------------------------

nlohmann::json compute_metrics(const RunBundle& b, const std::vector<double>& breakpoints,
                               double slow_tol, double fast_tol) {
    using nlohmann::json;
    json out;
    const auto fit = b.series.find("full");
    if (fit == b.series.end()) return out;
    const Mat& F = fit->second.states;
    const int N = int(F.cols()), K = int(F.rows());
    Vec span(N), peak(N);
    for (int j = 0; j < N; ++j) {
        span(j) = F.col(j).maxCoeff() - F.col(j).minCoeff();
        peak(j) = F.col(j).cwiseAbs().maxCoeff();
    }
    out["grid_points"] = K;
    out["tolerances"] = {{"slow_rel", slow_tol}, {"fast_rel", fast_tol}};

    // sample indices just before each breakpoint and at the end
    std::vector<int> settle;
    for (double t : breakpoints) {
        const auto it = std::lower_bound(b.grid.begin(), b.grid.end(), t);
        if (it != b.grid.begin()) settle.push_back(int(it - b.grid.begin()) - 1);
    }
    settle.push_back(K - 1);

    std::vector<double> starts{b.grid.front()};
    for (double t : breakpoints)
        if (t > b.grid.front() && t < b.grid.back()) starts.push_back(t);

    for (const auto& [name, vs] : b.series) {
        if (name == "full") continue;
        const Mat E = vs.states - F;
        json v;
        json mx = json::object(), rms = json::object();
        for (int j = 0; j < N; ++j) {
            mx[b.labels[j]] = E.col(j).cwiseAbs().maxCoeff();
            rms[b.labels[j]] = std::sqrt(E.col(j).squaredNorm() / K);
        }
        v["max_abs"] = mx;
        v["rms"] = rms;
        double worst_slow = 0.0, worst_fast = 0.0;
        json ss = json::object();
        for (int j : b.slow) {
            double w = 0.0;
            const double den = std::max({span(j), 1e-3 * peak(j), 1e-12});
            for (int k : settle) w = std::max(w, std::abs(E(k, j)) / den);
            ss[b.labels[j]] = w;
            worst_slow = std::max(worst_slow, w);
        }
        for (int j : b.fast) {
            const double den = std::max({span(j), 1e-3 * peak(j), 1e-12});
            worst_fast = std::max(worst_fast, E.col(j).cwiseAbs().maxCoeff() / den);
        }
        v["slow_steady_state_rel"] = ss;
        v["worst_slow_steady_state_rel"] = worst_slow;
        v["worst_fast_rel"] = worst_fast;
        v["slow_ok"] = worst_slow <= slow_tol;
        v["fast_ok"] = worst_fast <= fast_tol;
        if (vs.states.allFinite()) v["bounded"] = true; else v["bounded"] = false;
        out["variants"][name] = v;
    }

    // fast reconstruction error by window, h alone against h + y-hat
    if (b.series.count("rom") && b.series.count("rom-blm")) {
        const Mat& H = b.series.at("rom").states;
        const Mat& HY = b.series.at("rom-blm").states;
        json wins = json::array();
        bool ok = true;
        for (size_t s = 0; s < starts.size(); ++s) {
            const double t0 = starts[s];
            const double t1 = s + 1 < starts.size() ? starts[s + 1] : b.grid.back();
            double eh = 0.0, ehy = 0.0;
            for (int k = 0; k < K; ++k) {
                if (b.grid[k] < t0 || (b.grid[k] >= t1 && s + 1 < starts.size())) continue;
                double a = 0.0, c = 0.0;
                for (int j : b.fast) {
                    a += std::pow(H(k, j) - F(k, j), 2);
                    c += std::pow(HY(k, j) - F(k, j), 2);
                }
                eh = std::max(eh, std::sqrt(a));
                ehy = std::max(ehy, std::sqrt(c));
            }
            const bool step = s > 0;
            if (step) ok = ok && ehy <= eh;
            wins.push_back({{"t0", t0}, {"t1", t1}, {"contains_step", step},
                            {"h_only", eh}, {"h_plus_yhat", ehy}});
        }
        out["fast_windows"] = wins;
        out["reconstruction_ordering_ok"] = ok;
        out["trade_off"] = {
            {"h_only", {{"wall_s", b.series.at("rom").stats.wall_s}}},
            {"h_plus_yhat", {{"wall_s", b.series.at("rom-blm").stats.wall_s}}}};
    }
    for (const auto& [name, vs] : b.series)
        out["solver_stats"][name] = {{"accepted", vs.stats.accepted},
                                     {"rejected", vs.stats.rejected},
                                     {"rhs_evals", vs.stats.rhs_evals}};
    return out;
}

void write_trajectories_csv(const RunBundle& b, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    std::vector<std::string> present;
    for (const auto& v : kVariants)
        if (b.series.count(v)) present.push_back(v);
    os << "t";
    for (const auto& v : present)
        for (const auto& l : b.labels) os << ',' << v << '.' << l;
    os << '\n';
    char buf[32];
    for (size_t k = 0; k < b.grid.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", b.grid[k]);
        os << buf;
        for (const auto& v : present) {
            const Mat& S = b.series.at(v).states;
            for (int j = 0; j < S.cols(); ++j) {
                std::snprintf(buf, sizeof buf, "%.17g", S(int(k), j));
                os << ',' << buf;
            }
        }
        os << '\n';
    }
}

void write_timing_csv(const std::vector<TimingRow>& rows, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "solver,model,wall_s,steps,rhs_evals\n";
    char buf[32];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.9g", r.wall_s);
        os << r.solver << ',' << r.model << ',' << buf << ',' << r.steps << ',' << r.rhs_evals << '\n';
    }
}

void emit(const RunBundle& b, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_trajectories_csv(b, (fs::path(dir) / "trajectories.csv").string());
    write_timing_csv(b.timing, (fs::path(dir) / "timing.csv").string());
    {
        std::ofstream os(fs::path(dir) / "metrics.json");
        os << b.metrics.dump(2) << '\n';
    }
    std::ofstream os(fs::path(dir) / "report.json");
    if (b.report)
        os << to_json(*b.report).dump(2) << '\n';
    else
        os << nlohmann::json{{"verdict", nullptr}, {"notes", {"assessment not run"}}}.dump(2) << '\n';
}

nlohmann::json describe_reduction(const PartitionedSystem& ps) {
    const SingularSystem& s = ps.sys;
    nlohmann::json j;
    j["system"] = s.name;
    j["order"] = ps.order();
    j["rom"] = {{"dim", s.n}, {"states", s.slow_labels}, {"natural_index", ps.slow}};
    j["blm"] = {{"dim", s.m}, {"states", s.fast_labels}, {"natural_index", ps.fast},
                {"time", "tau = t/eps_bar"}};
    std::vector<double> eps(s.eps.data(), s.eps.data() + s.eps.size());
    j["eps"] = eps;
    j["eps_bar"] = s.eps_bar();
    j["inputs"] = s.input_labels;
    j["gap_ratio"] = ps.gap_ratio;
    j["reduced_percent"] = 100.0 * s.n / ps.order();
    return j;
}

} // namespace lsor
