#include "lsor/microgrid.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lsor/integrators.hpp"

namespace lsor {

namespace {

Vec2 rot(const Vec2& v, double a) {
    const double c = std::cos(a), s = std::sin(a);
    return {v(0) * c - v(1) * s, v(0) * s + v(1) * c};
}

// d-aligned (d', q') = (q, -d) of the q-aligned frame
Vec2 conv_to_q(const Vec2& v) { return {-v(1), v(0)}; }
Vec2 q_to_conv(const Vec2& v) { return {v(1), -v(0)}; }

constexpr int kPairs[4][2] = {{der::Gamma_d, der::Gamma_q},
                              {der::I_ld, der::I_lq},
                              {der::I_od, der::I_oq},
                              {der::V_od, der::V_oq}};

DerVec map_pairs(const DerVec& s, Vec2 (*fn)(const Vec2&)) {
    DerVec r = s;
    for (const auto& pr : kPairs) {
        const Vec2 v = fn(Vec2(s(pr[0]), s(pr[1])));
        r(pr[0]) = v(0);
        r(pr[1]) = v(1);
    }
    return r;
}

// current loop and filter, shared by both modes
void inner_loops(const DerVec& s, const DerParams& p, const Vec2& vb, double Ild_ref,
                 double Ilq_ref, DerVec& d) {
    using namespace der;
    d(Gamma_d) = Ild_ref - s(I_ld);
    d(Gamma_q) = Ilq_ref - s(I_lq);
    const double Vld = -p.omega_n * p.L_f * s(I_lq) + p.K_I_C * s(Gamma_d) + p.K_P_C * d(Gamma_d);
    const double Vlq = -p.omega_n * p.L_f * s(I_ld) + p.K_I_C * s(Gamma_q) + p.K_P_C * d(Gamma_q);
    const auto lc = lc_filter_rhs(p, Vec2(s(I_ld), s(I_lq)), Vec2(Vld, Vlq),
                                  Vec2(s(I_od), s(I_oq)), Vec2(s(V_od), s(V_oq)), vb);
    d.segment<6>(I_ld) = lc;
}

void outer_common(const DerVec& s, const DerParams& p, DerVec& d) {
    using namespace der;
    const double pe = 1.5 * (s(V_od) * s(I_od) + s(V_oq) * s(I_oq));
    const double qe = 1.5 * (s(V_oq) * s(I_od) - s(V_od) * s(I_oq));
    d(P) = p.omega_c * (pe - s(P));
    d(Q) = p.omega_c * (qe - s(Q));
    d(V_odf) = p.omega_cPLL * (s(V_od) - s(V_odf));
    d(Phi_PLL) = -s(V_odf);
}

DerVec grid_q(const DerVec& s, const DerParams& p, const Vec2& vb, const Vec2& cmd) {
    using namespace der;
    DerVec d;
    outer_common(s, p, d);
    d(delta) = omega_pll(s, p);
    d(Phi_1) = cmd(0) - s(P);
    d(Phi_2) = cmd(1) - s(Q);
    const double Ilq_ref = p.K_I_P * s(Phi_1) + p.K_P_P * d(Phi_1);
    const double Ild_ref = p.K_I_P * s(Phi_2) + p.K_P_P * d(Phi_2);
    inner_loops(s, p, vb, Ild_ref, Ilq_ref, d);
    return d;
}

DerVec islanded_q(const DerVec& s, const DerParams& p, const Vec2& vb, double w1,
                      double w_set, double v_set) {
    using namespace der;
    DerVec d;
    outer_common(s, p, d);
    const double w = omega_pll(s, p);
    d(delta) = w1 - w;
    const Vec2 ref = droop_references(p, s(P), s(Q), w_set, v_set);
    d(Phi_1) = w - ref(0);
    d(Phi_2) = ref(1) - s(V_oq);
    const double Ild_ref = p.K_I_V * s(Phi_1) + p.K_P_V * d(Phi_1);
    const double Ilq_ref = p.K_I_V * s(Phi_2) + p.K_P_V * d(Phi_2);
    inner_loops(s, p, vb, Ild_ref, Ilq_ref, d);
    return d;
}

std::string suffixed(const std::string& name, int i, int n) {
    return n > 1 ? name + "_" + std::to_string(i + 1) : name;
}

} // namespace

const char* mode_name(Mode m) { return m == Mode::GridTied ? "grid_tied" : "islanded"; }

void DerParams::validate() const {
    const double pos[] = {omega_c, omega_cPLL, K_I_P, K_I_V, K_I_C, omega_n, V_oq_n,
                          L_f, C_f, L_c};
    for (double v : pos)
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("DER parameter must be positive");
    const double nonneg[] = {K_P_PLL, K_I_PLL, K_P_P, K_P_V, K_P_C, m, n, R_f, R_d, R_c};
    for (double v : nonneg)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("DER parameter must be >= 0");
}

std::vector<std::string> der_state_names(Mode mode) {
    if (mode == Mode::GridTied)
        return {"P", "Q", "Phi_PLL", "delta", "Phi_P", "Phi_Q", "Gamma_d", "Gamma_q",
                "V_odf", "I_ld", "I_lq", "I_od", "I_oq", "V_od", "V_oq"};
    return {"P", "Q", "Phi_PLL", "delta", "Phi_d", "Phi_q", "Gamma_d", "Gamma_q",
            "V_odf", "I_ld", "I_lq", "I_od", "I_oq", "V_od", "V_oq"};
}

double omega_pll(const DerVec& s, const DerParams& p) {
    return p.omega_n - p.K_P_PLL * s(der::V_odf) + p.K_I_PLL * s(der::Phi_PLL);
}

Vec2 droop_references(const DerParams& p, double P, double Q, double omega_set, double V_set) {
    return {omega_set - p.m * P, V_set - p.n * Q};
}

Eigen::Matrix<double, 6, 1> lc_filter_rhs(const DerParams& p, const Vec2& Il, const Vec2& Vl,
                                          const Vec2& Io, const Vec2& Vo, const Vec2& vb) {
    const double w = p.omega_n;
    Eigen::Matrix<double, 6, 1> d;
    d(0) = (-p.R_f * Il(0) + Vl(0) - Vo(0)) / p.L_f + w * Il(1);
    d(1) = (-p.R_f * Il(1) + Vl(1) - Vo(1)) / p.L_f - w * Il(0);
    d(2) = (-p.R_c * Io(0) + Vo(0) - vb(0)) / p.L_c + w * Io(1);
    d(3) = (-p.R_c * Io(1) + Vo(1) - vb(1)) / p.L_c - w * Io(0);
    d(4) = (Il(0) - Io(0)) / p.C_f + w * Vo(1) + p.R_d * (d(0) - d(2));
    d(5) = (Il(1) - Io(1)) / p.C_f - w * Vo(0) + p.R_d * (d(1) - d(3));
    return d;
}

DerVec der_rhs_grid_tied(const DerVec& s, const DerParams& p, const Vec2& vb, const Vec2& cmd,
                         DqConvention conv) {
    if (conv == DqConvention::QAligned) return grid_q(s, p, vb, cmd);
    const DerVec d = grid_q(map_pairs(s, conv_to_q), p, conv_to_q(vb), cmd);
    return map_pairs(d, q_to_conv);
}

DerVec der_rhs_islanded(const DerVec& s, const DerParams& p, const Vec2& vb, double omega_pll1,
                        DqConvention conv, double omega_set, double V_set) {
    if (std::isnan(omega_set)) omega_set = p.omega_n;
    if (std::isnan(V_set)) V_set = p.V_oq_n;
    if (conv == DqConvention::QAligned) return islanded_q(s, p, vb, omega_pll1, omega_set, V_set);
    const DerVec d = islanded_q(map_pairs(s, conv_to_q), p, conv_to_q(vb), omega_pll1,
                                    omega_set, V_set);
    return map_pairs(d, q_to_conv);
}

DerVec der_coefficients(const DerParams& p, Mode mode) {
    using namespace der;
    DerVec c;
    c(P) = c(Q) = 1.0 / p.omega_c;
    c(Phi_PLL) = 1.0;
    c(delta) = 1.0;
    c(Phi_1) = c(Phi_2) = mode == Mode::GridTied ? p.K_P_P / p.K_I_P : p.K_P_V / p.K_I_V;
    c(Gamma_d) = c(Gamma_q) = p.K_P_C / p.K_I_C;
    c(V_odf) = 1.0 / p.omega_cPLL;
    c(I_ld) = c(I_lq) = p.L_f;
    c(I_od) = c(I_oq) = p.L_c;
    c(V_od) = c(V_oq) = p.C_f;
    return c;
}

Eigen::MatrixXcd NetworkModel::admittance(const Vec& extra_G) const {
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(buses, buses);
    for (const auto& l : lines) {
        const std::complex<double> y = 1.0 / std::complex<double>(l.R, l.X);
        Y(l.from, l.from) += y;
        Y(l.to, l.to) += y;
        Y(l.from, l.to) -= y;
        Y(l.to, l.from) -= y;
    }
    for (int b = 0; b < buses; ++b) {
        const double G = (load_G.size() ? load_G(b) : 0.0) + (extra_G.size() ? extra_G(b) : 0.0);
        const double B = load_B.size() ? load_B(b) : 0.0;
        Y(b, b) += std::complex<double>(G, B);
    }
    return Y;
}

void NetworkModel::validate(Mode mode) const {
    if (buses < 1) throw ConfigError("network needs at least one bus");
    for (const auto& l : lines) {
        if (l.from < 0 || l.to < 0 || l.from >= buses || l.to >= buses || l.from == l.to)
            throw ConfigError("line endpoints out of range");
        if (std::hypot(l.R, l.X) <= 0.0) throw ConfigError("line impedance must be nonzero");
    }
    if (load_G.size() && load_G.size() != buses) throw ConfigError("load_G size != buses");
    if (load_B.size() && load_B.size() != buses) throw ConfigError("load_B size != buses");
    if (der_bus.empty()) throw ConfigError("no DERs");
    for (int b : der_bus)
        if (b < 0 || b >= buses) throw ConfigError("DER bus out of range");
    if (mode == Mode::GridTied) {
        if (pcc_bus < 0 || pcc_bus >= buses) throw ConfigError("grid-tied mode needs a PCC bus");
    } else if (pcc_bus >= 0) {
        throw ConfigError("islanded mode has no infinite bus");
    }
    // connectivity
    std::vector<int> seen(buses, 0), stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
        const int b = stack.back();
        stack.pop_back();
        for (const auto& l : lines) {
            const int o = l.from == b ? l.to : (l.to == b ? l.from : -1);
            if (o >= 0 && !seen[o]) { seen[o] = 1; stack.push_back(o); }
        }
    }
    if (std::count(seen.begin(), seen.end(), 0)) throw SingularNetwork("network is not connected");
}

void Scenario::validate() const {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("horizon must be positive");
    auto in_range = [&](double t) { return t >= 0.0 && t < horizon; };
    for (const auto& c : commands)
        if (!in_range(c.t)) throw ConfigError("command time outside [0, horizon)");
    for (const auto& c : setpoints)
        if (!in_range(c.t)) throw ConfigError("set-point time outside [0, horizon)");
    for (const auto& l : loads)
        if (!in_range(l.t)) throw ConfigError("load event outside [0, horizon)");
    if (mode == Mode::GridTied) {
        if (commands.empty()) throw ConfigError("grid-tied scenario needs power commands");
        bool at0 = false;
        for (const auto& c : commands) at0 = at0 || (c.t == 0.0 && c.der < 0);
        if (!at0) throw ConfigError("grid-tied scenario needs an all-DER command at t = 0");
    } else if (!commands.empty()) {
        throw ConfigError("islanded scenario takes droop set points, not power commands");
    }
}

MicrogridModel::MicrogridModel(std::vector<DerParams> params, NetworkModel net, Scenario scn,
                               DqConvention conv)
    : params_(std::move(params)), net_(std::move(net)), scn_(std::move(scn)), conv_(conv) {
    for (const auto& p : params_) p.validate();
    net_.validate(scn_.mode);
    scn_.validate();
    if (int(net_.der_bus.size()) != ders()) throw ConfigError("one bus per DER required");
    if (!net_.load_G.size()) net_.load_G = Vec::Zero(net_.buses);
    if (!net_.load_B.size()) net_.load_B = Vec::Zero(net_.buses);
    std::set<int> sb;
    for (const auto& l : scn_.loads) {
        if (l.bus < 0 || l.bus >= net_.buses) throw ConfigError("load event bus out of range");
        sb.insert(l.bus);
    }
    switch_bus_.assign(sb.begin(), sb.end());
    for (const auto& c : scn_.commands)
        if (c.der >= ders()) throw ConfigError("command DER index out of range");
    for (const auto& c : scn_.setpoints)
        if (c.der >= ders()) throw ConfigError("set-point DER index out of range");
    nonpcc_.assign(net_.buses, -1);
    int k = 0;
    for (int b = 0; b < net_.buses; ++b)
        if (b != net_.pcc_bus) nonpcc_[b] = k++;
    network_lu(Vec::Zero(net_.buses)); // fail early on a singular network
}

Vec MicrogridModel::extra_conductance(const Vec& u) const {
    Vec e = Vec::Zero(net_.buses);
    for (size_t k = 0; k < switch_bus_.size(); ++k) e(switch_bus_[k]) += u(2 * ders() + int(k));
    return e;
}

const Eigen::PartialPivLU<Mat>& MicrogridModel::network_lu(const Vec& extra) const {
    std::vector<double> key(extra.data(), extra.data() + extra.size());
    std::lock_guard<std::mutex> lock(lu_mu_);
    auto it = lu_cache_.find(key);
    if (it != lu_cache_.end()) return *it->second;
    const Eigen::MatrixXcd Y = net_.admittance(extra);
    const int nb = net_.buses;
    Mat A(2 * nb, 2 * nb);
    for (int a = 0; a < nb; ++a)
        for (int b = 0; b < nb; ++b) {
            const double G = Y(a, b).real(), B = Y(a, b).imag();
            A.block<2, 2>(2 * a, 2 * b) << G, -B, B, G;
        }
    Mat Ar = A;
    if (net_.grid_tied()) {
        const int r = 2 * (nb - 1);
        Ar.resize(r, r);
        for (int a = 0; a < nb; ++a)
            for (int b = 0; b < nb; ++b)
                if (nonpcc_[a] >= 0 && nonpcc_[b] >= 0)
                    Ar.block<2, 2>(2 * nonpcc_[a], 2 * nonpcc_[b]) = A.block<2, 2>(2 * a, 2 * b);
    }
    auto lu = std::make_unique<Eigen::PartialPivLU<Mat>>();
    if (Ar.rows() > 0) {
        lu->compute(Ar);
        if (!(lu->rcond() > 1e-14)) throw SingularNetwork("nodal admittance matrix is singular");
    }
    auto& ref = *lu;
    lu_cache_.emplace(std::move(key), std::move(lu));
    return ref;
}

Eigen::Matrix2Xd MicrogridModel::bus_voltages(const Vec& s, const Vec& u) const {
    const int N = ders(), nb = net_.buses;
    const bool grid = mode() == Mode::GridTied;
    Vec I = Vec::Zero(2 * nb);
    for (int i = 0; i < N; ++i) {
        Vec2 io(s(der::N * i + der::I_od), s(der::N * i + der::I_oq));
        if (conv_ == DqConvention::Conventional) io = conv_to_q(io);
        const double a = s(der::N * i + der::delta);
        Vec2 ig = rot(io, grid ? a : -a);
        if (conv_ == DqConvention::Conventional) ig = q_to_conv(ig);
        I.segment<2>(2 * net_.der_bus[i]) += ig;
    }
    Eigen::Matrix2Xd V(2, nb);
    const auto& lu = network_lu(extra_conductance(u));
    if (!grid) {
        const Vec v = lu.solve(I);
        for (int b = 0; b < nb; ++b) V.col(b) = v.segment<2>(2 * b);
        return V;
    }
    const int pcc = net_.pcc_bus;
    V.col(pcc) = net_.v_pcc;
    if (nb == 1) return V;
    // Y_oo V_o = I_o - Y_op V_p
    const Eigen::MatrixXcd Y = net_.admittance(extra_conductance(u));
    Vec rhs(2 * (nb - 1));
    for (int b = 0; b < nb; ++b) {
        if (nonpcc_[b] < 0) continue;
        const std::complex<double> y = Y(b, pcc);
        const Vec2 yv(y.real() * net_.v_pcc(0) - y.imag() * net_.v_pcc(1),
                      y.imag() * net_.v_pcc(0) + y.real() * net_.v_pcc(1));
        rhs.segment<2>(2 * nonpcc_[b]) = I.segment<2>(2 * b) - yv;
    }
    const Vec v = lu.solve(rhs);
    for (int b = 0; b < nb; ++b)
        if (nonpcc_[b] >= 0) V.col(b) = v.segment<2>(2 * nonpcc_[b]);
    return V;
}

Vec MicrogridModel::rhs(const Vec& s, const Vec& u) const {
    const int N = ders();
    if (s.size() != order()) throw DimensionError("microgrid state has wrong size");
    if (u.size() != inputs()) throw DimensionError("microgrid input has wrong size");
    const Eigen::Matrix2Xd V = bus_voltages(s, u);
    const bool grid = mode() == Mode::GridTied;
    Vec out(order());
    double w1 = 0.0;
    if (!grid) {
        DerVec s0 = s.segment<der::N>(0);
        w1 = omega_pll(s0, params_[0]);
    }
    for (int i = 0; i < N; ++i) {
        const DerVec si = s.segment<der::N>(der::N * i);
        Vec2 vg = V.col(net_.der_bus[i]);
        if (conv_ == DqConvention::Conventional) vg = conv_to_q(vg);
        const double a = si(der::delta);
        Vec2 vb = rot(vg, grid ? -a : a);
        if (conv_ == DqConvention::Conventional) vb = q_to_conv(vb);
        DerVec d;
        if (grid) {
            d = der_rhs_grid_tied(si, params_[i], vb, Vec2(u(2 * i), u(2 * i + 1)), conv_);
            d(der::delta) -= net_.omega_grid;
        } else {
            d = der_rhs_islanded(si, params_[i], vb, w1, conv_, u(2 * i), u(2 * i + 1));
        }
        out.segment<der::N>(der::N * i) = d;
    }
    return out;
}

Vec MicrogridModel::coefficients() const {
    Vec c(order());
    for (int i = 0; i < ders(); ++i)
        c.segment<der::N>(der::N * i) = der_coefficients(params_[i], mode());
    return c;
}

std::vector<std::string> MicrogridModel::labels() const {
    const auto base = der_state_names(mode());
    std::vector<std::string> out;
    for (int i = 0; i < ders(); ++i)
        for (const auto& b : base) out.push_back(suffixed(b, i, ders()));
    return out;
}

std::vector<std::string> MicrogridModel::input_labels() const {
    std::vector<std::string> out;
    const bool grid = mode() == Mode::GridTied;
    for (int i = 0; i < ders(); ++i) {
        out.push_back(suffixed(grid ? "P_ref" : "omega_set", i, ders()));
        out.push_back(suffixed(grid ? "Q_ref" : "V_set", i, ders()));
    }
    for (int b : switch_bus_) out.push_back("G_bus" + std::to_string(b + 1));
    return out;
}

InputSignal MicrogridModel::input_signal() const {
    std::set<double> times{0.0};
    for (const auto& c : scn_.commands) times.insert(c.t);
    for (const auto& c : scn_.setpoints) times.insert(c.t);
    for (const auto& l : scn_.loads) times.insert(l.t);
    const int N = ders();
    auto value_at = [&](double t) {
        Vec u = Vec::Zero(inputs());
        if (mode() == Mode::Islanded)
            for (int i = 0; i < N; ++i) {
                u(2 * i) = params_[i].omega_n;
                u(2 * i + 1) = params_[i].V_oq_n;
            }
        // later entries override earlier ones; stable order within equal times
        auto apply = [&](const auto& list, auto&& set) {
            std::vector<size_t> idx(list.size());
            for (size_t k = 0; k < idx.size(); ++k) idx[k] = k;
            std::stable_sort(idx.begin(), idx.end(),
                             [&](size_t a, size_t b) { return list[a].t < list[b].t; });
            for (size_t k : idx) {
                if (list[k].t > t) break;
                for (int i = 0; i < N; ++i)
                    if (list[k].der < 0 || list[k].der == i) set(list[k], i);
            }
        };
        apply(scn_.commands, [&](const CommandStep& c, int i) {
            u(2 * i) = c.P;
            u(2 * i + 1) = c.Q;
        });
        apply(scn_.setpoints, [&](const SetpointStep& c, int i) {
            u(2 * i) = c.omega;
            u(2 * i + 1) = c.V;
        });
        for (const auto& l : scn_.loads) {
            if (l.t > t) continue;
            const auto it = std::find(switch_bus_.begin(), switch_bus_.end(), l.bus);
            u(2 * N + int(it - switch_bus_.begin())) += l.dG;
        }
        return u;
    };
    InputSignal sig;
    for (double t : times) sig.add(t, value_at(t));
    return sig;
}

Vec MicrogridModel::initial_guess(const Vec& u) const {
    const int N = ders();
    Vec s = Vec::Zero(order());
    double Gtot = net_.load_G.sum() + extra_conductance(u).sum();
    for (int i = 0; i < N; ++i) {
        const DerParams& p = params_[i];
        DerVec x = DerVec::Zero();
        using namespace der;
        if (mode() == Mode::GridTied) {
            const double V = net_.v_pcc.norm();
            x(V_oq) = V;
            x(P) = u(2 * i);
            x(Q) = u(2 * i + 1);
            x(I_oq) = x(I_lq) = x(P) / (1.5 * V);
            x(I_od) = x(I_ld) = x(Q) / (1.5 * V);
        } else {
            const double V = u(2 * i + 1);
            const double R = Gtot > 0 ? N / Gtot : 1e3;
            x(V_oq) = V;
            x(I_oq) = x(I_lq) = V / R;
            x(I_ld) = -p.omega_n * p.C_f * V;
            x(P) = 1.5 * V * V / R;
            const double ws = u(2 * i) - p.m * x(P);
            x(Phi_PLL) = (ws - p.omega_n) / p.K_I_PLL;
            x(Phi_1) = x(I_ld) / p.K_I_V;
            x(Phi_2) = x(I_lq) / p.K_I_V;
            x(Gamma_d) = p.R_f * x(I_ld) / p.K_I_C;
            x(Gamma_q) = (p.R_f * x(I_lq) + x(V_oq) + 2 * p.omega_n * p.L_f * x(I_ld)) / p.K_I_C;
        }
        if (conv_ == DqConvention::Conventional) x = map_pairs(x, q_to_conv);
        s.segment<15>(15 * i) = x;
    }
    return s;
}

Vec MicrogridModel::equilibrium(const Vec& u, const Vec& guess) const {
    const int nn = order();
    std::vector<int> idx;
    for (int k = 0; k < nn; ++k)
        if (!(mode() == Mode::Islanded && k == der::delta)) idx.push_back(k);
    const int r = int(idx.size());
    const Vec w = coefficients();

    auto resid = [&](const Vec& s) {
        const Vec d = rhs(s, u);
        Vec out(r);
        for (int k = 0; k < r; ++k) out(k) = w(idx[k]) * d(idx[k]);
        return out;
    };
    auto newton = [&](Vec s, bool& ok) {
        ok = false;
        Vec res = resid(s);
        for (int it = 0; it < 60; ++it) {
            const double tol = 1e-10 * (1.0 + s.cwiseAbs().maxCoeff());
            if (res.cwiseAbs().maxCoeff() < tol) { ok = true; return s; }
            Vec v(r);
            for (int k = 0; k < r; ++k) v(k) = s(idx[k]);
            const Mat J = fd_jacobian(
                [&](const Vec& vv) {
                    Vec ss = s;
                    for (int k = 0; k < r; ++k) ss(idx[k]) = vv(k);
                    return resid(ss);
                },
                v, 1e-7);
            Eigen::PartialPivLU<Mat> lu(J);
            if (!(lu.rcond() > 1e-16)) return s;
            const Vec dv = lu.solve(-res);
            double lam = 1.0;
            const double n0 = res.norm();
            bool moved = false;
            for (int h = 0; h < 12; ++h, lam *= 0.5) {
                Vec st = s;
                for (int k = 0; k < r; ++k) st(idx[k]) += lam * dv(k);
                const Vec rt = resid(st);
                if (rt.allFinite() && rt.norm() < n0) {
                    s = st;
                    res = rt;
                    moved = true;
                    break;
                }
            }
            if (!moved) return s;
        }
        return s;
    };

    Vec s0 = guess.size() == nn ? guess : initial_guess(u);
    bool ok = false;
    Vec s = newton(s0, ok);
    if (ok) return s;
    // relax the dynamics first, then polish
    SolverConfig cfg;
    cfg.method = Method::ImplicitStiff;
    cfg.rtol = 1e-6;
    cfg.atol = 1e-6;
    Vec y = s0;
    for (int round = 0; round < 4 && !ok; ++round) {
        const auto tr = integrate_stiff([&](double, const Vec& x, Vec& dx) { dx = rhs(x, u); },
                                        nullptr, y, 0.0, 3.0, cfg);
        y = tr.back();
        s = newton(y, ok);
    }
    if (!ok) throw NotAnEquilibrium("microgrid equilibrium solve did not converge");
    return s;
}

Eigen::Matrix2Xd network_solve(const std::vector<DerVec>& states, const NetworkModel& net,
                               Mode mode, const Vec& extra_G) {
    Scenario scn;
    scn.mode = mode;
    if (mode == Mode::GridTied) scn.commands.push_back({0.0, -1, 0.0, 0.0});
    NetworkModel n2 = net;
    if (extra_G.size()) n2.load_G = (net.load_G.size() ? net.load_G : Vec::Zero(net.buses)) + extra_G;
    MicrogridModel m(std::vector<DerParams>(states.size()), n2, scn);
    Vec s(der::N * int(states.size()));
    for (size_t i = 0; i < states.size(); ++i) s.segment<der::N>(der::N * int(i)) = states[i];
    return m.bus_voltages(s, Vec::Zero(m.inputs()));
}

Vec AssembledSystem::join(const Vec& x, const Vec& z) const {
    Vec s(x.size() + z.size());
    for (size_t k = 0; k < part.slow.size(); ++k) s(part.slow[k]) = x(k);
    for (size_t k = 0; k < part.fast.size(); ++k) s(part.fast[k]) = z(k);
    return s;
}

Vec AssembledSystem::slow_of(const Vec& s) const {
    Vec x(part.slow.size());
    for (size_t k = 0; k < part.slow.size(); ++k) x(k) = s(part.slow[k]);
    return x;
}

Vec AssembledSystem::fast_of(const Vec& s) const {
    Vec z(part.fast.size());
    for (size_t k = 0; k < part.fast.size(); ++k) z(k) = s(part.fast[k]);
    return z;
}

namespace {

// f and g are usually requested back to back with the same arguments
struct EvalCache {
    const MicrogridModel* model = nullptr;
    Vec x, z, u, F;
};

bool same(const Vec& a, const Vec& b) {
    return a.size() == b.size() && std::equal(a.data(), a.data() + a.size(), b.data());
}

} // namespace

AssembledSystem assemble_system(std::shared_ptr<const MicrogridModel> model, double gap_ratio) {
    AssembledSystem as;
    as.model = model;
    const Vec c = model->coefficients();
    as.part = identify_partition(c, gap_ratio);
    const auto labels = model->labels();

    auto shared = std::make_shared<AssembledSystem>();
    shared->part = as.part;
    shared->model = model;

    auto full = [shared](const Vec& x, const Vec& z, const Vec& u) -> const Vec& {
        thread_local EvalCache cache;
        const MicrogridModel* m = shared->model.get();
        if (cache.model == m && same(cache.x, x) && same(cache.z, z) && same(cache.u, u))
            return cache.F;
        cache.model = nullptr;
        cache.F = m->rhs(shared->join(x, z), u);
        cache.x = x;
        cache.z = z;
        cache.u = u;
        cache.model = m;
        return cache.F;
    };
    Vec eps_fast(as.part.fast.size());
    for (size_t k = 0; k < as.part.fast.size(); ++k) eps_fast(k) = c(as.part.fast[k]);

    SingularSystem& sys = as.sys;
    sys.n = int(as.part.slow.size());
    sys.m = int(as.part.fast.size());
    sys.p = model->inputs();
    sys.eps = eps_fast;
    sys.f = [shared, full](const Vec& x, const Vec& z, const Vec& u, const Vec&) {
        return shared->slow_of(full(x, z, u));
    };
    sys.g = [shared, full, eps_fast](const Vec& x, const Vec& z, const Vec& u, const Vec&) {
        Vec g = shared->fast_of(full(x, z, u));
        return Vec(g.cwiseProduct(eps_fast));
    };
    for (int k : as.part.slow) sys.slow_labels.push_back(labels[k]);
    for (int k : as.part.fast) sys.fast_labels.push_back(labels[k]);
    sys.input_labels = model->input_labels();
    sys.name = std::string("microgrid_") + mode_name(model->mode());
    sys.validate();
    return as;
}

} // namespace lsor
