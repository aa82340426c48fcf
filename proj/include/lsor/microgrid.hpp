#pragma once

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "lsor/reduction.hpp"
#include "lsor/sysdef.hpp"

namespace lsor {

struct DerParams {
    double omega_c = 2.0 * 3.14159265358979323846 * 3.0;
    double omega_cPLL = 400.0;
    double K_P_PLL = 0.1, K_I_PLL = 2.0;
    double K_P_P = 2e-3, K_I_P = 1e-2;
    double K_P_V = 3.0, K_I_V = 30.0;
    double K_P_C = 100.0, K_I_C = 1000.0;
    double m = 9.4e-5;   // (rad/s)/W
    double n = 1.3e-3;   // V/var
    double omega_n = 377.0;
    double V_oq_n = 311.0;
    double R_f = 0.1, L_f = 1.35e-3, C_f = 50e-6, R_d = 1.0;
    double R_c = 0.03, L_c = 0.35e-3;
    void validate() const;
};

enum class Mode { GridTied, Islanded };
enum class DqConvention { QAligned, Conventional };

const char* mode_name(Mode m);

// Per-DER state slots.
namespace der {
enum : int {
    P = 0, Q, Phi_PLL, delta, Phi_1, Phi_2, Gamma_d, Gamma_q, // slow
    V_odf, I_ld, I_lq, I_od, I_oq, V_od, V_oq,               // fast
    N = 15
};
}

using DerVec = Eigen::Matrix<double, der::N, 1>;
using Vec2 = Eigen::Vector2d;

std::vector<std::string> der_state_names(Mode mode);

double omega_pll(const DerVec& s, const DerParams& p);
Vec2 droop_references(const DerParams& p, double P, double Q, double omega_set, double V_set);
inline Vec2 droop_references(const DerParams& p, double P, double Q) {
    return droop_references(p, P, Q, p.omega_n, p.V_oq_n);
}

// LC filter and coupling inductor: derivatives of (I_ld, I_lq, I_od, I_oq, V_od, V_oq)
Eigen::Matrix<double, 6, 1> lc_filter_rhs(const DerParams& p, const Vec2& Il, const Vec2& Vl,
                                          const Vec2& Io, const Vec2& Vo, const Vec2& vb);

DerVec der_rhs_grid_tied(const DerVec& s, const DerParams& p, const Vec2& vb, const Vec2& cmd,
                         DqConvention conv = DqConvention::QAligned);
// omega_set / V_set default to p.omega_n / p.V_oq_n when NaN
DerVec der_rhs_islanded(const DerVec& s, const DerParams& p, const Vec2& vb, double omega_pll1,
                        DqConvention conv = DqConvention::QAligned, double omega_set = NAN,
                        double V_set = NAN);

// derivative-scaling coefficients in slot order
DerVec der_coefficients(const DerParams& p, Mode mode);

struct Line {
    int from = 0, to = 0; // 0-based
    double R = 0.0, X = 0.0;
};

struct NetworkModel {
    int buses = 1;
    std::vector<Line> lines;
    Vec load_G, load_B;      // per bus (S)
    std::vector<int> der_bus; // 0-based, one per DER
    int pcc_bus = -1;        // grid-tied infinite bus
    Vec2 v_pcc{0.0, 311.0};  // global frame
    double omega_grid = 377.0;

    bool grid_tied() const { return pcc_bus >= 0; }
    Eigen::MatrixXcd admittance(const Vec& extra_G = Vec()) const;
    void validate(Mode mode) const;
};

struct CommandStep {
    double t = 0.0;
    int der = -1; // -1: every DER
    double P = 0.0, Q = 0.0;
};

struct SetpointStep {
    double t = 0.0;
    int der = -1;
    double omega = 377.0, V = 311.0;
};

struct LoadEvent {
    double t = 0.0;
    int bus = 0;     // 0-based
    double dG = 0.0; // conductance change (S)
};

struct Scenario {
    Mode mode = Mode::GridTied;
    std::vector<CommandStep> commands;
    std::vector<SetpointStep> setpoints;
    std::vector<LoadEvent> loads;
    double horizon = 1.0;
    void validate() const;
};

// Natural ordering: DER-major, 15 slots per DER. Inputs: per DER (P*,Q*) or
// (omega_set, V_set), then one switchable conductance per load-event bus.
class MicrogridModel : public std::enable_shared_from_this<MicrogridModel> {
public:
    MicrogridModel(std::vector<DerParams> params, NetworkModel net, Scenario scn,
                   DqConvention conv = DqConvention::QAligned);

    int ders() const { return int(params_.size()); }
    int order() const { return der::N * ders(); }
    int inputs() const { return 2 * ders() + int(switch_bus_.size()); }
    Mode mode() const { return scn_.mode; }
    DqConvention convention() const { return conv_; }
    const std::vector<DerParams>& params() const { return params_; }
    const NetworkModel& network() const { return net_; }
    const Scenario& scenario() const { return scn_; }
    const std::vector<int>& switch_buses() const { return switch_bus_; }

    // derivative of the stacked natural state
    Vec rhs(const Vec& s, const Vec& u) const;
    // per-bus global-frame voltages (2 x buses)
    Eigen::Matrix2Xd bus_voltages(const Vec& s, const Vec& u) const;

    Vec coefficients() const; // 15N
    std::vector<std::string> labels() const;
    std::vector<std::string> input_labels() const;
    InputSignal input_signal() const;

    // steady state for a constant input (islanded: DER 1's angle held at 0)
    Vec equilibrium(const Vec& u, const Vec& guess = Vec()) const;
    Vec initial_guess(const Vec& u) const;

private:
    const Eigen::PartialPivLU<Mat>& network_lu(const Vec& extra) const;
    Vec extra_conductance(const Vec& u) const;

    std::vector<DerParams> params_;
    NetworkModel net_;
    Scenario scn_;
    DqConvention conv_;
    std::vector<int> switch_bus_;
    std::vector<int> nonpcc_; // bus index -> reduced index (grid-tied), -1 for the pcc
    mutable std::mutex lu_mu_;
    mutable std::map<std::vector<double>, std::unique_ptr<Eigen::PartialPivLU<Mat>>> lu_cache_;
};

Eigen::Matrix2Xd network_solve(const std::vector<DerVec>& states, const NetworkModel& net,
                               Mode mode, const Vec& extra_G = Vec());

struct AssembledSystem {
    SingularSystem sys;
    SlowFastPartition part;
    std::shared_ptr<const MicrogridModel> model;
    Vec qss_scale; // residual scale per fast state

    Vec join(const Vec& x, const Vec& z) const;  // -> natural
    Vec slow_of(const Vec& s) const;
    Vec fast_of(const Vec& s) const;
};

AssembledSystem assemble_system(std::shared_ptr<const MicrogridModel> model,
                                double gap_ratio = 10.0);

} // namespace lsor
