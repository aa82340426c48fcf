#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "lsor/config.hpp"
#include "lsor/harness.hpp"

namespace fs = std::filesystem;
using namespace lsor;

namespace {

enum Exit { kOk = 0, kUsage = 1, kAssessment = 2, kNumerical = 3 };

void write_or_print(const nlohmann::json& j, const std::string& out, const char* file) {
    if (out.empty()) {
        std::cout << j.dump(2) << '\n';
        return;
    }
    fs::create_directories(out);
    std::ofstream os(fs::path(out) / file);
    os << j.dump(2) << '\n';
    std::cerr << "wrote " << (fs::path(out) / file).string() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"large-signal order reduction toolkit"};
    app.require_subcommand(1);

    std::string config, out, variant = "rom", solver;
    double rtol = 0, atol = 0;
    std::uint64_t seed = 0;
    int grid = 0, repeats = 0;

    std::map<std::string, std::vector<CLI::Option*>> opts;
    auto common = [&](CLI::App* sc) {
        sc->add_option("config", config, "JSON case file")->required()->check(CLI::ExistingFile);
        opts["--rtol"].push_back(sc->add_option("--rtol", rtol, "relative tolerance"));
        opts["--atol"].push_back(sc->add_option("--atol", atol, "absolute tolerance"));
        opts["--seed"].push_back(sc->add_option("--seed", seed, "sampling seed"));
        sc->add_option("--out", out, "output directory");
        opts["--grid"].push_back(sc->add_option("--grid", grid, "comparison grid points"));
    };
    auto* reduce = app.add_subcommand("reduce", "emit the ROM/BLM descriptor");
    auto* assess = app.add_subcommand("assess", "run the assessment, write report.json");
    auto* simulate = app.add_subcommand("simulate", "simulate one model variant");
    auto* bench = app.add_subcommand("bench", "solver x model timing table");
    auto* compare = app.add_subcommand("compare", "all variants, metrics, timing and report");
    for (auto* sc : {reduce, assess, simulate, bench, compare}) common(sc);
    simulate->add_option("--variant", variant, "full|rom|rom-blm|smallsig")
        ->check(CLI::IsMember({"full", "rom", "rom-blm", "smallsig"}));
    for (auto* sc : {simulate, bench, compare})
        opts["--solver"].push_back(
            sc->add_option("--solver", solver, "explicit|stiff")->check(CLI::IsMember({"explicit", "stiff"})));
    for (auto* sc : {bench, compare})
        opts["--repeats"].push_back(sc->add_option("--repeats", repeats, "timing repeats"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    Overrides ov;
    auto given = [&](const char* name) {
        for (auto* o : opts[name])
            if (o->count()) return true;
        return false;
    };
    if (given("--rtol")) ov.rtol = rtol;
    if (given("--atol")) ov.atol = atol;
    if (given("--seed")) ov.seed = seed;
    if (given("--grid")) ov.grid = grid;
    if (given("--repeats")) ov.repeats = repeats;
    if (given("--solver")) ov.solver = solver;

    try {
        CaseSetup c = load_case(config, ov);
        if (reduce->parsed()) {
            write_or_print(describe_reduction(c.make(c.lsor.gap_ratio)), out, "reduction.json");
            return kOk;
        }
        if (assess->parsed()) {
            LsorOptions opt = c.lsor;
            opt.throw_on_reject = false;
            const LsorResult r = run_lsor(c.make, opt);
            write_or_print(to_json(r.report), out, "report.json");
            std::cerr << r.report.system << ": " << r.report.verdict;
            if (!r.report.failed.empty()) std::cerr << " (" << r.report.failed << ")";
            std::cerr << '\n';
            return r.report.verdict == "accepted" ? kOk : kAssessment;
        }
        const PartitionedSystem ps = c.make(c.lsor.gap_ratio);
        if (simulate->parsed()) {
            RunBundle b;
            b.id = c.id;
            b.grid = uniform_grid(0.0, c.horizon, c.grid);
            b.labels = ps.labels;
            b.series[variant] = simulate_variant(c, ps, variant, c.solver, b.grid);
            const std::string dir = out.empty() ? "." : out;
            fs::create_directories(dir);
            write_trajectories_csv(b, (fs::path(dir) / "trajectories.csv").string());
            const auto& st = b.series[variant].stats;
            std::cerr << variant << " (" << method_name(c.solver.method) << "): " << st.accepted
                      << " steps, " << st.rhs_evals << " rhs evals, " << st.wall_s << " s\n";
            return kOk;
        }
        if (bench->parsed()) {
            const auto rows = timing_table(c, ps);
            const std::string dir = out.empty() ? "." : out;
            fs::create_directories(dir);
            write_timing_csv(rows, (fs::path(dir) / "timing.csv").string());
            for (const auto& r : rows)
                std::cout << r.solver << ' ' << r.model << ' ' << r.wall_s << " s, " << r.steps
                          << " steps\n";
            return kOk;
        }
        if (compare->parsed()) {
            const RunBundle b = run_scenario(c);
            emit(b, out.empty() ? "run_" + c.id : out);
            if (b.report && b.report->verdict != "accepted") return kAssessment;
            return kOk;
        }
    } catch (const AssessmentFailed& e) {
        std::cerr << "assessment failed: " << e.what() << '\n';
        return kAssessment;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kOk;
}
