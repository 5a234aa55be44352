#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hsconv/analytic.hpp"
#include "hsconv/compare.hpp"
#include "hsconv/engine.hpp"
#include "hsconv/metrics.hpp"
#include "hsconv/model.hpp"
#include "hsconv/netlist.hpp"

namespace hsconv::cli {

enum Exit : int { ok = 0, failure = 1, validation = 2, nonconvergence = 3, crosscheck_failed = 4, partial_sweep = 5 };

struct EmitFlags {
    bool csv = true, md = true, svg = true;
};

struct RunConfig {
    std::string preset = "sim";
    ConverterDesign design = preset_simulation();
    DeviceParasitics parasitics = default_parasitics();
    FormulaMode formula_mode = FormulaMode::consistent;
    EngineConfig engine;
    double tolerance = 0.02;
    std::string out_dir;
    EmitFlags emit;
};

inline void from_json(const nlohmann::json& j, EngineConfig& e) {
    detail::reject_unknown(j, {"step_per_period", "max_periods", "ss_tolerance"}, "engine");
    detail::read_field(j, "step_per_period", e.step_per_period);
    detail::read_field(j, "max_periods", e.max_periods);
    detail::read_field(j, "ss_tolerance", e.ss_tolerance);
}

inline void from_json(const nlohmann::json& j, EmitFlags& e) {
    detail::reject_unknown(j, {"csv", "md", "svg"}, "emit");
    detail::read_field(j, "csv", e.csv);
    detail::read_field(j, "md", e.md);
    detail::read_field(j, "svg", e.svg);
}

inline void apply_preset(RunConfig& c, const std::string& name) {
    if (name == "sim") {
        c.design = preset_simulation();
    } else if (name == "prototype") {
        auto [d, p] = preset_prototype();
        c.design = d;
        c.parasitics = p;
    } else {
        throw Error("unknown preset '" + name + "' (expected sim or prototype)");
    }
    c.preset = name;
}

// preset first, then the remaining keys overlay it
inline void load_config(RunConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error("config '" + path + "': " + e.what());
    }
    detail::reject_unknown(j, {"preset", "design", "parasitics", "formula_mode", "engine", "tolerance", "out", "emit"},
                           "config");
    if (j.contains("preset")) apply_preset(c, j["preset"].get<std::string>());
    if (j.contains("design")) j["design"].get_to(c.design);
    if (j.contains("parasitics")) j["parasitics"].get_to(c.parasitics);
    if (j.contains("formula_mode")) c.formula_mode = parse_formula_mode(j["formula_mode"].get<std::string>());
    if (j.contains("engine")) from_json(j["engine"], c.engine);
    if (j.contains("tolerance")) j["tolerance"].get_to(c.tolerance);
    if (j.contains("out")) j["out"].get_to(c.out_dir);
    if (j.contains("emit")) from_json(j["emit"], c.emit);
}

inline std::string defaults_header(const RunConfig& c) {
    using detail::fmt;
    const auto& d = c.design;
    const auto& p = c.parasitics;
    std::ostringstream os;
    os << "# hsconv report\n\n"
       << "Design (" << c.preset << "): vin=" << fmt(d.vin, 3) << " V, n_ratio=" << fmt(d.n_ratio, 3)
       << ", duty=" << fmt(d.duty, 4) << ", fsw=" << fmt(d.fsw / 1e3, 3) << " kHz, lm=" << fmt(d.lm * 1e6, 3)
       << " uH, lk=" << fmt(d.lk * 1e6, 3) << " uH, cap=" << fmt(d.cap * 1e6, 3) << " uF, rload=" << fmt(d.rload, 2)
       << " Ohm\n\n"
       << "Parasitics: rds_on=" << fmt(p.rds_on * 1e3, 3) << " mOhm, vf=" << fmt(p.vf, 3)
       << " V, esr=" << fmt(p.esr * 1e3, 3) << " mOhm, r_winding=" << fmt(p.r_winding * 1e3, 3) << " mOhm\n\n"
       << "Engine: step_per_period=" << c.engine.step_per_period << ", max_periods=" << c.engine.max_periods
       << ", ss_tolerance=" << c.engine.ss_tolerance << ", ss_consecutive=" << c.engine.ss_consecutive
       << ", ss_floor=" << c.engine.ss_floor << ", switch/diode ron=" << kDefaultRon << " Ohm roff=" << kDefaultRoff
       << " Ohm, simulated diode vf=0\n\n"
       << "Formula mode: " << to_string(c.formula_mode) << ", crosscheck tolerance: " << fmt(100.0 * c.tolerance, 2)
       << " %\n\n";
    return os.str();
}

class Writer {
public:
    Writer(const RunConfig& c, std::ostream& err) : c_(c), err_(err) {
        if (!c.out_dir.empty()) std::filesystem::create_directories(c.out_dir);
    }
    bool active() const { return !c_.out_dir.empty(); }
    void write(const std::string& name, const std::string& body, bool enabled) {
        if (!active() || !enabled) return;
        const auto path = std::filesystem::path(c_.out_dir) / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error("cannot write '" + path.string() + "'");
        f << body;
        err_ << "wrote " << path.string() << "\n";
    }

private:
    const RunConfig& c_;
    std::ostream& err_;
};

inline int cmd_analyze(const RunConfig& c, std::ostream& out, std::ostream& err) {
    auto v = validate(c.design);
    if (!v.ok()) {
        for (const auto& e : v.errors) err << "error: " << e << "\n";
        return validation;
    }
    for (const auto& w : v.warnings) err << "warning: " << w << "\n";
    const auto rep = analyze(c.design, c.formula_mode);
    const auto aud = audit_consistency(c.design, c.formula_mode);
    std::string md = defaults_header(c) + to_markdown(rep) + "\n" + to_markdown(aud);
    out << md;
    Writer w(c, err);
    w.write("report.md", md, c.emit.md);
    if (w.active() && c.emit.md) {
        nlohmann::json j{{"analytic", rep}, {"audit", aud}};
        w.write("analytic.json", j.dump(2) + "\n", true);
    }
    return ok;
}

inline int cmd_audit(const RunConfig& c, std::ostream& out, std::ostream& err) {
    auto v = validate(c.design);
    if (!v.ok()) {
        for (const auto& e : v.errors) err << "error: " << e << "\n";
        return validation;
    }
    std::string md = defaults_header(c);
    for (auto m : {FormulaMode::strict_paper, FormulaMode::consistent}) md += to_markdown(audit_consistency(c.design, m)) + "\n";
    out << md;
    Writer(c, err).write("report.md", md, c.emit.md);
    return ok;
}

struct NetlistRun {
    std::string path;
    double t_end = 0.0;
    double dt = 0.0;
};

inline std::string conservation_markdown(const FlatNetlist& flat, const WaveformSet& w, const ConverterDesign& d,
                                         const MeasuredOperatingPoint& op) {
    using detail::fmt;
    std::ostringstream os;
    const double T = 1.0 / d.fsw;
    os << "## Conservation over the final period\n\n| check | value | limit |\n|---|---|---|\n";
    for (const auto& x : {"x1", "x2"}) {
        const auto parts = detail::coupled_parts(flat, x);
        const double vs = std::abs(volt_seconds(flat, w, parts.lm)) / (d.vin * d.duty * T);
        os << "| volt-second " << parts.lm << " | " << fmt(vs, 6) << " | 0.001 |\n";
    }
    for (int k = 0; k < 4; ++k) {
        const std::string n = "c" + std::to_string(k + 1);
        const double q = std::abs(net_charge(w, n)) / (d.cap * op.vc[k].avg);
        os << "| charge " << n << " | " << fmt(q, 6) << " | 0.001 |\n";
    }
    const auto e = energy_audit(flat, w);
    os << "| energy imbalance | " << fmt(e.imbalance, 6) << " | 0.005 |\n"
       << "| stored energy change [W] | " << fmt(e.stored_change / T, 3) << " | - |\n\nModes over the final period:";
    for (const auto& m : mode_timeline(w, "g1", "g2")) os << " " << to_string(m.mode) << " (" << fmt(m.fraction, 4) << ")";
    os << "\n";
    return os.str();
}

inline int simulate_netlist(const RunConfig& c, const NetlistRun& nr, std::ostream& out, std::ostream& err) {
    std::ifstream in(nr.path);
    if (!in) {
        err << "error: cannot open netlist '" << nr.path << "'\n";
        return validation;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    FlatNetlist flat;
    try {
        flat = expand_coupled(parse(ss.str()));
        assemble(flat);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return validation;
    }
    WaveformSet w;
    int code = ok;
    std::ostringstream md;
    md << defaults_header(c) << "## Netlist run: " << nr.path << "\n\n";
    if (nr.t_end > 0.0) {
        const double dt = nr.dt > 0.0 ? nr.dt : nr.t_end / 1000.0;
        w = run_fixed(flat, nr.t_end, dt);
        md << "Fixed-step run to t=" << nr.t_end << " s, dt=" << dt << " s\n\n";
    } else {
        if (flat.pwm.gates.empty()) {
            err << "error: netlist has no PWM line; pass --t-end for an aperiodic run\n";
            return validation;
        }
        auto r = run_transient(flat, c.engine);
        md << "Periodic run: " << r.steady.periods_run << " periods, residual " << r.steady.residual
           << (r.steady.converged ? " (converged)" : " (NOT converged)") << "\n\n";
        if (!r.steady.converged) code = nonconvergence;
        w = r.waves;
        if (r.steady.converged) {
            const auto fp = r.steady.final_period;
            md << "| signal | avg | rms | min | max | pk-pk |\n|---|---|---|---|---|---|\n";
            for (std::size_t k = 0; k < fp.names.size(); ++k)
                md << "| " << fp.names[k] << " | " << detail::num(stats(fp.t, fp.series[k]), 5) << " |\n";
        }
    }
    out << md.str();
    Writer wr(c, err);
    wr.write("waves.csv", to_csv(w), c.emit.csv);
    wr.write("report.md", md.str(), c.emit.md);
    return code;
}

inline int cmd_simulate(const RunConfig& c, const NetlistRun& nr, std::ostream& out, std::ostream& err) {
    if (!nr.path.empty()) return simulate_netlist(c, nr, out, err);
    auto v = validate(c.design);
    if (!v.ok()) {
        for (const auto& e : v.errors) err << "error: " << e << "\n";
        return validation;
    }
    if (!c.design.interleave_valid()) {
        err << "error: builtin converter is only simulated for duty > 0.5 (got " << c.design.duty << ")\n";
        return validation;
    }
    ConverterRun run;
    try {
        run = simulate_converter(c.design, c.engine);
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << "\n";
        return nonconvergence;
    }
    const auto& steady = run.transient.steady;
    std::ostringstream md;
    md << defaults_header(c);
    md << "Steady state: " << (steady.converged ? "converged" : "NOT converged") << " after " << steady.periods_run
       << " periods, residual " << steady.residual << "\n\n";
    Writer wr(c, err);
    wr.write("waves.csv", to_csv(run.transient.waves), c.emit.csv);
    if (!steady.converged) {
        out << md.str();
        wr.write("report.md", md.str(), c.emit.md);
        err << "error: no periodic steady state within " << c.engine.max_periods << " periods\n";
        return nonconvergence;
    }
    const auto& op = *run.op;
    const auto rep = analyze(c.design, c.formula_mode);
    const auto losses = conduction_losses(op, c.parasitics);
    const auto cc = crosscheck(rep, op, c.tolerance);
    const auto& w = steady.final_period;
    std::vector<ZcsVerdict> zcs;
    for (const auto& dn : run.builtin.roles.diodes) zcs.push_back(zcs_check(w.t, w["i(" + dn + ")"], dn));
    md << to_markdown(rep) << "\n"
       << to_markdown(op) << "\n"
       << to_markdown(losses) << "\n"
       << to_markdown(cc) << "\n"
       << to_markdown(zcs, ripple_report(op.iin, op.ilm1, op.ilm2)) << "\n"
       << conservation_markdown(run.flat, w, c.design, op);
    out << md.str();
    wr.write("op.csv", op_to_csv(op), c.emit.csv);
    wr.write("losses.csv", losses_to_csv(losses), c.emit.csv);
    wr.write("report.md", md.str(), c.emit.md);
    if (c.emit.svg && wr.active()) {
        std::vector<Series> s;
        for (const auto& [label, sig] : std::vector<std::pair<std::string, std::string>>{
                 {"iin", "i(vin)"}, {"ilm1", "i(x1_lm)"}, {"ilm2", "i(x2_lm)"}}) {
            Series ser{label, {}, w[sig]};
            for (double t : w.t) ser.x.push_back((t - w.t.front()) * 1e6);
            if (label == "iin")
                for (auto& y : ser.y) y = -y;
            s.push_back(std::move(ser));
        }
        wr.write("waves.svg", svg_plot(s, "Input and magnetizing currents, final period", "t [us]", "A"), true);
    }
    return cc.pass() ? ok : crosscheck_failed;
}

inline int cmd_sweep(const RunConfig& c, const std::vector<double>& powers, const std::vector<double>& loads,
                     std::ostream& out, std::ostream& err) {
    auto v = validate(c.design);
    if (!v.ok()) {
        for (const auto& e : v.errors) err << "error: " << e << "\n";
        return validation;
    }
    if (!c.design.interleave_valid()) {
        err << "error: builtin converter is only simulated for duty > 0.5\n";
        return validation;
    }
    std::vector<double> r = loads;
    if (r.empty()) r = loads_for_powers(c.design, powers.empty() ? std::vector<double>{100, 200, 300, 400, 500} : powers);
    const auto pts = efficiency_sweep(c.design, c.parasitics, r, c.engine);
    std::string md = defaults_header(c) + to_markdown(pts);
    out << md;
    Writer wr(c, err);
    wr.write("efficiency.csv", sweep_to_csv(pts), c.emit.csv);
    wr.write("report.md", md, c.emit.md);
    if (c.emit.svg) {
        Series s{"efficiency", {}, {}};
        for (const auto& p : pts)
            if (p.converged) {
                s.x.push_back(p.pout());
                s.y.push_back(100.0 * p.efficiency());
            }
        wr.write("efficiency.svg", svg_plot({s}, "Efficiency vs output power", "Pout [W]", "efficiency [%]"), true);
    }
    int failed = 0;
    for (const auto& p : pts)
        if (!p.converged) {
            ++failed;
            err << "failed point rload=" << p.rload << ": " << p.error << "\n";
        }
    return failed ? partial_sweep : ok;
}

inline int cmd_compare(const RunConfig& c, double n, double d, double vin, bool csv, std::ostream& out,
                       std::ostream& err) {
    if (!(d > 0.0 && d < 1.0) || !(vin > 0.0) || !(n > 0.0)) {
        err << "error: need 0 < d < 1, vin > 0, n > 0\n";
        return validation;
    }
    const auto t = comparison_table(n, d, vin);
    out << (csv ? render_csv(t) : render_markdown(t));
    Writer wr(c, err);
    wr.write("compare.csv", render_csv(t), c.emit.csv);
    wr.write("report.md", render_markdown(t), c.emit.md);
    return ok;
}

struct DesignArgs {
    double vin = 30.0, vout = 1000.0, pout = 500.0;
    std::vector<double> n{1.5};
    std::optional<double> vsw_max, vd_max;
    double duty_min = 0.0, duty_max = 1.0;
    std::string score = "stress";
};

inline int cmd_design(const RunConfig& c, const DesignArgs& a, std::ostream& out, std::ostream& err) {
    OperatingTargets t{a.vin, a.vout, a.pout};
    auto errs = validate(t);
    if (!errs.empty() || a.n.empty()) {
        for (const auto& e : errs) err << "error: " << e << "\n";
        if (a.n.empty()) err << "error: no turns-ratio candidates\n";
        return validation;
    }
    DesignLimits lim{a.vsw_max, a.vd_max, a.duty_min, a.duty_max};
    DesignScore score;
    if (a.score == "loss") score = loss_score(t, c.design, c.parasitics);
    else if (a.score != "stress") {
        err << "error: unknown score '" << a.score << "'\n";
        return validation;
    }
    const auto res = design_search(t, a.n, lim, score);
    std::ostringstream md;
    md << "## Design search: " << a.vin << " V -> " << a.vout << " V, score " << a.score << "\n\n";
    if (!res.feasible()) {
        md << "no feasible design\n";
    } else {
        md << "| rank | N | D | Vsw [V] | Vd [V] | score | notes |\n|---|---|---|---|---|---|---|\n";
        int rank = 1;
        for (const auto& cand : res.ranked) {
            std::string notes;
            for (const auto& w : cand.warnings) notes += w + "; ";
            md << "| " << rank++ << " | " << detail::fmt(cand.n_ratio, 3) << " | " << detail::fmt(cand.duty, 4) << " | "
               << detail::fmt(cand.vsw, 2) << " | " << detail::fmt(cand.vd, 2) << " | " << detail::fmt(cand.score, 4)
               << " | " << notes << " |\n";
        }
    }
    out << md.str();
    Writer(c, err).write("report.md", md.str(), c.emit.md);
    return ok;
}

// Parses argv and dispatches. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"High step-up interleaved converter toolkit: closed forms, comparison and transient simulation"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string preset, config_path, mode;
    std::optional<double> vin, n, duty, fsw, lm, lk, cap, rload, rds_on, vf, esr, r_winding, tol;
    std::optional<int> spp, max_periods;
    std::optional<double> ss_tol;
    bool zero_par = false, no_csv = false, no_md = false, no_svg = false;

    auto common = [&](CLI::App* sc) {
        sc->add_option("--preset", preset, "sim or prototype");
        sc->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
        sc->add_option("--out", cfg.out_dir, "output directory");
        sc->add_option("--mode", mode, "strict_paper or consistent");
        sc->add_option("--vin", vin);
        sc->add_option("--n", n, "turns ratio");
        sc->add_option("--duty,--d", duty);
        sc->add_option("--fsw", fsw);
        sc->add_option("--lm", lm);
        sc->add_option("--lk", lk);
        sc->add_option("--cap", cap);
        sc->add_option("--rload", rload);
        sc->add_option("--rds-on", rds_on);
        sc->add_option("--vf", vf);
        sc->add_option("--esr", esr);
        sc->add_option("--r-winding", r_winding);
        sc->add_flag("--zero-parasitics", zero_par);
        sc->add_option("--steps-per-period", spp);
        sc->add_option("--max-periods", max_periods);
        sc->add_option("--ss-tol", ss_tol);
        sc->add_option("--tol", tol, "crosscheck tolerance (fraction)");
        sc->add_flag("--no-csv", no_csv);
        sc->add_flag("--no-md", no_md);
        sc->add_flag("--no-svg", no_svg);
    };

    auto* an = app.add_subcommand("analyze", "closed-form operating point and consistency audit");
    auto* au = app.add_subcommand("audit", "power-balance audit under both formula modes");
    auto* si = app.add_subcommand("simulate", "transient simulation of the builtin converter or a netlist");
    auto* sw = app.add_subcommand("sweep", "efficiency versus output power");
    auto* co = app.add_subcommand("compare", "topology comparison table");
    auto* de = app.add_subcommand("design", "solve duty and rank turns ratios");
    for (auto* sc : {an, au, si, sw, co, de}) common(sc);

    NetlistRun nr;
    si->add_option("--netlist", nr.path, "netlist file");
    si->add_option("--t-end", nr.t_end, "aperiodic run length for netlists without PWM [s]");
    si->add_option("--dt", nr.dt, "aperiodic step [s]");

    std::vector<double> powers, loads;
    sw->add_option("--powers", powers, "target output powers [W]");
    sw->add_option("--loads", loads, "load resistances [Ohm]");

    bool csv = false;
    co->add_flag("--csv", csv, "print CSV instead of markdown");

    DesignArgs da;
    std::optional<double> vout, pout, vsw_max, vd_max, dmin, dmax;
    std::vector<double> cands;
    std::string score;
    de->add_option("--vout", vout);
    de->add_option("--pout", pout);
    de->add_option("--candidates", cands, "turns-ratio candidates");
    de->add_option("--vsw-max", vsw_max);
    de->add_option("--vd-max", vd_max);
    de->add_option("--duty-min", dmin);
    de->add_option("--duty-max", dmax);
    de->add_option("--score", score, "stress or loss");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? ok : validation;
    }

    try {
        if (sw->parsed()) apply_preset(cfg, "prototype");
        if (!config_path.empty()) load_config(cfg, config_path);
        if (!preset.empty()) apply_preset(cfg, preset);
        if (!mode.empty()) cfg.formula_mode = parse_formula_mode(mode);
        auto& d = cfg.design;
        if (vin) d.vin = *vin;
        if (n) d.n_ratio = *n;
        if (duty) d.duty = *duty;
        if (fsw) d.fsw = *fsw;
        if (lm) d.lm = *lm;
        if (lk) d.lk = *lk;
        if (cap) d.cap = *cap;
        if (rload) d.rload = *rload;
        auto& p = cfg.parasitics;
        if (zero_par) p = {};
        if (rds_on) p.rds_on = *rds_on;
        if (vf) p.vf = *vf;
        if (esr) p.esr = *esr;
        if (r_winding) p.r_winding = *r_winding;
        if (auto pe = validate(p); !pe.empty()) throw Error(pe.front());
        if (spp) cfg.engine.step_per_period = *spp;
        if (max_periods) cfg.engine.max_periods = *max_periods;
        if (ss_tol) cfg.engine.ss_tolerance = *ss_tol;
        if (tol) cfg.tolerance = *tol;
        if (cfg.engine.step_per_period < 4 || cfg.engine.max_periods < 1 || !(cfg.engine.ss_tolerance > 0.0))
            throw Error("engine settings out of range");
        if (no_csv) cfg.emit.csv = false;
        if (no_md) cfg.emit.md = false;
        if (no_svg) cfg.emit.svg = false;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return validation;
    }

    try {
        if (an->parsed()) return cmd_analyze(cfg, out, err);
        if (au->parsed()) return cmd_audit(cfg, out, err);
        if (si->parsed()) return cmd_simulate(cfg, nr, out, err);
        if (sw->parsed()) return cmd_sweep(cfg, powers, loads, out, err);
        if (co->parsed())
            return cmd_compare(cfg, n.value_or(1.5), duty.value_or(0.73), vin.value_or(30.0), csv, out, err);
        if (de->parsed()) {
            da.vin = vin.value_or(30.0);
            da.vout = vout.value_or(1000.0);
            da.pout = pout.value_or(500.0);
            if (!cands.empty()) da.n = cands;
            else if (n) da.n = {*n};
            da.vsw_max = vsw_max;
            da.vd_max = vd_max;
            da.duty_min = dmin.value_or(0.0);
            da.duty_max = dmax.value_or(1.0);
            if (!score.empty()) da.score = score;
            return cmd_design(cfg, da, out, err);
        }
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << "\n";
        return nonconvergence;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return validation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return failure;
    }
    return failure;
}

}  // namespace hsconv::cli
