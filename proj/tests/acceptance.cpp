// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>

#include "hsconv/cli.hpp"

using namespace hsconv;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void need(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string f(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

FlatNetlist flat(const std::string& text) { return expand_coupled(parse(text)); }

// shared preset-point simulation for criteria 3, 4, 5, 7, 8 and 11
struct PresetRun {
    ConverterRun run;
    double seconds = 0.0;
};

const PresetRun& preset_run() {
    static const PresetRun r = [] {
        PresetRun p;
        const auto t0 = std::chrono::steady_clock::now();
        p.run = simulate_converter(preset_simulation());
        p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return p;
    }();
    return r;
}

Verdict criterion1() {
    Verdict v;
    const auto r = analyze(preset_simulation(), FormulaMode::consistent);
    const std::vector<std::pair<std::string, std::pair<double, double>>> rows{
        {"gain", {r.gain, 33.333}},     {"vout", {r.vout, 1000.0}},   {"vsw", {r.vsw, 111.11}},
        {"vd", {r.vd, 222.22}},         {"vc1", {r.vc[0], 111.11}},   {"vc2", {r.vc[1], 222.22}},
        {"vc3", {r.vc[2], 333.33}},     {"vc4", {r.vc[3], 444.44}},   {"iout", {r.iout, 1.212}},
        {"ilm", {r.ilm_avg, 20.20}},    {"iin", {r.iin_avg, 40.40}}};
    double worst = 0.0;
    for (const auto& [name, p] : rows) {
        const double d = rel(p.first, p.second);
        worst = std::max(worst, d);
        v.need(d < 0.005, name + "=" + f(p.first, 6) + " vs " + f(p.second, 6));
    }
    v.note("worst deviation " + f(100 * worst, 3) + " %");
    return v;
}

Verdict criterion2() {
    Verdict v;
    const auto d = preset_simulation();
    // power-balance oracle: Pin/Pout = (N+2)/(N+3) when the current formula uses N+2
    const double oracle = 1.0 - (d.n_ratio + 2.0) / (d.n_ratio + 3.0);
    const auto strict = audit_consistency(d, FormulaMode::strict_paper);
    const auto cons = audit_consistency(d, FormulaMode::consistent);
    v.need(std::abs(strict.imbalance - oracle) < 1e-9, "strict imbalance " + f(strict.imbalance) + " vs oracle " + f(oracle));
    v.need(std::abs(strict.imbalance - 0.22) < 0.005, "strict imbalance not ~22 %");
    v.need(cons.imbalance < 1e-3, "consistent imbalance " + f(cons.imbalance));
    std::mt19937 rng(1);
    std::uniform_real_distribution<double> un(0.5, 4.0), ud(0.05, 0.95);
    bool always = strict.has_flag(kFlagTableGain) && cons.has_flag(kFlagTableGain);
    for (int i = 0; i < 200; ++i) {
        ConverterDesign x = d;
        x.n_ratio = un(rng);
        x.duty = ud(rng);
        always = always && audit_consistency(x, i % 2 ? FormulaMode::strict_paper : FormulaMode::consistent)
                               .has_flag(kFlagTableGain);
    }
    v.need(always, "table gain flag missing");
    v.note("strict " + f(100 * strict.imbalance, 4) + " %, consistent " + f(100 * cons.imbalance, 3) + " %");
    return v;
}

Verdict criterion3() {
    Verdict v;
    const auto& p = preset_run();
    v.need(p.run.transient.steady.converged, "not converged");
    if (!p.run.op) return v;
    const auto cc = crosscheck(analyze(preset_simulation()), *p.run.op, 0.02);
    for (const auto& r : cc.rows)
        v.need(r.pass, r.quantity + " " + f(r.measured, 5) + " vs " + f(r.analytic, 5) + " (" + f(100 * r.deviation, 3) +
                           " %)");
    // the command-line path must agree
    const char* argv[] = {"hsconv", "simulate", "--preset", "sim"};
    std::ostringstream out, err;
    const int code = cli::run(4, argv, out, err);
    v.need(code == 0, "simulate --preset sim exit code " + std::to_string(code));
    v.need(p.seconds < 60.0, "runtime " + f(p.seconds) + " s");
    v.note(std::to_string(p.run.transient.steady.periods_run) + " periods, " + f(p.seconds, 3) + " s");
    return v;
}

Verdict criterion4() {
    Verdict v;
    const auto& p = preset_run();
    if (!p.run.op) {
        v.need(false, "no converged cycle");
        return v;
    }
    const auto& w = p.run.transient.steady.final_period;
    const auto d = preset_simulation();
    const double T = 1.0 / d.fsw;
    double worst_vs = 0.0, worst_q = 0.0;
    for (const auto& x : p.run.builtin.roles.coupled) {
        const auto parts = detail::coupled_parts(p.run.flat, x);
        // relative to the on-interval volt-seconds Vin*D*T
        worst_vs = std::max(worst_vs, std::abs(volt_seconds(p.run.flat, w, parts.lm)) / (d.vin * d.duty * T));
    }
    for (int k = 0; k < 4; ++k) {
        const auto& c = p.run.builtin.roles.caps[k];
        worst_q = std::max(worst_q, std::abs(net_charge(w, c)) / (d.cap * p.run.op->vc[k].avg));
    }
    const auto e = energy_audit(p.run.flat, w);
    v.need(worst_vs < 1e-3, "volt-second " + f(worst_vs));
    v.need(worst_q < 1e-3, "charge " + f(worst_q));
    v.need(e.imbalance < 5e-3, "energy " + f(e.imbalance));
    v.note("volt-second " + f(worst_vs, 3) + ", charge " + f(worst_q, 3) + ", energy " + f(e.imbalance, 3));
    return v;
}

Verdict criterion5() {
    Verdict v;
    const auto& p = preset_run();
    const auto& w = p.run.transient.steady.final_period;
    const auto m = mode_timeline(w, "g1", "g2");
    const double D = preset_simulation().duty;
    const double step = 1.0 / EngineConfig{}.step_per_period;
    std::vector<Mode> seq;
    std::string text;
    for (const auto& x : m) {
        seq.push_back(x.mode);
        text += std::string(text.empty() ? "" : " ") + to_string(x.mode) + "(" + f(x.fraction, 4) + ")";
    }
    // 1 -> 2 -> 1 -> 3, up to rotation
    const std::vector<Mode> want{Mode::mode1, Mode::mode2, Mode::mode1, Mode::mode3};
    bool cyclic = false;
    if (seq.size() == 4)
        for (int r = 0; r < 4 && !cyclic; ++r) {
            bool same = true;
            for (int i = 0; i < 4; ++i) same = same && seq[(i + r) % 4] == want[i];
            cyclic = same;
        }
    v.need(cyclic, "sequence " + text);
    double overlap = 0.0;
    for (const auto& x : m) {
        if (x.mode == Mode::mode1) overlap += x.fraction;
        else v.need(std::abs(x.fraction - (1 - D)) <= step, std::string(to_string(x.mode)) + " dwell " + f(x.fraction));
    }
    v.need(std::abs(overlap - (2 * D - 1)) <= step, "overlap dwell " + f(overlap));
    v.note(text);
    return v;
}

Verdict criterion6() {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    {
        const auto w = run_fixed(flat("V v in 0 1\nR r in out 1k\nC c out 0 1u\n"), 1e-3, 1e-6);
        const double want = 1.0 - std::exp(-1.0);
        const double d = rel(w["v(out)"].back(), want);
        v.need(d < 1e-3, "RC " + f(d));
        v.note("RC " + f(d, 2));
    }
    {
        const auto net = flat(
            "V vin in 0 10\nL l1 in sw 1m ic=0.625\nS s1 sw 0 gate=g1\nD d1 sw out\nC cout out 0 100u ic=25\n"
            "R rload out 0 100\nPWM g1 f=50k d=0.6 phase=0\n");
        EngineConfig cfg;
        cfg.step_per_period = 500;
        const auto r = run_transient(net, cfg);
        const double g = stats(r.steady.final_period.t, r.steady.final_period["v(out)"]).avg / 10.0;
        v.need(r.steady.converged && rel(g, 2.5) < 0.01, "boost gain " + f(g));
        v.note("boost " + f(g, 5));
    }
    auto sine = [](const std::string& p, double amp, double freq) {
        return Element{ElementKind::V, "vin", {p, "0"}, {{"value", 0.0}, {"amp", amp}, {"freq", freq}}, {}};
    };
    {
        auto net = flat("X x1 in 0 s 0 n=2 lm=1 lk=1n\nR r s 0 100\n");
        net.elements.insert(net.elements.begin(), sine("in", 1.0, 10e3));
        const auto w = run_fixed(net, 6e-4, 1e-7);
        std::vector<double> t, vi, ii;
        for (std::size_t i = 0; i < w.t.size(); ++i)
            if (w.t[i] >= 1e-4 - 1e-12) {
                t.push_back(w.t[i]);
                vi.push_back(w["v(in)"][i]);
                ii.push_back(w["i(vin)"][i]);
            }
        const double z = stats(t, vi).rms / stats(t, ii).rms;
        v.need(rel(z, 25.0) < 1e-3, "transformer " + f(z));
        v.note("R/N^2 " + f(z, 6));
    }
    {
        auto net = flat("D d1 in out\nR r out 0 1k\n");
        net.elements.insert(net.elements.begin(), sine("in", 10.0, 50.0));
        const auto w = run_fixed(net, 0.04, 1e-5);
        const double leak = 1e3 / (1e3 + kDefaultRoff);
        double worst = 0.0;
        for (std::size_t i = 0; i < w.t.size(); ++i)
            if (w["v(in)"][i] < 0) worst = std::max(worst, std::abs(w["v(out)"][i]) - std::abs(w["v(in)"][i]) * leak);
        v.need(worst < 1e-9, "rectifier leak excess " + f(worst));
        v.note("rectifier ok");
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.need(s < 10.0, "runtime " + f(s) + " s");
    v.note(f(s, 3) + " s");
    return v;
}

Verdict criterion7() {
    Verdict v;
    const auto& p = preset_run();
    if (!p.run.op) {
        v.need(false, "no converged cycle");
        return v;
    }
    const auto r = ripple_report(p.run.op->iin, p.run.op->ilm1, p.run.op->ilm2);
    const bool each = r.iin_pkpk < p.run.op->ilm1.pkpk && r.iin_pkpk < p.run.op->ilm2.pkpk;
    v.need(each && r.reduction_factor > 1.0, "reduction factor " + f(r.reduction_factor));
    v.note("iin " + f(r.iin_pkpk) + " A, phase " + f(r.phase_pkpk) + " A, factor " + f(r.reduction_factor));
    return v;
}

Verdict criterion8() {
    Verdict v;
    const auto& p = preset_run();
    const auto& w = p.run.transient.steady.final_period;
    for (const auto& d : p.run.builtin.roles.diodes) {
        const auto z = zcs_check(w.t, w["i(" + d + ")"], d);
        v.need(z.conducts && z.zcs, d + " turn-off ratio " + f(z.turnoff_current_ratio));
        v.note(d + " " + f(z.turnoff_current_ratio, 3));
    }
    return v;
}

Verdict criterion9() {
    Verdict v;
    const auto [design, par] = preset_prototype();
    const auto run = simulate_converter(design);
    if (!run.op) {
        v.need(false, "prototype point did not converge");
        return v;
    }
    const auto l = conduction_losses(*run.op, par);
    v.note("inductor " + f(l.p_inductor) + " W, diode " + f(l.p_diode) + " W, capacitor " + f(l.p_capacitor) +
           " W, switch " + f(l.p_switch) + " W");
    v.need(l.p_inductor >= l.p_diode, "inductor < diode");
    v.need(l.p_diode >= l.p_capacitor, "diode < capacitor");
    v.need(l.p_capacitor >= l.p_switch, "capacitor " + f(l.p_capacitor) + " W < switch " + f(l.p_switch) + " W");
    const auto pts = efficiency_sweep(design, par, loads_for_powers(design, {100, 200, 300, 400, 500}));
    double peak = 0.0;
    std::string effs;
    for (const auto& pt : pts) {
        v.need(pt.converged, "sweep point rload=" + f(pt.rload) + " failed");
        v.need(pt.efficiency() >= 0.90 && pt.efficiency() <= 0.995, "efficiency " + f(pt.efficiency()) + " out of band");
        peak = std::max(peak, pt.efficiency());
        effs += (effs.empty() ? "" : " ") + f(pt.pout(), 3) + "W:" + f(100 * pt.efficiency(), 4) + "%";
    }
    v.need(peak >= 0.93 && peak <= 0.99, "peak efficiency " + f(100 * peak, 4) + " % outside [93, 99] %");
    v.note("sweep " + effs);
    return v;
}

Verdict criterion10() {
    Verdict v;
    std::mt19937 rng(10);
    std::uniform_real_distribution<double> mant(0.001, 999.0);
    std::uniform_int_distribution<int> expo(-12, 6), node(0, 4), kind(0, 6);
    int mismatches = 0;
    for (int trial = 0; trial < 300; ++trial) {
        Netlist nl;
        nl.pwm.gates = {{"g", 1e5, 0.5, 0.0}};
        for (int i = 0; i < 1 + trial % 10; ++i) {
            Element e;
            e.kind = static_cast<ElementKind>(kind(rng));
            e.name = "e" + std::to_string(i);
            const int arity = e.kind == ElementKind::X ? 4 : 2;
            for (int k = 0; k < arity; ++k) e.nodes.push_back(k == 1 ? "0" : "n" + std::to_string(node(rng)));
            auto val = [&] { return mant(rng) * std::pow(10.0, expo(rng)); };
            switch (e.kind) {
                case ElementKind::V:
                case ElementKind::R:
                case ElementKind::L: e.params["value"] = val(); break;
                case ElementKind::C: e.params = {{"value", val()}, {"ic", -val()}}; break;
                case ElementKind::S: e.gate = "g"; break;
                case ElementKind::D: e.params["vf"] = val(); break;
                case ElementKind::X: e.params = {{"n", val()}, {"lm", val()}, {"lk", val()}}; break;
                default: break;
            }
            nl.elements.push_back(e);
        }
        if (!(parse(emit(nl)) == nl)) ++mismatches;
    }
    v.need(mismatches == 0, std::to_string(mismatches) + " parse/emit mismatches");

    const auto c = census(builtin_proposed_converter(preset_simulation()).netlist.elements);
    v.need(c.s == 2 && c.d == 4 && c.c == 4 && c.x == 2, "builtin census");

    // hand arithmetic at N=1.5, D=0.4, Vin=30 (1-D = 0.6)
    struct Hand {
        TopologyId id;
        double gain, vsw, vd;
    };
    const Hand hand[] = {{TopologyId::ref5, 20.0 / 3.0, 50.0, 150.0},
                         {TopologyId::ref6, 55.0 / 6.0, 50.0, 150.0},
                         {TopologyId::ref10, 5.0, 150.0, 150.0},
                         {TopologyId::ref11, 25.0 / 3.0, 50.0, 150.0},
                         {TopologyId::proposed, 15.0, 50.0, 100.0}};
    for (const auto& h : hand) {
        const auto r = topology_row(h.id, 1.5, 0.4, 30.0);
        const bool ok = r.defined() && rel(*r.gain, h.gain) < 1e-9 && rel(*r.vsw, h.vsw) < 1e-9 && rel(*r.vd, h.vd) < 1e-9;
        v.need(ok, std::string(to_string(h.id)) + " mismatch");
    }
    v.note("300 generated netlists, census 2S/4D/4C/2X, 5 comparison rows");
    return v;
}

Verdict criterion11() {
    Verdict v;
    const auto& p = preset_run();
    EngineConfig fine;
    fine.step_per_period = 2 * EngineConfig{}.step_per_period;
    const auto run2 = simulate_converter(preset_simulation(), fine);
    if (!p.run.op || !run2.op) {
        v.need(false, "no converged cycle");
        return v;
    }
    const auto a = analyze(preset_simulation());
    const auto c1 = crosscheck(a, *p.run.op, 1.0), c2 = crosscheck(a, *run2.op, 1.0);
    double worst = 0.0;
    for (std::size_t i = 0; i < c1.rows.size(); ++i) {
        const double d = rel(c2.rows[i].measured, c1.rows[i].measured);
        worst = std::max(worst, d);
        v.need(d < 2e-3, c1.rows[i].quantity + " moved " + f(100 * d, 3) + " %");
    }
    v.note("worst change " + f(100 * worst, 3) + " % over all crosschecked quantities");
    return v;
}

}  // namespace

int main() {
    const std::vector<std::function<Verdict()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                         criterion5, criterion6, criterion7, criterion8,
                                                         criterion9, criterion10, criterion11};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i]();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (i < 2) v.need(s < 1.0, "runtime over 1 s");
        if (!v.pass) ++failed;
        std::printf("%s criterion %zu: %s [%.2f s]\n", v.pass ? "PASS" : "FAIL", i + 1, v.detail.c_str(), s);
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
