#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "hsconv/analytic.hpp"
#include "hsconv/engine.hpp"
#include "hsconv/model.hpp"
#include "hsconv/netlist.hpp"

namespace hsconv {

struct SignalStats {
    double avg = 0.0, rms = 0.0, min = 0.0, max = 0.0, pkpk = 0.0;
    bool operator==(const SignalStats&) const = default;
};

// Time-weighted (trapezoidal) mean and RMS; min/max over the samples.
inline SignalStats stats(const std::vector<double>& t, const std::vector<double>& y) {
    if (y.empty() || t.size() != y.size()) throw Error("stats needs a non-empty series with matching time axis");
    SignalStats s;
    s.min = *std::min_element(y.begin(), y.end());
    s.max = *std::max_element(y.begin(), y.end());
    s.pkpk = s.max - s.min;
    const double span = t.back() - t.front();
    if (y.size() == 1 || !(span > 0.0)) {
        s.avg = y.front();
        s.rms = std::abs(y.front());
        return s;
    }
    double a = 0.0, q = 0.0;
    for (std::size_t i = 1; i < y.size(); ++i) {
        const double dt = t[i] - t[i - 1];
        a += 0.5 * (y[i] + y[i - 1]) * dt;
        q += 0.5 * (y[i] * y[i] + y[i - 1] * y[i - 1]) * dt;
    }
    s.avg = std::clamp(a / span, s.min, s.max);
    s.rms = std::max(std::sqrt(q / span), std::abs(s.avg));
    return s;
}

struct MeasuredOperatingPoint {
    SignalStats vout, vsw1, vsw2;
    std::array<SignalStats, 4> vd;  // reverse voltage (cathode - anode)
    std::array<SignalStats, 4> vc;
    SignalStats iin, ilm1, ilm2, iout;
    std::array<SignalStats, 4> id, ic;
    SignalStats isw1, isw2;
    // winding currents: primary (leakage branch) and secondary, per coupled inductor
    SignalStats iwp1, iwp2, iws1, iws2;
    std::array<double, 4> vd_stress{};      // max reverse voltage, post-breakpoint samples excluded
    std::array<double, 4> vd_stress_raw{};  // unfiltered
    double n_ratio = 0.0;
    double duty_effective = 0.0;
    double fsw = 0.0;

    // named view used by the CSV and markdown emitters
    std::vector<std::pair<std::string, SignalStats*>> signals() {
        std::vector<std::pair<std::string, SignalStats*>> v{{"vout", &vout}, {"vsw1", &vsw1}, {"vsw2", &vsw2}};
        for (int k = 0; k < 4; ++k) v.push_back({"vd" + std::to_string(k + 1), &vd[k]});
        for (int k = 0; k < 4; ++k) v.push_back({"vc" + std::to_string(k + 1), &vc[k]});
        v.insert(v.end(), {{"iin", &iin}, {"ilm1", &ilm1}, {"ilm2", &ilm2}, {"iout", &iout}});
        for (int k = 0; k < 4; ++k) v.push_back({"id" + std::to_string(k + 1), &id[k]});
        v.insert(v.end(), {{"isw1", &isw1}, {"isw2", &isw2}});
        for (int k = 0; k < 4; ++k) v.push_back({"ic" + std::to_string(k + 1), &ic[k]});
        v.insert(v.end(), {{"iwp1", &iwp1}, {"iwp2", &iwp2}, {"iws1", &iws1}, {"iws2", &iws2}});
        return v;
    }
    std::vector<std::pair<std::string, double*>> scalars() {
        std::vector<std::pair<std::string, double*>> v;
        for (int k = 0; k < 4; ++k) v.push_back({"vd" + std::to_string(k + 1) + "_stress", &vd_stress[k]});
        for (int k = 0; k < 4; ++k) v.push_back({"vd" + std::to_string(k + 1) + "_stress_raw", &vd_stress_raw[k]});
        v.insert(v.end(), {{"n_ratio", &n_ratio}, {"duty_effective", &duty_effective}, {"fsw", &fsw}});
        return v;
    }
    bool operator==(const MeasuredOperatingPoint&) const = default;
};

namespace detail {

// the two inductors and the transformer generated from one coupled inductor
struct CoupledParts {
    std::string lk, lm, t;
    double n = 0.0;
};

inline CoupledParts coupled_parts(const FlatNetlist& flat, const std::string& x) {
    CoupledParts p;
    for (const auto& e : flat.elements) {
        auto it = flat.provenance.find(e.name);
        if (it == flat.provenance.end() || it->second != x) continue;
        if (e.kind == ElementKind::T) {
            p.t = e.name;
            p.n = e.params.at("n");
        } else if (e.kind == ElementKind::L) {
            (flat.internal_nodes.count(e.nodes[0]) ? p.lm : p.lk) = e.name;
        }
    }
    if (p.lk.empty() || p.lm.empty() || p.t.empty()) throw Error("no expanded coupled inductor '" + x + "'");
    return p;
}

// sample mask: false for the first `frac` of each segment following a breakpoint
inline std::vector<char> settled_mask(const WaveformSet& w, double frac) {
    std::vector<char> keep(w.t.size(), 1);
    if (w.breakpoints.empty()) return keep;
    std::vector<double> bp = w.breakpoints;
    std::sort(bp.begin(), bp.end());
    for (std::size_t b = 0; b < bp.size(); ++b) {
        const double start = bp[b];
        const double end = b + 1 < bp.size() ? bp[b + 1] : w.t.back();
        const double cut = start + frac * (end - start);
        for (std::size_t i = 0; i < w.t.size(); ++i)
            if (w.t[i] > start && w.t[i] <= cut) keep[i] = 0;
    }
    return keep;
}

}  // namespace detail

// Operating point over a converged final period of the builtin converter.
inline MeasuredOperatingPoint extract_operating_point(const SteadyResult& steady, const FlatNetlist& flat,
                                                      const ConverterRoles& roles = {}) {
    if (!steady.converged) throw Error("operating point needs a converged steady state");
    const WaveformSet& w = steady.final_period;
    if (w.t.size() < 2) throw Error("final period has too few samples");
    MeasuredOperatingPoint op;
    auto st = [&](const std::vector<double>& y) { return stats(w.t, y); };
    auto el = [&](const std::string& name) -> const Element& {
        const Element* e = flat.find(name);
        if (!e) throw Error("netlist has no element '" + name + "'");
        return *e;
    };
    auto across = [&](const std::string& name) {
        const Element& e = el(name);
        return w.voltage(e.nodes[0], e.nodes[1]);
    };
    auto neg = [](std::vector<double> y) {
        for (auto& v : y) v = -v;
        return y;
    };

    op.vout = st(w.voltage(roles.output_node));
    op.vsw1 = st(across(roles.switches[0]));
    op.vsw2 = st(across(roles.switches[1]));
    op.iin = st(neg(w["i(" + roles.source + ")"]));
    op.iout = st(w["i(" + roles.load + ")"]);
    op.isw1 = st(w["i(" + roles.switches[0] + ")"]);
    op.isw2 = st(w["i(" + roles.switches[1] + ")"]);
    const auto keep = detail::settled_mask(w, 0.05);
    for (int k = 0; k < 4; ++k) {
        const auto rev = neg(across(roles.diodes[k]));
        op.vd[k] = st(rev);
        op.vd_stress_raw[k] = op.vd[k].max;
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < rev.size(); ++i)
            if (keep[i]) m = std::max(m, rev[i]);
        op.vd_stress[k] = std::isfinite(m) ? m : op.vd[k].max;
        op.id[k] = st(w["i(" + roles.diodes[k] + ")"]);
        op.vc[k] = st(across(roles.caps[k]));
        op.ic[k] = st(w["i(" + roles.caps[k] + ")"]);
    }
    const auto x1 = detail::coupled_parts(flat, roles.coupled[0]);
    const auto x2 = detail::coupled_parts(flat, roles.coupled[1]);
    op.ilm1 = st(w["i(" + x1.lm + ")"]);
    op.ilm2 = st(w["i(" + x2.lm + ")"]);
    op.iwp1 = st(w["i(" + x1.lk + ")"]);
    op.iwp2 = st(w["i(" + x2.lk + ")"]);
    op.iws1 = st(w["i(" + x1.t + ".s)"]);
    op.iws2 = st(w["i(" + x2.t + ".s)"]);
    op.n_ratio = x1.n;
    op.fsw = flat.pwm.fsw();
    const Element& s1 = el(roles.switches[0]);
    op.duty_effective = stats(w.t, w["gate(" + s1.gate + ")"]).avg;
    return op;
}

struct LossBreakdown {
    double p_switch = 0.0, p_diode = 0.0, p_capacitor = 0.0, p_inductor = 0.0;
    double p_total = 0.0;
    double pout = 0.0;
    double efficiency = 0.0;
    DeviceParasitics parasitics;
    bool operator==(const LossBreakdown&) const = default;
};

// p_inductor is winding copper loss, an extension beyond the three device classes.
inline LossBreakdown conduction_losses(const MeasuredOperatingPoint& op, const DeviceParasitics& par) {
    if (!validate(par).empty()) throw Error("parasitics must be non-negative");
    LossBreakdown l;
    l.parasitics = par;
    l.p_switch = (op.isw1.rms * op.isw1.rms + op.isw2.rms * op.isw2.rms) * par.rds_on;
    for (int k = 0; k < 4; ++k) {
        l.p_capacitor += op.ic[k].rms * op.ic[k].rms * par.esr;
        l.p_diode += op.id[k].avg * par.vf;
    }
    const double n = op.n_ratio;
    for (const auto* p : {&op.iwp1, &op.iwp2}) l.p_inductor += p->rms * p->rms * par.r_winding;
    for (const auto* s : {&op.iws1, &op.iws2}) l.p_inductor += (n * s->rms) * (n * s->rms) * par.r_winding;
    l.p_total = l.p_switch + l.p_diode + l.p_capacitor + l.p_inductor;
    l.pout = op.vout.avg * op.iout.avg;
    l.efficiency = l.pout > 0.0 ? l.pout / (l.pout + l.p_total) : 0.0;
    return l;
}

// ---------------------------------------------------------------------------
// builtin converter run

struct ConverterRun {
    ConverterDesign design;
    BuiltinConverter builtin;
    FlatNetlist flat;
    TransientResult transient;
    std::optional<MeasuredOperatingPoint> op;
};

// Warm start: capacitor ic= from the netlist; inductor currents from the ideal power balance.
inline EngineConfig warm_start(const ConverterDesign& d, const FlatNetlist& flat, EngineConfig cfg,
                               const ConverterRoles& roles = {}) {
    const double vo = builtin_gain(d) * d.vin;
    const double iphase = vo * vo / d.rload / d.vin / 2.0;
    for (const auto& x : roles.coupled) {
        const auto p = detail::coupled_parts(flat, x);
        cfg.initial.emplace(p.lk, iphase);
        cfg.initial.emplace(p.lm, iphase);
    }
    return cfg;
}

inline ConverterRun simulate_converter(const ConverterDesign& d, const EngineConfig& cfg = {}) {
    ConverterRun r;
    r.design = d;
    r.builtin = builtin_proposed_converter(d);
    r.flat = expand_coupled(r.builtin.netlist);
    r.transient = run_transient(r.flat, warm_start(d, r.flat, cfg, r.builtin.roles));
    if (r.transient.steady.converged) r.op = extract_operating_point(r.transient.steady, r.flat, r.builtin.roles);
    return r;
}

struct SweepPoint {
    double rload = 0.0;
    bool converged = false;
    std::string error;
    LossBreakdown losses;
    double pout() const { return losses.pout; }
    double efficiency() const { return losses.efficiency; }
};

// One simulation per load resistance, run concurrently; failed points are kept and flagged.
inline std::vector<SweepPoint> efficiency_sweep(const ConverterDesign& design, const DeviceParasitics& par,
                                                const std::vector<double>& loads, const EngineConfig& cfg = {},
                                                unsigned threads = 0) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::vector<SweepPoint> pts(loads.size());
    auto work = [&](std::size_t i) {
        SweepPoint& p = pts[i];
        p.rload = loads[i];
        try {
            ConverterDesign d = design;
            d.rload = loads[i];
            auto run = simulate_converter(d, cfg);
            p.converged = run.transient.steady.converged;
            if (p.converged) p.losses = conduction_losses(*run.op, par);
            else p.error = "no steady state after " + std::to_string(run.transient.steady.periods_run) + " periods";
        } catch (const std::exception& e) {
            p.error = e.what();
        }
    };
    std::vector<std::future<void>> inflight;
    for (std::size_t i = 0; i < loads.size(); ++i) {
        if (inflight.size() >= threads) {
            inflight.front().get();
            inflight.erase(inflight.begin());
        }
        inflight.push_back(std::async(std::launch::async, work, i));
    }
    for (auto& f : inflight) f.get();
    std::stable_sort(pts.begin(), pts.end(), [](const SweepPoint& a, const SweepPoint& b) {
        if (a.converged != b.converged) return a.converged;
        return a.pout() < b.pout();
    });
    return pts;
}

// load resistances that put the builtin network near the requested output powers
inline std::vector<double> loads_for_powers(const ConverterDesign& d, const std::vector<double>& powers) {
    const double vo = builtin_gain(d) * d.vin;
    std::vector<double> r;
    for (double p : powers) {
        if (!(p > 0.0)) throw Error("sweep powers must be positive");
        r.push_back(vo * vo / p);
    }
    return r;
}

// ---------------------------------------------------------------------------
// verdicts

struct ZcsVerdict {
    std::string name;
    bool conducts = false;
    bool zcs = false;
    double turnoff_current_ratio = 0.0;  // worst interval
    int intervals = 0;
};

// Conduction means i above 1e-3 of the series peak. Intervals wrapping the window edge are joined.
// The current at conduction end is the last two conducting samples extrapolated one step, floored at 0,
// so a ramp reaching zero between samples reads 0 while a current chopped at its peak reads 1.
inline ZcsVerdict zcs_check(const std::vector<double>& t, const std::vector<double>& i, const std::string& name = {}) {
    ZcsVerdict v;
    v.name = name;
    if (i.empty() || t.size() != i.size()) return v;
    const double peak = *std::max_element(i.begin(), i.end());
    if (!(peak > 0.0)) return v;
    const double thr = 1e-3 * peak;
    const std::size_t n = i.size();
    std::vector<char> on(n);
    for (std::size_t k = 0; k < n; ++k) on[k] = i[k] > thr;
    // the last sample repeats the first in a closed period; start scanning at an off sample
    std::size_t start = 0;
    while (start < n && on[start]) ++start;
    if (start == n) {
        v.conducts = true;
        v.intervals = 1;
        v.turnoff_current_ratio = 1.0;
        return v;
    }
    v.conducts = true;
    v.zcs = true;
    double ipk = 0.0;
    bool inside = false;
    int count = 0;
    std::size_t prev = start, prev2 = start;
    for (std::size_t s = 1; s <= n; ++s) {
        const std::size_t k = (start + s) % n;
        if (on[k]) {
            ipk = inside ? std::max(ipk, i[k]) : i[k];
            count = inside ? count + 1 : 1;
            inside = true;
        } else if (inside) {
            const double iend = count > 1 ? std::max(0.0, 2.0 * i[prev] - i[prev2]) : i[prev];
            const double ratio = iend / ipk;
            v.turnoff_current_ratio = std::max(v.turnoff_current_ratio, ratio);
            if (!(ratio < 0.05)) v.zcs = false;
            ++v.intervals;
            inside = false;
        }
        prev2 = prev;
        prev = k;
    }
    return v;
}

struct RippleReport {
    double iin_pkpk = 0.0;
    double phase_pkpk = 0.0;
    double reduction_factor = 0.0;
};

inline RippleReport ripple_report(const SignalStats& iin, const SignalStats& ilm1, const SignalStats& ilm2) {
    RippleReport r;
    r.iin_pkpk = iin.pkpk;
    r.phase_pkpk = std::max(ilm1.pkpk, ilm2.pkpk);
    r.reduction_factor = r.iin_pkpk > 0.0 ? r.phase_pkpk / r.iin_pkpk : std::numeric_limits<double>::infinity();
    return r;
}

struct CrosscheckRow {
    std::string quantity;
    double analytic = 0.0;
    double measured = 0.0;
    double deviation = 0.0;
    bool pass = false;
};

struct CrosscheckTable {
    double tolerance = 0.0;
    std::vector<CrosscheckRow> rows;
    bool pass() const {
        return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const CrosscheckRow& r) { return r.pass; });
    }
};

// Quantities: vout avg, vsw max, vd max (filtered), vc1..4 avg, iin avg, ilm avg (mean of phases), iout avg.
inline CrosscheckTable crosscheck(const AnalyticReport& a, const MeasuredOperatingPoint& m, double tolerance) {
    CrosscheckTable t;
    t.tolerance = tolerance;
    auto add = [&](std::string q, double ana, double meas) {
        const double dev = ana != 0.0 ? std::abs(meas - ana) / std::abs(ana) : std::abs(meas);
        t.rows.push_back({std::move(q), ana, meas, dev, dev < tolerance});
    };
    add("vout", a.vout, m.vout.avg);
    add("vsw", a.vsw, std::max(m.vsw1.max, m.vsw2.max));
    add("vd", a.vd, *std::max_element(m.vd_stress.begin(), m.vd_stress.end()));
    for (int k = 0; k < 4; ++k) add("vc" + std::to_string(k + 1), a.vc[k], m.vc[k].avg);
    add("iin", a.iin_avg, m.iin.avg);
    add("ilm", a.ilm_avg, 0.5 * (m.ilm1.avg + m.ilm2.avg));
    add("iout", a.iout, m.iout.avg);
    return t;
}

// measured point from an analytic report, for self-comparison and analytic loss estimates
inline MeasuredOperatingPoint measured_from_analytic(const AnalyticReport& a, const ConverterDesign& d) {
    auto dc = [](double v) { return SignalStats{v, std::abs(v), v, v, 0.0}; };
    MeasuredOperatingPoint m;
    m.vout = dc(a.vout);
    m.vsw1 = m.vsw2 = dc(a.vsw);
    for (int k = 0; k < 4; ++k) {
        m.vc[k] = dc(a.vc[k]);
        m.vd[k] = dc(a.vd);
        m.vd_stress[k] = m.vd_stress_raw[k] = a.vd;
        m.id[k] = dc(a.iout);
    }
    m.iin = dc(a.iin_avg);
    m.ilm1 = m.ilm2 = dc(a.ilm_avg);
    m.iout = dc(a.iout);
    // flat-top estimates: each switch carries its phase current while on
    const double isw_rms = a.ilm_avg * std::sqrt(d.duty);
    m.isw1 = m.isw2 = SignalStats{a.ilm_avg * d.duty, isw_rms, 0.0, a.ilm_avg, a.ilm_avg};
    // each pump capacitor passes the output charge once per period in an off interval
    const double ic_rms = a.iout / std::sqrt(1.0 - d.duty);
    for (auto& c : m.ic) c = SignalStats{0.0, ic_rms, -ic_rms, ic_rms, 2.0 * ic_rms};
    m.iwp1 = m.iwp2 = dc(a.ilm_avg);
    m.n_ratio = d.n_ratio;
    m.duty_effective = d.duty;
    m.fsw = d.fsw;
    return m;
}

// loss-based score for design_search: conduction losses of the analytic estimate
inline DesignScore loss_score(const OperatingTargets& t, const ConverterDesign& base, const DeviceParasitics& par) {
    return [t, base, par](const DesignCandidate& c) {
        ConverterDesign d = base;
        d.vin = t.vin;
        d.n_ratio = c.n_ratio;
        d.duty = c.duty;
        d.rload = t.vout_target * t.vout_target / t.pout_target;
        return conduction_losses(measured_from_analytic(analyze(d), d), par).p_total;
    };
}

// ---------------------------------------------------------------------------
// reports

namespace detail {
inline std::string num(const SignalStats& s, int prec) {
    return fmt(s.avg, prec) + " | " + fmt(s.rms, prec) + " | " + fmt(s.min, prec) + " | " + fmt(s.max, prec) +
           " | " + fmt(s.pkpk, prec);
}
}  // namespace detail

inline std::string to_markdown(MeasuredOperatingPoint op) {
    std::ostringstream os;
    os << "## Simulated operating point (final period)\n\n"
       << "| signal | avg | rms | min | max | pk-pk |\n|---|---|---|---|---|---|\n";
    for (auto& [name, s] : op.signals()) os << "| " << name << " | " << detail::num(*s, 3) << " |\n";
    os << "\n| scalar | value |\n|---|---|\n";
    for (auto& [name, v] : op.scalars()) os << "| " << name << " | " << detail::fmt(*v, 4) << " |\n";
    os << "\nDiode stress excludes the first 5% of each inter-breakpoint segment; `_raw` is unfiltered.\n";
    return os.str();
}

inline std::string to_markdown(const LossBreakdown& l) {
    using detail::fmt;
    std::ostringstream os;
    os << "## Conduction losses\n\n"
       << "Parasitics: rds_on=" << fmt(l.parasitics.rds_on * 1e3, 3) << " mOhm, vf=" << fmt(l.parasitics.vf, 3)
       << " V, esr=" << fmt(l.parasitics.esr * 1e3, 3) << " mOhm, r_winding=" << fmt(l.parasitics.r_winding * 1e3, 3)
       << " mOhm\n\n"
       << "| class | loss [W] |\n|---|---|\n"
       << "| switch | " << fmt(l.p_switch, 4) << " |\n"
       << "| diode | " << fmt(l.p_diode, 4) << " |\n"
       << "| capacitor | " << fmt(l.p_capacitor, 4) << " |\n"
       << "| inductor (winding copper, extension) | " << fmt(l.p_inductor, 4) << " |\n"
       << "| total | " << fmt(l.p_total, 4) << " |\n"
       << "| output power | " << fmt(l.pout, 3) << " |\n"
       << "| efficiency | " << fmt(100.0 * l.efficiency, 3) << " % |\n";
    return os.str();
}

inline std::string to_markdown(const CrosscheckTable& t) {
    using detail::fmt;
    std::ostringstream os;
    os << "## Crosscheck against closed form (tolerance " << fmt(100.0 * t.tolerance, 2) << " %)\n\n"
       << "| quantity | closed form | simulated | deviation | verdict |\n|---|---|---|---|---|\n";
    for (const auto& r : t.rows)
        os << "| " << r.quantity << " | " << fmt(r.analytic, 3) << " | " << fmt(r.measured, 3) << " | "
           << fmt(100.0 * r.deviation, 3) << " % | " << (r.pass ? "pass" : "FAIL") << " |\n";
    os << "\nOverall: " << (t.pass() ? "pass" : "FAIL") << "\n";
    return os.str();
}

inline std::string to_markdown(const std::vector<ZcsVerdict>& zcs, const RippleReport& rip) {
    using detail::fmt;
    std::ostringstream os;
    os << "## Verdicts\n\n| diode | conduction intervals | turn-off ratio | ZCS |\n|---|---|---|---|\n";
    for (const auto& v : zcs)
        os << "| " << v.name << " | " << v.intervals << " | " << fmt(v.turnoff_current_ratio, 4) << " | "
           << (!v.conducts ? "no conduction" : v.zcs ? "yes" : "no") << " |\n";
    os << "\nInput ripple " << fmt(rip.iin_pkpk, 4) << " A pk-pk, phase ripple " << fmt(rip.phase_pkpk, 4)
       << " A pk-pk, reduction factor " << fmt(rip.reduction_factor, 3) << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// CSV tables (shortest round-trip number formatting)

inline std::string op_to_csv(MeasuredOperatingPoint op) {
    std::string s = "quantity,avg,rms,min,max,pkpk\n";
    for (auto& [name, st] : op.signals())
        s += name + "," + detail::num(st->avg) + "," + detail::num(st->rms) + "," + detail::num(st->min) + "," +
             detail::num(st->max) + "," + detail::num(st->pkpk) + "\n";
    for (auto& [name, v] : op.scalars()) s += name + "," + detail::num(*v) + ",,,,\n";
    return s;
}

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.push_back("");
    return f;
}
inline double parse_num(const std::string& s) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw Error("bad number '" + s + "' in CSV");
    return v;
}
}  // namespace detail

inline MeasuredOperatingPoint op_from_csv(const std::string& text) {
    MeasuredOperatingPoint op;
    auto sig = op.signals();
    auto sca = op.scalars();
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    if (line != "quantity,avg,rms,min,max,pkpk") throw Error("op CSV: unexpected header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv(line);
        if (f.size() != 6) throw Error("op CSV: expected 6 fields in '" + line + "'");
        bool found = false;
        for (auto& [name, st] : sig)
            if (name == f[0]) {
                *st = {detail::parse_num(f[1]), detail::parse_num(f[2]), detail::parse_num(f[3]),
                       detail::parse_num(f[4]), detail::parse_num(f[5])};
                found = true;
            }
        for (auto& [name, v] : sca)
            if (name == f[0]) {
                *v = detail::parse_num(f[1]);
                found = true;
            }
        if (!found) throw Error("op CSV: unknown quantity '" + f[0] + "'");
    }
    return op;
}

inline std::string losses_to_csv(const LossBreakdown& l) {
    std::string s = "quantity,value\n";
    auto row = [&](const char* n, double v) { s += std::string(n) + "," + detail::num(v) + "\n"; };
    row("p_switch", l.p_switch);
    row("p_diode", l.p_diode);
    row("p_capacitor", l.p_capacitor);
    row("p_inductor", l.p_inductor);
    row("p_total", l.p_total);
    row("pout", l.pout);
    row("efficiency", l.efficiency);
    row("rds_on", l.parasitics.rds_on);
    row("vf", l.parasitics.vf);
    row("esr", l.parasitics.esr);
    row("r_winding", l.parasitics.r_winding);
    return s;
}

inline LossBreakdown losses_from_csv(const std::string& text) {
    LossBreakdown l;
    std::map<std::string, double*> dst{{"p_switch", &l.p_switch},       {"p_diode", &l.p_diode},
                                       {"p_capacitor", &l.p_capacitor}, {"p_inductor", &l.p_inductor},
                                       {"p_total", &l.p_total},         {"pout", &l.pout},
                                       {"efficiency", &l.efficiency},   {"rds_on", &l.parasitics.rds_on},
                                       {"vf", &l.parasitics.vf},        {"esr", &l.parasitics.esr},
                                       {"r_winding", &l.parasitics.r_winding}};
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    if (line != "quantity,value") throw Error("losses CSV: unexpected header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv(line);
        if (f.size() != 2 || !dst.count(f[0])) throw Error("losses CSV: bad row '" + line + "'");
        *dst[f[0]] = detail::parse_num(f[1]);
    }
    return l;
}

inline std::string sweep_to_csv(const std::vector<SweepPoint>& pts) {
    std::string s = "rload,pout,efficiency,p_switch,p_diode,p_capacitor,p_inductor,p_total,rds_on,vf,esr,r_winding,converged,error\n";
    for (const auto& p : pts) {
        const auto& l = p.losses;
        std::string err = p.error;
        std::replace(err.begin(), err.end(), ',', ';');
        std::replace(err.begin(), err.end(), '\n', ' ');
        s += detail::num(p.rload) + "," + detail::num(l.pout) + "," + detail::num(l.efficiency) + "," +
             detail::num(l.p_switch) + "," + detail::num(l.p_diode) + "," + detail::num(l.p_capacitor) + "," +
             detail::num(l.p_inductor) + "," + detail::num(l.p_total) + "," + detail::num(l.parasitics.rds_on) + "," +
             detail::num(l.parasitics.vf) + "," + detail::num(l.parasitics.esr) + "," +
             detail::num(l.parasitics.r_winding) + "," + (p.converged ? "yes" : "no") + "," +
             err + "\n";
    }
    return s;
}

inline std::vector<SweepPoint> sweep_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    std::getline(is, line);
    if (line.rfind("rload,pout,efficiency", 0) != 0) throw Error("efficiency CSV: unexpected header");
    std::vector<SweepPoint> pts;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto f = detail::split_csv(line);
        if (f.size() != 14) throw Error("efficiency CSV: expected 14 fields");
        SweepPoint p;
        p.rload = detail::parse_num(f[0]);
        p.losses.pout = detail::parse_num(f[1]);
        p.losses.efficiency = detail::parse_num(f[2]);
        p.losses.p_switch = detail::parse_num(f[3]);
        p.losses.p_diode = detail::parse_num(f[4]);
        p.losses.p_capacitor = detail::parse_num(f[5]);
        p.losses.p_inductor = detail::parse_num(f[6]);
        p.losses.p_total = detail::parse_num(f[7]);
        p.losses.parasitics = {detail::parse_num(f[8]), detail::parse_num(f[9]), detail::parse_num(f[10]),
                               detail::parse_num(f[11])};
        p.converged = f[12] == "yes";
        p.error = f[13];
        pts.push_back(p);
    }
    return pts;
}

inline std::string to_markdown(const std::vector<SweepPoint>& pts) {
    using detail::fmt;
    std::ostringstream os;
    os << "## Efficiency sweep\n\n| Rload [Ohm] | Pout [W] | efficiency | total loss [W] | status |\n|---|---|---|---|---|\n";
    for (const auto& p : pts)
        os << "| " << fmt(p.rload, 1) << " | " << fmt(p.pout(), 2) << " | " << fmt(100.0 * p.efficiency(), 3)
           << " % | " << fmt(p.losses.p_total, 4) << " | " << (p.converged ? "ok" : "FAILED: " + p.error) << " |\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// SVG line plot

struct Series {
    std::string label;
    std::vector<double> x, y;
};

inline std::string svg_plot(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                            const std::string& ylabel) {
    const double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i]);
            y1 = std::max(y1, s.y[i]);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad;
    y1 += pad;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n"
       << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
       << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + k * (x1 - x0) / 4, yv = y0 + k * (y1 - y0) / 4;
        os << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
           << detail::fmt(xv, 3) << "</text>\n"
           << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << detail::fmt(yv, 4)
           << "</text>\n"
           << "<line x1=\"" << L << "\" y1=\"" << py(yv) << "\" x2=\"" << W - R << "\" y2=\"" << py(yv)
           << "\" stroke=\"#ddd\"/>\n";
    }
    os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">" << xlabel
       << "</text>\n"
       << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* c = colors[s % 5];
        os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].x.size(); ++i)
            os << px(series[s].x[i]) << "," << py(series[s].y[i]) << " ";
        os << "\"/>\n";
        if (series[s].x.size() <= 50)
            for (std::size_t i = 0; i < series[s].x.size(); ++i)
                os << "<circle cx=\"" << px(series[s].x[i]) << "\" cy=\"" << py(series[s].y[i]) << "\" r=\"3\" fill=\""
                   << c << "\"/>\n";
        os << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (s + 1) << "\" text-anchor=\"end\" fill=\"" << c
           << "\">" << series[s].label << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace hsconv
