#include <catch_amalgamated.hpp>

#include <random>

#include <cmath>
#include <numbers>

#include "hsconv/metrics.hpp"

using namespace hsconv;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<double> grid(int n, double span = 1.0) {
    std::vector<double> t(n + 1);
    for (int i = 0; i <= n; ++i) t[i] = span * i / n;
    return t;
}

SignalStats rms_only(double rms) { return SignalStats{0.0, rms, -rms, rms, 2 * rms}; }

}  // namespace

TEST_CASE("signal statistics match closed forms") {
    const auto t = grid(10000, 2e-3);
    std::vector<double> s(t.size()), tri(t.size()), dc(t.size(), 3.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        s[i] = 1.0 + 2.0 * std::sin(2 * std::numbers::pi * t[i] / 2e-3);
        const double x = t[i] / 2e-3;
        tri[i] = x < 0.5 ? 2 * x : 2 - 2 * x;
    }
    const auto a = stats(t, s);
    CHECK_THAT(a.avg, WithinAbs(1.0, 1e-9));
    CHECK_THAT(a.rms, WithinRel(std::sqrt(1.0 + 2.0), 1e-6));
    CHECK_THAT(a.max, WithinAbs(3.0, 1e-6));
    CHECK_THAT(a.pkpk, WithinAbs(4.0, 1e-6));
    const auto b = stats(t, tri);
    CHECK_THAT(b.avg, WithinAbs(0.5, 1e-9));
    CHECK_THAT(b.rms, WithinRel(1.0 / std::sqrt(3.0), 1e-6));
    const auto c = stats(t, dc);
    CHECK_THAT(c.avg, WithinRel(3.0, 1e-12));
    CHECK(c.rms >= std::abs(c.avg));
    CHECK(c.pkpk == 0.0);
}

TEST_CASE("statistics invariants on random signals") {
    Catch::SimplePcg32 rng(3);
    std::uniform_real_distribution<double> u(-5, 5), dt(1e-9, 1e-6);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> t{0.0}, y{u(rng)};
        for (int i = 0; i < 50; ++i) {
            t.push_back(t.back() + dt(rng));
            y.push_back(u(rng));
        }
        const auto s = stats(t, y);
        CHECK(s.min <= s.avg);
        CHECK(s.avg <= s.max);
        CHECK(s.rms >= std::abs(s.avg));
        CHECK(s.pkpk == Catch::Approx(s.max - s.min));
    }
}

TEST_CASE("conduction losses by hand") {
    MeasuredOperatingPoint op;
    op.isw1 = rms_only(2);
    op.isw2 = rms_only(3);
    for (auto& d : op.id) d = SignalStats{0.5, 1.0, 0, 2, 2};
    for (auto& c : op.ic) c = rms_only(1);
    op.iwp1 = op.iwp2 = rms_only(4);
    op.iws1 = op.iws2 = rms_only(1);
    op.n_ratio = 2;
    op.vout = SignalStats{100, 100, 100, 100, 0};
    op.iout = SignalStats{1, 1, 1, 1, 0};
    const DeviceParasitics p{0.1, 1.0, 0.01, 0.01};
    const auto l = conduction_losses(op, p);
    CHECK_THAT(l.p_switch, WithinRel(0.1 * (4 + 9), 1e-12));
    CHECK_THAT(l.p_diode, WithinRel(4 * 0.5 * 1.0, 1e-12));
    CHECK_THAT(l.p_capacitor, WithinRel(4 * 0.01, 1e-12));
    // primary 2*16*0.01, secondary referred to primary 2*(2*1)^2*0.01
    CHECK_THAT(l.p_inductor, WithinRel(0.32 + 0.08, 1e-12));
    CHECK_THAT(l.p_total, WithinRel(1.3 + 2 + 0.04 + 0.4, 1e-12));
    CHECK_THAT(l.efficiency, WithinRel(100 / (100 + 3.74), 1e-12));
    CHECK(conduction_losses(op, DeviceParasitics{}).p_total == 0.0);
    CHECK_THROWS_AS(conduction_losses(op, DeviceParasitics{-1, 0, 0, 0}), Error);
}

TEST_CASE("ZCS verdict on synthetic currents") {
    const auto t = grid(1000);
    std::vector<double> ramp(t.size(), 0.0), chop(t.size(), 0.0), wrap(t.size(), 0.0), always(t.size(), 2.0);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double x = t[i];
        if (x > 0.1 && x < 0.6) ramp[i] = 5.0 * (0.6 - x) / 0.5;  // falls linearly to zero
        if (x > 0.1 && x < 0.6) chop[i] = 5.0;                    // cut off at full current
        if (x < 0.2 || x > 0.9) wrap[i] = x < 0.2 ? 3.0 * (0.2 - x) : 3.0 * (1.0 - x) + 0.6;
    }
    const auto r = zcs_check(t, ramp, "ramp");
    CHECK(r.conducts);
    CHECK(r.zcs);
    CHECK(r.intervals == 1);
    CHECK(r.turnoff_current_ratio < 0.05);
    const auto c = zcs_check(t, chop);
    CHECK_FALSE(c.zcs);
    CHECK_THAT(c.turnoff_current_ratio, WithinAbs(1.0, 1e-9));
    const auto w = zcs_check(t, wrap);
    CHECK(w.intervals == 1);
    CHECK(w.zcs);
    const auto a = zcs_check(t, always);
    CHECK_FALSE(a.zcs);
    CHECK(a.turnoff_current_ratio == 1.0);
    const auto none = zcs_check(t, std::vector<double>(t.size(), -1.0));
    CHECK_FALSE(none.conducts);
}

TEST_CASE("ripple reduction factor") {
    const auto r = ripple_report(SignalStats{0, 0, 9, 10, 1}, SignalStats{0, 0, 3, 5, 2}, SignalStats{0, 0, 3, 6, 3});
    CHECK(r.phase_pkpk == 3.0);
    CHECK(r.reduction_factor == 3.0);
    CHECK(std::isinf(ripple_report({}, SignalStats{0, 0, 0, 1, 1}, {}).reduction_factor));
}

TEST_CASE("crosscheck of the closed form against itself") {
    const auto d = preset_simulation();
    const auto a = analyze(d);
    auto m = measured_from_analytic(a, d);
    const auto self = crosscheck(a, m, 1e-9);
    CHECK(self.pass());
    CHECK(self.rows.size() == 10);
    m.vout.avg *= 1.03;
    const auto off = crosscheck(a, m, 0.02);
    CHECK_FALSE(off.pass());
    CHECK_FALSE(off.rows[0].pass);
    CHECK(off.rows[1].pass);
    CHECK_THAT(off.rows[0].deviation, WithinRel(0.03, 1e-9));
    CHECK_FALSE(CrosscheckTable{}.pass());
}

TEST_CASE("loss score prefers the lower-current design") {
    const OperatingTargets t{30, 1000, 500};
    const auto [base, par] = preset_prototype();
    const auto res = design_search(t, {1.0, 3.0}, {}, loss_score(t, base, par));
    REQUIRE(res.ranked.size() == 2);
    for (const auto& c : res.ranked) CHECK(c.score > 0.0);
    CHECK(res.ranked[0].score <= res.ranked[1].score);
}

TEST_CASE("operating point, losses and sweep CSV round-trip") {
    const auto d = preset_simulation();
    auto m = measured_from_analytic(analyze(d), d);
    m.vd_stress_raw[2] = 1.0 / 3.0;
    CHECK(op_from_csv(op_to_csv(m)) == m);
    const auto l = conduction_losses(m, default_parasitics());
    CHECK(losses_from_csv(losses_to_csv(l)) == l);

    SweepPoint ok{1000, true, "", l}, bad{5, false, "no steady state", {}};
    const auto back = sweep_from_csv(sweep_to_csv({ok, bad}));
    REQUIRE(back.size() == 2);
    CHECK(back[0].losses == ok.losses);
    CHECK(back[0].rload == 1000);
    CHECK_FALSE(back[1].converged);
}

TEST_CASE("load resistances for target powers") {
    const auto d = preset_simulation();
    const double vo = builtin_gain(d) * d.vin;
    const auto r = loads_for_powers(d, {100, 500});
    CHECK_THAT(r[0], WithinRel(vo * vo / 100, 1e-12));
    CHECK_THAT(r[1], WithinRel(vo * vo / 500, 1e-12));
    CHECK_THROWS_AS(loads_for_powers(d, {0}), Error);
}

TEST_CASE("svg plot") {
    const auto svg = svg_plot({{"a", {0, 1, 2}, {1, 3, 2}}}, "t", "x", "y");
    CHECK_THAT(svg, ContainsSubstring("<svg"));
    CHECK_THAT(svg, ContainsSubstring("polyline"));
    CHECK_THAT(svg, ContainsSubstring("</svg>"));
    CHECK_NOTHROW(svg_plot({}, "empty", "x", "y"));
}

TEST_CASE("builtin converter at a coarse step") {
    EngineConfig cfg;
    cfg.step_per_period = 400;
    cfg.ss_tolerance = 1e-6;  // the slow LC mode still drains stored energy at 1e-4
    const auto run = simulate_converter(preset_simulation(), cfg);
    REQUIRE(run.transient.steady.converged);
    REQUIRE(run.op);
    const auto& op = *run.op;
    const auto ideal = builtin_capacitor_ideal(preset_simulation());
    for (int k = 0; k < 4; ++k) CHECK_THAT(op.vc[k].avg, WithinRel(ideal[k], 0.06));
    CHECK(op.vout.avg == Catch::Approx(op.vc[3].avg).epsilon(1e-3));
    CHECK_THAT(0.5 * (op.ilm1.avg + op.ilm2.avg), WithinRel(0.5 * op.iin.avg, 0.01));
    CHECK_THAT(op.duty_effective, WithinAbs(0.73, 1e-9));
    CHECK(op.fsw == 118e3);
    // power into the converter covers the load (ideal switches, no forward drop)
    CHECK_THAT(op.iin.avg * 30.0, WithinRel(op.vout.avg * op.iout.avg, 5e-3));
}

TEST_CASE("sweep keeps failed points and sorts by output power") {
    EngineConfig cfg;
    cfg.step_per_period = 200;
    cfg.max_periods = 3;
    const auto pts = efficiency_sweep(preset_simulation(), default_parasitics(), {2000, 800, -1}, cfg, 2);
    REQUIRE(pts.size() == 3);
    CHECK_FALSE(pts[0].converged);
    CHECK_FALSE(pts[2].converged);
    CHECK_THAT(pts[2].error, ContainsSubstring("rload"));
}
