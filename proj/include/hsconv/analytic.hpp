#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "hsconv/error.hpp"
#include "hsconv/model.hpp"

namespace hsconv {

enum class FormulaMode { strict_paper, consistent };

inline const char* to_string(FormulaMode m) {
    return m == FormulaMode::strict_paper ? "strict_paper" : "consistent";
}

inline FormulaMode parse_formula_mode(const std::string& s) {
    if (s == "strict_paper") return FormulaMode::strict_paper;
    if (s == "consistent") return FormulaMode::consistent;
    throw Error("unknown formula mode '" + s + "' (expected strict_paper or consistent)");
}

struct AnalyticReport {
    double gain = 0.0;
    double vout = 0.0;
    std::array<double, 4> vc{};
    double vsw = 0.0;
    double vd = 0.0;
    double iout = 0.0;
    double ilm_avg = 0.0;
    double iin_avg = 0.0;
    FormulaMode formula_mode = FormulaMode::consistent;

    bool operator==(const AnalyticReport&) const = default;
};

struct AuditReport {
    double power_in = 0.0;
    double power_out = 0.0;
    double imbalance = 0.0;
    FormulaMode formula_mode = FormulaMode::consistent;
    double strict_imbalance = 0.0;
    double consistent_imbalance = 0.0;
    double rated_power = 500.0;
    std::vector<std::string> flags;

    bool has_flag(const std::string& f) const {
        return std::find(flags.begin(), flags.end(), f) != flags.end();
    }
};

inline constexpr const char* kFlagCurrentFormula = "eq14_eq18_inconsistent_with_eq7";
inline constexpr const char* kFlagTableGain = "table1_gain_row_conflicts_eq7";
inline constexpr const char* kFlagRatedPower = "rated_power_vs_operating_point";
inline constexpr double kRatedPower = 500.0;

namespace detail {
inline void require_duty(double duty) {
    if (!(duty > 0.0 && duty < 1.0))
        throw DomainError("duty must lie in (0,1) (got " + std::to_string(duty) + ")");
}
}  // namespace detail

inline double voltage_gain(double n_ratio, double duty) {
    detail::require_duty(duty);
    return 2.0 * (n_ratio + 3.0) / (1.0 - duty);
}

inline std::array<double, 4> capacitor_voltages(double vin, double duty) {
    detail::require_duty(duty);
    const double base = vin / (1.0 - duty);
    return {base, 2.0 * base, 3.0 * base, 4.0 * base};
}

inline double switch_stress(double vin, double duty) {
    detail::require_duty(duty);
    return vin / (1.0 - duty);
}

inline double diode_stress(double vin, double duty) {
    detail::require_duty(duty);
    return 2.0 * vin / (1.0 - duty);
}

inline double output_current(double vout, double rload) {
    if (!(rload > 0.0)) throw DomainError("rload must be positive");
    return vout / rload;
}

inline double magnetizing_current_avg(double n_ratio, double duty, double iout, FormulaMode mode) {
    detail::require_duty(duty);
    if (iout < 0.0) throw DomainError("iout must be non-negative");
    const double k = mode == FormulaMode::strict_paper ? n_ratio + 2.0 : n_ratio + 3.0;
    return k * iout / (1.0 - duty);
}

inline double input_current_avg(double n_ratio, double duty, double iout, FormulaMode mode) {
    return 2.0 * magnetizing_current_avg(n_ratio, duty, iout, mode);
}

inline AnalyticReport analyze(const ConverterDesign& d, FormulaMode mode = FormulaMode::consistent) {
    AnalyticReport r;
    r.formula_mode = mode;
    r.gain = voltage_gain(d.n_ratio, d.duty);
    r.vout = r.gain * d.vin;
    r.vc = capacitor_voltages(d.vin, d.duty);
    r.vsw = switch_stress(d.vin, d.duty);
    r.vd = diode_stress(d.vin, d.duty);
    r.iout = output_current(r.vout, d.rload);
    r.ilm_avg = magnetizing_current_avg(d.n_ratio, d.duty, r.iout, mode);
    r.iin_avg = input_current_avg(d.n_ratio, d.duty, r.iout, mode);
    return r;
}

struct DutySolution {
    double duty = 0.0;
    bool feasible = false;
    std::vector<std::string> warnings;
};

inline DutySolution solve_duty(const OperatingTargets& t, double n_ratio) {
    DutySolution s;
    if (!(t.vin > 0.0) || !(t.vout_target > 0.0) || !(n_ratio > 0.0)) {
        s.warnings.push_back("vin, vout_target and n_ratio must be positive");
        return s;
    }
    s.duty = 1.0 - 2.0 * (n_ratio + 3.0) * t.vin / t.vout_target;
    s.feasible = s.duty > 0.0 && s.duty < 1.0;
    if (!s.feasible)
        s.warnings.push_back("infeasible: required duty " + std::to_string(s.duty) +
                             " outside (0,1); minimum gain is 2(N+3)");
    else if (s.duty <= 0.5)
        s.warnings.push_back("duty <= 0.5: no switch overlap, simulation not supported");
    return s;
}

struct DesignLimits {
    std::optional<double> vsw_max;
    std::optional<double> vd_max;
    double duty_min = 0.0;
    double duty_max = 1.0;
};

struct DesignCandidate {
    double n_ratio = 0.0;
    double duty = 0.0;
    double vsw = 0.0;
    double vd = 0.0;
    double score = 0.0;
    std::vector<std::string> warnings;
};

struct DesignSearchResult {
    std::vector<DesignCandidate> ranked;
    bool feasible() const { return !ranked.empty(); }
};

// optional score: smaller is better; ties fall back to stress ordering
using DesignScore = std::function<double(const DesignCandidate&)>;

inline DesignSearchResult design_search(const OperatingTargets& t, const std::vector<double>& n_candidates,
                                        const DesignLimits& lim = {}, const DesignScore& score = {}) {
    if (n_candidates.empty()) throw Error("design_search needs at least one turns-ratio candidate");
    DesignSearchResult out;
    for (double n : n_candidates) {
        auto sol = solve_duty(t, n);
        if (!sol.feasible) continue;
        if (sol.duty < lim.duty_min || sol.duty > lim.duty_max) continue;
        DesignCandidate c{n, sol.duty, switch_stress(t.vin, sol.duty), diode_stress(t.vin, sol.duty), 0.0,
                          sol.warnings};
        if (lim.vsw_max && c.vsw > *lim.vsw_max) continue;
        if (lim.vd_max && c.vd > *lim.vd_max) continue;
        c.score = score ? score(c) : c.vsw;
        out.ranked.push_back(std::move(c));
    }
    std::stable_sort(out.ranked.begin(), out.ranked.end(), [](const DesignCandidate& a, const DesignCandidate& b) {
        if (a.score != b.score) return a.score < b.score;
        if (a.vsw != b.vsw) return a.vsw < b.vsw;
        if (a.vd != b.vd) return a.vd < b.vd;
        return a.n_ratio < b.n_ratio;
    });
    return out;
}

inline AuditReport audit_consistency(const ConverterDesign& d, FormulaMode mode = FormulaMode::consistent) {
    auto imbalance_for = [&](FormulaMode m, double& pin, double& pout) {
        const AnalyticReport r = analyze(d, m);
        pin = d.vin * r.iin_avg;
        pout = r.vout * r.iout;
        return pout > 0.0 ? std::abs(pin - pout) / pout : 0.0;
    };
    AuditReport a;
    a.formula_mode = mode;
    double pin = 0.0, pout = 0.0;
    a.strict_imbalance = imbalance_for(FormulaMode::strict_paper, pin, pout);
    a.consistent_imbalance = imbalance_for(FormulaMode::consistent, pin, pout);
    a.imbalance = imbalance_for(mode, a.power_in, a.power_out);
    if (a.strict_imbalance > 0.01) a.flags.emplace_back(kFlagCurrentFormula);
    a.flags.emplace_back(kFlagTableGain);
    a.rated_power = kRatedPower;
    if (std::abs(a.power_out - kRatedPower) > 0.1 * kRatedPower) a.flags.emplace_back(kFlagRatedPower);
    return a;
}

inline void to_json(nlohmann::json& j, const AnalyticReport& r) {
    j = {{"gain", r.gain},       {"vout", r.vout},       {"vc", r.vc},
         {"vsw", r.vsw},         {"vd", r.vd},           {"iout", r.iout},
         {"ilm_avg", r.ilm_avg}, {"iin_avg", r.iin_avg}, {"formula_mode", to_string(r.formula_mode)}};
}

inline void from_json(const nlohmann::json& j, AnalyticReport& r) {
    detail::reject_unknown(j, {"gain", "vout", "vc", "vsw", "vd", "iout", "ilm_avg", "iin_avg", "formula_mode"},
                           "analytic report");
    j.at("gain").get_to(r.gain);
    j.at("vout").get_to(r.vout);
    j.at("vc").get_to(r.vc);
    j.at("vsw").get_to(r.vsw);
    j.at("vd").get_to(r.vd);
    j.at("iout").get_to(r.iout);
    j.at("ilm_avg").get_to(r.ilm_avg);
    j.at("iin_avg").get_to(r.iin_avg);
    r.formula_mode = parse_formula_mode(j.at("formula_mode").get<std::string>());
}

inline void to_json(nlohmann::json& j, const AuditReport& a) {
    j = {{"power_in", a.power_in},
         {"power_out", a.power_out},
         {"imbalance", a.imbalance},
         {"formula_mode", to_string(a.formula_mode)},
         {"strict_imbalance", a.strict_imbalance},
         {"consistent_imbalance", a.consistent_imbalance},
         {"rated_power", a.rated_power},
         {"flags", a.flags}};
}

namespace detail {
inline std::string fmt(double v, int prec = 2) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}
}  // namespace detail

inline std::string to_markdown(const AnalyticReport& r) {
    using detail::fmt;
    std::ostringstream os;
    os << "## Closed-form operating point (" << to_string(r.formula_mode) << ")\n\n"
       << "| quantity | value |\n|---|---|\n"
       << "| gain M | " << fmt(r.gain, 3) << " |\n"
       << "| Vout [V] | " << fmt(r.vout) << " |\n";
    for (int k = 0; k < 4; ++k) os << "| Vc" << k + 1 << " [V] | " << fmt(r.vc[k]) << " |\n";
    os << "| Vsw [V] | " << fmt(r.vsw) << " |\n"
       << "| Vd [V] | " << fmt(r.vd) << " |\n"
       << "| Iout [A] | " << fmt(r.iout, 3) << " |\n"
       << "| ILm avg [A] | " << fmt(r.ilm_avg) << " |\n"
       << "| Iin avg [A] | " << fmt(r.iin_avg) << " |\n";
    return os.str();
}

inline std::string to_markdown(const AuditReport& a) {
    using detail::fmt;
    std::ostringstream os;
    os << "## Consistency audit\n\n"
       << "| quantity | value |\n|---|---|\n"
       << "| Pin [W] (" << to_string(a.formula_mode) << ") | " << fmt(a.power_in) << " |\n"
       << "| Pout [W] | " << fmt(a.power_out) << " |\n"
       << "| imbalance | " << fmt(100.0 * a.imbalance, 3) << " % |\n"
       << "| imbalance strict_paper | " << fmt(100.0 * a.strict_imbalance, 3) << " % |\n"
       << "| imbalance consistent | " << fmt(100.0 * a.consistent_imbalance, 3) << " % |\n"
       << "| rated power [W] | " << fmt(a.rated_power, 0) << " |\n\n"
       << "Flags:\n";
    if (a.flags.empty()) os << "- none\n";
    for (const auto& f : a.flags) {
        os << "- `" << f << "`";
        if (f == kFlagCurrentFormula) os << ": current formula with (N+2) does not balance power against gain 2(N+3)/(1-D)";
        else if (f == kFlagTableGain) os << ": comparison table lists (2N+2)/(1-D) for this converter, gain formula gives 2(N+3)/(1-D)";
        else if (f == kFlagRatedPower) os << ": operating point output " << fmt(a.power_out, 1) << " W vs rated " << fmt(a.rated_power, 0) << " W";
        os << "\n";
    }
    return os.str();
}

}  // namespace hsconv
