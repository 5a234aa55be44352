#pragma once

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hsconv/error.hpp"

namespace hsconv {

struct ConverterDesign {
    double vin = 0.0;      // V
    double n_ratio = 0.0;  // secondary/primary turns
    double duty = 0.0;
    double fsw = 0.0;      // Hz
    double lm = 0.0;       // H, per phase
    double lk = 0.0;       // H, per phase
    double cap = 0.0;      // F, each of C1..C4
    double rload = 0.0;    // ohm

    // the three-mode analysis needs an overlap of both switches
    bool interleave_valid() const { return duty > 0.5; }

    bool operator==(const ConverterDesign&) const = default;
};

struct DeviceParasitics {
    double rds_on = 0.0;
    double vf = 0.0;
    double esr = 0.0;
    double r_winding = 0.0;  // per winding, referred to primary

    bool operator==(const DeviceParasitics&) const = default;
};

struct OperatingTargets {
    double vin = 0.0;
    double vout_target = 0.0;
    double pout_target = 0.0;

    bool operator==(const OperatingTargets&) const = default;
};

inline constexpr double kDefaultLeakage = 1e-6;

inline DeviceParasitics default_parasitics() {
    return {0.0075, 1.35, 0.010, 0.025};
}

inline ConverterDesign preset_simulation() {
    ConverterDesign d;
    d.vin = 30.0;
    d.n_ratio = 1.5;
    d.duty = 0.73;
    d.fsw = 118e3;
    d.lm = 94e-6;
    d.lk = kDefaultLeakage;
    d.cap = 10e-6;
    d.rload = 825.0;
    return d;
}

inline std::pair<ConverterDesign, DeviceParasitics> preset_prototype() {
    ConverterDesign d = preset_simulation();
    d.cap = 1e-6;
    return {d, default_parasitics()};
}

struct ValidationResult {
    ConverterDesign design;
    std::vector<std::string> errors;
    std::vector<std::string> warnings;

    bool ok() const { return errors.empty(); }
    bool operator==(const ValidationResult&) const = default;
};

inline ValidationResult validate(const ConverterDesign& d) {
    ValidationResult r{d, {}, {}};
    auto positive = [&](const char* name, double v) {
        if (!(v > 0.0) || !std::isfinite(v))
            r.errors.push_back(std::string(name) + " must be positive and finite (got " +
                               std::to_string(v) + ")");
    };
    positive("vin", d.vin);
    positive("n_ratio", d.n_ratio);
    positive("fsw", d.fsw);
    positive("lm", d.lm);
    positive("lk", d.lk);
    positive("cap", d.cap);
    positive("rload", d.rload);
    if (!(d.duty > 0.0 && d.duty < 1.0))
        r.errors.push_back("duty must lie in (0,1) (got " + std::to_string(d.duty) + ")");
    else if (!d.interleave_valid())
        r.warnings.push_back("duty <= 0.5: no switch overlap, three-mode analysis does not apply");
    return r;
}

inline ValidationResult validate(const ValidationResult& v) { return validate(v.design); }

inline std::vector<std::string> validate(const DeviceParasitics& p) {
    std::vector<std::string> errs;
    auto nonneg = [&](const char* name, double v) {
        if (!(v >= 0.0) || !std::isfinite(v))
            errs.push_back(std::string(name) + " must be non-negative (got " + std::to_string(v) + ")");
    };
    nonneg("rds_on", p.rds_on);
    nonneg("vf", p.vf);
    nonneg("esr", p.esr);
    nonneg("r_winding", p.r_winding);
    return errs;
}

inline std::vector<std::string> validate(const OperatingTargets& t) {
    std::vector<std::string> errs;
    if (!(t.vin > 0.0)) errs.push_back("vin must be positive");
    if (!(t.vout_target > t.vin)) errs.push_back("vout_target must exceed vin");
    if (!(t.pout_target > 0.0)) errs.push_back("pout_target must be positive");
    return errs;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const char* what) {
    if (!j.is_object()) throw Error(std::string(what) + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw Error(std::string(what) + ": unknown key '" + it.key() + "'");
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const ConverterDesign& d) {
    j = {{"vin", d.vin},   {"n_ratio", d.n_ratio}, {"duty", d.duty}, {"fsw", d.fsw},
         {"lm", d.lm},     {"lk", d.lk},           {"cap", d.cap},   {"rload", d.rload}};
}

// missing keys keep the value already in `d`, so a partial document overlays a preset
inline void from_json(const nlohmann::json& j, ConverterDesign& d) {
    detail::reject_unknown(j, {"vin", "n_ratio", "duty", "fsw", "lm", "lk", "cap", "rload"}, "design");
    detail::read_field(j, "vin", d.vin);
    detail::read_field(j, "n_ratio", d.n_ratio);
    detail::read_field(j, "duty", d.duty);
    detail::read_field(j, "fsw", d.fsw);
    detail::read_field(j, "lm", d.lm);
    detail::read_field(j, "lk", d.lk);
    detail::read_field(j, "cap", d.cap);
    detail::read_field(j, "rload", d.rload);
}

inline void to_json(nlohmann::json& j, const DeviceParasitics& p) {
    j = {{"rds_on", p.rds_on}, {"vf", p.vf}, {"esr", p.esr}, {"r_winding", p.r_winding}};
}

inline void from_json(const nlohmann::json& j, DeviceParasitics& p) {
    detail::reject_unknown(j, {"rds_on", "vf", "esr", "r_winding"}, "parasitics");
    detail::read_field(j, "rds_on", p.rds_on);
    detail::read_field(j, "vf", p.vf);
    detail::read_field(j, "esr", p.esr);
    detail::read_field(j, "r_winding", p.r_winding);
}

inline void to_json(nlohmann::json& j, const OperatingTargets& t) {
    j = {{"vin", t.vin}, {"vout_target", t.vout_target}, {"pout_target", t.pout_target}};
}

inline void from_json(const nlohmann::json& j, OperatingTargets& t) {
    detail::reject_unknown(j, {"vin", "vout_target", "pout_target"}, "targets");
    detail::read_field(j, "vin", t.vin);
    detail::read_field(j, "vout_target", t.vout_target);
    detail::read_field(j, "pout_target", t.pout_target);
}

}  // namespace hsconv
