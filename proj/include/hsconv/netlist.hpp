#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hsconv/error.hpp"
#include "hsconv/model.hpp"

namespace hsconv {

// T is the internal ideal transformer; it only appears after expand_coupled.
enum class ElementKind { V, R, L, C, S, D, X, T };

inline char kind_letter(ElementKind k) { return "VRLCSDXT"[static_cast<int>(k)]; }

struct Element {
    ElementKind kind = ElementKind::R;
    std::string name;
    std::vector<std::string> nodes;
    std::map<std::string, double> params;  // "value" holds the positional value of V/R/L/C
    std::string gate;                      // S only

    double param(const std::string& key, double fallback) const {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    }
    bool operator==(const Element&) const = default;
};

struct PwmGate {
    std::string id;
    double fsw = 0.0;
    double duty = 0.0;
    double phase = 0.0;  // degrees
    bool operator==(const PwmGate&) const = default;
};

struct PwmSpec {
    std::vector<PwmGate> gates;

    double fsw() const { return gates.empty() ? 0.0 : gates.front().fsw; }
    double period() const { return 1.0 / fsw(); }
    const PwmGate* find(const std::string& id) const {
        for (const auto& g : gates)
            if (g.id == id) return &g;
        return nullptr;
    }
    bool operator==(const PwmSpec&) const = default;
};

struct Netlist {
    std::vector<Element> elements;
    PwmSpec pwm;

    const Element* find(const std::string& name) const {
        for (const auto& e : elements)
            if (e.name == name) return &e;
        return nullptr;
    }
    bool operator==(const Netlist&) const = default;
};

struct FlatNetlist {
    std::vector<Element> elements;
    PwmSpec pwm;
    std::map<std::string, std::string> provenance;  // generated element -> source X
    std::set<std::string> internal_nodes;

    const Element* find(const std::string& name) const {
        for (const auto& e : elements)
            if (e.name == name) return &e;
        return nullptr;
    }
};

inline constexpr double kDefaultRon = 1e-3;
inline constexpr double kDefaultRoff = 1e6;

namespace detail {

inline bool valid_identifier(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

inline std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// number with optional engineering suffix: p n u m k meg
inline bool parse_number(const std::string& tok, double& out) {
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto res = std::from_chars(first, last, out);
    if (res.ec != std::errc() || !std::isfinite(out)) return false;
    std::string suffix = lower(std::string(res.ptr, last));
    if (suffix.empty()) return true;
    static const std::map<std::string, double> scale{
        {"p", 1e-12}, {"n", 1e-9}, {"u", 1e-6}, {"m", 1e-3}, {"k", 1e3}, {"meg", 1e6}};
    auto it = scale.find(suffix);
    if (it == scale.end()) return false;
    out *= it->second;
    return true;
}

inline std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct KindSpec {
    int arity;
    bool positional;
    std::vector<std::string> required;
    std::vector<std::string> optional;
};

inline const KindSpec& spec_for(ElementKind k) {
    static const std::map<ElementKind, KindSpec> specs{
        {ElementKind::V, {2, true, {}, {}}},
        {ElementKind::R, {2, true, {}, {}}},
        {ElementKind::L, {2, true, {}, {"ic"}}},
        {ElementKind::C, {2, true, {}, {"ic", "esr"}}},
        {ElementKind::S, {2, false, {"gate"}, {"ron", "roff"}}},
        {ElementKind::D, {2, false, {}, {"vf", "ron", "roff"}}},
        {ElementKind::X, {4, false, {"n", "lm", "lk"}, {}}},
        {ElementKind::T, {4, false, {"n"}, {}}},
    };
    return specs.at(k);
}

inline std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> toks;
    std::istringstream is(line);
    std::string t;
    while (is >> t) toks.push_back(t);
    return toks;
}

}  // namespace detail

inline Netlist parse(const std::string& text) {
    Netlist nl;
    std::set<std::string> names;
    std::map<std::string, int> gate_refs;  // gate id -> first referencing line
    bool grounded = false;
    std::istringstream is(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
        auto toks = detail::tokenize(raw);
        if (toks.empty()) continue;

        const std::string head = toks[0];
        if (detail::lower(head) == "pwm") {
            if (toks.size() < 2 || !detail::valid_identifier(toks[1]))
                throw ParseError("PWM needs a gate identifier", lineno);
            PwmGate g;
            g.id = toks[1];
            if (nl.pwm.find(g.id)) throw ParseError("duplicate PWM gate '" + g.id + "'", lineno);
            std::set<std::string> seen;
            for (std::size_t i = 2; i < toks.size(); ++i) {
                auto eq = toks[i].find('=');
                if (eq == std::string::npos) throw ParseError("arity mismatch for PWM '" + g.id + "'", lineno);
                std::string key = detail::lower(toks[i].substr(0, eq));
                double v = 0.0;
                if (!detail::parse_number(toks[i].substr(eq + 1), v))
                    throw ParseError("bad number '" + toks[i].substr(eq + 1) + "'", lineno);
                if (key == "f") g.fsw = v;
                else if (key == "d") g.duty = v;
                else if (key == "phase") g.phase = v;
                else throw ParseError("unknown parameter '" + key + "' for PWM", lineno);
                if (!seen.insert(key).second) throw ParseError("repeated parameter '" + key + "'", lineno);
            }
            for (const char* req : {"f", "d", "phase"})
                if (!seen.count(req))
                    throw ParseError(std::string("missing required parameter '") + req + "' for PWM '" + g.id + "'",
                                     lineno);
            if (!(g.fsw > 0.0)) throw ParseError("PWM frequency must be positive", lineno);
            if (!(g.duty > 0.0 && g.duty < 1.0)) throw ParseError("PWM duty must lie in (0,1)", lineno);
            if (!(g.phase >= 0.0 && g.phase < 360.0)) throw ParseError("PWM phase must lie in [0,360)", lineno);
            if (!nl.pwm.gates.empty() && nl.pwm.gates.front().fsw != g.fsw)
                throw ParseError("all PWM gates must share one frequency", lineno);
            nl.pwm.gates.push_back(g);
            continue;
        }

        if (head.size() != 1) throw ParseError("unknown element kind '" + head + "'", lineno);
        const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(head[0])));
        const std::string letters = "VRLCSDX";
        auto pos = letters.find(letter);
        if (pos == std::string::npos) throw ParseError("unknown element kind '" + head + "'", lineno);

        Element e;
        e.kind = static_cast<ElementKind>(pos);
        const auto& ks = detail::spec_for(e.kind);
        if (toks.size() < 2) throw ParseError("element without a name", lineno);
        e.name = toks[1];
        if (!detail::valid_identifier(e.name)) throw ParseError("lexical error in name '" + e.name + "'", lineno);
        if (!names.insert(e.name).second) throw ParseError("duplicate name '" + e.name + "'", lineno);

        std::size_t i = 2;
        for (; i < toks.size() && toks[i].find('=') == std::string::npos; ++i) e.nodes.push_back(toks[i]);
        const int expected = ks.arity + (ks.positional ? 1 : 0);
        if (static_cast<int>(e.nodes.size()) != expected)
            throw ParseError("arity mismatch for '" + e.name + "': expected " + std::to_string(expected) +
                                 " positional fields, got " + std::to_string(e.nodes.size()),
                             lineno);
        if (ks.positional) {
            double v = 0.0;
            if (!detail::parse_number(e.nodes.back(), v))
                throw ParseError("bad number '" + e.nodes.back() + "'", lineno);
            e.params["value"] = v;
            e.nodes.pop_back();
        }
        for (const auto& n : e.nodes)
            if (!detail::valid_identifier(n)) throw ParseError("lexical error in node '" + n + "'", lineno);

        for (; i < toks.size(); ++i) {
            auto eq = toks[i].find('=');
            if (eq == std::string::npos)
                throw ParseError("arity mismatch for '" + e.name + "': positional field after parameters", lineno);
            std::string key = detail::lower(toks[i].substr(0, eq));
            std::string val = toks[i].substr(eq + 1);
            const bool known = std::count(ks.required.begin(), ks.required.end(), key) ||
                               std::count(ks.optional.begin(), ks.optional.end(), key);
            if (!known) throw ParseError("unknown parameter '" + key + "' for '" + e.name + "'", lineno);
            if (e.params.count(key) || (key == "gate" && !e.gate.empty()))
                throw ParseError("repeated parameter '" + key + "'", lineno);
            if (key == "gate") {
                if (!detail::valid_identifier(val)) throw ParseError("lexical error in gate '" + val + "'", lineno);
                e.gate = val;
                gate_refs.emplace(val, lineno);
                continue;
            }
            double v = 0.0;
            if (!detail::parse_number(val, v)) throw ParseError("bad number '" + val + "'", lineno);
            e.params[key] = v;
        }
        for (const auto& req : ks.required) {
            const bool present = req == "gate" ? !e.gate.empty() : e.params.count(req) > 0;
            if (!present)
                throw ParseError("missing required parameter '" + req + "' for '" + e.name + "'", lineno);
        }
        for (const auto& n : e.nodes)
            if (n == "0") grounded = true;
        nl.elements.push_back(std::move(e));
    }
    for (const auto& [id, line] : gate_refs)
        if (!nl.pwm.find(id)) throw ParseError("gate '" + id + "' has no PWM definition", line);
    if (!nl.elements.empty() && !grounded) throw Error("no element references ground node 0");
    return nl;
}

inline std::string emit(const Netlist& nl) {
    std::ostringstream os;
    for (const auto& e : nl.elements) {
        if (e.kind == ElementKind::T) throw Error("internal transformer '" + e.name + "' cannot be emitted");
        os << kind_letter(e.kind) << ' ' << e.name;
        for (const auto& n : e.nodes) os << ' ' << n;
        const auto& ks = detail::spec_for(e.kind);
        if (ks.positional) os << ' ' << detail::format_number(e.params.at("value"));
        if (e.kind == ElementKind::S) os << " gate=" << e.gate;
        for (const auto* group : {&ks.required, &ks.optional})
            for (const auto& key : *group) {
                if (key == "gate") continue;
                auto it = e.params.find(key);
                if (it != e.params.end()) os << ' ' << key << '=' << detail::format_number(it->second);
            }
        os << '\n';
    }
    for (const auto& g : nl.pwm.gates)
        os << "PWM " << g.id << " f=" << detail::format_number(g.fsw) << " d=" << detail::format_number(g.duty)
           << " phase=" << detail::format_number(g.phase) << '\n';
    return os.str();
}

inline FlatNetlist expand_coupled(const Netlist& nl) {
    FlatNetlist flat;
    flat.pwm = nl.pwm;
    std::set<std::string> taken;
    for (const auto& e : nl.elements) {
        taken.insert(e.name);
        for (const auto& n : e.nodes) taken.insert(n);
    }
    auto fresh = [&](const std::string& base) {
        std::string s = base;
        while (taken.count(s)) s += "_";
        taken.insert(s);
        return s;
    };
    for (const auto& e : nl.elements) {
        if (e.kind != ElementKind::X) {
            flat.elements.push_back(e);
            continue;
        }
        const double n = e.params.at("n"), lm = e.params.at("lm"), lk = e.params.at("lk");
        if (!(n > 0.0) || !(lm > 0.0) || !(lk > 0.0))
            throw Error("coupled inductor '" + e.name + "' needs positive n, lm and lk");
        const std::string mid = fresh(e.name + "_m");
        flat.internal_nodes.insert(mid);
        Element ek{ElementKind::L, fresh(e.name + "_lk"), {e.nodes[0], mid}, {{"value", lk}}, {}};
        Element em{ElementKind::L, fresh(e.name + "_lm"), {mid, e.nodes[1]}, {{"value", lm}}, {}};
        Element et{ElementKind::T, fresh(e.name + "_t"), {mid, e.nodes[1], e.nodes[2], e.nodes[3]}, {{"n", n}}, {}};
        for (auto* g : {&ek, &em, &et}) {
            flat.provenance[g->name] = e.name;
            flat.elements.push_back(*g);
        }
    }
    return flat;
}

struct ElementCensus {
    int v = 0, r = 0, l = 0, c = 0, s = 0, d = 0, x = 0, t = 0;
};

inline ElementCensus census(const std::vector<Element>& els) {
    ElementCensus c;
    for (const auto& e : els) switch (e.kind) {
            case ElementKind::V: ++c.v; break;
            case ElementKind::R: ++c.r; break;
            case ElementKind::L: ++c.l; break;
            case ElementKind::C: ++c.c; break;
            case ElementKind::S: ++c.s; break;
            case ElementKind::D: ++c.d; break;
            case ElementKind::X: ++c.x; break;
            case ElementKind::T: ++c.t; break;
        }
    return c;
}

// Element and node names the builtin converter uses; metrics looks signals up by these.
struct ConverterRoles {
    std::string source = "vin";
    std::string input_node = "in";
    std::string output_node = "out";
    std::string load = "rload";
    std::array<std::string, 2> coupled{"x1", "x2"};
    std::array<std::string, 2> switches{"s1", "s2"};
    std::array<std::string, 2> switch_nodes{"sw1", "sw2"};
    std::array<std::string, 4> diodes{"d1", "d2", "d3", "d4"};
    std::array<std::string, 4> caps{"c1", "c2", "c3", "c4"};
};

// Ideal capacitor voltages of the emitted network, in units of vin/(1-D):
// c1 = 1, c2 = 2, c3 = 2+N, c4 = 4+2N (output).
inline std::array<double, 4> builtin_capacitor_ideal(const ConverterDesign& d) {
    const double vs = d.vin / (1.0 - d.duty);
    return {vs, 2.0 * vs, (2.0 + d.n_ratio) * vs, (4.0 + 2.0 * d.n_ratio) * vs};
}

inline double builtin_gain(const ConverterDesign& d) { return 2.0 * (d.n_ratio + 2.0) / (1.0 - d.duty); }

struct BuiltinConverter {
    Netlist netlist;
    PwmSpec pwm;
    ConverterRoles roles;
};

// Two interleaved coupled-inductor boost legs. A diode-capacitor pump clamps both
// switch nodes (d1/c1, d2/c2); the series secondaries lift the second stage (d4/c3, d3/c4).
inline BuiltinConverter builtin_proposed_converter(const ConverterDesign& design) {
    auto v = validate(design);
    if (!v.ok()) throw Error("invalid design: " + v.errors.front());
    if (!design.interleave_valid())
        throw DomainError("builtin converter needs duty > 0.5 (got " + std::to_string(design.duty) + ")");
    const auto ic = builtin_capacitor_ideal(design);
    const double n = design.n_ratio, lm = design.lm, lk = design.lk, c = design.cap;
    using K = ElementKind;
    auto el = [](K k, std::string name, std::vector<std::string> nodes, std::map<std::string, double> p,
                 std::string gate = {}) { return Element{k, std::move(name), std::move(nodes), std::move(p), std::move(gate)}; };

    BuiltinConverter b;
    auto& E = b.netlist.elements;
    E.push_back(el(K::V, "vin", {"in", "0"}, {{"value", design.vin}}));
    E.push_back(el(K::X, "x1", {"in", "sw1", "u3", "w"}, {{"n", n}, {"lm", lm}, {"lk", lk}}));
    E.push_back(el(K::S, "s1", {"sw1", "0"}, {}, "g1"));
    E.push_back(el(K::X, "x2", {"in", "sw2", "u1", "w"}, {{"n", n}, {"lm", lm}, {"lk", lk}}));
    E.push_back(el(K::S, "s2", {"sw2", "0"}, {}, "g2"));
    E.push_back(el(K::D, "d1", {"sw1", "u1"}, {}));
    E.push_back(el(K::C, "c1", {"u1", "sw2"}, {{"value", c}, {"ic", ic[0]}}));
    E.push_back(el(K::D, "d2", {"u1", "u2"}, {}));
    E.push_back(el(K::C, "c2", {"u2", "sw1"}, {{"value", c}, {"ic", ic[1]}}));
    E.push_back(el(K::D, "d4", {"u2", "u4"}, {}));
    E.push_back(el(K::C, "c3", {"u4", "u3"}, {{"value", c}, {"ic", ic[2]}}));
    E.push_back(el(K::D, "d3", {"u4", "out"}, {}));
    E.push_back(el(K::C, "c4", {"out", "0"}, {{"value", c}, {"ic", ic[3]}}));
    E.push_back(el(K::R, "rload", {"out", "0"}, {{"value", design.rload}}));
    b.pwm.gates = {{"g1", design.fsw, design.duty, 0.0}, {"g2", design.fsw, design.duty, 180.0}};
    b.netlist.pwm = b.pwm;
    return b;
}

}  // namespace hsconv
