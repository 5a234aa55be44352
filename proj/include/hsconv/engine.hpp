#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hsconv/error.hpp"
#include "hsconv/netlist.hpp"

namespace hsconv {

// ---------------------------------------------------------------------------
// gates and modes

struct GateState {
    std::vector<std::string> ids;
    std::vector<bool> on;

    bool operator[](const std::string& id) const {
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == id) return on[i];
        throw Error("unknown gate '" + id + "'");
    }
    bool operator==(const GateState&) const = default;
};

inline bool gate_on(const PwmGate& g, double t) {
    const double x = t * g.fsw - g.phase / 360.0;
    return x - std::floor(x) < g.duty;
}

inline GateState gate_states(const PwmSpec& pwm, double t) {
    GateState s;
    for (const auto& g : pwm.gates) {
        s.ids.push_back(g.id);
        s.on.push_back(gate_on(g, t));
    }
    return s;
}

// PWM edge positions within one period, as fractions in [0,1), sorted, always containing 0
inline std::vector<double> edge_fractions(const PwmSpec& pwm) {
    std::vector<double> f{0.0};
    auto wrap = [](double x) {
        x -= std::floor(x);
        return x >= 1.0 ? 0.0 : x;
    };
    for (const auto& g : pwm.gates) {
        f.push_back(wrap(g.phase / 360.0));
        f.push_back(wrap(g.phase / 360.0 + g.duty));
    }
    std::sort(f.begin(), f.end());
    std::vector<double> out;
    for (double x : f)
        if (out.empty() || x - out.back() > 1e-12) out.push_back(x);
    return out;
}

enum class Mode { mode1, mode2, mode3, undefined };

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::mode1: return "mode1";
        case Mode::mode2: return "mode2";
        case Mode::mode3: return "mode3";
        case Mode::undefined: return "undefined";
    }
    return "?";
}

inline Mode classify_mode(const GateState& g) {
    if (g.on.size() != 2) throw Error("mode classification needs exactly two gates");
    const bool s1 = g.on[0], s2 = g.on[1];
    if (s1 && s2) return Mode::mode1;
    if (!s1 && s2) return Mode::mode2;
    if (s1 && !s2) return Mode::mode3;
    return Mode::undefined;
}

// ---------------------------------------------------------------------------
// MNA structure

enum class Scheme { trapezoidal, backward_euler };

struct MnaDevice {
    ElementKind kind = ElementKind::R;
    std::string name;
    int a = -1, b = -1;  // node indices, -1 is ground
    int c = -1, d = -1;  // transformer secondary
    int mid = -1;        // capacitor ESR internal node
    int branch = -1, branch2 = -1;
    int slot = -1;  // index into the per-kind state arrays
    double value = 0.0, ron = kDefaultRon, roff = kDefaultRoff, vf = 0.0, esr = 0.0;
    double ic = 0.0;
    double amp = 0.0, freq = 0.0;  // sine source, API only
    int gate = -1;
};

class MnaSystem {
public:
    std::vector<std::string> node_names;  // sorted, ground excluded
    std::map<std::string, int> node_index;
    std::map<std::string, int> branch_index;
    std::vector<MnaDevice> devices;  // flat netlist order
    std::vector<int> inductors, capacitors, switches, diodes;
    PwmSpec pwm;
    int size = 0;

    int node(const std::string& n) const { return n == "0" ? -1 : node_index.at(n); }
    std::size_t state_size() const { return inductors.size() + capacitors.size(); }

    std::vector<std::string> state_names() const {
        std::vector<std::string> s;
        for (int k : inductors) s.push_back("i(" + devices[k].name + ")");
        for (int k : capacitors) s.push_back("v(" + devices[k].name + ")");
        return s;
    }

    // cached factorizations keyed by device states, scheme and step size
    struct Key {
        std::uint64_t sw, di;
        int scheme, h;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::size_t h = std::hash<std::uint64_t>()(k.sw);
            h ^= std::hash<std::uint64_t>()(k.di) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
            return h ^ (static_cast<std::size_t>(k.scheme) << 1) ^ (static_cast<std::size_t>(k.h) << 3);
        }
    };
    mutable std::unordered_map<Key, Eigen::PartialPivLU<Eigen::MatrixXd>, KeyHash> lu_cache;
    mutable std::vector<double> step_sizes;
};

namespace detail {

struct UnionFind {
    std::vector<int> p;
    explicit UnionFind(int n) : p(n) { std::iota(p.begin(), p.end(), 0); }
    int find(int x) { return p[x] == x ? x : p[x] = find(p[x]); }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        p[a] = b;
        return true;
    }
};

}  // namespace detail

inline MnaSystem assemble(const FlatNetlist& flat) {
    MnaSystem sys;
    sys.pwm = flat.pwm;
    std::set<std::string> nodes;
    std::set<std::string> names;
    for (const auto& e : flat.elements) {
        if (e.kind == ElementKind::X) throw TopologyError("assemble needs a flat netlist; expand '" + e.name + "' first");
        for (const auto& n : e.nodes)
            if (n != "0") nodes.insert(n);
        names.insert(e.name);
    }
    std::map<std::string, std::string> esr_node;
    for (const auto& e : flat.elements)
        if (e.kind == ElementKind::C && e.param("esr", 0.0) > 0.0) {
            std::string n = e.name + "_esr";
            while (nodes.count(n)) n += "_";
            nodes.insert(n);
            esr_node[e.name] = n;
        }
    sys.node_names.assign(nodes.begin(), nodes.end());
    for (std::size_t i = 0; i < sys.node_names.size(); ++i) sys.node_index[sys.node_names[i]] = static_cast<int>(i);
    int next_branch = static_cast<int>(sys.node_names.size());

    for (const auto& e : flat.elements) {
        MnaDevice d;
        d.kind = e.kind;
        d.name = e.name;
        d.a = sys.node(e.nodes[0]);
        d.b = sys.node(e.nodes[1]);
        switch (e.kind) {
            case ElementKind::V:
                d.value = e.params.at("value");
                d.amp = e.param("amp", 0.0);
                d.freq = e.param("freq", 0.0);
                d.branch = next_branch++;
                sys.branch_index[e.name] = d.branch;
                break;
            case ElementKind::R:
                d.value = e.params.at("value");
                if (!(d.value > 0.0)) throw TopologyError("resistor '" + e.name + "' needs positive resistance");
                break;
            case ElementKind::L:
                d.value = e.params.at("value");
                if (!(d.value > 0.0)) throw TopologyError("inductor '" + e.name + "' needs positive inductance");
                d.ic = e.param("ic", 0.0);
                d.branch = next_branch++;
                sys.branch_index[e.name] = d.branch;
                d.slot = static_cast<int>(sys.inductors.size());
                sys.inductors.push_back(static_cast<int>(sys.devices.size()));
                break;
            case ElementKind::C:
                d.value = e.params.at("value");
                if (!(d.value > 0.0)) throw TopologyError("capacitor '" + e.name + "' needs positive capacitance");
                d.ic = e.param("ic", 0.0);
                d.esr = e.param("esr", 0.0);
                if (d.esr < 0.0) throw TopologyError("capacitor '" + e.name + "' has negative esr");
                if (d.esr > 0.0) d.mid = sys.node(esr_node.at(e.name));
                d.slot = static_cast<int>(sys.capacitors.size());
                sys.capacitors.push_back(static_cast<int>(sys.devices.size()));
                break;
            case ElementKind::S: {
                d.ron = e.param("ron", kDefaultRon);
                d.roff = e.param("roff", kDefaultRoff);
                if (!(d.ron > 0.0 && d.roff > 0.0)) throw TopologyError("switch '" + e.name + "' needs positive ron/roff");
                for (std::size_t g = 0; g < sys.pwm.gates.size(); ++g)
                    if (sys.pwm.gates[g].id == e.gate) d.gate = static_cast<int>(g);
                if (d.gate < 0) throw TopologyError("switch '" + e.name + "' references undefined gate '" + e.gate + "'");
                d.slot = static_cast<int>(sys.switches.size());
                sys.switches.push_back(static_cast<int>(sys.devices.size()));
                break;
            }
            case ElementKind::D:
                d.ron = e.param("ron", kDefaultRon);
                d.roff = e.param("roff", kDefaultRoff);
                d.vf = e.param("vf", 0.0);
                if (!(d.ron > 0.0 && d.roff > 0.0)) throw TopologyError("diode '" + e.name + "' needs positive ron/roff");
                d.slot = static_cast<int>(sys.diodes.size());
                sys.diodes.push_back(static_cast<int>(sys.devices.size()));
                break;
            case ElementKind::T:
                d.c = sys.node(e.nodes[2]);
                d.d = sys.node(e.nodes[3]);
                d.value = e.params.at("n");
                d.branch = next_branch++;
                d.branch2 = next_branch++;
                sys.branch_index[e.name] = d.branch;
                sys.branch_index[e.name + ".s"] = d.branch2;
                break;
            case ElementKind::X: break;
        }
        sys.devices.push_back(d);
    }
    if (sys.switches.size() > 64 || sys.diodes.size() > 64) throw TopologyError("at most 64 switches and 64 diodes");
    sys.size = next_branch;

    // connectivity: every node needs a DC path to ground (capacitors excluded)
    const int nn = static_cast<int>(sys.node_names.size());
    auto id = [&](int n) { return n < 0 ? nn : n; };
    detail::UnionFind dc(nn + 1);
    for (const auto& d : sys.devices) {
        if (d.kind == ElementKind::C) {
            if (d.mid >= 0) dc.unite(id(d.a), id(d.mid));
            continue;
        }
        dc.unite(id(d.a), id(d.b));
        if (d.kind == ElementKind::T) dc.unite(id(d.c), id(d.d));
    }
    std::vector<std::string> floating;
    for (int n = 0; n < nn; ++n)
        if (dc.find(n) != dc.find(nn)) floating.push_back(sys.node_names[n]);
    if (!floating.empty()) {
        std::string msg = "floating subcircuit: no DC path to ground from node(s)";
        for (const auto& f : floating) msg += " " + f;
        throw TopologyError(msg);
    }

    // loops made only of voltage sources and ESR-free capacitors
    detail::UnionFind loop(nn + 1);
    for (const auto& d : sys.devices) {
        const bool stiff = d.kind == ElementKind::V || (d.kind == ElementKind::C && d.mid < 0);
        if (!stiff) continue;
        if (!loop.unite(id(d.a), id(d.b))) {
            const bool vloop = d.kind == ElementKind::V;
            throw TopologyError(std::string("singular topology: ") +
                                (vloop ? "voltage-source loop" : "capacitor-only loop without ESR") +
                                " closed by '" + d.name + "'");
        }
    }
    return sys;
}

// ---------------------------------------------------------------------------
// state and stepping

struct SimState {
    double t = 0.0;
    Eigen::VectorXd x;  // last MNA solution
    std::vector<double> il, vl, vc, ic;
    std::vector<char> switch_on, diode_on;
    bool force_be = true;  // no history at t=0
    int step_count = 0;

    std::vector<double> vector() const {
        std::vector<double> s(il);
        s.insert(s.end(), vc.begin(), vc.end());
        return s;
    }
};

inline SimState initial_state(const MnaSystem& sys) {
    SimState s;
    s.x = Eigen::VectorXd::Zero(sys.size);
    for (int k : sys.inductors) {
        s.il.push_back(sys.devices[k].ic);
        s.vl.push_back(0.0);
    }
    for (int k : sys.capacitors) {
        s.vc.push_back(sys.devices[k].ic);
        s.ic.push_back(0.0);
    }
    s.switch_on.assign(sys.switches.size(), 0);
    s.diode_on.assign(sys.diodes.size(), 0);
    return s;
}

namespace detail {

inline std::uint64_t pack(const std::vector<char>& bits) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) v |= std::uint64_t{1} << i;
    return v;
}

inline int step_index(const MnaSystem& sys, double h) {
    for (std::size_t i = 0; i < sys.step_sizes.size(); ++i)
        if (sys.step_sizes[i] == h) return static_cast<int>(i);
    sys.step_sizes.push_back(h);
    return static_cast<int>(sys.step_sizes.size() - 1);
}

inline void stamp_g(Eigen::MatrixXd& A, int a, int b, double g) {
    if (a >= 0) A(a, a) += g;
    if (b >= 0) A(b, b) += g;
    if (a >= 0 && b >= 0) {
        A(a, b) -= g;
        A(b, a) -= g;
    }
}

inline void stamp_branch(Eigen::MatrixXd& A, int a, int b, int j) {
    if (a >= 0) {
        A(a, j) += 1.0;
        A(j, a) += 1.0;
    }
    if (b >= 0) {
        A(b, j) -= 1.0;
        A(j, b) -= 1.0;
    }
}

inline void inject(Eigen::VectorXd& rhs, int a, int b, double i) {
    // current i driven into node a and out of node b
    if (a >= 0) rhs(a) += i;
    if (b >= 0) rhs(b) -= i;
}

inline double companion_c(const MnaDevice& d, Scheme s, double h) {
    return (s == Scheme::trapezoidal ? 2.0 : 1.0) * d.value / h;
}

inline Eigen::MatrixXd build_matrix(const MnaSystem& sys, const std::vector<char>& sw, const std::vector<char>& di,
                                    Scheme s, double h) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(sys.size, sys.size);
    for (const auto& d : sys.devices) {
        switch (d.kind) {
            case ElementKind::R: stamp_g(A, d.a, d.b, 1.0 / d.value); break;
            case ElementKind::S: stamp_g(A, d.a, d.b, 1.0 / (sw[d.slot] ? d.ron : d.roff)); break;
            case ElementKind::D: stamp_g(A, d.a, d.b, 1.0 / (di[d.slot] ? d.ron : d.roff)); break;
            case ElementKind::C:
                if (d.mid >= 0) {
                    stamp_g(A, d.a, d.mid, 1.0 / d.esr);
                    stamp_g(A, d.mid, d.b, companion_c(d, s, h));
                } else {
                    stamp_g(A, d.a, d.b, companion_c(d, s, h));
                }
                break;
            case ElementKind::L:
                stamp_branch(A, d.a, d.b, d.branch);
                A(d.branch, d.branch) -= (s == Scheme::trapezoidal ? 2.0 : 1.0) * d.value / h;
                break;
            case ElementKind::V: stamp_branch(A, d.a, d.b, d.branch); break;
            case ElementKind::T: {
                // v_s = N v_p ; i_p + N i_s = 0
                const int jp = d.branch, js = d.branch2;
                const double n = d.value;
                if (d.a >= 0) A(d.a, jp) += 1.0;
                if (d.b >= 0) A(d.b, jp) -= 1.0;
                if (d.c >= 0) A(d.c, js) += 1.0;
                if (d.d >= 0) A(d.d, js) -= 1.0;
                if (d.c >= 0) A(jp, d.c) += 1.0;
                if (d.d >= 0) A(jp, d.d) -= 1.0;
                if (d.a >= 0) A(jp, d.a) -= n;
                if (d.b >= 0) A(jp, d.b) += n;
                A(js, jp) += 1.0;
                A(js, js) += n;
                break;
            }
            case ElementKind::X: break;
        }
    }
    return A;
}

inline double source_value(const MnaDevice& d, double t) {
    return d.value + (d.amp != 0.0 ? d.amp * std::sin(2.0 * std::numbers::pi * d.freq * t) : 0.0);
}

inline Eigen::VectorXd build_rhs(const MnaSystem& sys, const SimState& st, const std::vector<char>& di, Scheme s,
                                 double h, double t_new) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.size);
    for (const auto& d : sys.devices) {
        switch (d.kind) {
            case ElementKind::D:
                if (di[d.slot] && d.vf != 0.0) inject(rhs, d.a, d.b, d.vf / d.ron);
                break;
            case ElementKind::C: {
                const double g = companion_c(d, s, h);
                double i = g * st.vc[d.slot];
                if (s == Scheme::trapezoidal) i += st.ic[d.slot];
                inject(rhs, d.mid >= 0 ? d.mid : d.a, d.b, i);
                break;
            }
            case ElementKind::L: {
                const double r = d.value / h;
                rhs(d.branch) = s == Scheme::trapezoidal ? -2.0 * r * st.il[d.slot] - st.vl[d.slot] : -r * st.il[d.slot];
                break;
            }
            case ElementKind::V: rhs(d.branch) = source_value(d, t_new); break;
            default: break;
        }
    }
    return rhs;
}

inline double volt(const Eigen::VectorXd& x, int n) { return n < 0 ? 0.0 : x(n); }

inline const Eigen::PartialPivLU<Eigen::MatrixXd>& factor(const MnaSystem& sys, const std::vector<char>& sw,
                                                           const std::vector<char>& di, Scheme s, double h) {
    MnaSystem::Key key{pack(sw), pack(di), static_cast<int>(s), step_index(sys, h)};
    auto it = sys.lu_cache.find(key);
    if (it != sys.lu_cache.end()) return it->second;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(build_matrix(sys, sw, di, s, h));
    if (!(lu.rcond() > 1e-18)) throw TopologyError("singular MNA matrix (check for source loops or isolated branches)");
    if (sys.lu_cache.size() > 4096) sys.lu_cache.clear();
    return sys.lu_cache.emplace(key, std::move(lu)).first->second;
}

// one attempt at a full step; false when the diode assignment does not settle
inline bool try_step(const MnaSystem& sys, const SimState& st, double h, const std::vector<char>& sw, SimState& out) {
    std::vector<char> di = st.diode_on;
    const bool gate_event = st.force_be || sw != st.switch_on;
    const int passes = static_cast<int>(sys.diodes.size()) + 2;
    const double t_new = st.t + h;
    for (int pass = 0; pass < passes; ++pass) {
        const Scheme s = (gate_event || di != st.diode_on) ? Scheme::backward_euler : Scheme::trapezoidal;
        const auto& lu = factor(sys, sw, di, s, h);
        Eigen::VectorXd x = lu.solve(build_rhs(sys, st, di, s, h, t_new));
        std::vector<char> next = di;
        for (int k : sys.diodes) {
            const auto& d = sys.devices[k];
            const double v = volt(x, d.a) - volt(x, d.b);
            if (di[d.slot]) {
                if ((v - d.vf) / d.ron < 0.0) next[d.slot] = 0;
            } else if (v > d.vf) {
                next[d.slot] = 1;
            }
        }
        if (next != di) {
            di = std::move(next);
            continue;
        }
        out.t = t_new;
        out.switch_on = sw;
        out.diode_on = di;
        out.force_be = false;
        out.step_count = st.step_count + 1;
        out.il.resize(st.il.size());
        out.vl.resize(st.vl.size());
        out.vc.resize(st.vc.size());
        out.ic.resize(st.ic.size());
        for (int k : sys.inductors) {
            const auto& d = sys.devices[k];
            out.il[d.slot] = x(d.branch);
            out.vl[d.slot] = volt(x, d.a) - volt(x, d.b);
        }
        for (int k : sys.capacitors) {
            const auto& d = sys.devices[k];
            const double v = volt(x, d.mid >= 0 ? d.mid : d.a) - volt(x, d.b);
            const double g = companion_c(d, s, h);
            out.ic[d.slot] = g * (v - st.vc[d.slot]) - (s == Scheme::trapezoidal ? st.ic[d.slot] : 0.0);
            out.vc[d.slot] = v;
        }
        out.x = std::move(x);
        return true;
    }
    return false;
}

inline SimState advance(const MnaSystem& sys, const SimState& st, double h, const std::vector<char>& sw, int depth) {
    SimState out;
    if (try_step(sys, st, h, sw, out)) return out;
    if (depth >= 8) throw ConvergenceError("diode state iteration did not converge after 8 bisections", st.t);
    SimState mid = advance(sys, st, h / 2.0, sw, depth + 1);
    return advance(sys, mid, h / 2.0, sw, depth + 1);
}

inline std::vector<char> switch_states(const MnaSystem& sys, const GateState& g) {
    std::vector<char> sw(sys.switches.size(), 0);
    for (int k : sys.switches) {
        const auto& d = sys.devices[k];
        sw[d.slot] = g.on.at(d.gate) ? 1 : 0;
    }
    return sw;
}

}  // namespace detail

// One integration step of length dt with the given gate pattern.
inline SimState step(const MnaSystem& sys, const SimState& state, double dt, const GateState& gates) {
    if (!(dt > 0.0)) throw Error("step size must be positive");
    return detail::advance(sys, state, dt, detail::switch_states(sys, gates), 0);
}

// ---------------------------------------------------------------------------
// waveforms

struct WaveformSet {
    std::vector<double> t;
    std::vector<std::string> names;
    std::vector<std::vector<double>> series;
    double step = 0.0;    // nominal step
    double period = 0.0;  // 0 for aperiodic runs
    std::vector<double> breakpoints;
    int converged_period = -1;

    std::size_t size() const { return t.size(); }
    bool has(const std::string& name) const { return std::find(names.begin(), names.end(), name) != names.end(); }
    std::size_t index_of(const std::string& name) const {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw Error("no signal named '" + name + "'");
        return static_cast<std::size_t>(it - names.begin());
    }
    const std::vector<double>& operator[](const std::string& name) const { return series[index_of(name)]; }

    // node voltage, with ground as a zero series
    std::vector<double> voltage(const std::string& node) const {
        if (node == "0") return std::vector<double>(t.size(), 0.0);
        return (*this)["v(" + node + ")"];
    }
    std::vector<double> voltage(const std::string& p, const std::string& n) const {
        auto a = voltage(p);
        const auto b = voltage(n);
        for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
        return a;
    }

    // samples [from, to)
    WaveformSet slice(std::size_t from, std::size_t to) const {
        WaveformSet w;
        w.names = names;
        w.step = step;
        w.period = period;
        w.converged_period = converged_period;
        w.t.assign(t.begin() + from, t.begin() + to);
        for (const auto& s : series) w.series.emplace_back(s.begin() + from, s.begin() + to);
        for (double b : breakpoints)
            if (!w.t.empty() && b >= w.t.front() && b <= w.t.back()) w.breakpoints.push_back(b);
        return w;
    }

    // the trailing k periods including the sample at their start
    WaveformSet last_periods(int k) const {
        if (period <= 0.0 || t.empty()) return *this;
        const double start = t.back() - k * period;
        std::size_t i = 0;
        const double eps = 1e-9 * period;
        while (i < t.size() && t[i] < start - eps) ++i;
        return slice(i, t.size());
    }
};

namespace detail {

inline std::vector<std::string> signal_names(const MnaSystem& sys) {
    std::vector<std::string> n;
    for (const auto& node : sys.node_names) n.push_back("v(" + node + ")");
    for (const auto& d : sys.devices) {
        n.push_back("i(" + d.name + ")");
        if (d.kind == ElementKind::T) n.push_back("i(" + d.name + ".s)");
    }
    for (const auto& g : sys.pwm.gates) n.push_back("gate(" + g.id + ")");
    return n;
}

inline void sample(const MnaSystem& sys, const SimState& st, const GateState& g, std::vector<double>& row) {
    row.clear();
    const auto& x = st.x;
    for (std::size_t i = 0; i < sys.node_names.size(); ++i) row.push_back(x(static_cast<int>(i)));
    for (const auto& d : sys.devices) {
        const double v = volt(x, d.a) - volt(x, d.b);
        switch (d.kind) {
            case ElementKind::R: row.push_back(v / d.value); break;
            case ElementKind::S: row.push_back(v / (st.switch_on[d.slot] ? d.ron : d.roff)); break;
            case ElementKind::D:
                row.push_back(st.diode_on[d.slot] ? (v - d.vf) / d.ron : v / d.roff);
                break;
            case ElementKind::C: row.push_back(st.ic[d.slot]); break;
            case ElementKind::L:
            case ElementKind::V: row.push_back(x(d.branch)); break;
            case ElementKind::T:
                row.push_back(x(d.branch));
                row.push_back(x(d.branch2));
                break;
            case ElementKind::X: break;
        }
    }
    for (bool on : g.on) row.push_back(on ? 1.0 : 0.0);
}

struct Recorder {
    std::vector<double> t;
    std::vector<std::vector<double>> cols;
    explicit Recorder(std::size_t ncols) : cols(ncols) {}
    void push(double time, const std::vector<double>& row) {
        t.push_back(time);
        for (std::size_t c = 0; c < row.size(); ++c) cols[c].push_back(row[c]);
    }
    void clear() {
        t.clear();
        for (auto& c : cols) c.clear();
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// transient runs

struct EngineConfig {
    int step_per_period = 2000;
    int max_periods = 5000;
    double ss_tolerance = 1e-4;
    int ss_consecutive = 3;
    double ss_floor = 1.0;  // residual denominator floor, in state units
    int record_periods = 2;
    // initial inductor current / capacitor voltage by element name, overriding ic=
    std::map<std::string, double> initial;
};

struct SteadyResult {
    bool converged = false;
    int periods_run = 0;
    double residual = 0.0;
    std::vector<double> residual_history;
    WaveformSet final_period;
};

struct TransientResult {
    WaveformSet waves;
    SteadyResult steady;
    SimState final_state;
};

inline double state_residual(const std::vector<double>& now, const std::vector<double>& before, double floor) {
    double r = 0.0;
    for (std::size_t i = 0; i < now.size(); ++i)
        r = std::max(r, std::abs(now[i] - before[i]) / std::max(std::abs(now[i]), floor));
    return r;
}

// Integrates whole PWM periods until the state repeats, recording the trailing periods.
inline TransientResult run_transient(const FlatNetlist& flat, const EngineConfig& cfg = {}) {
    if (flat.pwm.gates.empty()) throw Error("periodic run needs at least one PWM gate");
    if (cfg.step_per_period < 4) throw Error("step_per_period must be at least 4");
    if (cfg.max_periods < 1) throw Error("max_periods must be at least 1");
    const MnaSystem sys = assemble(flat);
    const double T = flat.pwm.period();
    const auto edges = edge_fractions(flat.pwm);

    struct Segment {
        double f0, len;
        int n;
        double h;
    };
    std::vector<Segment> segs;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        const double f0 = edges[i];
        const double f1 = i + 1 < edges.size() ? edges[i + 1] : 1.0;
        const double len = f1 - f0;
        const int n = std::max(1, static_cast<int>(std::ceil(len * cfg.step_per_period - 1e-6)));
        segs.push_back({f0, len, n, len * T / n});
    }

    const auto names = detail::signal_names(sys);
    const int keep = std::max(1, cfg.record_periods);
    std::deque<detail::Recorder> blocks;
    std::vector<double> row;

    SimState st = initial_state(sys);
    for (const auto& [name, value] : cfg.initial) {
        bool found = false;
        for (const auto& d : sys.devices)
            if (d.name == name && (d.kind == ElementKind::L || d.kind == ElementKind::C)) {
                (d.kind == ElementKind::L ? st.il : st.vc)[d.slot] = value;
                found = true;
            }
        if (!found) throw Error("initial condition for unknown inductor/capacitor '" + name + "'");
    }
    GateState g0 = gate_states(flat.pwm, 0.0);
    TransientResult res;
    auto& ss = res.steady;
    std::vector<double> prev = st.vector();
    int under = 0;
    for (int k = 0; k < cfg.max_periods; ++k) {
        if (static_cast<int>(blocks.size()) == keep) {
            detail::Recorder r = std::move(blocks.front());
            blocks.pop_front();
            r.clear();
            blocks.push_back(std::move(r));
        } else {
            blocks.emplace_back(names.size());
        }
        auto& rec = blocks.back();
        detail::sample(sys, st, g0, row);
        rec.push(st.t, row);
        for (const auto& s : segs) {
            const double tm = (k + s.f0 + 0.5 * s.len / s.n) * T;
            const GateState g = gate_states(flat.pwm, tm);
            const auto sw = detail::switch_states(sys, g);
            for (int i = 1; i <= s.n; ++i) {
                st = detail::advance(sys, st, s.h, sw, 0);
                st.t = (k + s.f0 + s.len * i / s.n) * T;
                detail::sample(sys, st, g, row);
                rec.push(st.t, row);
            }
            g0 = g;
        }
        st.t = (k + 1) * T;
        const auto now = st.vector();
        const double r = state_residual(now, prev, cfg.ss_floor);
        prev = now;
        ss.residual_history.push_back(r);
        ss.residual = r;
        ss.periods_run = k + 1;
        under = r <= cfg.ss_tolerance ? under + 1 : 0;
        if (under >= cfg.ss_consecutive) {
            ss.converged = true;
            break;
        }
    }

    auto& w = res.waves;
    w.names = names;
    w.series.resize(names.size());
    w.step = T / cfg.step_per_period;
    w.period = T;
    w.converged_period = ss.converged ? ss.periods_run - 1 : -1;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const std::size_t from = b == 0 ? 0 : 1;  // block start repeats previous block end
        const auto& blk = blocks[b];
        w.t.insert(w.t.end(), blk.t.begin() + from, blk.t.end());
        for (std::size_t c = 0; c < names.size(); ++c)
            w.series[c].insert(w.series[c].end(), blk.cols[c].begin() + from, blk.cols[c].end());
    }
    const int first_period = ss.periods_run - static_cast<int>(blocks.size());
    for (int k = first_period; k < ss.periods_run; ++k)
        for (double f : edges) w.breakpoints.push_back((k + f) * T);
    w.breakpoints.push_back(ss.periods_run * T);
    ss.final_period = w.last_periods(1);
    res.final_state = std::move(st);
    return res;
}

// Fixed-step run from t=0 to t_end, recording every step. Gates (if any) are
// sampled at each step midpoint; no breakpoint alignment.
inline WaveformSet run_fixed(const FlatNetlist& flat, double t_end, double dt) {
    if (!(dt > 0.0) || !(t_end > 0.0)) throw Error("run_fixed needs positive t_end and dt");
    const MnaSystem sys = assemble(flat);
    const auto names = detail::signal_names(sys);
    detail::Recorder rec(names.size());
    std::vector<double> row;
    SimState st = initial_state(sys);
    const int n = static_cast<int>(std::llround(t_end / dt));
    GateState g = gate_states(flat.pwm, 0.0);
    for (int i = 1; i <= n; ++i) {
        g = gate_states(flat.pwm, (i - 0.5) * dt);
        st = step(sys, st, dt, g);
        st.t = i * dt;
        detail::sample(sys, st, g, row);
        rec.push(st.t, row);
    }
    WaveformSet w;
    w.names = names;
    w.t = std::move(rec.t);
    w.series = std::move(rec.cols);
    w.step = dt;
    return w;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {
inline std::string num(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}
}  // namespace detail

inline std::string to_csv(const WaveformSet& w) {
    std::string out = "t_seconds";
    for (const auto& n : w.names) out += "," + n;
    out += "\n";
    for (std::size_t i = 0; i < w.t.size(); ++i) {
        out += detail::num(w.t[i]);
        for (const auto& s : w.series) {
            out += ",";
            out += detail::num(s[i]);
        }
        out += "\n";
    }
    return out;
}

inline WaveformSet parse_waves_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw Error("waveform CSV is empty");
    std::vector<std::string> head;
    {
        std::istringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) head.push_back(c);
    }
    if (head.empty() || head[0] != "t_seconds") throw Error("waveform CSV must start with t_seconds");
    WaveformSet w;
    w.names.assign(head.begin() + 1, head.end());
    w.series.resize(w.names.size());
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string c;
        std::size_t col = 0;
        while (std::getline(ls, c, ',')) {
            double v = 0.0;
            auto r = std::from_chars(c.data(), c.data() + c.size(), v);
            if (r.ec != std::errc()) throw Error("bad number '" + c + "' in waveform CSV");
            if (col == 0) w.t.push_back(v);
            else if (col - 1 < w.series.size()) w.series[col - 1].push_back(v);
            ++col;
        }
        if (col != head.size()) throw Error("ragged waveform CSV row");
    }
    if (w.t.size() > 1) w.step = w.t[1] - w.t[0];
    return w;
}

// ---------------------------------------------------------------------------
// period-level audits

namespace detail {
inline double trapz(const std::vector<double>& t, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 1; i < t.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (t[i] - t[i - 1]);
    return s;
}
}  // namespace detail

struct ModeDwell {
    Mode mode;
    double fraction;
};

// runs of constant mode over the window, merged, as fractions of the window length
inline std::vector<ModeDwell> mode_timeline(const WaveformSet& w, const std::string& g1, const std::string& g2) {
    std::vector<ModeDwell> out;
    if (w.t.size() < 2) return out;
    const auto& a = w["gate(" + g1 + ")"];
    const auto& b = w["gate(" + g2 + ")"];
    const double span = w.t.back() - w.t.front();
    for (std::size_t i = 1; i < w.t.size(); ++i) {
        const Mode m = classify_mode(GateState{{g1, g2}, {a[i] > 0.5, b[i] > 0.5}});
        const double f = (w.t[i] - w.t[i - 1]) / span;
        if (!out.empty() && out.back().mode == m) out.back().fraction += f;
        else out.push_back({m, f});
    }
    if (out.size() > 1 && out.front().mode == out.back().mode) {
        out.front().fraction += out.back().fraction;
        out.pop_back();
    }
    return out;
}

// integral of the voltage across an element over the window
inline double volt_seconds(const FlatNetlist& flat, const WaveformSet& w, const std::string& element) {
    const Element* e = flat.find(element);
    if (!e) throw Error("no element '" + element + "'");
    return detail::trapz(w.t, w.voltage(e->nodes[0], e->nodes[1]));
}

inline double net_charge(const WaveformSet& w, const std::string& element) {
    return detail::trapz(w.t, w["i(" + element + ")"]);
}

struct EnergyAudit {
    double source = 0.0;     // delivered by voltage sources
    double load = 0.0;       // dissipated in R elements
    double devices = 0.0;    // dissipated in switches and diodes (incl. forward drop)
    double esr = 0.0;
    double stored_change = 0.0;
    double imbalance = 0.0;  // |source - load - devices - esr - stored| / source
};

inline EnergyAudit energy_audit(const FlatNetlist& flat, const WaveformSet& w) {
    EnergyAudit a;
    std::vector<double> p(w.t.size());
    auto integrate = [&](const std::vector<double>& v, const std::vector<double>& i, double sign) {
        for (std::size_t k = 0; k < p.size(); ++k) p[k] = sign * v[k] * i[k];
        return detail::trapz(w.t, p);
    };
    for (const auto& e : flat.elements) {
        const std::string cur = "i(" + e.name + ")";
        switch (e.kind) {
            case ElementKind::V: a.source += integrate(w.voltage(e.nodes[0], e.nodes[1]), w[cur], -1.0); break;
            case ElementKind::R: a.load += integrate(w.voltage(e.nodes[0], e.nodes[1]), w[cur], 1.0); break;
            case ElementKind::S:
            case ElementKind::D: a.devices += integrate(w.voltage(e.nodes[0], e.nodes[1]), w[cur], 1.0); break;
            case ElementKind::C: {
                const double esr = e.param("esr", 0.0);
                const auto& i = w[cur];
                if (esr > 0.0) a.esr += esr * integrate(i, i, 1.0);
                const auto v = w.voltage(e.nodes[0], e.nodes[1]);
                // capacitor voltage excludes the ESR drop
                const double v0 = v.front() - esr * i.front(), v1 = v.back() - esr * i.back();
                a.stored_change += 0.5 * e.params.at("value") * (v1 * v1 - v0 * v0);
                break;
            }
            case ElementKind::L: {
                const auto& i = w[cur];
                a.stored_change += 0.5 * e.params.at("value") * (i.back() * i.back() - i.front() * i.front());
                break;
            }
            default: break;
        }
    }
    const double residual = a.source - a.load - a.devices - a.esr - a.stored_change;
    a.imbalance = a.source != 0.0 ? std::abs(residual / a.source) : std::abs(residual);
    return a;
}

}  // namespace hsconv
