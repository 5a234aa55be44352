#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hsconv/analytic.hpp"
#include "hsconv/error.hpp"

namespace hsconv {

enum class TopologyId { ref5, ref6, ref10, ref11, proposed };
enum class InputCurrent { continuous, discontinuous };

inline constexpr std::array<TopologyId, 5> kAllTopologies{TopologyId::ref5, TopologyId::ref6, TopologyId::ref10,
                                                          TopologyId::ref11, TopologyId::proposed};

inline const char* to_string(TopologyId id) {
    switch (id) {
        case TopologyId::ref5: return "ref5";
        case TopologyId::ref6: return "ref6";
        case TopologyId::ref10: return "ref10";
        case TopologyId::ref11: return "ref11";
        case TopologyId::proposed: return "proposed";
    }
    return "?";
}

inline TopologyId parse_topology(const std::string& s) {
    for (auto id : kAllTopologies)
        if (s == to_string(id)) return id;
    throw Error("unknown topology '" + s + "'");
}

inline const char* to_string(InputCurrent c) {
    return c == InputCurrent::continuous ? "continuous" : "discontinuous";
}

struct ComparisonRow {
    TopologyId topology = TopologyId::proposed;
    // nullopt when the duty or turns ratio lies outside the row's domain
    std::optional<double> gain;
    std::optional<double> vsw;
    std::optional<double> vd;
    int n_switches = 0;
    int n_diodes = 0;
    int n_caps = 0;
    int n_single_cores = 0;
    int n_coupled_cores = 0;
    bool shared_ground = false;
    InputCurrent input_current = InputCurrent::continuous;

    bool defined() const { return gain.has_value(); }
    bool operator==(const ComparisonRow&) const = default;
};

namespace detail {

inline ComparisonRow row_metadata(TopologyId id) {
    ComparisonRow r;
    r.topology = id;
    auto set = [&](int s, int d, int c, int single, int coupled, bool gnd, InputCurrent ic) {
        r.n_switches = s;
        r.n_diodes = d;
        r.n_caps = c;
        r.n_single_cores = single;
        r.n_coupled_cores = coupled;
        r.shared_ground = gnd;
        r.input_current = ic;
    };
    switch (id) {
        case TopologyId::ref5: set(2, 2, 4, 1, 1, true, InputCurrent::continuous); break;
        case TopologyId::ref6: set(2, 5, 4, 0, 2, false, InputCurrent::continuous); break;
        case TopologyId::ref10: set(1, 2, 3, 2, 0, true, InputCurrent::discontinuous); break;
        case TopologyId::ref11: set(2, 4, 4, 0, 2, true, InputCurrent::continuous); break;
        case TopologyId::proposed: set(2, 4, 4, 0, 2, false, InputCurrent::continuous); break;
    }
    return r;
}

}  // namespace detail

// Stress columns printed in terms of Vo are converted with that row's own Vo = gain*vin.
inline ComparisonRow topology_row(TopologyId id, double n, double duty, double vin) {
    if (!(duty > 0.0 && duty < 1.0)) throw DomainError("duty must lie in (0,1)");
    ComparisonRow r = detail::row_metadata(id);
    const double one_d = 1.0 - duty;
    switch (id) {
        case TopologyId::ref5: {
            if (n <= 1.0) return r;
            const double g = (2.0 * n - 1.0) / ((n - 1.0) * one_d);
            const double vo = g * vin;
            r.gain = g;
            r.vsw = vin / one_d;
            r.vd = n * vo / (2.0 * n - 1.0);
            break;
        }
        case TopologyId::ref6: {
            const double g = (3.0 * n + 1.0) / one_d;
            const double vo = g * vin;
            r.gain = g;
            r.vsw = vo / (3.0 * n + 1.0);
            r.vd = 2.0 * n * vo / (3.0 * n + 1.0);
            break;
        }
        case TopologyId::ref10: {
            if (duty >= 0.5) return r;
            const double g = 1.0 / (1.0 - 2.0 * duty);
            r.gain = g;
            r.vsw = g * vin;
            r.vd = g * vin;
            break;
        }
        case TopologyId::ref11: {
            const double g = 2.0 * (n + 1.0) / one_d;
            const double vo = g * vin;
            r.gain = g;
            r.vsw = vo / (2.0 * (n + 1.0));
            r.vd = n * vo / (n + 1.0);
            break;
        }
        case TopologyId::proposed:
            r.gain = voltage_gain(n, duty);
            r.vsw = switch_stress(vin, duty);
            r.vd = diode_stress(vin, duty);
            break;
    }
    return r;
}

// Same as topology_row but throws instead of returning an undefined row.
inline ComparisonRow topology_row_strict(TopologyId id, double n, double duty, double vin) {
    ComparisonRow r = topology_row(id, n, duty, vin);
    if (!r.defined())
        throw DomainError(std::string(to_string(id)) + " is undefined at N=" + std::to_string(n) +
                          ", D=" + std::to_string(duty));
    return r;
}

struct ComparisonTable {
    double n_ratio = 0.0;
    double duty = 0.0;
    double vin = 0.0;
    std::vector<ComparisonRow> rows;
};

inline ComparisonTable comparison_table(double n, double duty, double vin) {
    ComparisonTable t{n, duty, vin, {}};
    for (auto id : kAllTopologies) t.rows.push_back(topology_row(id, n, duty, vin));
    return t;
}

namespace detail {

inline std::string opt_num(const std::optional<double>& v, int prec) {
    if (!v) return "undefined";
    return fmt(*v, prec);
}

inline std::string counts(const ComparisonRow& r) {
    return std::to_string(r.n_switches) + "/" + std::to_string(r.n_diodes) + "/" + std::to_string(r.n_caps);
}

inline std::string pad(const std::string& s, std::size_t w) { return s + std::string(w - s.size(), ' '); }

}  // namespace detail

inline std::string render_markdown(const ComparisonTable& t) {
    const std::vector<std::string> head{"topology", "gain", "Vsw [V]", "Vd [V]", "S/D/C",
                                        "single cores", "coupled cores", "shared ground", "input current"};
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : t.rows)
        cells.push_back({to_string(r.topology), detail::opt_num(r.gain, 2), detail::opt_num(r.vsw, 2),
                         detail::opt_num(r.vd, 2), detail::counts(r), std::to_string(r.n_single_cores),
                         std::to_string(r.n_coupled_cores), r.shared_ground ? "yes" : "no",
                         to_string(r.input_current)});
    std::vector<std::size_t> w(head.size());
    for (std::size_t c = 0; c < head.size(); ++c) {
        w[c] = head[c].size();
        for (const auto& row : cells) w[c] = std::max(w[c], row[c].size());
    }
    std::ostringstream os;
    os << "Comparison at N=" << detail::fmt(t.n_ratio, 3) << ", D=" << detail::fmt(t.duty, 3)
       << ", Vin=" << detail::fmt(t.vin, 2) << " V (common input voltage for all rows)\n\n";
    auto line = [&](const std::vector<std::string>& v) {
        os << "|";
        for (std::size_t c = 0; c < v.size(); ++c) os << " " << detail::pad(v[c], w[c]) << " |";
        os << "\n";
    };
    line(head);
    os << "|";
    for (std::size_t c = 0; c < head.size(); ++c) os << std::string(w[c] + 2, '-') << "|";
    os << "\n";
    for (const auto& row : cells) line(row);
    return os.str();
}

inline constexpr const char* kCompareCsvHeader =
    "topology,gain,vsw,vd,n_switches,n_diodes,n_caps,n_single_cores,n_coupled_cores,shared_ground,input_current";

inline std::string render_csv(const ComparisonTable& t) {
    std::ostringstream os;
    os << kCompareCsvHeader << "\n";
    os.precision(17);
    auto num = [&](const std::optional<double>& v) {
        if (v) os << *v;
        else os << "undefined";
    };
    for (const auto& r : t.rows) {
        os << to_string(r.topology) << ",";
        num(r.gain);
        os << ",";
        num(r.vsw);
        os << ",";
        num(r.vd);
        os << "," << r.n_switches << "," << r.n_diodes << "," << r.n_caps << "," << r.n_single_cores << ","
           << r.n_coupled_cores << "," << (r.shared_ground ? "yes" : "no") << "," << to_string(r.input_current)
           << "\n";
    }
    return os.str();
}

inline std::vector<ComparisonRow> parse_compare_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kCompareCsvHeader) throw Error("compare CSV: unexpected header");
    std::vector<ComparisonRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != 11) throw Error("compare CSV: expected 11 fields in '" + line + "'");
        ComparisonRow r;
        r.topology = parse_topology(f[0]);
        auto num = [](const std::string& s) -> std::optional<double> {
            if (s == "undefined") return std::nullopt;
            return std::stod(s);
        };
        r.gain = num(f[1]);
        r.vsw = num(f[2]);
        r.vd = num(f[3]);
        r.n_switches = std::stoi(f[4]);
        r.n_diodes = std::stoi(f[5]);
        r.n_caps = std::stoi(f[6]);
        r.n_single_cores = std::stoi(f[7]);
        r.n_coupled_cores = std::stoi(f[8]);
        r.shared_ground = f[9] == "yes";
        r.input_current = f[10] == "continuous" ? InputCurrent::continuous : InputCurrent::discontinuous;
        rows.push_back(r);
    }
    return rows;
}

}  // namespace hsconv
