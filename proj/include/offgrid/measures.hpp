#pragma once

// Operator-facing measures at a policy, policy heatmaps, and multi-location
// comparison tables.

#include "offgrid/mdp_builder.hpp"
#include "offgrid/solvers.hpp"

#include <fstream>
#include <future>
#include <iomanip>
#include <set>
#include <thread>

namespace offgrid {

struct MeasureSet {
    prec_t expected_release_ep = 0.0; ///< mean g(x) sold per slot, in packets
    prec_t delay_probability = 0.0;
    prec_t expected_lost_ep = 0.0; ///< mean packets lost to overflow per slot
    prec_t combined = 0.0;         ///< rho under the full reward model
    prec_t packet_size_wh = 300.0;

    prec_t expected_release_wh() const { return expected_release_ep * packet_size_wh; }
    prec_t expected_lost_wh() const { return expected_lost_ep * packet_size_wh; }
};

namespace detail {

inline const ActionSpec& action_at(const StructuredMdp& mdp, const Policy& policy, std::size_t s) {
    return mdp.actions.at(policy.choice.at(s)).spec;
}

} // namespace detail

/**
 * Mean gain sold per slot: deadline states sell g(x) with certainty; a state
 * with x >= F sells g(x) when the phase persists and the release draw fires.
 */
inline prec_t expected_release(std::span<const prec_t> pi, const Policy& policy, const StructuredMdp& mdp) {
    const auto& cfg = mdp.config();
    CompensatedSum acc;
    for (std::size_t i = 0; i < mdp.states(); ++i) {
        const State& s = mdp.space[i];
        const prec_t g = mdp.rewards.g(s.level, cfg.threshold);
        if (s.hour == cfg.T) {
            acc.add(pi[i] * g);
        } else if (s.level >= cfg.threshold) {
            const prec_t stay = s.phase == Phase::on ? 1.0 - cfg.alpha : 1.0 - cfg.beta;
            acc.add(pi[i] * g * stay * detail::action_at(mdp, policy, i).release.at(s.level, s.phase));
        }
    }
    return acc.value();
}

/// Probability that a slot finds the battery empty while a demand is present.
inline prec_t delay_probability(std::span<const prec_t> pi, const Policy& policy, const StructuredMdp& mdp) {
    CompensatedSum acc;
    for (std::size_t i = 0; i < mdp.states(); ++i) {
        const State& s = mdp.space[i];
        if (s.level != 0) continue;
        acc.add(pi[i] * service_prob(mdp.inputs, detail::action_at(mdp, policy, i), s.hour));
    }
    return std::clamp(acc.value(), 0.0, 1.0);
}

/// Mean packets lost per slot to overflow; only ON states that keep the
/// battery and stay ON can overflow.
inline prec_t expected_lost(std::span<const prec_t> pi, const Policy& policy, const StructuredMdp& mdp) {
    const auto& cfg = mdp.config();
    CompensatedSum acc;
    for (std::size_t i = 0; i < mdp.states(); ++i) {
        const State& s = mdp.space[i];
        if (s.phase != Phase::on || s.hour == cfg.T || pi[i] == 0.0) continue;
        const auto& a = detail::action_at(mdp, policy, i);
        const prec_t keep = s.level >= cfg.threshold ? 1.0 - a.release.at(s.level, Phase::on) : 1.0;
        const prec_t b1 = service_prob(mdp.inputs, a, s.hour);
        const numvec& A = mdp.inputs.arrivals.pmf(s.hour);
        prec_t over = 0.0;
        for (std::size_t e = 0; e < A.size(); ++e) {
            const int x = s.level + static_cast<int>(e);
            over += A[e] * ((1.0 - b1) * std::max(0, x - cfg.capacity) + b1 * std::max(0, x - 1 - cfg.capacity));
        }
        acc.add(pi[i] * (1.0 - cfg.alpha) * keep * over);
    }
    return acc.value();
}

/// All measures at `policy` given its evaluation (pi must be present).
inline MeasureSet compute_measures(const StructuredMdp& mdp, const Policy& policy, const EvaluationResult& eval) {
    if (eval.pi.size() != mdp.states()) throw ConfigError("measures need the stationary distribution");
    MeasureSet m;
    m.expected_release_ep = expected_release(eval.pi, policy, mdp);
    m.delay_probability = delay_probability(eval.pi, policy, mdp);
    m.expected_lost_ep = expected_lost(eval.pi, policy, mdp);
    m.combined = eval.rho;
    m.packet_size_wh = mdp.config().packet_size_wh;
    return m;
}

/// Structured evaluation of a policy on the battery MDP.
inline EvaluationResult evaluate_policy(const StructuredMdp& mdp, const Policy& policy, OpCounter* ops = nullptr) {
    auto [P, r] = policy_system(mdp.core, policy);
    return evaluate_structured(P, r, mdp.core.ordering, ops);
}

// ---------------------------------------------------------------------------
// Heatmaps

/// Policy grid of one phase: rows are levels 0..C, columns hours t0..T.
struct PolicyGrid {
    static constexpr int unreachable = -1;
    static constexpr int forced_release = -2; ///< deadline column

    Phase phase = Phase::on;
    int t0 = 0, T = 0, capacity = 0, threshold = 0;
    std::vector<std::string> action_ids;
    std::vector<int> cells; ///< action index or a marker, row-major by level

    int rows() const { return capacity + 1; }
    int cols() const { return T - t0 + 1; }
    int at(int level, int hour) const { return cells[static_cast<std::size_t>(level * cols() + (hour - t0))]; }
    int& at(int level, int hour) { return cells[static_cast<std::size_t>(level * cols() + (hour - t0))]; }

    std::string label(int cell) const {
        if (cell == unreachable) return ".";
        if (cell == forced_release) return "release";
        return action_ids.at(static_cast<std::size_t>(cell));
    }
};

inline PolicyGrid policy_heatmap(const StructuredMdp& mdp, const Policy& policy, Phase phase) {
    const auto& cfg = mdp.config();
    PolicyGrid g;
    g.phase = phase;
    g.t0 = cfg.t0;
    g.T = cfg.T;
    g.capacity = cfg.capacity;
    g.threshold = cfg.threshold;
    g.action_ids = mdp.core.action_ids;
    g.cells.assign(static_cast<std::size_t>(g.rows() * g.cols()), PolicyGrid::unreachable);
    for (std::size_t i = 0; i < mdp.states(); ++i) {
        const State& s = mdp.space[i];
        if (s.phase != phase) continue;
        g.at(s.level, s.hour) = s.hour == cfg.T ? PolicyGrid::forced_release : static_cast<int>(policy.choice.at(i));
    }
    return g;
}

/// Header "level,h0,h1,..."; one row per level from C down to 0.
inline void write_heatmap_csv(const PolicyGrid& g, std::ostream& out) {
    out << "level";
    for (int h = g.t0; h <= g.T; ++h) out << ',' << h;
    out << '\n';
    for (int x = g.capacity; x >= 0; --x) {
        out << x;
        for (int h = g.t0; h <= g.T; ++h) out << ',' << g.label(g.at(x, h));
        out << '\n';
    }
}

namespace detail {

inline std::string palette(std::size_t i, std::size_t n) {
    // Blue to red ramp.
    const double t = n <= 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    const int r = static_cast<int>(40 + 200 * t), gr = static_cast<int>(90 + 60 * (1 - std::abs(2 * t - 1))),
              b = static_cast<int>(220 - 180 * t);
    std::ostringstream o;
    o << "rgb(" << r << ',' << gr << ',' << b << ')';
    return o.str();
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace detail

inline void write_heatmap_svg(const PolicyGrid& g, std::ostream& out) {
    const int cw = 28, ch = 9, left = 40, top = 30, legend_w = 120;
    const int width = left + g.cols() * cw + legend_w + 20;
    const int height = top + g.rows() * ch + 40;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"9\">\n";
    out << "<text x=\"" << left << "\" y=\"16\" font-size=\"12\">Policy, PV-" << to_string(g.phase) << "</text>\n";
    for (int x = 0; x <= g.capacity; ++x)
        for (int h = g.t0; h <= g.T; ++h) {
            const int cell = g.at(x, h);
            std::string fill = cell == PolicyGrid::unreachable    ? "#f4f4f4"
                               : cell == PolicyGrid::forced_release ? "#222222"
                                                                    : detail::palette(static_cast<std::size_t>(cell),
                                                                                      g.action_ids.size());
            const int px = left + (h - g.t0) * cw;
            const int py = top + (g.capacity - x) * ch;
            out << "<rect x=\"" << px << "\" y=\"" << py << "\" width=\"" << cw << "\" height=\"" << ch
                << "\" fill=\"" << fill << "\"><title>h=" << h << " x=" << x << ": "
                << detail::xml_escape(g.label(cell)) << "</title></rect>\n";
        }
    for (int x = 0; x <= g.capacity; x += 5)
        out << "<text x=\"" << left - 4 << "\" y=\"" << top + (g.capacity - x) * ch + ch - 1
            << "\" text-anchor=\"end\">" << x << "</text>\n";
    for (int h = g.t0; h <= g.T; ++h)
        out << "<text x=\"" << left + (h - g.t0) * cw + cw / 2 << "\" y=\"" << top + g.rows() * ch + 12
            << "\" text-anchor=\"middle\">" << h << "</text>\n";
    const int lx = left + g.cols() * cw + 12;
    for (std::size_t a = 0; a < g.action_ids.size(); ++a)
        out << "<rect x=\"" << lx << "\" y=\"" << top + 12 * a << "\" width=\"10\" height=\"10\" fill=\""
            << detail::palette(a, g.action_ids.size()) << "\"/><text x=\"" << lx + 14 << "\" y=\""
            << top + 12 * a + 9 << "\">" << detail::xml_escape(g.action_ids[a]) << "</text>\n";
    out << "<rect x=\"" << lx << "\" y=\"" << top + 12 * g.action_ids.size()
        << "\" width=\"10\" height=\"10\" fill=\"#222222\"/><text x=\"" << lx + 14 << "\" y=\""
        << top + 12 * g.action_ids.size() + 9 << "\">forced release</text>\n";
    out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Location comparison

struct LocationScenario {
    std::string label;
    int month = 1;
    EpDistributionSet arrivals;
};

/// Everything shared across scenarios; t0 and T come from each scenario.
struct ComparisonSetup {
    ModelConfig config;
    ServiceProfile service;
    RewardModel rewards;
    std::vector<prec_t> release_levels{0.1, 0.3, 0.5, 0.7, 0.9};
    SolverOptions solver;
};

struct ComparisonRow {
    std::string label;
    int month = 0;
    bool ok = false;
    std::string error;
    std::size_t states = 0;
    std::size_t iterations = 0;
    MeasureSet measures;
};

inline ComparisonRow solve_location(const LocationScenario& sc, const ComparisonSetup& setup) {
    ComparisonRow row;
    row.label = sc.label;
    row.month = sc.month;
    try {
        ModelInputs in;
        in.config = setup.config;
        in.config.t0 = sc.arrivals.t0;
        in.config.T = sc.arrivals.T;
        in.config.packet_size_wh = sc.arrivals.packet_size_wh;
        in.arrivals = sc.arrivals;
        in.service = setup.service;
        auto actions = uniform_release_actions(in.config, setup.release_levels);
        auto mdp = assemble_mdp(in, actions, setup.rewards);
        auto rep = policy_iteration(mdp.core, setup.solver);
        auto ev = evaluate_policy(mdp, rep.policy);
        row.states = mdp.states();
        row.iterations = rep.iterations;
        row.measures = compute_measures(mdp, rep.policy, ev);
        row.ok = true;
    } catch (const std::exception& e) {
        row.error = e.what();
    }
    return row;
}

/// Solves every scenario, at most `workers` at a time; failures are recorded
/// per row. Rows keep the scenario order.
inline std::vector<ComparisonRow> compare_locations(std::span<const LocationScenario> scenarios,
                                                    const ComparisonSetup& setup, unsigned workers = 0) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    std::vector<ComparisonRow> rows(scenarios.size());
    std::vector<std::future<ComparisonRow>> running;
    std::vector<std::size_t> slots;
    std::size_t next = 0;
    while (next < scenarios.size() || !running.empty()) {
        while (next < scenarios.size() && running.size() < workers) {
            running.push_back(std::async(std::launch::async, solve_location, std::cref(scenarios[next]),
                                         std::cref(setup)));
            slots.push_back(next++);
        }
        rows[slots.front()] = running.front().get();
        running.erase(running.begin());
        slots.erase(slots.begin());
    }
    return rows;
}

/// Columns: location, month, status, states, release_wh, delay_probability,
/// lost_wh, combined_rho, error.
inline void write_comparison_csv(std::span<const ComparisonRow> rows, std::ostream& out) {
    out << "location,month,status,states,release_wh,delay_probability,lost_wh,combined_rho,error\n";
    out << std::setprecision(10);
    for (const auto& r : rows) {
        out << r.label << ',' << r.month << ',' << (r.ok ? "ok" : "failed") << ',' << r.states << ',';
        if (r.ok)
            out << r.measures.expected_release_wh() << ',' << r.measures.delay_probability << ','
                << r.measures.expected_lost_wh() << ',' << r.measures.combined << ",";
        else
        {
            std::string msg = r.error;
            std::replace(msg.begin(), msg.end(), '"', '\'');
            out << ",,,,\"" << msg << '"';
        }
        out << '\n';
    }
}

/// One whitespace-separated series file per measure: a month column and one
/// column per location.
inline void write_comparison_series(std::span<const ComparisonRow> rows, const std::string& prefix) {
    std::vector<std::string> labels;
    std::map<std::pair<int, std::string>, const ComparisonRow*> index;
    for (const auto& r : rows) {
        if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
        index[{r.month, r.label}] = &r;
    }
    std::set<int> months;
    for (const auto& r : rows) months.insert(r.month);
    const std::pair<const char*, prec_t (*)(const MeasureSet&)> series[] = {
        {"release_wh", [](const MeasureSet& m) { return m.expected_release_wh(); }},
        {"delay", [](const MeasureSet& m) { return m.delay_probability; }},
        {"lost_wh", [](const MeasureSet& m) { return m.expected_lost_wh(); }},
        {"combined", [](const MeasureSet& m) { return m.combined; }},
    };
    for (const auto& [name, get] : series) {
        const std::string path = prefix + name + ".dat";
        std::ofstream f(path);
        if (!f) throw IoError("cannot write " + path);
        f << "# month";
        for (const auto& l : labels) f << ' ' << l;
        f << '\n' << std::setprecision(10);
        for (int m : months) {
            f << m;
            for (const auto& l : labels) {
                auto it = index.find({m, l});
                if (it == index.end() || !it->second->ok) f << " nan";
                else f << ' ' << get(it->second->measures);
            }
            f << '\n';
        }
    }
}

} // namespace offgrid
