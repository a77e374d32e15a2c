#pragma once

// Scaled battery instances and the solver timing harness.

#include "offgrid/measures.hpp"

#include <cmath>

namespace offgrid {

/// Bell-shaped hourly arrivals over a day of `hours` slots.
inline EpDistributionSet synthetic_arrivals(int t0, int T, int max_batch, prec_t packet_size_wh = 300.0) {
    EpDistributionSet d;
    d.month = 6;
    d.packet_size_wh = packet_size_wh;
    d.t0 = t0;
    d.T = T;
    const prec_t mid = 0.5 * (t0 + T);
    const prec_t width = std::max<prec_t>(1.0, 0.3 * (T - t0));
    for (int h = t0; h <= T; ++h) {
        // Binomial(max_batch, p) with p following a Gaussian bump.
        const prec_t p = 0.05 + 0.6 * std::exp(-0.5 * std::pow((h - mid) / width, 2));
        numvec pmf(static_cast<std::size_t>(max_batch) + 1);
        for (int k = 0; k <= max_batch; ++k)
            pmf[static_cast<std::size_t>(k)] =
                std::exp(std::lgamma(max_batch + 1.0) - std::lgamma(k + 1.0) - std::lgamma(max_batch - k + 1.0) +
                         k * std::log(p) + (max_batch - k) * std::log1p(-p));
        CompensatedSum s;
        for (prec_t v : pmf) s.add(v);
        for (prec_t& v : pmf) v /= s.value();
        d.dists[h] = std::move(pmf);
    }
    return d;
}

struct ScenarioSpec {
    std::string name;
    std::size_t target_states = 100;
    std::size_t actions = 5;
};

/// Model inputs whose reachable state count is closest to the target.
struct ScaledInstance {
    ModelInputs inputs;
    std::vector<ActionSpec> actions;
};

/**
 * Scales the battery model to roughly `target_states` states: up to 24 hourly
 * slots, batches of at most max(20, C/20) packets (and at most C/2), capacity
 * found by bisection, F about C/3, and `action_count` uniform release levels
 * spread over [0.05, 0.95]. Below about 20000 states the batch cap stays at 20,
 * so density is fixed there.
 */
inline ScaledInstance scaled_battery_instance(std::size_t target_states, std::size_t action_count) {
    if (target_states < 2) throw ConfigError("scaled instances need at least 2 states");
    if (action_count < 1) throw ConfigError("scaled instances need at least 1 action");
    auto make = [](int hours, int capacity) {
        ModelInputs in;
        in.config.t0 = 0;
        in.config.T = hours;
        in.config.capacity = capacity;
        in.config.threshold = std::max(1, capacity / 3);
        in.config.alpha = 0.02;
        in.config.beta = 0.6;
        in.arrivals = synthetic_arrivals(0, hours, std::min(std::max(20, capacity / 20), std::max(1, capacity / 2)));
        std::map<int, prec_t> b;
        for (int h = 0; h <= hours; ++h) b[h] = 0.3;
        in.service = build_service_profile(b);
        return in;
    };
    auto count = [&](int hours, int capacity) {
        const auto in = make(hours, capacity);
        return enumerate_reachable_states(in.config, in.arrivals).size();
    };
    auto dist = [&](std::size_t n) {
        return n > target_states ? n - target_states : target_states - n;
    };
    int best_hours = 1, best_cap = 1;
    std::size_t best_gap = std::numeric_limits<std::size_t>::max();
    for (int hours = 23; hours >= 1; --hours) {
        int lo = 1, hi = 1;
        while (count(hours, hi) < target_states && hi < (1 << 16)) hi *= 2;
        while (lo < hi) {
            const int mid = lo + (hi - lo) / 2;
            if (count(hours, mid) < target_states) lo = mid + 1;
            else hi = mid;
        }
        for (int c : {lo - 1, lo}) {
            if (c < 1) continue;
            const std::size_t g = dist(count(hours, c));
            if (g < best_gap) {
                best_gap = g;
                best_hours = hours;
                best_cap = c;
            }
        }
        if (best_gap * 20 <= target_states) break;
    }
    ScaledInstance out;
    out.inputs = make(best_hours, best_cap);
    std::vector<prec_t> zs(action_count);
    for (std::size_t k = 0; k < action_count; ++k)
        zs[k] = action_count == 1 ? 0.5 : 0.05 + 0.9 * static_cast<prec_t>(k) / static_cast<prec_t>(action_count - 1);
    out.actions = uniform_release_actions(out.inputs.config, zs);
    return out;
}

inline StructuredMdp build_scaled_mdp(std::size_t target_states, std::size_t action_count,
                                      const RewardModel& rm = {}) {
    auto inst = scaled_battery_instance(target_states, action_count);
    return assemble_mdp(inst.inputs, inst.actions, rm);
}

enum class SolverKind { rvi, rpi_fp, rpi_gj, rpi_rb };

inline const char* to_string(SolverKind k) {
    switch (k) {
    case SolverKind::rvi: return "rvi";
    case SolverKind::rpi_fp: return "rpi-fp";
    case SolverKind::rpi_gj: return "rpi-gj";
    case SolverKind::rpi_rb: return "rpi-rb";
    }
    return "?";
}

inline SolverKind parse_solver_kind(std::string_view s) {
    if (s == "rvi") return SolverKind::rvi;
    if (s == "rpi-fp") return SolverKind::rpi_fp;
    if (s == "rpi-gj") return SolverKind::rpi_gj;
    if (s == "rpi-rb") return SolverKind::rpi_rb;
    throw ConfigError("unknown solver \"" + std::string(s) + "\" (expected rvi, rpi-fp, rpi-gj, rpi-rb)");
}

struct BenchmarkRow {
    std::string scenario;
    std::size_t states = 0;
    std::size_t actions = 0;
    std::size_t arcs = 0;
    SolverKind solver = SolverKind::rpi_rb;
    bool exceeded = false;
    bool converged = false;
    prec_t seconds = 0.0;
    std::size_t outer_iterations = 0;
    std::size_t eval_ops = 0;
    prec_t rho = 0.0;
};

inline SolveReport run_solver(const SparseMdp& mdp, SolverKind kind, SolverOptions opt) {
    switch (kind) {
    case SolverKind::rvi: return relative_value_iteration(mdp, opt);
    case SolverKind::rpi_fp: opt.evaluator = Evaluator::fixed_point; break;
    case SolverKind::rpi_gj: opt.evaluator = Evaluator::direct; break;
    case SolverKind::rpi_rb: opt.evaluator = Evaluator::structured; break;
    }
    return policy_iteration(mdp, opt);
}

/// Runs every solver on every scenario, one at a time. A run that passes
/// `timeout_seconds` is recorded as exceeded.
inline std::vector<BenchmarkRow> benchmark_suite(std::span<const ScenarioSpec> scenarios,
                                                 std::span<const SolverKind> solvers, SolverOptions options,
                                                 prec_t timeout_seconds) {
    std::vector<BenchmarkRow> rows;
    for (const auto& sc : scenarios) {
        const auto mdp = build_scaled_mdp(sc.target_states, sc.actions);
        for (SolverKind k : solvers) {
            BenchmarkRow row;
            row.scenario = sc.name;
            row.states = mdp.states();
            row.actions = mdp.core.actions();
            row.arcs = mdp.core.arcs();
            row.solver = k;
            SolverOptions opt = options;
            const auto start = Clock::now();
            opt.deadline = start + std::chrono::duration_cast<Clock::duration>(
                                       std::chrono::duration<prec_t>(timeout_seconds));
            try {
                auto rep = run_solver(mdp.core, k, opt);
                row.converged = rep.converged;
                row.outer_iterations = rep.iterations;
                row.eval_ops = rep.eval_ops.total();
                row.rho = rep.evaluation.rho;
            } catch (const TimeoutError&) {
                row.exceeded = true;
            }
            row.seconds = detail::seconds_since(start);
            rows.push_back(row);
        }
    }
    return rows;
}

/// Columns: scenario, states, actions, solver, seconds, outer_iterations,
/// eval_ops. Timed-out cells read "exceeded".
inline void write_benchmark_csv(std::span<const BenchmarkRow> rows, std::ostream& out) {
    out << "scenario,states,actions,solver,seconds,outer_iterations,eval_ops\n";
    for (const auto& r : rows) {
        out << r.scenario << ',' << r.states << ',' << r.actions << ',' << to_string(r.solver) << ',';
        if (r.exceeded) out << "exceeded,exceeded,exceeded\n";
        else out << std::setprecision(6) << r.seconds << ',' << r.outer_iterations << ',' << r.eval_ops << '\n';
    }
}

inline void write_benchmark_table(std::span<const BenchmarkRow> rows, std::ostream& out) {
    out << std::left << std::setw(12) << "scenario" << std::right << std::setw(8) << "|S|" << std::setw(6) << "|A|"
        << "  " << std::left << std::setw(8) << "solver" << std::right << std::setw(12) << "seconds" << std::setw(12)
        << "iterations" << std::setw(16) << "eval ops" << '\n';
    for (const auto& r : rows) {
        out << std::left << std::setw(12) << r.scenario << std::right << std::setw(8) << r.states << std::setw(6)
            << r.actions << "  " << std::left << std::setw(8) << to_string(r.solver) << std::right;
        if (r.exceeded) {
            out << std::setw(12) << "exceeded" << std::setw(12) << "-" << std::setw(16) << "-" << '\n';
        } else {
            std::ostringstream secs;
            secs << std::fixed << std::setprecision(3) << r.seconds;
            out << std::setw(12) << secs.str() << std::setw(12) << r.outer_iterations << std::setw(16) << r.eval_ops
                << (r.converged ? "" : "  (not converged)") << '\n';
        }
    }
}

} // namespace offgrid
