#pragma once

// Relative policy iteration with interchangeable evaluation backends, and
// relative value iteration.

#include "offgrid/mdp.hpp"
#include "offgrid/structured_eval.hpp"

#include <chrono>
#include <optional>

namespace offgrid {

enum class Evaluator { structured, fixed_point, direct };

inline const char* to_string(Evaluator e) {
    switch (e) {
    case Evaluator::structured: return "structured";
    case Evaluator::fixed_point: return "fixed_point";
    case Evaluator::direct: return "direct";
    }
    return "?";
}

using Clock = std::chrono::steady_clock;

struct SolverOptions {
    prec_t epsilon = 1e-10; ///< span tolerance of iterative methods
    std::size_t max_iterations = 100000;
    Evaluator evaluator = Evaluator::structured;
    /// Relative tolerance under which the incumbent action is kept.
    prec_t tie_tolerance = 1e-12;
    /// Abort with TimeoutError once passed.
    std::optional<Clock::time_point> deadline;

    void validate() const {
        if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
        if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
    }
};

class TimeoutError : public SolverError {
public:
    TimeoutError() : SolverError("time limit exceeded") {}
};

struct SolveReport {
    Policy policy;
    EvaluationResult evaluation; ///< at the returned policy
    std::size_t iterations = 0;  ///< outer iterations (PI rounds or RVI sweeps)
    bool converged = false;
    prec_t eval_seconds = 0.0;
    prec_t improve_seconds = 0.0;
    prec_t total_seconds = 0.0;
    OpCounter eval_ops;
    numvec rho_history; ///< rho of each evaluated policy (policy iteration)
};

namespace detail {

inline void check_deadline(const std::optional<Clock::time_point>& deadline) {
    if (deadline && Clock::now() > *deadline) throw TimeoutError();
}

inline prec_t seconds_since(Clock::time_point t) {
    return std::chrono::duration<prec_t>(Clock::now() - t).count();
}

} // namespace detail

/// Q values, row-major: q[s * actions + a].
struct QTable {
    std::size_t states = 0;
    std::size_t actions = 0;
    numvec q;

    prec_t operator()(std::size_t s, std::size_t a) const { return q[s * actions + a]; }
    prec_t& operator()(std::size_t s, std::size_t a) { return q[s * actions + a]; }
};

/// Q(s,a) = r(s,a) + sum_s' P^a[s,s'] V(s'). Undiscounted, as the average
/// reward Bellman equation requires.
inline QTable q_values(const SparseMdp& mdp, std::span<const prec_t> values) {
    QTable t{mdp.states(), mdp.actions(), numvec(mdp.states() * mdp.actions())};
    for (std::size_t a = 0; a < mdp.actions(); ++a) {
        const auto& P = mdp.transitions[a];
        const auto& r = mdp.rewards[a];
        for (std::size_t s = 0; s < t.states; ++s) {
            prec_t acc = r[s];
            for (const auto& e : P.row(s)) acc += e.value * values[e.col];
            t(s, a) = acc;
        }
    }
    return t;
}

/**
 * Greedy policy. The previous action is kept whenever it is within the tie
 * tolerance of the maximum; otherwise the lowest-index maximizer wins.
 */
inline Policy improve(const QTable& q, const Policy& previous, prec_t tie_tolerance = 1e-12) {
    Policy next;
    next.choice.resize(q.states);
    for (std::size_t s = 0; s < q.states; ++s) {
        prec_t best = q(s, 0);
        for (std::size_t a = 1; a < q.actions; ++a) best = std::max(best, q(s, a));
        const prec_t tol = tie_tolerance * std::max<prec_t>(1.0, std::abs(best));
        const std::size_t inc = previous.choice.empty() ? q.actions : previous.choice[s];
        if (inc < q.actions && q(s, inc) >= best - tol) {
            next.choice[s] = inc;
            continue;
        }
        for (std::size_t a = 0; a < q.actions; ++a)
            if (q(s, a) >= best - tol) {
                next.choice[s] = a;
                break;
            }
    }
    return next;
}

/// Structured evaluation of one policy system.
inline EvaluationResult evaluate_structured(const SparseMatrix& P, std::span<const prec_t> r,
                                            std::span<const std::size_t> ordering, OpCounter* ops = nullptr) {
    auto view = verify_type_b(P, ordering);
    return relative_evaluate(view, r, ops);
}

/**
 * Fixed-point relative evaluation: h <- r + P h - (r + P h)(root) until the
 * span of the increment drops below epsilon; rho is the span midpoint.
 * Starts from `warm` when given.
 */
inline EvaluationResult evaluate_fixed_point(const SparseMatrix& P, std::span<const prec_t> r, std::size_t root,
                                             prec_t epsilon, std::size_t max_iterations,
                                             std::span<const prec_t> warm = {}, OpCounter* ops = nullptr,
                                             const std::optional<Clock::time_point>& deadline = std::nullopt) {
    const std::size_t n = P.rows();
    numvec h(n, 0.0), w(n);
    if (warm.size() == n) h.assign(warm.begin(), warm.end());
    for (std::size_t it = 1; it <= max_iterations; ++it) {
        prec_t lo = std::numeric_limits<prec_t>::infinity(), hi = -lo;
        for (std::size_t s = 0; s < n; ++s) {
            prec_t acc = r[s];
            for (const auto& e : P.row(s)) acc += e.value * h[e.col];
            w[s] = acc;
            const prec_t d = acc - h[s];
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        if (ops) {
            ops->nonzeros += P.nonzeros();
            ops->state_ops += n;
        }
        const prec_t ref = w[root];
        for (std::size_t s = 0; s < n; ++s) h[s] = w[s] - ref;
        if (hi - lo < epsilon) {
            EvaluationResult out;
            out.values = std::move(h);
            out.rho = 0.5 * (hi + lo);
            return out;
        }
        if (it % 256 == 0) detail::check_deadline(deadline);
    }
    throw SolverError("fixed-point evaluation did not converge within " + std::to_string(max_iterations) +
                      " iterations");
}

/**
 * Direct relative evaluation. Solves (I - P) V + rho 1 = r with V(root) = 0
 * by dense Gaussian elimination with partial pivoting; the root's column
 * carries rho. O(n^3) time, O(n^2) memory.
 */
inline EvaluationResult evaluate_direct(const SparseMatrix& P, std::span<const prec_t> r, std::size_t root,
                                        OpCounter* ops = nullptr,
                                        const std::optional<Clock::time_point>& deadline = std::nullopt) {
    const std::size_t n = P.rows();
    const std::size_t w = n + 1; // augmented column
    numvec m(n * w, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        prec_t* row = &m[s * w];
        row[s] = 1.0;
        for (const auto& e : P.row(s)) row[e.col] -= e.value;
        row[root] = 1.0;
        row[n] = r[s];
    }
    std::size_t flops = 0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        prec_t best = std::abs(m[k * w + k]);
        for (std::size_t i = k + 1; i < n; ++i) {
            const prec_t v = std::abs(m[i * w + k]);
            if (v > best) {
                best = v;
                piv = i;
            }
        }
        if (!(best > 1e-300)) throw SolverError("singular evaluation system (policy not unichain?)");
        if (piv != k)
            for (std::size_t j = k; j < w; ++j) std::swap(m[k * w + j], m[piv * w + j]);
        const prec_t* pivot_row = &m[k * w];
        const prec_t inv = 1.0 / pivot_row[k];
        for (std::size_t i = k + 1; i < n; ++i) {
            prec_t* row = &m[i * w];
            const prec_t f = row[k] * inv;
            if (f == 0.0) continue;
            row[k] = 0.0;
            for (std::size_t j = k + 1; j < w; ++j) row[j] -= f * pivot_row[j];
            flops += w - k - 1;
        }
        if ((k & 63) == 0) detail::check_deadline(deadline);
    }
    numvec z(n);
    for (std::size_t k = n; k-- > 0;) {
        prec_t acc = m[k * w + n];
        for (std::size_t j = k + 1; j < n; ++j) acc -= m[k * w + j] * z[j];
        z[k] = acc / m[k * w + k];
        flops += n - k;
    }
    if (ops) {
        ops->nonzeros += P.nonzeros();
        ops->state_ops += flops;
    }
    EvaluationResult out;
    out.rho = z[root];
    z[root] = 0.0;
    out.values = std::move(z);
    return out;
}

/**
 * Relative policy iteration. Starts from action 0 everywhere and alternates
 * evaluation and greedy improvement until the policy repeats.
 */
inline SolveReport policy_iteration(const SparseMdp& mdp, const SolverOptions& opt) {
    opt.validate();
    const auto start = Clock::now();
    const std::size_t n = mdp.states();
    SolveReport rep;
    Policy pi{std::vector<std::size_t>(n, 0)};
    numvec warm;
    for (std::size_t k = 1;; ++k) {
        if (k > opt.max_iterations) throw SolverError("policy iteration did not terminate");
        detail::check_deadline(opt.deadline);
        auto t0 = Clock::now();
        auto [P, r] = policy_system(mdp, pi);
        EvaluationResult ev;
        switch (opt.evaluator) {
        case Evaluator::structured: ev = evaluate_structured(P, r, mdp.ordering, &rep.eval_ops); break;
        case Evaluator::fixed_point:
            ev = evaluate_fixed_point(P, r, mdp.root, opt.epsilon, opt.max_iterations, warm, &rep.eval_ops,
                                      opt.deadline);
            break;
        case Evaluator::direct: ev = evaluate_direct(P, r, mdp.root, &rep.eval_ops, opt.deadline); break;
        }
        rep.eval_seconds += detail::seconds_since(t0);
        rep.rho_history.push_back(ev.rho);

        t0 = Clock::now();
        Policy next = improve(q_values(mdp, ev.values), pi, opt.tie_tolerance);
        rep.improve_seconds += detail::seconds_since(t0);
        warm = ev.values;
        rep.iterations = k;
        if (next == pi) {
            rep.policy = std::move(pi);
            rep.evaluation = std::move(ev);
            rep.converged = true;
            break;
        }
        pi = std::move(next);
    }
    rep.total_seconds = detail::seconds_since(start);
    return rep;
}

/**
 * Relative value iteration with span stopping, reference state = root.
 * Returns the greedy policy of the final values; rho is the midpoint of the
 * last Bellman increment range. `converged` is false when the iteration cap
 * was hit first.
 */
inline SolveReport relative_value_iteration(const SparseMdp& mdp, const SolverOptions& opt) {
    opt.validate();
    const auto start = Clock::now();
    const std::size_t n = mdp.states();
    const std::size_t na = mdp.actions();
    SolveReport rep;
    numvec h(n, 0.0), w(n);
    prec_t lo = 0.0, hi = 0.0;
    for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
        lo = std::numeric_limits<prec_t>::infinity();
        hi = -lo;
        for (std::size_t s = 0; s < n; ++s) {
            prec_t best = -std::numeric_limits<prec_t>::infinity();
            for (std::size_t a = 0; a < na; ++a) {
                prec_t acc = mdp.rewards[a][s];
                for (const auto& e : mdp.transitions[a].row(s)) acc += e.value * h[e.col];
                best = std::max(best, acc);
            }
            w[s] = best;
            lo = std::min(lo, best - h[s]);
            hi = std::max(hi, best - h[s]);
        }
        const prec_t ref = w[mdp.root];
        for (std::size_t s = 0; s < n; ++s) h[s] = w[s] - ref;
        rep.iterations = it;
        if (hi - lo < opt.epsilon) {
            rep.converged = true;
            break;
        }
        if (it % 64 == 0) detail::check_deadline(opt.deadline);
    }
    rep.policy = improve(q_values(mdp, h), Policy{}, opt.tie_tolerance);
    rep.evaluation.values = std::move(h);
    rep.evaluation.rho = 0.5 * (lo + hi);
    rep.total_seconds = detail::seconds_since(start);
    return rep;
}

inline SolveReport solve(const SparseMdp& mdp, const SolverOptions& opt) { return policy_iteration(mdp, opt); }

} // namespace offgrid
