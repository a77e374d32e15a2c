#pragma once

// Exact linear-time steady state and relative policy evaluation for chains
// whose directed cycles all pass through a single root state.
//
// Under an ordering with the root first, every arc of such a chain either
// enters the root (C part), is a self-loop (diagonal D), or goes strictly
// forward (U part). Balance equations then solve by a forward sweep and the
// average-reward Bellman equations by a backward sweep.

#include "offgrid/core.hpp"
#include "offgrid/sparse.hpp"

#include <sstream>

namespace offgrid {

/// Counts of work done by the evaluators.
struct OpCounter {
    std::size_t nonzeros = 0;  ///< matrix entries visited
    std::size_t state_ops = 0; ///< per-state scalar steps

    std::size_t total() const noexcept { return nonzeros + state_ops; }
    OpCounter& operator+=(const OpCounter& o) {
        nonzeros += o.nonzeros;
        state_ops += o.state_ops;
        return *this;
    }
};

/**
 * A transition matrix split under an ordering. Everything is indexed by
 * position in the ordering; position 0 is the root.
 */
struct TypeBView {
    std::vector<std::size_t> order;    ///< position -> state
    std::vector<std::size_t> position; ///< state -> position
    numvec diagonal;                   ///< self-loop mass per position
    numvec to_root;                    ///< C entry per position (root: 0, its loop is diagonal)
    std::vector<std::size_t> u_ptr;    ///< U arcs of position p: [u_ptr[p], u_ptr[p+1])
    std::vector<std::size_t> u_col;    ///< target positions, strictly greater than the row
    numvec u_val;
    std::vector<char> closing; ///< single arc of probability 1 into the root
    std::size_t arcs = 0;      ///< nonzeros of the source matrix

    std::size_t size() const noexcept { return order.size(); }
    std::size_t root() const { return order.front(); }
    std::size_t closing_count() const {
        std::size_t c = 0;
        for (char f : closing) c += f != 0;
        return c;
    }
};

/**
 * Splits P into C + U + D under `ordering` (ordering[0] is the root).
 *
 * Throws StructureError carrying the offending arc when an arc u -> v with
 * v != root, u != v runs backwards, and when a non-root state is absorbing.
 */
inline TypeBView verify_type_b(const SparseMatrix& P, std::span<const std::size_t> ordering,
                               prec_t closing_tolerance = 1e-12) {
    const std::size_t n = P.rows();
    if (P.cols() != n) throw StructureError("transition matrix is not square");
    if (ordering.size() != n || n == 0) throw StructureError("ordering size does not match the matrix");

    TypeBView v;
    v.order.assign(ordering.begin(), ordering.end());
    v.position.assign(n, n);
    for (std::size_t p = 0; p < n; ++p) {
        if (v.order[p] >= n || v.position[v.order[p]] != n) throw StructureError("ordering is not a permutation");
        v.position[v.order[p]] = p;
    }
    const std::size_t root = v.order[0];
    v.diagonal.assign(n, 0.0);
    v.to_root.assign(n, 0.0);
    v.closing.assign(n, 0);
    v.u_ptr.reserve(n + 1);
    v.u_ptr.push_back(0);
    v.arcs = P.nonzeros();

    for (std::size_t p = 0; p < n; ++p) {
        const std::size_t s = v.order[p];
        auto row = P.row(s);
        const std::size_t first_u = v.u_col.size();
        for (const auto& e : row) {
            if (e.col == s) {
                v.diagonal[p] += e.value;
            } else if (e.col == root) {
                v.to_root[p] += e.value;
            } else {
                const std::size_t q = v.position[e.col];
                if (q <= p) {
                    std::ostringstream msg;
                    msg << "arc " << s << " -> " << e.col << " runs against the ordering (positions " << p
                        << " -> " << q << ")";
                    throw StructureError(msg.str(), s, e.col);
                }
                v.u_col.push_back(q);
                v.u_val.push_back(e.value);
            }
        }
        // Keep U arcs of a row sorted by target position for a predictable sweep.
        {
            std::vector<std::pair<std::size_t, prec_t>> tmp;
            for (std::size_t k = first_u; k < v.u_col.size(); ++k) tmp.emplace_back(v.u_col[k], v.u_val[k]);
            std::sort(tmp.begin(), tmp.end());
            for (std::size_t k = 0; k < tmp.size(); ++k) {
                v.u_col[first_u + k] = tmp[k].first;
                v.u_val[first_u + k] = tmp[k].second;
            }
        }
        v.u_ptr.push_back(v.u_col.size());
        if (p > 0) {
            if (v.diagonal[p] >= 1.0 - 1e-15) {
                std::ostringstream msg;
                msg << "state " << s << " is absorbing (self-loop probability " << v.diagonal[p] << ")";
                throw StructureError(msg.str(), s, s);
            }
            v.closing[p] = row.size() == 1 && row[0].col == root && std::abs(row[0].value - 1.0) <= closing_tolerance;
        }
    }
    return v;
}

/**
 * Stationary distribution by the forward sweep
 *   a(root) = 1,  a(s) = sum_{s' before s} a(s') U[s',s] / (1 - D[s,s]),
 *   Pi = a / sum(a).
 * Returned in state indexing.
 */
inline numvec steady_state(const TypeBView& v, OpCounter* ops = nullptr) {
    const std::size_t n = v.size();
    numvec acc(n, 0.0);
    CompensatedSum total;
    OpCounter local;
    for (std::size_t p = 0; p < n; ++p) {
        prec_t a;
        if (p == 0) {
            a = 1.0;
        } else {
            a = acc[p] / (1.0 - v.diagonal[p]);
        }
        acc[p] = a;
        total.add(a);
        ++local.state_ops;
        for (std::size_t k = v.u_ptr[p]; k < v.u_ptr[p + 1]; ++k) acc[v.u_col[k]] += a * v.u_val[k];
        local.nonzeros += v.u_ptr[p + 1] - v.u_ptr[p];
    }
    const prec_t norm = total.value();
    if (!std::isfinite(norm) || !(norm > 0.0)) throw StructureError("steady-state normalization is not finite");
    numvec pi(n);
    for (std::size_t p = 0; p < n; ++p) pi[v.order[p]] = acc[p] / norm;
    local.state_ops += n;
    if (ops) *ops += local;
    return pi;
}

struct EvaluationResult {
    numvec values; ///< relative values, zero at the root
    prec_t rho = 0.0;
    numvec pi; ///< stationary distribution; empty when the evaluator does not produce one
};

/**
 * Relative policy evaluation: rho = Pi . r, V(root) = 0 and, sweeping
 * positions backwards,
 *   V(s) = (r(s) - rho + sum_{s'} U[s,s'] V(s') + C[s] V(root)) / (1 - D[s,s]).
 * States with a single probability-1 arc into the root get V = r - rho.
 */
inline EvaluationResult relative_evaluate(const TypeBView& v, std::span<const prec_t> rewards,
                                          OpCounter* ops = nullptr) {
    const std::size_t n = v.size();
    if (rewards.size() != n) throw std::invalid_argument("relative_evaluate: reward vector size mismatch");
    EvaluationResult out;
    OpCounter local;
    out.pi = steady_state(v, &local);

    CompensatedSum rho;
    for (std::size_t s = 0; s < n; ++s) rho.add(out.pi[s] * rewards[s]);
    out.rho = rho.value();
    local.state_ops += n;

    numvec vp(n, 0.0); // by position
    const prec_t v_root = 0.0;
    for (std::size_t p = n; p-- > 1;) {
        const std::size_t s = v.order[p];
        ++local.state_ops;
        if (v.closing[p]) {
            vp[p] = rewards[s] - out.rho;
            ++local.nonzeros;
            continue;
        }
        prec_t acc = rewards[s] - out.rho + v.to_root[p] * v_root;
        for (std::size_t k = v.u_ptr[p]; k < v.u_ptr[p + 1]; ++k) acc += v.u_val[k] * vp[v.u_col[k]];
        local.nonzeros += v.u_ptr[p + 1] - v.u_ptr[p];
        vp[p] = acc / (1.0 - v.diagonal[p]);
    }
    out.values.assign(n, 0.0);
    for (std::size_t p = 0; p < n; ++p) out.values[v.order[p]] = vp[p];
    if (ops) *ops += local;
    return out;
}

/// max_s |r(s) - rho + (P V)(s) - V(s)|
inline prec_t bellman_residual(const SparseMatrix& P, std::span<const prec_t> rewards, const EvaluationResult& e) {
    prec_t worst = 0.0;
    for (std::size_t s = 0; s < P.rows(); ++s) {
        prec_t acc = rewards[s] - e.rho;
        for (const auto& x : P.row(s)) acc += x.value * e.values[x.col];
        worst = std::max(worst, std::abs(acc - e.values[s]));
    }
    return worst;
}

/// max_s |(Pi P)(s) - Pi(s)|
inline prec_t balance_residual(const SparseMatrix& P, std::span<const prec_t> pi) {
    numvec next = P.left_multiply(pi);
    return max_abs_diff(next, pi);
}

} // namespace offgrid
