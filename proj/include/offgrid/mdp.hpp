#pragma once

#include "offgrid/sparse.hpp"
#include "offgrid/structured_eval.hpp"

#include <string>

namespace offgrid {

/**
 * A finite average-reward MDP with one sparse transition matrix and one
 * expected-reward vector per action, and an ordering (root first) under which
 * every action's matrix splits into root column, diagonal and strictly
 * forward arcs.
 */
struct SparseMdp {
    std::size_t root = 0;
    std::vector<std::size_t> ordering;
    std::vector<SparseMatrix> transitions;
    std::vector<numvec> rewards;
    std::vector<std::string> action_ids;

    std::size_t states() const { return ordering.size(); }
    std::size_t actions() const { return transitions.size(); }

    /// Nonzeros of the largest action matrix.
    std::size_t arcs() const {
        std::size_t m = 0;
        for (const auto& P : transitions) m = std::max(m, P.nonzeros());
        return m;
    }

    /// Row sums, sizes, and the type-B split of every action.
    void validate(prec_t tolerance = 1e-12) const {
        if (transitions.empty()) throw ConfigError("MDP needs at least one action");
        if (rewards.size() != transitions.size()) throw ConfigError("one reward vector per action required");
        if (ordering.empty() || ordering.front() != root) throw StructureError("ordering must start at the root");
        for (std::size_t a = 0; a < actions(); ++a) {
            if (transitions[a].rows() != states() || rewards[a].size() != states())
                throw ConfigError("action " + std::to_string(a) + " has inconsistent dimensions");
            check_stochastic(transitions[a], tolerance);
            verify_type_b(transitions[a], ordering);
        }
    }
};

/// Deterministic stationary policy: action index per state.
struct Policy {
    std::vector<std::size_t> choice;

    bool operator==(const Policy&) const = default;
    std::size_t operator[](std::size_t s) const { return choice[s]; }
};

/// Rows of the chosen actions stacked into one matrix, with the matching rewards.
inline std::pair<SparseMatrix, numvec> policy_system(const SparseMdp& mdp, const Policy& policy) {
    const std::size_t n = mdp.states();
    if (policy.choice.size() != n) throw ConfigError("policy size does not match the state count");
    SparseMatrix P(n);
    numvec r(n);
    for (std::size_t s = 0; s < n; ++s) {
        const std::size_t a = policy.choice[s];
        if (a >= mdp.actions()) throw ConfigError("policy maps state " + std::to_string(s) + " to an unknown action");
        auto row = mdp.transitions[a].row(s);
        P.push_row(std::vector<SparseMatrix::Entry>(row.begin(), row.end()));
        r[s] = mdp.rewards[a][s];
    }
    return {std::move(P), std::move(r)};
}

} // namespace offgrid
