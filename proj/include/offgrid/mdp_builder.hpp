#pragma once

// Transition matrices and rewards of the battery MDP, one per action.

#include "offgrid/ingest.hpp"
#include "offgrid/mdp.hpp"
#include "offgrid/state_model.hpp"

#include <optional>
#include <unordered_map>

namespace offgrid {

/// Release probabilities Z_x^m for levels x in [F, C].
class ReleaseTable {
public:
    ReleaseTable() = default;
    ReleaseTable(int threshold, int capacity, numvec on, numvec off)
        : threshold_(threshold), capacity_(capacity), on_(std::move(on)), off_(std::move(off)) {
        const std::size_t width = static_cast<std::size_t>(capacity_ - threshold_ + 1);
        if (threshold_ <= 0 || capacity_ < threshold_ || on_.size() != width || off_.size() != width)
            throw ConfigError("release table must cover every level in [F, C] for both phases");
        for (const numvec* v : {&on_, &off_})
            for (prec_t z : *v)
                if (!(z >= 0.0 && z < 1.0)) throw ConfigError("release probability outside [0,1)");
    }

    /// Same probability for every level and both phases.
    static ReleaseTable uniform(int threshold, int capacity, prec_t z) {
        const std::size_t width = capacity >= threshold ? static_cast<std::size_t>(capacity - threshold + 1) : 0;
        return ReleaseTable(threshold, capacity, numvec(width, z), numvec(width, z));
    }

    int threshold() const noexcept { return threshold_; }
    int capacity() const noexcept { return capacity_; }

    /// Z_x^m[1]; level must be in [F, C].
    prec_t at(int level, Phase phase) const {
        if (level < threshold_ || level > capacity_)
            throw ConfigError("release probability undefined for level " + std::to_string(level));
        const auto& v = phase == Phase::on ? on_ : off_;
        return v[static_cast<std::size_t>(level - threshold_)];
    }

private:
    int threshold_ = 1;
    int capacity_ = 0;
    numvec on_, off_;
};

struct ActionSpec {
    std::string id;
    ReleaseTable release;
    /// Per-action service profile; the shared profile is used when empty.
    std::optional<ServiceProfile> service;
};

enum class GainFunction { identity, threshold_shifted };

struct RewardModel {
    prec_t release_reward = 1.0;    ///< r1 >= 0, per packet sold (scaled by g)
    prec_t loss_penalty = 0.0;      ///< r2 <= 0, per packet lost to overflow
    prec_t depletion_penalty = 0.0; ///< r3 <= 0, per demand left on an empty battery
    GainFunction gain = GainFunction::identity;

    prec_t g(int level, int threshold) const {
        return gain == GainFunction::identity ? static_cast<prec_t>(level) : static_cast<prec_t>(level - threshold);
    }

    void validate() const {
        if (!(release_reward >= 0.0)) throw ConfigError("release reward r1 must be >= 0");
        if (!(loss_penalty <= 0.0)) throw ConfigError("loss penalty r2 must be <= 0");
        if (!(depletion_penalty <= 0.0)) throw ConfigError("depletion penalty r3 must be <= 0");
    }
};

/// Everything the dynamics depend on apart from the action.
struct ModelInputs {
    ModelConfig config;
    EpDistributionSet arrivals;
    ServiceProfile service;
};

/// What one slot did to the battery.
struct EventOutcome {
    State next;
    bool release = false;      ///< battery sold (voluntary or at the deadline)
    int released_level = 0;    ///< level at the sale
    int lost = 0;              ///< max(0, x + e - b - C), arrival branch only
    bool empty_demand = false; ///< demand b = 1 and the battery ends the slot empty
};

/**
 * Reward of a single event. Shared by the matrix builder and the simulator.
 * A sale earns g(x) r1 and nothing else; otherwise overflow costs r2 per lost
 * packet and a demand that leaves the battery empty costs r3.
 */
inline prec_t event_reward(const EventOutcome& ev, const RewardModel& rm, int threshold) {
    if (ev.release) return rm.g(ev.released_level, threshold) * rm.release_reward;
    prec_t r = 0.0;
    if (ev.lost > 0) r += static_cast<prec_t>(ev.lost) * rm.loss_penalty;
    if (ev.empty_demand) r += rm.depletion_penalty;
    return r;
}

inline prec_t service_prob(const ModelInputs& in, const ActionSpec& a, int hour) {
    return a.service ? a.service->prob(hour) : in.service.prob(hour);
}

/**
 * Enumerates the (arrival, demand, release, phase-switch) outcomes of one
 * slot from state s under action a, calling fn(probability, outcome) for each
 * outcome of positive probability. Distinct outcomes may share a next state.
 */
template <class Fn>
void for_each_event(const ModelInputs& in, const ActionSpec& a, const State& s, Fn&& fn) {
    const ModelConfig& cfg = in.config;
    const int C = cfg.capacity;
    const int F = cfg.threshold;
    const State root{cfg.t0, 0, Phase::on};
    const State off_sink{cfg.t0, 0, Phase::off};
    auto emit = [&](prec_t p, const EventOutcome& ev) {
        if (p > 0.0) fn(p, ev);
    };

    if (s.hour == cfg.T) {
        emit(1.0, {State{cfg.t0, 0, s.phase}, true, s.level, 0, false});
        return;
    }
    if (s == off_sink) {
        emit(cfg.beta, {root});
        emit(1.0 - cfg.beta, {off_sink});
        return;
    }

    const prec_t b1 = service_prob(in, a, s.hour);
    const prec_t bprob[2] = {1.0 - b1, b1};

    if (s.phase == Phase::on) {
        const numvec& A = in.arrivals.pmf(s.hour);
        const prec_t stay = 1.0 - cfg.alpha;
        if (s == root) {
            emit(cfg.alpha, {off_sink});
            emit(stay * (A.empty() ? 0.0 : A[0]), {root});
            for (std::size_t e = 1; e < A.size(); ++e)
                for (int b = 0; b <= 1; ++b) {
                    const int ei = static_cast<int>(e);
                    const int next = std::max(std::min(ei, C) - b, 0);
                    emit(stay * A[e] * bprob[b],
                         {State{s.hour + 1, next, Phase::on}, false, 0, std::max(0, ei - b - C), b == 1 && next == 0});
                }
            return;
        }
        emit(cfg.alpha, {State{s.hour + 1, s.level, Phase::off}});
        prec_t keep = 1.0;
        if (s.level >= F) {
            const prec_t z = a.release.at(s.level, Phase::on);
            keep = 1.0 - z;
            emit(stay * z, {root, true, s.level, 0, false});
        }
        for (std::size_t e = 0; e < A.size(); ++e)
            for (int b = 0; b <= 1; ++b) {
                const int ei = static_cast<int>(e);
                const int next = std::max(std::min(s.level + ei, C) - b, 0);
                emit(stay * A[e] * bprob[b] * keep, {State{s.hour + 1, next, Phase::on}, false, 0,
                                                     std::max(0, s.level + ei - b - C), b == 1 && next == 0});
            }
        return;
    }

    emit(cfg.beta, {State{s.hour + 1, s.level, Phase::on}});
    const prec_t stay = 1.0 - cfg.beta;
    prec_t keep = 1.0;
    if (s.level >= F) {
        const prec_t z = a.release.at(s.level, Phase::off);
        keep = 1.0 - z;
        emit(stay * z, {off_sink, true, s.level, 0, false});
    }
    for (int b = 0; b <= 1; ++b) {
        const int next = std::max(s.level - b, 0);
        emit(stay * bprob[b] * keep, {State{s.hour + 1, next, Phase::off}, false, 0, 0, b == 1 && next == 0});
    }
}

/// Per-action matrices and the reward decomposition the measures need.
struct ActionModel {
    ActionSpec spec;
    SparseMatrix transitions;
    numvec transition_rewards; ///< aligned with transitions.entries(): mean reward given the transition
    numvec expected_reward;    ///< r(s,a)
    numvec release_gain;       ///< E[g(x) 1{sale}] per state
    numvec lost_packets;       ///< E[lost packets] per state
    numvec empty_demand;       ///< P(demand leaves the battery empty) per state
};

namespace detail {

inline void check_action(const ModelInputs& in, const ActionSpec& a) {
    const auto& cfg = in.config;
    if (a.release.threshold() != cfg.threshold || a.release.capacity() != cfg.capacity)
        throw ConfigError("action \"" + a.id + "\": release table does not cover [F, C]");
    if (a.service) a.service->validate_window(cfg.t0, cfg.T);
    in.service.validate_window(cfg.t0, cfg.T);
}

} // namespace detail

/// Builds matrix, rewards and reward components for one action.
inline ActionModel build_action(const ActionSpec& a, const ModelInputs& in, const RewardModel& rm,
                                const StateSpace& space) {
    detail::check_action(in, a);
    const std::size_t n = space.size();
    ActionModel out;
    out.spec = a;
    out.transitions = SparseMatrix(n);
    out.expected_reward.assign(n, 0.0);
    out.release_gain.assign(n, 0.0);
    out.lost_packets.assign(n, 0.0);
    out.empty_demand.assign(n, 0.0);
    const int F = in.config.threshold;

    struct Acc {
        CompensatedSum prob;
        CompensatedSum weighted_reward;
    };
    std::unordered_map<std::size_t, Acc> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        CompensatedSum total, rew, gain, lost, empty;
        for_each_event(in, a, space[i], [&](prec_t p, const EventOutcome& ev) {
            const std::size_t j = space.find(ev.next);
            if (j == StateSpace::npos)
                throw StructureError("transition from " + to_string(space[i]) + " leaves the state space at " +
                                     to_string(ev.next), i);
            const prec_t r = event_reward(ev, rm, F);
            auto& acc = row[j];
            acc.prob.add(p);
            acc.weighted_reward.add(p * r);
            total.add(p);
            rew.add(p * r);
            if (ev.release) gain.add(p * rm.g(ev.released_level, F));
            if (ev.lost > 0) lost.add(p * ev.lost);
            if (ev.empty_demand) empty.add(p);
        });
        if (std::abs(total.value() - 1.0) > 1e-9) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "outgoing probability of " << to_string(space[i]) << " under action \"" << a.id << "\" sums to "
                << total.value();
            throw StructureError(msg.str(), i);
        }
        std::vector<SparseMatrix::Entry> entries;
        entries.reserve(row.size());
        for (const auto& [j, acc] : row) entries.push_back({j, acc.prob.value()});
        std::sort(entries.begin(), entries.end(), [](auto& x, auto& y) { return x.col < y.col; });
        for (const auto& e : entries) {
            const auto& acc = row[e.col];
            out.transition_rewards.push_back(acc.weighted_reward.value() / acc.prob.value());
        }
        out.transitions.push_row(std::move(entries));
        out.expected_reward[i] = rew.value();
        out.release_gain[i] = gain.value();
        out.lost_packets[i] = lost.value();
        out.empty_demand[i] = empty.value();
    }
    return out;
}

inline SparseMatrix build_transition_matrix(const ActionSpec& a, const ModelInputs& in, const StateSpace& space) {
    return build_action(a, in, RewardModel{}, space).transitions;
}

struct RewardVectors {
    numvec transition_rewards; ///< aligned with the matrix entries
    numvec expected;           ///< r(s,a)
};

inline RewardVectors build_rewards(const ActionSpec& a, const ModelInputs& in, const RewardModel& rm,
                                   const StateSpace& space) {
    auto m = build_action(a, in, rm, space);
    return {std::move(m.transition_rewards), std::move(m.expected_reward)};
}

/// The battery MDP: state space, per-action models, and the generic view the
/// solvers consume.
struct StructuredMdp {
    ModelInputs inputs;
    RewardModel rewards;
    StateSpace space;
    std::vector<ActionModel> actions;
    SparseMdp core;

    const ModelConfig& config() const { return inputs.config; }
    std::size_t states() const { return space.size(); }
};

/**
 * Builds every action, computes the shared ordering from the union of the
 * action graphs and verifies the root-cycle structure of each action.
 */
inline StructuredMdp assemble_mdp(const ModelInputs& in, std::span<const ActionSpec> actions, const RewardModel& rm) {
    if (actions.empty()) throw ConfigError("at least one action is required");
    in.config.validate();
    rm.validate();
    if (std::abs(in.arrivals.packet_size_wh - in.config.packet_size_wh) > 1e-9)
        throw ConfigError("arrival distributions were built for a different packet size");

    StructuredMdp mdp;
    mdp.inputs = in;
    mdp.rewards = rm;
    mdp.space = enumerate_reachable_states(in.config, in.arrivals);
    for (const auto& a : actions) mdp.actions.push_back(build_action(a, in, rm, mdp.space));

    const std::size_t n = mdp.space.size();
    SparseMatrix graph(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<SparseMatrix::Entry> row;
        for (const auto& am : mdp.actions)
            for (const auto& e : am.transitions.row(i)) row.push_back({e.col, 1.0});
        graph.push_row(std::move(row));
    }
    auto& core = mdp.core;
    core.root = mdp.space.root();
    core.ordering = canonical_ordering(mdp.space, graph);
    for (const auto& am : mdp.actions) {
        core.transitions.push_back(am.transitions);
        core.rewards.push_back(am.expected_reward);
        core.action_ids.push_back(am.spec.id);
    }
    core.validate();
    return mdp;
}

/// Actions with constant release probability over x >= F and both phases.
inline std::vector<ActionSpec> uniform_release_actions(const ModelConfig& cfg, std::span<const prec_t> zs) {
    std::vector<ActionSpec> out;
    for (prec_t z : zs) {
        std::ostringstream id;
        id << "Z=" << z;
        out.push_back({id.str(), ReleaseTable::uniform(cfg.threshold, cfg.capacity, z), std::nullopt});
    }
    return out;
}

} // namespace offgrid
