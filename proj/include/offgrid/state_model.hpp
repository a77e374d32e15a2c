#pragma once

#include "offgrid/core.hpp"
#include "offgrid/ingest.hpp"
#include "offgrid/sparse.hpp"

#include <compare>
#include <deque>
#include <functional>
#include <queue>
#include <sstream>
#include <tuple>

namespace offgrid {

/// Operational status of the PV panel.
enum class Phase : std::uint8_t { on = 0, off = 1 };

inline const char* to_string(Phase p) { return p == Phase::on ? "ON" : "OFF"; }

/// Battery model parameters. Hours are absolute hours of the day.
struct ModelConfig {
    int t0 = 7;                  ///< first production hour
    int T = 18;                  ///< deadline hour, releases are forced here
    int capacity = 65;           ///< battery capacity C in energy packets
    int threshold = 25;          ///< release threshold F in energy packets
    prec_t alpha = 0.01;         ///< P(ON -> OFF)
    prec_t beta = 0.95;          ///< P(OFF -> ON)
    prec_t packet_size_wh = 300; ///< watt-hours per energy packet

    void validate() const {
        auto fail = [](const std::string& m) { throw ConfigError("invalid model configuration: " + m); };
        if (!(t0 >= 0 && t0 < T && T <= 23)) fail("requires 0 <= t0 < T <= 23");
        if (!(capacity > 0)) fail("capacity C must be positive");
        if (!(threshold > 0 && threshold <= capacity)) fail("requires 0 < F <= C");
        if (!(alpha >= 0.0 && alpha < 1.0)) fail("alpha must lie in [0,1)");
        if (!(beta > 0.0 && beta <= 1.0)) fail("beta must lie in (0,1]");
        if (!(packet_size_wh > 0.0)) fail("packet_size_wh must be positive");
    }
};

struct State {
    int hour = 0;
    int level = 0;
    Phase phase = Phase::on;

    auto operator<=>(const State&) const = default;
};

inline std::string to_string(const State& s) {
    std::ostringstream o;
    o << '(' << s.hour << ',' << s.level << ',' << to_string(s.phase) << ')';
    return o.str();
}

/// Reachable states of one battery model, root (t0,0,ON) at ordinal 0.
class StateSpace {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    StateSpace() = default;

    StateSpace(const ModelConfig& config, std::vector<State> states) : config_(config), states_(std::move(states)) {
        const std::size_t hours = static_cast<std::size_t>(config_.T - config_.t0 + 1);
        const std::size_t levels = static_cast<std::size_t>(config_.capacity + 1);
        lookup_.assign(hours * levels * 2, npos);
        for (std::size_t i = 0; i < states_.size(); ++i) {
            const State& s = states_[i];
            if (!in_box(s)) throw StructureError("state " + to_string(s) + " outside the model box");
            auto& slot = lookup_[slot_of(s)];
            if (slot != npos) throw StructureError("duplicate state " + to_string(s));
            slot = i;
        }
        if (states_.empty() || states_[0] != root_state())
            throw StructureError("state sequence must start with the root state");
    }

    const ModelConfig& config() const noexcept { return config_; }
    std::size_t size() const noexcept { return states_.size(); }
    const State& operator[](std::size_t i) const { return states_[i]; }
    std::span<const State> states() const noexcept { return states_; }

    State root_state() const { return {config_.t0, 0, Phase::on}; }
    State off_sink_state() const { return {config_.t0, 0, Phase::off}; }
    std::size_t root() const noexcept { return 0; }
    std::size_t off_sink() const { return find(off_sink_state()); }

    bool in_box(const State& s) const {
        return s.hour >= config_.t0 && s.hour <= config_.T && s.level >= 0 && s.level <= config_.capacity;
    }

    /// Ordinal of s, or npos when s is not in the space.
    std::size_t find(const State& s) const { return in_box(s) ? lookup_[slot_of(s)] : npos; }

    std::size_t index(const State& s) const {
        auto i = find(s);
        if (i == npos) throw StructureError("state " + to_string(s) + " not in state space");
        return i;
    }

private:
    std::size_t slot_of(const State& s) const {
        const std::size_t levels = static_cast<std::size_t>(config_.capacity + 1);
        return (static_cast<std::size_t>(s.hour - config_.t0) * levels + static_cast<std::size_t>(s.level)) * 2 +
               static_cast<std::size_t>(s.phase);
    }

    ModelConfig config_;
    std::vector<State> states_;
    std::vector<std::size_t> lookup_;
};

/**
 * Calls fn(next) for every state that can follow s under some action: every
 * arrival batch with positive probability, demand b in {0,1}, release or not
 * when level >= F, and phase switch when the switch probability is positive.
 * Successors may repeat.
 */
template <class Fn>
void for_each_structural_successor(const ModelConfig& cfg, const EpDistributionSet& arrivals, const State& s,
                                   Fn&& fn) {
    const int C = cfg.capacity;
    const State root{cfg.t0, 0, Phase::on};
    const State off_sink{cfg.t0, 0, Phase::off};

    if (s.hour == cfg.T) {
        fn(State{cfg.t0, 0, s.phase});
        return;
    }
    if (s == off_sink) {
        fn(root);
        if (cfg.beta < 1.0) fn(off_sink);
        return;
    }
    if (s.phase == Phase::on) {
        const auto& pmf = arrivals.pmf(s.hour);
        if (s == root) {
            if (cfg.alpha > 0.0) fn(off_sink);
            if (!pmf.empty() && pmf[0] > 0.0) fn(root);
            for (std::size_t e = 1; e < pmf.size(); ++e) {
                if (!(pmf[e] > 0.0)) continue;
                for (int b = 0; b <= 1; ++b)
                    fn(State{s.hour + 1, std::max(std::min(static_cast<int>(e), C) - b, 0), Phase::on});
            }
            return;
        }
        if (cfg.alpha > 0.0) fn(State{s.hour + 1, s.level, Phase::off});
        if (s.level >= cfg.threshold) fn(root);
        for (std::size_t e = 0; e < pmf.size(); ++e) {
            if (!(pmf[e] > 0.0)) continue;
            for (int b = 0; b <= 1; ++b)
                fn(State{s.hour + 1, std::max(std::min(s.level + static_cast<int>(e), C) - b, 0), Phase::on});
        }
        return;
    }
    fn(State{s.hour + 1, s.level, Phase::on});
    if (cfg.beta < 1.0) {
        if (s.level >= cfg.threshold) fn(off_sink);
        for (int b = 0; b <= 1; ++b) fn(State{s.hour + 1, std::max(s.level - b, 0), Phase::off});
    }
}

/**
 * Enumerates every state reachable from (t0,0,ON). States are sorted by
 * (hour, level, phase), which puts the root first.
 *
 * With require_batches_below_capacity every batch must be smaller than C, the
 * simplification under which a single arrival can never overflow an empty
 * battery.
 */
inline StateSpace enumerate_reachable_states(const ModelConfig& cfg, const EpDistributionSet& arrivals,
                                             bool require_batches_below_capacity = false) {
    cfg.validate();
    for (int h = cfg.t0; h <= cfg.T; ++h) {
        arrivals.pmf(h); // throws IngestError on a gap
        if (require_batches_below_capacity && arrivals.max_batch(h) >= cfg.capacity)
            throw ConfigError("arrival batch of " + std::to_string(arrivals.max_batch(h)) + " packets at hour " +
                              std::to_string(h) + " does not fit below capacity " + std::to_string(cfg.capacity));
    }

    const std::size_t levels = static_cast<std::size_t>(cfg.capacity + 1);
    const std::size_t hours = static_cast<std::size_t>(cfg.T - cfg.t0 + 1);
    std::vector<char> seen(hours * levels * 2, 0);
    auto slot = [&](const State& s) {
        return (static_cast<std::size_t>(s.hour - cfg.t0) * levels + static_cast<std::size_t>(s.level)) * 2 +
               static_cast<std::size_t>(s.phase);
    };

    std::vector<State> found;
    std::deque<State> queue;
    const State root{cfg.t0, 0, Phase::on};
    seen[slot(root)] = 1;
    queue.push_back(root);
    while (!queue.empty()) {
        State s = queue.front();
        queue.pop_front();
        found.push_back(s);
        for_each_structural_successor(cfg, arrivals, s, [&](const State& n) {
            auto& flag = seen[slot(n)];
            if (!flag) {
                flag = 1;
                queue.push_back(n);
            }
        });
    }
    std::sort(found.begin(), found.end(), [](const State& a, const State& b) {
        return std::tie(a.hour, a.level, a.phase) < std::tie(b.hour, b.level, b.phase);
    });
    return StateSpace(cfg, std::move(found));
}

/**
 * Topological order of `graph` after dropping self-loops and all arcs into
 * `root`, with `root` first. Among states that are ready at the same time the
 * one with the smallest key goes first (keys default to the ordinal).
 *
 * Throws StructureError naming two states on a cycle that avoids the root.
 */
inline std::vector<std::size_t> canonical_ordering(const SparseMatrix& graph, std::size_t root,
                                                   std::span<const std::uint64_t> keys = {},
                                                   const std::function<std::string(std::size_t)>& name = {}) {
    const std::size_t n = graph.rows();
    if (root >= n) throw StructureError("root outside graph");
    auto key = [&](std::size_t i) { return keys.empty() ? static_cast<std::uint64_t>(i) : keys[i]; };
    auto label = [&](std::size_t i) { return name ? name(i) : std::to_string(i); };

    std::vector<std::size_t> indeg(n, 0);
    for (std::size_t u = 0; u < n; ++u)
        for (const auto& e : graph.row(u))
            if (e.col != u && e.col != root) ++indeg[e.col];

    using Item = std::pair<std::uint64_t, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> ready;
    std::vector<std::size_t> order;
    order.reserve(n);
    order.push_back(root);
    std::vector<char> done(n, 0);
    done[root] = 1;
    auto release = [&](std::size_t u) {
        for (const auto& e : graph.row(u)) {
            if (e.col == u || e.col == root) continue;
            if (--indeg[e.col] == 0) ready.emplace(key(e.col), e.col);
        }
    };
    for (std::size_t v = 0; v < n; ++v)
        if (v != root && indeg[v] == 0) ready.emplace(key(v), v);
    release(root);
    while (!ready.empty()) {
        auto [k, u] = ready.top();
        ready.pop();
        if (done[u]) continue;
        done[u] = 1;
        order.push_back(u);
        release(u);
    }
    if (order.size() == n) return order;

    // Walk predecessors inside the unprocessed set until a state repeats.
    std::vector<std::vector<std::size_t>> preds(n);
    for (std::size_t u = 0; u < n; ++u)
        for (const auto& e : graph.row(u))
            if (e.col != u && e.col != root && !done[u] && !done[e.col]) preds[e.col].push_back(u);
    std::size_t v = n;
    for (std::size_t i = 0; i < n; ++i)
        if (!done[i]) {
            v = i;
            break;
        }
    std::vector<std::size_t> visit_pos(n, n);
    std::vector<std::size_t> path;
    while (visit_pos[v] == n) {
        visit_pos[v] = path.size();
        path.push_back(v);
        v = preds[v].front();
    }
    // path[visit_pos[v]] .. path.back() is a cycle traversed backwards.
    const std::size_t a = v;
    const std::size_t b = path.back();
    throw StructureError("cycle avoiding the root through states " + label(b) + " and " + label(a), b, a);
}

/// Canonical ordering of a battery state space: topological, ties broken by
/// ascending (hour, level, phase).
inline std::vector<std::size_t> canonical_ordering(const StateSpace& space, const SparseMatrix& graph) {
    std::vector<std::uint64_t> keys(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
        const State& s = space[i];
        keys[i] = (static_cast<std::uint64_t>(s.hour) << 40) | (static_cast<std::uint64_t>(s.level) << 8) |
                  static_cast<std::uint64_t>(s.phase);
    }
    return canonical_ordering(graph, space.root(), keys, [&](std::size_t i) { return to_string(space[i]); });
}

/// Union of the structural transition relation as a 0/1 sparse matrix.
inline SparseMatrix structural_graph(const StateSpace& space, const EpDistributionSet& arrivals) {
    SparseMatrix g(space.size());
    for (std::size_t i = 0; i < space.size(); ++i) {
        std::vector<SparseMatrix::Entry> row;
        for_each_structural_successor(space.config(), arrivals, space[i],
                                      [&](const State& n) { row.push_back({space.index(n), 1.0}); });
        for (auto& e : row) e.value = 1.0;
        std::sort(row.begin(), row.end(), [](auto& a, auto& b) { return a.col < b.col; });
        row.erase(std::unique(row.begin(), row.end(), [](auto& a, auto& b) { return a.col == b.col; }), row.end());
        g.push_row(std::move(row));
    }
    return g;
}

} // namespace offgrid
