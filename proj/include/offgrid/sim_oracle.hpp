#pragma once

// Slot-level Monte Carlo simulation of the battery process under a fixed
// policy. The dynamics are coded from the sampled variables (e, b, z, phi)
// directly and never read the built matrices.

#include "offgrid/measures.hpp"

#include <array>
#include <cstdint>

namespace offgrid {

/**
 * Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every
 * (key, counter) pair maps to four independent 32-bit words, so a stream is
 * just a fixed counter word and replays need no state.
 */
class Philox4x32 {
public:
    using Block = std::array<std::uint32_t, 4>;

    explicit Philox4x32(std::uint64_t seed)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

    Block operator()(Block ctr) const {
        std::array<std::uint32_t, 2> key = key_;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
            key[0] += w0;
            key[1] += w1;
        }
        return ctr;
    }

    /// Uniform double in [0,1) from 53 bits of the block for (index, stream).
    double uniform(std::uint64_t index, std::uint32_t stream) const {
        const Block b = (*this)(Block{static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                                      stream, 0x5eed0ff9u});
        const std::uint64_t bits = (static_cast<std::uint64_t>(b[0]) << 21) ^ (b[1] >> 11);
        return static_cast<double>(bits & ((1ull << 53) - 1)) * 0x1.0p-53;
    }

private:
    static constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    static constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    std::array<std::uint32_t, 2> key_;
};

/// Stream words of the four sampled variables.
enum class SimStream : std::uint32_t { arrival = 1, demand = 2, release = 3, phase = 4 };

struct Estimate {
    prec_t mean = 0.0;
    prec_t std_error = 0.0;

    bool operator==(const Estimate&) const = default;
};

struct SimResult {
    std::uint64_t seed = 0;
    std::uint64_t slots = 0;
    std::size_t batches = 0;
    State start;
    Estimate rho;     ///< reward per slot
    Estimate release; ///< g(x) sold per slot
    Estimate delay;   ///< slots with an empty battery and a demand
    Estimate lost;    ///< packets lost per slot
    numvec visit_freq; ///< by state ordinal
    /// Per-state sums of one-slot rewards, for conditional means.
    numvec reward_sum;
    std::vector<std::uint64_t> visits;

    bool operator==(const SimResult&) const = default;
};

namespace detail {

inline Estimate batch_means(std::span<const prec_t> batch_values) {
    Estimate e;
    const auto k = static_cast<prec_t>(batch_values.size());
    CompensatedSum s;
    for (prec_t v : batch_values) s.add(v);
    e.mean = s.value() / k;
    CompensatedSum sq;
    for (prec_t v : batch_values) sq.add((v - e.mean) * (v - e.mean));
    e.std_error = batch_values.size() > 1 ? std::sqrt(sq.value() / (k - 1.0) / k) : 0.0;
    return e;
}

inline int sample_pmf(const numvec& cdf, double u) {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    return static_cast<int>(it - cdf.begin());
}

} // namespace detail

struct SimOptions {
    std::uint64_t slots = 1'000'000;
    std::uint64_t seed = 1;
    std::size_t batches = 50;
    std::optional<State> start; ///< defaults to the root
};

/**
 * Runs the process for `slots` slots from `start`. Every slot draws phi
 * first; if the phase persists (and the state is not at the deadline) it
 * draws z for a release when x >= F, then e and b. The demand b is drawn in
 * every slot so that empty-battery demands can be counted even where they
 * do not change the state.
 */
inline SimResult simulate_policy(const StructuredMdp& mdp, const Policy& policy, const SimOptions& opt) {
    if (opt.slots < 10000) throw ConfigError("simulation needs at least 10000 slots");
    if (opt.batches < 30) throw ConfigError("batch means need at least 30 batches");
    if (policy.choice.size() != mdp.states()) throw ConfigError("policy size does not match the state count");
    const ModelConfig& cfg = mdp.config();
    const int C = cfg.capacity, F = cfg.threshold;
    const State root{cfg.t0, 0, Phase::on};
    const State off_sink{cfg.t0, 0, Phase::off};

    std::map<int, numvec> cdf;
    for (int h = cfg.t0; h <= cfg.T; ++h) {
        const numvec& p = mdp.inputs.arrivals.pmf(h);
        numvec c(p.size());
        prec_t acc = 0.0;
        for (std::size_t e = 0; e < p.size(); ++e) c[e] = acc += p[e];
        cdf[h] = std::move(c);
    }

    const Philox4x32 rng(opt.seed);
    SimResult res;
    res.seed = opt.seed;
    res.slots = opt.slots;
    res.batches = opt.batches;
    res.start = opt.start.value_or(root);
    res.visit_freq.assign(mdp.states(), 0.0);
    res.reward_sum.assign(mdp.states(), 0.0);
    res.visits.assign(mdp.states(), 0);

    const std::uint64_t per_batch = opt.slots / opt.batches;
    numvec b_rho, b_rel, b_delay, b_lost;
    prec_t s_rho = 0, s_rel = 0, s_delay = 0, s_lost = 0;

    State s = res.start;
    std::size_t idx = mdp.space.index(s);
    const std::uint64_t used = per_batch * opt.batches;
    for (std::uint64_t n = 0; n < used; ++n) {
        const ActionSpec& a = mdp.actions[policy.choice[idx]].spec;
        const double u_phi = rng.uniform(n, static_cast<std::uint32_t>(SimStream::phase));
        const double u_z = rng.uniform(n, static_cast<std::uint32_t>(SimStream::release));
        const double u_e = rng.uniform(n, static_cast<std::uint32_t>(SimStream::arrival));
        const double u_b = rng.uniform(n, static_cast<std::uint32_t>(SimStream::demand));
        const int b = u_b < service_prob(mdp.inputs, a, s.hour) ? 1 : 0;
        if (s.level == 0 && b == 1) s_delay += 1.0;

        EventOutcome ev;
        if (s.hour == cfg.T) {
            ev = {State{cfg.t0, 0, s.phase}, true, s.level, 0, false};
        } else if (s == off_sink) {
            ev.next = u_phi < cfg.beta ? root : off_sink;
        } else if (s.phase == Phase::on) {
            if (u_phi < cfg.alpha) {
                ev.next = s == root ? off_sink : State{s.hour + 1, s.level, Phase::off};
            } else if (s.level >= F && u_z < a.release.at(s.level, Phase::on)) {
                ev = {root, true, s.level, 0, false};
            } else {
                const int e = detail::sample_pmf(cdf.at(s.hour), u_e);
                if (s == root && e == 0) {
                    ev.next = root;
                } else {
                    const int raw = s.level + e - b;
                    const int next = std::max(std::min(s.level + e, C) - b, 0);
                    ev = {State{s.hour + 1, next, Phase::on}, false, 0, std::max(0, raw - C), b == 1 && next == 0};
                }
            }
        } else {
            if (u_phi < cfg.beta) {
                ev.next = State{s.hour + 1, s.level, Phase::on};
            } else if (s.level >= F && u_z < a.release.at(s.level, Phase::off)) {
                ev = {off_sink, true, s.level, 0, false};
            } else {
                const int next = std::max(s.level - b, 0);
                ev = {State{s.hour + 1, next, Phase::off}, false, 0, 0, b == 1 && next == 0};
            }
        }

        const prec_t r = event_reward(ev, mdp.rewards, F);
        s_rho += r;
        if (ev.release) s_rel += mdp.rewards.g(ev.released_level, F);
        s_lost += ev.lost;
        res.visit_freq[idx] += 1.0;
        res.reward_sum[idx] += r;
        ++res.visits[idx];

        if ((n + 1) % per_batch == 0) {
            const auto len = static_cast<prec_t>(per_batch);
            b_rho.push_back(s_rho / len);
            b_rel.push_back(s_rel / len);
            b_delay.push_back(s_delay / len);
            b_lost.push_back(s_lost / len);
            s_rho = s_rel = s_delay = s_lost = 0.0;
        }
        s = ev.next;
        idx = mdp.space.index(s);
    }
    res.slots = used;
    for (auto& f : res.visit_freq) f /= static_cast<prec_t>(used);
    res.rho = detail::batch_means(b_rho);
    res.release = detail::batch_means(b_rel);
    res.delay = detail::batch_means(b_delay);
    res.lost = detail::batch_means(b_lost);
    return res;
}

struct ZScoreRow {
    std::string quantity;
    prec_t analytic = 0.0;
    prec_t empirical = 0.0;
    prec_t std_error = 0.0;
    prec_t z = 0.0;
    bool flagged = false;
};

struct SimDiagnostic {
    std::vector<ZScoreRow> rows;
    prec_t total_variation = 0.0; ///< between visit frequencies and Pi
    bool any_flagged = false;
};

inline prec_t z_score(prec_t empirical, prec_t analytic, prec_t se) {
    const prec_t d = empirical - analytic;
    if (se > 0.0) return d / se;
    return d == 0.0 ? 0.0 : std::copysign(std::numeric_limits<prec_t>::infinity(), d);
}

/// z-scores of the simulated quantities against their analytic values;
/// |z| > flag_at is flagged.
inline SimDiagnostic compare_to_analytic(const SimResult& sim, const EvaluationResult& eval, const MeasureSet& m,
                                         prec_t flag_at = 4.0) {
    SimDiagnostic d;
    auto add = [&](const char* name, prec_t analytic, const Estimate& e) {
        ZScoreRow r{name, analytic, e.mean, e.std_error, z_score(e.mean, analytic, e.std_error), false};
        r.flagged = !(std::abs(r.z) <= flag_at);
        d.any_flagged = d.any_flagged || r.flagged;
        d.rows.push_back(r);
    };
    add("rho", eval.rho, sim.rho);
    add("release", m.expected_release_ep, sim.release);
    add("delay", m.delay_probability, sim.delay);
    add("lost", m.expected_lost_ep, sim.lost);
    if (eval.pi.size() == sim.visit_freq.size()) {
        CompensatedSum tv;
        for (std::size_t i = 0; i < eval.pi.size(); ++i) tv.add(std::abs(eval.pi[i] - sim.visit_freq[i]));
        d.total_variation = 0.5 * tv.value();
    }
    return d;
}

/// Columns: seed, slots, batches, quantity, mean, std_error.
inline void write_sim_csv(const SimResult& sim, std::ostream& out) {
    out << "seed,slots,batches,quantity,mean,std_error\n" << std::setprecision(12);
    const std::pair<const char*, const Estimate*> rows[] = {
        {"rho", &sim.rho}, {"release", &sim.release}, {"delay", &sim.delay}, {"lost", &sim.lost}};
    for (const auto& [name, e] : rows)
        out << sim.seed << ',' << sim.slots << ',' << sim.batches << ',' << name << ',' << e->mean << ','
            << e->std_error << '\n';
}

/// Columns: quantity, analytic, empirical, std_error, z, flagged; then the
/// total-variation distance.
inline void write_diagnostic_csv(const SimDiagnostic& d, std::ostream& out) {
    out << "quantity,analytic,empirical,std_error,z,flagged\n" << std::setprecision(12);
    for (const auto& r : d.rows)
        out << r.quantity << ',' << r.analytic << ',' << r.empirical << ',' << r.std_error << ',' << r.z << ','
            << (r.flagged ? 1 : 0) << '\n';
    out << "visit_total_variation," << d.total_variation << ",,,,\n";
}

} // namespace offgrid
