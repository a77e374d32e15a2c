#pragma once

// File formats: arrival distributions and reports as JSON, flat key-value
// configuration, and the sparse MDP interchange file.

#include "offgrid/measures.hpp"
#include "offgrid/sim_oracle.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace offgrid {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Arrival distributions

inline json to_json(const EpDistributionSet& d) {
    json dists = json::object();
    for (const auto& [h, p] : d.dists) dists[std::to_string(h)] = p;
    return json{{"month", d.month}, {"packet_size_wh", d.packet_size_wh}, {"t0", d.t0}, {"T", d.T},
                {"distributions", dists}};
}

inline EpDistributionSet distributions_from_json(const json& j) {
    try {
        EpDistributionSet d;
        d.month = j.at("month").get<int>();
        d.packet_size_wh = j.at("packet_size_wh").get<prec_t>();
        d.t0 = j.at("t0").get<int>();
        d.T = j.at("T").get<int>();
        for (const auto& [k, v] : j.at("distributions").items()) d.dists[std::stoi(k)] = v.get<numvec>();
        d.validate(1e-9);
        return d;
    } catch (const json::exception& e) {
        throw IngestError(std::string("malformed distribution file: ") + e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path);
    f << content;
    if (!f) throw IoError("write failed for " + path);
}

inline json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw IngestError(what + " is not valid JSON: " + e.what());
    }
}

inline EpDistributionSet load_distributions(const std::string& path) {
    return distributions_from_json(parse_json(read_file(path), path));
}

inline void save_distributions(const EpDistributionSet& d, const std::string& path) {
    write_file(path, to_json(d).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Flat key-value configuration

/**
 * "key = value" lines; '#' starts a comment. Later keys override earlier
 * ones. Unknown keys are kept for the caller to reject or use.
 */
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("configuration line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(t.substr(0, eq));
        if (key.empty()) throw ConfigError("configuration line " + std::to_string(line_no) + ": empty key");
        out[key] = detail::trim(t.substr(eq + 1));
    }
    return out;
}

inline constexpr std::array<std::string_view, 7> model_config_keys = {"t0", "T", "C", "F",
                                                                      "alpha", "beta", "packet_size_wh"};

namespace detail {

inline prec_t config_number(const std::string& key, const std::string& value) {
    auto v = parse_number(value);
    if (!v) throw ConfigError("configuration key " + key + ": \"" + value + "\" is not a number");
    return *v;
}

inline int config_int(const std::string& key, const std::string& value) {
    const prec_t v = config_number(key, value);
    if (v != std::floor(v)) throw ConfigError("configuration key " + key + " must be an integer");
    return static_cast<int>(v);
}

} // namespace detail

/// Applies the ModelConfig keys present in `kv` on top of `base`.
inline ModelConfig apply_model_keys(ModelConfig base, const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) {
        if (k == "t0") base.t0 = detail::config_int(k, v);
        else if (k == "T") base.T = detail::config_int(k, v);
        else if (k == "C") base.capacity = detail::config_int(k, v);
        else if (k == "F") base.threshold = detail::config_int(k, v);
        else if (k == "alpha") base.alpha = detail::config_number(k, v);
        else if (k == "beta") base.beta = detail::config_number(k, v);
        else if (k == "packet_size_wh") base.packet_size_wh = detail::config_number(k, v);
    }
    return base;
}

inline ModelConfig load_model_config(const std::string& path) {
    std::istringstream in(read_file(path));
    return apply_model_keys(ModelConfig{}, parse_key_values(in));
}

inline json to_json(const ModelConfig& c) {
    return json{{"t0", c.t0},       {"T", c.T},         {"C", c.capacity},
                {"F", c.threshold}, {"alpha", c.alpha}, {"beta", c.beta},
                {"packet_size_wh", c.packet_size_wh}};
}

inline json to_json(const RewardModel& r) {
    return json{{"r1", r.release_reward},
                {"r2", r.loss_penalty},
                {"r3", r.depletion_penalty},
                {"g", r.gain == GainFunction::identity ? "identity" : "shifted"}};
}

// ---------------------------------------------------------------------------
// MDP interchange

/**
 * Sparse interchange form: states listed by ordinal, the ordering, and per
 * action the coordinate triplets [from, to, p], the per-transition reward
 * triplets [from, to, r] and the expected rewards.
 */
inline json mdp_to_json(const StructuredMdp& mdp) {
    json states = json::array();
    for (const auto& s : mdp.space.states()) states.push_back(json::array({s.hour, s.level, to_string(s.phase)}));
    json actions = json::array();
    for (const auto& am : mdp.actions) {
        json p = json::array(), r = json::array();
        std::size_t k = 0;
        for (std::size_t i = 0; i < mdp.states(); ++i)
            for (const auto& e : am.transitions.row(i)) {
                p.push_back(json::array({i, e.col, e.value}));
                r.push_back(json::array({i, e.col, am.transition_rewards[k++]}));
            }
        actions.push_back(json{{"id", am.spec.id},
                               {"transitions", std::move(p)},
                               {"transition_rewards", std::move(r)},
                               {"expected_reward", am.expected_reward}});
    }
    return json{{"format", "offgrid-sparse-mdp/1"},
                {"config", to_json(mdp.config())},
                {"rewards", to_json(mdp.rewards)},
                {"root", mdp.core.root},
                {"states", std::move(states)},
                {"ordering", mdp.core.ordering},
                {"actions", std::move(actions)}};
}

/// Reads the interchange form back into the solver view.
inline SparseMdp sparse_mdp_from_json(const json& j) {
    try {
        SparseMdp m;
        m.root = j.at("root").get<std::size_t>();
        m.ordering = j.at("ordering").get<std::vector<std::size_t>>();
        const std::size_t n = j.at("states").size();
        for (const auto& a : j.at("actions")) {
            std::vector<std::vector<SparseMatrix::Entry>> rows(n);
            for (const auto& t : a.at("transitions")) {
                const auto from = t.at(0).get<std::size_t>();
                if (from >= n) throw ConfigError("transition row out of range");
                rows[from].push_back({t.at(1).get<std::size_t>(), t.at(2).get<prec_t>()});
            }
            SparseMatrix P(n);
            for (auto& r : rows) P.push_row(std::move(r));
            m.transitions.push_back(std::move(P));
            m.rewards.push_back(a.at("expected_reward").get<numvec>());
            m.action_ids.push_back(a.at("id").get<std::string>());
        }
        m.validate();
        return m;
    } catch (const json::exception& e) {
        throw IngestError(std::string("malformed MDP file: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Reports

inline json to_json(const MeasureSet& m) {
    return json{{"expected_release_ep", m.expected_release_ep}, {"expected_release_wh", m.expected_release_wh()},
                {"delay_probability", m.delay_probability},     {"expected_lost_ep", m.expected_lost_ep},
                {"expected_lost_wh", m.expected_lost_wh()},     {"combined_rho", m.combined}};
}

inline json solve_report_json(const StructuredMdp& mdp, const SolveReport& rep, const EvaluationResult& eval,
                              const MeasureSet& m, const std::string& evaluator) {
    json policy = json::array();
    for (std::size_t i = 0; i < mdp.states(); ++i) {
        const State& s = mdp.space[i];
        policy.push_back(json{{"hour", s.hour},
                              {"level", s.level},
                              {"phase", to_string(s.phase)},
                              {"action", mdp.core.action_ids[rep.policy.choice[i]]},
                              {"value", eval.values[i]},
                              {"pi", eval.pi[i]}});
    }
    return json{{"evaluator", evaluator},
                {"states", mdp.states()},
                {"actions", mdp.core.actions()},
                {"arcs", mdp.core.arcs()},
                {"iterations", rep.iterations},
                {"converged", rep.converged},
                {"rho", eval.rho},
                {"rho_history", rep.rho_history},
                {"timing_seconds",
                 {{"evaluation", rep.eval_seconds}, {"improvement", rep.improve_seconds}, {"total", rep.total_seconds}}},
                {"evaluation_ops", rep.eval_ops.total()},
                {"measures", to_json(m)},
                {"policy", std::move(policy)}};
}

inline json to_json(const SimResult& s) {
    auto est = [](const Estimate& e) { return json{{"mean", e.mean}, {"std_error", e.std_error}}; };
    return json{{"seed", s.seed},          {"slots", s.slots},         {"batches", s.batches},
                {"start", to_string(s.start)}, {"rho", est(s.rho)},    {"release", est(s.release)},
                {"delay", est(s.delay)},   {"lost", est(s.lost)}};
}

inline json to_json(const SimDiagnostic& d) {
    json rows = json::array();
    for (const auto& r : d.rows)
        rows.push_back(json{{"quantity", r.quantity},
                            {"analytic", r.analytic},
                            {"empirical", r.empirical},
                            {"std_error", r.std_error},
                            {"z", std::isfinite(r.z) ? json(r.z) : json(r.z > 0 ? "inf" : "-inf")},
                            {"flagged", r.flagged}});
    return json{{"rows", std::move(rows)}, {"visit_total_variation", d.total_variation},
                {"any_flagged", d.any_flagged}};
}

} // namespace offgrid
