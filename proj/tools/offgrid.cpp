#include <offgrid/offgrid.hpp>
#include <offgrid/io.hpp>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifndef OFFGRID_VERSION
#define OFFGRID_VERSION "dev"
#endif

namespace fs = std::filesystem;
using namespace offgrid;

namespace {

enum Exit { ok = 0, usage = 1, ingestion = 2, validation = 3, solver = 4, io = 5 };

int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::ingestion: return ingestion;
    case ErrorKind::validation: return validation;
    case ErrorKind::solver: return solver;
    case ErrorKind::io: return io;
    }
    return validation;
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string sha256_file(const std::string& path) {
    const std::string data = read_file(path);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("sha-256 failed for " + path);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

std::vector<prec_t> parse_list(const std::string& text, const std::string& what) {
    std::vector<prec_t> out;
    for (const auto& f : detail::split_csv_line(text)) {
        auto v = detail::parse_number(f);
        if (!v) throw ConfigError(what + ": \"" + f + "\" is not a number");
        out.push_back(*v);
    }
    if (out.empty()) throw ConfigError(what + " is empty");
    return out;
}

Evaluator parse_evaluator(const std::string& s) {
    if (s == "structured") return Evaluator::structured;
    if (s == "fixed") return Evaluator::fixed_point;
    if (s == "direct") return Evaluator::direct;
    throw ConfigError("unknown evaluator \"" + s + "\" (expected structured, fixed, direct)");
}

RewardModel parse_rewards(const std::string& list, const std::string& g) {
    auto v = parse_list(list, "rewards");
    if (v.size() != 3) throw ConfigError("rewards needs three values r1,r2,r3");
    RewardModel rm{v[0], v[1], v[2]};
    if (g == "identity") rm.gain = GainFunction::identity;
    else if (g == "shifted") rm.gain = GainFunction::threshold_shifted;
    else throw ConfigError("unknown gain \"" + g + "\" (expected identity, shifted)");
    return rm;
}

fs::path output_dir(const std::string& flag) {
    std::string d = flag;
    if (d.empty())
        if (const char* env = std::getenv("OFFGRID_OUT_DIR")) d = env;
    if (d.empty()) d = ".";
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw IoError("cannot create output directory " + d + ": " + ec.message());
    return d;
}

template <class Fn>
void write_stream(const fs::path& path, Fn&& fn) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write " + path.string());
    fn(f);
    if (!f) throw IoError("write failed for " + path.string());
}

/// Model options shared by solve and simulate. Unset flags fall back to the
/// configuration file, then to the built-in defaults.
struct ModelArgs {
    std::string config_path;
    std::string arrivals_path;
    std::string csv_path;
    int month = 0;
    std::map<std::string, std::string> flags;
    std::vector<std::string> inputs;

    void add(CLI::App& app) {
        app.add_option("--model", config_path, "key = value configuration file")->check(CLI::ExistingFile);
        app.add_option("--arrivals", arrivals_path, "arrival distributions (JSON from ingest)")
            ->check(CLI::ExistingFile);
        app.add_option("--csv", csv_path, "PVWatts-style hourly CSV, used with --month")->check(CLI::ExistingFile);
        app.add_option("--month", month, "month to extract from --csv")->check(CLI::Range(1, 12));
        for (const char* k : {"C", "F", "alpha", "beta", "packet-wh", "service", "actions", "rewards", "g",
                              "evaluator"})
            app.add_option_function<std::string>(std::string("--") + k,
                                                  [this, k](const std::string& v) { flags[k] = v; });
    }

    struct Resolved {
        ModelInputs inputs;
        std::vector<ActionSpec> actions;
        RewardModel rewards;
        Evaluator evaluator = Evaluator::structured;
        std::map<std::string, std::string> settings;
    };

    Resolved resolve() {
        std::map<std::string, std::string> kv{{"service", "erlang-two-peak"},
                                              {"actions", "0.1,0.3,0.5,0.7,0.9"},
                                              {"rewards", "1,0,0"},
                                              {"g", "identity"},
                                              {"evaluator", "structured"}};
        if (!config_path.empty()) {
            inputs.push_back(config_path);
            std::istringstream in(read_file(config_path));
            for (auto& [k, v] : parse_key_values(in)) kv[k] = v;
        }
        for (const auto& [k, v] : flags) kv[k == "packet-wh" ? "packet_size_wh" : k] = v;
        static const std::set<std::string> known{"t0",      "T",       "C",       "F", "alpha",
                                                 "beta",    "packet_size_wh", "service", "actions",
                                                 "rewards", "g",       "evaluator"};
        for (const auto& [k, v] : kv)
            if (!known.count(k)) throw ConfigError("unknown configuration key \"" + k + "\"");

        Resolved r;
        r.settings = kv;
        auto cfg = apply_model_keys(ModelConfig{}, kv);
        if (!arrivals_path.empty() && !csv_path.empty()) throw ConfigError("give either --arrivals or --csv, not both");
        if (!arrivals_path.empty()) {
            inputs.push_back(arrivals_path);
            r.inputs.arrivals = load_distributions(arrivals_path);
        } else if (!csv_path.empty()) {
            if (month == 0) throw ConfigError("--csv needs --month");
            inputs.push_back(csv_path);
            std::ifstream f(csv_path);
            r.inputs.arrivals = build_ep_distributions(
                parse_pvwatts_csv(f, [](const std::string& w) { std::cerr << "warning: " << w << '\n'; }), month,
                cfg.packet_size_wh);
        } else {
            throw ConfigError("an arrival source is required (--arrivals or --csv)");
        }
        if (!kv.count("t0")) cfg.t0 = r.inputs.arrivals.t0;
        if (!kv.count("T")) cfg.T = r.inputs.arrivals.T;
        r.inputs.config = cfg;
        r.inputs.service = build_service_profile(kv.at("service"));
        r.actions = uniform_release_actions(cfg, parse_list(kv.at("actions"), "actions"));
        r.rewards = parse_rewards(kv.at("rewards"), kv.at("g"));
        r.evaluator = parse_evaluator(kv.at("evaluator"));
        return r;
    }

    json manifest(const Resolved& r, const std::string& command, const std::string& started) const {
        json digests = json::object();
        for (const auto& p : inputs) digests[p] = sha256_file(p);
        json settings = json::object();
        for (const auto& [k, v] : r.settings) settings[k] = v;
        return json{{"tool", "offgrid"},
                    {"version", OFFGRID_VERSION},
                    {"command", command},
                    {"started_utc", started},
                    {"finished_utc", utc_now()},
                    {"config", to_json(r.inputs.config)},
                    {"rewards", to_json(r.rewards)},
                    {"settings", settings},
                    {"inputs_sha256", digests}};
    }
};

void write_heatmaps(const StructuredMdp& mdp, const Policy& pol, const fs::path& dir) {
    for (Phase ph : {Phase::on, Phase::off}) {
        auto g = policy_heatmap(mdp, pol, ph);
        const std::string base = "policy_" + detail::lower(to_string(ph));
        write_stream(dir / (base + ".csv"), [&](std::ostream& o) { write_heatmap_csv(g, o); });
        write_stream(dir / (base + ".svg"), [&](std::ostream& o) { write_heatmap_svg(g, o); });
    }
}

int run_ingest(const std::string& csv, int month, prec_t packet_wh, const std::string& out) {
    std::ifstream f(csv);
    if (!f) throw IoError("cannot open " + csv);
    auto recs = parse_pvwatts_csv(f, [](const std::string& w) { std::cerr << "warning: " << w << '\n'; });
    auto d = build_ep_distributions(recs, month, packet_wh);
    save_distributions(d, out);
    std::cout << "month " << month << ": t0 = " << d.t0 << ", T = " << d.T << ", " << d.dists.size()
              << " hourly distributions -> " << out << '\n';
    return ok;
}

int run_solve(ModelArgs& args, const std::string& out, bool export_mdp) {
    const auto started = utc_now();
    auto r = args.resolve();
    auto mdp = assemble_mdp(r.inputs, r.actions, r.rewards);
    SolverOptions opt;
    opt.evaluator = r.evaluator;
    auto rep = policy_iteration(mdp.core, opt);
    auto ev = evaluate_policy(mdp, rep.policy);
    auto m = compute_measures(mdp, rep.policy, ev);
    const auto dir = output_dir(out);
    write_file((dir / "report.json").string(),
               solve_report_json(mdp, rep, ev, m, to_string(r.evaluator)).dump(2) + "\n");
    write_file((dir / "measures.json").string(), to_json(m).dump(2) + "\n");
    write_heatmaps(mdp, rep.policy, dir);
    if (export_mdp) write_file((dir / "mdp.json").string(), mdp_to_json(mdp).dump() + "\n");
    write_file((dir / "manifest.json").string(), args.manifest(r, "solve", started).dump(2) + "\n");
    std::cout << "states " << mdp.states() << ", actions " << mdp.core.actions() << ", iterations "
              << rep.iterations << '\n'
              << std::setprecision(10) << "rho " << ev.rho << "\nrelease_wh " << m.expected_release_wh()
              << "\ndelay_probability " << m.delay_probability << "\nlost_wh " << m.expected_lost_wh() << '\n';
    return rep.converged ? ok : solver;
}

int run_simulate(ModelArgs& args, const std::string& out, std::uint64_t slots, std::uint64_t seed,
                 std::size_t batches) {
    const auto started = utc_now();
    auto r = args.resolve();
    auto mdp = assemble_mdp(r.inputs, r.actions, r.rewards);
    SolverOptions opt;
    opt.evaluator = r.evaluator;
    auto rep = policy_iteration(mdp.core, opt);
    auto ev = evaluate_policy(mdp, rep.policy);
    auto m = compute_measures(mdp, rep.policy, ev);
    auto sim = simulate_policy(mdp, rep.policy, {slots, seed, batches, std::nullopt});
    auto diag = compare_to_analytic(sim, ev, m);
    const auto dir = output_dir(out);
    write_file((dir / "simulation.json").string(), json{{"simulation", to_json(sim)}, {"diagnostic", to_json(diag)}}.dump(2) + "\n");
    write_stream(dir / "simulation.csv", [&](std::ostream& o) { write_sim_csv(sim, o); });
    write_stream(dir / "diagnostic.csv", [&](std::ostream& o) { write_diagnostic_csv(diag, o); });
    auto man = args.manifest(r, "simulate", started);
    man["seed"] = seed;
    man["slots"] = slots;
    write_file((dir / "manifest.json").string(), man.dump(2) + "\n");
    for (const auto& row : diag.rows)
        std::cout << std::setprecision(8) << row.quantity << ": analytic " << row.analytic << ", simulated "
                  << row.empirical << " +- " << row.std_error << ", z " << row.z << (row.flagged ? "  FLAGGED" : "")
                  << '\n';
    std::cout << "visit total variation " << diag.total_variation << '\n';
    return ok;
}

int run_benchmark(const std::string& sizes, std::size_t actions, const std::string& solvers, prec_t timeout,
                  const std::string& out) {
    std::vector<ScenarioSpec> sc;
    for (prec_t s : parse_list(sizes, "sizes")) {
        if (s < 2 || s != std::floor(s)) throw ConfigError("sizes must be integers >= 2");
        sc.push_back({"n" + std::to_string(static_cast<long>(s)), static_cast<std::size_t>(s), actions});
    }
    std::vector<SolverKind> kinds;
    for (const auto& s : detail::split_csv_line(solvers)) kinds.push_back(parse_solver_kind(s));
    auto rows = benchmark_suite(sc, kinds, SolverOptions{}, timeout);
    const auto dir = output_dir(out);
    write_stream(dir / "benchmark.csv", [&](std::ostream& o) { write_benchmark_csv(rows, o); });
    write_benchmark_table(rows, std::cout);
    return ok;
}

int run_compare(const std::string& manifest_path, const std::string& out, unsigned workers) {
    const auto started = utc_now();
    const auto j = parse_json(read_file(manifest_path), manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    ComparisonSetup setup;
    std::vector<LocationScenario> scenarios;
    json digests = json::object();
    digests[manifest_path] = sha256_file(manifest_path);
    try {
        const prec_t packet = j.value("packet_size_wh", 300.0);
        std::map<std::string, std::string> kv;
        const json model = j.value("model", json::object());
        for (const auto& [k, v] : model.items()) kv[k] = v.dump();
        setup.config = apply_model_keys(ModelConfig{}, kv);
        setup.config.packet_size_wh = packet;
        const auto& rw = j.at("rewards");
        setup.rewards = RewardModel{rw.at("r1").get<prec_t>(), rw.at("r2").get<prec_t>(), rw.at("r3").get<prec_t>()};
        if (rw.value("g", "identity") == "shifted") setup.rewards.gain = GainFunction::threshold_shifted;
        setup.service = build_service_profile(j.value("service", "erlang-two-peak"));
        if (j.contains("actions")) setup.release_levels = j.at("actions").get<std::vector<prec_t>>();
        for (const auto& s : j.at("scenarios")) {
            const auto csv = (base / s.at("csv").get<std::string>()).string();
            digests[csv] = sha256_file(csv);
            std::ifstream f(csv);
            if (!f) throw IoError("cannot open " + csv);
            const auto recs = parse_pvwatts_csv(f);
            for (int month : s.at("months").get<std::vector<int>>()) {
                LocationScenario sc;
                sc.label = s.at("location").get<std::string>();
                sc.month = month;
                try {
                    sc.arrivals = build_ep_distributions(recs, month, packet);
                } catch (const IngestError& e) {
                    // Left empty; the row records the failure.
                    std::cerr << "warning: " << sc.label << " month " << month << ": " << e.what() << '\n';
                }
                scenarios.push_back(std::move(sc));
            }
        }
    } catch (const json::exception& e) {
        throw IngestError("malformed scenario manifest: " + std::string(e.what()));
    }
    auto rows = compare_locations(scenarios, setup, workers);
    const auto dir = output_dir(out);
    write_stream(dir / "comparison.csv", [&](std::ostream& o) { write_comparison_csv(rows, o); });
    write_comparison_series(rows, (dir / "series_").string());
    write_file((dir / "manifest.json").string(), json{{"tool", "offgrid"},
                                                      {"version", OFFGRID_VERSION},
                                                      {"command", "compare"},
                                                      {"started_utc", started},
                                                      {"finished_utc", utc_now()},
                                                      {"config", to_json(setup.config)},
                                                      {"rewards", to_json(setup.rewards)},
                                                      {"inputs_sha256", digests}}
                                                     .dump(2) + "\n");
    std::size_t failed = 0;
    for (const auto& r : rows) failed += !r.ok;
    std::cout << rows.size() << " scenarios, " << failed << " failed -> " << (dir / "comparison.csv").string() << '\n';
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Battery release policies for solar-powered off-grid base stations"};
    app.set_version_flag("--version", OFFGRID_VERSION);
    app.require_subcommand(1);

    auto* ingest = app.add_subcommand("ingest", "build hourly packet distributions from a PVWatts CSV");
    std::string csv, ingest_out;
    int month = 0;
    prec_t packet_wh = 300.0;
    ingest->add_option("--csv", csv)->required()->check(CLI::ExistingFile);
    ingest->add_option("--month", month)->required()->check(CLI::Range(1, 12));
    ingest->add_option("--packet-wh", packet_wh)->check(CLI::PositiveNumber);
    ingest->add_option("--out", ingest_out, "output JSON file")->required();

    auto* solve = app.add_subcommand("solve", "compute the optimal release policy");
    ModelArgs solve_args;
    solve_args.add(*solve);
    std::string solve_out;
    bool export_mdp = false;
    solve->add_option("--out", solve_out, "output directory (default $OFFGRID_OUT_DIR or .)");
    solve->add_flag("--export-mdp", export_mdp, "also write the sparse MDP as mdp.json");

    auto* simulate = app.add_subcommand("simulate", "simulate the optimal policy and compare with the analysis");
    ModelArgs sim_args;
    sim_args.add(*simulate);
    std::string sim_out;
    std::uint64_t slots = 1'000'000, seed = 1;
    std::size_t batches = 50;
    simulate->add_option("--out", sim_out);
    simulate->add_option("--slots", slots);
    simulate->add_option("--seed", seed);
    simulate->add_option("--batches", batches);

    auto* bench = app.add_subcommand("benchmark", "time the solvers on scaled synthetic instances");
    std::string sizes = "100,1000", solvers = "rvi,rpi-fp,rpi-gj,rpi-rb", bench_out;
    std::size_t actions = 5;
    prec_t timeout = 600;
    bench->add_option("--sizes", sizes, "comma-separated target state counts");
    bench->add_option("--actions", actions)->check(CLI::PositiveNumber);
    bench->add_option("--solvers", solvers);
    bench->add_option("--timeout", timeout, "seconds per solver run")->check(CLI::PositiveNumber);
    bench->add_option("--out", bench_out);

    auto* compare = app.add_subcommand("compare", "solve every location and month of a scenario manifest");
    std::string scenarios, compare_out;
    unsigned workers = 0;
    compare->add_option("--scenarios", scenarios)->required()->check(CLI::ExistingFile);
    compare->add_option("--out", compare_out);
    compare->add_option("--workers", workers);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : usage;
    }

    try {
        if (*ingest) return run_ingest(csv, month, packet_wh, ingest_out);
        if (*solve) return run_solve(solve_args, solve_out, export_mdp);
        if (*simulate) return run_simulate(sim_args, sim_out, slots, seed, batches);
        if (*bench) return run_benchmark(sizes, actions, solvers, timeout, bench_out);
        if (*compare) return run_compare(scenarios, compare_out, workers);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return io;
    }
    return usage;
}
