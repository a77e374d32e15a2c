#pragma once

// Hourly solar production records -> per-hour energy-packet batch
// distributions, and hourly service-demand profiles.

#include "offgrid/core.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string_view>

namespace offgrid {

struct HourlyEnergyRecord {
    int month = 1;
    int day = 1;
    int hour = 0;
    prec_t ac_output_watts = 0.0;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

/// Splits one CSV line, honouring double quotes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline std::optional<prec_t> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    prec_t v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

} // namespace detail

/// Column headers of a PVWatts hourly export; matched case-insensitively.
inline constexpr std::array<std::string_view, 4> pvwatts_columns = {"Month", "Day", "Hour",
                                                                    "AC System Output (W)"};

/// Number of hourly rows in a typical meteorological year.
inline constexpr std::size_t hours_per_year = 8760;

/**
 * Parses a PVWatts-style hourly CSV. Lines before the header row (the first
 * line with a "Month" field) are treated as preamble and skipped. Rows are
 * returned in file order.
 *
 * \param warn optional sink for non-fatal notices (short files)
 */
inline std::vector<HourlyEnergyRecord>
parse_pvwatts_csv(std::istream& in, const std::function<void(const std::string&)>& warn = {}) {
    std::string line;
    std::vector<std::string> header;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto fields = detail::split_csv_line(line);
        bool has_month = std::any_of(fields.begin(), fields.end(),
                                     [](const std::string& f) { return detail::lower(f) == "month"; });
        if (has_month) {
            header = std::move(fields);
            break;
        }
    }
    if (header.empty()) throw IngestError("missing required column \"Month\"");

    std::array<std::size_t, 4> idx{};
    for (std::size_t c = 0; c < pvwatts_columns.size(); ++c) {
        const std::string want = detail::lower(std::string(pvwatts_columns[c]));
        auto it = std::find_if(header.begin(), header.end(),
                               [&](const std::string& f) { return detail::lower(f) == want; });
        if (it == header.end())
            throw IngestError("missing required column \"" + std::string(pvwatts_columns[c]) + "\"");
        idx[c] = static_cast<std::size_t>(it - header.begin());
    }
    const std::size_t needed = *std::max_element(idx.begin(), idx.end()) + 1;

    std::vector<HourlyEnergyRecord> records;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_csv_line(line);
        auto where = [&] { return "row " + std::to_string(line_no); };
        if (fields.size() < needed) throw IngestError(where() + ": expected at least " + std::to_string(needed) + " fields");

        std::array<prec_t, 4> v{};
        for (std::size_t c = 0; c < 4; ++c) {
            auto num = detail::parse_number(fields[idx[c]]);
            if (!num)
                throw IngestError(where() + ": non-numeric value \"" + fields[idx[c]] + "\" in column \"" +
                                  std::string(pvwatts_columns[c]) + "\"");
            v[c] = *num;
        }
        HourlyEnergyRecord r;
        r.month = static_cast<int>(v[0]);
        r.day = static_cast<int>(v[1]);
        r.hour = static_cast<int>(v[2]);
        r.ac_output_watts = v[3];
        if (r.month != v[0] || r.day != v[1] || r.hour != v[2] || r.month < 1 || r.month > 12 || r.day < 1 ||
            r.day > 31 || r.hour < 0 || r.hour > 23)
            throw IngestError(where() + ": invalid calendar fields");
        if (r.ac_output_watts < 0.0) throw IngestError(where() + ": negative AC output " + fields[idx[3]]);
        records.push_back(r);
    }
    if (warn && !records.empty() && records.size() < hours_per_year)
        warn("expected " + std::to_string(hours_per_year) + " hourly rows, found " + std::to_string(records.size()));
    return records;
}

inline std::vector<HourlyEnergyRecord> parse_pvwatts_csv(const std::string& text) {
    std::istringstream in(text);
    return parse_pvwatts_csv(in);
}

/// Per-hour batch-size distributions of energy packets for one month, with
/// the active production window [t0, T].
struct EpDistributionSet {
    int month = 1;
    prec_t packet_size_wh = 300.0;
    int t0 = 0;
    int T = 0;
    /// hour -> pmf over batch sizes 0..max
    std::map<int, numvec> dists;

    const numvec& pmf(int hour) const {
        auto it = dists.find(hour);
        if (it == dists.end()) throw IngestError("no arrival distribution for hour " + std::to_string(hour));
        return it->second;
    }

    bool covers(int first, int last) const {
        for (int h = first; h <= last; ++h)
            if (!dists.count(h)) return false;
        return true;
    }

    prec_t mean(int hour) const {
        const auto& p = pmf(hour);
        prec_t m = 0.0;
        for (std::size_t e = 0; e < p.size(); ++e) m += static_cast<prec_t>(e) * p[e];
        return m;
    }

    /// Largest batch with positive probability.
    int max_batch(int hour) const {
        const auto& p = pmf(hour);
        for (std::size_t e = p.size(); e-- > 0;)
            if (p[e] > 0.0) return static_cast<int>(e);
        return 0;
    }

    /// Checks pmf normalization and window coverage.
    void validate(prec_t tolerance = 1e-12) const {
        if (!(packet_size_wh > 0.0)) throw ConfigError("packet_size_wh must be positive");
        if (!(t0 < T)) throw ConfigError("arrival window requires t0 < T");
        for (int h = t0; h <= T; ++h) {
            const auto& p = pmf(h);
            CompensatedSum s;
            for (prec_t v : p) {
                if (!(v >= 0.0)) throw IngestError("negative probability in hour " + std::to_string(h));
                s.add(v);
            }
            if (std::abs(s.value() - 1.0) > tolerance)
                throw IngestError("arrival pmf of hour " + std::to_string(h) + " does not sum to 1");
        }
    }
};

/**
 * Builds the empirical per-hour packet distributions of one month. Each
 * record contributes floor(ac_output_watts / packet_size_wh) packets with equal
 * weight. The window [t0, T] spans the first and last hours in which any day
 * produced at least one packet; only those hours are kept.
 */
inline EpDistributionSet build_ep_distributions(std::span<const HourlyEnergyRecord> records, int month,
                                                prec_t packet_size_wh) {
    if (!(packet_size_wh > 0.0)) throw ConfigError("packet_size_wh must be positive");
    std::array<std::map<int, std::size_t>, 24> counts;
    std::array<std::size_t, 24> totals{};
    bool any = false;
    for (const auto& r : records) {
        if (r.month != month) continue;
        any = true;
        const int packets = static_cast<int>(std::floor(r.ac_output_watts / packet_size_wh));
        ++counts[r.hour][packets];
        ++totals[r.hour];
    }
    if (!any) throw IngestError("month " + std::to_string(month) + " absent from records");

    int first = -1, last = -1;
    for (int h = 0; h < 24; ++h) {
        bool produces = !counts[h].empty() && counts[h].rbegin()->first > 0;
        if (produces) {
            if (first < 0) first = h;
            last = h;
        }
    }
    if (first < 0) throw IngestError("no production hours found for month " + std::to_string(month));
    if (first == last)
        throw IngestError("a single production hour (" + std::to_string(first) +
                          ") cannot form a window with t0 < T");

    EpDistributionSet out;
    out.month = month;
    out.packet_size_wh = packet_size_wh;
    out.t0 = first;
    out.T = last;
    for (int h = first; h <= last; ++h) {
        if (totals[h] == 0) throw IngestError("no records for hour " + std::to_string(h) + " in month " + std::to_string(month));
        const int maxb = counts[h].rbegin()->first;
        numvec pmf(static_cast<std::size_t>(maxb) + 1, 0.0);
        for (const auto& [k, c] : counts[h])
            pmf[static_cast<std::size_t>(k)] = static_cast<prec_t>(c) / static_cast<prec_t>(totals[h]);
        out.dists[h] = std::move(pmf);
    }
    return out;
}

/// Hourly Bernoulli probability that one data packet requests service.
struct ServiceProfile {
    std::map<int, prec_t> probs;

    prec_t prob(int hour) const {
        auto it = probs.find(hour);
        if (it == probs.end()) throw ConfigError("no service probability for hour " + std::to_string(hour));
        return it->second;
    }

    void validate_window(int t0, int T) const {
        for (int h = t0; h <= T; ++h) prob(h);
    }
};

/**
 * Bimodal office-traffic shape with equal maxima at 10:00 and 14:00.
 * Reconstructed by hand from a published Erlang load curve; the numbers are
 * illustrative, not measured.
 */
inline constexpr std::array<prec_t, 24> erlang_two_peak_table = {
    0.05, 0.04, 0.03, 0.03, 0.03, 0.05, 0.10, 0.20, 0.35, 0.50, 0.60, 0.50,
    0.40, 0.50, 0.60, 0.50, 0.45, 0.40, 0.35, 0.30, 0.25, 0.20, 0.12, 0.08};

inline ServiceProfile build_service_profile(const std::map<int, prec_t>& probs) {
    for (const auto& [h, p] : probs) {
        if (h < 0 || h > 23) throw ConfigError("service hour " + std::to_string(h) + " outside [0,23]");
        if (!(p >= 0.0 && p <= 1.0))
            throw ConfigError("service probability for hour " + std::to_string(h) + " outside [0,1]");
    }
    return ServiceProfile{probs};
}

/// Named presets: "erlang-two-peak", "none" (all zero), "constant:p".
inline ServiceProfile build_service_profile(std::string_view preset) {
    std::map<int, prec_t> m;
    if (preset.rfind("constant:", 0) == 0) {
        auto p = detail::parse_number(std::string(preset.substr(9)));
        if (!p) throw ConfigError("service preset \"" + std::string(preset) + "\" needs a number after constant:");
        for (int h = 0; h < 24; ++h) m[h] = *p;
        return build_service_profile(m);
    }
    if (preset == "erlang-two-peak") {
        for (int h = 0; h < 24; ++h) m[h] = erlang_two_peak_table[static_cast<std::size_t>(h)];
    } else if (preset == "none") {
        for (int h = 0; h < 24; ++h) m[h] = 0.0;
    } else {
        throw ConfigError("unknown service preset \"" + std::string(preset) + "\"");
    }
    return ServiceProfile{std::move(m)};
}

} // namespace offgrid
