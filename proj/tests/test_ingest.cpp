#include "oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace offgrid;

TEST(ParsePvwatts, ThreeRowFixture) {
    auto recs = parse_pvwatts_csv("Month,Day,Hour,AC System Output (W)\n8,1,14,2352\n8,1,15,1800\n8,1,19,0\n");
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[0].month, 8);
    EXPECT_EQ(recs[0].hour, 14);
    EXPECT_DOUBLE_EQ(recs[0].ac_output_watts, 2352.0);
    EXPECT_DOUBLE_EQ(recs[2].ac_output_watts, 0.0);
}

TEST(ParsePvwatts, EmptyDataSection) {
    EXPECT_TRUE(parse_pvwatts_csv("Month,Day,Hour,AC System Output (W)\n").empty());
}

TEST(ParsePvwatts, SkipsPreambleAndMatchesHeadersLoosely) {
    auto recs = parse_pvwatts_csv("\"Requested Location\",\"x\"\n\n"
                                  "\"month\", \"Day\" ,\"HOUR\",\"Beam\",\" ac system output (w) \"\n"
                                  "1,2,3,100,42.5\n");
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].day, 2);
    EXPECT_DOUBLE_EQ(recs[0].ac_output_watts, 42.5);
}

TEST(ParsePvwatts, MissingColumnIsNamed) {
    try {
        parse_pvwatts_csv("Month,Day,Hour,DC Output\n1,1,1,1\n");
        FAIL();
    } catch (const IngestError& e) {
        EXPECT_NE(std::string(e.what()).find("AC System Output (W)"), std::string::npos);
    }
}

TEST(ParsePvwatts, NegativeOutputNamesTheRow) {
    try {
        parse_pvwatts_csv("Month,Day,Hour,AC System Output (W)\n1,1,1,5\n1,1,2,-3\n");
        FAIL();
    } catch (const IngestError& e) {
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
    }
}

TEST(ParsePvwatts, NonNumericRejected) {
    EXPECT_THROW(parse_pvwatts_csv("Month,Day,Hour,AC System Output (W)\n1,1,1,abc\n"), IngestError);
    EXPECT_THROW(parse_pvwatts_csv("Month,Day,Hour,AC System Output (W)\n13,1,1,1\n"), IngestError);
}

TEST(ParsePvwatts, ShortFileWarns) {
    std::istringstream in("Month,Day,Hour,AC System Output (W)\n1,1,1,5\n");
    std::string warning;
    parse_pvwatts_csv(in, [&](const std::string& w) { warning = w; });
    EXPECT_NE(warning.find("8760"), std::string::npos);
}

TEST(ParsePvwatts, FullYearBookkeeping) {
    // Generator with a known total: every hour outputs 10 * hour watts.
    std::ostringstream csv;
    csv << "Month,Day,Hour,AC System Output (W)\n";
    const int days[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    double total = 0.0;
    for (int m = 1; m <= 12; ++m)
        for (int d = 1; d <= days[m - 1]; ++d)
            for (int h = 0; h < 24; ++h) {
                csv << m << ',' << d << ',' << h << ',' << 10 * h << '\n';
                total += 10 * h;
            }
    auto recs = parse_pvwatts_csv(csv.str());
    ASSERT_EQ(recs.size(), 8760u);
    double sum = 0.0;
    for (const auto& r : recs) sum += r.ac_output_watts;
    EXPECT_DOUBLE_EQ(sum, total);
}

TEST(BuildDistributions, FloorDivisionTwoDays) {
    std::vector<HourlyEnergyRecord> recs = {{1, 1, 10, 650}, {1, 2, 10, 320}, {1, 1, 11, 300}, {1, 2, 11, 0}};
    auto d = build_ep_distributions(recs, 1, 300);
    EXPECT_EQ(d.t0, 10);
    EXPECT_EQ(d.T, 11);
    EXPECT_EQ(d.pmf(10), (numvec{0.0, 0.5, 0.5}));
    EXPECT_EQ(d.pmf(11), (numvec{0.5, 0.5}));
}

TEST(BuildDistributions, WindowExcludesZeroBoundaryHours) {
    std::vector<HourlyEnergyRecord> recs = {{3, 1, 6, 100}, {3, 1, 7, 400}, {3, 1, 8, 0}, {3, 1, 9, 900}, {3, 1, 10, 50}};
    auto d = build_ep_distributions(recs, 3, 300);
    EXPECT_EQ(d.t0, 7);
    EXPECT_EQ(d.T, 9);
    EXPECT_EQ(d.pmf(8), (numvec{1.0}));
    EXPECT_FALSE(d.dists.count(6));
    EXPECT_FALSE(d.dists.count(10));
}

TEST(BuildDistributions, Errors) {
    std::vector<HourlyEnergyRecord> zero = {{2, 1, 10, 0}, {2, 1, 11, 299}};
    try {
        build_ep_distributions(zero, 2, 300);
        FAIL();
    } catch (const IngestError& e) {
        EXPECT_NE(std::string(e.what()).find("no production hours found"), std::string::npos);
    }
    EXPECT_THROW(build_ep_distributions(zero, 5, 300), IngestError);
    EXPECT_THROW(build_ep_distributions(zero, 2, 0), ConfigError);
}

namespace {

std::vector<HourlyEnergyRecord> barcelona_records() {
    std::ifstream f(oracle::data_path("barcelona_like_pvwatts.csv"));
    EXPECT_TRUE(f.good());
    return parse_pvwatts_csv(f);
}

} // namespace

TEST(BuildDistributions, BarcelonaLikeAugust) {
    auto recs = barcelona_records();
    ASSERT_EQ(recs.size(), 8760u);
    auto d = build_ep_distributions(recs, 8, 300);
    EXPECT_EQ(d.t0, 7);
    EXPECT_EQ(d.T, 18);
    EXPECT_NEAR(d.mean(14), 7.84, 0.005);
}

TEST(BuildDistributions, PropertiesOnEveryFixtureMonth) {
    for (const char* file : {"barcelona_like_pvwatts.csv", "cities/rabat_synthetic.csv", "cities/moscow_synthetic.csv",
                             "cities/unalaska_synthetic.csv"}) {
        std::ifstream f(oracle::data_path(file));
        auto recs = parse_pvwatts_csv(f);
        for (int month = 1; month <= 12; ++month) {
            auto d = build_ep_distributions(recs, month, 300);
            EXPECT_NO_THROW(d.validate(1e-12)) << file << " month " << month;
            std::map<int, double> watts, n;
            for (const auto& r : recs)
                if (r.month == month) {
                    watts[r.hour] += r.ac_output_watts;
                    n[r.hour] += 1;
                }
            int peak = 0;
            for (int h = 0; h < 24; ++h)
                if (watts[h] > watts[peak]) peak = h;
            EXPECT_LE(d.t0, peak);
            EXPECT_GE(d.T, peak);
            for (int h = d.t0; h <= d.T; ++h)
                EXPECT_LE(d.mean(h) * 300, watts[h] / n[h] + 1e-9) << "floor never creates energy";
        }
    }
}

TEST(ServiceProfile, ErlangPresetPeaksAtTenAndFourteen) {
    auto p = build_service_profile("erlang-two-peak");
    double best = 0.0;
    for (int h = 0; h < 24; ++h) best = std::max(best, p.prob(h));
    std::vector<int> argmax;
    for (int h = 0; h < 24; ++h)
        if (p.prob(h) == best) argmax.push_back(h);
    EXPECT_EQ(argmax, (std::vector<int>{10, 14}));
}

TEST(ServiceProfile, PassThroughAndValidation) {
    std::map<int, double> m{{7, 0.25}, {8, 1.0}, {9, 0.0}};
    auto p = build_service_profile(m);
    EXPECT_EQ(p.probs, m);
    EXPECT_THROW(build_service_profile(std::map<int, double>{{7, 1.5}}), ConfigError);
    EXPECT_THROW(build_service_profile(std::map<int, double>{{24, 0.5}}), ConfigError);
    EXPECT_THROW(build_service_profile("unknown"), ConfigError);
    EXPECT_THROW(p.validate_window(7, 10), ConfigError);
}
