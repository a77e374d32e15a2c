#include "offgrid/sparse.hpp"

#include <gtest/gtest.h>

using namespace offgrid;

TEST(CompensatedSum, RecoversSmallTermsNextToLargeOnes) {
    CompensatedSum s;
    s.add(1.0);
    for (int i = 0; i < 1000; ++i) s.add(1e-16);
    s.add(-1.0);
    EXPECT_NEAR(s.value(), 1e-13, 1e-20);
}

TEST(SpanSeminorm, IsMaxMinusMin) {
    numvec v{3.0, -1.0, 2.5};
    EXPECT_DOUBLE_EQ(span_seminorm(v), 4.0);
    EXPECT_DOUBLE_EQ(span_seminorm(numvec{}), 0.0);
}

TEST(SparseMatrix, PushRowMergesSortsAndDropsZeros) {
    SparseMatrix m(4);
    m.push_row({{3, 0.25}, {1, 0.5}, {3, 0.25}, {2, 0.0}});
    ASSERT_EQ(m.rows(), 1u);
    ASSERT_EQ(m.nonzeros(), 2u);
    EXPECT_EQ(m.row(0)[0].col, 1u);
    EXPECT_EQ(m.row(0)[1].col, 3u);
    EXPECT_DOUBLE_EQ(m.at(0, 3), 0.5);
    EXPECT_DOUBLE_EQ(m.at(0, 2), 0.0);
}

TEST(SparseMatrix, RejectsColumnOutOfRange) {
    SparseMatrix m(2);
    EXPECT_THROW(m.push_row({{2, 1.0}}), std::out_of_range);
}

TEST(SparseMatrix, MultiplyAndLeftMultiply) {
    SparseMatrix m(2);
    m.push_row({{0, 0.5}, {1, 0.5}});
    m.push_row({{0, 1.0}});
    numvec x{2.0, 4.0};
    EXPECT_EQ(m.multiply(x), (numvec{3.0, 2.0}));
    EXPECT_EQ(m.left_multiply(x), (numvec{5.0, 1.0}));
}

TEST(CheckStochastic, NamesTheBadRow) {
    SparseMatrix m(2);
    m.push_row({{0, 0.5}, {1, 0.5}});
    m.push_row({{0, 0.7}});
    try {
        check_stochastic(m);
        FAIL() << "expected StructureError";
    } catch (const StructureError& e) {
        EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
        EXPECT_EQ(e.from(), 1u);
    }
}

TEST(CheckStochastic, AcceptsWithinTolerance) {
    SparseMatrix m(1);
    m.push_row({{0, 1.0 + 1e-14}});
    EXPECT_NO_THROW(check_stochastic(m));
}

TEST(Errors, CarryTheirKind) {
    EXPECT_EQ(IngestError("x").kind(), ErrorKind::ingestion);
    EXPECT_EQ(ConfigError("x").kind(), ErrorKind::validation);
    EXPECT_EQ(StructureError("x").kind(), ErrorKind::validation);
    EXPECT_EQ(SolverError("x").kind(), ErrorKind::solver);
    EXPECT_EQ(IoError("x").kind(), ErrorKind::io);
}
