#pragma once

#include "offgrid/core.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

namespace offgrid {

/// Row-compressed sparse matrix. Column indices within a row are sorted and
/// unique.
class SparseMatrix {
public:
    struct Entry {
        std::size_t col;
        prec_t value;
    };

    SparseMatrix() : row_ptr_{0} {}
    explicit SparseMatrix(std::size_t cols) : cols_(cols), row_ptr_{0} {}

    std::size_t rows() const noexcept { return row_ptr_.size() - 1; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t nonzeros() const noexcept { return entries_.size(); }

    std::span<const Entry> row(std::size_t r) const {
        return {entries_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
    }

    /// Appends a row. Entries are merged by column (values summed) and sorted;
    /// zero-valued entries are dropped.
    void push_row(std::vector<Entry> row) {
        std::sort(row.begin(), row.end(), [](const Entry& a, const Entry& b) { return a.col < b.col; });
        for (std::size_t i = 0; i < row.size();) {
            std::size_t j = i;
            prec_t v = 0.0;
            while (j < row.size() && row[j].col == row[i].col) v += row[j++].value;
            if (row[i].col >= cols_) throw std::out_of_range("SparseMatrix::push_row: column out of range");
            if (v != 0.0) entries_.push_back({row[i].col, v});
            i = j;
        }
        row_ptr_.push_back(entries_.size());
    }

    /// Value at (r, c) or zero.
    prec_t at(std::size_t r, std::size_t c) const {
        auto rw = row(r);
        auto it = std::lower_bound(rw.begin(), rw.end(), c,
                                   [](const Entry& e, std::size_t col) { return e.col < col; });
        return (it != rw.end() && it->col == c) ? it->value : 0.0;
    }

    std::span<const Entry> entries() const noexcept { return entries_; }
    std::span<const std::size_t> row_pointers() const noexcept { return row_ptr_; }

    /// y = A x
    numvec multiply(std::span<const prec_t> x) const {
        numvec y(rows(), 0.0);
        for (std::size_t r = 0; r < rows(); ++r) {
            prec_t acc = 0.0;
            for (const auto& e : row(r)) acc += e.value * x[e.col];
            y[r] = acc;
        }
        return y;
    }

    /// y = x^T A
    numvec left_multiply(std::span<const prec_t> x) const {
        numvec y(cols_, 0.0);
        for (std::size_t r = 0; r < rows(); ++r)
            for (const auto& e : row(r)) y[e.col] += x[r] * e.value;
        return y;
    }

private:
    std::size_t cols_ = 0;
    std::vector<std::size_t> row_ptr_;
    std::vector<Entry> entries_;
};

/// Checks that every row is a probability distribution. Throws StructureError
/// naming the first offending row.
inline void check_stochastic(const SparseMatrix& P, prec_t tolerance = 1e-12) {
    if (P.rows() != P.cols())
        throw StructureError("transition matrix is not square");
    for (std::size_t r = 0; r < P.rows(); ++r) {
        CompensatedSum s;
        for (const auto& e : P.row(r)) {
            if (!(e.value >= 0.0 && e.value <= 1.0 + tolerance)) {
                std::ostringstream msg;
                msg << "transition probability " << e.value << " outside [0,1] at (" << r << "," << e.col << ")";
                throw StructureError(msg.str(), r, e.col);
            }
            s.add(e.value);
        }
        if (std::abs(s.value() - 1.0) > tolerance) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "row " << r << " sums to " << s.value();
            throw StructureError(msg.str(), r);
        }
    }
}

} // namespace offgrid
