#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "holovol/errors.hpp"

namespace holovol {

// Dense row-major 2D array. Kept deliberately minimal: the numerical code
// indexes with (row, col) and iterates the flat store when order is
// irrelevant. Works for bool too (proxy references, no data() use there).
template <typename T>
class Grid2D {
public:
    Grid2D() = default;

    Grid2D(int rows, int cols, T value = T{})
        : rows_(rows), cols_(cols),
          cells_(static_cast<size_t>(rows) * static_cast<size_t>(cols), value) {
        require(rows > 0 && cols > 0, ErrorCode::invalid_input,
                "grid dimensions must be positive");
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    size_t size() const noexcept { return cells_.size(); }
    bool empty() const noexcept { return cells_.empty(); }

    typename std::vector<T>::reference operator()(int r, int c) {
        return cells_[static_cast<size_t>(r) * cols_ + c];
    }
    typename std::vector<T>::const_reference operator()(int r, int c) const {
        return cells_[static_cast<size_t>(r) * cols_ + c];
    }

    typename std::vector<T>::reference operator[](size_t i) { return cells_[i]; }
    typename std::vector<T>::const_reference operator[](size_t i) const {
        return cells_[i];
    }

    T* data() { return cells_.data(); }
    const T* data() const { return cells_.data(); }

    std::vector<T>& cells() { return cells_; }
    const std::vector<T>& cells() const { return cells_; }

    void fill(T value) { std::fill(cells_.begin(), cells_.end(), value); }

    bool same_shape(const Grid2D& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool in_bounds(int r, int c) const noexcept {
        return r >= 0 && r < rows_ && c >= 0 && c < cols_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> cells_;
};

using RealGrid = Grid2D<double>;
using ComplexGrid = Grid2D<std::complex<double>>;
using MaskGrid = Grid2D<bool>;

inline double grid_sum(const RealGrid& g) {
    double s = 0.0;
    for (size_t i = 0; i < g.size(); ++i)
        s += g[i];
    return s;
}

inline double grid_mean(const RealGrid& g) {
    require(!g.empty(), ErrorCode::invalid_input, "mean of empty grid");
    return grid_sum(g) / static_cast<double>(g.size());
}

inline bool grid_all_finite(const RealGrid& g) {
    for (size_t i = 0; i < g.size(); ++i)
        if (!std::isfinite(g[i]))
            return false;
    return true;
}

inline bool grid_all_finite(const ComplexGrid& g) {
    for (size_t i = 0; i < g.size(); ++i)
        if (!std::isfinite(g[i].real()) || !std::isfinite(g[i].imag()))
            return false;
    return true;
}

// Copies the rectangle [r0, r0+rows) x [c0, c0+cols), which must lie inside.
template <typename T>
Grid2D<T> grid_crop(const Grid2D<T>& g, int r0, int c0, int rows, int cols) {
    require(r0 >= 0 && c0 >= 0 && rows > 0 && cols > 0 &&
                r0 + rows <= g.rows() && c0 + cols <= g.cols(),
            ErrorCode::invalid_input, "crop rectangle out of bounds");
    Grid2D<T> out(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out(r, c) = g(r0 + r, c0 + c);
    return out;
}

} // namespace holovol
