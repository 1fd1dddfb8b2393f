#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "visage/rng.hpp"

namespace visage {

// Dense row-major double tensor.  Ranks used in practice: 1 (vectors), 2
// (matrices / token sequences), 3 (feature maps, layout C,H,W) and 4 (conv
// weights, layout Cout,Cin,Kh,Kw).  Everything runs in double precision so
// finite-difference gradient checks are meaningful.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape_);
    Tensor(std::vector<int> shape_, std::vector<double> data_);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value);
    // i.i.d. N(0, stddev^2) entries.
    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0);

    std::size_t numel() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const;

    // Rank-specific element access (bounds unchecked in release builds).
    double& at(int i) { return data[static_cast<std::size_t>(i)]; }
    double at(int i) const { return data[static_cast<std::size_t>(i)]; }
    double& at(int r, int c);
    double at(int r, int c) const;
    double& at(int c, int y, int x);
    double at(int c, int y, int x) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;
};

std::size_t shape_numel(const std::vector<int>& shape);

// Largest absolute element-wise difference; shapes must agree.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace visage
