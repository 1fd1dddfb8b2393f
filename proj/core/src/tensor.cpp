#include "visage/tensor.hpp"

#include <cmath>
#include <sstream>

#include "visage/errors.hpp"

namespace visage {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw InvalidArgument("tensor dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape_) : shape(std::move(shape_)), data(shape_numel(shape)) {}

Tensor::Tensor(std::vector<int> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (data.size() != shape_numel(shape))
        throw InvalidArgument("tensor data size does not match shape " + shape_str());
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = value;
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = stddev * rand_normal(rng);
    return t;
}

int Tensor::dim(int i) const {
    if (i < 0 || i >= rank()) throw InvalidArgument("tensor dim index out of range");
    return shape[static_cast<std::size_t>(i)];
}

double& Tensor::at(int r, int c) {
    return data[static_cast<std::size_t>(r) * shape[1] + c];
}
double Tensor::at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * shape[1] + c];
}
double& Tensor::at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
}
double Tensor::at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw InvalidArgument("max_abs_diff: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace visage
