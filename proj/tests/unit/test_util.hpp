#pragma once

// Shared helpers for the unit tests: finite-difference gradient checking and
// small scratch-directory management.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "visage/autodiff.hpp"
#include "visage/rng.hpp"
#include "visage/tensor.hpp"

namespace vtest {

// Creates (or wipes and recreates) a scratch directory under the system temp
// root, named after the test, and returns its path.
inline std::string scratch_dir(const std::string& name) {
    namespace fs = std::filesystem;
    fs::path p = fs::temp_directory_path() / ("visage_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

// Result of a finite-difference comparison over one input tensor.
struct FdReport {
    double max_rel = 0.0;   // max over elements of |analytic-numeric| / denom
    double max_abs = 0.0;   // max absolute deviation
    int elements = 0;
};

// Compares the analytic gradient stored on `input` (after backward) with
// central finite differences of `loss_value`, which must recompute the scalar
// loss from current tensor values.  `input` is perturbed in place.
inline FdReport fd_check(const visage::nn::Var& input,
                         const std::function<double()>& loss_value, double h = 1e-5) {
    FdReport rep;
    visage::Tensor& x = input->value;
    rep.elements = static_cast<int>(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = loss_value();
        x.data[i] = keep - h;
        const double dn = loss_value();
        x.data[i] = keep;
        const double numeric = (up - dn) / (2.0 * h);
        const double analytic = input->has_grad() ? input->grad.data[i] : 0.0;
        const double abs_err = std::abs(analytic - numeric);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        rep.max_abs = std::max(rep.max_abs, abs_err);
        rep.max_rel = std::max(rep.max_rel, abs_err / denom);
    }
    return rep;
}

// Like fd_check but probes at most `max_probes` elements, spread evenly, so
// large parameter tensors stay affordable inside unit tests.
inline FdReport fd_check_sampled(const visage::nn::Var& input,
                                 const std::function<double()>& loss_value,
                                 int max_probes = 8, double h = 1e-5) {
    FdReport rep;
    visage::Tensor& x = input->value;
    const std::size_t n = x.numel();
    const std::size_t stride = std::max<std::size_t>(1, n / static_cast<std::size_t>(max_probes));
    for (std::size_t i = 0; i < n; i += stride) {
        const double keep = x.data[i];
        x.data[i] = keep + h;
        const double up = loss_value();
        x.data[i] = keep - h;
        const double dn = loss_value();
        x.data[i] = keep;
        const double numeric = (up - dn) / (2.0 * h);
        const double analytic = input->has_grad() ? input->grad.data[i] : 0.0;
        const double abs_err = std::abs(analytic - numeric);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        rep.max_abs = std::max(rep.max_abs, abs_err);
        rep.max_rel = std::max(rep.max_rel, abs_err / denom);
        ++rep.elements;
    }
    return rep;
}

// Deterministic small random tensor helper.
inline visage::Tensor rand_tensor(std::vector<int> shape, std::uint64_t seed,
                                  double stddev = 1.0) {
    visage::Rng rng = visage::make_rng(seed);
    return visage::Tensor::randn(std::move(shape), rng, stddev);
}

// Overwrites a tensor in place with seeded Gaussian values (used to simulate
// trained weights inside neutrality and propagation tests).
inline void randomize(visage::Tensor& t, std::uint64_t seed, double stddev = 0.2) {
    visage::Rng rng = visage::make_rng(seed);
    for (double& v : t.data) v = stddev * visage::rand_normal(rng);
}

}  // namespace vtest
