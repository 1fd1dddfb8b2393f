#include "visage/rng.hpp"

#include <cmath>
#include <sstream>

#include "visage/errors.hpp"

namespace visage {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t s = base;
    std::uint64_t a = splitmix64(s);
    s ^= stream * 0xda942042e4dd58b5ull;
    std::uint64_t b = splitmix64(s);
    return a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
}

Rng make_rng(std::uint64_t seed) { return Rng(seed); }

double rand_uniform(Rng& rng) {
    // 53 random bits -> double in [0, 1).
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double rand_uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * rand_uniform(rng);
}

double rand_normal(Rng& rng) {
    // Box-Muller; u1 is kept away from zero so the log is finite.
    double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = rand_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t rand_index(Rng& rng, std::uint64_t n) {
    if (n == 0) throw InvalidArgument("rand_index: n must be positive");
    // Rejection sampling over the largest multiple of n below 2^64.
    std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % n;
}

std::string rng_state_to_string(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

Rng rng_from_string(const std::string& text) {
    Rng rng;
    std::istringstream is(text);
    is >> rng;
    if (!is) throw ParseError("rng_from_string: malformed engine state");
    return rng;
}

}  // namespace visage
