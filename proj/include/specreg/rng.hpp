#ifndef SPECREG_RNG_HPP
#define SPECREG_RNG_HPP

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace specreg {

using Rng = std::mt19937_64;

// Purposes for independent random streams. Values are part of the
// reproducibility contract; never renumber.
enum class Stream : std::uint64_t {
    init = 1,
    spectral_init = 2,
    shuffle = 3,
    step = 4,
    monitor_init = 5,
    hessian = 6,
    probe = 7,
    data = 8,
};

// Deterministic stream keyed by (seed, purpose, counters...). Two calls with
// equal keys produce identical sequences.
Rng make_stream(std::uint64_t seed, Stream purpose, std::initializer_list<std::uint64_t> counters = {});

// Fills `out` with i.i.d. standard normal draws.
void fill_gaussian(Rng& rng, std::span<double> out);

} // namespace specreg

#endif // SPECREG_RNG_HPP
