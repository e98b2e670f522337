#include "specreg/rng.hpp"

#include <vector>

namespace specreg {

Rng make_stream(std::uint64_t seed, Stream purpose, std::initializer_list<std::uint64_t> counters) {
    std::vector<std::uint32_t> words;
    auto push64 = [&](std::uint64_t x) {
        words.push_back(static_cast<std::uint32_t>(x));
        words.push_back(static_cast<std::uint32_t>(x >> 32));
    };
    push64(seed);
    push64(static_cast<std::uint64_t>(purpose));
    for (auto c : counters) push64(c);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

void fill_gaussian(Rng& rng, std::span<double> out) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& x : out) x = normal(rng);
}

} // namespace specreg
