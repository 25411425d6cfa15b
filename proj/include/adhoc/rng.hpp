#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adhoc {

// Deterministic seeded generator (splitmix64 core). All experiment
// randomness flows through named substreams of one run seed, so a given
// (inputs, seed) pair reproduces bit-identical draws on any platform;
// std:: distributions are avoided on purpose, their outputs are not
// portable across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    // Derives an independent stream from the *seed* (not the current
    // state), so substream identity does not depend on draw order.
    [[nodiscard]] Rng substream(std::string_view name) const {
        std::uint64_t h = 14695981039346656037ull; // FNV-1a 64
        for (char c : name) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
        return Rng(mix(seed_ ^ h));
    }

    [[nodiscard]] Rng substream(std::string_view name, std::uint64_t index) const {
        return substream(name).substream_index(index);
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("next_below: n must be positive");
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // First k entries of a seeded partial Fisher-Yates shuffle of 0..n-1,
    // in selection order.
    [[nodiscard]] std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        if (k > n) throw std::invalid_argument("sample_without_replacement: k exceeds population");
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<std::size_t> picked;
        picked.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(next_below(n - i));
            std::swap(pool[i], pool[j]);
            picked.push_back(pool[i]);
        }
        return picked;
    }

    // Uniform draw from the probability simplex: exponential spacings,
    // normalized.
    [[nodiscard]] std::vector<double> next_simplex(std::size_t dim) {
        if (dim == 0) throw std::invalid_argument("next_simplex: dim must be positive");
        std::vector<double> v(dim);
        double total = 0.0;
        for (double& x : v) {
            double u;
            do {
                u = next_double();
            } while (u <= 0.0);
            x = -std::log(u);
            total += x;
        }
        for (double& x : v) x /= total;
        return v;
    }

    [[nodiscard]] std::uint64_t seed() const { return seed_; }

private:
    [[nodiscard]] Rng substream_index(std::uint64_t index) const {
        return Rng(mix(seed_ ^ mix(index + 0x632be59bd9b4e019ull)));
    }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t state_;
};

} // namespace adhoc
