#pragma once

// Deterministic random source. All draws go through explicit integer/bit
// manipulation on top of std::mt19937_64 so sequences are reproducible and
// the full state round-trips through text serialization.

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvq {

class Rng {
  public:
    explicit Rng(uint64_t seed = 1) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) {
        if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
        return static_cast<int>(eng_() % static_cast<uint64_t>(n));
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(eng_() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string serialize() const {
        std::ostringstream oss;
        oss << eng_;
        return oss.str();
    }

    void deserialize(const std::string& state) {
        std::istringstream iss(state);
        iss >> eng_;
        if (iss.fail()) throw std::runtime_error("rng: failed to restore state");
    }

  private:
    std::mt19937_64 eng_;
};

}  // namespace cvq
