#pragma once

#include <random>
#include <sstream>
#include <string>

#include "ssdiff/array.hpp"

namespace ssdiff {

/// Seeded random source. All stochastic operations take one of these
/// explicitly so parallel and resumed runs stay reproducible.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : gen_(seed) {}

    double normal() { return normal_(gen_); }
    double uniform() { return uniform_(gen_); }
    /// Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        return std::uniform_int_distribution<int64_t>(lo, hi)(gen_);
    }

    Array normal_array(std::vector<int64_t> shape, double stddev = 1.0) {
        Array out(std::move(shape));
        for (int64_t i = 0; i < out.size(); ++i) out[i] = stddev * normal();
        return out;
    }
    Array uniform_array(std::vector<int64_t> shape, double lo = 0.0, double hi = 1.0) {
        Array out(std::move(shape));
        for (int64_t i = 0; i < out.size(); ++i) out[i] = lo + (hi - lo) * uniform();
        return out;
    }

    std::mt19937_64& engine() { return gen_; }

    /// Engine state serialization for checkpoint resume.
    std::string state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }
    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
    }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace ssdiff
