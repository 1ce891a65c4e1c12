#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace unisig {

// ----------------------------- errors -----------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dimension / extent mismatches (incl. unsupported FFT lengths).
struct ShapeError : Error {
    using Error::Error;
};

// Invalid configuration values (filter specs, mask ratios, bit widths, CLI flags).
struct ConfigError : Error {
    using Error::Error;
};

// Invalid runtime values (empty channel set, empty mask, bad lead label).
struct ValueError : Error {
    using Error::Error;
};

// backward() on a tensor that is not on any recorded graph.
struct GraphError : Error {
    using Error::Error;
};

struct CalibrationError : Error {
    using Error::Error;
};

struct MetricError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Non-finite training loss.
struct DivergenceError : Error {
    using Error::Error;
};

// ----------------------------- modalities -----------------------------

enum class Modality : int { EEG = 0, ECG = 1, PPG = 2 };

inline const char* modality_name(Modality m) {
    switch (m) {
        case Modality::EEG: return "EEG";
        case Modality::ECG: return "ECG";
        case Modality::PPG: return "PPG";
    }
    return "?";
}

inline Modality modality_from_name(const std::string& s) {
    if (s == "EEG" || s == "eeg") return Modality::EEG;
    if (s == "ECG" || s == "ecg") return Modality::ECG;
    if (s == "PPG" || s == "ppg") return Modality::PPG;
    throw ConfigError("unknown modality: " + s);
}

// ----------------------------- rng -----------------------------

// mt19937_64 with hand-rolled transforms so streams are reproducible
// independent of libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0,1)
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    int64_t below(int64_t n) {
        return static_cast<int64_t>(uniform() * static_cast<double>(n)) % n;
    }

    // Box-Muller with cached spare.
    double gauss() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2);
    }

    template <typename It>
    void shuffle(It first, It last) {
        auto n = last - first;
        for (auto i = n - 1; i > 0; --i) {
            auto j = below(i + 1);
            std::swap(first[i], first[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a, used to derive per-purpose seed streams from one master seed.
inline uint64_t hash_str(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t derive_seed(uint64_t seed, const std::string& tag) {
    uint64_t h = hash_str(tag);
    return seed * 6364136223846793005ull + 1442695040888963407ull + h;
}

}  // namespace unisig
