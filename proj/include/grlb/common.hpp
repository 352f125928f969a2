#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace grlb {

// Exit codes shared by the CLI and the tools built on top of it.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitDataError = 2,
    kExitGateFailure = 3,
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks, each
// owned by exactly one thread, so floating-point results are identical for
// any thread count. Thread count comes from GRLB_THREADS (default: hardware).
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

int worker_threads();

// FNV-1a, used for id hashing (dataset splits, per-sample seeds).
inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace grlb
