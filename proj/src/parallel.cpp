#include "grlb/common.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace grlb {

namespace {

int read_thread_cap() {
    if (const char* env = std::getenv("GRLB_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

struct Work {
    const std::function<void(int64_t, int64_t)>* fn;
    int64_t n;
    int64_t chunk;
    std::atomic<int64_t> next{0};
    std::atomic<int64_t> remaining;

    void drain() {
        for (;;) {
            int64_t begin = next.fetch_add(chunk);
            if (begin >= n) return;
            (*fn)(begin, std::min(n, begin + chunk));
            remaining.fetch_sub(std::min(n, begin + chunk) - begin);
        }
    }

    bool done() const { return remaining.load() == 0; }
};

// Minimal persistent pool. Each (begin,end) chunk is run by exactly one
// worker, which keeps float accumulation order fixed for any thread count.
class Pool {
public:
    Pool() : threads_(std::max(0, read_thread_cap() - 1)) {
        for (auto& t : threads_) t = std::thread([this] { worker(); });
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    int width() const { return static_cast<int>(threads_.size()) + 1; }

    void run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
        auto work = std::make_shared<Work>();
        work->fn = &fn;
        work->n = n;
        work->chunk = std::max<int64_t>(1, (n + width() - 1) / width());
        work->remaining.store(n);
        {
            std::lock_guard<std::mutex> lk(mu_);
            current_ = work;
        }
        cv_.notify_all();
        work->drain();
        // Chunks may still be in flight on other workers.
        while (!work->done()) std::this_thread::yield();
        std::lock_guard<std::mutex> lk(mu_);
        if (current_ == work) current_.reset();
    }

private:
    void worker() {
        for (;;) {
            std::shared_ptr<Work> work;
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || current_ != nullptr; });
                if (stop_) return;
                work = current_;
            }
            if (work) {
                work->drain();
                std::unique_lock<std::mutex> lk(mu_);
                if (current_ == work) current_.reset();
            }
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::shared_ptr<Work> current_;
    bool stop_ = false;
};

Pool& pool() {
    static Pool p;
    return p;
}

}  // namespace

int worker_threads() { return pool().width(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    if (n == 1 || pool().width() == 1) {
        fn(0, n);
        return;
    }
    pool().run(n, fn);
}

}  // namespace grlb
