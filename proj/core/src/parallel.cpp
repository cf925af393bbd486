#include "dd/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace dd {

unsigned max_threads() {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("DD_THREADS")) {
        long v = std::strtol(env, nullptr, 10);
        if (v >= 1 && static_cast<unsigned>(v) < hw) hw = static_cast<unsigned>(v);
    }
    return hw;
}

namespace {

// Persistent pool: max_threads()-1 workers plus the calling thread.
// Parts are claimed through a generation-tagged ticket so a worker that
// wakes late can never claim work from a newer job.
class Pool {
public:
    static Pool& instance() {
        static Pool pool(max_threads());
        return pool;
    }

    void run(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
        if (n == 0) return;
        unsigned parts = width_;
        if (static_cast<std::size_t>(parts) > n) parts = static_cast<unsigned>(n);
        if (parts <= 1) {
            fn(0, n);
            return;
        }
        {
            std::lock_guard<std::mutex> lock(mu_);
            job_ = &fn;
            job_n_ = n;
            job_parts_ = parts;
            ++generation_;
            ticket_.store((generation_ << 32) | 1u);
            pending_ = parts - 1;
        }
        cv_.notify_all();

        run_part(0, n, parts, fn);

        std::unique_lock<std::mutex> lock(mu_);
        done_cv_.wait(lock, [this] { return pending_ == 0; });
        job_ = nullptr;
    }

private:
    explicit Pool(unsigned width) : width_(width) {
        for (unsigned i = 1; i < width_; ++i)
            workers_.emplace_back([this] { worker_loop(); });
    }

    ~Pool() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

    static void run_part(unsigned part, std::size_t n, unsigned parts,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
        std::size_t chunk = (n + parts - 1) / parts;
        std::size_t begin = static_cast<std::size_t>(part) * chunk;
        std::size_t end = begin + chunk < n ? begin + chunk : n;
        if (begin < end) fn(begin, end);
    }

    void worker_loop() {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::size_t, std::size_t)>* fn;
            std::size_t n;
            unsigned parts;
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
                fn = job_;
                n = job_n_;
                parts = job_parts_;
            }
            std::uint64_t gen_tag = seen << 32;
            for (;;) {
                std::uint64_t cur = ticket_.load();
                if ((cur & 0xFFFFFFFF00000000ULL) != gen_tag) break;
                std::uint32_t part = static_cast<std::uint32_t>(cur & 0xFFFFFFFFULL);
                if (part >= parts) break;
                if (!ticket_.compare_exchange_weak(cur, cur + 1)) continue;
                run_part(part, n, parts, *fn);
                std::lock_guard<std::mutex> guard(mu_);
                if (--pending_ == 0) done_cv_.notify_one();
            }
        }
    }

    unsigned width_;
    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_, done_cv_;
    const std::function<void(std::size_t, std::size_t)>* job_ = nullptr;
    std::size_t job_n_ = 0;
    unsigned job_parts_ = 0;
    std::atomic<std::uint64_t> ticket_{0};
    unsigned pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

}  // namespace

void parallel_ranges(std::size_t n,
                     const std::function<void(std::size_t, std::size_t)>& fn) {
    Pool::instance().run(n, fn);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    parallel_ranges(n, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
    });
}

}  // namespace dd
