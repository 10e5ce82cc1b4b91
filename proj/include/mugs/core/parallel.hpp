#pragma once

// Deterministic parallelism helpers.
//
// Work is split into fixed-size chunks owned by exactly one worker, and
// reductions combine per-chunk partials in chunk order, so results are
// bit-identical for any worker count (MUGS_THREADS).

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mugs {

inline int thread_count() {
    static const int n = [] {
        if (const char* env = std::getenv("MUGS_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return std::min(v, 256);
        }
        unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }();
    return n;
}

namespace detail {

// Tiny persistent pool: run(fn, k) invokes fn(worker) on k workers and waits.
class ThreadPool {
  public:
    static ThreadPool& instance() {
        static ThreadPool pool(thread_count() - 1);
        return pool;
    }

    // Calls fn(0..workers-1) using the calling thread plus pool threads.
    void run(const std::function<void(int)>& fn, int workers) {
        if (workers <= 1) {
            fn(0);
            return;
        }
        std::unique_lock<std::mutex> lk(m_);
        job_ = &fn;
        job_workers_ = workers;
        pending_ = workers - 1;
        ++epoch_;
        cv_start_.notify_all();
        lk.unlock();

        fn(0);

        lk.lock();
        cv_done_.wait(lk, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

    int size() const { return static_cast<int>(threads_.size()) + 1; }

  private:
    explicit ThreadPool(int extra) {
        for (int i = 0; i < extra; ++i)
            threads_.emplace_back([this, i] { worker_loop(i + 1); });
    }

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lk(m_);
            stop_ = true;
            cv_start_.notify_all();
        }
        for (auto& t : threads_) t.join();
    }

    void worker_loop(int idx) {
        uint64_t seen = 0;
        for (;;) {
            std::unique_lock<std::mutex> lk(m_);
            cv_start_.wait(lk, [&] { return stop_ || epoch_ != seen; });
            if (stop_) return;
            seen = epoch_;
            const std::function<void(int)>* job = job_;
            int workers = job_workers_;
            lk.unlock();
            if (idx < workers && job) (*job)(idx);
            lk.lock();
            if (idx < workers && --pending_ == 0) cv_done_.notify_all();
        }
    }

    std::vector<std::thread> threads_;
    std::mutex m_;
    std::condition_variable cv_start_, cv_done_;
    const std::function<void(int)>* job_ = nullptr;
    int job_workers_ = 0;
    int pending_ = 0;
    uint64_t epoch_ = 0;
    bool stop_ = false;
};

}  // namespace detail

// Runs fn(i) for i in [0, n). Each index is executed exactly once; indices are
// assigned to workers in contiguous blocks so writes to per-index slots race-free.
template <typename F>
void parallel_for(int64_t n, F&& fn, int64_t grain = 256) {
    if (n <= 0) return;
    int workers = thread_count();
    if (workers == 1 || n <= grain) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    workers = static_cast<int>(std::min<int64_t>(workers, (n + grain - 1) / grain));
    int64_t block = (n + workers - 1) / workers;
    auto body = [&](int w) {
        int64_t lo = w * block;
        int64_t hi = std::min<int64_t>(n, lo + block);
        for (int64_t i = lo; i < hi; ++i) fn(i);
    };
    std::function<void(int)> job = body;
    detail::ThreadPool::instance().run(job, workers);
}

// Deterministic reduction: partials are computed over fixed chunks of
// `chunk` elements and combined in chunk order regardless of worker count.
// fn(lo, hi) returns the partial for [lo, hi); combine(acc, partial) folds it.
template <typename T, typename F, typename C>
T parallel_reduce(int64_t n, T init, F&& fn, C&& combine, int64_t chunk = 4096) {
    if (n <= 0) return init;
    int64_t chunks = (n + chunk - 1) / chunk;
    std::vector<T> partials(static_cast<size_t>(chunks));
    parallel_for(
        chunks,
        [&](int64_t c) {
            int64_t lo = c * chunk;
            int64_t hi = std::min(n, lo + chunk);
            partials[static_cast<size_t>(c)] = fn(lo, hi);
        },
        1);
    T acc = init;
    for (auto& p : partials) acc = combine(acc, p);
    return acc;
}

}  // namespace mugs
