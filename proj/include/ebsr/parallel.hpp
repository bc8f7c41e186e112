#ifndef EBSR_PARALLEL_HPP
#define EBSR_PARALLEL_HPP

#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace ebsr {

// Worker pool shared by the conv kernels. Work is split into one contiguous
// index range per worker, so every output element is written by exactly one
// thread and float reductions keep a fixed per-chunk order: results are
// bitwise reproducible for a fixed thread count. EBSR_THREADS overrides the
// default (hardware concurrency).
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool(default_threads());
        return pool;
    }

    static int default_threads() {
        if (const char* env = std::getenv("EBSR_THREADS")) {
            const int n = std::atoi(env);
            if (n >= 1) return n;
        }
        const unsigned hc = std::thread::hardware_concurrency();
        return hc == 0 ? 1 : static_cast<int>(hc);
    }

    int size() const { return static_cast<int>(workers_.size()) + 1; }

    // fn(begin, end) over [0, total) in size() contiguous chunks. The calling
    // thread runs chunk 0.
    void for_ranges(std::int64_t total, const std::function<void(std::int64_t, std::int64_t)>& fn) {
        const int nthreads = size();
        if (total <= 0) return;
        if (nthreads == 1 || total == 1) {
            fn(0, total);
            return;
        }
        const std::int64_t chunk = (total + nthreads - 1) / nthreads;
        {
            std::unique_lock<std::mutex> lock(mutex_);
            job_ = &fn;
            job_total_ = total;
            job_chunk_ = chunk;
            pending_ = 0;
            for (std::size_t i = 0; i < workers_.size(); ++i) {
                const std::int64_t begin = static_cast<std::int64_t>(i + 1) * chunk;
                if (begin < total) ++pending_;
            }
            ++generation_;
        }
        cv_start_.notify_all();
        fn(0, std::min<std::int64_t>(chunk, total));
        std::unique_lock<std::mutex> lock(mutex_);
        cv_done_.wait(lock, [&] { return pending_ == 0; });
        job_ = nullptr;
    }

    ~ThreadPool() {
        {
            std::unique_lock<std::mutex> lock(mutex_);
            stop_ = true;
            ++generation_;
        }
        cv_start_.notify_all();
        for (auto& t : workers_) t.join();
    }

private:
    explicit ThreadPool(int nthreads) {
        for (int i = 1; i < nthreads; ++i) {
            workers_.emplace_back([this, i] { worker_loop(i); });
        }
    }

    void worker_loop(int index) {
        std::uint64_t seen = 0;
        for (;;) {
            const std::function<void(std::int64_t, std::int64_t)>* job = nullptr;
            std::int64_t begin = 0, end = 0;
            {
                std::unique_lock<std::mutex> lock(mutex_);
                cv_start_.wait(lock, [&] { return generation_ != seen; });
                seen = generation_;
                if (stop_) return;
                begin = static_cast<std::int64_t>(index) * job_chunk_;
                end = std::min<std::int64_t>(begin + job_chunk_, job_total_);
                if (begin < job_total_) job = job_;
            }
            if (job) {
                (*job)(begin, end);
                std::unique_lock<std::mutex> lock(mutex_);
                if (--pending_ == 0) cv_done_.notify_one();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mutex_;
    std::condition_variable cv_start_;
    std::condition_variable cv_done_;
    const std::function<void(std::int64_t, std::int64_t)>* job_ = nullptr;
    std::int64_t job_total_ = 0;
    std::int64_t job_chunk_ = 0;
    int pending_ = 0;
    std::uint64_t generation_ = 0;
    bool stop_ = false;
};

inline void parallel_for(std::int64_t total,
                         const std::function<void(std::int64_t, std::int64_t)>& fn) {
    ThreadPool::instance().for_ranges(total, fn);
}

}  // namespace ebsr

#endif  // EBSR_PARALLEL_HPP
