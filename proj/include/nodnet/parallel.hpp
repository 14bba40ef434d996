#pragma once

// Persistent worker pool for data-parallel kernels. Work is split into
// statically numbered chunks; chunk -> data mapping never depends on which
// thread picks the chunk up, so results are bit-identical for any pool size.

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace nodnet {

inline std::atomic<int>& thread_count_slot() {
  static std::atomic<int> n{2};
  return n;
}

inline int num_threads() { return thread_count_slot().load(std::memory_order_relaxed); }

inline void set_num_threads(int n) {
  if (n < 1) n = 1;
  if (n > 64) n = 64;
  thread_count_slot().store(n, std::memory_order_relaxed);
}

namespace detail {

class WorkerPool {
 public:
  static WorkerPool& instance() {
    static WorkerPool pool;
    return pool;
  }

  // Runs fn(chunk) for chunk in [0, nchunks) across up to `threads` threads.
  // The calling thread participates; fn must not itself call run().
  void run(std::size_t nchunks, int threads, const std::function<void(std::size_t)>& fn) {
    if (nchunks == 0) return;
    if (threads < 1) threads = 1;
    if (nchunks == 1 || threads == 1) {
      for (std::size_t c = 0; c < nchunks; ++c) fn(c);
      return;
    }
    ensure_workers(static_cast<std::size_t>(threads) - 1);
    {
      std::unique_lock<std::mutex> lock(mu_);
      job_ = &fn;
      next_chunk_.store(0, std::memory_order_relaxed);
      total_chunks_ = nchunks;
      pending_ = std::min<std::size_t>(workers_.size(), threads - 1);
      active_workers_ = pending_;
      ++generation_;
      cv_start_.notify_all();
    }
    std::size_t c;
    while ((c = next_chunk_.fetch_add(1, std::memory_order_relaxed)) < nchunks) fn(c);
    std::unique_lock<std::mutex> lock(mu_);
    cv_done_.wait(lock, [this] { return pending_ == 0; });
    job_ = nullptr;
  }

  ~WorkerPool() {
    {
      std::unique_lock<std::mutex> lock(mu_);
      stop_ = true;
      cv_start_.notify_all();
    }
    for (auto& t : workers_) t.join();
  }

 private:
  WorkerPool() = default;

  void ensure_workers(std::size_t n) {
    std::unique_lock<std::mutex> lock(mu_);
    while (workers_.size() < n) {
      std::size_t id = workers_.size();
      workers_.emplace_back([this, id] { worker_loop(id); });
    }
  }

  void worker_loop(std::size_t id) {
    std::uint64_t seen = 0;
    for (;;) {
      const std::function<void(std::size_t)>* job = nullptr;
      {
        std::unique_lock<std::mutex> lock(mu_);
        cv_start_.wait(lock, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
        if (id >= active_workers_) continue;  // not enlisted for this job
        job = job_;
      }
      std::size_t c;
      while ((c = next_chunk_.fetch_add(1, std::memory_order_relaxed)) < total_chunks_)
        (*job)(c);
      {
        std::unique_lock<std::mutex> lock(mu_);
        if (--pending_ == 0) cv_done_.notify_all();
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_start_, cv_done_;
  std::vector<std::thread> workers_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::atomic<std::size_t> next_chunk_{0};
  std::size_t total_chunks_ = 0;
  std::size_t pending_ = 0;
  std::size_t active_workers_ = 0;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace detail

// Static partition of [0, n) into `threads` contiguous chunks, executed in
// parallel. Each index is processed exactly once by exactly one thread.
template <typename Fn>
void parallel_for_chunks(std::size_t nchunks, Fn&& fn) {
  detail::WorkerPool::instance().run(nchunks, num_threads(),
                                     std::function<void(std::size_t)>(std::forward<Fn>(fn)));
}

}  // namespace nodnet
