// SPDX-License-Identifier: Apache-2.0
#include "fedvar/thread_pool.hpp"

#include <algorithm>

namespace fedvar {

ThreadPool::ThreadPool(std::size_t workers) {
  threads_.reserve(workers);
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  work_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

std::size_t ThreadPool::default_workers(std::size_t tasks) {
  const std::size_t hw = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  const std::size_t w = std::min(tasks, hw);
  return w <= 1 ? 0 : w;
}

void ThreadPool::worker_loop() {
  std::size_t seen = 0;
  std::unique_lock lock(mu_);
  for (;;) {
    work_cv_.wait(lock, [&] { return stop_ || (generation_ != seen && next_ < n_); });
    if (stop_) return;
    seen = generation_;
    while (next_ < n_) {
      const std::size_t i = next_++;
      lock.unlock();
      try {
        (*job_)(i);
      } catch (...) {
        lock.lock();
        errors_[i] = std::current_exception();
        lock.unlock();
      }
      lock.lock();
      if (++finished_ == n_) done_cv_.notify_all();
    }
  }
}

void ThreadPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (threads_.empty()) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::unique_lock lock(mu_);
  job_ = &fn;
  n_ = n;
  next_ = 0;
  finished_ = 0;
  errors_.assign(n, nullptr);
  ++generation_;
  work_cv_.notify_all();
  done_cv_.wait(lock, [&] { return finished_ == n_; });
  job_ = nullptr;
  n_ = 0;
  for (auto& e : errors_) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace fedvar
