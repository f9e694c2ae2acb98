#include "digitnet/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

namespace digitnet {
namespace {

thread_local bool t_inside_pool = false;

struct Job {
  std::function<void(std::size_t)> fn;
  std::size_t count = 0;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex m;
  std::condition_variable finished_cv;
  bool finished = false;

  void drain() {
    for (;;) {
      const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      fn(i);
      if (done.fetch_add(1, std::memory_order_acq_rel) + 1 == count) {
        std::lock_guard<std::mutex> lock(m);
        finished = true;
        finished_cv.notify_all();
      }
    }
  }
};

class Pool {
public:
  static Pool& instance() {
    static Pool pool;
    return pool;
  }

  unsigned size() const { return static_cast<unsigned>(workers_.size()) + 1; }

  void run(std::size_t count, const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    if (count == 1 || workers_.empty() || t_inside_pool) {
      for (std::size_t i = 0; i < count; ++i) fn(i);
      return;
    }
    auto job = std::make_shared<Job>();
    job->fn = fn;
    job->count = count;
    {
      std::lock_guard<std::mutex> lock(mutex_);
      current_ = job;
      ++generation_;
    }
    cv_.notify_all();
    job->drain();
    std::unique_lock<std::mutex> lock(job->m);
    job->finished_cv.wait(lock, [&] { return job->finished; });
  }

private:
  Pool() {
    unsigned n = 0;
    if (const char* env = std::getenv("DIGITNET_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v > 0) n = static_cast<unsigned>(v);
    }
    if (n == 0) {
      n = std::thread::hardware_concurrency();
      if (n == 0) n = 1;
    }
    for (unsigned i = 1; i < n; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
      ++generation_;
    }
    cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  void worker_loop() {
    t_inside_pool = true;
    std::uint64_t seen = 0;
    for (;;) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
        seen = generation_;
        if (stop_) return;
        job = current_;
      }
      if (job) job->drain();
    }
  }

  std::vector<std::thread> workers_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::shared_ptr<Job> current_;
  std::uint64_t generation_ = 0;
  bool stop_ = false;
};

}  // namespace

unsigned worker_count() { return Pool::instance().size(); }

void parallel_chunks(std::size_t chunks, const std::function<void(std::size_t)>& fn) {
  Pool::instance().run(chunks, fn);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  std::size_t parts = worker_count();
  if (parts > n) parts = n;
  if (parts <= 1) {
    body(0, n);
    return;
  }
  const std::size_t step = (n + parts - 1) / parts;
  parallel_chunks(parts, [&](std::size_t c) {
    const std::size_t begin = c * step;
    const std::size_t end = begin + step < n ? begin + step : n;
    if (begin < end) body(begin, end);
  });
}

}  // namespace digitnet
