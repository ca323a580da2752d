#include "icnt/threading.hpp"

#include <condition_variable>
#include <exception>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace icnt {

namespace {

class Pool {
 public:
  explicit Pool(int n) : size_(n) {
    for (int i = 0; i + 1 < n; ++i)
      workers_.emplace_back([this] { worker_loop(); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
    }
    task_cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  int size() const { return size_; }

  void run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    {
      std::lock_guard<std::mutex> lk(m_);
      fn_ = &fn;
      total_ = n;
      chunks_ = size_;
      next_chunk_ = 0;
      remaining_ = chunks_;
      error_ = nullptr;
      ++generation_;
    }
    task_cv_.notify_all();

    drain();  // caller participates instead of idling

    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [this] { return remaining_ == 0; });
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void worker_loop() {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(m_);
        task_cv_.wait(lk, [&] { return stop_ || generation_ != seen; });
        if (stop_) return;
        seen = generation_;
      }
      drain();
    }
  }

  // Pops chunks of the current task until none remain. A chunk in flight pins
  // the task: run() cannot publish a new one until remaining_ reaches zero.
  void drain() {
    for (;;) {
      int c;
      {
        std::lock_guard<std::mutex> lk(m_);
        if (next_chunk_ >= chunks_) return;
        c = next_chunk_++;
      }
      int64_t begin = total_ * c / chunks_;
      int64_t end = total_ * (c + 1) / chunks_;
      if (begin < end) {
        try {
          (*fn_)(begin, end);
        } catch (...) {
          std::lock_guard<std::mutex> lk(m_);
          if (!error_) error_ = std::current_exception();
        }
      }
      {
        std::lock_guard<std::mutex> lk(m_);
        if (--remaining_ == 0) done_cv_.notify_all();
      }
    }
  }

  const int size_;
  std::vector<std::thread> workers_;
  std::mutex m_;
  std::condition_variable task_cv_;
  std::condition_variable done_cv_;
  uint64_t generation_ = 0;
  bool stop_ = false;
  const std::function<void(int64_t, int64_t)>* fn_ = nullptr;
  int64_t total_ = 0;
  int chunks_ = 0;
  int next_chunk_ = 0;
  int remaining_ = 0;
  std::exception_ptr error_;
};

std::mutex g_mutex;
int g_configured = 0;  // 0 = not set, use default on first use
std::unique_ptr<Pool> g_pool;

int default_threads() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  return static_cast<int>(hw < 8 ? hw : 8);
}

Pool& pool() {
  std::lock_guard<std::mutex> lk(g_mutex);
  if (!g_pool) {
    int n = g_configured > 0 ? g_configured : default_threads();
    g_pool = std::make_unique<Pool>(n);
  }
  return *g_pool;
}

}  // namespace

void set_worker_threads(int n) {
  if (n < 1) throw std::invalid_argument("worker thread count must be >= 1, got " + std::to_string(n));
  std::lock_guard<std::mutex> lk(g_mutex);
  if (g_pool) throw std::logic_error("set_worker_threads called after the worker pool was created");
  g_configured = n;
}

int worker_threads() {
  std::lock_guard<std::mutex> lk(g_mutex);
  if (g_pool) return g_pool->size();
  return g_configured > 0 ? g_configured : default_threads();
}

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  if (n < 2 || worker_threads() == 1) {
    fn(0, n);
    return;
  }
  pool().run(n, fn);
}

namespace detail {
void reset_thread_pool_for_tests() {
  std::lock_guard<std::mutex> lk(g_mutex);
  g_pool.reset();
  g_configured = 0;
}
}  // namespace detail

}  // namespace icnt
