#include "precrash/data_log/writer.hpp"

namespace precrash::datalog {

LogWriter::LogWriter(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw LogError(LogError::Kind::Io, "cannot open " + path.string() + " for writing");
  thread_ = std::thread([this] { run(); });
}

LogWriter::~LogWriter() {
  try {
    close();
  } catch (const LogError&) {
  }
}

void LogWriter::line(std::string text) {
  if (text.empty()) return;
  {
    std::lock_guard lock(mutex_);
    if (closing_) return;
    queue_.push_back(std::move(text));
  }
  wake_.notify_one();
}

void LogWriter::flush() {
  {
    std::lock_guard lock(mutex_);
    if (closing_) return;
    queue_.emplace_back();
  }
  wake_.notify_one();
}

bool LogWriter::failed() const {
  std::lock_guard lock(mutex_);
  return failed_;
}

void LogWriter::run() {
  std::deque<std::string> batch;
  for (;;) {
    bool done = false;
    {
      std::unique_lock lock(mutex_);
      wake_.wait(lock, [&] { return closing_ || !queue_.empty(); });
      batch.swap(queue_);
      done = closing_ && batch.empty();
    }
    if (done) break;
    bool ok = true;
    for (const std::string& text : batch) {
      if (text.empty()) {
        out_.flush();
      } else {
        out_ << text << '\n';
      }
      ok = ok && static_cast<bool>(out_);
    }
    batch.clear();
    if (!ok) {
      std::lock_guard lock(mutex_);
      failed_ = true;
    }
  }
  out_.flush();
  if (!out_) {
    std::lock_guard lock(mutex_);
    failed_ = true;
  }
}

void LogWriter::close() {
  {
    std::lock_guard lock(mutex_);
    if (closed_) return;
    closing_ = true;
    closed_ = true;
  }
  wake_.notify_one();
  if (thread_.joinable()) thread_.join();
  if (failed_) {
    out_.clear();
    out_ << "{\"rec\":\"trunc\"}\n";
    out_.close();
    throw LogError(LogError::Kind::Io, "log write failed; file truncated");
  }
  out_.close();
}

}  // namespace precrash::datalog
