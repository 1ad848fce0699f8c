#pragma once

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>

#include "precrash/data_log/fcd.hpp"

namespace precrash::datalog {

/// JSONL sink fed through a queue and drained by its own thread, so the
/// producer only pays for the hand-off. Lines are written in submission order.
class LogWriter {
 public:
  /// Opens (truncates) `path`; throws LogError(Io) when it cannot.
  explicit LogWriter(const std::filesystem::path& path);
  ~LogWriter();

  LogWriter(const LogWriter&) = delete;
  LogWriter& operator=(const LogWriter&) = delete;

  void header(const LogHeader& h) { line(to_jsonl(h)); }
  void frame(const FcdFrame& f) { line(to_jsonl(f)); }
  void event(const LogEvent& e) { line(to_jsonl(e)); }
  void line(std::string text);

  /// Asks the writer thread to flush once the queued lines are written.
  void flush();

  /// Drains the queue and closes the file. Throws LogError(Io) if any write
  /// failed; a truncation marker is attempted first.
  void close();

  bool failed() const;

 private:
  void run();

  std::ofstream out_;
  mutable std::mutex mutex_;
  std::condition_variable wake_;
  std::deque<std::string> queue_;  // empty string = flush marker
  bool closing_ = false;
  bool closed_ = false;
  bool failed_ = false;
  std::thread thread_;
};

}  // namespace precrash::datalog
