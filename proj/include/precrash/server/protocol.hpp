#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace precrash::server {

inline constexpr std::uint16_t kDefaultPort = 7077;
inline constexpr std::size_t kMaxFrameBytes = 1u << 20;
inline constexpr std::size_t kFcdQueueCapacity = 256;
inline constexpr std::string_view kProtocolVersion = "1.0";
inline constexpr std::string_view kWebSocketPath = "/ws";

enum class ErrorCode {
  BadJson,
  UnknownType,
  NotLoaded,
  NotController,
  BadMode,
  VersionMismatch,
  OversizeFrame,
};

std::string_view to_string(ErrorCode code);

/// Big-endian u32 length followed by the body bytes.
std::string encode_frame(std::string_view body);

/// Incremental frame splitter for a TCP byte stream.
class FrameDecoder {
 public:
  enum class Status { NeedMore, Frame, Oversize };

  void feed(std::string_view bytes) { buffer_.append(bytes); }
  /// Extracts the next complete body into `body`. Oversize is sticky: the
  /// stream cannot be resynchronised after a bad length.
  Status next(std::string& body);
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::string buffer_;
  std::size_t offset_ = 0;
  bool broken_ = false;
};

/// Serialized envelope {"id", "type", "payload"}.
std::string envelope(std::int64_t id, std::string_view type, const nlohmann::ordered_json& payload);
std::string error_message(std::int64_t id, ErrorCode code, std::string_view detail);

/// Every fcd_frame body starts with this prefix, so the drop counter can be
/// rewritten without re-serializing the frame.
inline constexpr std::string_view kFcdPrefix = R"({"id":0,"type":"fcd_frame","payload":{"dropped":0,)";

/// Outgoing queue of one session, filled by the simulation thread and
/// drained by the network thread. Replies and events are never dropped;
/// fcd frames beyond the capacity evict the oldest queued frame and the
/// eviction count is reported in the next delivered frame.
class Outbox {
 public:
  explicit Outbox(std::size_t fcd_capacity = kFcdQueueCapacity) : fcd_capacity_(fcd_capacity) {}

  /// Both return true when the consumer is idle and must be woken.
  bool push(std::string body);
  bool push_fcd(std::string body);

  /// Next body to send; nullopt marks the consumer idle.
  std::optional<std::string> pop();

  /// Stop after the queued bodies are delivered; later pushes are discarded.
  bool close_after_drain();
  bool closing() const;
  std::uint64_t dropped_total() const;
  std::size_t size() const;

 private:
  struct Item {
    std::string body;
    bool fcd = false;
  };
  bool wake_locked();

  mutable std::mutex mutex_;
  std::deque<Item> items_;
  std::size_t fcd_capacity_;
  std::size_t fcd_queued_ = 0;
  std::uint64_t pending_dropped_ = 0;
  std::uint64_t dropped_total_ = 0;
  bool idle_ = true;
  bool closing_ = false;
};

}  // namespace precrash::server
